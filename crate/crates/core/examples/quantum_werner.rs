//! Polarizer correlations on Werner states and the full outcome table.

use so2bell::quantum::{quantum_box, quantum_correlation, werner_state};
use so2bell::{Outcome, So2Box};

fn main() {
    let state = werner_state(0.8).unwrap();
    println!("eigenvalues {:?}", state.eigenvalues());
    for theta in [0.0, 0.3, 0.7853981633974483, 1.2] {
        println!("C(theta={theta:.4}) = {:+.6}", quantum_correlation(&state, theta, 0.0));
    }
    let joint = quantum_box(&state).joint_box();
    for a in Outcome::BOTH {
        for b in Outcome::BOTH {
            println!("P({a:?},{b:?} | 0.4, 1.1) = {:.6}", joint.prob(a, b, 0.4, 1.1));
        }
    }
}
