//! Optimizes CHSH on Werner states and shows the local/quantum crossover at p = 1/√2.

use so2bell::bci::optimize_chsh;
use so2bell::quantum::{quantum_box, werner_state};

fn main() {
    println!("{:>6} {:>10}", "p", "max CHSH");
    for p in [0.5, 0.6, 0.7, 1.0 / 2f64.sqrt(), 0.8, 0.9, 1.0] {
        let state = werner_state(p).expect("p in [0, 1]");
        let best = optimize_chsh(&quantum_box(&state));
        println!("{p:>6.4} {:>10.6}", best.value.abs());
    }
}
