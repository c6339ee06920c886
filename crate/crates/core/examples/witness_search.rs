//! Finds a violated chained inequality from two relational values of C.

use so2bell::bci::{bci_value, theorem_2b_witness, ChainedSetting, DEFAULT_CAP};
use so2bell::corrfn::{Spin, TrigSeries};
use std::f64::consts::PI;

fn main() {
    let cos = TrigSeries::single(Spin::HALF, 0.0, 1, 1, 1.0, 0.0).unwrap();
    for n in [4, 6, 8, 20] {
        let r = bci_value(&cos, &ChainedSetting::new(n, 0.0, PI).unwrap());
        println!("N = {n:>2}: lhs {:.6} vs bound {}", r.lhs, r.classical_bound);
    }

    // A noisy spin-1 function: the search still finds a chain.
    let noisy = TrigSeries::from_raw(Spin::ONE, 0.0, [(1, 1, 0.9, 0.0), (2, 2, 0.05, 0.0), (1, -1, 0.03, 0.0)]).unwrap();
    let w = theorem_2b_witness(&noisy, 0.0, PI, DEFAULT_CAP).unwrap();
    println!(
        "epsilon {:.4}, delta {:.4}, window {:?}: {:?} at N = {} (lhs {:.4} > {})",
        w.epsilon, w.delta, w.window, w.status, w.report.n_settings, w.report.lhs, w.report.classical_bound
    );
}
