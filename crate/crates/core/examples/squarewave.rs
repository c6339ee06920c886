//! A local model with perfect correlations at two angles: without a spin
//! bound the two-angle data alone certify nothing.

use so2bell::bci::{chained_lhs, ChainedSetting};
use so2bell::lhv::build_squarewave_lhv;
use std::f64::consts::FRAC_PI_2;

fn main() {
    let model = build_squarewave_lhv(1, 2).unwrap();
    println!("C(0) = {}, C(pi/2) = {}", model.correlation_at(0.0), model.correlation_at(FRAC_PI_2));
    let corr = |a: f64, b: f64| model.correlation_at(a - b);
    for n in [4, 8, 16, 64] {
        let s = ChainedSetting::new(n, 0.0, model.theta_minus()).unwrap();
        let (a, b) = s.inputs(0.3);
        let lhs = chained_lhs(&corr, &a, &b).unwrap();
        println!("N = {n:>2}: lhs {lhs:.4} <= bound {}", s.bound());
    }
}
