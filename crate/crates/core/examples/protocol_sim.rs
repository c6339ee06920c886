//! Two-angle witness protocol on a simulated singlet with finite shots.

use so2bell::bci::{simulate_witness_protocol, ProtocolConfig};
use so2bell::quantum::{quantum_box, werner_state};
use so2bell::Spin;
use std::f64::consts::FRAC_PI_2;

fn main() {
    let singlet = quantum_box(&werner_state(1.0).unwrap());
    for shots in [10_000, 100_000, 1_000_000] {
        let cfg = ProtocolConfig { shots, seed: 1, flip_bob: true, ..ProtocolConfig::default() };
        let r = simulate_witness_protocol(&singlet, Spin::ONE, 0.0, FRAC_PI_2, &cfg).unwrap();
        println!(
            "shots {shots:>8}: C+ {:+.4}±{:.4}  C- {:+.4}±{:.4}  N {:>5}  lhs {:.3}  bound {}  margin {:.3}  violated {}",
            r.plus.value, r.plus.stderr, r.minus.value, r.minus.stderr,
            r.report.n_settings, r.report.lhs, r.report.classical_bound, r.report.margin, r.report.violated
        );
    }
}
