//! Certifies a weak correlation function as local, builds the hidden variable
//! model and checks it by sampling.

use so2bell::corrfn::{Spin, TrigSeries};
use so2bell::lhv::{certify_local, estimate, theorem_2a_check};

fn main() {
    let f = TrigSeries::from_raw(
        Spin::ONE,
        0.1,
        [(1, 1, 0.03, 0.01), (2, -2, 0.02, 0.0), (0, 2, 0.0, -0.015)],
    )
    .unwrap();

    let cert = theorem_2a_check(&f);
    println!("deviation {:.6}, bound {:?}, verdict {:?}", cert.deviation, cert.bound_n, cert.verdict);

    let (_, mixture) = certify_local(&f).expect("function passes the check");
    let exact = mixture.exact_correlation();
    println!("coefficient mismatch: {:.2e}", TrigSeries::linear_combination(&[(1.0, &exact), (-1.0, &f)]).sup_abs());

    for (alpha, beta) in [(0.0, 0.0), (1.0, 2.5), (4.0, 0.3)] {
        let e = estimate(&mixture, alpha, beta, 200_000, 7);
        println!(
            "C({alpha}, {beta}): exact {:+.4}, sampled {:+.4} ± {:.4}",
            f.evaluate(alpha, beta),
            e.correlation,
            e.stderr
        );
    }
}
