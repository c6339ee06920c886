//! Necessary conditions for a rotation-symmetric box to be quantum, checked on
//! a random two-qubit state measured along Bloch directions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use so2bell::quantum::{QubitSodBox, TwoQubitState};
use so2bell::sodbox::{check_locally_unbiased, check_transforms_fundamentally, check_unital_positive, omega_from_box};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in [2, 3] {
        let bx = QubitSodBox::new(TwoQubitState::random_pure(&mut rng), d).unwrap();
        let affine = check_transforms_fundamentally(&bx).unwrap();
        let unbiased = check_locally_unbiased(&bx, 1e-9).unwrap();
        let omega = omega_from_box(&bx).unwrap();
        let pos = check_unital_positive(&omega, 5);
        println!(
            "d = {d}: affine {} ({:.1e}), unbiased {}, unital {:.6}, min ray value {:.3e}",
            affine.passed, affine.worst, unbiased.passed, pos.unital_value, pos.min_value
        );
    }
}
