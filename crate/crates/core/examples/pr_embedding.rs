//! Embeds the PR box in a rotation-symmetric box: it transforms fundamentally
//! but fails local unbiasedness.

use so2bell::sodbox::{axis, check_locally_unbiased, check_transforms_fundamentally, chsh_vectors, pr_box_embedding, Behaviour222};

fn main() {
    let pr = Behaviour222::pr_box();
    println!("PR box CHSH = {}", pr.chsh());
    let bx = pr_box_embedding(pr, 3).unwrap();
    let affine = check_transforms_fundamentally(&bx).unwrap();
    let unbiased = check_locally_unbiased(&bx, 1e-9).unwrap();
    // Settings 0 and 1 of the original box sit at +e1 and -e1.
    let (plus, minus) = (axis(3, 0, 1.0), axis(3, 0, -1.0));
    println!("affine residual {:.1e}, locally unbiased {} (worst {:.3})", affine.worst, unbiased.passed, unbiased.worst);
    println!("CHSH at +-e1 = {}", chsh_vectors(&bx, &minus, &plus, &plus, &minus));
}
