//! CHSH value of a correlation function that no quantum system can reach.

use so2bell::bci::{chsh_value, optimize_chsh};
use so2bell::corrfn::scifi;

fn main() {
    let c = scifi();
    let at_fixed_angles = chsh_value(&c, 1.5, 3.9, 0.0, 2.3);
    println!("CHSH at (1.5, 3.9, 0, 2.3) = {at_fixed_angles:.6}");

    let best = optimize_chsh(&c);
    println!("optimized |CHSH| = {:.6} at {:?}", best.value.abs(), best.angles());
    println!("Tsirelson bound   = {:.6}", 2.0 * 2f64.sqrt());
}
