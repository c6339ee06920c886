//! Locality constants γ_N and γ_J, next to the asymptotic lower bound.

use so2bell::lhv::{gamma_j, gamma_n, gamma_n_lower_bound, optimal_xi};
use so2bell::Spin;

fn main() {
    println!("{:>4} {:>12} {:>10} {:>12}", "N", "gamma_N", "xi*", "lower bound");
    for n in [1, 2, 3, 4, 6, 10, 20, 50, 100] {
        let g = gamma_n(n).unwrap();
        let xi = optimal_xi(n).unwrap();
        println!("{n:>4} {g:>12.8} {xi:>10.6} {:>12.8}", gamma_n_lower_bound(n));
    }
    println!();
    for two_j in 1..=6 {
        let spin = Spin::from_two_j(two_j);
        println!("J = {}/2: gamma_J = {:.8}", two_j, gamma_j(spin).unwrap());
    }
}
