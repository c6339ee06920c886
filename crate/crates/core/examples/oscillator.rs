//! Outcome probabilities of a harmonic oscillator are trigonometric series in
//! time whose frequencies are the occupied energy gaps.

use num_complex::Complex64;
use so2bell::quantum::{energy_differences, fit_time_series, oscillator_box, oscillator_series, superposition_effects, OscillatorSpec};

fn main() {
    let levels = vec![0, 2, 5];
    let amps = [Complex64::new(0.6, 0.0), Complex64::new(0.2, 0.5), Complex64::new(-0.3, 0.4)];
    let spec = OscillatorSpec::pure(1.1, levels.clone(), &amps, superposition_effects(3)).unwrap();
    println!("energy gaps (units of omega): {:?}", energy_differences(&levels));

    let exact = oscillator_series(&spec, 0).unwrap();
    println!("exact harmonics: {:?}", exact.active_harmonics(1e-12));

    let period = std::f64::consts::TAU / spec.omega;
    let samples: Vec<_> = (0..200).map(|i| {
        let t = period * i as f64 / 200.0;
        (t, oscillator_box(&spec, t)[0])
    }).collect();
    let fit = fit_time_series(&samples, spec.omega, 8).unwrap();
    println!("fitted harmonics: {:?}, rms residual {:.2e}", fit.series.active_harmonics(1e-9), fit.residual_rms);
}
