//! Explicit local hidden variable models and the γ constants that decide
//! when a correlation function is guaranteed to have one.
//!
//! The window model hides `N` independent angles `φ_j`. Alice answers `+`
//! iff every rotated angle `φ_j + m_j α` lands in `[−ξ, ξ]`; Bob answers `+`
//! with probability `½(1 + (2N)^{−1/2} Σ_j b_j · (cos, sin)(φ_j + n_j β))`
//! where `b_j = (c_j, −s_j)`. Its correlation is `scale · f`.

use crate::angle::wrap_pi;
use crate::corrfn::{Coeffs, Correlator, FreqPair, Spin, TrigSeries};
use crate::error::{Error, Result};
use crate::format::sig12;
use crate::jointbox::{JointBox, Outcome};
use crate::optim::golden_max;
use crate::rng;
use crate::tol;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI, SQRT_2, TAU};
use std::fmt::Write as _;

fn log_window_objective(n: usize, x: f64) -> f64 {
    (n as f64 - 1.0) * (x / PI).ln() + (x.sin() / PI).ln()
}

/// The window half-width maximizing `(ξ/π)^{N−1} sin ξ / π`.
pub fn optimal_xi(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::arg("n", "needs at least one term"));
    }
    // log-concave on (0, π), so golden section finds the unique peak
    let (x, _) = golden_max(|x| log_window_objective(n, x), 1e-15, PI - 1e-15, 1e-12);
    Ok(x)
}

/// `√(2/N) (ξ/π)^{N−1} sin ξ / π`, the prefactor achieved by window `ξ`.
pub fn window_scale(n: usize, xi: f64) -> f64 {
    (2.0 / n as f64).sqrt() * (xi / PI).powi(n as i32 - 1) * xi.sin() / PI
}

/// `γ_N`, the best prefactor over all windows.
pub fn gamma_n(n: usize) -> Result<f64> {
    Ok(window_scale(n, optimal_xi(n)?))
}

/// Closed-form lower bound `√2 e^{−1} N^{−3/2}` on `γ_N`, valid for `N ≥ 4`.
pub fn gamma_n_lower_bound(n: usize) -> f64 {
    SQRT_2 / E * (n as f64).powf(-1.5)
}

/// `γ_J = √2 e^{−1} [4J(2J+1)]^{−3/2}`.
pub fn gamma_j(spin: Spin) -> Result<f64> {
    if spin == Spin::ZERO {
        return Err(Error::arg("spin", "must be at least 1/2"));
    }
    Ok(gamma_n_lower_bound(spin.max_terms()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Inconclusive,
}

impl Verdict {
    fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

/// Result of comparing `max |C − C₀₀|` against `γ (1 − |C₀₀|)`, both with the
/// worst-case `γ_J` and with `γ_N` for the actual number of terms `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalityCertificate {
    pub spin: Spin,
    pub constant: f64,
    pub deviation: f64,
    pub n_terms: usize,
    pub gamma_j: Option<f64>,
    pub bound_j: Option<f64>,
    pub verdict_j: Verdict,
    pub gamma_n: Option<f64>,
    pub bound_n: Option<f64>,
    pub verdict_n: Verdict,
    pub verdict: Verdict,
}

pub fn theorem_2a_check(f: &TrigSeries) -> LocalityCertificate {
    let c0 = f.constant();
    let n = f.term_count();
    let deviation = f.max_deviation();
    let room = (1.0 - c0.abs()).max(0.0);
    if n == 0 {
        return LocalityCertificate {
            spin: f.spin(),
            constant: c0,
            deviation,
            n_terms: 0,
            gamma_j: gamma_j(f.spin()).ok(),
            bound_j: None,
            verdict_j: Verdict::Pass,
            gamma_n: None,
            bound_n: None,
            verdict_n: Verdict::Pass,
            verdict: Verdict::Pass,
        };
    }
    let gj = gamma_j(f.spin()).ok();
    let gn = gamma_n(n).ok();
    let bj = gj.map(|g| g * room);
    let bn = gn.map(|g| g * room);
    let verdict_j = Verdict::from_bool(bj.is_some_and(|b| deviation <= b));
    let verdict_n = Verdict::from_bool(bn.is_some_and(|b| deviation <= b));
    LocalityCertificate {
        spin: f.spin(),
        constant: c0,
        deviation,
        n_terms: n,
        gamma_j: gj,
        bound_j: bj,
        verdict_j,
        gamma_n: gn,
        bound_n: bn,
        verdict_n,
        verdict: Verdict::from_bool(verdict_j.is_pass() || verdict_n.is_pass()),
    }
}

/// The window model for a constant-free `f` with `max |f| ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhvModel {
    pub spin: Spin,
    pub n_terms: usize,
    pub xi: f64,
    pub freq_pairs: Vec<FreqPair>,
    pub b_vectors: Vec<[f64; 2]>,
    pub scale: f64,
}

pub fn build_lhv(f: &TrigSeries, xi: f64) -> Result<LhvModel> {
    if f.constant().abs() > tol::COEFF_EQ {
        return Err(Error::arg("f", "constant term must be zero"));
    }
    if !(xi > 0.0 && xi < PI) {
        return Err(Error::arg("xi", format!("{xi} is outside (0, π)")));
    }
    let n = f.term_count();
    if n == 0 {
        return Err(Error::arg("f", "needs at least one angle-dependent term"));
    }
    if !f.is_bounded() {
        return Err(Error::NotBounded { sup: f.sup_abs() });
    }
    let (freq_pairs, b_vectors) = f.terms().iter().map(|(p, c)| (*p, [c.cos, -c.sin])).unzip();
    let model = LhvModel {
        spin: f.spin(),
        n_terms: n,
        xi,
        freq_pairs,
        b_vectors,
        scale: window_scale(n, xi),
    };
    let norm: f64 = model.b_vectors.iter().map(|b| b[0] * b[0] + b[1] * b[1]).sum();
    if norm > 2.0 + tol::BOUNDED_SLACK {
        return Err(Error::NotBounded { sup: (norm / 2.0).sqrt() });
    }
    Ok(model)
}

impl LhvModel {
    /// The function `f` the model was built for.
    pub fn target(&self) -> TrigSeries {
        let terms = self
            .freq_pairs
            .iter()
            .zip(&self.b_vectors)
            .map(|(p, b)| (*p, Coeffs::new(b[0], -b[1])));
        TrigSeries::new(self.spin, 0.0, terms).expect("pairs were canonical and distinct")
    }

    /// Closed-form correlation `scale · f`.
    pub fn exact_correlation(&self) -> TrigSeries {
        self.target().scaled(self.scale).certify_bounded()
    }

    /// Alice's marginal `P(a = +) = (ξ/π)^N`.
    pub fn alice_plus_probability(&self) -> f64 {
        (self.xi / PI).powi(self.n_terms as i32)
    }

    /// Closed-form probability table:
    /// `P(+, ±) = ½(ξ/π)^N ± κ f`, `P(−, ±) = ½ − P(+, ±)`, `κ = scale / 4`.
    pub fn exact_box(&self) -> JointBox {
        let spin = self.spin;
        let f = self.target();
        let kappa = self.scale / 4.0;
        let half_window = TrigSeries::constant_fn(spin, 0.5 * self.alice_plus_probability());
        let half = TrigSeries::constant_fn(spin, 0.5);
        let pp = TrigSeries::linear_combination(&[(1.0, &half_window), (kappa, &f)]);
        let pm = TrigSeries::linear_combination(&[(1.0, &half_window), (-kappa, &f)]);
        let mp = TrigSeries::linear_combination(&[(1.0, &half), (-1.0, &pp)]);
        let mm = TrigSeries::linear_combination(&[(1.0, &half), (-1.0, &pm)]);
        JointBox::from_blocks_unchecked(spin, [pp, pm, mp, mm])
    }

    /// Alice's deterministic response to hidden angles `phis`.
    pub fn alice_response(&self, phis: &[f64], alpha: f64) -> Outcome {
        let inside = self
            .freq_pairs
            .iter()
            .zip(phis)
            .all(|(p, &phi)| wrap_pi(phi + f64::from(p.m()) * alpha).abs() <= self.xi);
        if inside {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    /// Bob's probability of `+` given hidden angles `phis`.
    pub fn bob_plus_probability(&self, phis: &[f64], beta: f64) -> f64 {
        let dot: f64 = self
            .freq_pairs
            .iter()
            .zip(&self.b_vectors)
            .zip(phis)
            .map(|((p, b), &phi)| {
                let (s, c) = (phi + f64::from(p.n()) * beta).sin_cos();
                b[0] * c + b[1] * s
            })
            .sum();
        (0.5 * (1.0 + dot / (2.0 * self.n_terms as f64).sqrt())).clamp(0.0, 1.0)
    }
}

/// Draws one round of the window model at inputs `(α, β)`.
pub fn sample_lhv(model: &LhvModel, alpha: f64, beta: f64, rng: &mut ChaCha8Rng) -> (Outcome, Outcome) {
    let phis: Vec<f64> = (0..model.n_terms).map(|_| rng.random_range(0.0..TAU)).collect();
    let a = model.alice_response(&phis, alpha);
    let b = if rng.random::<f64>() < model.bob_plus_probability(&phis, beta) {
        Outcome::Plus
    } else {
        Outcome::Minus
    };
    (a, b)
}

/// Any local model that can be simulated round by round.
pub trait LocalSampler: Sync {
    fn sample(&self, alpha: f64, beta: f64, rng: &mut ChaCha8Rng) -> (Outcome, Outcome);
}

impl LocalSampler for LhvModel {
    fn sample(&self, alpha: f64, beta: f64, rng: &mut ChaCha8Rng) -> (Outcome, Outcome) {
        sample_lhv(self, alpha, beta, rng)
    }
}

/// `f = C₀₀ + (1 − |C₀₀|) · g`: with probability `|C₀₀|` both parties output
/// a fixed pair of sign `C₀₀`, otherwise they run a window model for `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMixture {
    pub constant: f64,
    pub model: Option<LhvModel>,
}

impl LocalMixture {
    fn fixed_pair(&self) -> (Outcome, Outcome) {
        if self.constant >= 0.0 {
            (Outcome::Plus, Outcome::Plus)
        } else {
            (Outcome::Plus, Outcome::Minus)
        }
    }

    pub fn exact_correlation(&self) -> TrigSeries {
        let w = 1.0 - self.constant.abs();
        match &self.model {
            None => TrigSeries::constant_fn(Spin::ZERO, self.constant),
            Some(m) => {
                let c = m.exact_correlation();
                let one = TrigSeries::constant_fn(c.spin(), self.constant);
                TrigSeries::linear_combination(&[(1.0, &one), (w, &c)]).certify_bounded()
            }
        }
    }

    pub fn exact_box(&self) -> JointBox {
        let (a, b) = self.fixed_pair();
        let fixed = JointBox::deterministic(a, b);
        let Some(m) = &self.model else {
            return fixed;
        };
        let inner = m.exact_box();
        let w = self.constant.abs();
        let blocks = [
            (Outcome::Plus, Outcome::Plus),
            (Outcome::Plus, Outcome::Minus),
            (Outcome::Minus, Outcome::Plus),
            (Outcome::Minus, Outcome::Minus),
        ]
        .map(|(x, y)| {
            TrigSeries::linear_combination(&[(w, fixed.block(x, y)), (1.0 - w, inner.block(x, y))])
        });
        JointBox::from_blocks_unchecked(inner.spin(), blocks)
    }
}

impl LocalSampler for LocalMixture {
    fn sample(&self, alpha: f64, beta: f64, rng: &mut ChaCha8Rng) -> (Outcome, Outcome) {
        let u: f64 = rng.random();
        match &self.model {
            Some(m) if u >= self.constant.abs() => sample_lhv(m, alpha, beta, rng),
            _ => self.fixed_pair(),
        }
    }
}

/// Builds a local model reproducing `f` exactly when the locality
/// certificate passes.
pub fn certify_local(f: &TrigSeries) -> Result<(LocalityCertificate, LocalMixture)> {
    let cert = theorem_2a_check(f);
    if !cert.verdict.is_pass() {
        return Err(Error::PremiseFailed(format!(
            "deviation {} exceeds every available bound",
            sig12(cert.deviation)
        )));
    }
    let c0 = f.constant();
    if cert.n_terms == 0 {
        return Ok((cert, LocalMixture { constant: c0, model: None }));
    }
    let n = cert.n_terms;
    let xi = optimal_xi(n)?;
    let k = 1.0 / ((1.0 - c0.abs()) * window_scale(n, xi));
    let zero = TrigSeries::constant_fn(f.spin(), c0);
    let g = TrigSeries::linear_combination(&[(k, f), (-k, &zero)]);
    let model = build_lhv(&g, xi)?;
    Ok((cert, LocalMixture { constant: c0, model: Some(model) }))
}

/// Shared-angle model with square-wave responses `f(x + λ)` of period `2π/n`
/// for both parties. Its correlation hits `+1` at `θ = 0` and `−1` at
/// `θ = mπ/n` without any bound on the frequencies involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SquareWaveModel {
    pub m: u32,
    pub n: u32,
}

pub fn build_squarewave_lhv(m: u32, n: u32) -> Result<SquareWaveModel> {
    if m % 2 == 0 {
        return Err(Error::arg("m", format!("{m} must be odd")));
    }
    if n < m {
        return Err(Error::arg("n", format!("{n} must be at least m = {m}")));
    }
    Ok(SquareWaveModel { m, n })
}

impl SquareWaveModel {
    fn half_period(&self) -> f64 {
        PI / f64::from(self.n)
    }

    /// `+1` on `[2kπ/n, (2k+1)π/n)`, `−1` elsewhere.
    pub fn response(&self, x: f64) -> Outcome {
        let k = (x.rem_euclid(TAU) / self.half_period()).floor() as i64;
        if k % 2 == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    /// The angle `mπ/n` at which the correlation is `−1`.
    pub fn theta_minus(&self) -> f64 {
        f64::from(self.m) * self.half_period()
    }

    /// `(2π)^{−1} ∫ f(θ + λ) f(λ) dλ`, integrated piece by piece between
    /// the sign changes of both factors.
    pub fn correlation_at(&self, theta: f64) -> f64 {
        let h = self.half_period();
        let shift = theta.rem_euclid(TAU);
        let steps = 2 * self.n as usize;
        let mut cuts: Vec<f64> = (0..steps).map(|k| k as f64 * h).collect();
        cuts.extend((0..steps).map(|k| (k as f64 * h - shift).rem_euclid(TAU)));
        cuts.push(TAU);
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .map(|w| {
                let len = w[1] - w[0];
                if len <= 0.0 {
                    return 0.0;
                }
                let mid = 0.5 * (w[0] + w[1]);
                len * self.response(mid + shift).sign() * self.response(mid).sign()
            })
            .sum::<f64>()
            / TAU
    }
}

impl Correlator for SquareWaveModel {
    fn correlation(&self, alpha: f64, beta: f64) -> f64 {
        self.correlation_at(alpha - beta)
    }
}

impl LocalSampler for SquareWaveModel {
    fn sample(&self, alpha: f64, beta: f64, rng: &mut ChaCha8Rng) -> (Outcome, Outcome) {
        let lambda = rng.random_range(0.0..TAU);
        (self.response(alpha + lambda), self.response(beta + lambda))
    }
}

/// Monte-Carlo estimate at one input pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
    pub correlation: f64,
    pub stderr: f64,
    pub p_a_plus: f64,
    pub p_b_plus: f64,
}

/// Samples `shots` rounds on the reproducible chunked streams of `seed`.
pub fn estimate<S: LocalSampler + ?Sized>(
    sampler: &S,
    alpha: f64,
    beta: f64,
    shots: usize,
    seed: u64,
) -> Estimate {
    let counts = rng::chunked(seed, shots, |r, count| {
        let mut same = 0usize;
        let mut a_plus = 0usize;
        let mut b_plus = 0usize;
        for _ in 0..count {
            let (a, b) = sampler.sample(alpha, beta, r);
            same += usize::from(a == b);
            a_plus += usize::from(a == Outcome::Plus);
            b_plus += usize::from(b == Outcome::Plus);
        }
        (same, a_plus, b_plus)
    });
    let (same, a_plus, b_plus) = counts
        .into_iter()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let m = shots as f64;
    let corr = (2.0 * same as f64 - m) / m;
    Estimate {
        alpha,
        beta,
        samples: shots,
        correlation: corr,
        stderr: ((1.0 - corr * corr).max(0.0) / (m - 1.0).max(1.0)).sqrt(),
        p_a_plus: a_plus as f64 / m,
        p_b_plus: b_plus as f64 / m,
    }
}

/// CSV with header `alpha,beta,samples,empirical_C,stderr`.
pub fn estimates_csv(rows: &[Estimate]) -> String {
    let mut out = String::from("alpha,beta,samples,empirical_C,stderr\n");
    for e in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            sig12(e.alpha),
            sig12(e.beta),
            e.samples,
            sig12(e.correlation),
            sig12(e.stderr)
        );
    }
    out
}
