//! Correlation functions of two angles as bounded trigonometric series.
//!
//! A series is `C(α, β) = C₀₀ + Σ [c·cos(mα − nβ) + s·sin(mα − nβ)]` over
//! distinct canonical frequency pairs with `|m|, |n| ≤ 2J`. Relational
//! functions (only `m = n` terms) are written as functions of the single
//! angle `θ = α − β`.

use crate::angle::wrap_pi;
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim;
use crate::tol;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2, TAU};
use std::fmt;

/// Anything that can be evaluated as a correlation `C(α, β)`.
pub trait Correlator {
    fn correlation(&self, alpha: f64, beta: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64> Correlator for F {
    fn correlation(&self, alpha: f64, beta: f64) -> f64 {
        self(alpha, beta)
    }
}

/// Half-integer spin `J`, stored as the integer `2J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Spin(u32);

impl Spin {
    pub const ZERO: Spin = Spin(0);
    pub const HALF: Spin = Spin(1);
    pub const ONE: Spin = Spin(2);

    pub const fn from_two_j(two_j: u32) -> Self {
        Spin(two_j)
    }

    pub const fn two_j(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    /// Largest number of distinct canonical non-constant pairs, `4J(2J + 1)`.
    pub fn max_terms(self) -> usize {
        let t = self.0 as usize;
        2 * t * (t + 1)
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// A canonical frequency pair: `m ≥ 0`, and `n > 0` whenever `m = 0`.
/// The pair `(0, 0)` is the constant term and is never a `FreqPair`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair")]
pub struct FreqPair {
    m: i32,
    n: i32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    m: i32,
    n: i32,
}

impl TryFrom<RawPair> for FreqPair {
    type Error = Error;

    fn try_from(r: RawPair) -> Result<Self> {
        FreqPair::new(r.m, r.n)
    }
}

impl FreqPair {
    pub fn new(m: i32, n: i32) -> Result<Self> {
        if m < 0 || (m == 0 && n <= 0) {
            return Err(Error::NonCanonicalPair { m, n });
        }
        Ok(FreqPair { m, n })
    }

    pub fn m(self) -> i32 {
        self.m
    }

    pub fn n(self) -> i32 {
        self.n
    }

    pub fn is_relational(self) -> bool {
        self.m == self.n
    }

    /// Rewrites an arbitrary `(m, n)` term into canonical form. Returns `None`
    /// for `(0, 0)`, whose cosine coefficient belongs to the constant.
    /// `cos` is even and `sin` odd under `(m, n) → (−m, −n)`.
    pub fn canonicalize(m: i32, n: i32, cos: f64, sin: f64) -> Option<(FreqPair, Coeffs)> {
        match (m, n) {
            (0, 0) => None,
            _ if m > 0 || (m == 0 && n > 0) => Some((FreqPair { m, n }, Coeffs { cos, sin })),
            _ => Some((FreqPair { m: -m, n: -n }, Coeffs { cos, sin: -sin })),
        }
    }

    fn fits(self, two_j: u32) -> bool {
        self.m.unsigned_abs() <= two_j && self.n.unsigned_abs() <= two_j
    }
}

/// Cosine and sine coefficients of one frequency pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coeffs {
    pub cos: f64,
    pub sin: f64,
}

impl Coeffs {
    pub fn new(cos: f64, sin: f64) -> Self {
        Coeffs { cos, sin }
    }

    pub fn is_zero(self) -> bool {
        self.cos == 0.0 && self.sin == 0.0
    }

    pub fn amplitude(self) -> f64 {
        self.cos.hypot(self.sin)
    }
}

/// A bounded trigonometric series in two angles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SeriesJson", into = "SeriesJson")]
pub struct TrigSeries {
    spin: Spin,
    constant: f64,
    terms: BTreeMap<FreqPair, Coeffs>,
    certified_bounded: bool,
}

/// The correlation function `C(α, β)` of a two-outcome box.
pub type CorrelationFunction = TrigSeries;

impl PartialEq for TrigSeries {
    fn eq(&self, other: &Self) -> bool {
        self.spin == other.spin && self.constant == other.constant && self.terms == other.terms
    }
}

impl TrigSeries {
    /// The zero function at spin `J`.
    pub fn zero(spin: Spin) -> Self {
        TrigSeries::constant_fn(spin, 0.0)
    }

    pub fn constant_fn(spin: Spin, value: f64) -> Self {
        TrigSeries {
            spin,
            constant: value,
            terms: BTreeMap::new(),
            certified_bounded: value.abs() <= 1.0,
        }
    }

    /// Builds a series from canonical pairs, rejecting duplicates and pairs
    /// outside the spin bound.
    pub fn new(
        spin: Spin,
        constant: f64,
        terms: impl IntoIterator<Item = (FreqPair, Coeffs)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (p, c) in terms {
            if !p.fits(spin.two_j()) {
                return Err(Error::SpinBoundExceeded {
                    m: p.m,
                    n: p.n,
                    two_j: spin.two_j(),
                });
            }
            if map.insert(p, c).is_some() {
                return Err(Error::DuplicatePair { m: p.m, n: p.n });
            }
        }
        Ok(TrigSeries {
            spin,
            constant,
            terms: map,
            certified_bounded: false,
        })
    }

    /// Builds a series from the redundant parametrization with `m ≥ 0` (or
    /// any sign) and `n ∈ [−2J, 2J]`, merging equivalent terms into
    /// canonical form. The `(0, 0)` cosine goes into the constant.
    pub fn from_raw(
        spin: Spin,
        constant: f64,
        raw: impl IntoIterator<Item = (i32, i32, f64, f64)>,
    ) -> Result<Self> {
        let mut constant = constant;
        let mut map: BTreeMap<FreqPair, Coeffs> = BTreeMap::new();
        for (m, n, c, s) in raw {
            match FreqPair::canonicalize(m, n, c, s) {
                None => constant += c,
                Some((p, k)) => {
                    if !p.fits(spin.two_j()) {
                        return Err(Error::SpinBoundExceeded {
                            m,
                            n,
                            two_j: spin.two_j(),
                        });
                    }
                    let e = map.entry(p).or_default();
                    e.cos += k.cos;
                    e.sin += k.sin;
                }
            }
        }
        Ok(TrigSeries {
            spin,
            constant,
            terms: map,
            certified_bounded: false,
        })
    }

    /// Single-term helper: `constant + cos·cos(mα − nβ) + sin·sin(mα − nβ)`.
    pub fn single(spin: Spin, constant: f64, m: i32, n: i32, cos: f64, sin: f64) -> Result<Self> {
        TrigSeries::from_raw(spin, constant, [(m, n, cos, sin)])
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &BTreeMap<FreqPair, Coeffs> {
        &self.terms
    }

    pub fn coeffs(&self, m: i32, n: i32) -> Coeffs {
        FreqPair::new(m, n)
            .ok()
            .and_then(|p| self.terms.get(&p).copied())
            .unwrap_or_default()
    }

    /// Number of terms with a nonzero coefficient.
    pub fn term_count(&self) -> usize {
        self.terms.values().filter(|c| !c.is_zero()).count()
    }

    /// Whether the bound `|C| ≤ 1` was established by construction (for
    /// example by deriving the series from a valid probability table).
    pub fn is_certified_bounded(&self) -> bool {
        self.certified_bounded
    }

    pub(crate) fn certify_bounded(mut self) -> Self {
        self.certified_bounded = true;
        self
    }

    /// Same coefficients reinterpreted under a larger spin bound.
    pub fn with_spin(mut self, spin: Spin) -> Result<Self> {
        if let Some(p) = self.terms.keys().find(|p| !p.fits(spin.two_j())) {
            return Err(Error::SpinBoundExceeded {
                m: p.m,
                n: p.n,
                two_j: spin.two_j(),
            });
        }
        self.spin = spin;
        Ok(self)
    }

    /// Drops terms whose coefficients are both below `eps` in magnitude.
    pub fn pruned(mut self, eps: f64) -> Self {
        self.terms
            .retain(|_, c| c.cos.abs() >= eps || c.sin.abs() >= eps);
        self
    }

    /// `C(α, β)`.
    pub fn evaluate(&self, alpha: f64, beta: f64) -> f64 {
        let mut acc = self.constant;
        for (p, c) in &self.terms {
            let phase = f64::from(p.m) * alpha - f64::from(p.n) * beta;
            let (s, co) = phase.sin_cos();
            acc += c.cos * co + c.sin * s;
        }
        acc
    }

    /// Coefficient-wise `k · self`.
    pub fn scaled(&self, k: f64) -> Self {
        TrigSeries {
            spin: self.spin,
            constant: k * self.constant,
            terms: self
                .terms
                .iter()
                .map(|(p, c)| (*p, Coeffs::new(k * c.cos, k * c.sin)))
                .collect(),
            certified_bounded: self.certified_bounded && k.abs() <= 1.0,
        }
    }

    /// Coefficient-wise `Σ wᵢ · fᵢ`; the spin of the result is the largest spin.
    pub fn linear_combination(parts: &[(f64, &TrigSeries)]) -> Self {
        let spin = parts.iter().map(|(_, f)| f.spin).max().unwrap_or(Spin::ZERO);
        let mut constant = 0.0;
        let mut terms: BTreeMap<FreqPair, Coeffs> = BTreeMap::new();
        for (w, f) in parts {
            constant += w * f.constant;
            for (p, c) in &f.terms {
                let e = terms.entry(*p).or_default();
                e.cos += w * c.cos;
                e.sin += w * c.sin;
            }
        }
        TrigSeries {
            spin,
            constant,
            terms,
            certified_bounded: false,
        }
    }

    /// Keeps only the constant and the `m = n` terms: the average of
    /// `C(α + λ, β + λ)` over a uniform shared offset `λ`.
    pub fn relational_core(&self) -> Self {
        TrigSeries {
            spin: self.spin,
            constant: self.constant,
            terms: self
                .terms
                .iter()
                .filter(|(p, _)| p.is_relational())
                .map(|(p, c)| (*p, *c))
                .collect(),
            certified_bounded: self.certified_bounded,
        }
    }

    pub fn is_relational(&self) -> bool {
        self.terms.keys().all(|p| p.is_relational())
    }

    /// The relational function as a function of `θ = α − β`.
    pub fn evaluate_relational(&self, theta: f64) -> f64 {
        self.evaluate(theta, 0.0)
    }

    /// `C₀₀² + ½ Σ (c² + s²)`, the mean square of the function over the torus.
    pub fn l2_norm_sq(&self) -> f64 {
        self.constant * self.constant
            + 0.5
                * self
                    .terms
                    .values()
                    .map(|c| c.cos * c.cos + c.sin * c.sin)
                    .sum::<f64>()
    }

    /// Values on the `n × n` grid `(2πi/n, 2πj/n)`, row-major in `i`.
    pub fn grid_values(&self, n: usize) -> Vec<f64> {
        let t = self.spin.two_j() as i32;
        let step = TAU / n as f64;
        let width = (2 * t + 1) as usize;
        // cos/sin of nβ for n in [−2J, 2J], per column
        let col: Vec<(f64, f64)> = (0..n)
            .flat_map(|j| {
                let b = j as f64 * step;
                (-t..=t).map(move |k| (f64::from(k) * b).sin_cos())
            })
            .collect();
        let terms: Vec<(usize, usize, Coeffs)> = self
            .terms
            .iter()
            .map(|(p, c)| (p.m as usize, (p.n + t) as usize, *c))
            .collect();
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let a = i as f64 * step;
                let row: Vec<(f64, f64)> = (0..=t).map(|m| (f64::from(m) * a).sin_cos()).collect();
                let col = &col;
                let terms = &terms;
                let constant = self.constant;
                (0..n).map(move |j| {
                    let cj = &col[j * width..(j + 1) * width];
                    let mut acc = constant;
                    for &(m, k, c) in terms {
                        let (sa, ca) = row[m];
                        let (sb, cb) = cj[k];
                        // cos(x − y), sin(x − y) by angle addition
                        acc += c.cos * (ca * cb + sa * sb) + c.sin * (sa * cb - ca * sb);
                    }
                    acc
                })
            })
            .collect()
    }

    fn sup_of(&self, sign: f64, offset: f64) -> f64 {
        let n = tol::GRID_PER_AXIS;
        let grid: Vec<f64> = self
            .grid_values(n)
            .into_iter()
            .map(|v| sign * (v - offset))
            .collect();
        let f = |a: f64, b: f64| sign * (self.evaluate(a, b) - offset);
        optim::maximize_from_grid(&f, &grid, n).value
    }

    /// `sup |C(α, β) − C₀₀|` by grid scan and local refinement.
    pub fn max_deviation(&self) -> f64 {
        if self.term_count() == 0 {
            return 0.0;
        }
        self.sup_of(1.0, self.constant)
            .max(self.sup_of(-1.0, self.constant))
            .max(0.0)
    }

    /// `sup |C(α, β)|`.
    pub fn sup_abs(&self) -> f64 {
        if self.term_count() == 0 {
            return self.constant.abs();
        }
        self.sup_of(1.0, 0.0).max(self.sup_of(-1.0, 0.0))
    }

    /// Minimum of `C` over the torus.
    pub fn min_value(&self) -> f64 {
        if self.term_count() == 0 {
            return self.constant;
        }
        -self.sup_of(-1.0, 0.0)
    }

    /// Whether `|C| ≤ 1 + slack` everywhere. Certified series skip the scan.
    pub fn is_bounded(&self) -> bool {
        self.certified_bounded || self.sup_abs() <= 1.0 + tol::BOUNDED_SLACK
    }

    /// Polar form of a relational function.
    pub fn polar_form(&self) -> Result<PolarForm> {
        if let Some(p) = self.terms.keys().find(|p| !p.is_relational()) {
            return Err(Error::NotRelational { m: p.m, n: p.n });
        }
        let mut amplitudes = BTreeMap::new();
        let mut phases = BTreeMap::new();
        for (p, c) in &self.terms {
            if c.is_zero() {
                continue;
            }
            let m = p.m as u32;
            let phase = if c.cos == 0.0 {
                if c.sin >= 0.0 {
                    PI / 2.0
                } else {
                    -PI / 2.0
                }
            } else {
                wrap_pi(c.sin.atan2(c.cos))
            };
            amplitudes.insert(m, c.amplitude());
            phases.insert(m, phase);
        }
        Ok(PolarForm {
            a0: self.constant,
            amplitudes,
            phases,
        })
    }
}

/// `sup |d²C/dθ²|` over all relational functions of spin `J` bounded by 1:
/// `√2 · J(2J + 1)(4J + 1)/3`, i.e. `√2 · Σ_{m=1}^{2J} m²`.
pub fn second_derivative_bound(spin: Spin) -> f64 {
    let t = f64::from(spin.two_j());
    SQRT_2 * t * (t + 1.0) * (2.0 * t + 1.0) / 6.0
}

/// `C(θ) = A₀ + Σ A_m cos(mθ − φ_m)` with `θ = α − β` and `φ_m ∈ [−π, π)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarForm {
    pub a0: f64,
    pub amplitudes: BTreeMap<u32, f64>,
    pub phases: BTreeMap<u32, f64>,
}

impl PolarForm {
    pub fn evaluate(&self, theta: f64) -> f64 {
        self.a0
            + self
                .amplitudes
                .iter()
                .map(|(&m, &a)| a * (f64::from(m) * theta - self.phases[&m]).cos())
                .sum::<f64>()
    }

    pub fn second_derivative(&self, theta: f64) -> f64 {
        self.amplitudes
            .iter()
            .map(|(&m, &a)| {
                let m = f64::from(m);
                -m * m * a * (m * theta - self.phases[&(m as u32)]).cos()
            })
            .sum()
    }
}

/// Result of a least-squares series fit.
#[derive(Debug, Clone)]
pub struct SeriesFit {
    pub function: TrigSeries,
    pub residual_rms: f64,
}

/// All canonical pairs admissible at spin `J`, in ascending order.
pub fn canonical_pairs(spin: Spin) -> Vec<FreqPair> {
    let t = spin.two_j() as i32;
    (0..=t)
        .flat_map(|m| (-t..=t).map(move |n| (m, n)))
        .filter_map(|(m, n)| FreqPair::new(m, n).ok())
        .collect()
}

/// Least-squares fit of a spin-`J` series to samples `(α, β, value)`.
pub fn fit_trig_series(samples: &[(f64, f64, f64)], spin: Spin) -> Result<SeriesFit> {
    let pairs = canonical_pairs(spin);
    let cols = 1 + 2 * pairs.len();
    let design = DMatrix::from_fn(samples.len(), cols, |r, c| {
        let (a, b, _) = samples[r];
        if c == 0 {
            return 1.0;
        }
        let p = pairs[(c - 1) / 2];
        let phase = f64::from(p.m) * a - f64::from(p.n) * b;
        if (c - 1) % 2 == 0 {
            phase.cos()
        } else {
            phase.sin()
        }
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.2));
    let x = linalg::least_squares_vec(&design, &rhs)?;
    let residual_rms = linalg::rms_residual(&design, &x, &rhs);
    let terms = pairs
        .iter()
        .enumerate()
        .map(|(k, p)| (*p, Coeffs::new(x[1 + 2 * k], x[2 + 2 * k])));
    Ok(SeriesFit {
        function: TrigSeries::new(spin, x[0], terms)?,
        residual_rms,
    })
}

/// `(2/7)·cos 3(α − β) − cos(α − β)`: a bounded series whose CHSH value
/// exceeds the quantum maximum.
pub fn scifi() -> CorrelationFunction {
    TrigSeries::from_raw(
        Spin::from_two_j(3),
        0.0,
        [(3, 3, 2.0 / 7.0, 0.0), (1, 1, -1.0, 0.0)],
    )
    .expect("pairs fit 2J = 3")
}

/// `−p·cos 2(α − β)`, the polarizer correlation of the Werner state.
pub fn werner_correlation(p: f64) -> CorrelationFunction {
    TrigSeries::single(Spin::ONE, 0.0, 2, 2, -p, 0.0).expect("pair fits 2J = 2")
}

/// Zero-constant series on `n_terms` distinct random pairs with Gaussian
/// coefficients, rescaled so that `max |f| = sup`.
pub fn random_series<R: Rng + ?Sized>(rng: &mut R, spin: Spin, n_terms: usize, sup: f64) -> Result<TrigSeries> {
    let pairs = canonical_pairs(spin);
    if n_terms == 0 || n_terms > pairs.len() {
        return Err(Error::arg("n_terms", format!("must be in 1..={}", pairs.len())));
    }
    if !(sup > 0.0 && sup <= 1.0) {
        return Err(Error::arg("sup", format!("{sup} is outside (0, 1]")));
    }
    let terms = rand::seq::index::sample(rng, pairs.len(), n_terms)
        .into_iter()
        .map(|i| (pairs[i], Coeffs::new(rng.sample(StandardNormal), rng.sample(StandardNormal))))
        .collect::<Vec<_>>();
    let f = TrigSeries::new(spin, 0.0, terms)?;
    let s = f.sup_abs();
    Ok(f.scaled(sup / s))
}

impl Correlator for TrigSeries {
    fn correlation(&self, alpha: f64, beta: f64) -> f64 {
        self.evaluate(alpha, beta)
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    m: i32,
    n: i32,
    cos: f64,
    sin: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesJson {
    two_j: u32,
    constant: f64,
    terms: Vec<TermJson>,
}

impl TryFrom<SeriesJson> for TrigSeries {
    type Error = Error;

    fn try_from(j: SeriesJson) -> Result<Self> {
        let spin = Spin::from_two_j(j.two_j);
        let mut terms = Vec::with_capacity(j.terms.len());
        for t in j.terms {
            terms.push((FreqPair::new(t.m, t.n)?, Coeffs::new(t.cos, t.sin)));
        }
        TrigSeries::new(spin, j.constant, terms)
    }
}

impl From<TrigSeries> for SeriesJson {
    fn from(f: TrigSeries) -> Self {
        SeriesJson {
            two_j: f.spin.two_j(),
            constant: f.constant,
            terms: f
                .terms
                .iter()
                .map(|(p, c)| TermJson {
                    m: p.m,
                    n: p.n,
                    cos: c.cos,
                    sin: c.sin,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_series(rng: &mut ChaCha8Rng, spin: Spin, terms: usize) -> TrigSeries {
        let pairs = canonical_pairs(spin);
        let raw: Vec<_> = (0..terms)
            .map(|_| {
                let p = pairs[rng.random_range(0..pairs.len())];
                (p.m, p.n, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
            })
            .collect();
        TrigSeries::from_raw(spin, rng.random_range(-0.3..0.3), raw).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let w = werner_correlation(1.0);
        assert_abs_diff_eq!(w.evaluate(0.0, 0.0), -1.0, epsilon = 1e-15);
        let c = TrigSeries::constant_fn(Spin::ONE, 0.3);
        assert_abs_diff_eq!(c.evaluate(1.7, -2.2), 0.3, epsilon = 0.0);
        // direct scalar oracle for the two cosines
        let direct = 2.0 / 7.0 * (3.0 * (1.5f64 - 3.9)).cos() - (1.5f64 - 3.9).cos();
        assert_abs_diff_eq!(scifi().evaluate(1.5, 3.9), direct, epsilon = 1e-14);
        assert_abs_diff_eq!(scifi().evaluate(1.5, 3.9), 0.9112, epsilon = 1e-3);
    }

    #[test]
    fn canonicalization_merges_redundant_terms() {
        // cos(−α + β) = cos(α − β), sin(−α + β) = −sin(α − β)
        let f = TrigSeries::from_raw(
            Spin::HALF,
            0.0,
            [(1, 1, 0.25, 0.5), (-1, -1, 0.25, 0.5), (0, -1, 0.1, 0.2), (0, 0, 0.3, 9.0)],
        )
        .unwrap();
        assert_eq!(f.coeffs(1, 1), Coeffs::new(0.5, 0.0));
        assert_eq!(f.coeffs(0, 1), Coeffs::new(0.1, -0.2));
        assert_abs_diff_eq!(f.constant(), 0.3);
        assert!(FreqPair::new(0, 0).is_err());
        assert!(FreqPair::new(0, -1).is_err());
        assert!(FreqPair::new(-1, 2).is_err());
    }

    #[test]
    fn spin_bound_and_duplicates_rejected() {
        assert!(matches!(
            TrigSeries::single(Spin::HALF, 0.0, 2, 0, 1.0, 0.0),
            Err(Error::SpinBoundExceeded { .. })
        ));
        let p = FreqPair::new(1, 0).unwrap();
        assert!(matches!(
            TrigSeries::new(Spin::HALF, 0.0, [(p, Coeffs::default()), (p, Coeffs::default())]),
            Err(Error::DuplicatePair { m: 1, n: 0 })
        ));
    }

    #[test]
    fn relational_core_examples() {
        let f = TrigSeries::single(Spin::HALF, 0.2, 1, 0, 0.5, 0.0).unwrap();
        let core = f.relational_core();
        assert_eq!(core.term_count(), 0);
        assert_abs_diff_eq!(core.constant(), 0.2);
        let s = scifi();
        assert_eq!(s.relational_core(), s);
    }

    #[test]
    fn relational_core_matches_offset_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_series(&mut rng, Spin::ONE, 8);
        let core = f.relational_core();
        let k = 1024;
        for _ in 0..20 {
            let (a, b) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
            // uniform rule is exact for trigonometric polynomials of degree < k
            let avg = (0..k)
                .map(|i| {
                    let l = TAU * i as f64 / k as f64;
                    f.evaluate(a + l, b + l)
                })
                .sum::<f64>()
                / k as f64;
            assert_abs_diff_eq!(avg, core.evaluate(a, b), epsilon = 1e-9);
        }
    }

    #[test]
    fn max_deviation_examples() {
        let p = 0.73;
        assert_abs_diff_eq!(werner_correlation(p).max_deviation(), p, epsilon = 1e-8);
        assert_eq!(TrigSeries::zero(Spin::ONE).max_deviation(), 0.0);
        // 1e6-point scan of the relational profile
        let scan = (0..1_000_000)
            .map(|i| {
                let t = TAU * i as f64 / 1e6;
                (2.0 / 7.0 * (3.0 * t).cos() - t.cos()).abs()
            })
            .fold(0.0f64, f64::max);
        let dev = scifi().max_deviation();
        assert!(dev > 0.9 && dev < 0.92);
        assert!(dev >= scan - 1e-12 && dev - scan < 1e-9, "{dev} vs {scan}");
    }

    #[test]
    fn second_derivative_bound_values() {
        assert_abs_diff_eq!(second_derivative_bound(Spin::HALF), SQRT_2, epsilon = 1e-15);
        assert_eq!(second_derivative_bound(Spin::ZERO), 0.0);
        assert_abs_diff_eq!(second_derivative_bound(Spin::ONE), 5.0 * SQRT_2, epsilon = 1e-14);
    }

    #[test]
    fn polar_form_examples() {
        let f = TrigSeries::single(Spin::HALF, 0.0, 1, 1, 0.0, 1.0).unwrap();
        let pf = f.polar_form().unwrap();
        assert_abs_diff_eq!(pf.amplitudes[&1], 1.0);
        assert_abs_diff_eq!(pf.phases[&1], PI / 2.0);

        let g = TrigSeries::single(Spin::ONE, 0.0, 2, 2, -1.0, 0.0).unwrap();
        let pg = g.polar_form().unwrap();
        assert_abs_diff_eq!(pg.amplitudes[&2], 1.0);
        // π is represented as −π in [−π, π)
        assert_abs_diff_eq!(pg.phases[&2], -PI);
        for i in 0..100 {
            let t = -PI + TAU * i as f64 / 100.0;
            assert_abs_diff_eq!(pg.evaluate(t), g.evaluate_relational(t), epsilon = 1e-12);
        }

        let z = TrigSeries::zero(Spin::ONE).polar_form().unwrap();
        assert!(z.amplitudes.is_empty());
        assert_eq!(z.a0, 0.0);

        let bad = TrigSeries::single(Spin::ONE, 0.0, 2, 1, 1.0, 0.0).unwrap();
        assert!(matches!(bad.polar_form(), Err(Error::NotRelational { m: 2, n: 1 })));
    }

    #[test]
    fn fit_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_series(&mut rng, Spin::ONE, 6);
        let samples: Vec<_> = (0..200)
            .map(|_| {
                let (a, b) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
                (a, b, f.evaluate(a, b))
            })
            .collect();
        let fit = fit_trig_series(&samples, Spin::ONE).unwrap();
        assert!(fit.residual_rms < 1e-10);
        assert_abs_diff_eq!(fit.function.constant(), f.constant(), epsilon = 1e-9);
        for p in canonical_pairs(Spin::ONE) {
            let (x, y) = (fit.function.coeffs(p.m, p.n), f.coeffs(p.m, p.n));
            assert_abs_diff_eq!(x.cos, y.cos, epsilon = 1e-9);
            assert_abs_diff_eq!(x.sin, y.sin, epsilon = 1e-9);
        }

        let flat: Vec<_> = samples.iter().map(|&(a, b, _)| (a, b, 0.5)).collect();
        let fit = fit_trig_series(&flat, Spin::ONE).unwrap();
        assert_abs_diff_eq!(fit.function.constant(), 0.5, epsilon = 1e-12);
        assert!(fit.function.terms().values().all(|c| c.amplitude() < 1e-12));
    }

    #[test]
    fn fit_with_noise_reports_noise_level() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let f = scifi();
        let samples: Vec<_> = (0..4000)
            .map(|_| {
                let (a, b) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
                (a, b, f.evaluate(a, b) + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_trig_series(&samples, f.spin()).unwrap();
        assert!((fit.residual_rms - 1e-3).abs() < 1e-4, "{}", fit.residual_rms);
    }

    #[test]
    fn fit_rejects_degenerate_samples() {
        let same: Vec<_> = (0..100).map(|_| (0.3, 0.1, 0.2)).collect();
        assert!(matches!(
            fit_trig_series(&same, Spin::HALF),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn json_schema_round_trip_and_rejections() {
        let f = scifi();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(
            s,
            r#"{"two_j":3,"constant":0.0,"terms":[{"m":1,"n":1,"cos":-1.0,"sin":0.0},{"m":3,"n":3,"cos":0.2857142857142857,"sin":0.0}]}"#
        );
        let back: TrigSeries = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let dup = r#"{"two_j":1,"constant":0,"terms":[{"m":1,"n":1,"cos":1,"sin":0},{"m":1,"n":1,"cos":1,"sin":0}]}"#;
        assert!(serde_json::from_str::<TrigSeries>(dup).is_err());
        let noncanon = r#"{"two_j":1,"constant":0,"terms":[{"m":0,"n":-1,"cos":1,"sin":0}]}"#;
        assert!(serde_json::from_str::<TrigSeries>(noncanon).is_err());
    }

    #[test]
    fn grid_values_match_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_series(&mut rng, Spin::from_two_j(3), 10);
        let n = 17;
        let g = f.grid_values(n);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (TAU * i as f64 / n as f64, TAU * j as f64 / n as f64);
                assert_abs_diff_eq!(g[i * n + j], f.evaluate(a, b), epsilon = 1e-13);
            }
        }
    }

    fn bounded_relational(coeffs: Vec<(f64, f64)>, c0: f64) -> TrigSeries {
        let raw: Vec<_> = coeffs
            .iter()
            .enumerate()
            .map(|(k, &(c, s))| (k as i32 + 1, k as i32 + 1, c, s))
            .collect();
        let f = TrigSeries::from_raw(Spin::from_two_j(coeffs.len() as u32), c0, raw).unwrap();
        // normalize so that |f| <= 1
        let sup = f.sup_abs().max(1e-9);
        f.scaled(1.0 / sup)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn relational_core_idempotent_and_shift_invariant(
            seed in 0u64..1000, l in -10.0f64..10.0, a in 0.0f64..TAU, b in 0.0f64..TAU
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_series(&mut rng, Spin::from_two_j(3), 7);
            let core = f.relational_core();
            prop_assert_eq!(core.relational_core(), core.clone());
            prop_assert!((core.evaluate(a, b) - core.evaluate(a + l, b + l)).abs() < 1e-12);
        }

        #[test]
        fn bounded_relational_amplitudes_and_curvature(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4),
            c0 in -0.5f64..0.5,
        ) {
            let f = bounded_relational(coeffs, c0);
            prop_assert!(f.l2_norm_sq() <= 1.0 + 1e-9);
            let pf = f.polar_form().unwrap();
            for a in pf.amplitudes.values() {
                prop_assert!(*a <= SQRT_2 + 1e-9);
            }
            let bound = second_derivative_bound(f.spin());
            let h = 1e-4;
            for i in 0..200 {
                let t = TAU * i as f64 / 200.0;
                let d2 = (f.evaluate_relational(t + h) - 2.0 * f.evaluate_relational(t)
                    + f.evaluate_relational(t - h)) / (h * h);
                prop_assert!(d2.abs() <= bound + 1e-3);
                prop_assert!((pf.evaluate(t) - f.evaluate_relational(t)).abs() < 1e-12);
            }
        }
    }
}
