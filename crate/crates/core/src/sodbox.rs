//! Boxes whose inputs are unit vectors in `R^d`: affine single-party boxes,
//! local unbiasedness, the bilinear form `Ω` on the cones spanned by
//! `(1, ±x)`, and the PR-box embedding that shows unbiasedness is needed.

use crate::error::{Error, Result};
use crate::jointbox::{NoSignallingReport, Outcome, Party};
use crate::linalg;
use crate::quantum::QubitSodBox;
use crate::rng;
use crate::tol;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::TAU;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 16;
const UNIT_TOL: f64 = 1e-9;
const PARAM_TOL: f64 = 1e-12;
const POSITIVITY_STARTS: usize = 32;
const GRID_SIDE: usize = 100;
const HAAR_MC_POINTS: usize = 100_000;
/// Fixed seed for the deterministic probe directions.
const PROBE_SEED: u64 = 0x50d;

pub fn check_dim(d: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::arg("d", format!("{d} is outside [{MIN_DIM}, {MAX_DIM}]")))
    }
}

fn check_unit(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::arg("x", format!("expected {d} components, got {}", x.len())));
    }
    let n = norm(x);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::arg("x", format!("norm {n} is not 1")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axis(d: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = sign;
    v
}

pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `±e_i` plus `2d` fixed pseudo-random directions.
pub fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..d).flat_map(|i| [axis(d, i, 1.0), axis(d, i, -1.0)]).collect();
    let mut r = rng::stream(PROBE_SEED, d as u64);
    out.extend((0..2 * d).map(|_| random_unit(&mut r, d)));
    out
}

/// Single-party box `P(a | x) = c₀ᵃ + cᵃ·x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineBox {
    pub d: usize,
    pub constants: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl AffineBox {
    pub fn new(constants: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let b = Self::unchecked(constants, vectors)?;
        b.validate()?;
        Ok(b)
    }

    fn unchecked(constants: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if constants.is_empty() || constants.len() != vectors.len() {
            return Err(Error::arg("constants", "need one constant and one vector per outcome"));
        }
        let d = vectors[0].len();
        check_dim(d)?;
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::arg("vectors", "all vectors must have the same dimension"));
        }
        Ok(AffineBox { d, constants, vectors })
    }

    /// Binary box with constants `½` and vectors `±v`.
    pub fn unbiased_binary(v: Vec<f64>) -> Result<Self> {
        let neg = v.iter().map(|x| -x).collect();
        AffineBox::new(vec![0.5, 0.5], vec![v, neg])
    }

    pub fn uniform(d: usize, outcomes: usize) -> Result<Self> {
        AffineBox::new(vec![1.0 / outcomes as f64; outcomes], vec![vec![0.0; d]; outcomes])
    }

    /// Normalization and the pointwise bounds that keep every probability in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.constants.iter().sum();
        if (sum - 1.0).abs() > PARAM_TOL {
            return Err(Error::NotNormalized { residual: (sum - 1.0).abs() });
        }
        let vsum = (0..self.d)
            .map(|i| self.vectors.iter().map(|v| v[i]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if vsum > PARAM_TOL {
            return Err(Error::NotNormalized { residual: vsum });
        }
        for (c0, v) in self.constants.iter().zip(&self.vectors) {
            let slack = c0.min(1.0 - c0) - norm(v);
            if *c0 < -PARAM_TOL || slack < -PARAM_TOL {
                return Err(Error::NegativeProbability { min: slack.min(*c0) });
            }
        }
        Ok(())
    }

    pub fn outcomes(&self) -> usize {
        self.constants.len()
    }

    pub fn prob_unchecked(&self, a: usize, x: &[f64]) -> f64 {
        self.constants[a] + dot(&self.vectors[a], x)
    }
}

/// `c₀ᵃ + cᵃ·x` for a unit `x`.
pub fn evaluate_affine(b: &AffineBox, a: usize, x: &[f64]) -> Result<f64> {
    check_unit(x, b.d)?;
    if a >= b.outcomes() {
        return Err(Error::arg("a", format!("outcome {a} out of range")));
    }
    Ok(b.prob_unchecked(a, x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineFit {
    pub affine: AffineBox,
    /// Largest per-outcome RMS residual.
    pub residual: f64,
    pub transforms_fundamentally: bool,
}

/// Least-squares fit of `P(a | x)` on the design `[1, x]`.
pub fn fit_affine(samples: &[(Vec<f64>, Vec<f64>)], d: usize) -> Result<AffineFit> {
    check_dim(d)?;
    let k = samples.first().map_or(0, |s| s.1.len());
    if k == 0 || samples.iter().any(|s| s.1.len() != k) {
        return Err(Error::arg("samples", "every sample needs the same non-empty outcome list"));
    }
    for (x, _) in samples {
        check_unit(x, d)?;
    }
    let design = DMatrix::from_fn(samples.len(), d + 1, |i, j| if j == 0 { 1.0 } else { samples[i].0[j - 1] });
    let rhs = DMatrix::from_fn(samples.len(), k, |i, a| samples[i].1[a]);
    let sol = linalg::least_squares(&design, &rhs)?;
    let mut residual = 0.0f64;
    for a in 0..k {
        let col = sol.column(a).into_owned();
        residual = residual.max(linalg::rms_residual(&design, &col, &rhs.column(a).into_owned()));
    }
    let constants = (0..k).map(|a| sol[(0, a)]).collect();
    let vectors = (0..k).map(|a| (1..=d).map(|j| sol[(j, a)]).collect()).collect();
    Ok(AffineFit {
        affine: AffineBox::unchecked(constants, vectors)?,
        residual,
        transforms_fundamentally: residual < tol::AFFINE_RESIDUAL,
    })
}

/// A bipartite binary-outcome box with unit-vector inputs.
pub trait SoDBox: Sync {
    fn dim(&self) -> usize;
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64;

    fn correlation(&self, x: &[f64], y: &[f64]) -> f64 {
        Outcome::BOTH
            .iter()
            .flat_map(|&a| Outcome::BOTH.map(|b| a.sign() * b.sign() * self.prob(a, b, x, y)))
            .sum()
    }
}

impl<T: SoDBox + ?Sized> SoDBox for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        (**self).prob(a, b, x, y)
    }
}

impl<T: SoDBox + ?Sized> SoDBox for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        (**self).prob(a, b, x, y)
    }
}

impl SoDBox for QubitSodBox {
    fn dim(&self) -> usize {
        self.d
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        QubitSodBox::prob(self, a, b, x, y)
    }
}

/// Independent binary affine boxes on each side.
#[derive(Debug, Clone)]
pub struct ProductBox {
    pub alice: AffineBox,
    pub bob: AffineBox,
}

impl ProductBox {
    pub fn new(alice: AffineBox, bob: AffineBox) -> Result<Self> {
        if alice.outcomes() != 2 || bob.outcomes() != 2 || alice.d != bob.d {
            return Err(Error::arg("boxes", "need two binary boxes of equal dimension"));
        }
        Ok(ProductBox { alice, bob })
    }
}

fn idx(o: Outcome) -> usize {
    match o {
        Outcome::Plus => 0,
        Outcome::Minus => 1,
    }
}

impl SoDBox for ProductBox {
    fn dim(&self) -> usize {
        self.alice.d
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        self.alice.prob_unchecked(idx(a), x) * self.bob.prob_unchecked(idx(b), y)
    }
}

fn party_prob<B: SoDBox + ?Sized>(bx: &B, free: Party, a: Outcome, b: Outcome, free_in: &[f64], cond_in: &[f64]) -> f64 {
    match free {
        Party::A => bx.prob(a, b, free_in, cond_in),
        Party::B => bx.prob(b, a, cond_in, free_in),
    }
}

/// Outcome of probing every conditional box on the probe grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalReport {
    pub passed: bool,
    /// Largest affine residual (for the affine check) or `|c₀⁺ − c₀⁻|` (for unbiasedness).
    pub worst: f64,
    pub worst_at: Option<ConditioningPoint>,
    /// Conditionings skipped because their marginal fell below the floor.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningPoint {
    pub free_party: Party,
    pub outcome: Outcome,
    pub input: Vec<f64>,
}

fn scan_conditionals<B, F>(bx: &B, tolerance: f64, measure: F) -> Result<ConditionalReport>
where
    B: SoDBox + ?Sized,
    F: Fn(&AffineFit) -> f64,
{
    let d = bx.dim();
    check_dim(d)?;
    let probes = probe_directions(d);
    let mut worst = 0.0f64;
    let mut worst_at = None;
    let mut skipped = 0;
    let mut seen = 0;
    for free in [Party::A, Party::B] {
        for cond in Outcome::BOTH {
            for y in &probes {
                let marginal: f64 = Outcome::BOTH
                    .iter()
                    .map(|&a| party_prob(bx, free, a, cond, &probes[0], y))
                    .sum();
                if marginal <= tol::CONDITIONAL_FLOOR {
                    skipped += 1;
                    continue;
                }
                seen += 1;
                let samples: Vec<(Vec<f64>, Vec<f64>)> = probes
                    .iter()
                    .map(|x| {
                        let p = Outcome::BOTH.map(|a| party_prob(bx, free, a, cond, x, y) / marginal);
                        (x.clone(), p.to_vec())
                    })
                    .collect();
                let fit = fit_affine(&samples, d)?;
                let m = measure(&fit);
                if m > worst || worst_at.is_none() {
                    worst = worst.max(m);
                    worst_at = Some(ConditioningPoint {
                        free_party: free,
                        outcome: cond,
                        input: y.clone(),
                    });
                }
            }
        }
    }
    if seen == 0 {
        return Err(Error::UndefinedConditional {
            marginal: 0.0,
            threshold: tol::CONDITIONAL_FLOOR,
        });
    }
    Ok(ConditionalReport {
        passed: worst <= tolerance,
        worst,
        worst_at,
        skipped,
    })
}

/// Every conditional single-party box is affine in its input.
pub fn check_transforms_fundamentally<B: SoDBox + ?Sized>(bx: &B) -> Result<ConditionalReport> {
    scan_conditionals(bx, tol::AFFINE_RESIDUAL, |f| f.residual)
}

/// Fitted conditional constants agree across outcomes.
pub fn check_locally_unbiased<B: SoDBox + ?Sized>(bx: &B, tolerance: f64) -> Result<ConditionalReport> {
    scan_conditionals(bx, tolerance, |f| {
        let c = &f.affine.constants;
        c.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)) - c.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    })
}

/// Marginal independence from the other party's input at random direction pairs.
pub fn check_no_signalling<B: SoDBox + ?Sized>(bx: &B, pairs: usize, seed: u64) -> NoSignallingReport {
    let d = bx.dim();
    let mut r = rng::stream(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (x, y1, y2) = (random_unit(&mut r, d), random_unit(&mut r, d), random_unit(&mut r, d));
        for free in [Party::A, Party::B] {
            for a in Outcome::BOTH {
                let m1: f64 = Outcome::BOTH.iter().map(|&b| party_prob(bx, free, a, b, &x, &y1)).sum();
                let m2: f64 = Outcome::BOTH.iter().map(|&b| party_prob(bx, free, a, b, &x, &y2)).sum();
                worst = worst.max((m1 - m2).abs());
            }
        }
    }
    NoSignallingReport {
        passed: worst <= tol::COEFF_EQ,
        worst,
    }
}

/// `P(a, b | x, y) = (1, a x)ᵀ Ω (1, b y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaForm {
    pub d: usize,
    pub omega: DMatrix<f64>,
}

impl OmegaForm {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() || omega.nrows() < 1 {
            return Err(Error::arg("omega", "must be square"));
        }
        let d = omega.nrows() - 1;
        check_dim(d)?;
        Ok(OmegaForm { d, omega })
    }

    /// `Ω(e, f)` for arbitrary cone vectors `e = (1, x)`, `f = (1, y)`.
    pub fn ray_value(&self, x: &[f64], y: &[f64]) -> f64 {
        let e = lift(x, 1.0);
        let f = lift(y, 1.0);
        (e.transpose() * &self.omega * f)[(0, 0)]
    }

    /// `uᵀΩu` with `u = (2, 0, …, 0)`.
    pub fn unit_value(&self) -> f64 {
        4.0 * self.omega[(0, 0)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.omega.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

fn lift(x: &[f64], sign: f64) -> DVector<f64> {
    DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().map(|v| sign * v)))
}

impl SoDBox for OmegaForm {
    fn dim(&self) -> usize {
        self.d
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        let e = lift(x, a.sign());
        let f = lift(y, b.sign());
        (e.transpose() * &self.omega * f)[(0, 0)]
    }
}

pub fn box_from_omega(omega: &OmegaForm) -> &dyn SoDBox {
    omega
}

/// Solves `P(+, +| p_i, q_j) = v_iᵀ Ω w_j` on the probe basis
/// `{e₁, …, e_d, −e₁}` without checking any premise.
pub fn probe_omega<B: SoDBox + ?Sized>(bx: &B) -> Result<OmegaForm> {
    let d = bx.dim();
    check_dim(d)?;
    let mut probes: Vec<Vec<f64>> = (0..d).map(|i| axis(d, i, 1.0)).collect();
    probes.push(axis(d, 0, -1.0));
    let v = DMatrix::from_fn(d + 1, d + 1, |i, j| if j == 0 { 1.0 } else { probes[i][j - 1] });
    let p = DMatrix::from_fn(d + 1, d + 1, |i, j| bx.prob(Outcome::Plus, Outcome::Plus, &probes[i], &probes[j]));
    let vinv = v.try_inverse().ok_or(Error::Degenerate { rank: 0, needed: d + 1 })?;
    OmegaForm::new(&vinv * p * vinv.transpose())
}

/// `Ω` of a box after confirming it is locally affine and locally unbiased.
pub fn omega_from_box<B: SoDBox + ?Sized>(bx: &B) -> Result<OmegaForm> {
    let affine = check_transforms_fundamentally(bx)?;
    if !affine.passed {
        return Err(Error::PremiseFailed(format!(
            "a conditional box is not affine (residual {:e})",
            affine.worst
        )));
    }
    let unbiased = check_locally_unbiased(bx, tol::AFFINE_RESIDUAL)?;
    if !unbiased.passed {
        return Err(Error::PremiseFailed(format!(
            "a conditional box is biased (constant spread {:e})",
            unbiased.worst
        )));
    }
    probe_omega(bx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub unital_value: f64,
    pub unital: bool,
    /// Smallest ray value found by either search.
    pub min_value: f64,
    pub argmin_x: Vec<f64>,
    pub argmin_y: Vec<f64>,
    pub alternating_min: f64,
    pub grid_min: f64,
    pub positive: bool,
    pub passed: bool,
}

/// For fixed `y` the form is `c + g·x`, minimized over the sphere at `x = −g/|g|`.
fn sphere_argmin(c: f64, g: &[f64]) -> (Vec<f64>, f64) {
    let n = norm(g);
    if n < 1e-300 {
        let mut x = vec![0.0; g.len()];
        x[0] = 1.0;
        return (x, c);
    }
    (g.iter().map(|v| -v / n).collect(), c - n)
}

fn alternate_from(omega: &OmegaForm, mut y: Vec<f64>) -> (f64, Vec<f64>, Vec<f64>) {
    let w = &omega.omega;
    let d = omega.d;
    let mut best = f64::INFINITY;
    let mut x = vec![0.0; d];
    for _ in 0..500 {
        let fy = w * lift(&y, 1.0);
        let (nx, _) = sphere_argmin(fy[0], &fy.as_slice()[1..]);
        x = nx;
        let ex = w.transpose() * lift(&x, 1.0);
        let (ny, val) = sphere_argmin(ex[0], &ex.as_slice()[1..]);
        y = ny;
        if val > best - 1e-15 {
            best = best.min(val);
            break;
        }
        best = val;
    }
    (best, x, y)
}

/// Unitality plus cone positivity via alternating sphere minimization from
/// 32 starts, cross-checked on a 100 × 100 direction grid.
pub fn check_unital_positive(omega: &OmegaForm, seed: u64) -> PositivityReport {
    let d = omega.d;
    let unital_value = omega.unit_value();
    let unital = (unital_value - 1.0).abs() <= tol::AFFINE_RESIDUAL;

    let starts: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..POSITIVITY_STARTS)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            alternate_from(omega, random_unit(&mut r, d))
        })
        .collect();
    let (alternating_min, mut ax, mut ay) = starts
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");

    let grid: Vec<Vec<f64>> = if d == 2 {
        (0..GRID_SIDE)
            .map(|i| {
                let t = TAU * i as f64 / GRID_SIDE as f64;
                vec![t.cos(), t.sin()]
            })
            .collect()
    } else {
        let mut r = rng::stream(seed, POSITIVITY_STARTS as u64);
        (0..GRID_SIDE).map(|_| random_unit(&mut r, d)).collect()
    };
    let mut grid_min = f64::INFINITY;
    let mut gx = grid[0].clone();
    let mut gy = grid[0].clone();
    for x in &grid {
        for y in &grid {
            let v = omega.ray_value(x, y);
            if v < grid_min {
                grid_min = v;
                gx = x.clone();
                gy = y.clone();
            }
        }
    }
    let min_value = alternating_min.min(grid_min);
    if grid_min < alternating_min {
        ax = gx;
        ay = gy;
    }
    let positive = min_value >= -tol::POSITIVITY;
    PositivityReport {
        unital_value,
        unital,
        min_value,
        argmin_x: ax,
        argmin_y: ay,
        alternating_min,
        grid_min,
        positive,
        passed: unital && positive,
    }
}

/// A `(2,2,2)` behaviour indexed `[r][t][a][b]`, outcome index 0 for `+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Behaviour222 {
    pub table: [[[[f64; 2]; 2]; 2]; 2],
}

impl Behaviour222 {
    pub fn new(table: [[[[f64; 2]; 2]; 2]; 2]) -> Result<Self> {
        let b = Behaviour222 { table };
        for r in 0..2 {
            for t in 0..2 {
                let cell = &table[r][t];
                let sum: f64 = cell.iter().flatten().sum();
                if (sum - 1.0).abs() > tol::COEFF_EQ {
                    return Err(Error::NotNormalized { residual: (sum - 1.0).abs() });
                }
                if let Some(&min) = cell.iter().flatten().find(|&&p| p < -tol::NONNEG_SLACK) {
                    return Err(Error::NegativeProbability { min });
                }
            }
        }
        let mut worst = 0.0f64;
        for o in 0..2 {
            for r in 0..2 {
                let m: [f64; 2] = std::array::from_fn(|t| table[r][t][o].iter().sum());
                worst = worst.max((m[0] - m[1]).abs());
            }
            for t in 0..2 {
                let m: [f64; 2] = std::array::from_fn(|r| table[r][t][0][o] + table[r][t][1][o]);
                worst = worst.max((m[0] - m[1]).abs());
            }
        }
        if worst > tol::COEFF_EQ {
            return Err(Error::Signalling { residual: worst });
        }
        Ok(b)
    }

    /// `P(a, b | r, t) = ½` iff `a ⊕ b = r·t`.
    pub fn pr_box() -> Self {
        let table = std::array::from_fn(|r| {
            std::array::from_fn(|t| std::array::from_fn(|a| std::array::from_fn(|b| if (a ^ b) == (r & t) { 0.5 } else { 0.0 })))
        });
        Behaviour222 { table }
    }

    /// Outcomes fixed by the local inputs.
    pub fn deterministic(alice: [Outcome; 2], bob: [Outcome; 2]) -> Self {
        let table = std::array::from_fn(|r| {
            std::array::from_fn(|t| {
                std::array::from_fn(|a| std::array::from_fn(|b| f64::from(a == idx(alice[r]) && b == idx(bob[t]))))
            })
        });
        Behaviour222 { table }
    }

    pub fn prob(&self, a: Outcome, b: Outcome, r: usize, t: usize) -> f64 {
        self.table[r][t][idx(a)][idx(b)]
    }

    pub fn correlator(&self, r: usize, t: usize) -> f64 {
        let c = &self.table[r][t];
        c[0][0] + c[1][1] - c[0][1] - c[1][0]
    }

    /// `E₀₀ + E₀₁ + E₁₀ − E₁₁`.
    pub fn chsh(&self) -> f64 {
        self.correlator(0, 0) + self.correlator(0, 1) + self.correlator(1, 0) - self.correlator(1, 1)
    }
}

/// Interpolates `P₀` between the inputs `x₀ = e₁` and `x₁ = −e₁` with
/// weights `λ = ½(1 + x₁)` and `1 − λ` on each side.
#[derive(Debug, Clone)]
pub struct PrEmbedding {
    pub base: Behaviour222,
    pub d: usize,
}

pub fn pr_box_embedding(base: Behaviour222, d: usize) -> Result<PrEmbedding> {
    check_dim(d)?;
    let base = Behaviour222::new(base.table)?;
    Ok(PrEmbedding { base, d })
}

impl SoDBox for PrEmbedding {
    fn dim(&self) -> usize {
        self.d
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        let la = 0.5 * (1.0 + x[0]);
        let lb = 0.5 * (1.0 + y[0]);
        let wa = [la, 1.0 - la];
        let wb = [lb, 1.0 - lb];
        (0..2)
            .flat_map(|r| (0..2).map(move |t| (r, t)))
            .map(|(r, t)| wa[r] * wb[t] * self.base.prob(a, b, r, t))
            .sum()
    }
}

/// `E(a₁,b₂) + E(a₃,b₂) + E(a₃,b₄) − E(a₁,b₄)` for vector inputs.
pub fn chsh_vectors<B: SoDBox + ?Sized>(bx: &B, a1: &[f64], b2: &[f64], a3: &[f64], b4: &[f64]) -> f64 {
    bx.correlation(a1, b2) + bx.correlation(a3, b2) + bx.correlation(a3, b4) - bx.correlation(a1, b4)
}

/// Pointwise mixture `Σ w_k P_k`.
pub struct ConvexMix<'a> {
    d: usize,
    parts: Vec<(f64, Box<dyn SoDBox + 'a>)>,
}

pub fn convex_mix<'a>(parts: Vec<(f64, Box<dyn SoDBox + 'a>)>) -> Result<ConvexMix<'a>> {
    let d = parts
        .first()
        .map(|p| p.1.dim())
        .ok_or_else(|| Error::arg("boxes", "need at least one box"))?;
    if parts.iter().any(|p| p.1.dim() != d) {
        return Err(Error::arg("boxes", "dimensions differ"));
    }
    if parts.iter().any(|p| !(p.0 >= 0.0)) {
        return Err(Error::arg("weights", "must be nonnegative"));
    }
    let total: f64 = parts.iter().map(|p| p.0).sum();
    if (total - 1.0).abs() > PARAM_TOL {
        return Err(Error::arg("weights", format!("sum to {total}, not 1")));
    }
    Ok(ConvexMix { d, parts })
}

impl SoDBox for ConvexMix<'_> {
    fn dim(&self) -> usize {
        self.d
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        self.parts.iter().map(|(w, bx)| w * bx.prob(a, b, x, y)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HaarAverage {
    pub value: f64,
    /// Zero for the fixed quadrature rules.
    pub stderr: f64,
}

/// Gauss-Legendre nodes and weights on `[−1, 1]` from the Jacobi matrix.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Average of `f` over the unit sphere in `R^d`: a uniform rule on the
/// circle, Gauss-Legendre in `z` times a uniform rule in azimuth on `S²`,
/// and Monte Carlo with `10⁵` normalized Gaussian vectors beyond.
pub fn haar_average<F: Fn(&[f64]) -> f64 + Sync>(f: F, d: usize, seed: u64) -> Result<HaarAverage> {
    check_dim(d)?;
    match d {
        2 => {
            let n = tol::GRID_PER_AXIS;
            let s: f64 = (0..n)
                .map(|i| {
                    let t = TAU * i as f64 / n as f64;
                    f(&[t.cos(), t.sin()])
                })
                .sum();
            Ok(HaarAverage { value: s / n as f64, stderr: 0.0 })
        }
        3 => {
            let nz = 48;
            let nphi = 96;
            let mut s = 0.0;
            for (z, w) in gauss_legendre(nz) {
                let rho = (1.0 - z * z).sqrt();
                let ring: f64 = (0..nphi)
                    .map(|k| {
                        let p = TAU * k as f64 / nphi as f64;
                        f(&[rho * p.cos(), rho * p.sin(), z])
                    })
                    .sum();
                s += w * ring / nphi as f64;
            }
            Ok(HaarAverage { value: s / 2.0, stderr: 0.0 })
        }
        _ => {
            let parts = rng::chunked(seed, HAAR_MC_POINTS, |r, count| {
                let mut s = 0.0;
                let mut s2 = 0.0;
                for _ in 0..count {
                    let v = f(&random_unit(r, d));
                    s += v;
                    s2 += v * v;
                }
                (s, s2)
            });
            let (s, s2) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
            let n = HAAR_MC_POINTS as f64;
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            Ok(HaarAverage { value: mean, stderr: (var / n).sqrt() })
        }
    }
}

/// One sampled row `(x, y, P(++), P(+−), P(−+), P(−−))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: [f64; 4],
}

/// A box fitted as `P(a, b | x, y) = (1, x)ᵀ G_ab (1, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearBox {
    pub d: usize,
    /// Blocks in the order `++, +−, −+, −−`.
    pub blocks: [DMatrix<f64>; 4],
}

impl SoDBox for BilinearBox {
    fn dim(&self) -> usize {
        self.d
    }
    fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        let g = &self.blocks[2 * idx(a) + idx(b)];
        (lift(x, 1.0).transpose() * g * lift(y, 1.0))[(0, 0)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearFit {
    pub fitted: BilinearBox,
    pub residual: f64,
}

/// Least squares on the `(d+1)²` products of `(1, x)` and `(1, y)`.
pub fn fit_bilinear(rows: &[SampleRow], d: usize) -> Result<BilinearFit> {
    check_dim(d)?;
    for r in rows {
        check_unit(&r.x, d)?;
        check_unit(&r.y, d)?;
    }
    let k = d + 1;
    let design = DMatrix::from_fn(rows.len(), k * k, |i, j| {
        let (p, q) = (j / k, j % k);
        let xp = if p == 0 { 1.0 } else { rows[i].x[p - 1] };
        let yq = if q == 0 { 1.0 } else { rows[i].y[q - 1] };
        xp * yq
    });
    let rhs = DMatrix::from_fn(rows.len(), 4, |i, o| rows[i].p[o]);
    let sol = linalg::least_squares(&design, &rhs)?;
    let mut residual = 0.0f64;
    for o in 0..4 {
        residual = residual.max(linalg::rms_residual(&design, &sol.column(o).into_owned(), &rhs.column(o).into_owned()));
    }
    let blocks = std::array::from_fn(|o| DMatrix::from_fn(k, k, |p, q| sol[(p * k + q, o)]));
    Ok(BilinearFit {
        fitted: BilinearBox { d, blocks },
        residual,
    })
}

/// Certificate for a sampled box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCertificate {
    pub d: usize,
    pub samples: usize,
    pub affine_residual: f64,
    pub transforms_fundamentally: bool,
    pub unbiased: bool,
    pub unbiased_worst: f64,
    pub unital: bool,
    pub unital_value: f64,
    pub positivity_min: f64,
    pub omega: Vec<Vec<f64>>,
}

impl SampleCertificate {
    pub fn passed(&self) -> bool {
        self.transforms_fundamentally && self.unbiased && self.unital && self.positivity_min >= -tol::POSITIVITY
    }
}

/// Fits the sampled rows and runs the unbiasedness, unitality and
/// positivity checks on the fitted box.
pub fn certify_samples(rows: &[SampleRow], d: usize, unbiased_tol: f64, seed: u64) -> Result<SampleCertificate> {
    let fit = fit_bilinear(rows, d)?;
    let unbiased = check_locally_unbiased(&fit.fitted, unbiased_tol)?;
    let omega = probe_omega(&fit.fitted)?;
    let pos = check_unital_positive(&omega, seed);
    Ok(SampleCertificate {
        d,
        samples: rows.len(),
        affine_residual: fit.residual,
        transforms_fundamentally: fit.residual < tol::AFFINE_RESIDUAL,
        unbiased: unbiased.passed,
        unbiased_worst: unbiased.worst,
        unital: pos.unital,
        unital_value: pos.unital_value,
        positivity_min: pos.min_value,
        omega: omega.rows(),
    })
}

/// Samples `bx` at `count` random direction pairs.
pub fn sample_rows<B: SoDBox + ?Sized>(bx: &B, count: usize, seed: u64) -> Vec<SampleRow> {
    let d = bx.dim();
    let mut r = rng::stream(seed, 0);
    (0..count)
        .map(|_| {
            let (x, y) = (random_unit(&mut r, d), random_unit(&mut r, d));
            let p = [(Outcome::Plus, Outcome::Plus), (Outcome::Plus, Outcome::Minus), (Outcome::Minus, Outcome::Plus), (Outcome::Minus, Outcome::Minus)]
                .map(|(a, b)| bx.prob(a, b, &x, &y));
            SampleRow { x, y, p }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{werner_state, TwoQubitState};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Outcome::{Minus, Plus};

    fn singlet(d: usize) -> QubitSodBox {
        QubitSodBox::new(werner_state(1.0).unwrap(), d).unwrap()
    }

    fn random_affine(r: &mut ChaCha8Rng, d: usize) -> AffineBox {
        let c0: f64 = r.random_range(0.0..1.0);
        let len = r.random_range(0.0..=c0.min(1.0 - c0));
        let v: Vec<f64> = random_unit(r, d).into_iter().map(|x| x * len).collect();
        let neg = v.iter().map(|x| -x).collect();
        AffineBox::new(vec![c0, 1.0 - c0], vec![v, neg]).unwrap()
    }

    #[test]
    fn affine_examples() {
        let b = AffineBox::unbiased_binary(axis(3, 0, 0.5)).unwrap();
        assert_eq!(evaluate_affine(&b, 0, &axis(3, 0, 1.0)).unwrap(), 1.0);
        assert_eq!(evaluate_affine(&b, 0, &axis(3, 1, 1.0)).unwrap(), 0.5);
        assert!(evaluate_affine(&b, 0, &[1.0, 1.0, 0.0]).is_err());
        let h = haar_average(|x| b.prob_unchecked(0, x), 3, 0).unwrap();
        assert_abs_diff_eq!(h.value, 0.5, epsilon = 1e-12);
        assert!(AffineBox::unbiased_binary(axis(3, 0, 0.6)).is_err());
        assert!(AffineBox::new(vec![0.5, 0.6], vec![vec![0.0; 2]; 2]).is_err());
    }

    #[test]
    fn random_affine_boxes_stay_in_unit_interval() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for k in 0..20 {
            let d = 2 + k % 6;
            let b = random_affine(&mut r, d);
            for _ in 0..1000 {
                let x = random_unit(&mut r, d);
                for a in 0..2 {
                    let p = evaluate_affine(&b, a, &x).unwrap();
                    assert!((-1e-12..=1.0 + 1e-12).contains(&p));
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(10);
        let w: f64 = rule.iter().map(|p| p.1).sum();
        assert_abs_diff_eq!(w, 2.0, epsilon = 1e-13);
        let x18: f64 = rule.iter().map(|(x, w)| w * x.powi(18)).sum();
        assert_abs_diff_eq!(x18, 2.0 / 19.0, epsilon = 1e-13);
    }

    #[test]
    fn haar_moments() {
        // E[x₁²] = 1/d on S^{d−1}.
        for d in [2, 3, 5, 8] {
            let h = haar_average(|x| x[0] * x[0], d, 7).unwrap();
            let tol = if d <= 3 { 1e-12 } else { 5.0 * h.stderr };
            assert_abs_diff_eq!(h.value, 1.0 / d as f64, epsilon = tol);
        }
        let h = haar_average(|x| x[2].powi(4), 3, 0).unwrap();
        assert_abs_diff_eq!(h.value, 0.2, epsilon = 1e-12);
        assert!(haar_average(|_| 0.0, 17, 0).is_err());
    }

    #[test]
    fn fit_affine_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let b = singlet(3);
        let y = random_unit(&mut r, 3);
        let samples: Vec<_> = (0..20)
            .map(|_| {
                let x = random_unit(&mut r, 3);
                let p = Outcome::BOTH.map(|a| 2.0 * b.prob(a, Plus, &x, &y));
                (x, p.to_vec())
            })
            .collect();
        let fit = fit_affine(&samples, 3).unwrap();
        assert!(fit.residual < 1e-10 && fit.transforms_fundamentally);

        let quad: Vec<_> = (0..30)
            .map(|_| {
                let x = random_unit(&mut r, 3);
                let p = 0.5 + 0.5 * x[0] * x[0];
                (x, vec![p, 1.0 - p])
            })
            .collect();
        let fit = fit_affine(&quad, 3).unwrap();
        assert!(fit.residual > 1e-3 && !fit.transforms_fundamentally);

        let constant: Vec<_> = (0..10).map(|_| (random_unit(&mut r, 4), vec![0.3, 0.7])).collect();
        let fit = fit_affine(&constant, 4).unwrap();
        assert!(fit.residual < 1e-15);
        assert!(fit.affine.vectors.iter().flatten().all(|v| v.abs() < 1e-14));

        let clustered: Vec<_> = (0..10).map(|_| (axis(3, 0, 1.0), vec![0.5, 0.5])).collect();
        assert!(matches!(fit_affine(&clustered, 3), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn unbiasedness_examples() {
        for p in [0.0, 0.4, 1.0] {
            let b = QubitSodBox::new(werner_state(p).unwrap(), 3).unwrap();
            assert!(check_locally_unbiased(&b, 1e-10).unwrap().passed);
        }
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let prod = ProductBox::new(
            AffineBox::unbiased_binary(axis(4, 1, 0.3)).unwrap(),
            AffineBox::unbiased_binary(axis(4, 2, 0.5)).unwrap(),
        )
        .unwrap();
        assert!(check_locally_unbiased(&prod, 1e-10).unwrap().passed);
        let biased = ProductBox::new(random_affine(&mut r, 4), AffineBox::new(vec![0.2, 0.8], vec![vec![0.0; 4]; 2]).unwrap()).unwrap();
        assert!(!check_locally_unbiased(&biased, 1e-10).unwrap().passed);
        let pr = pr_box_embedding(Behaviour222::pr_box(), 3).unwrap();
        let rep = check_locally_unbiased(&pr, 1e-10).unwrap();
        assert!(!rep.passed);
        assert!(rep.worst > 0.1);
    }

    #[test]
    fn omega_examples() {
        let uniform = ProductBox::new(AffineBox::uniform(3, 2).unwrap(), AffineBox::uniform(3, 2).unwrap()).unwrap();
        let om = omega_from_box(&uniform).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(0, 0)] = 0.25;
        assert_abs_diff_eq!((om.omega.clone() - expected).amax(), 0.0, epsilon = 1e-15);

        let om = omega_from_box(&singlet(3)).unwrap();
        let mut expected = DMatrix::identity(4, 4) * -0.25;
        expected[(0, 0)] = 0.25;
        assert_abs_diff_eq!((om.omega.clone() - expected).amax(), 0.0, epsilon = 1e-15);
        let rep = check_unital_positive(&om, 0);
        assert!(rep.passed);
        assert_abs_diff_eq!(rep.min_value, 0.0, epsilon = 1e-9);

        let pr = pr_box_embedding(Behaviour222::pr_box(), 3).unwrap();
        assert!(matches!(omega_from_box(&pr), Err(Error::PremiseFailed(_))));
        let raw = probe_omega(&pr).unwrap();
        assert!(check_unital_positive(&raw, 1).positive);
    }

    #[test]
    fn omega_round_trip() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for d in [2, 3, 6] {
            let b = QubitSodBox::new(TwoQubitState::random_pure(&mut r), d).unwrap();
            let om = omega_from_box(&b).unwrap();
            let back = box_from_omega(&om);
            for _ in 0..100 {
                let (x, y) = (random_unit(&mut r, d), random_unit(&mut r, d));
                for a in Outcome::BOTH {
                    for bb in Outcome::BOTH {
                        assert_abs_diff_eq!(back.prob(a, bb, &x, &y), b.prob(a, bb, &x, &y), epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn negative_ray_is_located() {
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 0)] = 0.25;
        w[(1, 1)] = 0.5;
        let om = OmegaForm::new(w).unwrap();
        let rep = check_unital_positive(&om, 2);
        assert!(rep.unital && !rep.positive && !rep.passed);
        assert_abs_diff_eq!(rep.min_value, -0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.argmin_x[0] * rep.argmin_y[0], -1.0, epsilon = 1e-6);
        assert!(rep.grid_min >= rep.alternating_min - 1e-12);
    }

    #[test]
    fn pr_embedding_examples() {
        let pr = pr_box_embedding(Behaviour222::pr_box(), 3).unwrap();
        let (e, m) = (axis(3, 0, 1.0), axis(3, 0, -1.0));
        assert_abs_diff_eq!(chsh_vectors(&pr, &m, &e, &e, &m), 4.0, epsilon = 1e-15);
        for (r, x) in [(0, &e), (1, &m)] {
            for (t, y) in [(0, &e), (1, &m)] {
                for a in Outcome::BOTH {
                    for b in Outcome::BOTH {
                        assert_eq!(pr.prob(a, b, x, y), Behaviour222::pr_box().prob(a, b, r, t));
                    }
                }
            }
        }
        let det = pr_box_embedding(Behaviour222::deterministic([Plus, Plus], [Plus, Minus]), 3).unwrap();
        assert_abs_diff_eq!(chsh_vectors(&det, &m, &e, &e, &m).abs(), 2.0, epsilon = 1e-15);
        assert!(check_no_signalling(&pr, 100, 5).passed);
        let aff = check_transforms_fundamentally(&pr).unwrap();
        assert!(aff.passed, "residual {}", aff.worst);
        let mut bad = Behaviour222::pr_box().table;
        bad[0][0][0][0] = 0.7;
        bad[0][0][1][1] = 0.3;
        bad[0][0][0][1] = 0.0;
        assert!(pr_box_embedding(Behaviour222 { table: bad }, 3).is_err());
    }

    #[test]
    fn convex_mix_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let q1 = QubitSodBox::new(TwoQubitState::random_pure(&mut r), 3).unwrap();
        let q2 = QubitSodBox::new(TwoQubitState::random_pure(&mut r), 3).unwrap();
        let mix = convex_mix(vec![(0.3, Box::new(q1.clone())), (0.7, Box::new(q2))]).unwrap();
        assert!(check_transforms_fundamentally(&mix).unwrap().passed);
        assert!(check_locally_unbiased(&mix, 1e-10).unwrap().passed);

        let pr = pr_box_embedding(Behaviour222::pr_box(), 3).unwrap();
        let first = convex_mix(vec![(1.0, Box::new(q1.clone())), (0.0, Box::new(pr.clone()))]).unwrap();
        let (x, y) = (random_unit(&mut r, 3), random_unit(&mut r, 3));
        assert_eq!(first.prob(Plus, Minus, &x, &y), q1.prob(Plus, Minus, &x, &y));

        let half = convex_mix(vec![(0.5, Box::new(q1)), (0.5, Box::new(pr))]).unwrap();
        assert!(!check_locally_unbiased(&half, 1e-10).unwrap().passed);
        assert!(convex_mix(vec![(0.6, Box::new(singlet(3))), (0.6, Box::new(singlet(3)))]).is_err());
        assert!(convex_mix(vec![(1.0, Box::new(singlet(3))), (0.0, Box::new(singlet(2)))]).is_err());
    }

    #[test]
    fn quantum_premise_pipeline() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        for k in 0..10 {
            let b = QubitSodBox::new(TwoQubitState::random_pure(&mut r), 2 + k % 4).unwrap();
            assert!(check_transforms_fundamentally(&b).unwrap().passed);
            assert!(check_locally_unbiased(&b, 1e-10).unwrap().passed);
            let rep = check_unital_positive(&omega_from_box(&b).unwrap(), k as u64);
            assert!(rep.passed, "min {}", rep.min_value);
        }
    }

    #[test]
    fn sampled_certificate() {
        let b = QubitSodBox::new(werner_state(0.9).unwrap(), 3).unwrap();
        let cert = certify_samples(&sample_rows(&b, 64, 1), 3, 1e-10, 0).unwrap();
        assert!(cert.passed(), "{cert:?}");
        assert_abs_diff_eq!(cert.unital_value, 1.0, epsilon = 1e-10);

        let pr = pr_box_embedding(Behaviour222::pr_box(), 2).unwrap();
        let cert = certify_samples(&sample_rows(&pr, 40, 2), 2, 1e-10, 0).unwrap();
        assert!(cert.transforms_fundamentally && !cert.unbiased);
        assert!(certify_samples(&sample_rows(&pr, 5, 2), 2, 1e-10, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mixtures_keep_local_properties(seed in 0u64..10_000, w in 0.0f64..=1.0, d in 2usize..6) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let q = QubitSodBox::new(TwoQubitState::random_pure(&mut r), d).unwrap();
            let p = ProductBox::new(
                AffineBox::unbiased_binary(random_unit(&mut r, d).into_iter().map(|v| v * 0.4).collect()).unwrap(),
                AffineBox::unbiased_binary(random_unit(&mut r, d).into_iter().map(|v| v * 0.2).collect()).unwrap(),
            ).unwrap();
            let ra = check_transforms_fundamentally(&q).unwrap().worst;
            let rb = check_transforms_fundamentally(&p).unwrap().worst;
            let mix = convex_mix(vec![(w, Box::new(q)), (1.0 - w, Box::new(p))]).unwrap();
            let rep = check_transforms_fundamentally(&mix).unwrap();
            // Conditioning renormalizes, so the mixed residual is compared with the threshold.
            prop_assert!(rep.passed, "{} vs {} {}", rep.worst, ra, rb);
            prop_assert!(check_locally_unbiased(&mix, 1e-10).unwrap().passed);
        }

        #[test]
        fn pr_embedding_is_no_signalling(d in 2usize..8, seed in 0u64..1000) {
            let pr = pr_box_embedding(Behaviour222::pr_box(), d).unwrap();
            prop_assert!(check_no_signalling(&pr, 20, seed).passed);
        }
    }
}
