//! Two-qubit reference behaviours and a finite-level oscillator.

use crate::corrfn::{Coeffs, Correlator, Spin, TrigSeries};
use crate::error::{Error, Result};
use crate::jointbox::{JointBox, Outcome, So2Box};
use crate::linalg;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-10;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Pauli matrices `σ_x, σ_y, σ_z`.
pub fn pauli() -> [Matrix2<Complex64>; 3] {
    let (o, z, i) = (c(1.0), c(0.0), Complex64::new(0.0, 1.0));
    [
        Matrix2::new(z, o, o, z),
        Matrix2::new(z, -i, i, z),
        Matrix2::new(o, z, z, -o),
    ]
}

/// A two-qubit density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateJson", into = "StateJson")]
pub struct TwoQubitState {
    rho: Matrix4<Complex64>,
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: Matrix4<Complex64>) -> Result<Self> {
        let herm = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(Error::arg("rho", format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NotNormalized {
                residual: (tr - c(1.0)).norm(),
            });
        }
        let state = TwoQubitState { rho };
        let min = state.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min < EIGEN_FLOOR {
            return Err(Error::NegativeProbability { min });
        }
        Ok(state)
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi` (basis `|00⟩, |01⟩, |10⟩, |11⟩`).
    pub fn from_pure(psi: Vector4<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::arg("psi", "zero vector"));
        }
        let v = psi / c(norm);
        Ok(TwoQubitState { rho: v * v.adjoint() })
    }

    /// Normalized vector of 8 independent standard normal components.
    pub fn random_pure<R: Rng>(rng: &mut R) -> Self {
        loop {
            let v = Vector4::from_fn(|_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            if let Ok(s) = TwoQubitState::from_pure(v) {
                return s;
            }
        }
    }

    pub fn rho(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.rho.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `Re tr[ρ (A ⊗ B)]`.
    pub fn expectation(&self, a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> f64 {
        let op: Matrix4<Complex64> = a.kronecker(b);
        (self.rho * op).trace().re
    }

    /// Local Bloch vectors and the correlation tensor `T_ij = ⟨σ_i ⊗ σ_j⟩`.
    pub fn bloch(&self) -> ([f64; 3], [f64; 3], [[f64; 3]; 3]) {
        let s = pauli();
        let id = Matrix2::identity();
        let ra = std::array::from_fn(|i| self.expectation(&s[i], &id));
        let rb = std::array::from_fn(|i| self.expectation(&id, &s[i]));
        let t = std::array::from_fn(|i| std::array::from_fn(|j| self.expectation(&s[i], &s[j])));
        (ra, rb, t)
    }
}

/// `ρ = p |ψ⁻⟩⟨ψ⁻| + (1 − p) 𝟙/4` with `|ψ⁻⟩ = (|01⟩ − |10⟩)/√2`.
pub fn werner_state(p: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg("p", format!("{p} is outside [0, 1]")));
    }
    let psi = Vector4::new(c(0.0), c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2), c(0.0));
    let singlet = psi * psi.adjoint();
    let rho = singlet * c(p) + Matrix4::identity() * c((1.0 - p) / 4.0);
    Ok(TwoQubitState { rho })
}

/// `M_θ = cos 2θ σ_z + sin 2θ σ_x`, eigenvalues `±1`.
pub fn polarizer_observable(theta: f64) -> Matrix2<Complex64> {
    let (s, co) = (2.0 * theta).sin_cos();
    Matrix2::new(c(co), c(s), c(s), c(-co))
}

/// `(𝟙 + a M_θ)/2`.
pub fn polarizer_effect(a: Outcome, theta: f64) -> Matrix2<Complex64> {
    (Matrix2::identity() + polarizer_observable(theta) * c(a.sign())) * c(0.5)
}

/// `tr[ρ (M_α ⊗ M_β)]`.
pub fn quantum_correlation(state: &TwoQubitState, theta_a: f64, theta_b: f64) -> f64 {
    state.expectation(&polarizer_observable(theta_a), &polarizer_observable(theta_b))
}

/// Polarizer measurements on a shared state, evaluated by the trace formula.
#[derive(Debug, Clone)]
pub struct PolarizerBox {
    pub state: TwoQubitState,
}

pub fn quantum_box(state: &TwoQubitState) -> PolarizerBox {
    PolarizerBox { state: state.clone() }
}

impl So2Box for PolarizerBox {
    fn prob(&self, a: Outcome, b: Outcome, alpha: f64, beta: f64) -> f64 {
        self.state
            .expectation(&polarizer_effect(a, alpha), &polarizer_effect(b, beta))
    }
}

impl Correlator for PolarizerBox {
    fn correlation(&self, alpha: f64, beta: f64) -> f64 {
        quantum_correlation(&self.state, alpha, beta)
    }
}

impl PolarizerBox {
    /// The same box as an exact spin-1 series table. With `A = 2α`,
    /// `B = 2β`, product-to-sum gives `cos(A − B)` and `cos(A + B)` terms at
    /// frequency pairs `(2, 2)` and `(2, −2)`.
    pub fn joint_box(&self) -> JointBox {
        let (ra, rb, t) = self.state.bloch();
        let (x, z) = (0, 2);
        let (zz, xx, zx, xz) = (t[z][z], t[x][x], t[z][x], t[x][z]);
        let corr = TrigSeries::from_raw(
            Spin::ONE,
            0.0,
            [
                (2, 2, 0.5 * (zz + xx), 0.5 * (xz - zx)),
                (2, -2, 0.5 * (zz - xx), 0.5 * (zx + xz)),
            ],
        )
        .expect("pairs fit spin 1");
        let alice = TrigSeries::from_raw(Spin::ONE, 0.0, [(2, 0, ra[z], ra[x])]).expect("fits");
        let bob = TrigSeries::from_raw(Spin::ONE, 0.0, [(0, -2, rb[z], rb[x])]).expect("fits");
        let one = TrigSeries::constant_fn(Spin::ONE, 1.0);
        let blocks = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].map(|(a, b)| {
            TrigSeries::linear_combination(&[(0.25, &one), (0.25 * a, &alice), (0.25 * b, &bob), (0.25 * a * b, &corr)])
        });
        JointBox::from_blocks_unchecked(Spin::ONE, blocks)
    }
}

/// `(v₁, v₂, 0)` for `d = 2`, `(v₁, v₂, v₃)` for `d ≥ 3`.
pub fn bloch_embedding(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v.get(2).copied().unwrap_or(0.0)]
}

fn check_unit(v: &[f64]) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::arg("direction", "needs at least 2 components"));
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::arg("direction", format!("norm {n} is not 1")));
    }
    Ok(())
}

/// `E = ½(𝟙 + a Π(v)·σ)`.
pub fn bloch_povm(a: Outcome, v: &[f64]) -> Result<Matrix2<Complex64>> {
    check_unit(v)?;
    Ok(bloch_effect(a, v))
}

fn bloch_effect(a: Outcome, v: &[f64]) -> Matrix2<Complex64> {
    let p = bloch_embedding(v);
    let s = pauli();
    let dir = s[0] * c(p[0]) + s[1] * c(p[1]) + s[2] * c(p[2]);
    (Matrix2::identity() + dir * c(a.sign())) * c(0.5)
}

/// Two-qubit state measured with Bloch effects along embedded unit
/// `d`-vectors: `P(a, b | x, y) = tr[ρ (E_{a,x} ⊗ E_{b,y})]`.
#[derive(Debug, Clone)]
pub struct QubitSodBox {
    pub state: TwoQubitState,
    pub d: usize,
    ra: [f64; 3],
    rb: [f64; 3],
    t: [[f64; 3]; 3],
}

impl QubitSodBox {
    pub fn new(state: TwoQubitState, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::arg("d", "must be at least 2"));
        }
        let (ra, rb, t) = state.bloch();
        Ok(QubitSodBox { state, d, ra, rb, t })
    }

    /// Trace formula evaluation.
    pub fn prob_trace(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        self.state.expectation(&bloch_effect(a, x), &bloch_effect(b, y))
    }

    /// `¼[1 + a r_A·Πx + b r_B·Πy + ab (Πx)ᵀ T (Πy)]`.
    pub fn prob(&self, a: Outcome, b: Outcome, x: &[f64], y: &[f64]) -> f64 {
        let (px, py) = (bloch_embedding(x), bloch_embedding(y));
        let dot = |u: &[f64; 3], v: &[f64; 3]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
        let txy: f64 = (0..3).map(|i| px[i] * dot(&self.t[i], &py)).sum();
        0.25 * (1.0 + a.sign() * dot(&self.ra, &px) + b.sign() * dot(&self.rb, &py) + a.sign() * b.sign() * txy)
    }
}

/// A finite superposition of oscillator levels with `E_n = ω(n + ½)`
/// (`ħ = 1`) and a measurement on their span.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorSpec {
    pub omega: f64,
    pub levels: Vec<u32>,
    pub rho: DMatrix<Complex64>,
    pub effects: Vec<DMatrix<Complex64>>,
}

impl OscillatorSpec {
    pub fn new(
        omega: f64,
        levels: Vec<u32>,
        rho: DMatrix<Complex64>,
        effects: Vec<DMatrix<Complex64>>,
    ) -> Result<Self> {
        let k = levels.len();
        if k == 0 {
            return Err(Error::arg("levels", "needs at least one occupied level"));
        }
        let mut sorted = levels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k {
            return Err(Error::arg("levels", "levels must be distinct"));
        }
        if rho.shape() != (k, k) || effects.iter().any(|e| e.shape() != (k, k)) {
            return Err(Error::arg("rho", "matrix sizes must match the number of levels"));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NotNormalized {
                residual: (tr - c(1.0)).norm(),
            });
        }
        for m in std::iter::once(&rho).chain(&effects) {
            if (m - m.adjoint()).iter().any(|z| z.norm() > HERMITIAN_TOL) {
                return Err(Error::arg("effects", "matrices must be Hermitian"));
            }
            let min = m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            if min < EIGEN_FLOOR {
                return Err(Error::NegativeProbability { min });
            }
        }
        let total = effects
            .iter()
            .fold(DMatrix::<Complex64>::zeros(k, k), |acc, e| acc + e);
        let id = DMatrix::<Complex64>::identity(k, k);
        let residual = (total - id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if residual > HERMITIAN_TOL {
            return Err(Error::NotNormalized { residual });
        }
        Ok(OscillatorSpec { omega, levels, rho, effects })
    }

    /// Pure state `Σ ψ_j |n_j⟩` (normalized here).
    pub fn pure(omega: f64, levels: Vec<u32>, amplitudes: &[Complex64], effects: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let v = DVector::from_column_slice(amplitudes);
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::arg("amplitudes", "zero vector"));
        }
        let v = v / c(n);
        let rho = &v * v.adjoint();
        OscillatorSpec::new(omega, levels, rho, effects)
    }

    pub fn energy(&self, level: u32) -> f64 {
        self.omega * (f64::from(level) + 0.5)
    }
}

/// Two-outcome measurement: the projector onto the uniform superposition of
/// the `k` occupied levels and its complement.
pub fn superposition_effects(k: usize) -> Vec<DMatrix<Complex64>> {
    let s = DVector::from_element(k, c(1.0 / (k as f64).sqrt()));
    let proj = &s * s.adjoint();
    let rest = DMatrix::identity(k, k) - &proj;
    vec![proj, rest]
}

/// `P(a | t) = tr[M_a e^{−iHt} ρ e^{iHt}]` for every effect `a`.
pub fn oscillator_box(spec: &OscillatorSpec, t: f64) -> Vec<f64> {
    let k = spec.levels.len();
    let evolved = DMatrix::from_fn(k, k, |j, l| {
        let phase = -(spec.energy(spec.levels[j]) - spec.energy(spec.levels[l])) * t;
        spec.rho[(j, l)] * Complex64::from_polar(1.0, phase)
    });
    spec.effects
        .iter()
        .map(|m| (m * &evolved).trace().re)
        .collect()
}

/// Single-party series `c₀ + Σ_k [c_k cos(kωt) + s_k sin(kωt)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub omega: f64,
    pub constant: f64,
    pub harmonics: BTreeMap<u32, Coeffs>,
}

impl TimeSeries {
    pub fn evaluate(&self, t: f64) -> f64 {
        self.constant
            + self
                .harmonics
                .iter()
                .map(|(k, c)| {
                    let (s, co) = (f64::from(*k) * self.omega * t).sin_cos();
                    c.cos * co + c.sin * s
                })
                .sum::<f64>()
    }

    /// Harmonics whose amplitude exceeds `threshold`.
    pub fn active_harmonics(&self, threshold: f64) -> Vec<u32> {
        self.harmonics
            .iter()
            .filter(|(_, c)| c.amplitude() > threshold)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Exact series of `P(outcome | t)`: each level pair `n_j > n_l` with
/// `z = M_{lj} ρ_{jl}` contributes `2 Re z cos(Δωt) + 2 Im z sin(Δωt)`.
pub fn oscillator_series(spec: &OscillatorSpec, outcome: usize) -> Result<TimeSeries> {
    let m = spec
        .effects
        .get(outcome)
        .ok_or_else(|| Error::arg("outcome", format!("{outcome} out of range")))?;
    let k = spec.levels.len();
    let mut constant = 0.0;
    let mut harmonics: BTreeMap<u32, Coeffs> = BTreeMap::new();
    for j in 0..k {
        constant += (m[(j, j)] * spec.rho[(j, j)]).re;
        for l in 0..k {
            let (nj, nl) = (spec.levels[j], spec.levels[l]);
            if nj > nl {
                let z = m[(l, j)] * spec.rho[(j, l)];
                let e = harmonics.entry(nj - nl).or_default();
                e.cos += 2.0 * z.re;
                e.sin += 2.0 * z.im;
            }
        }
    }
    Ok(TimeSeries {
        omega: spec.omega,
        constant,
        harmonics,
    })
}

/// The set of occupied energy differences `|n_j − n_l|`.
pub fn energy_differences(levels: &[u32]) -> Vec<u32> {
    let mut d: Vec<u32> = levels
        .iter()
        .flat_map(|a| levels.iter().filter(move |b| *b < a).map(move |b| a - b))
        .collect();
    d.sort_unstable();
    d.dedup();
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeFit {
    pub series: TimeSeries,
    pub residual_rms: f64,
}

/// Least-squares fit of harmonics `1..=max_harmonic` of `ω` to `(t, p)` samples.
pub fn fit_time_series(samples: &[(f64, f64)], omega: f64, max_harmonic: u32) -> Result<TimeFit> {
    let cols = 1 + 2 * max_harmonic as usize;
    if samples.len() < cols {
        return Err(Error::Degenerate {
            rank: samples.len(),
            needed: cols,
        });
    }
    let design = DMatrix::from_fn(samples.len(), cols, |i, j| {
        if j == 0 {
            return 1.0;
        }
        let k = ((j + 1) / 2) as f64;
        let (s, co) = (k * omega * samples[i].0).sin_cos();
        if j % 2 == 1 {
            co
        } else {
            s
        }
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let x = linalg::least_squares_vec(&design, &rhs)?;
    let residual_rms = linalg::rms_residual(&design, &x, &rhs);
    let harmonics = (1..=max_harmonic)
        .map(|k| {
            let j = 2 * k as usize - 1;
            (k, Coeffs::new(x[j], x[j + 1]))
        })
        .collect();
    Ok(TimeFit {
        series: TimeSeries {
            omega,
            constant: x[0],
            harmonics,
        },
        residual_rms,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateJson {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

impl TryFrom<StateJson> for TwoQubitState {
    type Error = Error;

    fn try_from(j: StateJson) -> Result<Self> {
        TwoQubitState::new(Matrix4::from_fn(|r, k| Complex64::new(j.re[r][k], j.im[r][k])))
    }
}

impl From<TwoQubitState> for StateJson {
    fn from(s: TwoQubitState) -> Self {
        StateJson {
            re: std::array::from_fn(|r| std::array::from_fn(|k| s.rho[(r, k)].re)),
            im: std::array::from_fn(|r| std::array::from_fn(|k| s.rho[(r, k)].im)),
        }
    }
}
