//! CHSH and chained (Braunstein–Caves) inequalities, the relational witness
//! built from two angles, and a simulation of the two-angle protocol.
//!
//! Relational functions are read as `C(θ)` with `θ = α − β`. A chained
//! setting is described by Alice angles `a_i` and Bob angles `b_j` whose
//! differences `b_j − a_i` must hit `Θ₊ ± δ` and `Θ₋`; it is realized by
//! the physical inputs `α = λ − a_i`, `β = λ − b_j` for any shared offset `λ`.

use crate::angle::wrap_tau;
use crate::corrfn::{second_derivative_bound, Correlator, Spin, TrigSeries};
use crate::error::{Error, Result};
use crate::jointbox::{Outcome, So2Box};
use crate::optim::{golden_max, maximize_periodic_1d};
use crate::rng;
use crate::tol;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

/// `C(a1, b2) + C(a3, b2) + C(a3, b4) − C(a1, b4)`.
pub fn chsh_value<C: Correlator + ?Sized>(c: &C, a1: f64, b2: f64, a3: f64, b4: f64) -> f64 {
    c.correlation(a1, b2) + c.correlation(a3, b2) + c.correlation(a3, b4) - c.correlation(a1, b4)
}

/// Best CHSH arrangement found; `value` is signed, `|value|` was maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshOptimum {
    pub value: f64,
    pub a1: f64,
    pub b2: f64,
    pub a3: f64,
    pub b4: f64,
}

impl ChshOptimum {
    pub fn angles(&self) -> [f64; 4] {
        [self.a1, self.b2, self.a3, self.b4]
    }
}

const CHSH_GRID: usize = 24;

/// Maximizes `|CHSH|` by a 24-point-per-axis grid followed by coordinate
/// golden-section sweeps. Deterministic.
pub fn optimize_chsh<C: Correlator + Sync + ?Sized>(c: &C) -> ChshOptimum {
    let g = CHSH_GRID;
    let step = TAU / g as f64;
    let (best, _) = (0..g * g)
        .into_par_iter()
        .map(|ij| {
            let (a1, b2) = ((ij / g) as f64 * step, (ij % g) as f64 * step);
            let mut best = ([a1, b2, 0.0, 0.0], f64::NEG_INFINITY);
            for k in 0..g {
                for l in 0..g {
                    let x = [a1, b2, k as f64 * step, l as f64 * step];
                    let v = chsh_value(c, x[0], x[1], x[2], x[3]).abs();
                    if v > best.1 {
                        best = (x, v);
                    }
                }
            }
            best
        })
        .reduce(|| ([0.0; 4], f64::NEG_INFINITY), |p, q| if q.1 > p.1 { q } else { p });
    let mut x = best;
    let sign = chsh_value(c, x[0], x[1], x[2], x[3]).signum();
    let s = |x: &[f64; 4]| sign * chsh_value(c, x[0], x[1], x[2], x[3]);
    let mut value = s(&x);
    let mut h = step;
    for _ in 0..200 {
        let before = value;
        for i in 0..4 {
            let (xi, vi) = golden_max(
                |t| {
                    let mut y = x;
                    y[i] = t;
                    s(&y)
                },
                x[i] - h,
                x[i] + h,
                1e-13,
            );
            if vi > value {
                x[i] = xi;
                value = vi;
            }
        }
        if value - before < 1e-15 {
            if h < 1e-6 {
                break;
            }
            h *= 0.25;
        }
    }
    let x = x.map(wrap_tau);
    ChshOptimum {
        value: chsh_value(c, x[0], x[1], x[2], x[3]),
        a1: x[0],
        b2: x[1],
        a3: x[2],
        b4: x[3],
    }
}

/// Left-hand side of the chained inequality for Alice inputs `x₁, x₃, …`
/// and Bob inputs `y₂, y₄, …`:
/// `C(x₁,y₂) + C(x₃,y₂) + C(x₃,y₄) + … + C(x_{N−1},y_N) − C(x₁,y_N)`.
pub fn chained_lhs<C: Correlator + ?Sized>(c: &C, alice: &[f64], bob: &[f64]) -> Result<f64> {
    let half = alice.len();
    if half < 2 || bob.len() != half {
        return Err(Error::arg(
            "settings",
            format!("need equal Alice and Bob lists of length ≥ 2, got {} and {}", alice.len(), bob.len()),
        ));
    }
    let mut acc = 0.0;
    for k in 0..half {
        acc += c.correlation(alice[k], bob[k]);
        if k + 1 < half {
            acc += c.correlation(alice[k + 1], bob[k]);
        }
    }
    Ok(acc - c.correlation(alice[0], bob[half - 1]))
}

/// The chain `a_i = (i−1)δ` (odd `i`), `b_i = Θ₊ + (i−1)δ` (even `i`) with
/// `δ = ((Θ₋ − Θ₊) mod 2π)/(N−1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainedSetting {
    pub n_settings: usize,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub delta_n: f64,
    pub alice_angles: Vec<f64>,
    pub bob_angles: Vec<f64>,
}

impl ChainedSetting {
    pub fn new(n: usize, theta_plus: f64, theta_minus: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::arg("n", format!("{n} must be an even integer ≥ 4")));
        }
        let delta_n = wrap_tau(theta_minus - theta_plus) / (n as f64 - 1.0);
        let alice_angles = (1..n).step_by(2).map(|i| (i as f64 - 1.0) * delta_n).collect();
        let bob_angles = (2..=n)
            .step_by(2)
            .map(|i| theta_plus + (i as f64 - 1.0) * delta_n)
            .collect();
        Ok(ChainedSetting {
            n_settings: n,
            theta_plus,
            theta_minus,
            delta_n,
            alice_angles,
            bob_angles,
        })
    }

    /// Physical inputs `(α_i, β_j) = (λ − a_i, λ − b_j)`, so that
    /// `α_i − β_j = b_j − a_i`.
    pub fn inputs(&self, offset: f64) -> (Vec<f64>, Vec<f64>) {
        let a = self.alice_angles.iter().map(|x| wrap_tau(offset - x)).collect();
        let b = self.bob_angles.iter().map(|x| wrap_tau(offset - x)).collect();
        (a, b)
    }

    pub fn bound(&self) -> f64 {
        self.n_settings as f64 - 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessAngles {
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub delta_n: f64,
    pub offset: f64,
    pub alice: Vec<f64>,
    pub bob: Vec<f64>,
}

/// One evaluated chained inequality. `violated ⇔ lhs > bound + margin`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    #[serde(rename = "n")]
    pub n_settings: usize,
    pub lhs: f64,
    #[serde(rename = "bound")]
    pub classical_bound: f64,
    pub violated: bool,
    pub margin: f64,
    pub angles: WitnessAngles,
}

impl WitnessReport {
    fn new(setting: &ChainedSetting, offset: f64, lhs: f64, margin: f64) -> Self {
        let (alice, bob) = setting.inputs(offset);
        let bound = setting.bound();
        WitnessReport {
            n_settings: setting.n_settings,
            lhs,
            classical_bound: bound,
            violated: lhs > bound + margin,
            margin,
            angles: WitnessAngles {
                theta_plus: setting.theta_plus,
                theta_minus: setting.theta_minus,
                delta_n: setting.delta_n,
                offset,
                alice,
                bob,
            },
        }
    }

    /// `lhs − bound − margin`; positive iff violated.
    pub fn excess(&self) -> f64 {
        self.lhs - self.classical_bound - self.margin
    }
}

/// Evaluates the chain at shared offset `λ = 0`, with numerical margin
/// [`tol::BELL_SLACK`].
pub fn bci_value<C: Correlator + ?Sized>(c: &C, setting: &ChainedSetting) -> WitnessReport {
    bci_value_at(c, setting, 0.0)
}

pub fn bci_value_at<C: Correlator + ?Sized>(c: &C, setting: &ChainedSetting, offset: f64) -> WitnessReport {
    let (a, b) = setting.inputs(offset);
    let lhs = chained_lhs(c, &a, &b).expect("setting lists have equal length ≥ 2");
    WitnessReport::new(setting, offset, lhs, tol::BELL_SLACK)
}

/// `K_J = π² · √2 J(2J+1)(4J+1)/3`.
pub fn k_j(spin: Spin) -> f64 {
    PI * PI * second_derivative_bound(spin)
}

/// `ε_J(Δ) = −K_J + √(K_J² + Δ²/4)`, evaluated without cancellation.
pub fn epsilon_j(spin: Spin, delta: f64) -> f64 {
    let k = k_j(spin);
    let q = delta * delta / 4.0;
    q / (k + (k * k + q).sqrt())
}

/// Leading behaviour `Δ²/(8 K_J)`.
pub fn epsilon_j_asymptotic(spin: Spin, delta: f64) -> f64 {
    delta * delta / (8.0 * k_j(spin))
}

/// Real roots `(N₋, N₊)` of `ε(N−1)² − Δ(N−1) + (K/2)δΘ² = 0`; the chain
/// is guaranteed violated for even `N` strictly between them. With `ε = 0`
/// the upper root is infinite.
pub fn violation_window(epsilon: f64, delta: f64, k: f64, dtheta: f64) -> Option<(f64, f64)> {
    let c = 0.5 * k * dtheta * dtheta;
    if epsilon <= 0.0 {
        return (delta > 0.0).then(|| (1.0 + c / delta, f64::INFINITY));
    }
    let disc = delta * delta - 4.0 * epsilon * c;
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    Some((1.0 + (delta - r) / (2.0 * epsilon), 1.0 + (delta + r) / (2.0 * epsilon)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SearchStatus {
    Violated,
    NotFound,
}

/// Outcome of the relational witness search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessSearch {
    pub spin: Spin,
    /// `1 − C_rel(Θ₊)`.
    pub epsilon: f64,
    /// `1 − C_rel(Θ₋)`.
    pub delta: f64,
    pub epsilon_bound: f64,
    pub premise_holds: bool,
    pub window: Option<(f64, f64)>,
    pub cap: usize,
    pub status: SearchStatus,
    /// First violating chain for the relational core, or the best one found.
    pub report: WitnessReport,
    pub setting: ChainedSetting,
    /// The same chain at a shared offset where the full function violates it.
    pub raw_report: Option<WitnessReport>,
}

/// Default largest `N` tried by the witness search.
pub const DEFAULT_CAP: usize = 10_000;

fn relational_chain<F: Fn(f64) -> f64>(rel: &F, n: usize, tp: f64, tm: f64) -> f64 {
    let d = wrap_tau(tm - tp) / (n as f64 - 1.0);
    let h = n as f64 / 2.0;
    h * rel(tp + d) + (h - 1.0) * rel(tp - d) - rel(tm)
}

fn search_order(window: Option<(f64, f64)>, cap: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(cap / 2);
    if let Some((lo, hi)) = window {
        let start = ((lo.max(3.0).floor() as usize) + 1).next_multiple_of(2);
        let mut n = start.max(4);
        while (n as f64) < hi && n <= cap {
            order.push(n);
            n += 2;
        }
    }
    let seen: std::collections::HashSet<usize> = order.iter().copied().collect();
    order.extend((4..=cap).step_by(2).filter(|n| !seen.contains(n)));
    order
}

/// Looks for a chained inequality violated by `C`, using the relational
/// core `C_rel` at the user-supplied `Θ₊`, `Θ₋`.
pub fn theorem_2b_witness(c: &TrigSeries, theta_plus: f64, theta_minus: f64, cap: usize) -> Result<WitnessSearch> {
    if cap < 4 {
        return Err(Error::arg("cap", "must be at least 4"));
    }
    let spin = c.spin();
    let core = c.relational_core();
    let rel = |t: f64| core.evaluate_relational(t);
    let epsilon = 1.0 - rel(theta_plus);
    let delta = 1.0 - rel(theta_minus);
    let epsilon_bound = if spin == Spin::ZERO { 0.0 } else { epsilon_j(spin, delta) };
    let premise_holds = spin != Spin::ZERO && delta > 0.0 && epsilon < epsilon_bound;
    let k = second_derivative_bound(spin);
    let window = violation_window(epsilon.max(0.0), delta, k, wrap_tau(theta_minus - theta_plus));

    let mut best: Option<(usize, f64)> = None;
    let mut found = None;
    let first = if epsilon > 0.0 { window } else { None };
    for n in search_order(first, cap) {
        let lhs = relational_chain(&rel, n, theta_plus, theta_minus);
        let excess = lhs - (n as f64 - 2.0);
        if best.is_none_or(|b| excess > b.1) {
            best = Some((n, excess));
        }
        if excess > tol::BELL_SLACK {
            found = Some(n);
            break;
        }
    }
    let n = found.unwrap_or(best.expect("cap ≥ 4 gives at least one N").0);
    let setting = ChainedSetting::new(n, theta_plus, theta_minus)?;
    let report = bci_value(&core, &setting);
    let raw_report = if report.violated {
        // the offset average of the raw chain is the relational chain
        let (lam, _) = maximize_periodic_1d(|l| bci_value_at(c, &setting, l).lhs, 360);
        Some(bci_value_at(c, &setting, lam)).filter(|r| r.violated)
    } else {
        None
    };
    Ok(WitnessSearch {
        spin,
        epsilon,
        delta,
        epsilon_bound,
        premise_holds,
        window,
        cap,
        status: if report.violated {
            SearchStatus::Violated
        } else {
            SearchStatus::NotFound
        },
        report,
        setting,
        raw_report,
    })
}

/// Shot estimate of one relational value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelationalEstimate {
    pub theta: f64,
    pub shots: usize,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub shots: usize,
    pub seed: u64,
    /// Relabel Bob's outcome `b → −b`.
    pub flip_bob: bool,
    /// Standard errors subtracted from the evidence.
    pub sigmas: f64,
    pub cap: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            shots: 100_000,
            seed: 0,
            flip_bob: false,
            sigmas: tol::SIGMA_MARGIN,
            cap: DEFAULT_CAP,
        }
    }
}

/// Result of the two-angle protocol.
///
/// The reported `lhs` is the lower bound
/// `(N−1)(1 − ε − Kδ_N²/2) − (1 − Δ)` on the chained inequality that the
/// second-derivative bound guarantees from the point estimates, and
/// `margin = (N−1)·kσ₊ + kσ₋` propagates the statistical error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolResult {
    pub spin: Spin,
    pub plus: RelationalEstimate,
    pub minus: RelationalEstimate,
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_bound: f64,
    pub report: WitnessReport,
}

fn sample_pair<B: So2Box + ?Sized, R: Rng>(b: &B, alpha: f64, beta: f64, r: &mut R) -> (Outcome, Outcome) {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for x in Outcome::BOTH {
        for y in Outcome::BOTH {
            acc += b.prob(x, y, alpha, beta).max(0.0);
            if u < acc {
                return (x, y);
            }
        }
    }
    (Outcome::Minus, Outcome::Minus)
}

/// Each shot draws a shared `λ`, gives Alice `Θ + λ` with `Θ ∈ {Θ₊, Θ₋}`
/// chosen uniformly and Bob `λ`, and tallies `ab` per `Θ`.
pub fn simulate_witness_protocol<B: So2Box + Sync + ?Sized>(
    b: &B,
    spin: Spin,
    theta_plus: f64,
    theta_minus: f64,
    cfg: &ProtocolConfig,
) -> Result<ProtocolResult> {
    if cfg.shots == 0 {
        return Err(Error::arg("shots", "must be at least 1"));
    }
    if spin == Spin::ZERO {
        return Err(Error::arg("spin", "must be at least 1/2"));
    }
    let flip = if cfg.flip_bob { -1.0 } else { 1.0 };
    let tallies = rng::chunked(cfg.seed, cfg.shots, |r, count| {
        // [count, sum of ab] for Θ₊ and Θ₋
        let mut t = [[0.0f64; 2]; 2];
        for _ in 0..count {
            let lam = r.random_range(0.0..TAU);
            let which = usize::from(r.random::<bool>());
            let theta = if which == 0 { theta_plus } else { theta_minus };
            let (x, y) = sample_pair(b, theta + lam, lam, r);
            t[which][0] += 1.0;
            t[which][1] += x.sign() * y.sign() * flip;
        }
        t
    });
    let mut t = [[0.0f64; 2]; 2];
    for c in tallies {
        for w in 0..2 {
            t[w][0] += c[w][0];
            t[w][1] += c[w][1];
        }
    }
    let est = |w: usize, theta: f64| {
        let m = t[w][0];
        let v = if m > 0.0 { t[w][1] / m } else { 0.0 };
        RelationalEstimate {
            theta,
            shots: m as usize,
            value: v,
            stderr: if m > 1.0 {
                ((1.0 - v * v).max(0.0) / (m - 1.0)).sqrt()
            } else {
                1.0
            },
        }
    };
    let plus = est(0, theta_plus);
    let minus = est(1, theta_minus);
    let epsilon = 1.0 - plus.value;
    let delta = 1.0 - minus.value;
    let k = second_derivative_bound(spin);
    let dtheta = wrap_tau(theta_minus - theta_plus);
    let ks = cfg.sigmas;
    let report_for = |n: usize| {
        let setting = ChainedSetting::new(n, theta_plus, theta_minus).expect("even N ≥ 4");
        let nm1 = n as f64 - 1.0;
        let d = dtheta / nm1;
        let lhs = nm1 * (1.0 - epsilon - 0.5 * k * d * d) - (1.0 - delta);
        let margin = nm1 * ks * plus.stderr + ks * minus.stderr;
        WitnessReport::new(&setting, 0.0, lhs, margin)
    };
    let eps_hi = epsilon + ks * plus.stderr;
    let window = violation_window(eps_hi.max(0.0), delta - ks * minus.stderr, k, dtheta)
        .filter(|_| eps_hi > 0.0);
    let mut best: Option<WitnessReport> = None;
    for n in search_order(window, cfg.cap.max(4)) {
        let r = report_for(n);
        if r.violated {
            best = Some(r);
            break;
        }
        if best.as_ref().is_none_or(|b| r.excess() > b.excess()) {
            best = Some(r);
        }
    }
    Ok(ProtocolResult {
        spin,
        plus,
        minus,
        epsilon,
        delta,
        epsilon_bound: epsilon_j(spin, delta),
        report: best.expect("at least one N"),
    })
}
