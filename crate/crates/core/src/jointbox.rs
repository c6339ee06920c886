//! Bipartite two-outcome boxes `P(a, b | α, β)` whose four outcome
//! probabilities are trigonometric series in the two input angles.

use crate::corrfn::{Correlator, Spin, TrigSeries};
use crate::error::{Error, Result};
use crate::format::sig12;
use crate::tol;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;

/// A binary outcome `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn from_label(label: i64) -> Result<Self> {
        match label {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(Error::InvalidOutcome(other)),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }

    fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }
}

/// One of the two parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::A => Party::B,
            Party::B => Party::A,
        }
    }
}

/// A two-party box with angle inputs and binary outcomes.
pub trait So2Box {
    fn prob(&self, a: Outcome, b: Outcome, alpha: f64, beta: f64) -> f64;

    /// `Σ_{a,b} ab · P(a, b | α, β)`.
    fn box_correlation(&self, alpha: f64, beta: f64) -> f64 {
        let mut acc = 0.0;
        for a in Outcome::BOTH {
            for b in Outcome::BOTH {
                acc += a.sign() * b.sign() * self.prob(a, b, alpha, beta);
            }
        }
        acc
    }
}

impl<T: So2Box + ?Sized> So2Box for &T {
    fn prob(&self, a: Outcome, b: Outcome, alpha: f64, beta: f64) -> f64 {
        (**self).prob(a, b, alpha, beta)
    }
}

/// Verdict of the coefficient-level no-signalling test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoSignallingReport {
    pub passed: bool,
    /// Largest coefficient by which a marginal depends on the other party's input.
    pub worst: f64,
}

/// Full probability table in coefficient form; blocks ordered `++, +−, −+, −−`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointBoxJson", into = "JointBoxJson")]
pub struct JointBox {
    spin: Spin,
    blocks: [TrigSeries; 4],
}

fn block_index(a: Outcome, b: Outcome) -> usize {
    2 * a.index() + b.index()
}

impl JointBox {
    /// Validates normalization (coefficient-level) and non-negativity (grid
    /// scan with local refinement).
    pub fn new(pp: TrigSeries, pm: TrigSeries, mp: TrigSeries, mm: TrigSeries) -> Result<Self> {
        let spin = [&pp, &pm, &mp, &mm].iter().map(|f| f.spin()).max().unwrap();
        let blocks = [pp, pm, mp, mm].map(|f| f.with_spin(spin).expect("spin is the maximum"));
        let jb = JointBox { spin, blocks };
        let residual = jb.normalization_residual();
        if residual > tol::COEFF_EQ {
            return Err(Error::NotNormalized { residual });
        }
        let min = jb.min_probability();
        if min < -tol::NONNEG_SLACK {
            return Err(Error::NegativeProbability { min });
        }
        Ok(jb)
    }

    /// Constructor for tables already known to be valid.
    pub(crate) fn from_blocks_unchecked(spin: Spin, blocks: [TrigSeries; 4]) -> Self {
        JointBox { spin, blocks }
    }

    /// `P(a, b | α, β) = ¼ + ¼·ab·C(α, β)`: uniform marginals, correlation `C`.
    pub fn from_correlation(f: &TrigSeries) -> Result<Self> {
        if !f.is_bounded() {
            return Err(Error::NotBounded { sup: f.sup_abs() });
        }
        let one = TrigSeries::constant_fn(f.spin(), 1.0);
        let same = TrigSeries::linear_combination(&[(0.25, &one), (0.25, f)]);
        let diff = TrigSeries::linear_combination(&[(0.25, &one), (-0.25, f)]);
        Ok(JointBox {
            spin: f.spin(),
            blocks: [same.clone(), diff.clone(), diff, same],
        })
    }

    /// All four probabilities equal to ¼.
    pub fn uniform(spin: Spin) -> Self {
        let q = TrigSeries::constant_fn(spin, 0.25);
        JointBox {
            spin,
            blocks: [q.clone(), q.clone(), q.clone(), q],
        }
    }

    /// The box that always outputs `(a, b)`.
    pub fn deterministic(a: Outcome, b: Outcome) -> Self {
        let mut blocks = [0; 4].map(|_| TrigSeries::zero(Spin::ZERO));
        blocks[block_index(a, b)] = TrigSeries::constant_fn(Spin::ZERO, 1.0);
        JointBox {
            spin: Spin::ZERO,
            blocks,
        }
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn block(&self, a: Outcome, b: Outcome) -> &TrigSeries {
        &self.blocks[block_index(a, b)]
    }

    pub fn evaluate_joint(&self, a: Outcome, b: Outcome, alpha: f64, beta: f64) -> f64 {
        self.block(a, b).evaluate(alpha, beta)
    }

    /// As [`JointBox::evaluate_joint`] with integer labels `±1`.
    pub fn evaluate_labels(&self, a: i64, b: i64, alpha: f64, beta: f64) -> Result<f64> {
        Ok(self.evaluate_joint(Outcome::from_label(a)?, Outcome::from_label(b)?, alpha, beta))
    }

    fn normalization_residual(&self) -> f64 {
        let parts: Vec<(f64, &TrigSeries)> = self.blocks.iter().map(|b| (1.0, b)).collect();
        let sum = TrigSeries::linear_combination(&parts);
        sum.terms()
            .values()
            .map(|c| c.cos.abs().max(c.sin.abs()))
            .fold((sum.constant() - 1.0).abs(), f64::max)
    }

    /// Smallest probability over all outcomes and inputs.
    pub fn min_probability(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.min_value())
            .fold(f64::INFINITY, f64::min)
    }

    /// `P(+,+) + P(−,−) − P(+,−) − P(−,+)` at the coefficient level.
    pub fn correlation_of(&self) -> TrigSeries {
        let [pp, pm, mp, mm] = &self.blocks;
        TrigSeries::linear_combination(&[(1.0, pp), (1.0, mm), (-1.0, pm), (-1.0, mp)])
            .certify_bounded()
    }

    fn marginal_series(&self, party: Party, outcome: Outcome) -> TrigSeries {
        let parts: Vec<(f64, &TrigSeries)> = Outcome::BOTH
            .iter()
            .map(|&o| match party {
                Party::A => (1.0, self.block(outcome, o)),
                Party::B => (1.0, self.block(o, outcome)),
            })
            .collect();
        TrigSeries::linear_combination(&parts)
    }

    /// Summed over the other party's outcome, every term that depends on the
    /// other party's angle must vanish.
    pub fn check_no_signalling(&self) -> NoSignallingReport {
        let mut worst = 0.0f64;
        for o in Outcome::BOTH {
            let a = self.marginal_series(Party::A, o);
            for (p, c) in a.terms() {
                if p.n() != 0 {
                    worst = worst.max(c.cos.abs()).max(c.sin.abs());
                }
            }
            let b = self.marginal_series(Party::B, o);
            for (p, c) in b.terms() {
                if p.m() != 0 {
                    worst = worst.max(c.cos.abs()).max(c.sin.abs());
                }
            }
        }
        NoSignallingReport {
            passed: worst <= tol::COEFF_EQ,
            worst,
        }
    }

    /// Marginal probability of `outcome` for `party` at its own input `angle`.
    pub fn marginal(&self, party: Party, outcome: Outcome, angle: f64) -> Result<f64> {
        let report = self.check_no_signalling();
        if !report.passed {
            return Err(Error::Signalling {
                residual: report.worst,
            });
        }
        let s = self.marginal_series(party, outcome);
        Ok(match party {
            Party::A => s.evaluate(angle, 0.0),
            Party::B => s.evaluate(0.0, angle),
        })
    }

    /// The box of the other party given that `party` input `angle` and saw `outcome`.
    pub fn conditional_box(
        &self,
        party: Party,
        outcome: Outcome,
        angle: f64,
    ) -> Result<ConditionalBox> {
        let marginal = self.marginal(party, outcome, angle)?;
        if marginal <= tol::CONDITIONAL_FLOOR {
            return Err(Error::UndefinedConditional {
                marginal,
                threshold: tol::CONDITIONAL_FLOOR,
            });
        }
        Ok(ConditionalBox {
            joint: self.clone(),
            conditioned: party,
            outcome,
            angle,
            marginal,
        })
    }

    /// CSV table `alpha,beta,p_pp,p_pm,p_mp,p_mm` on an `n × n` grid over `[0, 2π)²`.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::from("alpha,beta,p_pp,p_pm,p_mp,p_mm\n");
        for i in 0..n {
            let a = TAU * i as f64 / n as f64;
            for j in 0..n {
                let b = TAU * j as f64 / n as f64;
                let p: Vec<String> = self.blocks.iter().map(|s| sig12(s.evaluate(a, b))).collect();
                let _ = writeln!(out, "{},{},{}", sig12(a), sig12(b), p.join(","));
            }
        }
        out
    }
}

impl So2Box for JointBox {
    fn prob(&self, a: Outcome, b: Outcome, alpha: f64, beta: f64) -> f64 {
        self.evaluate_joint(a, b, alpha, beta)
    }
}

impl Correlator for JointBox {
    fn correlation(&self, alpha: f64, beta: f64) -> f64 {
        self.box_correlation(alpha, beta)
    }
}

/// Single-party box `P(x | free angle)` obtained by conditioning on the
/// other party's input and outcome.
#[derive(Debug, Clone)]
pub struct ConditionalBox {
    joint: JointBox,
    conditioned: Party,
    outcome: Outcome,
    angle: f64,
    marginal: f64,
}

impl ConditionalBox {
    /// The party whose outcome is being predicted.
    pub fn free_party(&self) -> Party {
        self.conditioned.other()
    }

    pub fn conditioning_marginal(&self) -> f64 {
        self.marginal
    }

    pub fn prob(&self, outcome: Outcome, free_angle: f64) -> f64 {
        let joint = match self.conditioned {
            Party::B => self
                .joint
                .evaluate_joint(outcome, self.outcome, free_angle, self.angle),
            Party::A => self
                .joint
                .evaluate_joint(self.outcome, outcome, self.angle, free_angle),
        };
        joint / self.marginal
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointBoxJson {
    pp: TrigSeries,
    pm: TrigSeries,
    mp: TrigSeries,
    mm: TrigSeries,
}

impl TryFrom<JointBoxJson> for JointBox {
    type Error = Error;

    fn try_from(j: JointBoxJson) -> Result<Self> {
        JointBox::new(j.pp, j.pm, j.mp, j.mm)
    }
}

impl From<JointBox> for JointBoxJson {
    fn from(b: JointBox) -> Self {
        let [pp, pm, mp, mm] = b.blocks;
        JointBoxJson { pp, pm, mp, mm }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrfn::{canonical_pairs, scifi, werner_correlation};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Outcome::{Minus, Plus};

    fn signalling_box(k: f64) -> Result<JointBox> {
        let s = Spin::HALF;
        JointBox::new(
            TrigSeries::single(s, 0.25, 0, 1, k, 0.0)?,
            TrigSeries::constant_fn(s, 0.25),
            TrigSeries::single(s, 0.25, 0, 1, -k, 0.0)?,
            TrigSeries::constant_fn(s, 0.25),
        )
    }

    fn random_bounded(rng: &mut ChaCha8Rng) -> TrigSeries {
        let pairs = canonical_pairs(Spin::ONE);
        let raw: Vec<_> = (0..5)
            .map(|_| {
                let p = pairs[rng.random_range(0..pairs.len())];
                (p.m(), p.n(), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
            .collect();
        let f = TrigSeries::from_raw(Spin::ONE, rng.random_range(-0.5..0.5), raw).unwrap();
        let sup = f.sup_abs();
        f.scaled(0.99 / sup)
    }

    #[test]
    fn evaluate_joint_examples() {
        let u = JointBox::from_correlation(&TrigSeries::zero(Spin::ONE)).unwrap();
        for a in Outcome::BOTH {
            for b in Outcome::BOTH {
                assert_abs_diff_eq!(u.evaluate_joint(a, b, 0.4, 2.0), 0.25);
            }
        }
        let p = 0.6;
        let w = JointBox::from_correlation(&werner_correlation(p)).unwrap();
        assert_abs_diff_eq!(w.evaluate_joint(Plus, Plus, 1.1, 1.1), (1.0 - p) / 4.0, epsilon = 1e-15);
        let s = JointBox::from_correlation(&scifi()).unwrap();
        let expect = 0.25 * (1.0 + scifi().evaluate(1.5, 3.9));
        assert_abs_diff_eq!(s.evaluate_joint(Plus, Plus, 1.5, 3.9), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(expect, 0.4778, epsilon = 1e-3);
        assert!(matches!(w.evaluate_labels(0, 1, 0.0, 0.0), Err(Error::InvalidOutcome(0))));
    }

    #[test]
    fn from_correlation_examples() {
        let one = JointBox::from_correlation(&TrigSeries::constant_fn(Spin::ZERO, 1.0)).unwrap();
        assert_eq!(one.evaluate_joint(Plus, Plus, 0.0, 0.0), 0.5);
        assert_eq!(one.evaluate_joint(Minus, Minus, 0.0, 0.0), 0.5);
        assert_eq!(one.evaluate_joint(Plus, Minus, 0.0, 0.0), 0.0);
        let too_big = werner_correlation(1.2);
        assert!(matches!(
            JointBox::from_correlation(&too_big),
            Err(Error::NotBounded { .. })
        ));
    }

    #[test]
    fn round_trips_are_coefficient_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let f = random_bounded(&mut rng);
            let jb = JointBox::from_correlation(&f).unwrap();
            let back = jb.correlation_of();
            assert_abs_diff_eq!(back.constant(), f.constant(), epsilon = 1e-15);
            for (p, c) in f.terms() {
                let d = back.coeffs(p.m(), p.n());
                assert_abs_diff_eq!(d.cos, c.cos, epsilon = 1e-15);
                assert_abs_diff_eq!(d.sin, c.sin, epsilon = 1e-15);
            }
            let again = JointBox::from_correlation(&back).unwrap().correlation_of();
            assert_abs_diff_eq!(again.constant(), back.constant(), epsilon = 1e-15);
            for (p, c) in back.terms() {
                assert_abs_diff_eq!(again.coeffs(p.m(), p.n()).cos, c.cos, epsilon = 1e-15);
                assert_abs_diff_eq!(again.coeffs(p.m(), p.n()).sin, c.sin, epsilon = 1e-15);
            }
            assert_eq!(jb.check_no_signalling(), NoSignallingReport { passed: true, worst: 0.0 });
        }
    }

    #[test]
    fn correlation_matches_quadrature_of_signed_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_bounded(&mut rng);
        let jb = JointBox::from_correlation(&f).unwrap();
        let c = jb.correlation_of();
        // project the signed sum onto each basis function by a 2-D uniform rule
        let n = 16;
        let mut c0 = 0.0;
        let mut proj = std::collections::BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (TAU * i as f64 / n as f64, TAU * j as f64 / n as f64);
                let v = jb.box_correlation(a, b);
                c0 += v / (n * n) as f64;
                for p in canonical_pairs(Spin::ONE) {
                    let ph = f64::from(p.m()) * a - f64::from(p.n()) * b;
                    let e = proj.entry(p).or_insert((0.0, 0.0));
                    e.0 += 2.0 * v * ph.cos() / (n * n) as f64;
                    e.1 += 2.0 * v * ph.sin() / (n * n) as f64;
                }
            }
        }
        assert_abs_diff_eq!(c0, c.constant(), epsilon = 1e-9);
        for (p, (cc, ss)) in proj {
            let d = c.coeffs(p.m(), p.n());
            assert_abs_diff_eq!(cc, d.cos, epsilon = 1e-9);
            assert_abs_diff_eq!(ss, d.sin, epsilon = 1e-9);
        }
        let uniform = JointBox::uniform(Spin::ONE).correlation_of();
        assert_eq!(uniform.term_count(), 0);
        assert_eq!(uniform.constant(), 0.0);
        assert_eq!(
            JointBox::from_correlation(&werner_correlation(0.4)).unwrap().correlation_of().coeffs(2, 2).cos,
            -0.4
        );
    }

    #[test]
    fn marginals() {
        let w = JointBox::from_correlation(&werner_correlation(0.9)).unwrap();
        for party in [Party::A, Party::B] {
            for o in Outcome::BOTH {
                assert_abs_diff_eq!(w.marginal(party, o, 0.77).unwrap(), 0.5, epsilon = 1e-15);
            }
        }
        let d = JointBox::deterministic(Plus, Plus);
        assert_eq!(d.marginal(Party::A, Plus, 1.0).unwrap(), 1.0);
        assert_eq!(d.marginal(Party::B, Minus, 1.0).unwrap(), 0.0);
        let sig = signalling_box(0.05).unwrap();
        assert!(matches!(sig.marginal(Party::A, Plus, 0.0), Err(Error::Signalling { .. })));
    }

    #[test]
    fn no_signalling_violation_is_located() {
        let sig = signalling_box(0.1).unwrap();
        let r = sig.check_no_signalling();
        assert!(!r.passed);
        assert_abs_diff_eq!(r.worst, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn conditional_boxes() {
        let f = scifi().scaled(0.9);
        let jb = JointBox::from_correlation(&f).unwrap();
        let b0 = 0.8;
        let cb = jb.conditional_box(Party::B, Plus, b0).unwrap();
        for &a in &[0.0, 1.3, 4.0] {
            let expect = 0.5 * (1.0 + f.evaluate(a, b0));
            assert_abs_diff_eq!(cb.prob(Plus, a), expect, epsilon = 1e-14);
            assert_abs_diff_eq!(cb.prob(Plus, a) + cb.prob(Minus, a), 1.0, epsilon = 1e-12);
        }
        let u = JointBox::uniform(Spin::HALF).conditional_box(Party::A, Minus, 2.0).unwrap();
        assert_abs_diff_eq!(u.prob(Plus, 0.3), 0.5);
        let anti = JointBox::deterministic(Minus, Plus);
        let c = anti.conditional_box(Party::B, Plus, 0.0).unwrap();
        assert_eq!(c.prob(Minus, 1.0), 1.0);
        assert!(matches!(
            anti.conditional_box(Party::B, Minus, 0.0),
            Err(Error::UndefinedConditional { .. })
        ));
    }

    #[test]
    fn invalid_tables_rejected() {
        let s = Spin::HALF;
        let q = TrigSeries::constant_fn(s, 0.25);
        let big = TrigSeries::constant_fn(s, 0.3);
        assert!(matches!(
            JointBox::new(big, q.clone(), q.clone(), q.clone()),
            Err(Error::NotNormalized { .. })
        ));
        let neg = TrigSeries::single(s, 0.25, 1, 0, 0.5, 0.0).unwrap();
        let pos = TrigSeries::single(s, 0.25, 1, 0, -0.5, 0.0).unwrap();
        assert!(matches!(
            JointBox::new(neg, pos, q.clone(), q),
            Err(Error::NegativeProbability { .. })
        ));
    }

    #[test]
    fn json_and_csv() {
        let jb = JointBox::from_correlation(&werner_correlation(0.5)).unwrap();
        let s = serde_json::to_string(&jb).unwrap();
        assert!(s.starts_with(r#"{"pp":{"two_j":2"#));
        let back: JointBox = serde_json::from_str(&s).unwrap();
        assert_eq!(back, jb);
        let csv = jb.to_csv(3);
        assert_eq!(csv.lines().count(), 10);
        assert_eq!(csv.lines().next().unwrap(), "alpha,beta,p_pp,p_pm,p_mp,p_mm");
    }
}
