//! Numerical tolerances used across the crate.
//!
//! | Constant | Value | Used for |
//! |----------|-------|----------|
//! | [`COEFF_EQ`] | 1e-12 | coefficient equality, normalization, no-signalling residuals |
//! | [`SUP_BOUND`] | 1e-8 | grid-then-refine suprema |
//! | [`BOUNDED_SLACK`] | 1e-9 | accepting `sup |C| <= 1` |
//! | [`NONNEG_SLACK`] | 1e-10 | accepting a probability table as non-negative |
//! | [`CONDITIONAL_FLOOR`] | 1e-12 | smallest marginal a conditional box may divide by |
//! | [`AFFINE_RESIDUAL`] | 1e-10 | "transforms fundamentally" affine fits |
//! | [`POSITIVITY`] | 1e-9 | cone positivity of bilinear forms |
//! | [`BELL_SLACK`] | 1e-9 | amount a Bell expression must exceed its bound by |
//! | [`SIGMA_MARGIN`] | 4 | standard errors in statistical verdicts |

pub const COEFF_EQ: f64 = 1e-12;
pub const SUP_BOUND: f64 = 1e-8;
pub const BOUNDED_SLACK: f64 = 1e-9;
pub const NONNEG_SLACK: f64 = 1e-10;
pub const CONDITIONAL_FLOOR: f64 = 1e-12;
pub const AFFINE_RESIDUAL: f64 = 1e-10;
pub const POSITIVITY: f64 = 1e-9;
pub const BELL_SLACK: f64 = 1e-9;

pub const SIGMA_MARGIN: f64 = 4.0;

/// Grid points per axis for 2-D suprema. A series with 2J <= 20 is sampled
/// at least 18 times per period of its fastest term.
pub const GRID_PER_AXIS: usize = 720;
