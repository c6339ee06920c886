//! Correlation series, local models and Bell witnesses for two-party boxes
//! with rotational inputs.
//!
//! The entry points by task:
//!
//! - [`corrfn`]: the series `C(α, β)`, evaluation, fitting, relational core.
//! - [`bci`]: CHSH, chained inequalities, the witness search and the
//!   shot-noise protocol.
//! - [`lhv`]: noise thresholds, locality certificates and explicit local
//!   models with samplers.
//! - [`quantum`]: two-qubit polarizer boxes and the oscillator time series.
//! - [`sodbox`]: boxes with unit-vector inputs and their quantum premises.
//! - [`cli`]: the `so2bell` command line.
//!
//! Every one of these has a runnable program under `examples/`, e.g.
//! `cargo run --release --example lhv_model`.

pub mod angle;
pub mod bci;
pub mod cli;
pub mod corrfn;
pub mod error;
pub mod format;
pub mod jointbox;
pub mod lhv;
pub mod linalg;
pub mod optim;
pub mod quantum;
pub mod rng;
pub mod sodbox;
pub mod tol;

pub use corrfn::{Coeffs, CorrelationFunction, Correlator, FreqPair, PolarForm, Spin, TrigSeries};
pub use error::{Error, Result};
pub use jointbox::{JointBox, Outcome, Party, So2Box};
