//! Least-squares helpers over `nalgebra`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff below which a design matrix is rank deficient.
const RANK_CUTOFF: f64 = 1e-10;

/// Solves `min |design · x − rhs|` for every column of `rhs`, rejecting
/// rank-deficient designs.
pub fn least_squares(design: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let needed = design.ncols();
    if design.nrows() < needed {
        return Err(Error::Degenerate {
            rank: design.nrows(),
            needed,
        });
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * RANK_CUTOFF * (design.nrows().max(needed) as f64).sqrt();
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < needed || smax == 0.0 {
        return Err(Error::Degenerate { rank, needed });
    }
    svd.solve(rhs, cutoff)
        .map_err(|e| Error::arg("design", e.to_string()))
}

/// Single right-hand-side convenience wrapper.
pub fn least_squares_vec(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let rhs = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let x = least_squares(design, &rhs)?;
    Ok(x.column(0).into_owned())
}

/// Root-mean-square of the residual `design · x − rhs`.
pub fn rms_residual(design: &DMatrix<f64>, x: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
    let r = design * x - rhs;
    (r.norm_squared() / r.len().max(1) as f64).sqrt()
}
