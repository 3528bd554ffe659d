//! Entrywise logit and double centering.

use crate::error::{DivasError, Result};
use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

/// `ln(x / (1 - x))` entrywise; every entry must lie strictly in (0, 1).
pub fn logit(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let v = x[(i, j)];
            if !(v > 0.0 && v < 1.0) {
                return Err(DivasError::InvalidArgument(format!(
                    "logit needs entries in (0, 1); row {} column {} holds {v}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(x.map(|v| (v / (1.0 - v)).ln()))
}

/// Means removed by `preprocess`, summed over sweeps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RemovedMeans {
    /// one value per trait (row)
    pub trait_means: Option<DVector<f64>>,
    /// one value per object (column)
    pub object_means: Option<DVector<f64>>,
}

/// Logit, then row centering, then column centering, alternated for two
/// sweeps so both hold together.
pub fn preprocess(
    x: &DMatrix<f64>,
    logit_transform: bool,
    trait_center: bool,
    object_center: bool,
) -> Result<(DMatrix<f64>, RemovedMeans)> {
    let mut m = if logit_transform { logit(x)? } else { x.clone() };
    let (d, n) = m.shape();
    let mut removed = RemovedMeans {
        trait_means: trait_center.then(|| DVector::zeros(d)),
        object_means: object_center.then(|| DVector::zeros(n)),
    };
    let sweeps = if trait_center && object_center { 2 } else { 1 };
    for _ in 0..sweeps {
        if let Some(acc) = removed.trait_means.as_mut() {
            let means: Vec<f64> = m.row_iter().map(|r| r.mean()).collect();
            for i in 0..d {
                for j in 0..n {
                    m[(i, j)] -= means[i];
                }
                acc[i] += means[i];
            }
        }
        if let Some(acc) = removed.object_means.as_mut() {
            for j in 0..n {
                let mean = m.column(j).mean();
                m.column_mut(j).add_scalar_mut(-mean);
                acc[j] += mean;
            }
        }
    }
    Ok((m, removed))
}
