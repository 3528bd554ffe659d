//! Noise-level estimation, singular value shrinkage and low-rank signal
//! estimation for one data block.

use crate::error::{invalid, DivasError, Result};
use crate::linalg::{check_finite, thin_svd, ThinSvd};
use crate::mp::{aspect_ratio, MpLaw};
use alloc::format;
use alloc::string::String;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

/// One observed block: `traits × objects`, rows are traits.
#[derive(Debug, Clone)]
pub struct DataBlock {
    values: DMatrix<f64>,
    name: String,
    trait_centered: bool,
    object_centered: bool,
    logit_transformed: bool,
}

impl DataBlock {
    pub fn new(name: impl Into<String>, values: DMatrix<f64>) -> Result<Self> {
        Self::with_flags(name, values, false, false, false)
    }

    /// `trait_centered`: every row sums to zero. `object_centered`: every
    /// column sums to zero. Both are checked.
    pub fn with_flags(
        name: impl Into<String>,
        values: DMatrix<f64>,
        trait_centered: bool,
        object_centered: bool,
        logit_transformed: bool,
    ) -> Result<Self> {
        let (d, n) = values.shape();
        if d < 2 || n < 2 {
            return invalid(format!("block must be at least 2×2, got {d}×{n}"));
        }
        check_finite(&values, "data block")?;
        if trait_centered {
            for i in 0..d {
                let row = values.row(i);
                if row.sum().abs() > 1e-8 * row.norm().max(f64::MIN_POSITIVE) {
                    return invalid(format!("row {i} is not centered"));
                }
            }
        }
        if object_centered {
            for j in 0..n {
                let col = values.column(j);
                if col.sum().abs() > 1e-8 * col.norm().max(f64::MIN_POSITIVE) {
                    return invalid(format!("column {j} is not centered"));
                }
            }
        }
        Ok(Self { values, name: name.into(), trait_centered, object_centered, logit_transformed })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn traits(&self) -> usize {
        self.values.nrows()
    }
    pub fn objects(&self) -> usize {
        self.values.ncols()
    }
    pub fn trait_centered(&self) -> bool {
        self.trait_centered
    }
    pub fn object_centered(&self) -> bool {
        self.object_centered
    }
    pub fn logit_transformed(&self) -> bool {
        self.logit_transformed
    }
}

/// Shrinkage rule applied at unit noise scale. Thresholds are in scaled
/// units; `None` picks the default for the aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinker {
    Optimal,
    Soft(Option<f64>),
    Hard(Option<f64>),
}

impl Shrinker {
    pub fn apply(&self, nu: f64, beta: f64) -> f64 {
        match *self {
            Shrinker::Optimal => shrink_optimal(nu, beta),
            Shrinker::Soft(c) => shrink_soft(nu, c.unwrap_or_else(|| bulk_edge(beta))),
            Shrinker::Hard(c) => shrink_hard(nu, c.unwrap_or_else(|| optimal_hard_threshold(beta))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Shrinker::Optimal => "optimal",
            Shrinker::Soft(_) => "soft",
            Shrinker::Hard(_) => "hard",
        }
    }
}

/// Upper edge of the scaled noise bulk, `1 + √β`.
pub fn bulk_edge(beta: f64) -> f64 {
    1.0 + beta.sqrt()
}

/// Hard threshold minimizing asymptotic Frobenius loss at known noise level.
pub fn optimal_hard_threshold(beta: f64) -> f64 {
    let b1 = beta + 1.0;
    (2.0 * b1 + 8.0 * beta / (b1 + (beta * beta + 14.0 * beta + 1.0).sqrt())).sqrt()
}

/// Operator-norm optimal shrinker at unit noise.
pub fn shrink_optimal(nu: f64, beta: f64) -> f64 {
    if nu < bulk_edge(beta) {
        return 0.0;
    }
    let t = nu * nu - beta - 1.0;
    let disc = (t * t - 4.0 * beta).max(0.0);
    ((t + disc.sqrt()) / 2.0).sqrt()
}

pub fn shrink_soft(nu: f64, c: f64) -> f64 {
    (nu - c).max(0.0)
}

pub fn shrink_hard(nu: f64, c: f64) -> f64 {
    if nu >= c {
        nu
    } else {
        0.0
    }
}

/// Median of a spectrum; even length averages the central pair.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Noise scale from the median singular value.
pub fn estimate_sigma(raw_singulars: &[f64], d: usize, n: usize) -> Result<f64> {
    if raw_singulars.len() < 2 {
        return invalid("need at least two singular values");
    }
    if raw_singulars.iter().all(|&x| x == 0.0) {
        return invalid("all singular values are zero");
    }
    let beta = aspect_ratio(d, n);
    let med_law = MpLaw::standard(beta)?.quantile(0.5)?;
    let long = d.max(n) as f64;
    Ok(median(raw_singulars) / (long * med_law).sqrt())
}

/// Per-block output of signal extraction. Keeps the full data SVD because
/// imputation, the bootstrap and the search reuse it.
#[derive(Debug, Clone)]
pub struct SignalEstimate {
    pub svd: ThinSvd,
    /// shrunken values, same length as the spectrum (zeros past the rank)
    pub shrunk: DVector<f64>,
    pub rank: usize,
    pub sigma_hat: f64,
    pub beta: f64,
    pub traits: usize,
    pub objects: usize,
}

impl SignalEstimate {
    pub fn u_hat(&self) -> DMatrix<f64> {
        self.svd.u.columns(0, self.rank).clone_owned()
    }
    pub fn v_hat(&self) -> DMatrix<f64> {
        self.svd.v.columns(0, self.rank).clone_owned()
    }
    pub fn d_hat(&self) -> DVector<f64> {
        self.shrunk.rows(0, self.rank).clone_owned()
    }
    pub fn raw_singulars(&self) -> &DVector<f64> {
        &self.svd.s
    }
    /// `√(d ∨ n)`
    pub fn long_root(&self) -> f64 {
        (self.traits.max(self.objects) as f64).sqrt()
    }
    /// Low-rank estimate `Û D̂ V̂ᵀ`.
    pub fn signal(&self) -> DMatrix<f64> {
        let mut u = self.u_hat();
        for j in 0..self.rank {
            u.column_mut(j).scale_mut(self.shrunk[j]);
        }
        u * self.v_hat().transpose()
    }
}

pub fn extract_signal(block: &DataBlock, shrinker: Shrinker) -> Result<SignalEstimate> {
    extract_from_values(block.values(), shrinker)
}

pub fn extract_from_values(x: &DMatrix<f64>, shrinker: Shrinker) -> Result<SignalEstimate> {
    let (d, n) = x.shape();
    let svd = thin_svd(x)?;
    let m = svd.s.len();
    let beta = aspect_ratio(d, n);
    let long_root = (d.max(n) as f64).sqrt();
    let spectrum: alloc::vec::Vec<f64> = svd.s.iter().copied().collect();
    if spectrum.iter().all(|&s| s == 0.0) {
        return Ok(SignalEstimate {
            svd,
            shrunk: DVector::zeros(m),
            rank: 0,
            sigma_hat: 0.0,
            beta,
            traits: d,
            objects: n,
        });
    }
    let sigma_hat = estimate_sigma(&spectrum, d, n)?;
    if !(sigma_hat > 0.0) {
        return Err(DivasError::Numerical("noise scale estimate is zero".into()));
    }
    let scale = sigma_hat * long_root;
    let mut shrunk = DVector::zeros(m);
    for i in 0..m {
        shrunk[i] = scale * shrinker.apply(spectrum[i] / scale, beta);
    }
    let rank = shrunk.iter().take_while(|&&x| x > 0.0).count();
    for i in rank..m {
        shrunk[i] = 0.0;
    }
    Ok(SignalEstimate { svd, shrunk, rank, sigma_hat, beta, traits: d, objects: n })
}
