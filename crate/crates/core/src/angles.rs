//! Principal angles, vector-to-subspace angles and the projection-path
//! angle percentile.

use crate::error::{invalid, mismatch, Result};
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Space {
    Trait,
    Object,
}

/// Orthonormal basis tagged with the space it lives in.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    matrix: DMatrix<f64>,
    space: Space,
}

impl SubspaceBasis {
    pub fn new(matrix: DMatrix<f64>, space: Space) -> Result<Self> {
        let r = matrix.ncols();
        if r > matrix.nrows() {
            return invalid("basis rank exceeds ambient dimension");
        }
        let gram = matrix.tr_mul(&matrix);
        if (gram - DMatrix::<f64>::identity(r, r)).amax() > 1e-10 {
            return invalid("basis columns are not orthonormal");
        }
        Ok(Self { matrix, space })
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    pub fn space(&self) -> Space {
        self.space
    }
    pub fn rank(&self) -> usize {
        self.matrix.ncols()
    }
    pub fn ambient(&self) -> usize {
        self.matrix.nrows()
    }
}

pub(crate) fn acos_deg(c: f64) -> f64 {
    c.clamp(0.0, 1.0).acos().to_degrees()
}

/// Angles (degrees, ascending) between the column spans of two
/// orthonormal matrices. `extended` appends 90° for the rank difference.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>, extended: bool) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return mismatch("principal angles: ambient dimensions differ");
    }
    let k = a.ncols().min(b.ncols());
    let mut out: Vec<f64> = if k == 0 {
        Vec::new()
    } else {
        let s = a.tr_mul(b).singular_values();
        let mut c: Vec<f64> = s.iter().copied().collect();
        c.sort_by(|x, y| y.partial_cmp(x).unwrap_or(core::cmp::Ordering::Equal));
        c.truncate(k);
        c.into_iter().map(acos_deg).collect()
    };
    if extended {
        let extra = a.ncols().max(b.ncols()) - k;
        out.extend(core::iter::repeat(90.0).take(extra));
    }
    Ok(out)
}

/// Largest principal angle, 0 for empty bases.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok(principal_angles(a, b, false)?.last().copied().unwrap_or(0.0))
}

pub fn principal_angles_of(a: &SubspaceBasis, b: &SubspaceBasis, extended: bool) -> Result<Vec<f64>> {
    if a.space() != b.space() {
        return mismatch("principal angles: bases live in different spaces");
    }
    principal_angles(a.matrix(), b.matrix(), extended)
}

/// `arccos(‖Bᵀv‖ / ‖v‖)` in degrees.
pub fn vector_subspace_angle(v: &DVector<f64>, basis: &DMatrix<f64>) -> Result<f64> {
    if v.len() != basis.nrows() {
        return mismatch("vector and basis ambient dimensions differ");
    }
    let nv = v.norm();
    if !(nv > 0.0) {
        return invalid("zero vector has no angle");
    }
    if basis.ncols() == 0 {
        return Ok(90.0);
    }
    Ok(acos_deg(basis.tr_mul(v).norm() / nv))
}

/// Angle of `x` (given as `‖x‖²` and its projected coordinates `p`) with
/// a subspace, in degrees.
pub fn angle_from_parts(norm2: f64, p: &DVector<f64>) -> f64 {
    if !(norm2 > 0.0) {
        return 90.0;
    }
    acos_deg(p.norm() / norm2.sqrt())
}

/// Projection-path angle quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta2Star {
    pub degrees: f64,
    /// set when `v` has no component in the estimated subspace
    pub degenerate: bool,
}

/// `ceil(q·m)`-th order statistic (1-based) of `values`.
pub fn order_statistic(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let m = values.len();
    let k = (q * m as f64).ceil() as usize;
    values[k.clamp(1, m) - 1]
}

/// Quantile over replicates of `arccos(‖M c‖ / ‖c‖)` with `c = V̂ᵀv`.
/// Each alignment matrix has one column per estimated basis direction.
pub fn theta2_star_percentile(
    v: &DVector<f64>,
    v_hat: &DMatrix<f64>,
    aligns: &[DMatrix<f64>],
    q: f64,
) -> Result<Theta2Star> {
    if v.len() != v_hat.nrows() {
        return mismatch("vector and basis ambient dimensions differ");
    }
    if aligns.is_empty() {
        return invalid("no bootstrap replicates cached");
    }
    let c = v_hat.tr_mul(v);
    let nc = c.norm();
    if !(nc > 1e-12 * v.norm()) {
        return Ok(Theta2Star { degrees: 90.0, degenerate: true });
    }
    let mut vals = Vec::with_capacity(aligns.len());
    for m in aligns {
        if m.ncols() != c.len() {
            return mismatch("alignment matrix does not match basis rank");
        }
        vals.push(acos_deg((m * &c).norm() / nc));
    }
    Ok(Theta2Star { degrees: order_statistic(&mut vals, q), degenerate: false })
}
