//! Least-squares loadings, informative rotations and per-collection
//! component matrices.

use crate::error::{mismatch, Result};
use crate::linalg::{argmax_abs, hcat, min_norm_loadings, numerical_rank, sym_eigen_desc};
use crate::search::{BlockCollection, JointStructure};
use alloc::vec::Vec;
use nalgebra::DMatrix;

/// Relative singular value cut for the loadings pseudo-inverse.
pub const LOADINGS_RTOL: f64 = 1e-10;

/// Minimum-norm `L` with `x ≈ L scoresᵀ`, plus a rank-deficiency flag.
pub fn fit_loadings(x: &DMatrix<f64>, scores: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    min_norm_loadings(x, scores, LOADINGS_RTOL)
}

/// Right singular vectors of `[X_k 𝔙]` stacked over `blocks`, computed
/// from the small Gram matrix. Columns are sign-fixed so the entry of
/// largest magnitude is positive; modes come in decreasing energy.
pub fn informative_rotation(blocks: &[&DMatrix<f64>], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = basis.ncols();
    let mut gram = DMatrix::zeros(r, r);
    for x in blocks {
        if x.ncols() != basis.nrows() {
            return mismatch("rotation: object counts differ");
        }
        let xv = *x * basis;
        gram += xv.tr_mul(&xv);
    }
    let (_, mut q) = sym_eigen_desc(&gram);
    for j in 0..r {
        let i = argmax_abs(q.column(j).iter().copied());
        if q[(i, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// One collection's contribution to one block, in rotated coordinates.
#[derive(Debug, Clone)]
pub struct CollectionComponent {
    pub collection: BlockCollection,
    /// `d × r`
    pub loadings: DMatrix<f64>,
    /// `n × r`, orthonormal
    pub scores: DMatrix<f64>,
}

impl CollectionComponent {
    pub fn rank(&self) -> usize {
        self.scores.ncols()
    }

    /// `L Sᵀ`
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.loadings * self.scores.transpose()
    }

    /// Energy `‖l_j‖²` of each mode.
    pub fn mode_energy(&self) -> Vec<f64> {
        self.loadings.column_iter().map(|c| c.norm_squared()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub block: usize,
    pub components: Vec<CollectionComponent>,
    /// concatenated scores were rank deficient
    pub deficient: bool,
    /// numerical rank of the concatenated scores
    pub final_rank: usize,
}

impl BlockDecomposition {
    /// Sum of all component matrices.
    pub fn fitted(&self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(rows, cols);
        for c in &self.components {
            acc.gemm(1.0, &c.loadings, &c.scores.transpose(), 1.0);
        }
        acc
    }

    pub fn residual(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - self.fitted(x.nrows(), x.ncols())
    }
}

/// Rotate every nonempty structure, then regress each block on the
/// scores of all structures that include it.
pub fn decompose(blocks: &[&DMatrix<f64>], structures: &[JointStructure]) -> Result<Vec<BlockDecomposition>> {
    let mut rotated: Vec<(BlockCollection, DMatrix<f64>)> = Vec::new();
    for st in structures.iter().filter(|s| s.rank() > 0) {
        let members: Vec<&DMatrix<f64>> = st.collection.indices().iter().map(|&k| blocks[k]).collect();
        let q = informative_rotation(&members, &st.basis)?;
        rotated.push((st.collection.clone(), &st.basis * q));
    }
    let mut out = Vec::with_capacity(blocks.len());
    for (k, x) in blocks.iter().enumerate() {
        let mine: Vec<&(BlockCollection, DMatrix<f64>)> = rotated.iter().filter(|(c, _)| c.contains(k)).collect();
        if mine.is_empty() {
            out.push(BlockDecomposition { block: k, components: Vec::new(), deficient: false, final_rank: 0 });
            continue;
        }
        let parts: Vec<&DMatrix<f64>> = mine.iter().map(|(_, s)| s).collect();
        let concat = hcat(&parts, x.ncols());
        let (l, deficient) = fit_loadings(x, &concat)?;
        let final_rank = numerical_rank(&concat, 1e-7)?;
        let mut at = 0;
        let mut components = Vec::with_capacity(mine.len());
        for (c, s) in mine {
            let r = s.ncols();
            components.push(CollectionComponent {
                collection: c.clone(),
                loadings: l.columns(at, r).clone_owned(),
                scores: s.clone(),
            });
            at += r;
        }
        out.push(BlockDecomposition { block: k, components, deficient, final_rank });
    }
    Ok(out)
}
