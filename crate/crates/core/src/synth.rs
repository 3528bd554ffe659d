//! Synthetic multi-block data with known partially-shared structure.
//!
//! The default design has three blocks sharing one fully-joint direction,
//! one direction per pair of blocks (pairwise at a fixed principal angle)
//! and no individual structure. Scores have equal-magnitude entries when
//! the sign-pattern construction applies; otherwise they come from
//! Gram-Schmidt plus a Cholesky factor of the requested sibling Gram.

use crate::error::{invalid, DivasError, Result};
use crate::linalg::orthonormalize;
use crate::rng::{gaussian_matrix, normal, shuffle, sign, stream, stream_id, Rng, PURPOSE_SYNTH};
use crate::search::BlockCollection;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LoadingPattern {
    Pinstripe,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub n: usize,
    pub trait_dims: Vec<usize>,
    /// `(collection, rank)`, zero-based block indices
    pub collection_ranks: Vec<(Vec<usize>, usize)>,
    /// principal angle between sibling partially-shared subspaces, degrees
    pub pairwise_trait_angle: f64,
    /// per-block signal strength: each mode has operator norm
    /// `snr · √(d ∨ n)` against unit-variance noise
    pub snr: Vec<f64>,
    pub noise_scale: f64,
    pub seed: u64,
    pub loading_pattern: LoadingPattern,
}

impl SynthSpec {
    fn three_block(dims: [usize; 3], seed: u64) -> Self {
        Self {
            n: 400,
            trait_dims: dims.to_vec(),
            collection_ranks: alloc::vec![
                (alloc::vec![0, 1, 2], 1),
                (alloc::vec![0, 1], 1),
                (alloc::vec![0, 2], 1),
                (alloc::vec![1, 2], 1),
            ],
            pairwise_trait_angle: 60.0,
            snr: alloc::vec![7.0, 8.2, 5.7],
            noise_scale: 1.0,
            seed,
            loading_pattern: LoadingPattern::Pinstripe,
        }
    }

    /// Block sizes 200/400/10000 over 400 objects.
    pub fn paper_fig3(seed: u64) -> Self {
        Self::three_block([200, 400, 10000], seed)
    }

    /// Same design with the large block cut to 2000 traits.
    pub fn desk(seed: u64) -> Self {
        Self::three_block([200, 400, 2000], seed)
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "paper-fig3" => Ok(Self::paper_fig3(seed)),
            "desk" => Ok(Self::desk(seed)),
            other => invalid(alloc::format!("unknown preset `{other}`")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.trait_dims.len();
        if k == 0 || self.n < 2 {
            return invalid("need at least one block and two objects");
        }
        if self.snr.len() != k {
            return invalid("one snr value per block");
        }
        if !(self.noise_scale >= 0.0) || !(0.0..=90.0).contains(&self.pairwise_trait_angle) {
            return invalid("noise scale must be nonnegative and the angle in [0, 90]");
        }
        for (c, r) in &self.collection_ranks {
            if c.is_empty() || c.iter().any(|&i| i >= k) || *r == 0 {
                return invalid("collections must be nonempty, in range, with positive rank");
            }
        }
        for (blk, &d) in self.trait_dims.iter().enumerate() {
            let total: usize = self.collection_ranks.iter().filter(|(c, _)| c.contains(&blk)).map(|(_, r)| r).sum();
            if total > d.min(self.n) {
                return invalid(alloc::format!("block {} asks for rank {total} beyond {}", blk + 1, d.min(self.n)));
            }
        }
        let total: usize = self.collection_ranks.iter().map(|(_, r)| r).sum();
        if total > self.n {
            return invalid("total score rank exceeds the object count");
        }
        Ok(())
    }
}

/// One true component restricted to one block.
#[derive(Debug, Clone)]
pub struct TrueComponent {
    pub collection: BlockCollection,
    pub block: usize,
    pub loadings: DMatrix<f64>,
    pub scores: DMatrix<f64>,
}

impl TrueComponent {
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.loadings * self.scores.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// score basis per entry of `collection_ranks`
    pub scores: Vec<(BlockCollection, DMatrix<f64>)>,
    pub components: Vec<TrueComponent>,
    pub noise: Vec<DMatrix<f64>>,
}

impl GroundTruth {
    /// Orthonormal basis of block `k`'s true trait-space signal.
    pub fn trait_basis(&self, k: usize, n: usize) -> Result<DMatrix<f64>> {
        let parts: Vec<&DMatrix<f64>> = self.components.iter().filter(|c| c.block == k).map(|c| &c.scores).collect();
        crate::linalg::span_basis(&crate::linalg::hcat(&parts, n), 1e-10)
    }

    /// Orthonormal basis of block `k`'s true object-space signal.
    pub fn object_basis(&self, k: usize) -> Result<DMatrix<f64>> {
        let a = self.signal(k).ok_or_else(|| DivasError::InvalidArgument("block has no signal".into()))?;
        let svd = crate::linalg::thin_svd(&a)?;
        let r = crate::linalg::numerical_rank(&a, 1e-9 * svd.s[0])?;
        Ok(svd.u.columns(0, r).clone_owned())
    }

    /// `Σ_c A_{c,k}`, `None` when the block has no components.
    pub fn signal(&self, k: usize) -> Option<DMatrix<f64>> {
        let mut it = self.components.iter().filter(|c| c.block == k);
        let first = it.next()?;
        let mut a = first.matrix();
        for c in it {
            a += c.matrix();
        }
        Some(a)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub blocks: Vec<DMatrix<f64>>,
    pub truth: GroundTruth,
}

fn sign_pattern_scores(n: usize, cos: f64, rng: &mut Rng) -> Option<(DVector<f64>, [DVector<f64>; 3])> {
    let big = n as f64 * (1.0 + 3.0 * cos) / 8.0;
    let small = n as f64 * (1.0 - cos) / 8.0;
    if (big - big.round()).abs() > 1e-9 || (small - small.round()).abs() > 1e-9 {
        return None;
    }
    let (big, small) = (big.round() as usize, small.round() as usize);
    let mut pats: Vec<[f64; 3]> = Vec::with_capacity(n);
    pats.extend(core::iter::repeat([1.0, 1.0, 1.0]).take(big));
    pats.extend(core::iter::repeat([-1.0, -1.0, -1.0]).take(big));
    for p in [[-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
        pats.extend(core::iter::repeat(p).take(small));
    }
    let s0: Vec<f64> = (0..n).map(|_| sign(rng)).collect();
    shuffle(rng, &mut pats);
    let root = (n as f64).sqrt();
    let full = DVector::from_iterator(n, s0.iter().map(|s| s / root));
    let pair = |j: usize| DVector::from_iterator(n, (0..n).map(|i| s0[i] * pats[i][j] / root));
    Some((full, [pair(0), pair(1), pair(2)]))
}

fn is_three_block_design(spec: &SynthSpec) -> bool {
    if spec.trait_dims.len() != 3 || spec.collection_ranks.len() != 4 {
        return false;
    }
    let want: [&[usize]; 4] = [&[0, 1, 2], &[0, 1], &[0, 2], &[1, 2]];
    spec.collection_ranks.iter().zip(want).all(|((c, r), w)| c.as_slice() == w && *r == 1)
}

/// Score bases in `collection_ranks` order via Gram-Schmidt and sibling
/// Gram factorization.
fn general_scores(spec: &SynthSpec, rng: &mut Rng) -> Result<Vec<DMatrix<f64>>> {
    let n = spec.n;
    let k = spec.trait_dims.len();
    let total: usize = spec.collection_ranks.iter().map(|(_, r)| r).sum();
    let q = orthonormalize(&gaussian_matrix(rng, n, total))?;
    let mut out: Vec<DMatrix<f64>> = alloc::vec![DMatrix::zeros(n, 0); spec.collection_ranks.len()];
    // siblings: non-full, non-singleton collections share mutual angles
    let siblings: Vec<usize> = (0..spec.collection_ranks.len())
        .filter(|&i| {
            let l = spec.collection_ranks[i].0.len();
            l > 1 && l < k
        })
        .collect();
    let cos = spec.pairwise_trait_angle.to_radians().cos();
    let mut at = 0;
    for (i, (_, r)) in spec.collection_ranks.iter().enumerate() {
        if !siblings.contains(&i) {
            out[i] = q.columns(at, *r).clone_owned();
            at += r;
        }
    }
    if !siblings.is_empty() {
        let idx: Vec<(usize, usize)> = siblings.iter().flat_map(|&s| (0..spec.collection_ranks[s].1).map(move |c| (s, c))).collect();
        let m = idx.len();
        let g = DMatrix::from_fn(m, m, |a, b| {
            if a == b {
                1.0
            } else if idx[a].0 != idx[b].0 && idx[a].1 == idx[b].1 {
                cos
            } else {
                0.0
            }
        });
        let chol = Cholesky::new(g).ok_or_else(|| DivasError::InvalidArgument("sibling angle infeasible for this design".into()))?;
        let l = chol.l();
        let mixed = q.columns(at, m) * l.transpose();
        let mut col = 0;
        for &s in &siblings {
            let r = spec.collection_ranks[s].1;
            out[s] = mixed.columns(col, r).clone_owned();
            col += r;
        }
    }
    Ok(out)
}

fn loadings(d: usize, position: usize, pattern: LoadingPattern, norm: f64, rng: &mut Rng) -> DVector<f64> {
    let mut l = match pattern {
        LoadingPattern::Pinstripe => {
            let width = (d / 40).max(1);
            DVector::from_iterator(
                d,
                (0..d).map(|i| {
                    let stripe = i / width;
                    let on = match position {
                        0 => stripe % 2 == 0,
                        p if p % 2 == 1 => stripe % 4 == 1,
                        _ => stripe % 4 == 3,
                    };
                    if on {
                        1.0
                    } else {
                        0.0
                    }
                }),
            )
        }
        LoadingPattern::Random => DVector::from_iterator(d, (0..d).map(|_| normal(rng))),
    };
    let nl = l.norm();
    if nl > 0.0 {
        l *= norm / nl;
    }
    l
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let n = spec.n;
    let k = spec.trait_dims.len();
    let mut rng = stream(spec.seed, stream_id(PURPOSE_SYNTH, 0, 0));
    let cos = spec.pairwise_trait_angle.to_radians().cos();
    let score_list: Vec<DMatrix<f64>> = match (is_three_block_design(spec), sign_pattern_scores(n, cos, &mut rng)) {
        (true, Some((full, pairs))) => {
            let col = |v: &DVector<f64>| DMatrix::from_column_slice(n, 1, v.as_slice());
            alloc::vec![col(&full), col(&pairs[0]), col(&pairs[1]), col(&pairs[2])]
        }
        _ => general_scores(spec, &mut rng)?,
    };
    let mut components = Vec::new();
    let mut blocks = Vec::with_capacity(k);
    let mut noise = Vec::with_capacity(k);
    for (blk, &d) in spec.trait_dims.iter().enumerate() {
        let norm = spec.snr[blk] * (d.max(n) as f64).sqrt();
        let mut lrng = stream(spec.seed, stream_id(PURPOSE_SYNTH, blk as u64 + 1, 0));
        let mut x = DMatrix::zeros(d, n);
        let mut position = 0;
        for (ci, (c, r)) in spec.collection_ranks.iter().enumerate() {
            if !c.contains(&blk) {
                continue;
            }
            let mut lmat = DMatrix::zeros(d, *r);
            for j in 0..*r {
                lmat.set_column(j, &loadings(d, position, spec.loading_pattern, norm, &mut lrng));
                position += 1;
            }
            let comp = TrueComponent {
                collection: BlockCollection::new(c.clone())?,
                block: blk,
                loadings: lmat,
                scores: score_list[ci].clone(),
            };
            x.gemm(1.0, &comp.loadings, &comp.scores.transpose(), 1.0);
            components.push(comp);
        }
        let mut nrng = stream(spec.seed, stream_id(PURPOSE_SYNTH, blk as u64 + 1, 1));
        let e = gaussian_matrix(&mut nrng, d, n) * spec.noise_scale;
        x += &e;
        blocks.push(x);
        noise.push(e);
    }
    let scores = spec
        .collection_ranks
        .iter()
        .zip(score_list)
        .map(|((c, _), s)| Ok((BlockCollection::new(c.clone())?, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthData { blocks, truth: GroundTruth { scores, components, noise } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angles::max_principal_angle;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec { n: 48, trait_dims: alloc::vec![20, 30, 50], ..SynthSpec::desk(seed) }
    }

    #[test]
    fn sibling_angles_and_orthogonality() {
        let data = generate(&small(3)).unwrap();
        let s = &data.truth.scores;
        for i in 1..4 {
            for j in (i + 1)..4 {
                let a = max_principal_angle(&s[i].1, &s[j].1).unwrap();
                assert!((a - 60.0).abs() < 1e-6, "{a}");
            }
            assert!(s[0].1.tr_mul(&s[i].1).norm() < 1e-12);
        }
        // equal magnitudes on the sign-pattern path
        let m = 1.0 / (48.0_f64).sqrt();
        assert!(s[0].1.iter().all(|x| (x.abs() - m).abs() < 1e-14));
    }

    #[test]
    fn fallback_construction_keeps_angles() {
        let spec = SynthSpec { n: 37, ..small(4) };
        let data = generate(&spec).unwrap();
        let s = &data.truth.scores;
        let a = max_principal_angle(&s[1].1, &s[2].1).unwrap();
        assert!((a - 60.0).abs() < 1e-6);
        assert!(s[0].1.tr_mul(&s[3].1).norm() < 1e-10);
    }

    #[test]
    fn noiseless_blocks_have_rank_three() {
        let spec = SynthSpec { noise_scale: 0.0, ..small(5) };
        let data = generate(&spec).unwrap();
        for x in &data.blocks {
            let s = x.clone().singular_values();
            let mut v: Vec<f64> = s.iter().copied().collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(v[2] > 1e-6 * v[0] && v[3] < 1e-10 * v[0]);
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let a = generate(&small(6)).unwrap();
        let b = generate(&small(6)).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert_eq!(x, y);
        }
    }
}
