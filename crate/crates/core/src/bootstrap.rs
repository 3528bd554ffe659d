//! Rotational bootstrap: perturbation angle bounds, rank filtering and the
//! replicate alignment cache.
//!
//! Replicates are `X° = U° D̂ V°ᵀ + Ê` where `Ê` shares the data's singular
//! vectors. Working in those coordinates the Gram matrix of `X°` on the
//! short side is `Σ² + W S Wᵀ` with a rank `2r̂` correction, so the leading
//! replicate singular pairs come from a small secular problem instead of a
//! full SVD.

use crate::angles::{acos_deg, order_statistic};
use crate::error::{invalid, DivasError, Result};
use crate::linalg::{orthonormalize, span_basis, sym_eigen_desc};
use crate::mp::random_direction_angle_quantile;
use crate::noise::{mp_draws, ImputedNoise};
use crate::rng::{gaussian_matrix, stream, stream_id, Rng, PURPOSE_BOOTSTRAP};
use crate::signal::SignalEstimate;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapConfig {
    pub replications: usize,
    pub xi: f64,
    pub bound_quantile: f64,
    pub theta0_quantile: f64,
    /// redraw the imputed singular values for every replication
    pub reimpute: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 400,
            xi: 1.0 - 2.0 / (1.0 + 5.0_f64.sqrt()),
            bound_quantile: 0.95,
            theta0_quantile: 0.05,
            reimpute: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return invalid("bootstrap needs at least one replication");
        }
        if !(self.xi > 0.0 && self.xi <= 0.5) {
            return invalid("xi must lie in (0, 0.5]");
        }
        for q in [self.bound_quantile, self.theta0_quantile] {
            if !(q > 0.0 && q < 1.0) {
                return invalid("quantiles must lie in (0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerturbationBounds {
    /// trait-space bound, degrees
    pub phi_hat: f64,
    /// object-space bound, degrees
    pub psi_hat: f64,
    pub theta0_trait: f64,
    pub theta0_object: f64,
    pub filtered_rank: usize,
    pub replications: usize,
    pub quantile: f64,
}

/// Replicate alignment matrices: truth basis (all `r̂` columns) against the
/// leading `ř` replicate estimate directions, so each matrix is `r̂ × ř`.
#[derive(Debug, Clone, Default)]
pub struct BootstrapCache {
    pub trait_aligns: Vec<DMatrix<f64>>,
    pub object_aligns: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    /// `None` when no rank survives filtering
    pub bounds: Option<PerturbationBounds>,
    pub cache: BootstrapCache,
    /// leading `ř` data directions
    pub u_check: DMatrix<f64>,
    pub v_check: DMatrix<f64>,
    /// bound-quantile order statistic of the max angle at each rank 1..=r̂
    pub trait_order_stats: Vec<f64>,
    pub object_order_stats: Vec<f64>,
    pub theta0_trait_by_rank: Vec<f64>,
    pub theta0_object_by_rank: Vec<f64>,
}

impl BootstrapOutcome {
    pub fn filtered_rank(&self) -> usize {
        self.bounds.map(|b| b.filtered_rank).unwrap_or(0)
    }
}

/// Raw per-replicate angles, `[m][j]` for ranks `j = 1..=r̂`.
#[derive(Debug, Clone)]
pub struct ReplicateAngles {
    pub trait_angles: Vec<Vec<f64>>,
    pub object_angles: Vec<Vec<f64>>,
    pub trait_aligns: Vec<DMatrix<f64>>,
    pub object_aligns: Vec<DMatrix<f64>>,
}

/// Centering flags of the data, applied to the random truth bases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Centering {
    pub trait_centered: bool,
    pub object_centered: bool,
}

fn random_basis(rng: &mut Rng, dim: usize, r: usize, center: bool) -> Result<DMatrix<f64>> {
    let mut g = gaussian_matrix(rng, dim, r);
    if center {
        for mut col in g.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }
    orthonormalize(&g)
}

fn min_singular(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 {
        return 1.0;
    }
    m.clone().singular_values().iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Top-`k` eigenpairs of `diag(dg) + W S Wᵀ`, eigenvalues descending.
pub fn top_eigenpairs_dplr(
    dg: &[f64],
    w: &DMatrix<f64>,
    s: &DMatrix<f64>,
    s_inv: &DMatrix<f64>,
    k: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = dg.len();
    let p = w.ncols();
    if k == 0 {
        return Ok((Vec::new(), DMatrix::zeros(m, 0)));
    }
    // p^3 per count against m^3 for the dense route
    if (p * p * p + m * p * p) * 60 * k > m * m * m / 2 {
        return dense_top(dg, w, s, k);
    }
    match secular_top(dg, w, s, s_inv, k) {
        Ok(r) => Ok(r),
        Err(_) => dense_top(dg, w, s, k),
    }
}

fn apply_dplr(dg: &[f64], w: &DMatrix<f64>, s: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = w * (s * w.tr_mul(x));
    for j in 0..x.ncols() {
        for i in 0..dg.len() {
            out[(i, j)] += dg[i] * x[(i, j)];
        }
    }
    out
}

fn dense_top(dg: &[f64], w: &DMatrix<f64>, s: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut kmat = w * s * w.transpose();
    for i in 0..dg.len() {
        kmat[(i, i)] += dg[i];
    }
    let (vals, vecs) = sym_eigen_desc(&kmat);
    Ok((vals.iter().take(k).copied().collect(), vecs.columns(0, k).clone_owned()))
}

fn positive_count(m: &DMatrix<f64>) -> usize {
    let (vals, _) = sym_eigen_desc(m);
    vals.iter().filter(|&&x| x > 0.0).count()
}

fn secular_top(
    dg: &[f64],
    w: &DMatrix<f64>,
    s: &DMatrix<f64>,
    s_inv: &DMatrix<f64>,
    k: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = dg.len();
    let p = w.ncols();
    let neg_sinv = -s_inv;
    let base = positive_count(&neg_sinv) as isize;
    let dmax = dg.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let wn = w.norm();
    let upper = dmax + s.norm() * wn * wn + 1.0;
    let scale = upper.max(1.0);
    let nudge = |t: f64| -> f64 {
        let mut t = t;
        for _ in 0..4 {
            if dg.iter().any(|&d| (d - t).abs() <= 4.0 * f64::EPSILON * scale) {
                t += 16.0 * f64::EPSILON * scale;
            } else {
                break;
            }
        }
        t
    };
    // number of eigenvalues strictly above t
    let count = |t: f64| -> usize {
        let t = nudge(t);
        let mut inner = neg_sinv.clone();
        let mut above = 0;
        let mut scaled = w.clone();
        for i in 0..m {
            let delta = dg[i] - t;
            if delta > 0.0 {
                above += 1;
            }
            scaled.row_mut(i).scale_mut(1.0 / delta);
        }
        inner -= w.tr_mul(&scaled);
        let c = above as isize + positive_count(&inner) as isize - base;
        c.max(0) as usize
    };
    let mut lo = alloc::vec![0.0_f64; k];
    let mut hi = alloc::vec![upper; k];
    for j in 0..k {
        // eigenvalue j (0-based) is the largest t with count(t) >= j+1
        let mut iter = 0;
        while hi[j] - lo[j] > 1e-15 * hi[j].max(1e-300) && iter < 200 {
            iter += 1;
            let mid = 0.5 * (lo[j] + hi[j]);
            if mid <= lo[j] || mid >= hi[j] {
                break;
            }
            let c = count(mid);
            for jj in j..k {
                if c >= jj + 1 {
                    lo[jj] = lo[jj].max(mid);
                } else {
                    hi[jj] = hi[jj].min(mid);
                }
            }
        }
    }
    let vals: Vec<f64> = (0..k).map(|j| 0.5 * (lo[j] + hi[j])).collect();
    // every eigenvector for λ lies in range(Δ(λ)⁻¹ W), so Rayleigh-Ritz on
    // the union of those ranges recovers the leading pairs, clusters included
    let mut cand = DMatrix::zeros(m, p * k);
    for (j, &lam) in vals.iter().enumerate() {
        let lam = nudge(lam);
        let mut scaled = w.clone();
        for i in 0..m {
            scaled.row_mut(i).scale_mut(1.0 / (dg[i] - lam));
        }
        for c in 0..p {
            let col = scaled.column(c);
            let nc = col.norm();
            if nc > 0.0 {
                cand.set_column(j * p + c, &(col / nc));
            }
        }
    }
    let q = span_basis(&cand, 1e-13)?;
    if q.ncols() < k {
        return Err(DivasError::Numerical("secular subspace too small".into()));
    }
    let kq = apply_dplr(dg, w, s, &q);
    let h = q.tr_mul(&kq);
    let (hv, hvec) = sym_eigen_desc(&h);
    let top = hvec.columns(0, k).clone_owned();
    let y = &q * &top;
    let ky = &kq * &top;
    for c in 0..k {
        let r = (ky.column(c) - y.column(c) * hv[c]).norm();
        if r > 1e-9 * scale || (hv[c] - vals[c]).abs() > 1e-8 * scale {
            return Err(DivasError::Numerical("secular eigenpair residual too large".into()));
        }
    }
    let hv: Vec<f64> = hv.iter().take(k).copied().collect();
    Ok((hv, y))
}

/// Run the replicate loop and return raw angles plus full `r̂ × r̂`
/// alignments.
pub fn replicate_angles(
    est: &SignalEstimate,
    noise: &ImputedNoise,
    centering: Centering,
    replications: usize,
    reimpute: bool,
    seed: u64,
    block: u64,
) -> Result<ReplicateAngles> {
    let r = est.rank;
    if r == 0 {
        return invalid("bootstrap needs a nonempty signal estimate");
    }
    let d = est.traits;
    let n = est.objects;
    let tall = d >= n;
    let m = d.min(n);
    let dhat = est.d_hat();
    // short side carries the square basis
    let (short_basis, long_basis) = if tall { (&est.svd.v, &est.svd.u) } else { (&est.svd.u, &est.svd.v) };
    let mut s = DMatrix::zeros(2 * r, 2 * r);
    let mut s_inv = DMatrix::zeros(2 * r, 2 * r);
    for i in 0..r {
        let a = dhat[i];
        s[(i, i)] = a * a;
        s[(i, r + i)] = a;
        s[(r + i, i)] = a;
        s_inv[(i, r + i)] = 1.0 / a;
        s_inv[(r + i, i)] = 1.0 / a;
        s_inv[(r + i, r + i)] = -1.0;
    }
    let mut out = ReplicateAngles {
        trait_angles: Vec::with_capacity(replications),
        object_angles: Vec::with_capacity(replications),
        trait_aligns: Vec::with_capacity(replications),
        object_aligns: Vec::with_capacity(replications),
    };
    let scale = est.sigma_hat * est.long_root();
    for rep in 0..replications {
        let mut rng = stream(seed, stream_id(PURPOSE_BOOTSTRAP, block, rep as u64));
        let u0 = random_basis(&mut rng, d, r, centering.object_centered)?;
        let v0 = random_basis(&mut rng, n, r, centering.trait_centered)?;
        let mut sigma = noise.singular.clone();
        if reimpute {
            let draws = mp_draws(est.beta, noise.imputed, &mut rng, false)?;
            for (i, lam) in draws.iter().enumerate() {
                sigma[i] = scale * lam.sqrt();
            }
        }
        let (short0, long0) = if tall { (&v0, &u0) } else { (&u0, &v0) };
        let b = short_basis.tr_mul(short0); // m × r
        let mut c = long0.tr_mul(long_basis); // r × m
        for jc in 0..m {
            c.column_mut(jc).scale_mut(sigma[jc]);
        }
        let mut w = DMatrix::zeros(m, 2 * r);
        w.columns_mut(0, r).copy_from(&b);
        w.columns_mut(r, r).copy_from(&c.transpose());
        let dg: Vec<f64> = sigma.iter().map(|x| x * x).collect();
        let (vals, wv) = top_eigenpairs_dplr(&dg, &w, &s, &s_inv, r)?;
        // truth-vs-estimate alignments on both sides
        let short_align = b.tr_mul(&wv); // r × r
        let mut long_align = DMatrix::zeros(r, r);
        let bt_w = b.tr_mul(&wv);
        let c_w = &c * &wv;
        for j in 0..r {
            let sj = vals[j].max(0.0).sqrt();
            let col = if sj > 0.0 {
                (bt_w.column(j).component_mul(&dhat) + c_w.column(j)) / sj
            } else {
                DVector::zeros(r)
            };
            long_align.set_column(j, &col);
        }
        let (trait_align, object_align) = if tall { (short_align, long_align) } else { (long_align, short_align) };
        let mut ta = Vec::with_capacity(r);
        let mut oa = Vec::with_capacity(r);
        for j in 1..=r {
            ta.push(acos_deg(min_singular(&trait_align.columns(0, j).clone_owned())));
            oa.push(acos_deg(min_singular(&object_align.columns(0, j).clone_owned())));
        }
        out.trait_angles.push(ta);
        out.object_angles.push(oa);
        out.trait_aligns.push(trait_align);
        out.object_aligns.push(object_align);
    }
    Ok(out)
}

pub fn rotational_bootstrap(
    est: &SignalEstimate,
    noise: &ImputedNoise,
    centering: Centering,
    cfg: &BootstrapConfig,
    seed: u64,
    block: u64,
) -> Result<BootstrapOutcome> {
    cfg.validate()?;
    let reps = replicate_angles(est, noise, centering, cfg.replications, cfg.reimpute, seed, block)?;
    filter_rank(est, &reps, cfg)
}

/// Order statistics, per-rank null angles and the filtered rank.
pub fn filter_rank(est: &SignalEstimate, reps: &ReplicateAngles, cfg: &BootstrapConfig) -> Result<BootstrapOutcome> {
    let r = est.rank;
    let d = est.traits;
    let n = est.objects;
    let mut trait_stats = Vec::with_capacity(r);
    let mut object_stats = Vec::with_capacity(r);
    let mut t0_trait = Vec::with_capacity(r);
    let mut t0_object = Vec::with_capacity(r);
    let null = |ambient: usize, j: usize| -> Result<f64> {
        if j >= ambient {
            Ok(0.0)
        } else {
            random_direction_angle_quantile(ambient, j, cfg.theta0_quantile)
        }
    };
    for j in 0..r {
        let mut t: Vec<f64> = reps.trait_angles.iter().map(|a| a[j]).collect();
        let mut o: Vec<f64> = reps.object_angles.iter().map(|a| a[j]).collect();
        trait_stats.push(order_statistic(&mut t, cfg.bound_quantile));
        object_stats.push(order_statistic(&mut o, cfg.bound_quantile));
        t0_trait.push(null(n, j + 1)?);
        t0_object.push(null(d, j + 1)?);
    }
    let mut filtered = 0;
    for j in 0..r {
        if trait_stats[j] < cfg.xi * t0_trait[j] && object_stats[j] < cfg.xi * t0_object[j] {
            filtered = j + 1;
        }
    }
    let bounds = if filtered > 0 {
        Some(PerturbationBounds {
            phi_hat: trait_stats[filtered - 1],
            psi_hat: object_stats[filtered - 1],
            theta0_trait: t0_trait[filtered - 1],
            theta0_object: t0_object[filtered - 1],
            filtered_rank: filtered,
            replications: cfg.replications,
            quantile: cfg.bound_quantile,
        })
    } else {
        None
    };
    let cache = BootstrapCache {
        trait_aligns: reps.trait_aligns.iter().map(|m| m.columns(0, filtered).clone_owned()).collect(),
        object_aligns: reps.object_aligns.iter().map(|m| m.columns(0, filtered).clone_owned()).collect(),
    };
    Ok(BootstrapOutcome {
        bounds,
        cache,
        u_check: est.svd.u.columns(0, filtered).clone_owned(),
        v_check: est.svd.v.columns(0, filtered).clone_owned(),
        trait_order_stats: trait_stats,
        object_order_stats: object_stats,
        theta0_trait_by_rank: t0_trait,
        theta0_object_by_rank: t0_object,
    })
}
