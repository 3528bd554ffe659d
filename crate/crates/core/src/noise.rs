//! Imputed noise matrix and the Q-Q envelope used to check it.

use crate::error::{invalid, Result};
use crate::linalg::tridiagonal_eigenvalues;
use crate::mp::MpLaw;
use crate::rng::{shuffle, stream, stream_id, uniform, Rng, PURPOSE_QQ};
use crate::signal::SignalEstimate;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{ChiSquared, Distribution};

/// Residual estimate sharing the data's singular vectors: the leading
/// `imputed` singular values are replaced by MP draws.
#[derive(Debug, Clone)]
pub struct ImputedNoise {
    pub singular: DVector<f64>,
    pub imputed: usize,
    /// unit-variance MP eigenvalue draws used for the replaced directions
    pub draws: Vec<f64>,
}

impl ImputedNoise {
    /// Materialize `Ū diag(ν_E) V̄ᵀ`.
    pub fn to_matrix(&self, est: &SignalEstimate) -> DMatrix<f64> {
        let mut u = est.svd.u.clone();
        for j in 0..u.ncols() {
            u.column_mut(j).scale_mut(self.singular[j]);
        }
        u * est.svd.v.transpose()
    }

    /// Eigenvalues `ν² / (d ∨ n)` in ascending order.
    pub fn eigenvalues(&self, est: &SignalEstimate) -> Vec<f64> {
        spectrum_eigenvalues(self.singular.as_slice(), est.traits.max(est.objects))
    }
}

/// `ν² / long` sorted ascending.
pub fn spectrum_eigenvalues(singular: &[f64], long: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = singular.iter().map(|s| s * s / long as f64).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

/// Draw `count` unit-variance MP variates. With `stratified`, the uniforms
/// come from a shuffled stratified grid.
pub fn mp_draws(beta: f64, count: usize, rng: &mut Rng, stratified: bool) -> Result<Vec<f64>> {
    let law = MpLaw::standard(beta)?;
    let mut us: Vec<f64> = (0..count).map(|_| uniform(rng)).collect();
    if stratified && count > 0 {
        let mut slots: Vec<usize> = (0..count).collect();
        shuffle(rng, &mut slots);
        for (i, u) in us.iter_mut().enumerate() {
            *u = (slots[i] as f64 + *u) / count as f64;
        }
    }
    us.iter().map(|&u| law.quantile(u)).collect()
}

pub fn impute_noise(est: &SignalEstimate, rng: &mut Rng, stratified: bool) -> Result<ImputedNoise> {
    let mut singular = est.svd.s.clone();
    let draws = mp_draws(est.beta, est.rank, rng, stratified)?;
    let scale = est.sigma_hat * est.long_root();
    for (i, lam) in draws.iter().enumerate() {
        singular[i] = scale * lam.sqrt();
    }
    Ok(ImputedNoise { singular, imputed: est.rank, draws })
}

/// Per-rank bands of simulated pure-noise eigenvalues with theoretical MP
/// quantiles. All arrays are ascending and of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct QqEnvelope {
    pub theoretical: Vec<f64>,
    pub env_min: Vec<f64>,
    pub env_max: Vec<f64>,
}

/// Sorted eigenvalues `ν²/N` of one `m × N` iid Gaussian matrix with entry
/// variance `sigma2`, sampled through the bidiagonal chi model (same joint
/// eigenvalue law as the dense matrix, O(m²) work).
pub fn laguerre_eigenvalues(m: usize, long: usize, sigma2: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if m == 0 || m > long {
        return invalid("need 1 <= m <= N");
    }
    let chi = |k: usize, rng: &mut Rng| -> f64 {
        ChiSquared::new(k as f64).map(|c| c.sample(rng).sqrt()).unwrap_or(0.0)
    };
    // lower bidiagonal: diag chi_{N-i}, sub-diagonal chi_{m-1-i}
    let a: Vec<f64> = (0..m).map(|i| chi(long - i, rng)).collect();
    let c: Vec<f64> = (0..m.saturating_sub(1)).map(|i| chi(m - 1 - i, rng)).collect();
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m.saturating_sub(1));
    for i in 0..m {
        let prev = if i > 0 { c[i - 1] * c[i - 1] } else { 0.0 };
        diag.push(a[i] * a[i] + prev);
        if i + 1 < m {
            off.push(a[i] * c[i]);
        }
    }
    let mut ev = tridiagonal_eigenvalues(&diag, &off)?;
    let scale = sigma2 / long as f64;
    for x in ev.iter_mut() {
        *x = (*x * scale).max(0.0);
    }
    Ok(ev)
}

/// Envelope over `traces` simulated spectra of length `len` at aspect
/// ratio `beta` and noise scale `sigma`. Trace `t` uses its own stream
/// derived from `seed`.
pub fn qq_envelope(beta: f64, len: usize, sigma: f64, traces: usize, seed: u64) -> Result<QqEnvelope> {
    if !(beta > 0.0 && beta <= 1.0) || len == 0 || traces == 0 || !(sigma > 0.0) {
        return invalid("bad envelope parameters");
    }
    let long = ((len as f64) / beta).round() as usize;
    let long = long.max(len);
    let sigma2 = sigma * sigma;
    let law = MpLaw::new(beta, sigma2)?;
    let theoretical = (0..len)
        .map(|i| law.quantile((i as f64 + 0.5) / len as f64))
        .collect::<Result<Vec<f64>>>()?;
    let mut env_min = alloc::vec![f64::INFINITY; len];
    let mut env_max = alloc::vec![f64::NEG_INFINITY; len];
    for t in 0..traces {
        let mut rng = stream(seed, stream_id(PURPOSE_QQ, 0, t as u64));
        let ev = laguerre_eigenvalues(len, long, sigma2, &mut rng)?;
        for i in 0..len {
            env_min[i] = env_min[i].min(ev[i]);
            env_max[i] = env_max[i].max(ev[i]);
        }
    }
    Ok(QqEnvelope { theoretical, env_min, env_max })
}

/// One row per rank of the Q-Q table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QqRow {
    pub rank: usize,
    pub observed: f64,
    pub theoretical: f64,
    pub env_min: f64,
    pub env_max: f64,
}

/// Join observed eigenvalues (normalized by `sigma²`) with an envelope
/// built at unit scale.
pub fn qq_rows(observed: &[f64], sigma: f64, env: &QqEnvelope) -> Vec<QqRow> {
    let s2 = sigma * sigma;
    observed
        .iter()
        .enumerate()
        .map(|(i, &o)| QqRow {
            rank: i + 1,
            observed: o / s2,
            theoretical: env.theoretical[i],
            env_min: env.env_min[i],
            env_max: env.env_max[i],
        })
        .collect()
}

/// Fraction of observed values inside `[env_min, env_max]` at their rank.
pub fn fraction_inside(observed: &[f64], env: &QqEnvelope) -> f64 {
    let inside = observed
        .iter()
        .enumerate()
        .filter(|(i, &o)| o >= env.env_min[*i] && o <= env.env_max[*i])
        .count();
    inside as f64 / observed.len().max(1) as f64
}
