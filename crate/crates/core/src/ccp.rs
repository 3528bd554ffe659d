//! One convexified step of the penalty convex-concave procedure.
//!
//! Every constraint is an explicit quadratic `g(v) = vᵀHv + lᵀv + c`, the
//! objective is linear, and violations are paid for through nonnegative
//! slacks weighted by `τ`. The slack form is solved by a primal-dual
//! interior point method with the slack block eliminated, so each Newton
//! step costs one `n × n` Cholesky factorization.

use crate::error::{invalid, DivasError, Result};
use crate::linalg::project_out;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

/// Quadratic form `vᵀHv` with `H` kept in the cheapest available shape.
#[derive(Debug, Clone)]
pub enum QuadForm {
    /// `scale · I`
    Identity(f64),
    /// `scale · B Bᵀ`
    LowRank { factor: DMatrix<f64>, scale: f64 },
    Dense(DMatrix<f64>),
}

impl QuadForm {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            QuadForm::Identity(s) => v * *s,
            QuadForm::LowRank { factor, scale } => factor * factor.tr_mul(v) * *scale,
            QuadForm::Dense(h) => h * v,
        }
    }

    fn add_scaled_to(&self, acc: &mut DMatrix<f64>, w: f64) {
        match self {
            QuadForm::Identity(s) => {
                for i in 0..acc.nrows() {
                    acc[(i, i)] += w * s;
                }
            }
            QuadForm::LowRank { factor, scale } => {
                acc.gemm(w * scale, factor, &factor.transpose(), 1.0);
            }
            QuadForm::Dense(h) => {
                *acc += h * w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ConstraintKind {
    IncludedTrait(usize),
    ExcludedTrait(usize),
    Object(usize),
    NormLower,
    NormUpper,
}

impl ConstraintKind {
    pub fn is_angle(&self) -> bool {
        !matches!(self, ConstraintKind::NormLower | ConstraintKind::NormUpper)
    }
}

#[derive(Debug, Clone)]
pub struct Quadratic {
    pub kind: ConstraintKind,
    pub form: QuadForm,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl Quadratic {
    pub fn value(&self, v: &DVector<f64>) -> f64 {
        let hv = self.form.apply(v);
        v.dot(&hv) + self.linear.dot(v) + self.constant
    }

    fn value_grad(&self, v: &DVector<f64>) -> (f64, DVector<f64>) {
        let hv = self.form.apply(v);
        let g = v.dot(&hv) + self.linear.dot(v) + self.constant;
        (g, hv * 2.0 + &self.linear)
    }
}

/// Per-block data the constraints are built from.
#[derive(Debug, Clone)]
pub struct BlockTerms {
    /// trait basis (already shrunk for included blocks)
    pub v_check: DMatrix<f64>,
    pub cos2_phi: f64,
    pub object: Option<ObjectTerms>,
}

/// Object-space data: `G = XᵀX` and `F = XᵀǓ`, so that `XᵀǓǓᵀX = FFᵀ`.
#[derive(Debug, Clone)]
pub struct ObjectTerms {
    pub gram: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub cos2_psi: f64,
    /// leading data singular value
    pub nu1: f64,
}

/// The linearized problem at `v0`.
#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    pub n: usize,
    /// included trait bases; the objective uses the sum of their projectors
    pub objective_bases: Vec<DMatrix<f64>>,
    pub v0: DVector<f64>,
    pub tau: f64,
    /// orthonormal columns `v` must be orthogonal to (may have zero columns)
    pub ortho: DMatrix<f64>,
    pub constraints: Vec<Quadratic>,
}

fn proj_sum_apply(bases: &[DMatrix<f64>], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for b in bases {
        out += b * b.tr_mul(v);
    }
    out
}

impl SubproblemSpec {
    /// Linearize every constraint at `v0`.
    pub fn build(
        blocks: &[Option<&BlockTerms>],
        included: &[usize],
        v0: &DVector<f64>,
        tau: f64,
        ortho: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = v0.len();
        if !(tau > 0.0) {
            return invalid("penalty weight must be positive");
        }
        if ortho.nrows() != n && ortho.ncols() > 0 {
            return Err(DivasError::DimensionMismatch("orthogonality basis rows".into()));
        }
        let mut constraints = Vec::new();
        let mut objective_bases = Vec::new();
        for (k, blk) in blocks.iter().enumerate() {
            let Some(b) = blk else { continue };
            if !(b.cos2_phi > 0.0 && b.cos2_phi <= 1.0) {
                return invalid("cos² of a trait bound must lie in (0, 1]");
            }
            if b.v_check.nrows() != n {
                return Err(DivasError::DimensionMismatch("trait basis rows".into()));
            }
            let pv0 = &b.v_check * b.v_check.tr_mul(v0);
            if included.contains(&k) {
                objective_bases.push(b.v_check.clone());
                constraints.push(Quadratic {
                    kind: ConstraintKind::IncludedTrait(k),
                    form: QuadForm::Identity(1.0),
                    linear: &pv0 * (-2.0 / b.cos2_phi),
                    constant: v0.dot(&pv0) / b.cos2_phi,
                });
                if let Some(o) = &b.object {
                    if !(o.cos2_psi > 0.0 && o.cos2_psi <= 1.0) || !(o.nu1 > 0.0) {
                        return invalid("object bound data out of range");
                    }
                    let w = 1.0 / (o.nu1 * o.nu1);
                    let ffv0 = &o.f * o.f.tr_mul(v0);
                    constraints.push(Quadratic {
                        kind: ConstraintKind::Object(k),
                        form: QuadForm::Dense(&o.gram * w),
                        linear: &ffv0 * (-2.0 * w / o.cos2_psi),
                        constant: v0.dot(&ffv0) * w / o.cos2_psi,
                    });
                }
            } else {
                constraints.push(Quadratic {
                    kind: ConstraintKind::ExcludedTrait(k),
                    form: QuadForm::LowRank { factor: b.v_check.clone(), scale: 1.0 / b.cos2_phi },
                    linear: v0 * -2.0,
                    constant: v0.dot(v0),
                });
            }
        }
        constraints.push(Quadratic {
            kind: ConstraintKind::NormLower,
            form: QuadForm::Identity(0.0),
            linear: v0 * -2.0,
            constant: 1.0 + v0.dot(v0),
        });
        constraints.push(Quadratic {
            kind: ConstraintKind::NormUpper,
            form: QuadForm::Identity(1.0),
            linear: DVector::zeros(n),
            constant: -1.0,
        });
        Ok(Self { n, objective_bases, v0: v0.clone(), tau, ortho: ortho.clone(), constraints })
    }

    pub fn linear_objective(&self) -> DVector<f64> {
        proj_sum_apply(&self.objective_bases, &self.v0) * -2.0
    }

    pub fn objective_constant(&self) -> f64 {
        self.v0.dot(&proj_sum_apply(&self.objective_bases, &self.v0))
    }

    /// Exact-penalty value `cᵀv + const + τ Σ max(0, g_t(v))`.
    pub fn penalty_objective(&self, v: &DVector<f64>) -> f64 {
        let c = self.linear_objective();
        let mut f = c.dot(v) + self.objective_constant();
        for q in &self.constraints {
            f += self.tau * q.value(v).max(0.0);
        }
        f
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 120 }
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub v: DVector<f64>,
    /// `max(0, g_t(v))` in constraint order
    pub slacks: Vec<f64>,
    pub kinds: Vec<ConstraintKind>,
    pub objective: f64,
    pub subgradient_norm: f64,
    pub certified: bool,
    pub iterations: usize,
}

struct State {
    v: DVector<f64>,
    s: DVector<f64>,
    lam: DVector<f64>,
    kap: DVector<f64>,
    nu: DVector<f64>,
}

fn residual_norm(spec: &SubproblemSpec, c: &DVector<f64>, st: &State, t: f64) -> Option<f64> {
    let mut rv = c + &spec.ortho * &st.nu;
    let mut acc = 0.0;
    for (i, q) in spec.constraints.iter().enumerate() {
        let (g, grad) = q.value_grad(&st.v);
        let f = g - st.s[i];
        if !(f < 0.0) || !(st.s[i] > 0.0) {
            return None;
        }
        rv.axpy(st.lam[i], &grad, 1.0);
        let rs = spec.tau - st.lam[i] - st.kap[i];
        let rc1 = -st.lam[i] * f - 1.0 / t;
        let rc2 = st.kap[i] * st.s[i] - 1.0 / t;
        acc += rs * rs + rc1 * rc1 + rc2 * rc2;
    }
    let rp = spec.ortho.tr_mul(&st.v);
    Some((rv.norm_squared() + rp.norm_squared() + acc).sqrt())
}

/// Solve the penalized subproblem and certify the result.
pub fn solve_subproblem(spec: &SubproblemSpec, opts: IpmOptions) -> Result<SubproblemSolution> {
    let n = spec.n;
    let p = spec.constraints.len();
    let q = spec.ortho.ncols();
    let tau = spec.tau;
    let c = spec.linear_objective();
    let v_start = if q > 0 { project_out(&spec.ortho, &spec.v0) } else { spec.v0.clone() };
    let mut st = State {
        s: DVector::from_iterator(p, spec.constraints.iter().map(|g| g.value(&v_start).max(0.0) + 1.0)),
        v: v_start,
        lam: DVector::from_element(p, 0.5 * tau),
        kap: DVector::from_element(p, 0.5 * tau),
        nu: DVector::zeros(q),
    };
    // well inside the certificate tolerance
    let eps_feas = 0.1 * opts.tol * (1.0 + tau);
    let eps_gap = 1e-2 * opts.tol * (1.0 + tau);
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let mut gs = Vec::with_capacity(p);
        let mut grads = Vec::with_capacity(p);
        for con in &spec.constraints {
            let (g, grad) = con.value_grad(&st.v);
            gs.push(g);
            grads.push(grad);
        }
        let negf: Vec<f64> = (0..p).map(|i| st.s[i] - gs[i]).collect();
        let gap: f64 = (0..p).map(|i| st.lam[i] * negf[i] + st.kap[i] * st.s[i]).sum();
        let mut rv = &c + &spec.ortho * &st.nu;
        for i in 0..p {
            rv.axpy(st.lam[i], &grads[i], 1.0);
        }
        let rs_norm = (0..p).map(|i| (tau - st.lam[i] - st.kap[i]).powi(2)).sum::<f64>().sqrt();
        let rp = spec.ortho.tr_mul(&st.v);
        if rv.norm() <= eps_feas && rs_norm <= eps_feas && rp.norm() <= 1e-12 && gap <= eps_gap {
            break;
        }
        let t = 10.0 * (2 * p) as f64 / gap.max(1e-300);
        // reduced Newton system in v
        let mut h = DMatrix::zeros(n, n);
        let mut rhs = -&rv;
        let mut dd = Vec::with_capacity(p);
        let mut ee = Vec::with_capacity(p);
        let mut rts = Vec::with_capacity(p);
        for i in 0..p {
            spec.constraints[i].form.add_scaled_to(&mut h, 2.0 * st.lam[i]);
            let d = st.lam[i] / negf[i];
            let e = st.kap[i] / st.s[i];
            let rt_v = 1.0 / (t * negf[i]);
            let rt_s = tau - 1.0 / (t * negf[i]) - 1.0 / (t * st.s[i]);
            // r̃_v picks up the barrier terms in place of λ∇g
            rhs.axpy(st.lam[i] - rt_v, &grads[i], 1.0);
            rhs.axpy(-d * rt_s / (d + e), &grads[i], 1.0);
            h.ger(d * e / (d + e), &grads[i], &grads[i], 1.0);
            dd.push(d);
            ee.push(e);
            rts.push(rt_s);
        }
        let chol = match Cholesky::new(h.clone()) {
            Some(ch) => ch,
            None => {
                let shift = 1e-12 * h.diagonal().amax().max(1.0);
                for i in 0..n {
                    h[(i, i)] += shift;
                }
                Cholesky::new(h).ok_or_else(|| DivasError::Numerical("subproblem Newton matrix not definite".into()))?
            }
        };
        let (dv, dnu) = if q > 0 {
            // Schur complement on the equality block
            let hinv_a = chol.solve(&spec.ortho);
            let hinv_r = chol.solve(&rhs);
            let schur = spec.ortho.tr_mul(&hinv_a);
            let sch = Cholesky::new(schur).ok_or_else(|| DivasError::Numerical("equality Schur complement".into()))?;
            let dnu = sch.solve(&(spec.ortho.tr_mul(&hinv_r) + &rp));
            (hinv_r - &hinv_a * &dnu, dnu)
        } else {
            (chol.solve(&rhs), DVector::zeros(0))
        };
        let mut ds = DVector::zeros(p);
        let mut dl = DVector::zeros(p);
        let mut dk = DVector::zeros(p);
        for i in 0..p {
            let gdv = grads[i].dot(&dv);
            ds[i] = (-rts[i] + dd[i] * gdv) / (dd[i] + ee[i]);
            dl[i] = -st.lam[i] + 1.0 / (t * negf[i]) + dd[i] * (gdv - ds[i]);
            dk[i] = -st.kap[i] + 1.0 / (t * st.s[i]) - ee[i] * ds[i];
        }
        let mut alpha: f64 = 1.0;
        for i in 0..p {
            if dl[i] < 0.0 {
                alpha = alpha.min(-st.lam[i] / dl[i]);
            }
            if dk[i] < 0.0 {
                alpha = alpha.min(-st.kap[i] / dk[i]);
            }
            if ds[i] < 0.0 {
                alpha = alpha.min(-st.s[i] / ds[i]);
            }
            // linear prediction of the constraint margin
            let dm = ds[i] - grads[i].dot(&dv);
            if dm < 0.0 {
                alpha = alpha.min(-negf[i] / dm);
            }
        }
        alpha = (0.99 * alpha).min(1.0);
        let r0 = residual_norm(spec, &c, &st, t).unwrap_or(f64::INFINITY);
        let mut accepted = false;
        for _ in 0..60 {
            let trial = State {
                v: &st.v + &dv * alpha,
                s: &st.s + &ds * alpha,
                lam: &st.lam + &dl * alpha,
                kap: &st.kap + &dk * alpha,
                nu: &st.nu + &dnu * alpha,
            };
            if let Some(r1) = residual_norm(spec, &c, &trial, t) {
                if r1 <= (1.0 - 0.01 * alpha) * r0 {
                    st = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    finish(spec, &c, st.v, &st.lam, iterations, opts.tol)
}

fn finish(
    spec: &SubproblemSpec,
    c: &DVector<f64>,
    v: DVector<f64>,
    lam: &DVector<f64>,
    iterations: usize,
    tol: f64,
) -> Result<SubproblemSolution> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DivasError::NonFinite("subproblem iterate".into()));
    }
    let tau = spec.tau;
    let mut slacks = Vec::with_capacity(spec.constraints.len());
    let mut base = c.clone();
    let mut kink_grads = Vec::new();
    let mut kink_init = Vec::new();
    for (i, con) in spec.constraints.iter().enumerate() {
        let (g, grad) = con.value_grad(&v);
        slacks.push(g.max(0.0));
        if g.abs() <= tol {
            kink_grads.push(grad * tau);
            kink_init.push((lam[i] / tau).clamp(0.0, 1.0));
        } else if g > 0.0 {
            base.axpy(tau, &grad, 1.0);
        }
    }
    let proj = |x: &DVector<f64>| -> DVector<f64> {
        if spec.ortho.ncols() > 0 {
            project_out(&spec.ortho, x)
        } else {
            x.clone()
        }
    };
    let base = proj(&base);
    let kink_grads: Vec<DVector<f64>> = kink_grads.iter().map(|g| proj(g)).collect();
    let theta = box_least_squares(&base, &kink_grads, kink_init);
    let mut sub = base;
    for (g, th) in kink_grads.iter().zip(&theta) {
        sub.axpy(*th, g, 1.0);
    }
    let subgradient_norm = sub.norm();
    Ok(SubproblemSolution {
        objective: spec.penalty_objective(&v),
        certified: subgradient_norm <= tol * (1.0 + tau),
        kinds: spec.constraints.iter().map(|q| q.kind).collect(),
        v,
        slacks,
        subgradient_norm,
        iterations,
    })
}

/// `argmin_{θ ∈ [0,1]^k} ‖b + Σ θ_i a_i‖` by cyclic coordinate descent.
fn box_least_squares(b: &DVector<f64>, a: &[DVector<f64>], init: Vec<f64>) -> Vec<f64> {
    let k = a.len();
    let mut theta = init;
    if k == 0 {
        return theta;
    }
    let mut r = b.clone();
    for i in 0..k {
        r.axpy(theta[i], &a[i], 1.0);
    }
    let norms: Vec<f64> = a.iter().map(|x| x.norm_squared()).collect();
    for _ in 0..500 {
        let mut moved = 0.0_f64;
        for i in 0..k {
            if norms[i] == 0.0 {
                continue;
            }
            let step = -a[i].dot(&r) / norms[i];
            let new = (theta[i] + step).clamp(0.0, 1.0);
            let delta = new - theta[i];
            if delta != 0.0 {
                r.axpy(delta, &a[i], 1.0);
                theta[i] = new;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    theta
}

/// Unlinearized penalty: `-vᵀPv + τ Σ max(0, h_t(v))` with the original
/// difference-of-convex constraints. Nonincreasing along CCP iterates at
/// fixed `τ`.
pub fn dc_merit(blocks: &[Option<&BlockTerms>], included: &[usize], v: &DVector<f64>, tau: f64) -> f64 {
    let vv = v.dot(v);
    let mut f = 0.0;
    let mut pen = 0.0;
    for (k, blk) in blocks.iter().enumerate() {
        let Some(b) = blk else { continue };
        let pv = b.v_check.tr_mul(v).norm_squared();
        if included.contains(&k) {
            f -= pv;
            pen += (vv - pv / b.cos2_phi).max(0.0);
            if let Some(o) = &b.object {
                let gv = v.dot(&(&o.gram * v));
                let fv = o.f.tr_mul(v).norm_squared();
                pen += ((gv - fv / o.cos2_psi) / (o.nu1 * o.nu1)).max(0.0);
            }
        } else {
            pen += (pv / b.cos2_phi - vv).max(0.0);
        }
    }
    pen += (1.0 - vv).max(0.0) + (vv - 1.0).max(0.0);
    f + tau * pen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormalize;
    use crate::rng::{gaussian_matrix, stream};

    fn unit(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn eigenvector_start_is_a_fixed_point() {
        let n = 6;
        let basis = DMatrix::from_fn(n, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let blk = BlockTerms { v_check: basis, cos2_phi: 0.9, object: None };
        let v0 = unit(n, 0);
        let spec = SubproblemSpec::build(&[Some(&blk)], &[0], &v0, 100.0, &DMatrix::zeros(n, 0)).unwrap();
        let sol = solve_subproblem(&spec, IpmOptions::default()).unwrap();
        assert!((&sol.v - &v0).norm() < 1e-6, "{}", sol.v);
        assert!(sol.slacks.iter().all(|&s| s < 1e-6));
        assert!(sol.certified);
    }

    #[test]
    fn equality_constraint_holds() {
        let n = 5;
        let mut rng = stream(41, 0);
        let basis = orthonormalize(&gaussian_matrix(&mut rng, n, 2)).unwrap();
        let blk = BlockTerms { v_check: basis.clone(), cos2_phi: 0.8, object: None };
        let v0 = basis.column(0).clone_owned();
        let ortho = DMatrix::from_column_slice(n, 1, v0.as_slice());
        let spec = SubproblemSpec::build(&[Some(&blk)], &[0], &v0, 100.0, &ortho).unwrap();
        let sol = solve_subproblem(&spec, IpmOptions::default()).unwrap();
        assert!(v0.dot(&sol.v).abs() < 1e-8);
        assert!(sol.certified, "subgradient {}", sol.subgradient_norm);
    }

    #[test]
    fn slack_identity_and_certificate_on_random_instances() {
        let mut rng = stream(42, 0);
        for trial in 0..10 {
            let n = 6 + trial % 4;
            let b0 = orthonormalize(&gaussian_matrix(&mut rng, n, 2)).unwrap();
            let b1 = orthonormalize(&gaussian_matrix(&mut rng, n, 1)).unwrap();
            let x = gaussian_matrix(&mut rng, 7, n);
            let svd = crate::linalg::thin_svd(&x).unwrap();
            let f = svd.v.columns(0, 2).clone_owned() * DMatrix::from_diagonal(&svd.s.rows(0, 2).clone_owned());
            let gram = x.transpose() * &x;
            let o = ObjectTerms { gram, f, cos2_psi: 0.85, nu1: svd.s[0] };
            let blk0 = BlockTerms { v_check: b0, cos2_phi: 0.9, object: Some(o) };
            let blk1 = BlockTerms { v_check: b1, cos2_phi: 0.95, object: None };
            let mut v0 = crate::rng::gaussian_vector(&mut rng, n);
            v0 /= v0.norm();
            let spec = SubproblemSpec::build(&[Some(&blk0), Some(&blk1)], &[0], &v0, 50.0, &DMatrix::zeros(n, 0)).unwrap();
            let sol = solve_subproblem(&spec, IpmOptions::default()).unwrap();
            for (i, con) in spec.constraints.iter().enumerate() {
                assert!((sol.slacks[i] - con.value(&sol.v).max(0.0)).abs() < 1e-12);
            }
            assert!(sol.certified, "trial {trial}: subgradient {}", sol.subgradient_norm);
        }
    }

    #[test]
    fn object_penalty_is_scale_invariant() {
        let mut rng = stream(43, 0);
        let n = 5;
        let x = gaussian_matrix(&mut rng, 6, n);
        let v = crate::rng::gaussian_vector(&mut rng, n);
        let v0 = crate::rng::gaussian_vector(&mut rng, n);
        let make = |xs: &DMatrix<f64>| {
            let svd = crate::linalg::thin_svd(xs).unwrap();
            let f = svd.v.columns(0, 1).clone_owned() * svd.s[0];
            let o = ObjectTerms { gram: xs.transpose() * xs, f, cos2_psi: 0.7, nu1: svd.s[0] };
            let blk = BlockTerms { v_check: svd.v.columns(0, 1).clone_owned(), cos2_phi: 0.9, object: Some(o) };
            let spec = SubproblemSpec::build(&[Some(&blk)], &[0], &v0, 10.0, &DMatrix::zeros(n, 0)).unwrap();
            spec.constraints.iter().find(|c| matches!(c.kind, ConstraintKind::Object(_))).unwrap().value(&v)
        };
        let a = make(&x);
        let b = make(&(&x * 10.0));
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}
