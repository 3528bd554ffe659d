//! Reference minimizer for the penalized subproblem, written out from the
//! block data without the solver's constraint builder, and a generator of
//! small random instances.

#![allow(dead_code)]

use divas_core::ccp::{BlockTerms, ObjectTerms};
use divas_core::linalg::{orthonormalize, thin_svd};
use divas_core::rng::{gaussian_matrix, gaussian_vector, uniform, Rng};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `vᵀ A v + bᵀ v + c`
pub struct Quad {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl Quad {
    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.a * v)) + self.b.dot(v) + self.c
    }
}

/// Written out from the block data, without going through the solver's
/// constraint builder.
pub struct Problem {
    pub n: usize,
    pub lin: DVector<f64>,
    pub constant: f64,
    pub tau: f64,
    pub quads: Vec<Quad>,
    pub null: DMatrix<f64>,
}

impl Problem {
    pub fn new(blocks: &[BlockTerms], included: &[usize], v0: &DVector<f64>, tau: f64, ortho: &DMatrix<f64>) -> Self {
        let n = v0.len();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut psum = DMatrix::zeros(n, n);
        let mut quads = Vec::new();
        for (k, b) in blocks.iter().enumerate() {
            let p = &b.v_check * b.v_check.transpose();
            if included.contains(&k) {
                psum += &p;
                // ‖v‖² ≤ (2 v0ᵀPv − v0ᵀPv0) / cos²φ
                let pv0 = &p * v0;
                quads.push(Quad { a: eye.clone(), b: &pv0 * (-2.0 / b.cos2_phi), c: v0.dot(&pv0) / b.cos2_phi });
                if let Some(o) = &b.object {
                    let w = 1.0 / (o.nu1 * o.nu1);
                    let ff = &o.f * o.f.transpose();
                    let ffv0 = &ff * v0;
                    quads.push(Quad {
                        a: &o.gram * w,
                        b: &ffv0 * (-2.0 * w / o.cos2_psi),
                        c: v0.dot(&ffv0) * w / o.cos2_psi,
                    });
                }
            } else {
                // ‖V̌ᵀv‖² / cos²φ ≤ 2 v0ᵀv − ‖v0‖²
                quads.push(Quad { a: &p / b.cos2_phi, b: v0 * -2.0, c: v0.norm_squared() });
            }
        }
        quads.push(Quad { a: DMatrix::zeros(n, n), b: v0 * -2.0, c: 1.0 + v0.norm_squared() });
        quads.push(Quad { a: eye.clone(), b: DVector::zeros(n), c: -1.0 });
        let lin = &psum * v0 * -2.0;
        let constant = v0.dot(&(&psum * v0));
        // orthonormal basis of the null space of orthoᵀ via the projector
        let proj = &eye - ortho * ortho.transpose();
        let eig = SymmetricEigen::new(proj);
        let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        let null = DMatrix::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
        Self { n, lin, constant, tau, quads, null }
    }

    pub fn objective(&self, v: &DVector<f64>) -> f64 {
        self.lin.dot(v) + self.constant + self.tau * self.quads.iter().map(|q| q.eval(v).max(0.0)).sum::<f64>()
    }

    pub fn smoothed(&self, v: &DVector<f64>, delta: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let mut f = self.lin.dot(v) + self.constant;
        let mut g = self.lin.clone();
        let mut h = DMatrix::zeros(self.n, self.n);
        for q in &self.quads {
            let val = q.eval(v);
            if val <= 0.0 {
                continue;
            }
            let grad = &q.a * v * 2.0 + &q.b;
            let (hv, d1, d2) = if val <= delta {
                (val * val / (2.0 * delta), val / delta, 1.0 / delta)
            } else {
                (val - 0.5 * delta, 1.0, 0.0)
            };
            f += self.tau * hv;
            g += &grad * (self.tau * d1);
            h += &q.a * (2.0 * self.tau * d1);
            h += &grad * grad.transpose() * (self.tau * d2);
        }
        (f, g, h)
    }

    /// Damped, regularized Newton with continuation on the smoothing width.
    pub fn oracle_minimize(&self, start: &DVector<f64>) -> DVector<f64> {
        let z = &self.null;
        let mut y = z.tr_mul(start);
        let mut delta = 1.0;
        while delta >= 1e-11 {
            for _ in 0..400 {
                let v = z * &y;
                let (f, g, h) = self.smoothed(&v, delta);
                let gy = z.tr_mul(&g);
                if gy.norm() < 1e-13 * (1.0 + self.tau) {
                    break;
                }
                let hy = z.tr_mul(&h) * z;
                let mut reg = 1e-12 * (1.0 + hy.diagonal().amax());
                let mut moved = false;
                for _ in 0..40 {
                    let mut hr = hy.clone();
                    for i in 0..hr.nrows() {
                        hr[(i, i)] += reg;
                    }
                    if let Some(ch) = hr.cholesky() {
                        let step = -ch.solve(&gy);
                        let slope = gy.dot(&step);
                        let mut t = 1.0;
                        while t > 1e-14 {
                            let trial = &y + &step * t;
                            let (ft, _, _) = self.smoothed(&(z * &trial), delta);
                            if ft <= f + 1e-4 * t * slope {
                                y = trial;
                                moved = true;
                                break;
                            }
                            t *= 0.5;
                        }
                        if moved {
                            break;
                        }
                    }
                    reg = (reg * 10.0).max(1e-8);
                }
                if !moved {
                    break;
                }
            }
            delta *= 0.1;
        }
        z * y
    }
}

pub fn random_unit(rng: &mut Rng, n: usize) -> DVector<f64> {
    let v = gaussian_vector(rng, n);
    &v / v.norm()
}

pub fn random_instance(rng: &mut Rng, trial: usize) -> (Vec<BlockTerms>, Vec<usize>, DVector<f64>, f64, DMatrix<f64>) {
    let n = 4 + trial % 7;
    let k = 2 + trial % 2;
    let mut blocks = Vec::new();
    for _ in 0..k {
        let r = 1 + (uniform(rng) * 2.0) as usize;
        let basis = orthonormalize(&gaussian_matrix(rng, n, r.min(n - 1))).unwrap();
        let cos2_phi = 0.6 + 0.39 * uniform(rng);
        let d = 3 + (uniform(rng) * 5.0) as usize;
        let x = gaussian_matrix(rng, d, n);
        let svd = thin_svd(&x).unwrap();
        let rr = basis.ncols().min(svd.s.len());
        let f = svd.v.columns(0, rr).clone_owned() * DMatrix::from_diagonal(&svd.s.rows(0, rr).clone_owned());
        let object = ObjectTerms { gram: x.transpose() * &x, f, cos2_psi: 0.6 + 0.39 * uniform(rng), nu1: svd.s[0] };
        blocks.push(BlockTerms { v_check: basis, cos2_phi, object: Some(object) });
    }
    let included: Vec<usize> = if trial % 3 == 0 { (0..k).collect() } else { (0..k - 1).collect() };
    for (i, b) in blocks.iter_mut().enumerate() {
        if !included.contains(&i) {
            b.object = None;
        }
    }
    let mut v0 = random_unit(rng, n);
    if trial % 4 == 1 {
        v0 *= 0.5 + 0.5 * uniform(rng);
    }
    let tau = [1.0, 10.0, 100.0, 250.0][trial % 4];
    let ortho = if trial % 5 == 2 {
        let o = random_unit(rng, n);
        v0 -= &o * o.dot(&v0);
        DMatrix::from_column_slice(n, 1, o.as_slice())
    } else {
        DMatrix::zeros(n, 0)
    };
    (blocks, included, v0, tau, ortho)
}
