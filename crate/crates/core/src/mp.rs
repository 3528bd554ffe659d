//! Marchenko-Pastur law and the random-direction null angle.

use crate::error::{invalid, Result};
use crate::rng::{uniform, Rng};
use crate::special::{integrate, inv_reg_inc_beta};
#[allow(unused_imports)]
use num_traits::Float;

const PI: f64 = core::f64::consts::PI;
const CDF_TOL: f64 = 1e-12;

/// Marchenko-Pastur law with aspect ratio `beta` and noise variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpLaw {
    beta: f64,
    sigma2: f64,
}

impl MpLaw {
    pub fn new(beta: f64, sigma2: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return invalid("aspect ratio must be positive and finite");
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return invalid("noise variance must be positive and finite");
        }
        Ok(Self { beta, sigma2 })
    }

    /// Unit-variance law.
    pub fn standard(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Continuous support edges in unit-variance units.
    fn unit_edges(&self) -> (f64, f64) {
        let r = self.beta.sqrt();
        ((1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r))
    }

    /// Continuous support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        let (a, b) = self.unit_edges();
        (a * self.sigma2, b * self.sigma2)
    }

    /// Atom at zero when the aspect ratio exceeds one.
    pub fn point_mass(&self) -> f64 {
        (1.0 - 1.0 / self.beta).max(0.0)
    }

    /// Density of the continuous part. At `lambda = 0` with `beta = 1` the
    /// density diverges; `f64::INFINITY` is returned there.
    pub fn density(&self, lambda: f64) -> f64 {
        let (a, b) = self.unit_edges();
        let t = lambda / self.sigma2;
        if t < a || t > b {
            return 0.0;
        }
        if t <= 0.0 {
            return f64::INFINITY;
        }
        ((b - t) * (t - a)).max(0.0).sqrt() / (2.0 * PI * self.beta * lambda)
    }

    // Density after the substitution t = a + (b-a) sin^2(phi/2), phi in [0, pi].
    // Smooth on the closed interval, including the hard edge at beta = 1.
    fn angular_density(&self, phi: f64) -> f64 {
        let (a, b) = self.unit_edges();
        let w = b - a;
        let s = (0.5 * phi).sin();
        let c = (0.5 * phi).cos();
        let denom = a + w * s * s;
        let ratio = if denom <= 0.0 { 1.0 / w } else { s * s / denom };
        w * w * c * c * ratio / (2.0 * PI * self.beta)
    }

    fn angle_of(&self, t: f64) -> f64 {
        let (a, b) = self.unit_edges();
        let x = ((t - a) / (b - a)).clamp(0.0, 1.0);
        2.0 * x.sqrt().asin()
    }

    fn unit_of(&self, phi: f64) -> f64 {
        let (a, b) = self.unit_edges();
        let s = (0.5 * phi).sin();
        a + (b - a) * s * s
    }

    fn continuous_cdf_angle(&self, phi: f64) -> f64 {
        integrate(|p| self.angular_density(p), 0.0, phi, CDF_TOL)
    }

    /// Distribution function, including the atom at zero when present.
    pub fn cdf(&self, lambda: f64) -> f64 {
        if lambda < 0.0 {
            return 0.0;
        }
        let (a, b) = self.unit_edges();
        let t = lambda / self.sigma2;
        let pm = self.point_mass();
        if t <= a {
            return pm;
        }
        if t >= b {
            return 1.0;
        }
        (pm + self.continuous_cdf_angle(self.angle_of(t))).min(1.0)
    }

    /// Inverse distribution function for `q` in `(0, 1)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return invalid("quantile level outside (0,1)");
        }
        let pm = self.point_mass();
        if pm > 0.0 && q <= pm {
            return Ok(0.0);
        }
        let target = q - pm;
        // safeguarded Newton on the angle variable
        let (mut lo, mut hi) = (0.0, PI);
        let mut phi = 0.5 * PI;
        for _ in 0..200 {
            let f = self.continuous_cdf_angle(phi) - target;
            if f.abs() < 1e-14 {
                break;
            }
            if f < 0.0 {
                lo = phi;
            } else {
                hi = phi;
            }
            let g = self.angular_density(phi);
            let mut next = if g > 0.0 { phi - f / g } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - phi).abs() < 1e-15 {
                phi = next;
                break;
            }
            phi = next;
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(self.unit_of(phi) * self.sigma2)
    }

    /// One inverse-transform draw.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let u = uniform(rng);
        self.quantile(u).unwrap_or(f64::NAN)
    }
}

/// `(d ∧ n) / (d ∨ n)`.
pub fn aspect_ratio(d: usize, n: usize) -> f64 {
    d.min(n) as f64 / d.max(n) as f64
}

/// Quantile (degrees) of the angle between a uniformly random unit vector
/// in `R^ambient` and a fixed `dim`-dimensional subspace.
pub fn random_direction_angle_quantile(ambient: usize, dim: usize, q: f64) -> Result<f64> {
    if dim == 0 || dim >= ambient {
        return invalid("subspace dimension must satisfy 1 <= r < n");
    }
    if !(q > 0.0 && q < 1.0) {
        return invalid("quantile level outside (0,1)");
    }
    // cos^2 ~ Beta(r/2, (n-r)/2); a small angle is a large cosine
    let a = dim as f64 / 2.0;
    let b = (ambient - dim) as f64 / 2.0;
    let c2 = inv_reg_inc_beta(a, b, 1.0 - q);
    Ok(c2.sqrt().clamp(0.0, 1.0).acos().to_degrees())
}
