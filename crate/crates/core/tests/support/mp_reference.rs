//! Marchenko–Pastur density and CDF written out directly, and the KS
//! distance of a sample against a CDF.

#![allow(dead_code)]

/// Density written out directly, unit variance.
pub fn oracle_density(beta: f64, x: f64) -> f64 {
    let a = (1.0 - beta.sqrt()).powi(2);
    let b = (1.0 + beta.sqrt()).powi(2);
    if x <= a || x >= b {
        return 0.0;
    }
    ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * beta * x)
}

/// CDF by composite Simpson after `x = a + (b − a) sin²(t/2)`, which
/// removes the square-root endpoint behaviour.
pub fn oracle_cdf(beta: f64, x: f64) -> f64 {
    let a = (1.0 - beta.sqrt()).powi(2);
    let b = (1.0 + beta.sqrt()).powi(2);
    if x <= a {
        return 0.0;
    }
    if x >= b {
        return 1.0;
    }
    let t_end = 2.0 * ((x - a) / (b - a)).sqrt().asin();
    let f = |t: f64| {
        let s = (t / 2.0).sin();
        let c = (t / 2.0).cos();
        let xx = a + (b - a) * s * s;
        let jac = (b - a) * s * c;
        if xx <= 0.0 {
            // β = 1 edge: density·jacobian tends to (b − a)·c²/(2π)
            return (b - a) * c * c / (2.0 * std::f64::consts::PI);
        }
        oracle_density(beta, xx) * jac
    };
    let m = 20_000;
    let h = t_end / m as f64;
    let mut acc = f(0.0) + f(t_end);
    for i in 1..m {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sample.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max((f - i as f64 / m).abs()).max(((i + 1) as f64 / m - f).abs());
    }
    worst
}
