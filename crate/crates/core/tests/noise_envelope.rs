//! Imputed noise and the simulated Q-Q envelope.

use divas_core::linalg::thin_svd;
use divas_core::mp::MpLaw;
use divas_core::noise::{fraction_inside, impute_noise, laguerre_eigenvalues, qq_envelope};
use divas_core::rng::{gaussian_matrix, stream};
use divas_core::signal::{extract_from_values, Shrinker};
use nalgebra::DMatrix;

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

#[test]
fn tridiagonal_model_matches_dense_gaussian_spectra() {
    let (m, long, reps) = (12, 30, 600);
    let mut dense: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut tri: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut rng = stream(51, 0);
    let mut rng2 = stream(51, 1);
    for _ in 0..reps {
        let x = gaussian_matrix(&mut rng, m, long);
        let mut ev: Vec<f64> = thin_svd(&x).unwrap().s.iter().map(|s| s * s / long as f64).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lt = laguerre_eigenvalues(m, long, 1.0, &mut rng2).unwrap();
        for i in 0..m {
            dense[i].push(ev[i]);
            tri[i].push(lt[i]);
        }
    }
    for i in 0..m {
        let (a, sa) = mean_sd(&dense[i]);
        let (b, sb) = mean_sd(&tri[i]);
        let se = ((sa * sa + sb * sb) / reps as f64).sqrt();
        assert!((a - b).abs() <= 4.5 * se, "rank {i}: dense {a} tridiagonal {b} (se {se})");
        assert!((sa - sb).abs() <= 0.25 * sa.max(sb), "rank {i}: spread {sa} vs {sb}");
    }
}

#[test]
fn nothing_to_impute_keeps_the_spectrum() {
    let mut rng = stream(52, 0);
    let x = gaussian_matrix(&mut rng, 40, 60);
    let est = extract_from_values(&x, Shrinker::Optimal).unwrap();
    assert_eq!(est.rank, 0);
    let noise = impute_noise(&est, &mut stream(1, 1), false).unwrap();
    assert_eq!(noise.singular, est.svd.s);
    assert!((noise.to_matrix(&est) - &x).norm() < 1e-10 * x.norm());
}

#[test]
fn imputed_values_fall_in_the_bulk_and_are_seeded() {
    let mut rng = stream(53, 0);
    let (d, n) = (80, 160);
    let u = divas_core::linalg::orthonormalize(&gaussian_matrix(&mut rng, d, 3)).unwrap();
    let v = divas_core::linalg::orthonormalize(&gaussian_matrix(&mut rng, n, 3)).unwrap();
    let x = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![90.0, 70.0, 50.0])) * v.transpose()
        + gaussian_matrix(&mut rng, d, n);
    let est = extract_from_values(&x, Shrinker::Optimal).unwrap();
    assert_eq!(est.rank, 3);
    for stratified in [false, true] {
        let a = impute_noise(&est, &mut stream(9, 3), stratified).unwrap();
        let b = impute_noise(&est, &mut stream(9, 3), stratified).unwrap();
        assert_eq!(a.singular, b.singular);
        let scale = est.sigma_hat * est.long_root();
        let lo = scale * (1.0 - est.beta.sqrt());
        let hi = scale * (1.0 + est.beta.sqrt());
        for i in 0..3 {
            assert!(a.singular[i] >= lo && a.singular[i] <= hi, "{} not in [{lo}, {hi}]", a.singular[i]);
        }
        for i in 3..a.singular.len() {
            assert_eq!(a.singular[i], est.svd.s[i]);
        }
    }
}

#[test]
fn envelope_holds_the_theoretical_quantiles() {
    let len = 100;
    for seed in 0..20 {
        let env = qq_envelope(0.5, len, 1.0, 100, seed).unwrap();
        let interior: Vec<usize> = (5..len - 5).collect();
        let inside = interior
            .iter()
            .filter(|&&i| env.theoretical[i] >= env.env_min[i] && env.theoretical[i] <= env.env_max[i])
            .count();
        assert!(inside as f64 >= 0.95 * interior.len() as f64, "seed {seed}: {inside}");
    }
}

#[test]
fn envelope_narrows_with_size() {
    let width = |len: usize| {
        let env = qq_envelope(0.25, len, 1.0, 100, 4).unwrap();
        let lo = len / 10;
        let hi = len - len / 10;
        (lo..hi).map(|i| env.env_max[i] - env.env_min[i]).sum::<f64>() / (hi - lo) as f64
    };
    assert!(width(500) < width(125));
}

#[test]
fn envelope_is_seeded_and_pure_noise_sits_inside() {
    let a = qq_envelope(0.5, 60, 1.0, 50, 8).unwrap();
    let b = qq_envelope(0.5, 60, 1.0, 50, 8).unwrap();
    assert_eq!(a, b);
    let mut rng = stream(54, 0);
    let x = gaussian_matrix(&mut rng, 60, 120);
    let mut ev: Vec<f64> = thin_svd(&x).unwrap().s.iter().map(|s| s * s / 120.0).collect();
    ev.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let env = qq_envelope(0.5, 60, 1.0, 100, 3).unwrap();
    assert!(fraction_inside(&ev, &env) >= 0.9);
    let law = MpLaw::standard(0.5).unwrap();
    assert!((env.theoretical[30] - law.quantile(30.5 / 60.0).unwrap()).abs() < 1e-12);
}
