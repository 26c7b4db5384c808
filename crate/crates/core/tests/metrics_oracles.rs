mod common;

use common::{covariance_two_pass, denman_beavers, frobenius, mat_mul, mat_sub, random_psd, rng, ssim_oracle, uniform_vec};
use proptest::prelude::*;
use rand::Rng;
use srgan_core::data::{synth_dataset, synth_image, Family, ImageBuffer};
use srgan_core::metrics::{
    extract_features, fid, fit_gaussian, matrix_sqrt_psd, psnr, score_pair_sets, ssim, GaussianStats, Matrix,
    TinyConv, SSIM_K1,
};

fn random_image(seed: u64, w: usize, h: usize, c: usize) -> ImageBuffer {
    let mut g = rng(seed);
    ImageBuffer::from_fn(w, h, c, |_, _, _| g.gen::<f32>()).unwrap()
}

fn to_mat(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.d).map(|i| (0..m.d).map(|j| m.get(i, j)).collect()).collect()
}

#[test]
fn ssim_matches_sliding_window_oracle() {
    for (seed, c) in [(1, 1), (2, 3)] {
        let a = random_image(seed, 20, 17, c);
        let b = ImageBuffer::from_fn(20, 17, c, |x, y, ch| 0.7 * a.get(x, y, ch) + 0.2 * ((x + y) % 3) as f32 / 2.0).unwrap();
        let got = ssim(&a, &b, 1.0).unwrap();
        let want = ssim_oracle(a.data(), b.data(), 20, 17, c, 1.0);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn ssim_of_constant_images_has_closed_form() {
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    for (a, b) in [(0.3f32, 0.3f32), (0.3, 0.7), (0.9, 0.1)] {
        let ia = ImageBuffer::filled(16, 16, 1, a).unwrap();
        let ib = ImageBuffer::filled(16, 16, 1, b).unwrap();
        let (a, b) = (a as f64, b as f64);
        let want = (2.0 * a * b + c1) / (a * a + b * b + c1);
        let got = ssim(&ia, &ib, 1.0).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn identical_images_score_perfectly() {
    let a = random_image(3, 16, 16, 3);
    assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
}

#[test]
fn ssim_of_a_negative_is_low() {
    let a = synth_image(Family::Disks, 1, 0, 32).unwrap();
    let neg = ImageBuffer::from_fn(32, 32, 3, |x, y, c| 1.0 - a.get(x, y, c)).unwrap();
    let s = ssim(&a, &neg, 1.0).unwrap();
    let oracle = ssim_oracle(a.data(), neg.data(), 32, 32, 3, 1.0);
    assert!(s < 0.5 && oracle < 0.5, "{s} {oracle}");
}

#[test]
fn psnr_is_monotone_in_noise_level() {
    let mut g = rng(9);
    for trial in 0..100 {
        let base = random_image(trial, 12, 12, 1);
        let noise: Vec<f32> = (0..144).map(|_| g.gen_range(-1.0f32..1.0)).collect();
        let (s1, s2) = {
            let a: f32 = g.gen_range(0.001..0.1);
            (a, a * g.gen_range(1.5f32..4.0))
        };
        let perturb = |s: f32| {
            ImageBuffer::new(12, 12, 1, base.data().iter().zip(&noise).map(|(v, n)| v + s * n).map(|v| v.clamp(0.0, 1.0)).collect()).unwrap()
        };
        let (p1, p2) = (psnr(&base, &perturb(s1), 1.0).unwrap(), psnr(&base, &perturb(s2), 1.0).unwrap());
        assert!(p1 >= p2, "trial {trial}: {p1} < {p2}");
    }
}

#[test]
fn covariance_matches_two_pass_oracle() {
    let mut g = rng(12);
    let rows: Vec<Vec<f64>> = (0..100).map(|_| uniform_vec(&mut g, 5, -3.0, 7.0)).collect();
    let stats = fit_gaussian(&rows).unwrap();
    let (mu, cov) = covariance_two_pass(&rows);
    for i in 0..5 {
        assert!((stats.mu[i] - mu[i]).abs() < 1e-10);
        for j in 0..5 {
            assert!((stats.sigma.get(i, j) - cov[i][j]).abs() < 1e-10);
            assert_eq!(stats.sigma.get(i, j), stats.sigma.get(j, i));
        }
    }
}

#[test]
fn matrix_sqrt_agrees_with_denman_beavers() {
    let mut g = rng(77);
    for trial in 0..60 {
        let d = 1 + trial % 24;
        let m = random_psd(&mut g, d);
        let s = to_mat(&matrix_sqrt_psd(&Matrix::from_rows(&m)).unwrap());
        let oracle = denman_beavers(&m);
        let rel = frobenius(&mat_sub(&s, &oracle)) / frobenius(&oracle);
        assert!(rel < 1e-5, "d={d}: {rel}");
        let recon = frobenius(&mat_sub(&mat_mul(&s, &s), &m)) / frobenius(&m);
        assert!(recon < 1e-6, "d={d}: {recon}");
    }
}

#[test]
fn matrix_sqrt_rejects_bad_input() {
    let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
    assert!(matrix_sqrt_psd(&asym).is_err());
    let neg = Matrix::from_diag(&[1.0, -0.5]);
    assert!(matrix_sqrt_psd(&neg).is_err());
}

#[test]
fn fid_analytic_cases() {
    let one = |mu: f64, var: f64| GaussianStats { mu: vec![mu], sigma: Matrix::from_diag(&[var]), n: 10 };
    // (3)² + 1 + 4 − 2·√4 = 10.
    assert!((fid(&one(0.0, 1.0), &one(3.0, 4.0)).unwrap() - 10.0).abs() < 1e-6);
    for d in [1, 5, 32] {
        let x = GaussianStats { mu: vec![0.0; d], sigma: Matrix::identity(d), n: 10 };
        let g = GaussianStats { mu: vec![0.0; d], sigma: Matrix::from_diag(&vec![4.0; d]), n: 10 };
        assert!((fid(&x, &g).unwrap() - d as f64).abs() < 1e-6);
    }
    let mut r = rng(5);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| uniform_vec(&mut r, 8, -1.0, 1.0)).collect();
    let s = fit_gaussian(&rows).unwrap();
    assert!(fid(&s, &s).unwrap().abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fid_is_symmetric_and_non_negative(seed in any::<u64>(), d in 1usize..8, n in 2usize..20) {
        let mut g = rng(seed);
        let a: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut g, d, -1.0, 1.0)).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut g, d, -0.5, 2.0)).collect();
        let (sa, sb) = (fit_gaussian(&a).unwrap(), fit_gaussian(&b).unwrap());
        let (ab, ba) = (fid(&sa, &sb).unwrap(), fid(&sb, &sa).unwrap());
        prop_assert!((ab - ba).abs() < 1e-8 * ab.abs().max(1.0), "{} vs {}", ab, ba);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn ssim_is_symmetric(seed in any::<u64>(), w in 11usize..20, h in 11usize..20) {
        let a = random_image(seed, w, h, 3);
        let b = random_image(seed ^ 1, w, h, 3);
        prop_assert!((ssim(&a, &b, 1.0).unwrap() - ssim(&b, &a, 1.0).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn feature_extraction_is_order_preserving() {
    let imgs = synth_dataset(Family::Blocks, 11, 3, 32).unwrap();
    let tc = TinyConv::standard();
    let batch = extract_features(&imgs, &tc).unwrap();
    for (img, row) in imgs.iter().zip(&batch) {
        let single = extract_features(std::slice::from_ref(img), &tc).unwrap();
        assert_eq!(&single[0], row);
    }
}

#[test]
fn families_are_separated_by_fid() {
    let tc = TinyConv::standard();
    let n = 32;
    let disks_a = synth_dataset(Family::Disks, n, 1, 64).unwrap();
    let disks_b = synth_dataset(Family::Disks, n, 2, 64).unwrap();
    let stripes = synth_dataset(Family::Stripes, n, 1, 64).unwrap();
    let same = score_pair_sets(&disks_a, &disks_b, &tc, n).unwrap();
    let cross = score_pair_sets(&disks_a, &stripes, &tc, n).unwrap();
    assert!(same.fid > 0.0, "disjoint samples still differ");
    assert!(cross.fid >= 5.0 * same.fid, "cross {} vs same {}", cross.fid, same.fid);
    let ident = score_pair_sets(&disks_a, &disks_a, &tc, n).unwrap();
    assert!(ident.fid < 1e-6);
    assert_eq!(ident.psnr_db, f64::INFINITY);
    assert_eq!(ident.ssim, 1.0);
}
