use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use specrecon::image::SpectralImageStack;
use specrecon::metrics::{blur_fraction, evaluate, psnr, rmse, BlurParams, Psnr, Roi};

const N: usize = 48;

/// Vertical step edge, optionally smoothed by a separable Gaussian with
/// replicated borders.
fn edge(sigma: f64) -> Vec<f64> {
    let img: Vec<f64> = (0..N * N).map(|i| if i % N >= N / 2 { 1.0 } else { 0.0 }).collect();
    if sigma == 0.0 {
        return img;
    }
    let r = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    let blur = |src: &[f64], horizontal: bool| -> Vec<f64> {
        (0..N * N)
            .map(|i| {
                let (row, col) = ((i / N) as isize, (i % N) as isize);
                (-r..=r)
                    .zip(&taps)
                    .map(|(d, t)| {
                        let (rr, cc) = if horizontal { (row, (col + d).clamp(0, N as isize - 1)) } else { ((row + d).clamp(0, N as isize - 1), col) };
                        t * src[rr as usize * N + cc as usize]
                    })
                    .sum::<f64>()
                    / total
            })
            .collect()
    };
    blur(&blur(&img, true), false)
}

fn roi() -> Roi {
    Roi { row: 8, col: 8, height: 32, width: 32 }
}

#[test]
fn blur_fraction_is_monotone_in_blur_width() {
    let p = BlurParams::default();
    let values: Vec<f64> = [0.0, 1.0, 2.0, 4.0].iter().map(|&s| blur_fraction(&edge(s), N, roi(), &p).unwrap().unwrap()).collect();
    assert_eq!(values[0], 0.0);
    assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
    assert!(values[2] > values[0], "{values:?}");
}

#[test]
fn blur_fraction_ignores_positive_affine_maps() {
    let p = BlurParams::default();
    for s in [1.0, 2.0] {
        let img = edge(s);
        let mapped: Vec<f64> = img.iter().map(|v| 0.02 * v + 0.005).collect();
        let (a, b) = (blur_fraction(&img, N, roi(), &p).unwrap().unwrap(), blur_fraction(&mapped, N, roi(), &p).unwrap().unwrap());
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn flat_roi_has_no_edges_and_bad_roi_is_rejected() {
    let p = BlurParams::default();
    assert_eq!(blur_fraction(&edge(0.0), N, Roi { row: 0, col: 0, height: 10, width: 10 }, &p).unwrap(), None);
    assert!(blur_fraction(&edge(0.0), N, Roi { row: 40, col: 0, height: 10, width: 10 }, &p).is_err());
}

#[test]
fn psnr_closed_forms() {
    let a = vec![0.0; 100];
    let b = vec![0.1; 100];
    match psnr(&a, &b, 1.0).unwrap() {
        Psnr::Finite(v) => assert!((v - 20.0).abs() < 1e-12),
        Psnr::Infinite => panic!("finite expected"),
    }
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), Psnr::Infinite);
    assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    assert!(psnr(&a, &b, 0.0).is_err());
}

#[test]
fn psnr_falls_as_noise_grows() {
    let truth = edge(1.0);
    let mut previous = f64::INFINITY;
    for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Normal::new(0.0, amp).unwrap();
        let noisy: Vec<f64> = truth.iter().map(|v| v + d.sample(&mut rng)).collect();
        let p = psnr(&noisy, &truth, 1.0).unwrap().db();
        assert!(p < previous);
        previous = p;
    }
}

#[test]
fn evaluate_uses_the_truth_range() {
    let truth = SpectralImageStack::new(N, vec![edge(0.0).iter().map(|v| 0.05 * v).collect()]).unwrap();
    let rec = SpectralImageStack::new(N, vec![truth.bins[0].iter().map(|v| v + 0.0005).collect()]).unwrap();
    let r = evaluate("x", &rec, Some(&truth), roi(), &BlurParams::default()).unwrap();
    // mse = 2.5e-7, range 0.05: 10 log10(0.0025 / 2.5e-7) = 40 dB.
    assert!((r.bins[0].psnr.unwrap().db() - 40.0).abs() < 1e-9);
    assert!((r.mean_psnr().unwrap() - 40.0).abs() < 1e-9);
    assert!(evaluate("x", &rec, None, roi(), &BlurParams::default()).unwrap().bins[0].psnr.is_none());
}

proptest! {
    #[test]
    fn psnr_matches_brute_force(seed in any::<u64>(), range in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..64).map(|_| d.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..64).map(|_| d.sample(&mut rng)).collect();
        let mse = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 64.0;
        let want = 10.0 * (range * range / mse).log10();
        prop_assert!((psnr(&a, &b, range).unwrap().db() - want).abs() < 1e-10);
        prop_assert!((rmse(&a, &b).unwrap() - mse.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn blur_fraction_lies_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        let img: Vec<f64> = (0..N * N).map(|_| d.sample(&mut rng)).collect();
        let v = blur_fraction(&img, N, roi(), &BlurParams::default()).unwrap().unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
