mod common;

use common::ssim_direct;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use specrecon::geometry::FanBeamGeometry;
use specrecon::image::SpectralImageStack;
use specrecon::phantom::{make_phantom, PhantomConfig};
use specrecon::prior::{full_spectrum_reference, l_ss, l_ss_with_reference, minmax_normalize, ssim, SsimParams};

fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n * n).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn matches_direct_summation_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let params = SsimParams::default();
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let a = random_image(&mut rng, 32);
        // Half the pairs correlated, so values away from zero are covered too.
        let b: Vec<f64> = if k % 2 == 0 {
            random_image(&mut rng, 32)
        } else {
            a.iter().map(|v| (0.8 * v + 0.2 * rng.random::<f64>()).min(1.0)).collect()
        };
        let got = ssim(&a, &b, 32, 32, &params).unwrap();
        worst = worst.max((got - ssim_direct(&a, &b, 32)).abs());
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn self_similarity_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = SsimParams::default();
    for _ in 0..10 {
        let a = random_image(&mut rng, 32);
        assert!((ssim(&a, &a, 32, 32, &params).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    assert!(ssim(&[0.0; 16], &[0.0; 15], 4, 4, &SsimParams::default()).is_err());
}

#[test]
fn window_taps_sum_to_one() {
    let t = SsimParams::default().taps();
    assert_eq!(t.len(), 11);
    assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

fn desk_truth() -> SpectralImageStack {
    let g = FanBeamGeometry::desk_default();
    make_phantom(&PhantomConfig::desk_default(), &g, 5).unwrap().truth
}

fn add_noise(img: &mut [f64], sd: f64, rng: &mut ChaCha8Rng) {
    let d = Normal::new(0.0, sd).unwrap();
    img.iter_mut().for_each(|v| *v += d.sample(rng));
}

#[test]
fn noise_in_one_bin_raises_l_ss() {
    let params = SsimParams::default();
    let clean = desk_truth();
    let base = l_ss(&clean, &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut previous = base;
    for sd in [0.001, 0.003, 0.01] {
        let mut noisy = clean.clone();
        add_noise(&mut noisy.bins[3], sd, &mut ChaCha8Rng::seed_from_u64(rng.random()));
        let v = l_ss(&noisy, &params).unwrap();
        assert!(v > previous, "sd {sd}: {v} vs {previous}");
        previous = v;
    }
}

#[test]
fn reference_is_smoother_than_any_bin_in_a_flat_region() {
    let mut stack = desk_truth();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for b in &mut stack.bins {
        add_noise(b, 0.004, &mut rng);
    }
    // Soft tissue below the left lung, x in [-6.5, -3.5] mm, y in [-7.5, -4.5] mm.
    let roi = |img: &[f64]| -> f64 {
        let vals: Vec<f64> = (82..94).flat_map(|r| (38..50).map(move |c| r * 128 + c)).map(|i| img[i]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64
    };
    let reference = full_spectrum_reference(&stack).unwrap();
    let ref_var = roi(&reference);
    for b in &stack.bins {
        assert!(ref_var < roi(&minmax_normalize(b)));
    }
}

#[test]
fn identical_bins_give_zero_and_reference_equals_the_normalized_bin() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(&mut rng, 16);
    let stack = SpectralImageStack::new(16, vec![img.clone(); 3]).unwrap();
    assert!(l_ss(&stack, &SsimParams::default()).unwrap().abs() < 1e-12);
    for (r, v) in full_spectrum_reference(&stack).unwrap().iter().zip(minmax_normalize(&img)) {
        assert!((r - v).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_image(&mut rng, 16), random_image(&mut rng, 16));
        let p = SsimParams::default();
        let (ab, ba) = (ssim(&a, &b, 16, 16, &p).unwrap(), ssim(&b, &a, 16, 16, &p).unwrap());
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn l_ss_lies_in_zero_two(seed in any::<u64>(), bins in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = SpectralImageStack::new(16, (0..bins).map(|_| random_image(&mut rng, 16)).collect()).unwrap();
        let v = l_ss(&stack, &SsimParams::default()).unwrap();
        prop_assert!((0.0..=2.0).contains(&v));
    }

    #[test]
    fn normalization_is_affine_invariant(seed in any::<u64>(), scale in 0.01f64..100.0, shift in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_image(&mut rng, 8);
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        for (u, v) in minmax_normalize(&x).iter().zip(minmax_normalize(&y)) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    /// Against a fixed reference, an affine rescale of any one bin leaves the
    /// loss unchanged.
    #[test]
    fn l_ss_ignores_single_bin_rescale_at_fixed_reference(
        seed in any::<u64>(), bin in 0usize..3, scale in 0.1f64..10.0, shift in -1.0f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = SpectralImageStack::new(16, (0..3).map(|_| random_image(&mut rng, 16)).collect()).unwrap();
        let reference = full_spectrum_reference(&stack).unwrap();
        let mut scaled = stack.clone();
        scaled.bins[bin].iter_mut().for_each(|v| *v = scale * *v + shift);
        let p = SsimParams::default();
        let (a, b) = (l_ss_with_reference(&stack, &reference, &p).unwrap(), l_ss_with_reference(&scaled, &reference, &p).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    /// The same rescale of every bin also leaves the self-derived reference
    /// unchanged.
    #[test]
    fn l_ss_ignores_common_rescale(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = SpectralImageStack::new(16, (0..3).map(|_| random_image(&mut rng, 16)).collect()).unwrap();
        let mut scaled = stack.clone();
        scaled.bins.iter_mut().flatten().for_each(|v| *v = scale * *v + shift);
        let p = SsimParams::default();
        prop_assert!((l_ss(&stack, &p).unwrap() - l_ss(&scaled, &p).unwrap()).abs() < 1e-12);
    }
}
