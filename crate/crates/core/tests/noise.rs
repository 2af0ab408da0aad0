use specrecon::geometry::{FanBeamGeometry, Projector};
use specrecon::phantom::{make_phantom, noisy_line_integral, simulate_counts, sub_rng, EnergyBinSpec, NoiseMode, PhantomConfig};

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn draws(p: f64, n0: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = sub_rng(seed, 0);
    (0..count).map(|_| noisy_line_integral(p, n0, &mut rng).0).collect()
}

#[test]
fn log_readings_are_unbiased_within_three_standard_errors() {
    let p = 0.1;
    let (m, se) = mean_and_se(&draws(p, 1e4, 100_000, 42));
    assert!((m - p).abs() < 3.0 * se, "mean {m} vs {p}, se {se}");
}

/// Second-order expansion of `E[-ln(c / N0)]` for `c ~ Poisson(mu)`:
/// `p + 1 / (2 mu)`, in both sampling regimes.
#[test]
fn log_readings_match_the_second_order_mean() {
    for (p, n0) in [(0.1, 1e4), (1.5, 1e4), (0.2, 500.0)] {
        let mu = n0 * f64::exp(-p);
        let (m, se) = mean_and_se(&draws(p, n0, 100_000, 7));
        let want = p + 1.0 / (2.0 * mu);
        assert!((m - want).abs() < 3.0 * se, "p {p} n0 {n0}: mean {m} vs {want}, se {se}");
    }
}

#[test]
fn zero_counts_are_clamped() {
    let mut rng = sub_rng(1, 0);
    let (v, clamped) = noisy_line_integral(40.0, 1e4, &mut rng);
    assert!(clamped);
    assert!((v - (1e4f64 / 0.5).ln()).abs() < 1e-12);
}

fn small_setup() -> (Projector, specrecon::phantom::SpectralPhantom) {
    let g = FanBeamGeometry::uniform(350.0, 210.0, 64, 0.6, 60, 32, 1.0).unwrap();
    let p = Projector::new(&g).unwrap();
    let ph = make_phantom(&PhantomConfig::desk_default(), &g, 5).unwrap();
    (p, ph)
}

fn noise_of(n0: f64, seed: u64) -> Vec<Vec<f64>> {
    let (p, ph) = small_setup();
    let bins = EnergyBinSpec::uniform(vec![20.0, 30.0, 40.0, 50.0, 60.0, 70.0], n0);
    let clean = simulate_counts(&ph, &p, &bins, NoiseMode::Off, seed).unwrap();
    let noisy = simulate_counts(&ph, &p, &bins, NoiseMode::Poisson, seed).unwrap();
    noisy.bins.iter().zip(&clean.bins).map(|(n, c)| n.iter().zip(c).map(|(a, b)| a - b).collect()).collect()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn bins_get_independent_noise() {
    let e = noise_of(1e4, 3);
    for i in 0..5 {
        for j in i + 1..5 {
            let r = corr(&e[i], &e[j]);
            assert!(r.abs() < 0.05, "bins {i},{j}: {r}");
        }
    }
}

#[test]
fn noise_variance_falls_with_photon_budget() {
    let var = |n0: f64| -> f64 {
        let e = noise_of(n0, 5);
        let all: Vec<f64> = e.into_iter().flatten().collect();
        all.iter().map(|v| v * v).sum::<f64>() / all.len() as f64
    };
    let (v3, v4, v5) = (var(1e3), var(1e4), var(1e5));
    assert!(v3 > v4 && v4 > v5, "{v3} {v4} {v5}");
}

#[test]
fn same_seed_same_sinogram_and_noise_off_is_exact() {
    let (p, ph) = small_setup();
    let bins = EnergyBinSpec::desk_default();
    let a = simulate_counts(&ph, &p, &bins, NoiseMode::Poisson, 9).unwrap();
    let b = simulate_counts(&ph, &p, &bins, NoiseMode::Poisson, 9).unwrap();
    assert_eq!(a, b);
    let c = simulate_counts(&ph, &p, &bins, NoiseMode::Poisson, 10).unwrap();
    assert_ne!(a.bins, c.bins);
    let off = simulate_counts(&ph, &p, &bins, NoiseMode::Off, 9).unwrap();
    for (b, img) in ph.truth.bins.iter().enumerate() {
        assert_eq!(off.bins[b], p.forward(img).unwrap());
    }
}
