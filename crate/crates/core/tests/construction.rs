use bpcm::channel::AwgnSpec;
use bpcm::construction::{construct_gade, de_evolve, design_snr_search, estimate_bler, ChannelProfile};
use bpcm::polar::PolarCode;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn boxplus(a: f64, b: f64) -> f64 {
    // Exact form; the tanh product saturates for large magnitudes.
    let s = a.signum() * b.signum() * a.abs().min(b.abs());
    s + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// Propagates independent particle trees through the transform under the
/// all-zero codeword and returns the sample mean per input.
fn particle_means(leaf_means: &[f64], samples: usize, seed: u64) -> Vec<f64> {
    let n = leaf_means.len();
    let stages = n.trailing_zeros() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<Normal<f64>> = leaf_means.iter().map(|&m| Normal::new(m, (2.0 * m).sqrt()).unwrap()).collect();
    let mut acc = vec![0.0; n];
    let mut l = vec![0.0; n];
    for _ in 0..samples {
        for (x, d) in l.iter_mut().zip(&dists) {
            *x = d.sample(&mut rng);
        }
        for s in (1..=stages).rev() {
            let h = 1 << (s - 1);
            for base in (0..n).step_by(2 * h) {
                for i in base..base + h {
                    let (a, b) = (l[i], l[i + h]);
                    l[i] = boxplus(a, b);
                    l[i + h] = a + b;
                }
            }
        }
        for (s, x) in acc.iter_mut().zip(&l) {
            *s += x;
        }
    }
    acc.iter().map(|s| s / samples as f64).collect()
}

#[test]
fn de_matches_particle_density_evolution() {
    let code = PolarCode::new(vec![false; 4]).unwrap();
    let ga = de_evolve(&code, &ChannelProfile::new(vec![4.0f64; 4]).unwrap(), 2).unwrap();
    let mc = particle_means(&[4.0; 4], 1_000_000, 11);
    for (g, m) in ga.info_means.iter().zip(&mc) {
        assert!((g - m).abs() <= 0.05 * m, "GA {g} vs particles {m}");
    }
}

#[test]
fn de_matches_particles_on_non_identical_profile() {
    let leaves = [1.5, 6.0, 3.0, 9.0, 2.0, 4.5, 7.0, 5.0];
    let code = PolarCode::new(vec![false; 8]).unwrap();
    let ga = de_evolve(&code, &ChannelProfile::new(leaves.to_vec()).unwrap(), 3).unwrap();
    let mc = particle_means(&leaves, 400_000, 12);
    for (g, m) in ga.info_means.iter().zip(&mc) {
        assert!((g - m).abs() <= 0.05 * m, "GA {g} vs particles {m}");
    }
}

/// GA-DE with φ evaluated by direct integration and tabulated.
struct ExactGa {
    step: f64,
    ln_phi: Vec<f64>,
}

impl ExactGa {
    const CAP: f64 = 150.0;

    fn new() -> Self {
        let step = 0.01;
        let count = (Self::CAP / step) as usize + 1;
        let ln_phi = (0..count).map(|i| Self::integrate(i as f64 * step).ln()).collect();
        Self { step, ln_phi }
    }

    // φ(m) = E[2 / (1 + e^L)], L ~ N(m, 2m)
    fn integrate(m: f64) -> f64 {
        if m == 0.0 {
            return 1.0;
        }
        let sd = (2.0 * m).sqrt();
        let (lo, hi) = (m - 14.0 * sd, m + 14.0 * sd);
        let pts = 2000;
        let dx = (hi - lo) / pts as f64;
        let mut sum = 0.0;
        for i in 0..=pts {
            let l = lo + i as f64 * dx;
            let w = if i == 0 || i == pts { 0.5 } else { 1.0 };
            let z = (l - m) / sd;
            let dens = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            sum += w * dens * 2.0 / (1.0 + l.exp());
        }
        sum * dx
    }

    fn ln_phi(&self, m: f64) -> f64 {
        let x = m.min(Self::CAP) / self.step;
        let i = (x.floor() as usize).min(self.ln_phi.len() - 2);
        let t = x - i as f64;
        self.ln_phi[i] * (1.0 - t) + self.ln_phi[i + 1] * t
    }

    fn inv(&self, l: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, Self::CAP);
        if l <= self.ln_phi(hi) {
            return hi;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.ln_phi(mid) > l {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn means(&self, n: usize, m0: f64) -> Vec<f64> {
        // Recursive construction on a uniform channel: each input index's
        // bits (MSB first) pick check (0) or variable (1) updates.
        let mut level = vec![m0.min(Self::CAP)];
        while level.len() < n {
            let mut next = Vec::with_capacity(2 * level.len());
            for &m in &level {
                let p = self.ln_phi(m).exp();
                next.push(self.inv((1.0 - (1.0 - p) * (1.0 - p)).ln()));
                next.push((2.0 * m).min(Self::CAP));
            }
            level = next;
        }
        level
    }

    fn design_bler(&self, n: usize, k: usize, m0: f64) -> f64 {
        let mut ps: Vec<f64> = self.means(n, m0).iter().map(|&m| 0.5 * libm::erfc(m.sqrt() / 2.0)).collect();
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        1.0 - ps[..k].iter().map(|p| 1.0 - p).product::<f64>()
    }
}

#[test]
fn design_snr_agrees_with_integrated_phi() {
    let (n, k, target) = (1024, 512, 1e-5);
    let profile = |db: f64| Ok(ChannelProfile::uniform_bpsk(n, &AwgnSpec::<f64>::from_eb_n0_db(db, 0.5, 1)));
    let (snr, code) = design_snr_search(n, k, target, 10, profile).unwrap();
    assert!(estimate_bler(&code, &profile(snr).unwrap(), 10).unwrap() <= target);

    let oracle = ExactGa::new();
    let bler_at = |db: f64| {
        let spec = AwgnSpec::<f64>::from_eb_n0_db(db, 0.5, 1);
        oracle.design_bler(n, k, 2.0 / spec.noise_var())
    };
    let (mut lo, mut hi) = (-2.0, 8.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if bler_at(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!((snr - hi).abs() <= 0.3, "search {snr} dB vs oracle {hi} dB");
}

#[test]
fn gade_beats_random_subsets() {
    let spec = AwgnSpec::<f64>::from_eb_n0_db(2.0, 0.5, 1);
    let profile = ChannelProfile::uniform_bpsk(1024, &spec);
    let code = construct_gade(1024, 512, &profile, 10).unwrap();
    let best = estimate_bler(&code, &profile, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut all: Vec<usize> = (0..1024).collect();
    for _ in 0..100 {
        all.shuffle(&mut rng);
        let mut pick = all[..512].to_vec();
        pick.sort_unstable();
        let random = PolarCode::from_info_positions(1024, &pick).unwrap();
        assert!(best < estimate_bler(&random, &profile, 10).unwrap());
    }
}

#[test]
fn estimate_is_monotone_in_snr() {
    let code = construct_gade(256, 128, &ChannelProfile::uniform_bpsk(256, &AwgnSpec::<f64>::from_es_n0_db(1.0)), 8).unwrap();
    let mut prev = 1.0;
    for i in 0..40 {
        let spec = AwgnSpec::<f64>::from_es_n0_db(-3.0 + 0.25 * i as f64);
        let e = estimate_bler(&code, &ChannelProfile::uniform_bpsk(256, &spec), 8).unwrap();
        assert!(e <= prev);
        prev = e;
    }
}

#[test]
fn single_precision_profile() {
    let code = PolarCode::new(vec![false; 8]).unwrap();
    let r64 = de_evolve(&code, &ChannelProfile::new(vec![3.0f64; 8]).unwrap(), 3).unwrap();
    let r32 = de_evolve(&code, &ChannelProfile::new(vec![3.0f32; 8]).unwrap(), 3).unwrap();
    for (a, b) in r64.info_means.iter().zip(&r32.info_means) {
        assert!((a - *b as f64).abs() <= 1e-4 * a.max(1.0));
    }
}
