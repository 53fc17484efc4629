use ndarray::Array4;
use occface::norm_ops::{channel_stats, sean_apply, sft_apply, ActivationTensor, DEFAULT_EPS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(seed: u64, shape: (usize, usize, usize, usize), lo: f64, hi: f64) -> ActivationTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
}

/// Two-pass mean and population standard deviation per channel.
fn stats_oracle(z: &ActivationTensor) -> (Vec<f64>, Vec<f64>) {
    let (n, c, h, w) = z.dim();
    let mut mu = vec![0.0; c];
    let mut sd = vec![0.0; c];
    for ch in 0..c {
        let mut sum = 0.0;
        for i in 0..n {
            for y in 0..h {
                for x in 0..w {
                    sum += z[[i, ch, y, x]];
                }
            }
        }
        let count = (n * h * w) as f64;
        mu[ch] = sum / count;
        let mut sq = 0.0;
        for i in 0..n {
            for y in 0..h {
                for x in 0..w {
                    sq += (z[[i, ch, y, x]] - mu[ch]).powi(2);
                }
            }
        }
        sd[ch] = (sq / count).sqrt();
    }
    (mu, sd)
}

#[test]
fn sft_identity_and_zero_gamma() {
    let f = random_tensor(1, (2, 3, 4, 5), -2.0, 2.0);
    let ones = Array4::from_elem(f.dim(), 1.0);
    let zeros = Array4::zeros(f.dim());
    assert_eq!(sft_apply(&f, &ones, &zeros).unwrap(), f);
    let beta = random_tensor(2, f.dim(), -1.0, 1.0);
    assert_eq!(sft_apply(&f, &zeros, &beta).unwrap(), beta);
}

#[test]
fn sft_matches_scalar_oracle() {
    let f = random_tensor(3, (2, 2, 3, 3), -5.0, 5.0);
    let g = random_tensor(4, f.dim(), -5.0, 5.0);
    let b = random_tensor(5, f.dim(), -5.0, 5.0);
    let out = sft_apply(&f, &g, &b).unwrap();
    for (idx, v) in out.indexed_iter() {
        let expected = g[idx] * f[idx] + b[idx];
        assert!((v - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}

#[test]
fn sft_rejects_shape_mismatch() {
    let f = Array4::zeros((1, 2, 3, 3));
    let g = Array4::zeros((1, 2, 3, 4));
    assert!(sft_apply(&f, &g, &f).unwrap_err().is_input_error());
}

#[test]
fn stats_constant_and_two_values() {
    let z = Array4::from_elem((2, 2, 3, 3), 5.0);
    let (mu, sd) = channel_stats(&z).unwrap();
    assert_eq!(mu, vec![5.0, 5.0]);
    assert_eq!(sd, vec![0.0, 0.0]);

    let mut z = Array4::zeros((1, 1, 1, 4));
    for (i, v) in [1.0, 3.0, 1.0, 3.0].into_iter().enumerate() {
        z[[0, 0, 0, i]] = v;
    }
    let (mu, sd) = channel_stats(&z).unwrap();
    assert_eq!((mu[0], sd[0]), (2.0, 1.0));
}

#[test]
fn stats_match_two_pass_oracle() {
    let z = random_tensor(6, (3, 4, 5, 6), -3.0, 7.0);
    let (mu, sd) = channel_stats(&z).unwrap();
    let (mo, so) = stats_oracle(&z);
    for c in 0..4 {
        assert!((mu[c] - mo[c]).abs() < 1e-10);
        assert!((sd[c] - so[c]).abs() < 1e-10);
    }
}

#[test]
fn sean_normalizes_per_channel() {
    // The output std is exactly sigma / (sigma + eps); sigma ~ 60 keeps
    // that within 1e-6 of one.
    let z = random_tensor(7, (2, 3, 8, 8), -90.0, 110.0);
    let ones = Array4::from_elem(z.dim(), 1.0);
    let zeros = Array4::zeros(z.dim());
    let out = sean_apply(&z, &ones, &zeros, DEFAULT_EPS).unwrap();
    let (mu, sd) = stats_oracle(&out);
    for c in 0..3 {
        assert!(mu[c].abs() < 1e-10, "mean {}", mu[c]);
        assert!((sd[c] - 1.0).abs() < 1e-6, "std {}", sd[c]);
    }
}

#[test]
fn sean_constant_input_gives_zeros() {
    let z = Array4::from_elem((1, 2, 3, 3), 4.25);
    let out = sean_apply(&z, &Array4::from_elem(z.dim(), 1.0), &Array4::zeros(z.dim()), DEFAULT_EPS).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn sean_matches_scalar_oracle() {
    let z = random_tensor(8, (2, 3, 4, 4), -2.0, 2.0);
    let x = random_tensor(9, z.dim(), 0.5, 2.0);
    let y = random_tensor(10, z.dim(), -1.0, 1.0);
    let eps = 1e-3;
    let out = sean_apply(&z, &x, &y, eps).unwrap();
    let (mu, sd) = stats_oracle(&z);
    for ((n, c, h, w), v) in out.indexed_iter() {
        let expected = x[[n, c, h, w]] * (z[[n, c, h, w]] - mu[c]) / (sd[c] + eps) + y[[n, c, h, w]];
        assert!((v - expected).abs() < 1e-10);
    }
}

#[test]
fn sean_rejects_bad_eps_and_shapes() {
    let z = Array4::zeros((1, 1, 2, 2));
    assert!(sean_apply(&z, &z, &z, 0.0).is_err());
    assert!(sean_apply(&z, &Array4::zeros((1, 1, 2, 3)), &z, 1e-5).is_err());
}

proptest! {
    #[test]
    fn sft_inverts(seed in 0u64..1000) {
        let f = random_tensor(seed, (2, 2, 3, 3), -10.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let g = Array4::from_shape_simple_fn(f.dim(), || {
            let m = rng.random_range(0.1..5.0);
            if rng.random_bool(0.5) { m } else { -m }
        });
        let b = random_tensor(seed + 2, f.dim(), -3.0, 3.0);
        let once = sft_apply(&f, &g, &b).unwrap();
        let inv_g = g.mapv(|v| 1.0 / v);
        let inv_b = Array4::from_shape_fn(f.dim(), |i| -b[i] / g[i]);
        let back = sft_apply(&once, &inv_g, &inv_b).unwrap();
        for (a, e) in back.iter().zip(f.iter()) {
            prop_assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn sean_is_affine_invariant(seed in 0u64..1000, a in 0.1..10.0f64, b in -20.0..20.0f64) {
        let z = random_tensor(seed, (2, 2, 4, 4), -3.0, 3.0);
        let ones = Array4::from_elem(z.dim(), 1.0);
        let zeros = Array4::zeros(z.dim());
        let base = sean_apply(&z, &ones, &zeros, DEFAULT_EPS).unwrap();
        let moved = sean_apply(&z.mapv(|v| a * v + b), &ones, &zeros, DEFAULT_EPS).unwrap();
        let (_, sd) = channel_stats(&z).unwrap();
        for ((n, c, h, w), p) in base.indexed_iter() {
            // Scaling z by a turns eps into eps / a relative to sigma.
            let eps_effect = p.abs() * DEFAULT_EPS * (1.0 / a - 1.0).abs() / sd[c];
            prop_assert!((p - moved[[n, c, h, w]]).abs() <= 1e-6 + eps_effect);
        }
    }

    #[test]
    fn normalized_stats_hold(seed in 0u64..1000, scale in 20.0..500.0f64, shift in -100.0..100.0f64) {
        let z = random_tensor(seed, (2, 3, 5, 5), -1.0, 1.0).mapv(|v| scale * v + shift);
        let ones = Array4::from_elem(z.dim(), 1.0);
        let out = sean_apply(&z, &ones, &Array4::zeros(z.dim()), DEFAULT_EPS).unwrap();
        let (mu, sd) = channel_stats(&out).unwrap();
        for c in 0..3 {
            prop_assert!(mu[c].abs() < 1e-10);
            prop_assert!((sd[c] - 1.0).abs() < 1e-6);
        }
    }
}
