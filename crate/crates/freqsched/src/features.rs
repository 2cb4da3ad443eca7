//! Engineered per-sub-band input features.
//!
//! For each sub-band the schedulers see, per user: the normalized buffer,
//! the normalized (log) channel power, and for every user pair the triple
//! quantifying spatial compatibility — inner-product magnitude, Hermitian
//! angle, and pseudo angle. Features are computed from the estimated
//! channel and the buffers only; the true channel never leaks into the
//! scheduler input.

use num_complex::Complex64;

use crate::env::{JointState, Scenario};
use crate::error::Error;
use crate::Result;

/// Per-scenario normalization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureNorms {
    /// Buffer reference in bits; buffers are clamped to `[0, 1]` of it.
    pub buffer_ref: f64,
    /// Expected per-user antenna-block power; scales powers and
    /// inner-product magnitudes.
    pub gain_ref: f64,
}

impl FeatureNorms {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let antennas = (scenario.config.n_rx * scenario.config.n_tx) as f64;
        Self {
            buffer_ref: scenario.config.buffer_reference(),
            gain_ref: scenario.mean_element_power() * antennas,
        }
    }
}

/// Features per user and sub-band: buffer, power, and three scalars per
/// user pair.
pub fn n_feat(n_users: usize) -> usize {
    2 + 3 * n_users
}

/// Flat per-sub-band feature length.
pub fn feature_len(n_users: usize) -> usize {
    n_users * n_feat(n_users)
}

/// Pair triple for two (flattened) channel vectors: scaled inner-product
/// magnitude, Hermitian angle in `[0, pi/2]`, and the pseudo angle (the
/// argument of the Hermitian inner product) in `(-pi, pi]`.
///
/// Zero-norm inputs give `(0, pi/2, 0)`.
pub fn pairwise_features(
    h_k: &[Complex64],
    h_m: &[Complex64],
    scale: f64,
) -> Result<(f64, f64, f64)> {
    if h_k.len() != h_m.len() {
        return Err(Error::Shape(format!(
            "pairwise features need equal-length vectors, got {} and {}",
            h_k.len(),
            h_m.len()
        )));
    }
    let inner: Complex64 = h_k.iter().zip(h_m).map(|(a, b)| a.conj() * b).sum();
    let norm_k = h_k.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let norm_m = h_m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm_k == 0.0 || norm_m == 0.0 {
        return Ok((0.0, std::f64::consts::FRAC_PI_2, 0.0));
    }
    let magnitude = inner.norm() * scale;
    let cosine = (inner.norm() / (norm_k * norm_m)).clamp(0.0, 1.0);
    let hermitian_angle = cosine.acos();
    let pseudo_angle = if inner == Complex64::new(0.0, 0.0) {
        0.0
    } else {
        inner.arg()
    };
    Ok((magnitude, hermitian_angle, pseudo_angle))
}

/// Flat feature vector of one sub-band, length `n_users * (2 + 3 n_users)`.
///
/// Layout per user: `[buffer, log-power, (mag, herm, pseudo) x n_users]`.
/// The self pair degenerates to the scaled power with zero angles.
pub fn subband_features(state: &JointState, subband: usize, norms: &FeatureNorms) -> Vec<f64> {
    let est = &state.est_channel;
    let n_users = est.n_users;
    let mut out = Vec::with_capacity(feature_len(n_users));
    for k in 0..n_users {
        let h_k = est.block(k, subband);
        let buffer = (state.buffers[k] / norms.buffer_ref).clamp(0.0, 1.0);
        out.push(buffer);
        let power = est.block_power(k, subband);
        out.push((power / norms.gain_ref).log10().clamp(-3.0, 3.0) / 3.0);
        for m in 0..n_users {
            let h_m = est.block(m, subband);
            let (mag, herm, pseudo) = pairwise_features(h_k, h_m, 1.0 / norms.gain_ref)
                .expect("blocks of one channel share their length");
            out.push(mag);
            out.push(herm);
            out.push(pseudo);
        }
    }
    out
}

/// Feature vectors for every sub-band of a state.
pub fn all_features(state: &JointState, norms: &FeatureNorms) -> Vec<Vec<f64>> {
    (0..state.est_channel.n_subbands)
        .map(|d| subband_features(state, d, norms))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_geometry, Channel, EnvConfig};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pairwise_examples() {
        let (mag, herm, pseudo) =
            pairwise_features(&[c(1.0, 0.0)], &[c(1.0, 0.0)], 2.0).unwrap();
        assert_eq!((mag, herm, pseudo), (2.0, 0.0, 0.0));

        let (mag, herm, pseudo) =
            pairwise_features(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)], 1.0)
                .unwrap();
        assert_eq!((mag, herm, pseudo), (0.0, FRAC_PI_2, 0.0));

        let (mag, herm, pseudo) =
            pairwise_features(&[c(1.0, 0.0)], &[c(0.0, 1.0)], 1.0).unwrap();
        assert!((mag - 1.0).abs() < 1e-15);
        assert!(herm.abs() < 1e-7);
        assert!((pseudo - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_and_mismatch_rules() {
        let zero = [c(0.0, 0.0), c(0.0, 0.0)];
        let (mag, herm, pseudo) =
            pairwise_features(&zero, &[c(1.0, 0.0), c(0.0, 0.0)], 1.0).unwrap();
        assert_eq!((mag, herm, pseudo), (0.0, FRAC_PI_2, 0.0));
        assert!(pairwise_features(&zero, &[c(1.0, 0.0)], 1.0).is_err());
    }

    #[test]
    fn angles_stay_in_range() {
        let mut rng = crate::env::derive_rng(17, &[0]);
        for _ in 0..500 {
            let h1: Vec<Complex64> = (0..3).map(|_| crate::env::complex_gaussian(&mut rng, 1.0)).collect();
            let h2: Vec<Complex64> = (0..3).map(|_| crate::env::complex_gaussian(&mut rng, 1.0)).collect();
            let (_, herm, pseudo) = pairwise_features(&h1, &h2, 1.0).unwrap();
            assert!((0.0..=FRAC_PI_2 + 1e-12).contains(&herm));
            assert!(pseudo > -PI - 1e-12 && pseudo <= PI + 1e-12);
        }
    }

    fn test_state(config: &EnvConfig, seed: u64) -> (crate::env::Scenario, JointState) {
        let scenario = generate_geometry(config, seed).unwrap();
        let state = scenario.observe(3);
        (scenario, state)
    }

    #[test]
    fn reference_feature_length() {
        assert_eq!(feature_len(4), 56);
        for n in 1..=12 {
            assert_eq!(feature_len(n), n * (2 + 3 * n));
        }
        let mut config = EnvConfig::default();
        config.buffer_max_bits = 2000.0;
        let (scenario, state) = test_state(&config, 5);
        let norms = FeatureNorms::for_scenario(&scenario);
        let v = subband_features(&state, 0, &norms);
        assert_eq!(v.len(), 56);
    }

    #[test]
    fn features_are_pure_and_true_channel_independent() {
        let mut config = EnvConfig::default();
        config.buffer_max_bits = 2000.0;
        config.snr_ce_db = 10.0;
        let (scenario, state) = test_state(&config, 6);
        let norms = FeatureNorms::for_scenario(&scenario);
        let a = subband_features(&state, 2, &norms);
        let b = subband_features(&state, 2, &norms);
        assert_eq!(a, b);

        // Scrambling the true channel must not move any feature.
        let mut scrambled = state.clone();
        for v in scrambled.true_channel.elements_mut() {
            *v *= 7.0;
        }
        assert_eq!(subband_features(&scrambled, 2, &norms), a);
    }

    #[test]
    fn self_pair_is_power_with_zero_angles() {
        let mut config = EnvConfig::default();
        config.buffer_max_bits = 2000.0;
        let (scenario, state) = test_state(&config, 8);
        let norms = FeatureNorms::for_scenario(&scenario);
        let n = state.est_channel.n_users;
        let v = subband_features(&state, 1, &norms);
        for k in 0..n {
            let base = k * n_feat(n) + 2 + 3 * k;
            let power = state.est_channel.block_power(k, 1) / norms.gain_ref;
            assert!((v[base] - power).abs() < 1e-12);
            // acos near 1 resolves to ~sqrt(eps) at best.
            assert!(v[base + 1].abs() < 1e-7);
            assert!(v[base + 2].abs() < 1e-12);
        }
    }

    #[test]
    fn all_features_bounded_even_for_zero_channel() {
        let mut config = EnvConfig::default();
        config.n_users = 2;
        config.buffer_max_bits = 2000.0;
        let (scenario, state) = test_state(&config, 9);
        let norms = FeatureNorms::for_scenario(&scenario);
        let mut zeroed = state;
        for v in zeroed.est_channel.elements_mut() {
            *v = c(0.0, 0.0);
        }
        for d in 0..scenario.config.n_subbands {
            let v = subband_features(&zeroed, d, &norms);
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn user_permutation_permutes_blocks_consistently() {
        let mut config = EnvConfig::default();
        config.n_users = 3;
        config.n_subbands = 2;
        config.buffer_max_bits = 2000.0;
        let (scenario, state) = test_state(&config, 10);
        let norms = FeatureNorms::for_scenario(&scenario);
        let perm = [2usize, 0, 1];

        // Permute users in the estimated channel and buffers.
        let cfg = &scenario.config;
        let mut permuted = state.clone();
        let mut est = Channel::zeros(cfg.n_users, cfg.n_subbands, cfg.n_rx, cfg.n_tx);
        for k in 0..cfg.n_users {
            for j in 0..cfg.n_subbands {
                est.block_mut(k, j)
                    .copy_from_slice(state.est_channel.block(perm[k], j));
            }
        }
        permuted.est_channel = est;
        permuted.buffers = perm.iter().map(|&p| state.buffers[p]).collect();

        let n = cfg.n_users;
        for d in 0..cfg.n_subbands {
            let base = subband_features(&state, d, &norms);
            let shuffled = subband_features(&permuted, d, &norms);
            for k in 0..n {
                for f in 0..2 {
                    assert_eq!(shuffled[k * n_feat(n) + f], base[perm[k] * n_feat(n) + f]);
                }
                for m in 0..n {
                    for f in 0..3 {
                        let got = shuffled[k * n_feat(n) + 2 + 3 * m + f];
                        let want = base[perm[k] * n_feat(n) + 2 + 3 * perm[m] + f];
                        assert_eq!(got, want, "d={d} k={k} m={m} f={f}");
                    }
                }
            }
        }
    }
}
