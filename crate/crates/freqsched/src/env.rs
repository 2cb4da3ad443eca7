//! Scheduling environment: user placement, frequency-selective
//! time-correlated channels, channel-estimation impairments, buffers, and
//! average-rate normalizers.
//!
//! The channel is a tapped delay line per user and antenna pair. Taps are
//! circularly-symmetric complex Gaussian with equal power summing to the
//! user's large-scale gain, and evolve over slots as an AR(1) process whose
//! coefficient is the Jakes autocorrelation `J0(2 pi f_d T_slot)`. The
//! per-sub-band frequency response is the tap DFT. Channel estimates age by
//! one slot when the users move and carry additive Gaussian noise scaled by
//! the estimation SNR.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::link::{allocation_rates, McsTable};
use crate::Result;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Monte-Carlo draws used for the average-rate normalizers.
const AVG_RATE_DRAWS: usize = 200;

/// Reference buffer size used for feature normalization when the
/// configured maximum is unbounded.
pub const UNBOUNDED_BUFFER_REF: f64 = 4000.0;

// Derived-stream tags. Every random quantity of a scenario comes from its
// own ChaCha stream keyed by (seed, tag, indices), so any slot is
// reproducible in isolation.
const TAG_PLACEMENT: u64 = 0x01;
const TAG_SHADOWING: u64 = 0x02;
const TAG_TAPS: u64 = 0x03;
const TAG_INNOVATION: u64 = 0x04;
const TAG_BUFFERS: u64 = 0x05;
const TAG_CE_NOISE: u64 = 0x06;
const TAG_AVG_RATES: u64 = 0x07;

/// Default stream id used by [`Scenario::observe`]; training, validation
/// and evaluation use distinct ids to keep their randomness disjoint.
pub const DEFAULT_STREAM: u64 = 0;

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut acc = mix64(base);
    for &t in tags {
        acc = mix64(acc ^ t);
    }
    acc
}

pub(crate) fn derive_rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Complex Gaussian with i.i.d. real/imaginary parts and total variance
/// `var`.
pub(crate) fn complex_gaussian(rng: &mut impl Rng, var: f64) -> Complex64 {
    let sigma = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sigma, im * sigma)
}

/// Environment parameterization. Defaults reproduce the reference
/// scenario: 4 users on 10 sub-bands, at most 2 co-scheduled, 3.5 GHz,
/// 2x1 antennas, 1 ms slots, 400-bit minimum buffers, a 500 m sector of
/// 65 degrees with a 35 m hole, no mobility and exact channel estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub n_users: usize,
    pub n_subbands: usize,
    pub max_coscheduled: usize,
    pub include_empty_action: bool,
    pub subband_width_hz: f64,
    pub carrier_freq_hz: f64,
    pub slot_duration_s: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    pub cell_radius_m: f64,
    pub sector_angle_deg: f64,
    pub min_distance_m: f64,
    pub buffer_min_bits: f64,
    pub buffer_max_bits: f64,
    pub user_speed_mps: f64,
    pub snr_ce_db: f64,
    pub pathloss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub n_taps: usize,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_users: 4,
            n_subbands: 10,
            max_coscheduled: 2,
            include_empty_action: false,
            subband_width_hz: 180e3,
            carrier_freq_hz: 3.5e9,
            slot_duration_s: 1e-3,
            n_tx: 2,
            n_rx: 1,
            tx_power_w: 1.0,
            noise_power_w: 1e-6,
            cell_radius_m: 500.0,
            sector_angle_deg: 65.0,
            min_distance_m: 35.0,
            buffer_min_bits: 400.0,
            buffer_max_bits: f64::INFINITY,
            user_speed_mps: 0.0,
            snr_ce_db: f64::INFINITY,
            pathloss_exponent: 3.7,
            shadowing_sigma_db: 8.0,
            n_taps: 4,
            seed: 1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_users == 0 {
            return fail("n_users must be at least 1".into());
        }
        if self.n_subbands == 0 {
            return fail("n_subbands must be at least 1".into());
        }
        if self.max_coscheduled == 0 || self.max_coscheduled > self.n_users {
            return fail(format!(
                "max_coscheduled must satisfy 1 <= M <= n_users, got {}",
                self.max_coscheduled
            ));
        }
        if self.n_tx == 0 || self.n_rx == 0 {
            return fail("n_tx and n_rx must be at least 1".into());
        }
        if self.n_taps == 0 {
            return fail("n_taps must be at least 1".into());
        }
        if !(self.tx_power_w > 0.0) || !(self.noise_power_w > 0.0) {
            return fail("tx_power_w and noise_power_w must be positive".into());
        }
        if !(self.subband_width_hz > 0.0) || !(self.slot_duration_s > 0.0) {
            return fail("subband_width_hz and slot_duration_s must be positive".into());
        }
        if !(self.carrier_freq_hz > 0.0) {
            return fail("carrier_freq_hz must be positive".into());
        }
        if !(self.min_distance_m > 0.0) || self.cell_radius_m <= self.min_distance_m {
            return fail("cell geometry requires 0 < min_distance_m < cell_radius_m".into());
        }
        if !(self.sector_angle_deg > 0.0) || self.sector_angle_deg > 360.0 {
            return fail("sector_angle_deg must lie in (0, 360]".into());
        }
        if self.buffer_min_bits < 0.0 || self.buffer_min_bits > self.buffer_max_bits {
            return fail("buffers require 0 <= buffer_min_bits <= buffer_max_bits".into());
        }
        if self.user_speed_mps < 0.0 {
            return fail("user_speed_mps must be non-negative".into());
        }
        if !(self.snr_ce_db > f64::NEG_INFINITY) {
            return fail("snr_ce_db must be a value or +inf".into());
        }
        Ok(())
    }

    /// Jakes AR(1) coefficient for the configured speed.
    pub fn doppler_coeff(&self) -> f64 {
        let f_d = self.user_speed_mps * self.carrier_freq_hz / SPEED_OF_LIGHT;
        libm::j0(2.0 * std::f64::consts::PI * f_d * self.slot_duration_s)
    }

    /// Buffer value used for feature normalization.
    pub fn buffer_reference(&self) -> f64 {
        if self.buffer_max_bits.is_finite() {
            self.buffer_max_bits
        } else {
            UNBOUNDED_BUFFER_REF
        }
    }
}

/// Complex channel tensor `(n_users, n_subbands, n_rx, n_tx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub n_users: usize,
    pub n_subbands: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    data: Vec<Complex64>,
}

impl Channel {
    pub fn zeros(n_users: usize, n_subbands: usize, n_rx: usize, n_tx: usize) -> Self {
        Self {
            n_users,
            n_subbands,
            n_rx,
            n_tx,
            data: vec![Complex64::new(0.0, 0.0); n_users * n_subbands * n_rx * n_tx],
        }
    }

    #[inline]
    fn offset(&self, user: usize, subband: usize) -> usize {
        ((user * self.n_subbands) + subband) * self.n_rx * self.n_tx
    }

    /// Contiguous `(n_rx * n_tx)` block for one user and sub-band,
    /// rx-major.
    pub fn block(&self, user: usize, subband: usize) -> &[Complex64] {
        let o = self.offset(user, subband);
        &self.data[o..o + self.n_rx * self.n_tx]
    }

    pub fn block_mut(&mut self, user: usize, subband: usize) -> &mut [Complex64] {
        let o = self.offset(user, subband);
        let len = self.n_rx * self.n_tx;
        &mut self.data[o..o + len]
    }

    pub fn at(&self, user: usize, subband: usize, rx: usize, tx: usize) -> Complex64 {
        self.data[self.offset(user, subband) + rx * self.n_tx + tx]
    }

    pub fn elements(&self) -> &[Complex64] {
        &self.data
    }

    pub fn elements_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Squared Frobenius norm over the antenna block of one user/sub-band.
    pub fn block_power(&self, user: usize, subband: usize) -> f64 {
        self.block(user, subband).iter().map(|c| c.norm_sqr()).sum()
    }
}

/// The joint MDP state: true and estimated channels plus per-user buffers
/// in bits (`f64::INFINITY` for unbounded backlog).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub true_channel: Channel,
    pub est_channel: Channel,
    pub buffers: Vec<f64>,
}

/// Immutable generated scenario: geometry, slow fading, initial taps and
/// average-rate normalizers. All slot-level randomness derives from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: EnvConfig,
    /// User positions in metres relative to the antenna.
    pub user_positions: Vec<(f64, f64)>,
    /// Linear large-scale gain per user (pathloss times shadowing).
    pub large_scale_gain: Vec<f64>,
    /// Initial tap coefficients, flat over `(user, rx, tx, tap)`.
    pub tap_coefficients: Vec<Complex64>,
    /// AR(1) coefficient per user.
    pub doppler_coeff: Vec<f64>,
    /// Average rate normalizers in bits/s, floored at 1.
    pub avg_rates: Vec<f64>,
    /// Root seed of all derived random streams.
    pub seed: u64,
}

/// Builds a scenario, including the Monte-Carlo average-rate normalizers.
pub fn new_scenario(config: &EnvConfig, seed: u64) -> Result<Scenario> {
    new_scenario_with_mcs(config, seed, &McsTable::default())
}

/// Scenario construction with an explicit MCS table for the average-rate
/// pipeline.
pub fn new_scenario_with_mcs(config: &EnvConfig, seed: u64, mcs: &McsTable) -> Result<Scenario> {
    let mut scenario = generate_geometry(config, seed)?;
    scenario.avg_rates = compute_avg_rates(&scenario, mcs);
    Ok(scenario)
}

/// Geometry and fading only; average rates left at the 1 bit/s floor.
/// Statistical tests use this to draw many scenarios cheaply.
pub(crate) fn generate_geometry(config: &EnvConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let n = config.n_users;

    let mut pos_rng = derive_rng(seed, &[TAG_PLACEMENT]);
    let half_angle = config.sector_angle_deg.to_radians() / 2.0;
    let (r0, r1) = (config.min_distance_m, config.cell_radius_m);
    let user_positions: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let u: f64 = pos_rng.gen();
            let r = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
            let theta = pos_rng.gen_range(-half_angle..=half_angle);
            (r * theta.cos(), r * theta.sin())
        })
        .collect();

    let mut shadow_rng = derive_rng(seed, &[TAG_SHADOWING]);
    let large_scale_gain: Vec<f64> = user_positions
        .iter()
        .map(|&(x, y)| {
            let d = (x * x + y * y).sqrt();
            let pathloss = (d / config.min_distance_m).powf(-config.pathloss_exponent);
            let shadow_db: f64 =
                shadow_rng.sample::<f64, _>(StandardNormal) * config.shadowing_sigma_db;
            pathloss * 10f64.powf(shadow_db / 10.0)
        })
        .collect();

    let mut tap_rng = derive_rng(seed, &[TAG_TAPS]);
    let mut tap_coefficients =
        Vec::with_capacity(n * config.n_rx * config.n_tx * config.n_taps);
    for k in 0..n {
        let var = large_scale_gain[k] / config.n_taps as f64;
        for _ in 0..config.n_rx * config.n_tx * config.n_taps {
            tap_coefficients.push(complex_gaussian(&mut tap_rng, var));
        }
    }

    let rho = config.doppler_coeff();
    Ok(Scenario {
        config: config.clone(),
        user_positions,
        large_scale_gain,
        tap_coefficients,
        doppler_coeff: vec![rho; n],
        avg_rates: vec![1.0; n],
        seed,
    })
}

impl Scenario {
    fn taps_per_user(&self) -> usize {
        self.config.n_rx * self.config.n_tx * self.config.n_taps
    }

    /// AR(1) innovation for one tap element at one slot, drawn from its own
    /// derived stream so any slot is addressable without history.
    fn innovation(&self, stream: u64, flat_element: usize, tap_var: f64, t: u64) -> Complex64 {
        let mut rng = derive_rng(
            self.seed,
            &[TAG_INNOVATION, stream, flat_element as u64, t],
        );
        complex_gaussian(&mut rng, tap_var)
    }

    /// Advances the tap state by one slot, in place.
    fn evolve_taps(&self, stream: u64, taps: &mut [Complex64], t: u64) {
        let per_user = self.taps_per_user();
        for k in 0..self.config.n_users {
            let rho = self.doppler_coeff[k];
            if rho == 1.0 {
                continue;
            }
            let scale = (1.0 - rho * rho).max(0.0).sqrt();
            let tap_var = self.large_scale_gain[k] / self.config.n_taps as f64;
            for e in 0..per_user {
                let flat = k * per_user + e;
                let xi = self.innovation(stream, flat, tap_var, t);
                taps[flat] = rho * taps[flat] + scale * xi;
            }
        }
    }

    /// Frequency response of the given tap state.
    fn taps_to_channel(&self, taps: &[Complex64]) -> Channel {
        let c = &self.config;
        let mut ch = Channel::zeros(c.n_users, c.n_subbands, c.n_rx, c.n_tx);
        for k in 0..c.n_users {
            for j in 0..c.n_subbands {
                for r in 0..c.n_rx {
                    for tx in 0..c.n_tx {
                        let base = ((k * c.n_rx + r) * c.n_tx + tx) * c.n_taps;
                        let mut acc = Complex64::new(0.0, 0.0);
                        for l in 0..c.n_taps {
                            let phase = -2.0 * std::f64::consts::PI * (j as f64) * (l as f64)
                                / c.n_subbands as f64;
                            acc += taps[base + l] * Complex64::from_polar(1.0, phase);
                        }
                        ch.block_mut(k, j)[r * c.n_tx + tx] = acc;
                    }
                }
            }
        }
        ch
    }

    /// Tap state at slot `t` on the given stream, replayed from the initial
    /// state. Cost grows linearly with `t`; sequential consumers should use
    /// [`EpisodeStream`].
    fn taps_at(&self, stream: u64, t: u64) -> Vec<Complex64> {
        let mut taps = self.tap_coefficients.clone();
        for s in 1..=t {
            self.evolve_taps(stream, &mut taps, s);
        }
        taps
    }

    /// True channel at slot `t` (default stream).
    pub fn channel_at(&self, t: u64) -> Channel {
        self.channel_at_stream(DEFAULT_STREAM, t)
    }

    pub fn channel_at_stream(&self, stream: u64, t: u64) -> Channel {
        self.taps_to_channel(&self.taps_at(stream, t))
    }

    /// Estimation aging lag in slots: one slot of staleness as soon as the
    /// users move.
    pub fn aging_lag(&self) -> u64 {
        if self.config.user_speed_mps > 0.0 {
            1
        } else {
            0
        }
    }

    /// Mean per-element channel power across users; reference for the
    /// estimation-noise variance.
    pub fn mean_element_power(&self) -> f64 {
        self.large_scale_gain.iter().sum::<f64>() / self.large_scale_gain.len() as f64
    }

    fn estimation_noise_var(&self) -> f64 {
        if self.config.snr_ce_db.is_infinite() {
            0.0
        } else {
            self.mean_element_power() / 10f64.powf(self.config.snr_ce_db / 10.0)
        }
    }

    fn apply_estimation(&self, stream: u64, est: &mut Channel, t: u64) {
        let var = self.estimation_noise_var();
        if var == 0.0 {
            return;
        }
        let mut rng = derive_rng(self.seed, &[TAG_CE_NOISE, stream, t]);
        for v in est.elements_mut() {
            *v += complex_gaussian(&mut rng, var);
        }
    }

    /// Full joint state at slot `t` on the default stream.
    pub fn observe(&self, t: u64) -> JointState {
        self.observe_stream(DEFAULT_STREAM, t)
    }

    pub fn observe_stream(&self, stream: u64, t: u64) -> JointState {
        let lag = self.aging_lag();
        let taps_now = self.taps_at(stream, t);
        let true_channel = self.taps_to_channel(&taps_now);
        let est_channel = if lag == 0 && self.estimation_noise_var() == 0.0 {
            true_channel.clone()
        } else {
            let base = if lag == 0 {
                taps_now
            } else {
                self.taps_at(stream, t.saturating_sub(lag))
            };
            let mut est = self.taps_to_channel(&base);
            self.apply_estimation(stream, &mut est, t);
            est
        };
        JointState {
            true_channel,
            est_channel,
            buffers: self.draw_buffers_stream(stream, t),
        }
    }

    /// Per-user buffer draw for slot `t` (default stream).
    pub fn draw_buffers(&self, t: u64) -> Vec<f64> {
        self.draw_buffers_stream(DEFAULT_STREAM, t)
    }

    pub fn draw_buffers_stream(&self, stream: u64, t: u64) -> Vec<f64> {
        let c = &self.config;
        if c.buffer_max_bits.is_infinite() {
            return vec![f64::INFINITY; c.n_users];
        }
        let mut rng = derive_rng(self.seed, &[TAG_BUFFERS, stream, t]);
        let (lo, hi) = (c.buffer_min_bits as u64, c.buffer_max_bits as u64);
        (0..c.n_users).map(|_| rng.gen_range(lo..=hi) as f64).collect()
    }
}

/// Sequential state generator over slots with O(taps) work per step.
///
/// Produces exactly the states of [`Scenario::observe_stream`] for the same
/// stream id; the episode owns the evolving tap state.
pub struct EpisodeStream<'a> {
    scenario: &'a Scenario,
    stream: u64,
    slot: u64,
    taps_cur: Vec<Complex64>,
    taps_prev: Vec<Complex64>,
}

impl<'a> EpisodeStream<'a> {
    pub fn new(scenario: &'a Scenario, stream: u64) -> Self {
        let taps = scenario.tap_coefficients.clone();
        Self {
            scenario,
            stream,
            slot: 0,
            taps_cur: taps.clone(),
            taps_prev: taps,
        }
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// State at the current slot; advances to the next slot.
    pub fn step(&mut self) -> JointState {
        let sc = self.scenario;
        let t = self.slot;
        let true_channel = sc.taps_to_channel(&self.taps_cur);
        let est_channel = if sc.aging_lag() == 0 && sc.estimation_noise_var() == 0.0 {
            true_channel.clone()
        } else {
            let base = if sc.aging_lag() == 0 {
                &self.taps_cur
            } else {
                &self.taps_prev
            };
            let mut est = sc.taps_to_channel(base);
            sc.apply_estimation(self.stream, &mut est, t);
            est
        };
        let state = JointState {
            true_channel,
            est_channel,
            buffers: sc.draw_buffers_stream(self.stream, t),
        };
        self.taps_prev.copy_from_slice(&self.taps_cur);
        sc.evolve_taps(self.stream, &mut self.taps_cur, t + 1);
        self.slot += 1;
        state
    }

    /// Raw tap state of the current slot; used by statistics tests.
    #[cfg(test)]
    pub(crate) fn current_taps(&self) -> &[Complex64] {
        &self.taps_cur
    }
}

/// Monte-Carlo average rate per user: fresh stationary fading, fresh
/// buffers and a uniformly random valid allocation per draw, averaged over
/// the full rate pipeline and floored at 1 bit/s.
pub fn compute_avg_rates(scenario: &Scenario, mcs: &McsTable) -> Vec<f64> {
    let c = &scenario.config;
    let table = crate::actions::enumerate_actions(
        c.n_users,
        c.max_coscheduled,
        c.include_empty_action,
    )
    .expect("scenario config was validated");
    let mut totals = vec![0.0_f64; c.n_users];
    for draw in 0..AVG_RATE_DRAWS {
        let mut rng = derive_rng(scenario.seed, &[TAG_AVG_RATES, draw as u64]);
        // Fresh small-scale fading at the expected power.
        let mut taps = Vec::with_capacity(scenario.tap_coefficients.len());
        for k in 0..c.n_users {
            let var = scenario.large_scale_gain[k] / c.n_taps as f64;
            for _ in 0..scenario.taps_per_user() {
                taps.push(complex_gaussian(&mut rng, var));
            }
        }
        let channel = scenario.taps_to_channel(&taps);
        let buffers: Vec<f64> = if c.buffer_max_bits.is_infinite() {
            vec![f64::INFINITY; c.n_users]
        } else {
            let (lo, hi) = (c.buffer_min_bits as u64, c.buffer_max_bits as u64);
            (0..c.n_users).map(|_| rng.gen_range(lo..=hi) as f64).collect()
        };
        let allocation: Vec<Vec<usize>> = (0..c.n_subbands)
            .map(|_| {
                let idx = rng.gen_range(0..table.n_actions());
                table.subset(idx).expect("index in range").to_vec()
            })
            .collect();
        let outcomes = allocation_rates(&channel, &channel, &buffers, &allocation, c, mcs);
        for (k, o) in outcomes.iter().enumerate() {
            totals[k] += o.rate;
        }
    }
    totals
        .into_iter()
        .map(|sum| (sum / AVG_RATE_DRAWS as f64).max(1.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> EnvConfig {
        EnvConfig {
            n_users: 2,
            n_subbands: 4,
            max_coscheduled: 2,
            n_taps: 2,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn default_config_matches_reference_parameters() {
        let c = EnvConfig::default();
        assert_eq!(c.n_users, 4);
        assert_eq!(c.n_subbands, 10);
        assert_eq!(c.max_coscheduled, 2);
        assert_eq!(c.carrier_freq_hz, 3.5e9);
        assert_eq!(c.n_tx, 2);
        assert_eq!(c.n_rx, 1);
        assert_eq!(c.slot_duration_s, 1e-3);
        assert_eq!(c.buffer_min_bits, 400.0);
        assert_eq!(c.cell_radius_m, 500.0);
        assert_eq!(c.sector_angle_deg, 65.0);
        assert_eq!(c.min_distance_m, 35.0);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = EnvConfig::default();
        c.max_coscheduled = 5;
        assert!(c.validate().is_err());
        let mut c = EnvConfig::default();
        c.buffer_min_bits = 10.0;
        c.buffer_max_bits = 5.0;
        assert!(c.validate().is_err());
        let mut c = EnvConfig::default();
        c.noise_power_w = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_speed_freezes_doppler_and_channel() {
        let config = small_config();
        let s = generate_geometry(&config, 3).unwrap();
        assert!(s.doppler_coeff.iter().all(|&r| r == 1.0));
        let a = s.channel_at(0);
        let b = s.channel_at(17);
        assert_eq!(a, b);
    }

    #[test]
    fn scenario_generation_is_deterministic() {
        let config = small_config();
        let a = generate_geometry(&config, 42).unwrap();
        let b = generate_geometry(&config, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_geometry(&config, 43).unwrap();
        assert_ne!(a.tap_coefficients, c.tap_coefficients);
    }

    #[test]
    fn user_distances_respect_geometry() {
        let config = EnvConfig::default();
        for seed in 0..50 {
            let s = generate_geometry(&config, seed).unwrap();
            for &(x, y) in &s.user_positions {
                let d = (x * x + y * y).sqrt();
                assert!(d >= config.min_distance_m - 1e-9);
                assert!(d <= config.cell_radius_m + 1e-9);
                let angle = y.atan2(x).abs();
                assert!(angle <= config.sector_angle_deg.to_radians() / 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn single_tap_channel_is_flat_in_frequency() {
        let mut config = small_config();
        config.n_taps = 1;
        let s = generate_geometry(&config, 9).unwrap();
        let ch = s.channel_at(0);
        for k in 0..config.n_users {
            let p0 = ch.block_power(k, 0);
            for j in 1..config.n_subbands {
                assert!((ch.block_power(k, j) - p0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_channel_power_matches_large_scale_gain() {
        // Aggregate over fresh fading realizations of many scenarios and
        // compare the per-element power against the large-scale gain.
        let mut config = small_config();
        config.n_users = 1;
        config.max_coscheduled = 1;
        config.shadowing_sigma_db = 0.0;
        let mut ratio_sum = 0.0;
        let n_draws = 10_000;
        for seed in 0..n_draws {
            let s = generate_geometry(&config, seed as u64).unwrap();
            let ch = s.channel_at(0);
            let expected = s.large_scale_gain[0] * (config.n_tx * config.n_rx) as f64;
            ratio_sum += ch.block_power(0, 0) / expected;
        }
        let mean_ratio = ratio_sum / n_draws as f64;
        assert!(
            (mean_ratio - 1.0).abs() < 0.05,
            "mean power ratio {mean_ratio}"
        );
    }

    #[test]
    fn estimate_equals_truth_in_reference_scenario() {
        let config = small_config();
        let s = generate_geometry(&config, 11).unwrap();
        let state = s.observe(5);
        assert_eq!(state.true_channel, state.est_channel);
    }

    #[test]
    fn estimation_noise_power_matches_snr() {
        let mut config = small_config();
        config.snr_ce_db = 0.0;
        config.shadowing_sigma_db = 0.0;
        config.n_users = 4;
        let s = generate_geometry(&config, 13).unwrap();
        let mut noise_power = 0.0;
        let mut n_elems = 0usize;
        for t in 0..400 {
            let state = s.observe(t);
            for (e, tr) in state
                .est_channel
                .elements()
                .iter()
                .zip(state.true_channel.elements())
            {
                noise_power += (e - tr).norm_sqr();
                n_elems += 1;
            }
        }
        assert!(n_elems >= 10_000);
        let measured = noise_power / n_elems as f64;
        let expected = s.mean_element_power();
        assert!(
            (measured / expected - 1.0).abs() < 0.05,
            "noise-to-signal ratio {}",
            measured / expected
        );
    }

    #[test]
    fn aging_uses_previous_slot_channel() {
        let mut config = small_config();
        config.user_speed_mps = 3.0;
        let s = generate_geometry(&config, 21).unwrap();
        assert_eq!(s.aging_lag(), 1);
        let state = s.observe(6);
        let prev = s.channel_at(5);
        // No estimation noise configured, so the estimate is exactly the
        // lagged channel.
        assert_eq!(state.est_channel, prev);
        assert_ne!(state.est_channel, state.true_channel);
    }

    #[test]
    fn buffers_respect_bounds_and_degenerate_cases() {
        let mut config = small_config();
        config.buffer_min_bits = 400.0;
        config.buffer_max_bits = 400.0;
        let s = generate_geometry(&config, 2).unwrap();
        assert!(s.draw_buffers(0).iter().all(|&b| b == 400.0));

        let mut config = small_config();
        config.buffer_min_bits = 400.0;
        config.buffer_max_bits = 4000.0;
        let s = generate_geometry(&config, 2).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in 0..50_000 {
            for b in s.draw_buffers(t) {
                assert!((400.0..=4000.0).contains(&b));
                assert_eq!(b.fract(), 0.0);
                sum += b;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean / 2200.0 - 1.0).abs() < 0.02, "mean {mean}");

        let unbounded = generate_geometry(&small_config(), 2).unwrap();
        assert!(unbounded.draw_buffers(0).iter().all(|b| b.is_infinite()));
    }

    #[test]
    fn stream_matches_pointwise_observation() {
        let mut config = small_config();
        config.user_speed_mps = 1.0;
        config.snr_ce_db = 10.0;
        config.buffer_max_bits = 2000.0;
        let s = generate_geometry(&config, 33).unwrap();
        let mut stream = EpisodeStream::new(&s, 4);
        for t in 0..12 {
            let from_stream = stream.step();
            let pointwise = s.observe_stream(4, t);
            assert_eq!(from_stream, pointwise, "slot {t}");
        }
    }

    #[test]
    fn tap_autocorrelation_matches_doppler_coefficient() {
        let mut config = small_config();
        config.n_users = 1;
        config.max_coscheduled = 1;
        config.n_tx = 1;
        config.n_taps = 1;
        config.user_speed_mps = 3.0;
        let s = generate_geometry(&config, 77).unwrap();
        let rho = config.doppler_coeff();
        assert!(rho < 1.0 && rho > 0.9);

        let mut stream = EpisodeStream::new(&s, 0);
        let mut prev = stream.current_taps()[0];
        let mut num = 0.0;
        let mut den = 0.0;
        for _ in 0..100_000 {
            stream.step();
            let cur = stream.current_taps()[0];
            num += (cur * prev.conj()).re;
            den += prev.norm_sqr();
            prev = cur;
        }
        let measured = num / den;
        assert!(
            (measured - rho).abs() < 0.02,
            "measured {measured}, expected {rho}"
        );
    }

    #[test]
    fn frequency_correlation_shrinks_with_more_taps() {
        let mut config = small_config();
        config.n_users = 1;
        config.max_coscheduled = 1;
        config.n_tx = 1;
        config.n_subbands = 8;
        config.shadowing_sigma_db = 0.0;

        let correlation_at_half_band = |n_taps: usize| {
            let mut cfg = config.clone();
            cfg.n_taps = n_taps;
            let mut num = Complex64::new(0.0, 0.0);
            let mut p0 = 0.0;
            let mut p1 = 0.0;
            for seed in 0..4000u64 {
                let s = generate_geometry(&cfg, seed).unwrap();
                let ch = s.channel_at(0);
                let a = ch.at(0, 0, 0, 0);
                let b = ch.at(0, cfg.n_subbands / 2, 0, 0);
                num += a * b.conj();
                p0 += a.norm_sqr();
                p1 += b.norm_sqr();
            }
            num.norm() / (p0 * p1).sqrt()
        };

        let single = correlation_at_half_band(1);
        assert!((single - 1.0).abs() < 1e-9, "single-tap correlation {single}");
        let full = correlation_at_half_band(config.n_subbands);
        assert!(full < 0.5, "full-delay correlation {full}");
    }
}
