//! Link layer: matched-filter precoding, SINR with co-scheduling
//! interference, MCS link adaptation with a logistic block-error model,
//! per-user rates and the proportional-fair reward.
//!
//! Precoders are always computed from the estimated channel while SINR and
//! rates are evaluated on the true channel; estimation error therefore
//! shows up as real interference and rate loss.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::actions::{decode, BranchActionTable, ScheduleAction};
use crate::env::{Channel, EnvConfig, JointState, Scenario};
use crate::Result;

/// One entry of the MCS ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsLevel {
    pub sinr_threshold_db: f64,
    pub spectral_efficiency: f64,
}

/// MCS ladder plus the logistic block-error model.
///
/// The default is a truncated-Shannon ladder: 15 levels with thresholds
/// from -6 dB to +22 dB in 2 dB steps and efficiencies
/// `0.8 * log2(1 + snr)` capped at 7.4 bits/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McsTable {
    pub levels: Vec<McsLevel>,
    /// Logistic slope of the block-error curve, per dB.
    pub blep_slope_per_db: f64,
    /// Block-error target for MCS selection.
    pub target_bler: f64,
}

impl Default for McsTable {
    fn default() -> Self {
        let levels = (0..15)
            .map(|m| {
                let threshold_db = -6.0 + 2.0 * m as f64;
                let eff = 0.8 * (1.0 + 10f64.powf(threshold_db / 10.0)).log2();
                McsLevel {
                    sinr_threshold_db: threshold_db,
                    spectral_efficiency: eff.min(7.4),
                }
            })
            .collect();
        Self {
            levels,
            blep_slope_per_db: 2.0,
            target_bler: 0.1,
        }
    }
}

impl McsTable {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.levels.is_empty() {
            return Err(Error::Config("mcs table must contain at least one level".into()));
        }
        let increasing = |get: fn(&McsLevel) -> f64| {
            self.levels.windows(2).all(|w| get(&w[0]) < get(&w[1]))
        };
        if !increasing(|l| l.sinr_threshold_db) {
            return Err(Error::Config("mcs thresholds must be strictly increasing".into()));
        }
        if !increasing(|l| l.spectral_efficiency) {
            return Err(Error::Config("mcs efficiencies must be strictly increasing".into()));
        }
        if !(self.target_bler > 0.0 && self.target_bler < 1.0) {
            return Err(Error::Config("target_bler must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Block-error probability of level `m` at effective SINR `gamma`
    /// (linear): logistic in dB around the level threshold.
    pub fn blep(&self, gamma_linear: f64, level: usize) -> f64 {
        let gamma_db = 10.0 * gamma_linear.log10();
        let margin = gamma_db - self.levels[level].sinr_threshold_db;
        1.0 / (1.0 + (self.blep_slope_per_db * margin).exp())
    }
}

/// Matched-filter transmit precoder from an estimated channel vector:
/// `w = conj(h) / |h|`, or the first basis vector for a zero channel.
pub fn mrt_precoder(h: &[Complex64]) -> Vec<Complex64> {
    let norm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm <= 0.0 {
        let mut w = vec![Complex64::new(0.0, 0.0); h.len()];
        w[0] = Complex64::new(1.0, 0.0);
        return w;
    }
    h.iter().map(|c| c.conj() / norm).collect()
}

/// Received amplitude of precoder `w` through the antenna block of one
/// user/sub-band, aggregated over receive antennas.
fn received_power(block: &[Complex64], n_rx: usize, n_tx: usize, w: &[Complex64]) -> f64 {
    let mut power = 0.0;
    for r in 0..n_rx {
        let row = &block[r * n_tx..(r + 1) * n_tx];
        let amp: Complex64 = row.iter().zip(w).map(|(h, w)| h * w).sum();
        power += amp.norm_sqr();
    }
    power
}

/// Precoder for one user/sub-band from the estimated channel. With more
/// than one receive antenna the precoder is matched to the first antenna's
/// row.
fn precoder_for(est: &Channel, user: usize, subband: usize) -> Vec<Complex64> {
    let block = est.block(user, subband);
    mrt_precoder(&block[..est.n_tx])
}

/// SINR of each listed user on one sub-band under a hypothetical
/// co-scheduling, with both precoding and signal evaluation on the given
/// channels. The traditional scheduler plans with this on the estimated
/// channel only.
pub fn sinr_on_subband(
    precoding_channel: &Channel,
    signal_channel: &Channel,
    subband: usize,
    users: &[usize],
    tx_power: f64,
    noise_power: f64,
) -> Vec<f64> {
    if users.is_empty() {
        return Vec::new();
    }
    let (n_rx, n_tx) = (signal_channel.n_rx, signal_channel.n_tx);
    let share = tx_power / signal_channel.n_subbands as f64 / users.len() as f64;
    let precoders: Vec<Vec<Complex64>> = users
        .iter()
        .map(|&k| precoder_for(precoding_channel, k, subband))
        .collect();
    users
        .iter()
        .enumerate()
        .map(|(a, &k)| {
            let block = signal_channel.block(k, subband);
            let signal = share * received_power(block, n_rx, n_tx, &precoders[a]);
            let interference: f64 = (0..users.len())
                .filter(|&b| b != a)
                .map(|b| share * received_power(block, n_rx, n_tx, &precoders[b]))
                .sum();
            signal / (noise_power + interference)
        })
        .collect()
}

/// Post-precoding SINR per user and sub-band (linear). Entries of users
/// not scheduled on a sub-band are zero.
///
/// Transmit power is split equally between sub-bands and between the users
/// allocated to a sub-band; precoders come from the estimated channel while
/// the SINR is evaluated on the true channel.
pub fn compute_sinr(
    true_channel: &Channel,
    est_channel: &Channel,
    allocation: &[Vec<usize>],
    tx_power: f64,
    noise_power: f64,
) -> Vec<Vec<f64>> {
    let (n_users, n_subbands) = (true_channel.n_users, true_channel.n_subbands);
    let (n_rx, n_tx) = (true_channel.n_rx, true_channel.n_tx);
    let subband_power = tx_power / n_subbands as f64;
    let mut sinr = vec![vec![0.0; n_subbands]; n_users];
    for (j, users) in allocation.iter().enumerate() {
        if users.is_empty() {
            continue;
        }
        let share = subband_power / users.len() as f64;
        let precoders: Vec<Vec<Complex64>> =
            users.iter().map(|&k| precoder_for(est_channel, k, j)).collect();
        for (a, &k) in users.iter().enumerate() {
            let block = true_channel.block(k, j);
            let signal = share * received_power(block, n_rx, n_tx, &precoders[a]);
            let mut interference = 0.0;
            for (b, &_m) in users.iter().enumerate() {
                if b != a {
                    interference += share * received_power(block, n_rx, n_tx, &precoders[b]);
                }
            }
            sinr[k][j] = signal / (noise_power + interference);
        }
    }
    sinr
}

/// Outcome of link adaptation over one user's allocated sub-bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkAdaptation {
    pub mcs_index: usize,
    pub effective_sinr: f64,
    /// Spectral efficiency of the chosen MCS in bits/s/Hz.
    pub spectral_efficiency: f64,
    pub blep: f64,
}

/// Selects the MCS for one user from the per-sub-band SINRs of its
/// allocation. Returns `None` for an empty allocation (no transmission).
///
/// The effective SINR is the capacity-domain mean over the allocated
/// sub-bands; the chosen MCS is the highest level whose block-error
/// probability at that SINR meets the target, or level 0 if none does.
pub fn link_adapt(sinr_per_subband: &[f64], table: &McsTable) -> Option<LinkAdaptation> {
    if sinr_per_subband.is_empty() {
        return None;
    }
    let mean_capacity = sinr_per_subband
        .iter()
        .map(|&s| (1.0 + s).ln())
        .sum::<f64>()
        / sinr_per_subband.len() as f64;
    let effective_sinr = mean_capacity.exp_m1();
    let chosen = (0..table.levels.len())
        .rev()
        .find(|&m| table.blep(effective_sinr, m) <= table.target_bler)
        .unwrap_or(0);
    Some(LinkAdaptation {
        mcs_index: chosen,
        effective_sinr,
        spectral_efficiency: table.levels[chosen].spectral_efficiency,
        blep: table.blep(effective_sinr, chosen),
    })
}

/// Instantaneous rate in bits/s: success probability times the buffer-capped
/// transport block, per slot.
pub fn user_rate(tbs_bits: f64, blep: f64, buffer_bits: f64, slot_duration_s: f64) -> f64 {
    (1.0 - blep) * tbs_bits.min(buffer_bits) / slot_duration_s
}

/// Per-user outcome of evaluating one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub allocated_subbands: Vec<usize>,
    pub sinr_per_subband: Vec<f64>,
    pub effective_sinr: f64,
    /// `None` when the user transmits nowhere.
    pub mcs_index: Option<usize>,
    pub tbs_bits: f64,
    pub blep: f64,
    pub rate: f64,
}

/// Runs precoding, SINR, link adaptation and the rate equation for every
/// user under the given per-sub-band allocation.
pub fn allocation_rates(
    true_channel: &Channel,
    est_channel: &Channel,
    buffers: &[f64],
    allocation: &[Vec<usize>],
    env: &EnvConfig,
    mcs: &McsTable,
) -> Vec<UserOutcome> {
    let sinr = compute_sinr(
        true_channel,
        est_channel,
        allocation,
        env.tx_power_w,
        env.noise_power_w,
    );
    (0..env.n_users)
        .map(|k| {
            let allocated: Vec<usize> = (0..env.n_subbands)
                .filter(|&j| allocation[j].contains(&k))
                .collect();
            let sinrs: Vec<f64> = allocated.iter().map(|&j| sinr[k][j]).collect();
            match link_adapt(&sinrs, mcs) {
                None => UserOutcome {
                    allocated_subbands: allocated,
                    sinr_per_subband: sinrs,
                    effective_sinr: 0.0,
                    mcs_index: None,
                    tbs_bits: 0.0,
                    blep: 0.0,
                    rate: 0.0,
                },
                Some(la) => {
                    // One transport block spanning the user's sub-bands.
                    let tbs = (la.spectral_efficiency
                        * env.subband_width_hz
                        * env.slot_duration_s
                        * allocated.len() as f64)
                        .floor();
                    let rate = user_rate(tbs, la.blep, buffers[k], env.slot_duration_s);
                    UserOutcome {
                        allocated_subbands: allocated,
                        sinr_per_subband: sinrs,
                        effective_sinr: la.effective_sinr,
                        mcs_index: Some(la.mcs_index),
                        tbs_bits: tbs,
                        blep: la.blep,
                        rate,
                    }
                }
            }
        })
        .collect()
}

/// Per-user reward record plus the scalar proportional-fair reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub per_user: Vec<UserReward>,
    /// Normalizing constant of the reward sum (`1 / n_users`).
    pub nu: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserReward {
    pub outcome: UserOutcome,
    pub avg_rate: f64,
}

/// Throughput-to-average sum over users: `nu * sum_k R_k / avg_R_k`.
pub fn pf_scalar(rates: &[f64], avg_rates: &[f64], nu: f64) -> f64 {
    nu * rates
        .iter()
        .zip(avg_rates)
        .map(|(r, a)| r / a)
        .sum::<f64>()
}

/// Full reward pipeline for a decoded per-sub-band allocation.
pub fn reward_for_allocation(
    state: &JointState,
    allocation: &[Vec<usize>],
    scenario: &Scenario,
    mcs: &McsTable,
) -> RewardBreakdown {
    let outcomes = allocation_rates(
        &state.true_channel,
        &state.est_channel,
        &state.buffers,
        allocation,
        &scenario.config,
        mcs,
    );
    let nu = 1.0 / scenario.config.n_users as f64;
    let rates: Vec<f64> = outcomes.iter().map(|o| o.rate).collect();
    let reward = pf_scalar(&rates, &scenario.avg_rates, nu);
    RewardBreakdown {
        per_user: outcomes
            .into_iter()
            .enumerate()
            .map(|(k, outcome)| UserReward {
                outcome,
                avg_rate: scenario.avg_rates[k],
            })
            .collect(),
        nu,
        reward,
    }
}

/// Reward of an encoded joint action.
pub fn pf_reward(
    state: &JointState,
    action: &ScheduleAction,
    table: &BranchActionTable,
    scenario: &Scenario,
    mcs: &McsTable,
) -> Result<RewardBreakdown> {
    let allocation = decode(action, table)?;
    Ok(reward_for_allocation(state, &allocation, scenario, mcs))
}
