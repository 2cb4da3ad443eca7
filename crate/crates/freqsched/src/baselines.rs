//! Non-learned schedulers: the marginal-utility heuristic, a uniform
//! random policy, and the brute-force oracle.

use rand::Rng;

use crate::actions::{iter_joint_actions, BranchActionTable, ScheduleAction};
use crate::env::{JointState, Scenario};
use crate::link::{link_adapt, pf_reward, sinr_on_subband, user_rate, McsTable};
use crate::Result;

/// Working state of the marginal-utility scheduler.
#[derive(Debug, Clone)]
pub struct BaselineState {
    /// Sub-bands still open for allocation attempts.
    pub avail: Vec<usize>,
    /// Sub-bands held by each user (sorted).
    pub per_user: Vec<Vec<usize>>,
    /// Users on each sub-band (sorted).
    pub per_subband: Vec<Vec<usize>>,
}

impl BaselineState {
    fn new(n_users: usize, n_subbands: usize) -> Self {
        Self {
            avail: (0..n_subbands).collect(),
            per_user: vec![Vec::new(); n_users],
            per_subband: vec![Vec::new(); n_subbands],
        }
    }

    /// Cross-reference invariant: `j in per_user[k]` iff
    /// `k in per_subband[j]`.
    pub fn is_consistent(&self) -> bool {
        self.per_user.iter().enumerate().all(|(k, subs)| {
            subs.iter().all(|&j| self.per_subband[j].contains(&k))
        }) && self.per_subband.iter().enumerate().all(|(j, users)| {
            users.iter().all(|&k| self.per_user[k].contains(&j))
        })
    }
}

/// One decision of the marginal-utility loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStep {
    Allocate { user: usize, subband: usize },
    Remove { subband: usize },
}

/// Proportional-fair time-frequency utility of one user.
///
/// `current_rates` are the rates of the user's already-held sub-bands,
/// `candidate_rate` the rate of the sub-band under consideration (absent
/// when evaluating the utility of the current set alone). The utility is 0
/// once the held sub-bands already drain the buffer.
pub fn pftf_utility(
    current_rates: &[f64],
    candidate_rate: Option<f64>,
    avg_rate: f64,
    buffer_bits: f64,
    slot_duration_s: f64,
) -> f64 {
    let held: f64 = current_rates.iter().sum();
    if held * slot_duration_s > buffer_bits {
        return 0.0;
    }
    (held + candidate_rate.unwrap_or(0.0)) / (avg_rate + held)
}

/// Rate of `user` on `subband` under the given co-scheduling, planned on
/// the estimated channel with single-sub-band link adaptation.
fn planned_rate(
    state: &JointState,
    scenario: &Scenario,
    mcs: &McsTable,
    subband: usize,
    coscheduled: &[usize],
    user: usize,
) -> f64 {
    let env = &scenario.config;
    let sinrs = sinr_on_subband(
        &state.est_channel,
        &state.est_channel,
        subband,
        coscheduled,
        env.tx_power_w,
        env.noise_power_w,
    );
    let pos = coscheduled.iter().position(|&k| k == user).expect("user is co-scheduled");
    match link_adapt(&sinrs[pos..=pos], mcs) {
        None => 0.0,
        Some(la) => {
            let tbs = (la.spectral_efficiency * env.subband_width_hz * env.slot_duration_s).floor();
            user_rate(tbs, la.blep, state.buffers[user], env.slot_duration_s)
        }
    }
}

/// Faithful marginal-utility allocation, returning the per-sub-band user
/// sets and the decision trace.
///
/// Each pass recomputes all held and candidate rates under the current
/// co-scheduling, picks the `(user, sub-band)` pair with the largest
/// positive utility gain (ties to the lowest pair), and otherwise removes
/// the sub-band from the available set.
pub fn traditional_schedule_trace(
    state: &JointState,
    scenario: &Scenario,
    mcs: &McsTable,
) -> (BaselineState, Vec<TraceStep>) {
    let env = &scenario.config;
    let mut bs = BaselineState::new(env.n_users, env.n_subbands);
    let mut trace = Vec::new();
    while !bs.avail.is_empty() {
        // Held rates under the current allocation.
        let held_rates: Vec<Vec<f64>> = (0..env.n_users)
            .map(|k| {
                bs.per_user[k]
                    .iter()
                    .map(|&j| planned_rate(state, scenario, mcs, j, &bs.per_subband[j], k))
                    .collect()
            })
            .collect();

        let mut best: Option<(f64, usize, usize)> = None;
        for &j in &bs.avail {
            if bs.per_subband[j].len() >= env.max_coscheduled {
                continue;
            }
            for k in 0..env.n_users {
                if bs.per_subband[j].contains(&k) {
                    continue;
                }
                let mut coscheduled = bs.per_subband[j].clone();
                coscheduled.push(k);
                coscheduled.sort_unstable();
                let cand = planned_rate(state, scenario, mcs, j, &coscheduled, k);
                let with = pftf_utility(
                    &held_rates[k],
                    Some(cand),
                    scenario.avg_rates[k],
                    state.buffers[k],
                    env.slot_duration_s,
                );
                let without = if bs.per_user[k].is_empty() {
                    0.0
                } else {
                    pftf_utility(
                        &held_rates[k],
                        None,
                        scenario.avg_rates[k],
                        state.buffers[k],
                        env.slot_duration_s,
                    )
                };
                let gain = with - without;
                let better = match best {
                    None => true,
                    Some((g, bk, bj)) => gain > g || (gain == g && (k, j) < (bk, bj)),
                };
                if better {
                    best = Some((gain, k, j));
                }
            }
        }
        let Some((gain, k, j)) = best else {
            // Every available sub-band is at capacity.
            break;
        };
        if gain > 0.0 {
            bs.per_user[k].push(j);
            bs.per_user[k].sort_unstable();
            bs.per_subband[j].push(k);
            bs.per_subband[j].sort_unstable();
            trace.push(TraceStep::Allocate { user: k, subband: j });
        } else {
            bs.avail.retain(|&x| x != j);
            trace.push(TraceStep::Remove { subband: j });
        }
        debug_assert!(bs.is_consistent());
    }
    (bs, trace)
}

/// Per-sub-band user sets chosen by the traditional scheduler.
pub fn traditional_allocation(
    state: &JointState,
    scenario: &Scenario,
    mcs: &McsTable,
) -> Vec<Vec<usize>> {
    traditional_schedule_trace(state, scenario, mcs).0.per_subband
}

/// Traditional allocation encoded as a joint action. Sub-bands left empty
/// map to the table's empty subset when it exists, and to index 0
/// otherwise (the reward of the true allocation treats them as silent).
pub fn traditional_schedule(
    state: &JointState,
    scenario: &Scenario,
    table: &BranchActionTable,
    mcs: &McsTable,
) -> ScheduleAction {
    let allocation = traditional_allocation(state, scenario, mcs);
    ScheduleAction::new(
        allocation
            .iter()
            .map(|users| match table.index_of(users) {
                Some(i) => i,
                None => table.empty_index().unwrap_or(0),
            })
            .collect(),
    )
}

/// Uniform random joint action.
pub fn random_schedule(
    table: &BranchActionTable,
    n_subbands: usize,
    rng: &mut impl Rng,
) -> ScheduleAction {
    ScheduleAction::new(
        (0..n_subbands)
            .map(|_| rng.gen_range(0..table.n_actions()))
            .collect(),
    )
}

/// Exhaustive maximizer of the reward over all joint actions; returns the
/// first maximizer in enumeration order. Guarded by the joint-action
/// enumeration limit.
pub fn oracle_schedule(
    state: &JointState,
    scenario: &Scenario,
    table: &BranchActionTable,
    mcs: &McsTable,
) -> Result<(ScheduleAction, f64)> {
    let mut best: Option<(ScheduleAction, f64)> = None;
    for action in iter_joint_actions(table, scenario.config.n_subbands)? {
        let reward = pf_reward(state, &action, table, scenario, mcs)?.reward;
        match &best {
            Some((_, r)) if reward <= *r => {}
            _ => best = Some((action, reward)),
        }
    }
    Ok(best.expect("the joint action set is never empty"))
}
