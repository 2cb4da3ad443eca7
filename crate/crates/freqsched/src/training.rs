//! Value-decomposition DQN training: epsilon-greedy sample generation with
//! two-phase replay commits, the summed-branch squared TD loss, AdamW
//! steps, priority updates, soft target maintenance, and fine-tuning.

use serde::{Deserialize, Serialize};

use crate::actions::{decode, enumerate_actions};
use crate::agents::{select_actions, Agent, AgentSpec, ProblemDims};
use crate::env::{EpisodeStream, Scenario};
use crate::error::Error;
use crate::features::{all_features, FeatureNorms};
use crate::link::{reward_for_allocation, McsTable};
use crate::numerics::{AdamW, ParamTree};
use crate::replay::{Experience, ReplayBuffer, Ticket};
use crate::Result;

/// Stream ids for the scenario randomness, keeping training, validation
/// and evaluation draws disjoint.
pub const TRAIN_STREAM: u64 = 1;
pub const VALIDATION_STREAM: u64 = 2;

/// Exploration restart used by [`fine_tune`].
pub const FINE_TUNE_EPSILON_START: f64 = 0.2;

/// How the per-branch Q-values are fit to the scalar reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// The summed-branch loss: `(r - sum_d Q_d)^2`.
    ValueDecomposition,
    /// Mean per-branch loss `(1/N_s) sum_d (r - Q_d)^2`; kept for
    /// comparison, known to underperform.
    BranchAverage,
}

/// Training parameters. Defaults: one million samples in iterations of
/// 1000 with 100 optimization steps of batch 256 each, replay of 10^5,
/// myopic discount, AdamW at 1e-4, prioritization (0.7, 0.5), linear
/// epsilon decay from 1.0 to 0.02 over the first half of training, and a
/// 0.005 soft target rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_samples: usize,
    pub samples_per_iteration: usize,
    pub opt_steps_per_iteration: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub gamma: f64,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    pub target_tau: f64,
    pub n_validation_states: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_samples: 1_000_000,
            samples_per_iteration: 1000,
            opt_steps_per_iteration: 100,
            batch_size: 256,
            buffer_size: 100_000,
            gamma: 0.0,
            lr: 1e-4,
            alpha: 0.7,
            beta: 0.5,
            epsilon_start: 1.0,
            epsilon_end: 0.02,
            epsilon_decay_fraction: 0.5,
            target_tau: 0.005,
            n_validation_states: 500,
            loss_mode: LossMode::ValueDecomposition,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.total_samples == 0 || self.samples_per_iteration == 0 {
            return fail("total_samples and samples_per_iteration must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_size {
            return fail("batch_size must be positive and at most buffer_size");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if !(self.lr > 0.0) {
            return fail("lr must be positive");
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
            ("beta", self.beta),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.target_tau) {
            return fail("target_tau must lie in [0, 1]");
        }
        if self.alpha < 0.0 {
            return fail("alpha must be non-negative");
        }
        Ok(())
    }

    pub fn n_iterations(&self) -> usize {
        self.total_samples.div_ceil(self.samples_per_iteration)
    }
}

/// Linear epsilon schedule over iterations: decays from `epsilon_start` to
/// `epsilon_end` across the first `epsilon_decay_fraction` of the run, then
/// stays flat.
pub fn epsilon_at(step: usize, config: &TrainConfig) -> f64 {
    let decay_end = config.epsilon_decay_fraction * config.n_iterations() as f64;
    if decay_end <= 0.0 {
        return config.epsilon_end;
    }
    let progress = (step as f64 / decay_end).min(1.0);
    config.epsilon_start + (config.epsilon_end - config.epsilon_start) * progress
}

fn branch_q_sum(q: &crate::agents::QOutput, action: &crate::actions::ScheduleAction) -> f64 {
    action
        .branch_indices
        .iter()
        .enumerate()
        .map(|(d, &a)| q.q[d][a])
        .sum()
}

fn sample_target(agent: &Agent, target: &ParamTree, exp: &Experience, gamma: f64) -> Result<f64> {
    let r = exp
        .reward
        .ok_or_else(|| Error::Contract("uncommitted experience in batch".into()))?;
    if gamma == 0.0 {
        // Myopic case: the target never touches the target network.
        return Ok(r);
    }
    let bootstrap = match &exp.next_features {
        None => 0.0,
        Some(next) => {
            let q_next = agent.q_values(target, next)?;
            q_next
                .q
                .iter()
                .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .sum()
        }
    };
    Ok(r + gamma * bootstrap)
}

/// Loss of a batch without touching gradients; the finite-difference
/// oracle for [`vd_loss_and_grads`] is built on this.
pub fn batch_loss(
    agent: &Agent,
    online: &ParamTree,
    target: &ParamTree,
    batch: &[&Experience],
    is_weights: &[f64],
    gamma: f64,
    mode: LossMode,
) -> Result<f64> {
    let mut loss = 0.0;
    for (exp, &w) in batch.iter().zip(is_weights) {
        let y = sample_target(agent, target, exp, gamma)?;
        let q = agent.q_values(online, &exp.features)?;
        match mode {
            LossMode::ValueDecomposition => {
                let td = y - branch_q_sum(&q, &exp.action);
                loss += w * td * td;
            }
            LossMode::BranchAverage => {
                let n = q.q.len() as f64;
                for (d, &a) in exp.action.branch_indices.iter().enumerate() {
                    let e = y - q.q[d][a];
                    loss += w * e * e / n;
                }
            }
        }
    }
    Ok(loss / batch.len() as f64)
}

/// Computes the prioritized loss, accumulates parameter gradients into
/// `online`, and returns the per-sample TD errors for priority updates.
///
/// Prediction: `sum_d Q_d(s, a_d)`. Target: `r` for the myopic case, else
/// `r + gamma * sum_d max_a Q_target_d(s', a)`.
pub fn vd_loss_and_grads(
    agent: &Agent,
    online: &mut ParamTree,
    target: &ParamTree,
    batch: &[&Experience],
    is_weights: &[f64],
    gamma: f64,
    mode: LossMode,
) -> Result<(f64, Vec<f64>)> {
    assert_eq!(batch.len(), is_weights.len());
    online.zero_grads();
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut tds = Vec::with_capacity(batch.len());
    for (exp, &w) in batch.iter().zip(is_weights) {
        let y = sample_target(agent, target, exp, gamma)?;
        let (q, cache) = agent.forward(online, &exp.features)?;
        let n_actions = q.q[0].len();
        let mut dq = vec![vec![0.0; n_actions]; q.q.len()];
        let td = match mode {
            LossMode::ValueDecomposition => {
                let td = y - branch_q_sum(&q, &exp.action);
                loss += w * td * td;
                for (d, &a) in exp.action.branch_indices.iter().enumerate() {
                    dq[d][a] = -2.0 * w * td / b;
                }
                td
            }
            LossMode::BranchAverage => {
                let n = q.q.len() as f64;
                let mut mean_err = 0.0;
                for (d, &a) in exp.action.branch_indices.iter().enumerate() {
                    let e = y - q.q[d][a];
                    loss += w * e * e / n;
                    dq[d][a] = -2.0 * w * e / (b * n);
                    mean_err += e / n;
                }
                mean_err
            }
        };
        agent.backward(online, &cache, &dq);
        tds.push(td);
    }
    Ok((loss / b, tds))
}

/// One row of the per-iteration training log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub samples_seen: usize,
    pub epsilon: f64,
    pub mean_train_reward: f64,
    pub mean_validation_reward: f64,
    pub loss: f64,
}

/// Final parameters plus the per-iteration log.
#[derive(Debug)]
pub struct TrainOutput {
    pub params: ParamTree,
    pub log: Vec<IterationLog>,
}

/// Trains a fresh agent on the scenario.
pub fn train(
    scenario: &Scenario,
    spec: &AgentSpec,
    config: &TrainConfig,
    mcs: &McsTable,
) -> Result<TrainOutput> {
    config.validate()?;
    let dims = ProblemDims::from_env(&scenario.config)?;
    let (agent, params) = Agent::build(spec, &dims, config.seed)?;
    run_loop(scenario, &agent, params, config, mcs, config.epsilon_start)
}

/// Resumes from existing parameters on a (possibly shifted) scenario with
/// a fresh replay buffer and exploration restarted at
/// [`FINE_TUNE_EPSILON_START`].
pub fn fine_tune(
    scenario: &Scenario,
    spec: &AgentSpec,
    params: ParamTree,
    config: &TrainConfig,
    mcs: &McsTable,
) -> Result<TrainOutput> {
    config.validate()?;
    let dims = ProblemDims::from_env(&scenario.config)?;
    let (agent, fresh) = Agent::build(spec, &dims, config.seed)?;
    if !fresh.same_layout(&params) {
        return Err(Error::Checkpoint(
            "checkpoint parameters do not match the agent architecture".into(),
        ));
    }
    run_loop(scenario, &agent, params, config, mcs, FINE_TUNE_EPSILON_START)
}

/// Greedy mean reward over a fixed state set.
pub fn validation_score(
    agent: &Agent,
    params: &ParamTree,
    states: &[(crate::env::JointState, Vec<Vec<f64>>)],
    scenario: &Scenario,
    table: &crate::actions::BranchActionTable,
    mcs: &McsTable,
) -> Result<f64> {
    let mut total = 0.0;
    for (state, feats) in states {
        let q = agent.q_values(params, feats)?;
        let allocation = decode(&q.greedy(), table)?;
        total += reward_for_allocation(state, &allocation, scenario, mcs).reward;
    }
    Ok(total / states.len() as f64)
}

fn run_loop(
    scenario: &Scenario,
    agent: &Agent,
    mut online: ParamTree,
    config: &TrainConfig,
    mcs: &McsTable,
    epsilon_start: f64,
) -> Result<TrainOutput> {
    let env = &scenario.config;
    let table = enumerate_actions(env.n_users, env.max_coscheduled, env.include_empty_action)?;
    let norms = FeatureNorms::for_scenario(scenario);
    let schedule = TrainConfig {
        epsilon_start,
        ..config.clone()
    };

    let mut validation_stream = EpisodeStream::new(scenario, VALIDATION_STREAM);
    let validation_states: Vec<_> = (0..config.n_validation_states)
        .map(|_| {
            let state = validation_stream.step();
            let feats = all_features(&state, &norms);
            (state, feats)
        })
        .collect();

    let mut target = online.clone();
    let mut optimizer = AdamW::new(config.lr, &online);
    let mut buffer = ReplayBuffer::new(config.buffer_size, config.alpha);
    let mut rng = crate::env::derive_rng(config.seed, &[0x7EA1, scenario.seed]);
    let mut stream = EpisodeStream::new(scenario, TRAIN_STREAM);
    let mut pending: Option<(Ticket, f64)> = None;

    let n_iterations = config.n_iterations();
    let mut log = Vec::with_capacity(n_iterations);
    let mut samples_seen = 0usize;
    for iteration in 0..n_iterations {
        let epsilon = epsilon_at(iteration, &schedule);
        let mut reward_sum = 0.0;
        let samples_this_iter = config
            .samples_per_iteration
            .min(config.total_samples - samples_seen);
        for _ in 0..samples_this_iter {
            let state = stream.step();
            let feats = all_features(&state, &norms);
            if let Some((ticket, reward)) = pending.take() {
                buffer.commit(ticket, reward, Some(feats.clone()))?;
            }
            let q = agent.q_values(&online, &feats)?;
            let action = select_actions(&q, epsilon, &mut rng);
            let allocation = decode(&action, &table)?;
            let reward = reward_for_allocation(&state, &allocation, scenario, mcs).reward;
            reward_sum += reward;
            let ticket = buffer.reserve(feats, action);
            pending = Some((ticket, reward));
        }
        samples_seen += samples_this_iter;

        let mut loss_sum = 0.0;
        let mut opt_steps = 0usize;
        for _ in 0..config.opt_steps_per_iteration {
            if buffer.n_committed() < config.batch_size {
                break;
            }
            let (indices, weights) = buffer.sample(config.batch_size, config.beta, &mut rng)?;
            let batch: Vec<&Experience> = indices
                .iter()
                .map(|&i| buffer.experience(i).expect("sampled index is committed"))
                .collect();
            let (loss, tds) = vd_loss_and_grads(
                agent,
                &mut online,
                &target,
                &batch,
                &weights,
                config.gamma,
                config.loss_mode,
            )?;
            drop(batch);
            optimizer.step(&mut online);
            buffer.update_priorities(&indices, &tds)?;
            target.polyak_from(&online, config.target_tau)?;
            loss_sum += loss;
            opt_steps += 1;
        }
        debug_assert!(buffer.tree_consistent());

        let mean_validation_reward =
            validation_score(agent, &online, &validation_states, scenario, &table, mcs)?;
        log.push(IterationLog {
            iteration,
            samples_seen,
            epsilon,
            mean_train_reward: reward_sum / samples_this_iter as f64,
            mean_validation_reward,
            loss: if opt_steps > 0 { loss_sum / opt_steps as f64 } else { f64::NAN },
        });
    }
    Ok(TrainOutput { params: online, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Variant;
    use crate::env::EnvConfig;
    use crate::numerics::check_tree_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_env() -> EnvConfig {
        EnvConfig {
            n_users: 2,
            n_subbands: 3,
            max_coscheduled: 2,
            buffer_max_bits: 800.0,
            n_taps: 2,
            ..EnvConfig::default()
        }
    }

    fn tiny_spec(variant: Variant) -> AgentSpec {
        AgentSpec {
            local_repr_size: 6,
            shared_repr_size: 12,
            gnn_iterations: 2,
            gnn_heads: 2,
            ..AgentSpec::new(variant)
        }
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            total_samples: 300,
            samples_per_iteration: 100,
            opt_steps_per_iteration: 5,
            batch_size: 32,
            buffer_size: 400,
            lr: 1e-3,
            n_validation_states: 20,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn defaults_follow_training_table() {
        let c = TrainConfig::default();
        assert_eq!(c.total_samples, 1_000_000);
        assert_eq!(c.samples_per_iteration, 1000);
        assert_eq!(c.opt_steps_per_iteration, 100);
        // 1000 iterations of 100 optimization steps = 1e5 batches.
        assert_eq!(c.n_iterations() * c.opt_steps_per_iteration, 100_000);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.buffer_size, 100_000);
        assert_eq!(c.gamma, 0.0);
        assert_eq!(c.lr, 1e-4);
        assert_eq!(c.alpha, 0.7);
        assert_eq!(c.beta, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn epsilon_schedule_endpoints_and_midpoint() {
        let config = TrainConfig::default();
        assert_eq!(epsilon_at(0, &config), 1.0);
        // Decay covers the first 500 of 1000 iterations.
        assert!((epsilon_at(500, &config) - 0.02).abs() < 1e-12);
        assert!((epsilon_at(999, &config) - 0.02).abs() < 1e-12);
        let mid = epsilon_at(250, &config);
        assert!((mid - 0.51).abs() < 1e-12);
    }

    fn experience_from(
        agent: &Agent,
        tree: &ParamTree,
        features: Vec<Vec<f64>>,
        action: crate::actions::ScheduleAction,
        reward: f64,
    ) -> Experience {
        let _ = agent.q_values(tree, &features).unwrap();
        Experience {
            features,
            action,
            reward: Some(reward),
            next_features: None,
            priority: 1.0,
        }
    }

    #[test]
    fn zero_td_gives_zero_loss() {
        let dims = ProblemDims {
            n_subbands: 3,
            n_actions: 3,
            feature_len: 5,
        };
        let (agent, mut tree) =
            Agent::build(&tiny_spec(Variant::ActionBranching), &dims, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let features: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let action = crate::actions::ScheduleAction::new(vec![1, 0, 2]);
        let q = agent.q_values(&tree, &features).unwrap();
        let r: f64 = action
            .branch_indices
            .iter()
            .enumerate()
            .map(|(d, &a)| q.q[d][a])
            .sum();
        let exp = experience_from(&agent, &tree, features, action, r);
        let target = tree.clone();
        let (loss, tds) = vd_loss_and_grads(
            &agent,
            &mut tree,
            &target,
            &[&exp],
            &[1.0],
            0.0,
            LossMode::ValueDecomposition,
        )
        .unwrap();
        assert!(loss.abs() < 1e-20);
        assert!(tds[0].abs() < 1e-10);
    }

    #[test]
    fn unit_td_matches_direct_formula() {
        // Single branch, reward 2 above the chosen Q: loss 4, td 2.
        let dims = ProblemDims {
            n_subbands: 1,
            n_actions: 2,
            feature_len: 4,
        };
        let (agent, mut tree) =
            Agent::build(&tiny_spec(Variant::ActionBranching), &dims, 3).unwrap();
        let features = vec![vec![0.3, -0.2, 0.5, 0.1]];
        let action = crate::actions::ScheduleAction::new(vec![1]);
        let q = agent.q_values(&tree, &features).unwrap();
        let exp = experience_from(&agent, &tree, features, action, q.q[0][1] + 2.0);
        let target = tree.clone();
        let (loss, tds) = vd_loss_and_grads(
            &agent,
            &mut tree,
            &target,
            &[&exp],
            &[1.0],
            0.0,
            LossMode::ValueDecomposition,
        )
        .unwrap();
        assert!((loss - 4.0).abs() < 1e-9);
        assert!((tds[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn uncommitted_experience_is_a_contract_violation() {
        let dims = ProblemDims {
            n_subbands: 1,
            n_actions: 2,
            feature_len: 4,
        };
        let (agent, mut tree) =
            Agent::build(&tiny_spec(Variant::ActionBranching), &dims, 3).unwrap();
        let exp = Experience {
            features: vec![vec![0.0; 4]],
            action: crate::actions::ScheduleAction::new(vec![0]),
            reward: None,
            next_features: None,
            priority: 0.0,
        };
        let target = tree.clone();
        let err = vd_loss_and_grads(
            &agent,
            &mut tree,
            &target,
            &[&exp],
            &[1.0],
            0.0,
            LossMode::ValueDecomposition,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn myopic_target_never_reads_target_network() {
        let dims = ProblemDims {
            n_subbands: 2,
            n_actions: 3,
            feature_len: 5,
        };
        let (agent, mut tree) = Agent::build(&tiny_spec(Variant::Unibranch), &dims, 4).unwrap();
        let mut poisoned = tree.clone();
        for id in poisoned.ids() {
            poisoned.leaf_mut(id).values.fill(f64::NAN);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let features: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let exp = Experience {
            features: features.clone(),
            action: crate::actions::ScheduleAction::new(vec![0, 1]),
            reward: Some(1.0),
            next_features: Some(features),
            priority: 1.0,
        };
        let (loss, _) = vd_loss_and_grads(
            &agent,
            &mut tree,
            &poisoned,
            &[&exp],
            &[1.0],
            0.0,
            LossMode::ValueDecomposition,
        )
        .unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn loss_gradients_match_finite_differences_all_variants() {
        for variant in [Variant::ActionBranching, Variant::Unibranch, Variant::Gnn] {
            let dims = ProblemDims {
                n_subbands: 2,
                n_actions: 3,
                feature_len: 5,
            };
            let spec = tiny_spec(variant);
            let (agent, mut tree) = Agent::build(&spec, &dims, 6).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mk_features = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
                (0..2)
                    .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            };
            let batch_owned: Vec<Experience> = (0..3)
                .map(|_| Experience {
                    features: mk_features(&mut rng),
                    action: crate::actions::ScheduleAction::new(vec![
                        rng.gen_range(0..3),
                        rng.gen_range(0..3),
                    ]),
                    reward: Some(rng.gen_range(0.0..2.0)),
                    next_features: None,
                    priority: 1.0,
                })
                .collect();
            let batch: Vec<&Experience> = batch_owned.iter().collect();
            let weights = vec![1.0, 0.5, 0.25];
            let target = tree.clone();

            let (_, _) = vd_loss_and_grads(
                &agent,
                &mut tree,
                &target,
                &batch,
                &weights,
                0.0,
                LossMode::ValueDecomposition,
            )
            .unwrap();
            let err = check_tree_gradients(&mut tree, 1e-6, |t| {
                batch_loss(
                    &agent,
                    t,
                    &target,
                    &batch,
                    &weights,
                    0.0,
                    LossMode::ValueDecomposition,
                )
                .unwrap()
            });
            assert!(err <= 1e-3, "{variant:?}: relative error {err}");
        }
    }

    #[test]
    fn bootstrapped_target_gradients_also_check_out() {
        let dims = ProblemDims {
            n_subbands: 2,
            n_actions: 3,
            feature_len: 5,
        };
        let (agent, mut tree) = Agent::build(&tiny_spec(Variant::Unibranch), &dims, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let features: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let next: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let exp = Experience {
            features,
            action: crate::actions::ScheduleAction::new(vec![2, 0]),
            reward: Some(0.7),
            next_features: Some(next),
            priority: 1.0,
        };
        let target = {
            // A target tree different from the online one.
            let (_, t) = Agent::build(&tiny_spec(Variant::Unibranch), &dims, 99).unwrap();
            t
        };
        let (_, _) = vd_loss_and_grads(
            &agent,
            &mut tree,
            &target,
            &[&exp],
            &[1.0],
            0.9,
            LossMode::ValueDecomposition,
        )
        .unwrap();
        let err = check_tree_gradients(&mut tree, 1e-6, |t| {
            batch_loss(&agent, t, &target, &[&exp], &[1.0], 0.9, LossMode::ValueDecomposition)
                .unwrap()
        });
        assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn seeded_training_runs_are_identical() {
        let scenario = crate::env::new_scenario(&tiny_env(), 50).unwrap();
        let spec = tiny_spec(Variant::Gnn);
        let config = tiny_train_config();
        let mcs = McsTable::default();
        let a = train(&scenario, &spec, &config, &mcs).unwrap();
        let b = train(&scenario, &spec, &config, &mcs).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), config.n_iterations());
        assert!(a.log.iter().all(|l| l.loss.is_finite()));
    }

    #[test]
    fn fine_tune_restarts_epsilon_and_checks_architecture() {
        let scenario = crate::env::new_scenario(&tiny_env(), 51).unwrap();
        let spec = tiny_spec(Variant::Unibranch);
        let config = tiny_train_config();
        let mcs = McsTable::default();
        let trained = train(&scenario, &spec, &config, &mcs).unwrap();

        let tuned = fine_tune(&scenario, &spec, trained.params, &config, &mcs).unwrap();
        assert!((tuned.log[0].epsilon - FINE_TUNE_EPSILON_START).abs() < 1e-12);

        // Architecture mismatch is rejected.
        let other_spec = tiny_spec(Variant::Gnn);
        let (_, wrong_params) = Agent::build(
            &other_spec,
            &ProblemDims::from_env(&scenario.config).unwrap(),
            0,
        )
        .unwrap();
        let err = fine_tune(&scenario, &spec, wrong_params, &config, &mcs).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn branch_average_mode_trains_too() {
        let scenario = crate::env::new_scenario(&tiny_env(), 52).unwrap();
        let spec = tiny_spec(Variant::ActionBranching);
        let config = TrainConfig {
            loss_mode: LossMode::BranchAverage,
            total_samples: 200,
            samples_per_iteration: 100,
            opt_steps_per_iteration: 3,
            batch_size: 16,
            buffer_size: 300,
            n_validation_states: 10,
            ..TrainConfig::default()
        };
        let out = train(&scenario, &spec, &config, &McsTable::default()).unwrap();
        assert!(out.log.iter().all(|l| l.loss.is_finite()));
    }
}
