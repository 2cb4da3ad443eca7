//! Policy evaluation and benchmarking: identical state streams for every
//! policy, reward ratios against the traditional baseline (or the oracle),
//! ratio CDFs, a single-state inference latency benchmark, and the CSV /
//! text artifacts the command-line tool writes.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::actions::{decode, enumerate_actions, BranchActionTable};
use crate::agents::{Agent, AgentSpec, ProblemDims};
use crate::baselines::{oracle_schedule, random_schedule, traditional_allocation};
use crate::checkpoint::fnv1a64;
use crate::env::{EpisodeStream, JointState, Scenario};
use crate::error::Error;
use crate::features::{all_features, FeatureNorms};
use crate::link::{reward_for_allocation, McsTable};
use crate::numerics::ParamTree;
use crate::training::IterationLog;
use crate::Result;

/// Stream id for evaluation states (training uses 1, validation 2).
pub const EVAL_STREAM: u64 = 3;

/// A scheduler under evaluation.
pub struct EvalPolicy {
    pub name: String,
    kind: PolicyKind,
}

enum PolicyKind {
    Traditional,
    Random,
    Oracle,
    Learned { agent: Agent, params: ParamTree },
}

impl EvalPolicy {
    pub fn traditional() -> Self {
        Self {
            name: "traditional".into(),
            kind: PolicyKind::Traditional,
        }
    }

    pub fn random() -> Self {
        Self {
            name: "random".into(),
            kind: PolicyKind::Random,
        }
    }

    pub fn oracle() -> Self {
        Self {
            name: "oracle".into(),
            kind: PolicyKind::Oracle,
        }
    }

    pub fn learned(name: impl Into<String>, agent: Agent, params: ParamTree) -> Self {
        Self {
            name: name.into(),
            kind: PolicyKind::Learned { agent, params },
        }
    }

    /// Builds a learned policy from a loaded checkpoint, verifying that it
    /// matches the evaluation environment's dimensions.
    pub fn from_checkpoint(
        name: impl Into<String>,
        checkpoint: crate::checkpoint::Checkpoint,
        scenario: &Scenario,
    ) -> Result<Self> {
        let dims = ProblemDims::from_env(&scenario.config)?;
        if checkpoint.dims != dims {
            return Err(Error::Checkpoint(format!(
                "checkpoint was built for {:?} but the environment needs {:?}",
                checkpoint.dims, dims
            )));
        }
        let (agent, fresh) = Agent::build(&checkpoint.spec, &dims, 0)?;
        if !fresh.same_layout(&checkpoint.params) {
            return Err(Error::Checkpoint(
                "checkpoint parameters do not match the architecture".into(),
            ));
        }
        Ok(Self::learned(name, agent, checkpoint.params))
    }

    pub fn parameter_count(&self) -> Option<usize> {
        match &self.kind {
            PolicyKind::Learned { params, .. } => Some(params.param_count()),
            _ => None,
        }
    }

    pub fn spec(&self) -> Option<&AgentSpec> {
        match &self.kind {
            PolicyKind::Learned { agent, .. } => Some(&agent.spec),
            _ => None,
        }
    }

    /// Greedy allocation for one state.
    pub fn decide(
        &self,
        state: &JointState,
        scenario: &Scenario,
        table: &BranchActionTable,
        norms: &FeatureNorms,
        mcs: &McsTable,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Vec<Vec<usize>>> {
        match &self.kind {
            PolicyKind::Traditional => Ok(traditional_allocation(state, scenario, mcs)),
            PolicyKind::Random => {
                let action = random_schedule(table, scenario.config.n_subbands, rng);
                decode(&action, table)
            }
            PolicyKind::Oracle => {
                let (action, _) = oracle_schedule(state, scenario, table, mcs)?;
                decode(&action, table)
            }
            PolicyKind::Learned { agent, params } => {
                let features = all_features(state, norms);
                let q = agent.q_values(params, &features)?;
                decode(&q.greedy(), table)
            }
        }
    }
}

/// Evaluation result for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport {
    pub name: String,
    pub mean_reward: f64,
    /// Mean per-state reward ratio against the reference, in percent.
    pub mean_ratio_pct: f64,
    /// CDF of the per-state ratio: sorted `(ratio, cumulative)` points.
    pub cdf: Vec<(f64, f64)>,
    pub parameter_count: Option<usize>,
    pub median_latency_s: Option<f64>,
    pub relative_latency: Option<f64>,
}

/// Joint evaluation over a shared state stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub reference: String,
    pub n_states: usize,
    /// States excluded from ratios because the reference scored zero.
    pub n_reference_zero: usize,
    /// Digest of the state stream; equal digests mean identical states.
    pub state_digest: u64,
    pub policies: Vec<PolicyReport>,
}

fn digest_states(states: &[JointState]) -> u64 {
    let mut bytes = Vec::new();
    for s in states {
        for c in s.true_channel.elements().iter().chain(s.est_channel.elements()) {
            bytes.extend_from_slice(&c.re.to_le_bytes());
            bytes.extend_from_slice(&c.im.to_le_bytes());
        }
        for b in &s.buffers {
            bytes.extend_from_slice(&b.to_le_bytes());
        }
    }
    fnv1a64(&bytes)
}

/// Generates the shared evaluation states for a scenario.
pub fn evaluation_states(scenario: &Scenario, n_states: usize) -> Vec<JointState> {
    let mut stream = EpisodeStream::new(scenario, EVAL_STREAM);
    (0..n_states).map(|_| stream.step()).collect()
}

/// Runs every policy over the identical state sequence and reports mean
/// rewards and per-state ratios against `reference` (which is also
/// evaluated). States where the reference reward is zero are excluded
/// from the ratios and counted.
pub fn evaluate_against(
    reference: EvalPolicy,
    mut policies: Vec<EvalPolicy>,
    scenario: &Scenario,
    n_states: usize,
    mcs: &McsTable,
) -> Result<EvalReport> {
    let env = &scenario.config;
    let table = enumerate_actions(env.n_users, env.max_coscheduled, env.include_empty_action)?;
    let norms = FeatureNorms::for_scenario(scenario);
    let states = evaluation_states(scenario, n_states);
    let state_digest = digest_states(&states);

    let reference_name = reference.name.clone();
    policies.insert(0, reference);
    let mut rewards: Vec<Vec<f64>> = Vec::with_capacity(policies.len());
    for policy in &policies {
        // Every policy sees the same states and, where it applies, the
        // same decision randomness.
        let mut rng = crate::env::derive_rng(scenario.seed, &[0xE7A1, EVAL_STREAM]);
        let mut per_state = Vec::with_capacity(states.len());
        for state in &states {
            let allocation = policy.decide(state, scenario, &table, &norms, mcs, &mut rng)?;
            per_state.push(reward_for_allocation(state, &allocation, scenario, mcs).reward);
        }
        rewards.push(per_state);
    }

    let reference_rewards = rewards[0].clone();
    let n_reference_zero = reference_rewards.iter().filter(|&&r| r == 0.0).count();
    let reports = policies
        .iter()
        .zip(rewards.iter())
        .map(|(policy, rs)| {
            let mut ratios: Vec<f64> = rs
                .iter()
                .zip(&reference_rewards)
                .filter(|(_, &b)| b > 0.0)
                .map(|(&r, &b)| r / b)
                .collect();
            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean_ratio_pct = if ratios.is_empty() {
                f64::NAN
            } else {
                100.0 * ratios.iter().sum::<f64>() / ratios.len() as f64
            };
            let n = ratios.len();
            let cdf = ratios
                .into_iter()
                .enumerate()
                .map(|(i, r)| (r, (i + 1) as f64 / n as f64))
                .collect();
            PolicyReport {
                name: policy.name.clone(),
                mean_reward: rs.iter().sum::<f64>() / rs.len() as f64,
                mean_ratio_pct,
                cdf,
                parameter_count: policy.parameter_count(),
                median_latency_s: None,
                relative_latency: None,
            }
        })
        .collect();
    Ok(EvalReport {
        reference: reference_name,
        n_states,
        n_reference_zero,
        state_digest,
        policies: reports,
    })
}

/// Standard evaluation: ratios against the traditional baseline.
pub fn evaluate(
    policies: Vec<EvalPolicy>,
    scenario: &Scenario,
    n_states: usize,
    mcs: &McsTable,
) -> Result<EvalReport> {
    evaluate_against(EvalPolicy::traditional(), policies, scenario, n_states, mcs)
}

/// Oracle-anchored evaluation: ratios against the exhaustive maximizer.
pub fn oracle_check(
    policies: Vec<EvalPolicy>,
    scenario: &Scenario,
    n_states: usize,
    mcs: &McsTable,
) -> Result<EvalReport> {
    evaluate_against(EvalPolicy::oracle(), policies, scenario, n_states, mcs)
}

/// Latency measurement for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyEntry {
    pub name: String,
    pub median_latency_s: f64,
    /// Median divided by the fastest policy's median.
    pub relative: f64,
    pub parameter_count: Option<usize>,
}

/// Times single-state greedy decisions over `n_runs` shared states and
/// normalizes by the fastest policy. Runs on one thread.
pub fn bench_latency(
    policies: &[EvalPolicy],
    scenario: &Scenario,
    n_runs: usize,
    mcs: &McsTable,
) -> Result<Vec<LatencyEntry>> {
    let env = &scenario.config;
    let table = enumerate_actions(env.n_users, env.max_coscheduled, env.include_empty_action)?;
    let norms = FeatureNorms::for_scenario(scenario);
    let states = evaluation_states(scenario, n_runs.max(1));
    let mut medians = Vec::with_capacity(policies.len());
    for policy in policies {
        let mut rng = crate::env::derive_rng(scenario.seed, &[0xBE7C]);
        // One untimed decision warms caches and allocator.
        policy.decide(&states[0], scenario, &table, &norms, mcs, &mut rng)?;
        let mut samples = Vec::with_capacity(states.len());
        for state in &states {
            let start = Instant::now();
            let allocation = policy.decide(state, scenario, &table, &norms, mcs, &mut rng)?;
            samples.push(start.elapsed().as_secs_f64());
            std::hint::black_box(allocation);
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(samples[samples.len() / 2]);
    }
    let fastest = medians.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(policies
        .iter()
        .zip(medians)
        .map(|(p, m)| LatencyEntry {
            name: p.name.clone(),
            median_latency_s: m,
            relative: m / fastest,
            parameter_count: p.parameter_count(),
        })
        .collect())
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6e}")
    }
}

/// Training log as CSV (one row per iteration).
pub fn training_log_csv(log: &[IterationLog]) -> String {
    let mut out = String::from(
        "iteration,samples_seen,epsilon,mean_train_reward,mean_validation_reward,loss\n",
    );
    for row in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.iteration,
            row.samples_seen,
            fmt_f64(row.epsilon),
            fmt_f64(row.mean_train_reward),
            fmt_f64(row.mean_validation_reward),
            fmt_f64(row.loss)
        );
    }
    out
}

/// Evaluation summary as CSV (one row per policy).
pub fn eval_summary_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "policy,mean_reward,mean_ratio_pct,parameter_count,median_latency_s,relative_latency\n",
    );
    for p in &report.policies {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.name,
            fmt_f64(p.mean_reward),
            fmt_f64(p.mean_ratio_pct),
            p.parameter_count.map_or(String::new(), |c| c.to_string()),
            p.median_latency_s.map_or(String::new(), fmt_f64),
            p.relative_latency.map_or(String::new(), fmt_f64),
        );
    }
    out
}

/// CDF points of one policy as CSV.
pub fn cdf_csv(policy: &PolicyReport) -> String {
    let mut out = String::from("ratio,cumulative_probability\n");
    for &(r, c) in &policy.cdf {
        let _ = writeln!(out, "{},{}", fmt_f64(r), fmt_f64(c));
    }
    out
}

/// Latency table as CSV.
pub fn latency_csv(entries: &[LatencyEntry]) -> String {
    let mut out = String::from("policy,median_latency_s,relative_latency,parameter_count\n");
    for e in entries {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.name,
            fmt_f64(e.median_latency_s),
            fmt_f64(e.relative),
            e.parameter_count.map_or(String::new(), |c| c.to_string()),
        );
    }
    out
}

/// Human-readable evaluation summary.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "evaluation over {} states (reference: {}, {} zero-reference states excluded)",
        report.n_states, report.reference, report.n_reference_zero
    );
    let _ = writeln!(out, "state stream digest: {:016x}", report.state_digest);
    let _ = writeln!(
        out,
        "{:<18} {:>14} {:>12} {:>12}",
        "policy", "mean reward", "vs ref", "params"
    );
    for p in &report.policies {
        let _ = writeln!(
            out,
            "{:<18} {:>14.6} {:>11.1}% {:>12}",
            p.name,
            p.mean_reward,
            p.mean_ratio_pct,
            p.parameter_count.map_or("-".to_string(), |c| c.to_string()),
        );
    }
    out
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}
