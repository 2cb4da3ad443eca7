//! The three parallel-decision Q architectures.
//!
//! Every variant maps the per-sub-band feature vectors to one Q-value row
//! per sub-band (branch) through a dueling head: a scalar state value plus
//! per-branch advantages, recombined by subtracting the advantage mean.
//! They differ in how branches share information:
//!
//! - action branching: global shared representation, one advantage MLP per
//!   branch,
//! - unibranch: global shared representation, a single advantage MLP
//!   applied per branch with the branch's local embedding appended,
//! - GNN: no global representation; local embeddings exchange messages
//!   through a graph attention layer for a fixed number of iterations.

mod branching;
mod gnn;
mod unibranch;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::actions::ScheduleAction;
use crate::env::EnvConfig;
use crate::error::Error;
use crate::features::feature_len;
use crate::numerics::ParamTree;
use crate::Result;

pub use branching::{BranchingCache, BranchingNet};
pub use gnn::{GnnCache, GnnNet};
pub use unibranch::{UnibranchCache, UnibranchNet};

/// Architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ActionBranching,
    Unibranch,
    Gnn,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::ActionBranching => "action_branching",
            Variant::Unibranch => "unibranch",
            Variant::Gnn => "gnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "action_branching" => Ok(Variant::ActionBranching),
            "unibranch" => Ok(Variant::Unibranch),
            "gnn" => Ok(Variant::Gnn),
            other => Err(Error::Config(format!("unknown agent variant `{other}`"))),
        }
    }
}

/// Architecture design parameters. Defaults: 64-dim local embeddings,
/// 640-dim shared representation, 3 shared layers, 2-layer heads, 3 GAT
/// heads and 3 GNN iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub variant: Variant,
    #[serde(default = "default_local")]
    pub local_repr_size: usize,
    #[serde(default = "default_shared")]
    pub shared_repr_size: usize,
    #[serde(default = "default_branch_layers")]
    pub branch_layers: usize,
    #[serde(default = "default_shared_layers")]
    pub shared_layers: usize,
    #[serde(default = "default_gnn_iterations")]
    pub gnn_iterations: usize,
    #[serde(default = "default_gnn_heads")]
    pub gnn_heads: usize,
    #[serde(default)]
    pub positional_encoding: bool,
}

fn default_local() -> usize {
    64
}
fn default_shared() -> usize {
    640
}
fn default_branch_layers() -> usize {
    2
}
fn default_shared_layers() -> usize {
    3
}
fn default_gnn_iterations() -> usize {
    3
}
fn default_gnn_heads() -> usize {
    3
}

impl AgentSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            local_repr_size: default_local(),
            shared_repr_size: default_shared(),
            branch_layers: default_branch_layers(),
            shared_layers: default_shared_layers(),
            gnn_iterations: default_gnn_iterations(),
            gnn_heads: default_gnn_heads(),
            positional_encoding: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_repr_size == 0 || self.shared_repr_size == 0 {
            return Err(Error::Config("representation sizes must be positive".into()));
        }
        if self.branch_layers == 0 || self.shared_layers == 0 {
            return Err(Error::Config("layer counts must be at least 1".into()));
        }
        if self.variant == Variant::Gnn && self.gnn_heads == 0 {
            return Err(Error::Config("gnn_heads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Problem dimensions the networks are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    pub n_subbands: usize,
    pub n_actions: usize,
    pub feature_len: usize,
}

impl ProblemDims {
    pub fn from_env(config: &EnvConfig) -> Result<Self> {
        let table = crate::actions::enumerate_actions(
            config.n_users,
            config.max_coscheduled,
            config.include_empty_action,
        )?;
        Ok(Self {
            n_subbands: config.n_subbands,
            n_actions: table.n_actions(),
            feature_len: feature_len(config.n_users),
        })
    }
}

/// Q-values of one state: per-branch rows plus the dueling decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct QOutput {
    /// `n_subbands x n_actions`.
    pub q: Vec<Vec<f64>>,
    pub advantage: Vec<Vec<f64>>,
    pub value: f64,
}

impl QOutput {
    /// Greedy branch actions, ties broken by the lowest index.
    pub fn greedy(&self) -> ScheduleAction {
        ScheduleAction::new(self.q.iter().map(|row| argmax(row)).collect())
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Dueling aggregation: `q[d][a] = A[d][a] + value - mean_a' A[d][a']`.
pub fn dueling_combine(advantage: &[Vec<f64>], value: f64) -> Vec<Vec<f64>> {
    advantage
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter().map(|a| a + value - mean).collect()
        })
        .collect()
}

/// Gradient of [`dueling_combine`]: given `dq`, returns `(dA, dvalue)`.
pub(crate) fn dueling_backward(dq: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let mut dvalue = 0.0;
    let da = dq
        .iter()
        .map(|row| {
            let sum: f64 = row.iter().sum();
            dvalue += sum;
            let mean = sum / row.len() as f64;
            row.iter().map(|g| g - mean).collect()
        })
        .collect();
    (da, dvalue)
}

/// Per-branch epsilon-greedy selection: each branch independently explores
/// with probability `epsilon`, otherwise takes its greedy action.
pub fn select_actions(q: &QOutput, epsilon: f64, rng: &mut impl Rng) -> ScheduleAction {
    ScheduleAction::new(
        q.q.iter()
            .map(|row| {
                if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
                    rng.gen_range(0..row.len())
                } else {
                    argmax(row)
                }
            })
            .collect(),
    )
}

/// Soft target-network update `target <- (1 - tau) target + tau online`.
pub fn polyak_update(target: &mut ParamTree, online: &ParamTree, tau: f64) -> Result<()> {
    target.polyak_from(online, tau)
}

/// Architecture-specific forward cache.
pub enum AgentCache {
    Branching(BranchingCache),
    Unibranch(UnibranchCache),
    Gnn(GnnCache),
}

enum Net {
    Branching(BranchingNet),
    Unibranch(UnibranchNet),
    Gnn(GnnNet),
}

/// One Q network: the spec, the problem dimensions, and the assembled
/// blocks. Parameters live in a separate [`ParamTree`] so online and
/// target copies share the same `Agent`.
pub struct Agent {
    pub spec: AgentSpec,
    pub dims: ProblemDims,
    net: Net,
}

impl Agent {
    /// Builds the network and its freshly initialized parameter tree.
    /// Construction is deterministic in `seed`, and the tree layout is a
    /// pure function of `(spec, dims)`.
    pub fn build(spec: &AgentSpec, dims: &ProblemDims, seed: u64) -> Result<(Self, ParamTree)> {
        spec.validate()?;
        let mut tree = ParamTree::new();
        let mut rng = crate::env::derive_rng(seed, &[0xA9E27]);
        let net = match spec.variant {
            Variant::ActionBranching => {
                Net::Branching(BranchingNet::init(&mut tree, spec, dims, &mut rng))
            }
            Variant::Unibranch => {
                Net::Unibranch(UnibranchNet::init(&mut tree, spec, dims, &mut rng))
            }
            Variant::Gnn => Net::Gnn(GnnNet::init(&mut tree, spec, dims, &mut rng)),
        };
        Ok((
            Self {
                spec: spec.clone(),
                dims: *dims,
                net,
            },
            tree,
        ))
    }

    /// Q-values for one state given as per-sub-band feature vectors.
    pub fn forward(&self, tree: &ParamTree, features: &[Vec<f64>]) -> Result<(QOutput, AgentCache)> {
        if features.len() != self.dims.n_subbands {
            return Err(Error::Shape(format!(
                "expected {} branch feature vectors, got {}",
                self.dims.n_subbands,
                features.len()
            )));
        }
        for f in features {
            if f.len() != self.dims.feature_len {
                return Err(Error::Shape(format!(
                    "expected branch features of length {}, got {}",
                    self.dims.feature_len,
                    f.len()
                )));
            }
        }
        match &self.net {
            Net::Branching(n) => {
                let (q, c) = n.forward(tree, features)?;
                Ok((q, AgentCache::Branching(c)))
            }
            Net::Unibranch(n) => {
                let (q, c) = n.forward(tree, features)?;
                Ok((q, AgentCache::Unibranch(c)))
            }
            Net::Gnn(n) => {
                let (q, c) = n.forward(tree, features)?;
                Ok((q, AgentCache::Gnn(c)))
            }
        }
    }

    /// Convenience forward that discards the cache.
    pub fn q_values(&self, tree: &ParamTree, features: &[Vec<f64>]) -> Result<QOutput> {
        Ok(self.forward(tree, features)?.0)
    }

    /// Accumulates parameter gradients for the upstream Q gradient `dq`
    /// (`n_subbands x n_actions`).
    pub fn backward(&self, tree: &mut ParamTree, cache: &AgentCache, dq: &[Vec<f64>]) {
        match (&self.net, cache) {
            (Net::Branching(n), AgentCache::Branching(c)) => n.backward(tree, c, dq),
            (Net::Unibranch(n), AgentCache::Unibranch(c)) => n.backward(tree, c, dq),
            (Net::Gnn(n), AgentCache::Gnn(c)) => n.backward(tree, c, dq),
            _ => panic!("cache does not match the agent architecture"),
        }
    }
}
