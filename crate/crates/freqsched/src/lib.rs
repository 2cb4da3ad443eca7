//! Desk-scale laboratory for MU-MIMO frequency scheduling with parallel
//! deep-Q decision making.
//!
//! The crate simulates a single downlink cell in which `N_u` users compete
//! for `N_s` frequency sub-bands, with up to `M` users co-scheduled per
//! sub-band through MU-MIMO precoding. Scheduling quality is scored by a
//! proportional-fair throughput-to-average reward. Three learned schedulers
//! (action branching, unibranch, GNN) decide all sub-bands in parallel and
//! are trained with value-decomposition DQN on prioritized replay; they are
//! compared against a marginal-utility heuristic, a uniform-random policy,
//! and an exhaustive oracle.
//!
//! The modules mirror the pipeline:
//!
//! - [`env`] — scenario generation, fading channels, channel estimation,
//!   buffers, and average-rate normalizers,
//! - [`actions`] — the per-sub-band action set and joint action encoding,
//! - [`link`] — precoding, SINR, link adaptation, rates, and the reward,
//! - [`features`] — engineered pairwise-interference input features,
//! - [`numerics`] — dense/MLP/GAT kernels with hand-derived backward
//!   passes, AdamW, and finite-difference gradient verification,
//! - [`agents`] — the three Q architectures with dueling heads,
//! - [`replay`] — prioritized experience replay with two-phase commit,
//! - [`training`] — the value-decomposition training and fine-tuning loops,
//! - [`baselines`] — marginal-utility, random, and brute-force schedulers,
//! - [`eval`] — policy evaluation, reward-ratio CDFs, latency benchmark,
//! - [`config`] / [`checkpoint`] — the text config format and the binary
//!   parameter checkpoint format used by the `freqsched` binary.
//!
//! Each major capability has a runnable demo under `examples/`; start with
//! `cargo run --release --example reward_pipeline`.

pub mod actions;
pub mod agents;
pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod features;
pub mod link;
pub mod numerics;
pub mod replay;
pub mod training;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
