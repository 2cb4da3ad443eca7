//! Self-contained numeric kernels: dense/MLP blocks, a graph attention
//! layer, the AdamW optimizer, and finite-difference gradient verification.
//!
//! All kernels compute in `f64` and are deterministic functions of their
//! inputs; there is no autodiff — the backward passes are hand-derived for
//! the fixed topologies used by the agents and verified against central
//! differences.

pub mod adamw;
pub mod gat;
pub mod gradcheck;
pub mod mlp;
pub mod param;

pub use adamw::AdamW;
pub use gat::{Gat, GatCache, GatSpec};
pub use gradcheck::check_tree_gradients;
pub use mlp::{Dense, Mlp, MlpCache, MlpSpec};
pub use param::{Leaf, LeafId, ParamTree};
