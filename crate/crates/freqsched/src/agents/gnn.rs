//! GNN network: local embeddings only, coordinated by repeated graph
//! attention over the fully connected sub-band graph.
//!
//! One GAT layer and one update MLP are applied recurrently for a fixed
//! number of iterations (shared parameters across iterations), with a
//! residual connection so a node's own state survives the attention
//! aggregate. The advantage head is shared across branches; the value
//! head reads the mean-pooled final representations.

use rand::Rng;

use super::{dueling_backward, dueling_combine, AgentSpec, ProblemDims, QOutput};
use crate::numerics::{Dense, Gat, GatCache, GatSpec, Mlp, MlpCache, MlpSpec, ParamTree};
use crate::Result;

pub struct GnnNet {
    embed: Dense,
    gat: Gat,
    update: Mlp,
    adv: Mlp,
    value: Mlp,
    dims: ProblemDims,
    n_iter: usize,
}

struct IterationCache {
    gat: GatCache,
    updates: Vec<MlpCache>,
}

pub struct GnnCache {
    features: Vec<Vec<f64>>,
    iterations: Vec<IterationCache>,
    adv_caches: Vec<MlpCache>,
    value_cache: MlpCache,
}

impl GnnNet {
    pub(super) fn init(
        tree: &mut ParamTree,
        spec: &AgentSpec,
        dims: &ProblemDims,
        rng: &mut impl Rng,
    ) -> Self {
        let local = spec.local_repr_size;
        let head_dim = (local / 2).max(1);
        let embed = Dense::init(tree, "embed", dims.feature_len, local, rng);
        let gat = Gat::init(
            tree,
            "gat",
            GatSpec {
                in_dim: local,
                head_dim,
                n_heads: spec.gnn_heads,
            },
            rng,
        );
        let update = Mlp::init(
            tree,
            "update",
            MlpSpec::new(head_dim * spec.gnn_heads, local, spec.branch_layers),
            rng,
        );
        let adv = Mlp::init(
            tree,
            "branch_head",
            MlpSpec::new(local, dims.n_actions, spec.branch_layers),
            rng,
        );
        let value = Mlp::init(tree, "value", MlpSpec::new(local, 1, spec.branch_layers), rng);
        Self {
            embed,
            gat,
            update,
            adv,
            value,
            dims: *dims,
            n_iter: spec.gnn_iterations,
        }
    }

    pub(super) fn forward(
        &self,
        tree: &ParamTree,
        features: &[Vec<f64>],
    ) -> Result<(QOutput, GnnCache)> {
        let n = self.dims.n_subbands;
        let mut h: Vec<Vec<f64>> = features
            .iter()
            .map(|f| self.embed.forward(tree, f))
            .collect::<Result<_>>()?;
        let mut iterations = Vec::with_capacity(self.n_iter);
        for _ in 0..self.n_iter {
            let (messages, gat_cache) = self.gat.forward(tree, &h)?;
            let mut next = Vec::with_capacity(n);
            let mut updates = Vec::with_capacity(n);
            for (prev, m) in h.iter().zip(&messages) {
                let (out, c) = self.update.forward(tree, m)?;
                next.push(prev.iter().zip(out).map(|(p, o)| p + o).collect());
                updates.push(c);
            }
            iterations.push(IterationCache {
                gat: gat_cache,
                updates,
            });
            h = next;
        }
        let mut advantage = Vec::with_capacity(n);
        let mut adv_caches = Vec::with_capacity(n);
        for node in &h {
            let (a, c) = self.adv.forward(tree, node)?;
            advantage.push(a);
            adv_caches.push(c);
        }
        let pooled: Vec<f64> = (0..h[0].len())
            .map(|i| h.iter().map(|node| node[i]).sum::<f64>() / n as f64)
            .collect();
        let (v, value_cache) = self.value.forward(tree, &pooled)?;
        let q = dueling_combine(&advantage, v[0]);
        Ok((
            QOutput {
                q,
                advantage,
                value: v[0],
            },
            GnnCache {
                features: features.to_vec(),
                iterations,
                adv_caches,
                value_cache,
            },
        ))
    }

    pub(super) fn backward(&self, tree: &mut ParamTree, cache: &GnnCache, dq: &[Vec<f64>]) {
        let n = self.dims.n_subbands;
        let (da, dvalue) = dueling_backward(dq);

        let mut dh: Vec<Vec<f64>> = cache
            .adv_caches
            .iter()
            .zip(da.iter())
            .map(|(c, da_row)| self.adv.backward(tree, c, da_row))
            .collect();
        let d_pooled = self.value.backward(tree, &cache.value_cache, &[dvalue]);
        for node in dh.iter_mut() {
            for (acc, v) in node.iter_mut().zip(&d_pooled) {
                *acc += v / n as f64;
            }
        }

        for iter_cache in cache.iterations.iter().rev() {
            let d_messages: Vec<Vec<f64>> = iter_cache
                .updates
                .iter()
                .zip(dh.iter())
                .map(|(c, g)| self.update.backward(tree, c, g))
                .collect();
            let d_prev = self.gat.backward(tree, &iter_cache.gat, &d_messages);
            // Residual: the previous state also feeds through unchanged.
            for (node, extra) in dh.iter_mut().zip(d_prev) {
                for (acc, v) in node.iter_mut().zip(extra) {
                    *acc += v;
                }
            }
        }
        for (f, g) in cache.features.iter().zip(dh.iter()) {
            self.embed.backward(tree, f, g);
        }
    }
}
