//! Action-branching network: shared representation, one advantage MLP per
//! branch.

use rand::Rng;

use super::{dueling_backward, dueling_combine, AgentSpec, ProblemDims, QOutput};
use crate::numerics::{Dense, Mlp, MlpCache, MlpSpec, ParamTree};
use crate::Result;

pub struct BranchingNet {
    preproc: Dense,
    shared: Mlp,
    value: Mlp,
    heads: Vec<Mlp>,
    dims: ProblemDims,
    local: usize,
}

pub struct BranchingCache {
    features: Vec<Vec<f64>>,
    shared_cache: MlpCache,
    s_emb: Vec<f64>,
    value_cache: MlpCache,
    head_caches: Vec<MlpCache>,
}

impl BranchingNet {
    pub(super) fn init(
        tree: &mut ParamTree,
        spec: &AgentSpec,
        dims: &ProblemDims,
        rng: &mut impl Rng,
    ) -> Self {
        let local = spec.local_repr_size;
        let concat = local * dims.n_subbands;
        let preproc = Dense::init(tree, "preproc", dims.feature_len, local, rng);
        let shared = Mlp::init(
            tree,
            "shared",
            MlpSpec::new(concat, spec.shared_repr_size, spec.shared_layers),
            rng,
        );
        let value = Mlp::init(
            tree,
            "value",
            MlpSpec::new(concat, 1, spec.branch_layers),
            rng,
        );
        let heads = (0..dims.n_subbands)
            .map(|d| {
                Mlp::init(
                    tree,
                    &format!("branch_head.{d}"),
                    MlpSpec::new(spec.shared_repr_size, dims.n_actions, spec.branch_layers),
                    rng,
                )
            })
            .collect();
        Self {
            preproc,
            shared,
            value,
            heads,
            dims: *dims,
            local,
        }
    }

    pub(super) fn forward(
        &self,
        tree: &ParamTree,
        features: &[Vec<f64>],
    ) -> Result<(QOutput, BranchingCache)> {
        let mut pre_concat = Vec::with_capacity(self.local * self.dims.n_subbands);
        for f in features {
            pre_concat.extend(self.preproc.forward(tree, f)?);
        }
        let (s_emb, shared_cache) = self.shared.forward(tree, &pre_concat)?;
        let (v, value_cache) = self.value.forward(tree, &pre_concat)?;
        let mut advantage = Vec::with_capacity(self.dims.n_subbands);
        let mut head_caches = Vec::with_capacity(self.dims.n_subbands);
        for head in &self.heads {
            let (a, c) = head.forward(tree, &s_emb)?;
            advantage.push(a);
            head_caches.push(c);
        }
        let q = dueling_combine(&advantage, v[0]);
        Ok((
            QOutput {
                q,
                advantage,
                value: v[0],
            },
            BranchingCache {
                features: features.to_vec(),
                shared_cache,
                s_emb,
                value_cache,
                head_caches,
            },
        ))
    }

    pub(super) fn backward(&self, tree: &mut ParamTree, cache: &BranchingCache, dq: &[Vec<f64>]) {
        let (da, dvalue) = dueling_backward(dq);
        let mut d_emb = vec![0.0; cache.s_emb.len()];
        for (head, (cache_h, da_row)) in self
            .heads
            .iter()
            .zip(cache.head_caches.iter().zip(da.iter()))
        {
            let g = head.backward(tree, cache_h, da_row);
            for (acc, v) in d_emb.iter_mut().zip(g) {
                *acc += v;
            }
        }
        let mut d_concat = self.shared.backward(tree, &cache.shared_cache, &d_emb);
        let d_concat_v = self.value.backward(tree, &cache.value_cache, &[dvalue]);
        for (acc, v) in d_concat.iter_mut().zip(d_concat_v) {
            *acc += v;
        }
        for (d, f) in cache.features.iter().enumerate() {
            let slice = &d_concat[d * self.local..(d + 1) * self.local];
            self.preproc.backward(tree, f, slice);
        }
    }
}
