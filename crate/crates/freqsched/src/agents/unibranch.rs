//! Unibranch network: one advantage MLP shared by all branches, fed the
//! shared representation concatenated with the branch's local embedding
//! (plus an optional one-hot branch label).

use rand::Rng;

use super::{dueling_backward, dueling_combine, AgentSpec, ProblemDims, QOutput};
use crate::numerics::{Dense, Mlp, MlpCache, MlpSpec, ParamTree};
use crate::Result;

pub struct UnibranchNet {
    preproc: Dense,
    shared: Mlp,
    value: Mlp,
    head: Mlp,
    dims: ProblemDims,
    local: usize,
    positional: bool,
}

pub struct UnibranchCache {
    features: Vec<Vec<f64>>,
    pre_concat: Vec<f64>,
    shared_cache: MlpCache,
    s_emb: Vec<f64>,
    value_cache: MlpCache,
    head_caches: Vec<MlpCache>,
}

impl UnibranchNet {
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
        let head_input = spec.shared_repr_size
            + local
            + if spec.positional_encoding {
                dims.n_subbands
            } else {
                0
            };
        let head = Mlp::init(
            tree,
            "branch_head",
            MlpSpec::new(head_input, dims.n_actions, spec.branch_layers),
            rng,
        );
        Self {
            preproc,
            shared,
            value,
            head,
            dims: *dims,
            local,
            positional: spec.positional_encoding,
        }
    }

    fn head_input(&self, s_emb: &[f64], pre: &[f64], branch: usize) -> Vec<f64> {
        let mut input = Vec::with_capacity(
            s_emb.len() + pre.len() + if self.positional { self.dims.n_subbands } else { 0 },
        );
        input.extend_from_slice(s_emb);
        input.extend_from_slice(pre);
        if self.positional {
            let mut onehot = vec![0.0; self.dims.n_subbands];
            onehot[branch] = 1.0;
            input.extend(onehot);
        }
        input
    }

    pub(super) fn forward(
        &self,
        tree: &ParamTree,
        features: &[Vec<f64>],
    ) -> Result<(QOutput, UnibranchCache)> {
        let mut pre_concat = Vec::with_capacity(self.local * self.dims.n_subbands);
        for f in features {
            pre_concat.extend(self.preproc.forward(tree, f)?);
        }
        let (s_emb, shared_cache) = self.shared.forward(tree, &pre_concat)?;
        let (v, value_cache) = self.value.forward(tree, &pre_concat)?;
        let mut advantage = Vec::with_capacity(self.dims.n_subbands);
        let mut head_caches = Vec::with_capacity(self.dims.n_subbands);
        for d in 0..self.dims.n_subbands {
            let input =
                self.head_input(&s_emb, &pre_concat[d * self.local..(d + 1) * self.local], d);
            let (a, c) = self.head.forward(tree, &input)?;
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
            UnibranchCache {
                features: features.to_vec(),
                pre_concat,
                shared_cache,
                s_emb,
                value_cache,
                head_caches,
            },
        ))
    }

    pub(super) fn backward(&self, tree: &mut ParamTree, cache: &UnibranchCache, dq: &[Vec<f64>]) {
        let (da, dvalue) = dueling_backward(dq);
        let emb_len = cache.s_emb.len();
        let mut d_emb = vec![0.0; emb_len];
        let mut d_concat = vec![0.0; cache.pre_concat.len()];
        for (d, (cache_h, da_row)) in cache.head_caches.iter().zip(da.iter()).enumerate() {
            let g = self.head.backward(tree, cache_h, da_row);
            for (acc, v) in d_emb.iter_mut().zip(&g[..emb_len]) {
                *acc += v;
            }
            let local_slice = &g[emb_len..emb_len + self.local];
            for (acc, v) in d_concat[d * self.local..(d + 1) * self.local]
                .iter_mut()
                .zip(local_slice)
            {
                *acc += v;
            }
            // The one-hot positional block is an input, not a parameter.
        }
        let d_shared_in = self.shared.backward(tree, &cache.shared_cache, &d_emb);
        for (acc, v) in d_concat.iter_mut().zip(d_shared_in) {
            *acc += v;
        }
        let d_value_in = self.value.backward(tree, &cache.value_cache, &[dvalue]);
        for (acc, v) in d_concat.iter_mut().zip(d_value_in) {
            *acc += v;
        }
        for (d, f) in cache.features.iter().enumerate() {
            let slice = &d_concat[d * self.local..(d + 1) * self.local];
            self.preproc.backward(tree, f, slice);
        }
    }
}
