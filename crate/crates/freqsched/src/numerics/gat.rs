//! Multi-head graph attention layer over a fully connected graph with
//! self-loops, with a hand-derived backward pass.
//!
//! Per head: projected node states `u_d = W h_d`, pair scores
//! `e_dm = leaky_rectifier(a_s . u_d + a_n . u_m)`, attention weights by
//! softmax over `m`, and output `sum_m alpha_dm u_m`. The per-node output is
//! the concatenation over heads (no output nonlinearity; an MLP follows).

use rand::Rng;

use super::param::{LeafId, ParamTree};
use crate::error::Error;
use crate::Result;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatSpec {
    pub in_dim: usize,
    pub head_dim: usize,
    pub n_heads: usize,
}

impl GatSpec {
    pub fn out_dim(&self) -> usize {
        self.head_dim * self.n_heads
    }
}

#[derive(Debug, Clone)]
struct GatHead {
    w: LeafId,
    a_self: LeafId,
    a_neigh: LeafId,
}

/// Graph attention layer parameters.
#[derive(Debug, Clone)]
pub struct Gat {
    pub spec: GatSpec,
    heads: Vec<GatHead>,
}

/// Per-head intermediates recorded by the forward pass.
#[derive(Debug, Clone)]
pub struct GatCache {
    nodes: Vec<Vec<f64>>,
    /// Projected states per head: `[head][node][dim]`.
    u: Vec<Vec<Vec<f64>>>,
    /// Pre-activation scores per head: `[head][d][m]`.
    scores: Vec<Vec<Vec<f64>>>,
    /// Attention weights per head: `[head][d][m]`.
    alpha: Vec<Vec<Vec<f64>>>,
}

impl Gat {
    pub fn init(tree: &mut ParamTree, name: &str, spec: GatSpec, rng: &mut impl Rng) -> Self {
        let w_limit = (6.0 / spec.in_dim as f64).sqrt();
        let a_limit = (6.0 / spec.head_dim as f64).sqrt();
        let heads = (0..spec.n_heads)
            .map(|h| GatHead {
                w: tree.add_uniform(
                    &format!("{name}.h{h}.w"),
                    vec![spec.head_dim, spec.in_dim],
                    w_limit,
                    rng,
                ),
                a_self: tree.add_uniform(&format!("{name}.h{h}.a_self"), vec![spec.head_dim], a_limit, rng),
                a_neigh: tree.add_uniform(
                    &format!("{name}.h{h}.a_neigh"),
                    vec![spec.head_dim],
                    a_limit,
                    rng,
                ),
            })
            .collect();
        Self { spec, heads }
    }

    /// Forward over `n_nodes` node states, each of length `in_dim`.
    pub fn forward(&self, tree: &ParamTree, nodes: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, GatCache)> {
        let n = nodes.len();
        for node in nodes {
            if node.len() != self.spec.in_dim {
                return Err(Error::Shape(format!(
                    "gat: expected node states of length {}, got {}",
                    self.spec.in_dim,
                    node.len()
                )));
            }
        }
        let f = self.spec.head_dim;
        let mut out = vec![vec![0.0; self.spec.out_dim()]; n];
        let mut cache = GatCache {
            nodes: nodes.to_vec(),
            u: Vec::with_capacity(self.heads.len()),
            scores: Vec::with_capacity(self.heads.len()),
            alpha: Vec::with_capacity(self.heads.len()),
        };
        for (h, head) in self.heads.iter().enumerate() {
            let w = &tree.leaf(head.w).values;
            let a_s = &tree.leaf(head.a_self).values;
            let a_n = &tree.leaf(head.a_neigh).values;

            let u: Vec<Vec<f64>> = nodes
                .iter()
                .map(|x| {
                    (0..f)
                        .map(|o| {
                            let row = &w[o * self.spec.in_dim..(o + 1) * self.spec.in_dim];
                            row.iter().zip(x).map(|(wi, xi)| wi * xi).sum()
                        })
                        .collect()
                })
                .collect();
            let s_self: Vec<f64> = u.iter().map(|ud| dot(a_s, ud)).collect();
            let s_neigh: Vec<f64> = u.iter().map(|um| dot(a_n, um)).collect();

            let mut scores = vec![vec![0.0; n]; n];
            let mut alpha = vec![vec![0.0; n]; n];
            for d in 0..n {
                for m in 0..n {
                    scores[d][m] = s_self[d] + s_neigh[m];
                }
                let acts: Vec<f64> = scores[d].iter().map(|&z| leaky(z)).collect();
                softmax_into(&acts, &mut alpha[d]);
                for m in 0..n {
                    let am = alpha[d][m];
                    for k in 0..f {
                        out[d][h * f + k] += am * u[m][k];
                    }
                }
            }
            cache.u.push(u);
            cache.scores.push(scores);
            cache.alpha.push(alpha);
        }
        Ok((out, cache))
    }

    /// Accumulates parameter gradients and returns node-state gradients.
    pub fn backward(&self, tree: &mut ParamTree, cache: &GatCache, dout: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = cache.nodes.len();
        let f = self.spec.head_dim;
        let mut dnodes = vec![vec![0.0; self.spec.in_dim]; n];
        for (h, head) in self.heads.iter().enumerate() {
            let u = &cache.u[h];
            let alpha = &cache.alpha[h];
            let scores = &cache.scores[h];
            let mut du = vec![vec![0.0; f]; n];

            // Through the attention-weighted aggregation.
            let mut dz = vec![vec![0.0; n]; n];
            for d in 0..n {
                let dout_d = &dout[d][h * f..(h + 1) * f];
                let mut dalpha = vec![0.0; n];
                for m in 0..n {
                    dalpha[m] = dot(dout_d, &u[m]);
                    for k in 0..f {
                        du[m][k] += alpha[d][m] * dout_d[k];
                    }
                }
                // Softmax backward for row d.
                let weighted: f64 = (0..n).map(|m| alpha[d][m] * dalpha[m]).sum();
                for m in 0..n {
                    let dact = alpha[d][m] * (dalpha[m] - weighted);
                    dz[d][m] = dact * if scores[d][m] >= 0.0 { 1.0 } else { LEAKY_SLOPE };
                }
            }

            // Scores into the attention vectors and projected states.
            {
                let a_s = tree.leaf(head.a_self).values.clone();
                let a_n = tree.leaf(head.a_neigh).values.clone();
                let mut da_s = vec![0.0; f];
                let mut da_n = vec![0.0; f];
                for d in 0..n {
                    for m in 0..n {
                        let g = dz[d][m];
                        if g == 0.0 {
                            continue;
                        }
                        for k in 0..f {
                            da_s[k] += g * u[d][k];
                            da_n[k] += g * u[m][k];
                            du[d][k] += g * a_s[k];
                            du[m][k] += g * a_n[k];
                        }
                    }
                }
                for (acc, v) in tree.leaf_mut(head.a_self).grad.iter_mut().zip(da_s) {
                    *acc += v;
                }
                for (acc, v) in tree.leaf_mut(head.a_neigh).grad.iter_mut().zip(da_n) {
                    *acc += v;
                }
            }

            // Projection: u_d = W h_d.
            let leaf = tree.leaf_mut(head.w);
            let (w, dw) = (&leaf.values, &mut leaf.grad);
            for d in 0..n {
                for o in 0..f {
                    let g = du[d][o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &w[o * self.spec.in_dim..(o + 1) * self.spec.in_dim];
                    let drow = &mut dw[o * self.spec.in_dim..(o + 1) * self.spec.in_dim];
                    for i in 0..self.spec.in_dim {
                        drow[i] += g * cache.nodes[d][i];
                        dnodes[d][i] += g * row[i];
                    }
                }
            }
        }
        dnodes
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn leaky(z: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_tree_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_nodes(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn single_node_collapses_to_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tree = ParamTree::new();
        let spec = GatSpec { in_dim: 4, head_dim: 3, n_heads: 2 };
        let gat = Gat::init(&mut tree, "g", spec, &mut rng);
        let nodes = random_nodes(&mut rng, 1, 4);
        let (out, cache) = gat.forward(&tree, &nodes).unwrap();
        // Attention over a single node is 1.0 on itself.
        assert!((cache.alpha[0][0][0] - 1.0).abs() < 1e-15);
        for h in 0..2 {
            for k in 0..3 {
                assert!((out[0][h * 3 + k] - cache.u[h][0][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_nodes_produce_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut tree = ParamTree::new();
        let spec = GatSpec { in_dim: 5, head_dim: 4, n_heads: 3 };
        let gat = Gat::init(&mut tree, "g", spec, &mut rng);
        let proto: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nodes = vec![proto.clone(); 4];
        let (out, _) = gat.forward(&tree, &nodes).unwrap();
        for row in &out[1..] {
            for (a, b) in row.iter().zip(&out[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tree = ParamTree::new();
        let spec = GatSpec { in_dim: 6, head_dim: 4, n_heads: 3 };
        let gat = Gat::init(&mut tree, "g", spec, &mut rng);
        let nodes = random_nodes(&mut rng, 5, 6);
        let (out, _) = gat.forward(&tree, &nodes).unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| nodes[p].clone()).collect();
        let (out_p, _) = gat.forward(&tree, &permuted).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (a, b) in out_p[i].iter().zip(&out[p]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn finite_difference_agreement() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut tree = ParamTree::new();
            let spec = GatSpec { in_dim: 3, head_dim: 2, n_heads: 2 };
            let gat = Gat::init(&mut tree, "g", spec, &mut rng);
            let nodes = random_nodes(&mut rng, 3, 3);

            tree.zero_grads();
            let (out, cache) = gat.forward(&tree, &nodes).unwrap();
            let dout: Vec<Vec<f64>> = out
                .iter()
                .map(|row| row.iter().map(|&v| 2.0 * v).collect())
                .collect();
            gat.backward(&mut tree, &cache, &dout);

            let err = check_tree_gradients(&mut tree, 1e-6, |t| {
                let (out, _) = gat.forward(t, &nodes).unwrap();
                out.iter().flatten().map(|v| v * v).sum()
            });
            assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tree = ParamTree::new();
        let spec = GatSpec { in_dim: 4, head_dim: 3, n_heads: 2 };
        let gat = Gat::init(&mut tree, "g", spec, &mut rng);
        let nodes = random_nodes(&mut rng, 3, 4);
        let (out, cache) = gat.forward(&tree, &nodes).unwrap();
        let dout = vec![vec![0.0; out[0].len()]; out.len()];
        let dnodes = gat.backward(&mut tree, &cache, &dout);
        assert!(dnodes.iter().flatten().all(|&v| v == 0.0));
        assert!(tree.leaves().all(|l| l.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn rejects_wrong_node_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tree = ParamTree::new();
        let spec = GatSpec { in_dim: 4, head_dim: 2, n_heads: 1 };
        let gat = Gat::init(&mut tree, "g", spec, &mut rng);
        assert!(gat.forward(&tree, &[vec![1.0; 3]]).is_err());
    }
}
