//! Dense layers and MLP blocks with hand-derived backward passes.
//!
//! Hidden layers use the rectifier; the output layer is affine. Hidden
//! sizes interpolate linearly (rounded up) between input and output size.

use rand::Rng;

use super::param::{LeafId, ParamTree};
use crate::error::Error;
use crate::Result;

/// Shape description of an MLP block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_size: usize,
    pub output_size: usize,
    pub n_layers: usize,
}

impl MlpSpec {
    pub fn new(input_size: usize, output_size: usize, n_layers: usize) -> Self {
        assert!(n_layers >= 1, "an MLP needs at least one layer");
        Self {
            input_size,
            output_size,
            n_layers,
        }
    }

    /// Sizes of the layer boundaries, `n_layers + 1` entries from input to
    /// output. Intermediate sizes interpolate linearly, rounded up.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let (a, b, n) = (
            self.input_size as f64,
            self.output_size as f64,
            self.n_layers as f64,
        );
        (0..=self.n_layers)
            .map(|i| (a + (b - a) * i as f64 / n).ceil() as usize)
            .collect()
    }
}

/// Single affine layer `y = W x + b`, weights stored row-major `(out, in)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: LeafId,
    pub b: LeafId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    /// Registers fan-in-scaled uniform weights and biases. Biases are
    /// drawn (not zeroed) so pre-activations never sit exactly on the
    /// rectifier kink at initialization.
    pub fn init(tree: &mut ParamTree, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let w = tree.add_uniform(&format!("{name}.w"), vec![out_dim, in_dim], limit, rng);
        let b = tree.add_uniform(
            &format!("{name}.b"),
            vec![out_dim],
            1.0 / (in_dim as f64).sqrt(),
            rng,
        );
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, tree: &ParamTree, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape(format!(
                "dense {}: expected input of length {}, got {}",
                tree.leaf(self.w).name,
                self.in_dim,
                x.len()
            )));
        }
        let w = &tree.leaf(self.w).values;
        let b = &tree.leaf(self.b).values;
        let mut y = vec![0.0; self.out_dim];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *yo = acc;
        }
        Ok(y)
    }

    /// Accumulates `dW`, `db` and returns `dx = W^T dy`.
    pub fn backward(&self, tree: &mut ParamTree, x: &[f64], dy: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(dy.len(), self.out_dim);
        let mut dx = vec![0.0; self.in_dim];
        {
            let leaf = tree.leaf_mut(self.w);
            let (w, dw) = (&leaf.values, &mut leaf.grad);
            for (o, &g) in dy.iter().enumerate() {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                let drow = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    drow[i] += g * x[i];
                    dx[i] += g * row[i];
                }
            }
        }
        let db = &mut tree.leaf_mut(self.b).grad;
        for (o, &g) in dy.iter().enumerate() {
            db[o] += g;
        }
        dx
    }
}

pub(crate) fn relu(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// MLP block: affine layers with rectifiers between, affine output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward`]: the input of each layer
/// (post-rectifier) and each pre-activation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre_acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn init(tree: &mut ParamTree, name: &str, spec: MlpSpec, rng: &mut impl Rng) -> Self {
        let sizes = spec.layer_sizes();
        let layers = (0..spec.n_layers)
            .map(|i| Dense::init(tree, &format!("{name}.l{i}"), sizes[i], sizes[i + 1], rng))
            .collect();
        Self { spec, layers }
    }

    pub fn forward(&self, tree: &ParamTree, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_acts: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            cache.inputs.push(cur.clone());
            let mut z = layer.forward(tree, &cur)?;
            cache.pre_acts.push(z.clone());
            if i + 1 < self.layers.len() {
                relu(&mut z);
            }
            cur = z;
        }
        Ok((cur, cache))
    }

    /// Row-by-row batched forward; agrees element-wise with the
    /// single-sample path by construction.
    pub fn forward_batch(&self, tree: &ParamTree, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| Ok(self.forward(tree, x)?.0)).collect()
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, tree: &mut ParamTree, cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let mut g = dy.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i + 1 < self.layers.len() {
                // Rectifier between layer i and i+1.
                for (gv, &z) in g.iter_mut().zip(&cache.pre_acts[i]) {
                    if z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            g = layer.backward(tree, &cache.inputs[i], &g);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_tree_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interpolated_hidden_sizes() {
        assert_eq!(MlpSpec::new(56, 640, 3).layer_sizes(), vec![56, 251, 446, 640]);
        assert_eq!(MlpSpec::new(640, 1, 2).layer_sizes(), vec![640, 321, 1]);
        assert_eq!(MlpSpec::new(8, 8, 1).layer_sizes(), vec![8, 8]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut tree = ParamTree::new();
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        tree.add_leaf("l.w", vec![3, 3], w);
        tree.add_zeros("l.b", vec![3]);
        let dense = Dense {
            w: tree.by_name("l.w").unwrap(),
            b: tree.by_name("l.b").unwrap(),
            in_dim: 3,
            out_dim: 3,
        };
        let x = vec![0.5, -1.5, 2.0];
        assert_eq!(dense.forward(&tree, &x).unwrap(), x);
    }

    #[test]
    fn zero_weights_yield_bias() {
        let mut tree = ParamTree::new();
        tree.add_zeros("l.w", vec![2, 3]);
        tree.add_leaf("l.b", vec![2], vec![4.0, -1.0]);
        let dense = Dense {
            w: tree.by_name("l.w").unwrap(),
            b: tree.by_name("l.b").unwrap(),
            in_dim: 3,
            out_dim: 2,
        };
        assert_eq!(dense.forward(&tree, &[7.0, 8.0, 9.0]).unwrap(), vec![4.0, -1.0]);
    }

    #[test]
    fn linear_layer_input_gradient_is_w_transpose() {
        let mut tree = ParamTree::new();
        tree.add_leaf("l.w", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        tree.add_zeros("l.b", vec![2]);
        let dense = Dense {
            w: tree.by_name("l.w").unwrap(),
            b: tree.by_name("l.b").unwrap(),
            in_dim: 2,
            out_dim: 2,
        };
        let dx = dense.backward(&mut tree, &[0.0, 0.0], &[1.0, 1.0]);
        // W^T [1,1] = [1+3, 2+4].
        assert_eq!(dx, vec![4.0, 6.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tree = ParamTree::new();
        let mlp = Mlp::init(&mut tree, "m", MlpSpec::new(4, 3, 3), &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, cache) = mlp.forward(&tree, &x).unwrap();
        let dx = mlp.backward(&mut tree, &cache, &[0.0, 0.0, 0.0]);
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(tree.leaves().all(|l| l.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn finite_difference_agreement() {
        // Central differences on a random 3-layer MLP with a squared-sum
        // readout; repeated over several instances.
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tree = ParamTree::new();
            let mlp = Mlp::init(&mut tree, "m", MlpSpec::new(5, 3, 3), &mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();

            tree.zero_grads();
            let (y, cache) = mlp.forward(&tree, &x).unwrap();
            let dy: Vec<f64> = y.iter().map(|&v| 2.0 * v).collect();
            mlp.backward(&mut tree, &cache, &dy);

            let err = check_tree_gradients(&mut tree, 1e-6, |t| {
                let (y, _) = mlp.forward(t, &x).unwrap();
                y.iter().map(|v| v * v).sum()
            });
            assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
        }
    }

    #[test]
    fn batch_matches_single_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tree = ParamTree::new();
        let mlp = Mlp::init(&mut tree, "m", MlpSpec::new(6, 2, 2), &mut rng);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let batch = mlp.forward_batch(&tree, &xs).unwrap();
        for (x, row) in xs.iter().zip(&batch) {
            let (single, _) = mlp.forward(&tree, x).unwrap();
            assert_eq!(&single, row);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tree = ParamTree::new();
        let mlp = Mlp::init(&mut tree, "m", MlpSpec::new(4, 2, 1), &mut rng);
        assert!(mlp.forward(&tree, &[1.0, 2.0]).is_err());
    }
}
