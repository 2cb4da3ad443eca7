//! AdamW with decoupled weight decay and bias-corrected moments.

use super::param::ParamTree;

/// Optimizer state tied to one parameter tree layout.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, tree: &ParamTree) -> Self {
        Self::with_hyperparams(lr, 0.9, 0.999, 1e-8, 1e-4, tree)
    }

    pub fn with_hyperparams(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
        tree: &ParamTree,
    ) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: tree.leaves().map(|l| vec![0.0; l.len()]).collect(),
            v: tree.leaves().map(|l| vec![0.0; l.len()]).collect(),
        }
    }

    /// Applies one update from the gradients stored in the tree.
    pub fn step(&mut self, tree: &mut ParamTree) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (id, (m, v)) in tree.ids().into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let leaf = tree.leaf_mut(id);
            for i in 0..leaf.values.len() {
                let g = leaf.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                leaf.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps)
                    + self.lr * self.weight_decay * leaf.values[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_leaf(value: f64) -> ParamTree {
        let mut tree = ParamTree::new();
        tree.add_leaf("p", vec![1], vec![value]);
        tree
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_params_unchanged() {
        let mut tree = single_leaf(0.7);
        let mut opt = AdamW::with_hyperparams(1e-2, 0.9, 0.999, 1e-8, 0.0, &tree);
        for _ in 0..5 {
            tree.zero_grads();
            opt.step(&mut tree);
        }
        assert_eq!(tree.leaves().next().unwrap().values[0], 0.7);
    }

    #[test]
    fn constant_gradient_approaches_sign_step() {
        // With a constant gradient the bias-corrected update tends to
        // lr * sign(g).
        let mut tree = single_leaf(0.0);
        let lr = 1e-3;
        let mut opt = AdamW::with_hyperparams(lr, 0.9, 0.999, 1e-8, 0.0, &tree);
        let mut prev = 0.0;
        let mut last_delta = 0.0;
        for _ in 0..2000 {
            let id = tree.ids()[0];
            tree.leaf_mut(id).grad[0] = 3.5;
            opt.step(&mut tree);
            let cur = tree.leaf(id).values[0];
            last_delta = prev - cur;
            prev = cur;
        }
        assert!((last_delta - lr).abs() < 1e-6, "delta {last_delta}");
    }

    #[test]
    fn decay_only_shrinks_multiplicatively() {
        let mut tree = single_leaf(2.0);
        let (lr, wd) = (0.1, 0.5);
        let mut opt = AdamW::with_hyperparams(lr, 0.9, 0.999, 1e-8, wd, &tree);
        for n in 1..=10 {
            tree.zero_grads();
            opt.step(&mut tree);
            let expected = 2.0 * (1.0 - lr * wd).powi(n);
            let got = tree.leaves().next().unwrap().values[0];
            assert!((got - expected).abs() < 1e-12, "step {n}");
        }
    }
}
