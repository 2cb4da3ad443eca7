//! Named, shaped parameter storage with per-leaf gradient accumulators.

use std::collections::HashMap;

use rand::Rng;

use crate::error::Error;
use crate::Result;

/// Handle to one leaf of a [`ParamTree`]. Stable for the tree's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafId(usize);

/// One parameter array plus its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Leaf {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered collection of named parameter leaves.
///
/// Leaf order is insertion order, which fixes the checkpoint layout and the
/// optimizer state layout.
#[derive(Debug, Clone, Default)]
pub struct ParamTree {
    leaves: Vec<Leaf>,
    index: HashMap<String, usize>,
}

impl ParamTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a leaf with explicit values. Panics on duplicate names; leaf
    /// names are produced by the architecture builders and must be unique.
    pub fn add_leaf(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> LeafId {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "leaf {name}: shape does not match value count"
        );
        assert!(
            !self.index.contains_key(name),
            "duplicate leaf name {name}"
        );
        let id = self.leaves.len();
        self.index.insert(name.to_string(), id);
        let grad = vec![0.0; values.len()];
        self.leaves.push(Leaf {
            name: name.to_string(),
            shape,
            values,
            grad,
        });
        LeafId(id)
    }

    /// Adds a leaf with uniform random values in `[-limit, limit]`.
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        limit: f64,
        rng: &mut impl Rng,
    ) -> LeafId {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
        self.add_leaf(name, shape, values)
    }

    /// Adds an all-zero leaf.
    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> LeafId {
        let n = shape.iter().product();
        self.add_leaf(name, shape, vec![0.0; n])
    }

    pub fn leaf(&self, id: LeafId) -> &Leaf {
        &self.leaves[id.0]
    }

    pub fn leaf_mut(&mut self, id: LeafId) -> &mut Leaf {
        &mut self.leaves[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<LeafId> {
        self.index.get(name).copied().map(LeafId)
    }

    /// Handles to all leaves, in insertion order.
    pub fn ids(&self) -> Vec<LeafId> {
        (0..self.leaves.len()).map(LeafId).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.leaves.iter()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.leaves.iter().map(Leaf::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for leaf in &mut self.leaves {
            leaf.grad.fill(0.0);
        }
    }

    /// Copies gradient accumulators out, in leaf order.
    pub fn grads_snapshot(&self) -> Vec<Vec<f64>> {
        self.leaves.iter().map(|l| l.grad.clone()).collect()
    }

    /// Adds externally accumulated gradients (same layout) onto the tree.
    pub fn add_grads(&mut self, grads: &[Vec<f64>]) {
        assert_eq!(grads.len(), self.leaves.len());
        for (leaf, g) in self.leaves.iter_mut().zip(grads) {
            for (acc, &gi) in leaf.grad.iter_mut().zip(g) {
                *acc += gi;
            }
        }
    }

    /// True when both trees have identical leaf names and shapes.
    pub fn same_layout(&self, other: &ParamTree) -> bool {
        self.leaves.len() == other.leaves.len()
            && self
                .leaves
                .iter()
                .zip(other.leaves.iter())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// Leaf-wise soft update `self <- (1 - tau) * self + tau * online`.
    pub fn polyak_from(&mut self, online: &ParamTree, tau: f64) -> Result<()> {
        if !self.same_layout(online) {
            return Err(Error::Shape(
                "polyak update requires identical parameter layouts".into(),
            ));
        }
        for (t, o) in self.leaves.iter_mut().zip(online.leaves.iter()) {
            for (tv, &ov) in t.values.iter_mut().zip(&o.values) {
                *tv = (1.0 - tau) * *tv + tau * ov;
            }
        }
        Ok(())
    }
}
