//! Prioritized experience replay: sum-tree proportional sampling with
//! importance weights, and a two-phase commit so an experience can be
//! reserved when the action is taken and completed later when the reward
//! and next state arrive.

use rand::Rng;

use crate::actions::ScheduleAction;
use crate::error::Error;
use crate::Result;

/// Priority floor added to |TD| so no committed experience starves.
pub const PRIORITY_EPSILON: f64 = 1e-3;

/// Binary sum tree over leaf priorities (already raised to alpha).
///
/// The leaf count is padded to a power of two; every internal node holds
/// the sum of its children.
#[derive(Debug, Clone)]
pub struct SumTree {
    n_leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let n_leaves = capacity.next_power_of_two().max(1);
        Self {
            n_leaves,
            nodes: vec![0.0; 2 * n_leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn leaf(&self, index: usize) -> f64 {
        self.nodes[self.n_leaves + index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        debug_assert!(index < self.n_leaves);
        let mut node = self.n_leaves + index;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf index whose cumulative-mass interval contains `mass`.
    pub fn descend(&self, mass: f64) -> usize {
        let mut mass = mass.clamp(0.0, self.total());
        let mut node = 1;
        while node < self.n_leaves {
            let left = 2 * node;
            if mass <= self.nodes[left] && self.nodes[left] > 0.0 {
                node = left;
            } else {
                mass -= self.nodes[left];
                node = left + 1;
            }
        }
        node - self.n_leaves
    }

    /// Verifies every internal node against the sum of its children.
    pub fn is_consistent(&self, tol: f64) -> bool {
        (1..self.n_leaves)
            .all(|n| (self.nodes[n] - (self.nodes[2 * n] + self.nodes[2 * n + 1])).abs() <= tol)
    }
}

/// One stored transition. The reward and next-state features arrive at
/// commit time.
#[derive(Debug, Clone)]
pub struct Experience {
    pub features: Vec<Vec<f64>>,
    pub action: ScheduleAction,
    pub reward: Option<f64>,
    pub next_features: Option<Vec<Vec<f64>>>,
    /// Raw priority (before the alpha exponent); zero until committed.
    pub priority: f64,
}

/// Handle returned by [`ReplayBuffer::reserve`]; required to commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ticket {
    slot: usize,
    generation: u64,
}

/// Ring buffer of experiences with proportional prioritized sampling.
pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    slots: Vec<Option<Experience>>,
    generations: Vec<u64>,
    tree: SumTree,
    next_slot: usize,
    n_committed: usize,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            alpha,
            slots: vec![None; capacity],
            generations: vec![0; capacity],
            tree: SumTree::new(capacity),
            next_slot: 0,
            n_committed: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of committed (sampleable) experiences.
    pub fn n_committed(&self) -> usize {
        self.n_committed
    }

    pub fn experience(&self, index: usize) -> Option<&Experience> {
        self.slots.get(index).and_then(Option::as_ref)
    }

    /// Allocates a slot for `(features, action)`. The entry is not
    /// sampleable until committed; the displaced entry (ring order) is
    /// evicted.
    pub fn reserve(&mut self, features: Vec<Vec<f64>>, action: ScheduleAction) -> Ticket {
        let slot = self.next_slot;
        self.next_slot = (self.next_slot + 1) % self.capacity;
        if let Some(old) = &self.slots[slot] {
            if old.reward.is_some() {
                self.n_committed -= 1;
            }
        }
        self.generations[slot] += 1;
        self.slots[slot] = Some(Experience {
            features,
            action,
            reward: None,
            next_features: None,
            priority: 0.0,
        });
        self.tree.set(slot, 0.0);
        Ticket {
            slot,
            generation: self.generations[slot],
        }
    }

    /// Completes a reserved entry, making it sampleable at the running
    /// maximum priority (1.0 for the first commit).
    pub fn commit(
        &mut self,
        ticket: Ticket,
        reward: f64,
        next_features: Option<Vec<Vec<f64>>>,
    ) -> Result<()> {
        if ticket.slot >= self.capacity || self.generations[ticket.slot] != ticket.generation {
            return Err(Error::Ticket("ticket expired or unknown".into()));
        }
        let entry = self.slots[ticket.slot]
            .as_mut()
            .ok_or_else(|| Error::Ticket("ticket points at an empty slot".into()))?;
        if entry.reward.is_some() {
            return Err(Error::Ticket("ticket already committed".into()));
        }
        entry.reward = Some(reward);
        entry.next_features = next_features;
        entry.priority = self.max_priority;
        let weight = entry.priority.powf(self.alpha);
        self.tree.set(ticket.slot, weight);
        self.n_committed += 1;
        Ok(())
    }

    /// Samples `batch_size` committed indices proportionally to
    /// `priority^alpha` (stratified over equal mass segments), returning
    /// importance weights normalized so the largest is exactly 1.
    pub fn sample(
        &self,
        batch_size: usize,
        beta: f64,
        rng: &mut impl Rng,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.n_committed < batch_size {
            return Err(Error::Underflow(format!(
                "need {batch_size} committed experiences, have {}",
                self.n_committed
            )));
        }
        let total = self.tree.total();
        debug_assert!(total > 0.0);
        let segment = total / batch_size as f64;
        let indices: Vec<usize> = (0..batch_size)
            .map(|i| {
                let mass = segment * (i as f64 + rng.gen::<f64>());
                // Exclusive upper edge keeps the descent off zero leaves.
                self.tree.descend(mass.min(total * (1.0 - 1e-12)))
            })
            .collect();
        let n = self.n_committed as f64;
        let mut weights: Vec<f64> = indices
            .iter()
            .map(|&i| {
                let p = self.tree.leaf(i) / total;
                (n * p).powf(-beta)
            })
            .collect();
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in weights.iter_mut() {
            *w /= max_w;
        }
        Ok((indices, weights))
    }

    /// Updates priorities to `|td| + epsilon` for the given indices.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        debug_assert_eq!(indices.len(), td_errors.len());
        for (&i, &td) in indices.iter().zip(td_errors) {
            let entry = self
                .slots
                .get_mut(i)
                .and_then(Option::as_mut)
                .filter(|e| e.reward.is_some())
                .ok_or_else(|| Error::Index(format!("index {i} is not a committed entry")))?;
            let p = td.abs() + PRIORITY_EPSILON;
            entry.priority = p;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
        Ok(())
    }

    /// Sum-tree invariant check, exposed for tests and the acceptance
    /// suite.
    pub fn tree_consistent(&self) -> bool {
        let leaf_sum: f64 = (0..self.capacity).map(|i| self.tree.leaf(i)).sum();
        self.tree.is_consistent(1e-9) && (self.tree.total() - leaf_sum).abs() <= 1e-9
    }
}
