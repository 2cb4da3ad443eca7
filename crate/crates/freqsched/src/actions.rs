//! Per-sub-band action set and joint action encoding.
//!
//! A branch action is a subset of users (size 1..=M, optionally the empty
//! set) transmitted together on one sub-band. The joint action assigns one
//! branch action per sub-band; its index tuple is what the schedulers emit.

use crate::error::Error;
use crate::Result;

/// Ordered table of the per-sub-band user subsets.
///
/// Ordering is deterministic: by subset size, then lexicographic. The same
/// `(n_users, max_coscheduled, include_empty)` triple always yields the
/// identical table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchActionTable {
    subsets: Vec<Vec<usize>>,
    n_users: usize,
    max_coscheduled: usize,
    include_empty: bool,
}

impl BranchActionTable {
    /// Number of actions per sub-band (`N_a`).
    pub fn n_actions(&self) -> usize {
        self.subsets.len()
    }

    /// Users of the given branch action.
    pub fn subset(&self, index: usize) -> Result<&[usize]> {
        self.subsets
            .get(index)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Decode(format!("branch action index {index} out of range")))
    }

    /// All subsets in table order.
    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    /// Index of a user subset (sorted ascending), if present.
    pub fn index_of(&self, subset: &[usize]) -> Option<usize> {
        self.subsets.iter().position(|s| s.as_slice() == subset)
    }

    /// Index of the empty subset, if the table includes one.
    pub fn empty_index(&self) -> Option<usize> {
        self.include_empty.then_some(0)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn max_coscheduled(&self) -> usize {
        self.max_coscheduled
    }
}

/// Joint schedule decision: one branch action index per sub-band.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleAction {
    pub branch_indices: Vec<usize>,
}

impl ScheduleAction {
    pub fn new(branch_indices: Vec<usize>) -> Self {
        Self { branch_indices }
    }

    pub fn n_subbands(&self) -> usize {
        self.branch_indices.len()
    }
}

/// Enumerates the per-sub-band action set.
///
/// The subset size runs from 1 to `min(max_coscheduled, n_users)`; the empty
/// subset is prepended when `include_empty` is set.
pub fn enumerate_actions(
    n_users: usize,
    max_coscheduled: usize,
    include_empty: bool,
) -> Result<BranchActionTable> {
    if n_users == 0 {
        return Err(Error::Config("n_users must be at least 1".into()));
    }
    if max_coscheduled == 0 || max_coscheduled > n_users {
        return Err(Error::Config(format!(
            "max_coscheduled must satisfy 1 <= M <= n_users, got M={max_coscheduled}, n_users={n_users}"
        )));
    }
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    if include_empty {
        subsets.push(Vec::new());
    }
    for size in 1..=max_coscheduled.min(n_users) {
        push_combinations(n_users, size, &mut subsets);
    }
    Ok(BranchActionTable {
        subsets,
        n_users,
        max_coscheduled,
        include_empty,
    })
}

/// Appends all `size`-subsets of `0..n` in lexicographic order.
fn push_combinations(n: usize, size: usize, out: &mut Vec<Vec<usize>>) {
    let mut current = Vec::with_capacity(size);
    fn rec(n: usize, size: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(n, size, i + 1, current, out);
            current.pop();
        }
    }
    rec(n, size, 0, &mut current, out);
}

/// Decodes a joint action into the per-sub-band user subsets.
pub fn decode(action: &ScheduleAction, table: &BranchActionTable) -> Result<Vec<Vec<usize>>> {
    action
        .branch_indices
        .iter()
        .map(|&i| table.subset(i).map(<[usize]>::to_vec))
        .collect()
}

/// Upper bound on the joint actions the oracle is allowed to enumerate.
pub const JOINT_ACTION_GUARD: u64 = 10_000_000;

/// Iterates every joint action exactly once, in lexicographic order of the
/// index tuple (sub-band 0 is the most significant digit).
///
/// Guarded: `N_a^{N_s}` must not exceed [`JOINT_ACTION_GUARD`].
pub fn iter_joint_actions(
    table: &BranchActionTable,
    n_subbands: usize,
) -> Result<JointActionIter> {
    let n_actions = table.n_actions() as u64;
    let mut total: u64 = 1;
    for _ in 0..n_subbands {
        total = total
            .checked_mul(n_actions)
            .filter(|&t| t <= JOINT_ACTION_GUARD)
            .ok_or_else(|| {
                Error::Size(format!(
                    "{} joint actions exceed the enumeration guard of {}",
                    format_pow(table.n_actions(), n_subbands),
                    JOINT_ACTION_GUARD
                ))
            })?;
    }
    Ok(JointActionIter {
        n_actions: table.n_actions(),
        indices: vec![0; n_subbands],
        remaining: total,
    })
}

fn format_pow(base: usize, exp: usize) -> String {
    format!("{base}^{exp}")
}

/// Odometer over branch index tuples; the last sub-band increments fastest.
pub struct JointActionIter {
    n_actions: usize,
    indices: Vec<usize>,
    remaining: u64,
}

impl Iterator for JointActionIter {
    type Item = ScheduleAction;

    fn next(&mut self) -> Option<ScheduleAction> {
        if self.remaining == 0 {
            return None;
        }
        let action = ScheduleAction::new(self.indices.clone());
        self.remaining -= 1;
        for pos in (0..self.indices.len()).rev() {
            self.indices[pos] += 1;
            if self.indices[pos] < self.n_actions {
                break;
            }
            self.indices[pos] = 0;
        }
        Some(action)
    }
}
