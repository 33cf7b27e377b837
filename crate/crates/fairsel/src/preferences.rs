//! Candidates, groups, strict preference lists, and the Kendall-Tau
//! machinery used by the swapping bias model.

use thiserror::Error;

/// Identifies a candidate by its index in `[0, m)`.
///
/// The index is stable for the lifetime of a run and is used everywhere a
/// deterministic tie-break is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CandidateId(pub usize);

impl CandidateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for CandidateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreferenceError {
    #[error("candidate c{0} out of range for {1} candidates")]
    CandidateOutOfRange(usize, usize),
    #[error("order of length {0} is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("candidate counts differ: {0} vs {1}")]
    MismatchedCandidateCount(usize, usize),
    #[error("group partition covers {0} candidates, expected {1}")]
    PartitionSizeMismatch(usize, usize),
    #[error("a profile needs at least one voter")]
    EmptyProfile,
}

/// The advantaged (`G1`) / disadvantaged (`G2`) side of the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// G1 in the bias models: candidates never penalized.
    Advantaged,
    /// G2: candidates subject to the bias transformation.
    Disadvantaged,
}

/// A two-group partition of the candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    membership: Vec<Group>,
}

impl GroupPartition {
    pub fn new(membership: Vec<Group>) -> Self {
        GroupPartition { membership }
    }

    /// Builds a partition from the set of disadvantaged candidate indices.
    pub fn from_disadvantaged(m: usize, disadvantaged: &[usize]) -> Result<Self, PreferenceError> {
        let mut membership = vec![Group::Advantaged; m];
        for &c in disadvantaged {
            if c >= m {
                return Err(PreferenceError::CandidateOutOfRange(c, m));
            }
            membership[c] = Group::Disadvantaged;
        }
        Ok(GroupPartition { membership })
    }

    pub fn len(&self) -> usize {
        self.membership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membership.is_empty()
    }

    pub fn group_of(&self, c: CandidateId) -> Result<Group, PreferenceError> {
        self.membership
            .get(c.0)
            .copied()
            .ok_or(PreferenceError::CandidateOutOfRange(c.0, self.membership.len()))
    }

    pub fn is_disadvantaged(&self, c: CandidateId) -> bool {
        matches!(self.membership.get(c.0), Some(Group::Disadvantaged))
    }

    pub fn members(&self, group: Group) -> Vec<CandidateId> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == group)
            .map(|(i, _)| CandidateId(i))
            .collect()
    }

    pub fn advantaged(&self) -> Vec<CandidateId> {
        self.members(Group::Advantaged)
    }

    pub fn disadvantaged(&self) -> Vec<CandidateId> {
        self.members(Group::Disadvantaged)
    }

    pub fn disadvantaged_count(&self) -> usize {
        self.membership
            .iter()
            .filter(|g| matches!(g, Group::Disadvantaged))
            .count()
    }

    pub fn advantaged_count(&self) -> usize {
        self.len() - self.disadvantaged_count()
    }
}

/// A strict total order over `m` candidates.
///
/// `order` lists candidates from rank 1 downward; `position` is the inverse
/// map, reporting 1-based ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceList {
    order: Vec<CandidateId>,
    position: Vec<usize>,
}

impl PreferenceList {
    pub fn new(order: Vec<CandidateId>) -> Result<Self, PreferenceError> {
        let m = order.len();
        let mut position = vec![0usize; m];
        for (rank0, c) in order.iter().enumerate() {
            if c.0 >= m {
                return Err(PreferenceError::CandidateOutOfRange(c.0, m));
            }
            if position[c.0] != 0 {
                return Err(PreferenceError::NotAPermutation(m));
            }
            position[c.0] = rank0 + 1;
        }
        Ok(PreferenceList { order, position })
    }

    /// Convenience constructor from raw candidate indices.
    pub fn from_indices(order: &[usize]) -> Result<Self, PreferenceError> {
        Self::new(order.iter().map(|&i| CandidateId(i)).collect())
    }

    /// The identity list `(c0, c1, ..., c_{m-1})`.
    pub fn identity(m: usize) -> Self {
        PreferenceList {
            order: (0..m).map(CandidateId).collect(),
            position: (1..=m).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[CandidateId] {
        &self.order
    }

    /// Candidate at the given 1-based rank.
    pub fn candidate_at(&self, rank: usize) -> Option<CandidateId> {
        self.order.get(rank - 1).copied()
    }

    /// 1-based rank of `c`.
    pub fn position(&self, c: CandidateId) -> Result<usize, PreferenceError> {
        self.position
            .get(c.0)
            .copied()
            .ok_or(PreferenceError::CandidateOutOfRange(c.0, self.m()))
    }

    /// Swaps the candidates at two 1-based positions.
    pub(crate) fn swap_positions(&mut self, i: usize, j: usize) {
        let (a, b) = (self.order[i - 1], self.order[j - 1]);
        self.order.swap(i - 1, j - 1);
        self.position[a.0] = j;
        self.position[b.0] = i;
    }
}

/// Number of discordant candidate pairs between two lists over the same
/// candidates. Counted by merge-sort inversion counting in O(m log m).
pub fn kendall_tau(a: &PreferenceList, b: &PreferenceList) -> Result<u64, PreferenceError> {
    if a.m() != b.m() {
        return Err(PreferenceError::MismatchedCandidateCount(a.m(), b.m()));
    }
    // Relabel b's order by each candidate's rank in a; discordant pairs are
    // exactly the inversions of that sequence.
    let seq: Vec<usize> = b.order.iter().map(|&c| a.position[c.0]).collect();
    Ok(count_inversions(seq))
}

fn count_inversions(mut seq: Vec<usize>) -> u64 {
    let mut buf = vec![0usize; seq.len()];
    merge_count(&mut seq, &mut buf)
}

fn merge_count(seq: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = seq.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = seq.split_at_mut(mid);
    let mut inv = merge_count(left, &mut buf[..mid]) + merge_count(right, &mut buf[mid..]);
    let (mut i, mut j) = (0, 0);
    for slot in buf[..n].iter_mut() {
        if i < left.len() && (j >= right.len() || left[i] <= right[j]) {
            *slot = left[i];
            i += 1;
        } else {
            inv += (left.len() - i) as u64;
            *slot = right[j];
            j += 1;
        }
    }
    seq.copy_from_slice(&buf[..n]);
    inv
}

/// The unique list that ranks every advantaged candidate before every
/// disadvantaged one while preserving the input's order within each group.
pub fn group_sorted_target(
    list: &PreferenceList,
    g: &GroupPartition,
) -> Result<PreferenceList, PreferenceError> {
    check_partition(list, g)?;
    let mut order = Vec::with_capacity(list.m());
    order.extend(list.order.iter().filter(|c| !g.is_disadvantaged(**c)));
    order.extend(list.order.iter().filter(|c| g.is_disadvantaged(**c)));
    PreferenceList::new(order)
}

/// Maximum number of admissible swaps: the count of (advantaged, disadvantaged)
/// pairs where the disadvantaged candidate is ranked above the advantaged one.
///
/// Equals `kendall_tau(list, group_sorted_target(list, g))`.
pub fn t_max(list: &PreferenceList, g: &GroupPartition) -> Result<u64, PreferenceError> {
    check_partition(list, g)?;
    let mut disadvantaged_seen = 0u64;
    let mut count = 0u64;
    for c in &list.order {
        if g.is_disadvantaged(*c) {
            disadvantaged_seen += 1;
        } else {
            count += disadvantaged_seen;
        }
    }
    Ok(count)
}

fn check_partition(list: &PreferenceList, g: &GroupPartition) -> Result<(), PreferenceError> {
    if g.len() != list.m() {
        return Err(PreferenceError::PartitionSizeMismatch(g.len(), list.m()));
    }
    Ok(())
}

/// A profile of `n` preference lists over the same `m` candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    m: usize,
    lists: Vec<PreferenceList>,
}

impl Profile {
    pub fn new(lists: Vec<PreferenceList>) -> Result<Self, PreferenceError> {
        let m = match lists.first() {
            Some(list) => list.m(),
            None => return Err(PreferenceError::EmptyProfile),
        };
        for list in &lists {
            if list.m() != m {
                return Err(PreferenceError::MismatchedCandidateCount(m, list.m()));
            }
        }
        Ok(Profile { m, lists })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.lists.len()
    }

    pub fn lists(&self) -> &[PreferenceList] {
        &self.lists
    }
}
