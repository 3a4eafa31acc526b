//! Label bookkeeping for partition-valued (CRP-style) assignments.
//!
//! Cluster labels are kept compact and in order of first appearance, so two
//! assignments describing the same partition are equal as vectors. When a
//! variable is being re-assigned, its candidate values are expressed in the
//! *reduced* labelling of the other variables: the occupied clusters with the
//! variable removed, followed by one fresh label.

use crate::model::CanonicalKey;

/// Relabels clusters by order of first appearance.
pub fn relabel_first_appearance(labels: &[usize]) -> Vec<usize> {
    let (relabeled, _) = relabel_with_map(labels);
    relabeled
}

/// First-appearance relabelling together with the old-to-new label map
/// (`usize::MAX` for labels that do not occur).
pub fn relabel_with_map(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let width = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut map = vec![usize::MAX; width];
    let mut next = 0;
    let relabeled = labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect();
    (relabeled, map)
}

/// Canonical key of a partition-valued assignment.
pub fn partition_key(labels: &[usize]) -> CanonicalKey {
    CanonicalKey::from_values(&relabel_first_appearance(labels))
}

/// Number of clusters in a compact labelling.
pub fn num_clusters(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1)
}

/// Restricted-growth arity: the next label may reuse any existing label or
/// open exactly one new one.
pub fn restricted_growth_arity(prefix: &[usize]) -> usize {
    num_clusters(prefix) + 1
}

/// Bell number B(n): the number of partitions of n items (saturating).
pub fn bell_number(n: usize) -> u128 {
    // Bell triangle.
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().expect("non-empty row"));
        for &v in &row {
            let last = *next.last().expect("non-empty row");
            next.push(last.saturating_add(v));
        }
        row = next;
    }
    row[0]
}

/// Reduced labelling of one variable's candidate values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Removal {
    /// Current label of the variable.
    pub own: usize,
    /// Whether the variable is alone in its cluster.
    pub singleton: bool,
    /// Occupied clusters including the variable's own.
    pub num_clusters: usize,
}

impl Removal {
    pub fn new(own: usize, own_size: usize, num_clusters: usize) -> Self {
        debug_assert!(own_size >= 1 && own < num_clusters);
        Removal {
            own,
            singleton: own_size == 1,
            num_clusters,
        }
    }

    /// Occupied clusters once the variable is removed.
    pub fn remaining(&self) -> usize {
        if self.singleton {
            self.num_clusters - 1
        } else {
            self.num_clusters
        }
    }

    /// Candidate count: remaining clusters plus one fresh label.
    pub fn support(&self) -> usize {
        self.remaining() + 1
    }

    /// Whether reduced value `m` is the fresh label.
    pub fn is_new(&self, m: usize) -> bool {
        m == self.remaining()
    }

    /// Maps a reduced value to a label in the current labelling. The fresh
    /// label reuses the variable's own label when it is a singleton.
    pub fn original(&self, m: usize) -> usize {
        debug_assert!(m < self.support());
        if self.singleton {
            if m < self.own {
                m
            } else if m < self.remaining() {
                m + 1
            } else {
                self.own
            }
        } else {
            m
        }
    }

    /// Whether reduced value `m` leaves the partition unchanged.
    pub fn is_unchanged(&self, m: usize) -> bool {
        self.original(m) == self.own
    }
}
