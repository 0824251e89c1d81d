use std::collections::HashMap;

use super::ProjectionConfig;
use crate::embedding::{dot_naive, VectorStore};

/// Disjoint control sets over vector positions. Documents outside every
/// set are unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlPartition {
    set_of: HashMap<usize, usize>,
    sets: usize,
}

impl ControlPartition {
    /// Builds a partition from control groups in edge order. A document
    /// claimed by more than one group stays with the first; the returned
    /// list names every such document once.
    pub fn resolve(groups: &[Vec<usize>]) -> (Self, Vec<usize>) {
        let mut set_of = HashMap::new();
        let mut overlapping = Vec::new();
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                match set_of.get(&m) {
                    None => {
                        set_of.insert(m, g);
                    }
                    Some(&first) if first != g && !overlapping.contains(&m) => overlapping.push(m),
                    Some(_) => {}
                }
            }
        }
        (
            ControlPartition {
                set_of,
                sets: groups.len(),
            },
            overlapping,
        )
    }

    pub fn is_empty(&self) -> bool {
        self.set_of.is_empty()
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }

    pub fn set_of(&self, pos: usize) -> Option<usize> {
        self.set_of.get(&pos).copied()
    }
}

/// Cosine distance between two stored vectors, clamped to [0, 2].
pub fn base_distance(a: usize, b: usize, vectors: &VectorStore) -> f64 {
    if a == b {
        return 0.0;
    }
    (1.0 - dot_naive(vectors.get(a), vectors.get(b))).clamp(0.0, 2.0)
}

/// Distance with control groups pulled together and pushed apart.
pub fn constrained_distance(
    a: usize,
    b: usize,
    partition: &ControlPartition,
    vectors: &VectorStore,
    config: &ProjectionConfig,
) -> f64 {
    if a == b {
        return 0.0;
    }
    match (partition.set_of(a), partition.set_of(b)) {
        (Some(x), Some(y)) if x == y => config.d_same,
        (Some(_), Some(_)) => config.d_diff,
        _ => base_distance(a, b, vectors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use proptest::prelude::*;

    fn store() -> VectorStore {
        let texts = ["wifi password", "netflix login", "garden hose", "mom reads my texts", "wifi bill"];
        VectorStore::build(&HashingEmbedder::default(), texts.iter().copied(), 8).unwrap()
    }

    fn naive_cosine_distance(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        1.0 - dot / (na * nb)
    }

    #[test]
    fn examples() {
        let s = store();
        let cfg = ProjectionConfig::default();
        let (p, overlap) = ControlPartition::resolve(&[vec![0, 1], vec![2]]);
        assert!(overlap.is_empty());
        assert_eq!(constrained_distance(0, 1, &p, &s, &cfg), 1e-4);
        assert_eq!(constrained_distance(0, 2, &p, &s, &cfg), 2.0);
        let d = constrained_distance(0, 3, &p, &s, &cfg);
        assert!((d - naive_cosine_distance(s.get(0), s.get(3))).abs() < 1e-9);
    }

    #[test]
    fn overlap_first_group_wins() {
        let (p, overlap) = ControlPartition::resolve(&[vec![0, 1], vec![1, 2], vec![1]]);
        assert_eq!(p.set_of(1), Some(0));
        assert_eq!(p.set_of(2), Some(1));
        assert_eq!(overlap, vec![1]);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_base_when_unconstrained(
            groups in proptest::collection::vec(proptest::collection::vec(0usize..5, 0..4), 0..3),
            a in 0usize..5,
            b in 0usize..5,
        ) {
            let s = store();
            let cfg = ProjectionConfig::default();
            let (p, _) = ControlPartition::resolve(&groups);
            let d = constrained_distance(a, b, &p, &s, &cfg);
            prop_assert_eq!(d, constrained_distance(b, a, &p, &s, &cfg));
            prop_assert!((0.0..=2.0).contains(&d));
            let empty = ControlPartition::default();
            prop_assert_eq!(constrained_distance(a, b, &empty, &s, &cfg), base_distance(a, b, &s));
        }
    }
}
