//! Semi-supervised structuring of a document set: a group-constrained
//! metric, a neighbor-graph embedding into a few dimensions and density
//! clustering of the result.

mod ari;
mod hdbscan;
mod layout;
mod metric;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ari::adjusted_rand_index;
pub use hdbscan::cluster_labels;
pub use layout::{fit_curve, Coordinates};
pub use metric::{base_distance, constrained_distance, ControlPartition};

use crate::embedding::VectorStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub n_neighbors: usize,
    pub target_dims: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_samples: Option<usize>,
    pub d_same: f64,
    pub d_diff: f64,
    /// Layout seed; the workspace seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            n_neighbors: 15,
            target_dims: 5,
            min_dist: 0.1,
            spread: 1.0,
            epochs: 200,
            negative_sample_rate: 5,
            min_cluster_size: 10,
            min_samples: None,
            d_same: 1e-4,
            d_diff: 2.0,
            seed: None,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_neighbors < 2 {
            return Err("n_neighbors must be at least 2".into());
        }
        if self.target_dims < 2 {
            return Err("target_dims must be at least 2".into());
        }
        if !(0.0 <= self.d_same && self.d_same < self.d_diff && self.d_diff <= 2.0) {
            return Err("need 0 <= d_same < d_diff <= 2".into());
        }
        if !(self.spread > 0.0 && self.min_dist >= 0.0 && self.min_dist.is_finite() && self.spread.is_finite()) {
            return Err("need spread > 0 and min_dist >= 0".into());
        }
        if self.epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        if self.min_cluster_size < 2 {
            return Err("min_cluster_size must be at least 2".into());
        }
        if self.min_samples == Some(0) {
            return Err("min_samples must be at least 1".into());
        }
        Ok(())
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("projection needs more than {} documents, got {have}", need - 1)]
    TooFewDocs { have: usize, need: usize },
    #[error("invalid projection config: {0}")]
    InvalidConfig(String),
    #[error("projection cancelled")]
    Cancelled,
}

/// Shared flag a running projection polls between epochs.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Cancellation and progress hooks for a projection run.
#[derive(Default, Clone, Copy)]
pub struct Job<'a> {
    pub cancel: Option<&'a CancelToken>,
    /// Called with (epochs done, total epochs).
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

impl Job<'_> {
    fn check(&self) -> Result<(), ProjectionError> {
        match self.cancel {
            Some(t) if t.is_cancelled() => Err(ProjectionError::Cancelled),
            _ => Ok(()),
        }
    }

    fn report(&self, done: usize, total: usize) {
        if let Some(p) = self.progress {
            p(done, total);
        }
    }
}

/// Lays out the `source` vector positions (sorted and deduplicated) under
/// the constrained metric.
pub fn reduce(
    source: &[usize],
    partition: &ControlPartition,
    vectors: &VectorStore,
    config: &ProjectionConfig,
    seed: u64,
    job: &Job<'_>,
) -> Result<Coordinates, ProjectionError> {
    config.validate().map_err(ProjectionError::InvalidConfig)?;
    let mut points = source.to_vec();
    points.sort_unstable();
    points.dedup();
    let dist = |i: usize, j: usize| constrained_distance(points[i], points[j], partition, vectors, config);
    let values = layout::layout(points.len(), &dist, config, seed, job)?;
    Ok(Coordinates {
        dims: config.target_dims,
        points,
        values,
    })
}

/// Clusters as vector positions, largest first, members in ingest order;
/// ties in size go to the cluster with the earliest member.
pub fn cluster(coords: &Coordinates, config: &ProjectionConfig) -> (Vec<Vec<usize>>, Vec<usize>) {
    let labels = cluster_labels(&coords.values, coords.dims, config.min_cluster_size, config.min_samples());
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters = vec![Vec::new(); count];
    let mut noise = Vec::new();
    for (&p, l) in coords.points.iter().zip(&labels) {
        match l {
            Some(c) => clusters[*c].push(p),
            None => noise.push(p),
        }
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    (clusters, noise)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
    pub coordinates: Coordinates,
    /// Documents claimed by several control groups; each stays with the
    /// first group that claimed it.
    pub overlapping: Vec<usize>,
}

/// Reduces and clusters `source` with `control_groups` (vector positions,
/// in edge order) steering the metric.
pub fn project(
    source: &[usize],
    control_groups: &[Vec<usize>],
    vectors: &VectorStore,
    config: &ProjectionConfig,
    seed: u64,
    job: &Job<'_>,
) -> Result<Projection, ProjectionError> {
    let in_source: std::collections::HashSet<usize> = source.iter().copied().collect();
    let groups: Vec<Vec<usize>> = control_groups
        .iter()
        .map(|g| g.iter().copied().filter(|p| in_source.contains(p)).collect())
        .collect();
    let (partition, overlapping) = ControlPartition::resolve(&groups);
    let coordinates = reduce(source, &partition, vectors, config, seed, job)?;
    let (clusters, noise) = cluster(&coordinates, config);
    Ok(Projection {
        clusters,
        noise,
        coordinates,
        overlapping,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use crate::synthetic::planted_themes;

    fn planted(seed: u64) -> (VectorStore, Vec<usize>) {
        let p = planted_themes(3, 50, seed);
        let store = VectorStore::build(&HashingEmbedder::default(), p.texts(), 64).unwrap();
        (store, p.labels)
    }

    #[test]
    fn config_defaults_and_validation() {
        let c: ProjectionConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ProjectionConfig::default());
        assert_eq!(c.min_samples(), 10);
        assert!(ProjectionConfig { d_same: 2.0, ..c.clone() }.validate().is_err());
        assert!(ProjectionConfig { target_dims: 1, ..c.clone() }.validate().is_err());
        assert!(ProjectionConfig { n_neighbors: 1, ..c }.validate().is_err());
    }

    #[test]
    fn too_few_docs() {
        let (store, _) = planted(1);
        let src: Vec<usize> = (0..15).collect();
        let r = project(&src, &[], &store, &ProjectionConfig::default(), 1, &Job::default());
        assert!(matches!(r, Err(ProjectionError::TooFewDocs { have: 15, .. })));
    }

    #[test]
    fn output_partitions_the_source() {
        let (store, _) = planted(2);
        let src: Vec<usize> = (0..150).rev().collect();
        let p = project(&src, &[], &store, &ProjectionConfig::default(), 5, &Job::default()).unwrap();
        let mut all: Vec<usize> = p.clusters.iter().flatten().chain(&p.noise).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..150).collect::<Vec<_>>());
        for w in p.clusters.windows(2) {
            assert!(w[0].len() >= w[1].len());
        }
        for c in &p.clusters {
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn themes_separate_in_layout() {
        let (store, labels) = planted(3);
        let src: Vec<usize> = (0..150).collect();
        let groups = vec![
            (0..150).filter(|&i| labels[i] == 0).take(10).collect::<Vec<_>>(),
            (0..150).filter(|&i| labels[i] == 1).take(10).collect::<Vec<_>>(),
        ];
        let (partition, _) = ControlPartition::resolve(&groups);
        let c = reduce(&src, &partition, &store, &ProjectionConfig::default(), 9, &Job::default()).unwrap();
        let dist = |i: usize, j: usize| -> f64 {
            c.row(i).iter().zip(c.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for i in 0..150 {
            for j in i + 1..150 {
                if labels[i] == labels[j] {
                    intra += dist(i, j);
                    ni += 1;
                } else {
                    inter += dist(i, j);
                    nx += 1;
                }
            }
        }
        assert!(intra / (ni as f64) < inter / (nx as f64));
    }

    #[test]
    fn progress_is_reported() {
        let (store, _) = planted(4);
        let src: Vec<usize> = (0..60).collect();
        let seen = std::sync::Mutex::new(Vec::new());
        let cb = |d: usize, t: usize| seen.lock().unwrap().push((d, t));
        let cfg = ProjectionConfig { epochs: 5, ..Default::default() };
        let job = Job { cancel: None, progress: Some(&cb) };
        reduce(&src, &ControlPartition::default(), &store, &cfg, 1, &job).unwrap();
        assert_eq!(seen.into_inner().unwrap(), vec![(1, 5), (2, 5), (3, 5), (4, 5), (5, 5)]);
    }
}
