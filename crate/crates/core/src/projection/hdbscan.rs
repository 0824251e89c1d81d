//! HDBSCAN* over Euclidean points: mutual reachability, minimum spanning
//! tree, condensed tree and excess-of-mass selection.
//!
//! Spanning-tree edges of equal weight are merged together, so the
//! hierarchy (and therefore the labeling) does not depend on which of
//! several equally light trees was found.

fn euclidean(points: &[f64], dims: usize, i: usize, j: usize) -> f64 {
    let (a, b) = (&points[i * dims..(i + 1) * dims], &points[j * dims..(j + 1) * dims]);
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance to the `min_samples`-th nearest point, the point itself
/// counted first.
pub(crate) fn core_distances(points: &[f64], dims: usize, min_samples: usize) -> Vec<f64> {
    let n = points.len() / dims;
    let k = min_samples.clamp(1, n.max(1));
    let row = |i: usize| {
        let mut d: Vec<f64> = (0..n).map(|j| euclidean(points, dims, i, j)).collect();
        let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
        *kth
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(row).collect()
    }
}

/// Prim's algorithm on the dense mutual-reachability graph.
fn spanning_tree(points: &[f64], dims: usize, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = core.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut link = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut cur = 0;
    for _ in 1..n {
        in_tree[cur] = true;
        let mut next = usize::MAX;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(points, dims, cur, j).max(core[cur]).max(core[j]);
            if d < best[j] {
                best[j] = d;
                link[j] = cur;
            }
            if next == usize::MAX || best[j] < best[next] {
                next = j;
            }
        }
        edges.push((link[next], next, best[next]));
        cur = next;
    }
    edges
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Node of the single-linkage hierarchy. Ids below `n` are points.
struct Merge {
    children: Vec<usize>,
    size: usize,
    level: f64,
}

fn single_linkage(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut nodes: Vec<Merge> = (0..n)
        .map(|_| Merge {
            children: Vec::new(),
            size: 1,
            level: 0.0,
        })
        .collect();
    let mut uf = UnionFind((0..n).collect());
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut start = 0;
    while start < edges.len() {
        let level = edges[start].2;
        let end = start + edges[start..].iter().take_while(|e| e.2 == level).count();
        let mut before: Vec<(usize, usize)> = Vec::new();
        for &(a, b, _) in &edges[start..end] {
            for x in [a, b] {
                let r = uf.find(x);
                if !before.iter().any(|&(old, _)| old == r) {
                    before.push((r, node_of[r]));
                }
            }
        }
        for &(a, b, _) in &edges[start..end] {
            uf.union(a, b);
        }
        let mut merged: Vec<(usize, Vec<usize>)> = Vec::new();
        for &(old, node) in &before {
            let root = uf.find(old);
            match merged.iter_mut().find(|(r, _)| *r == root) {
                Some((_, kids)) => kids.push(node),
                None => merged.push((root, vec![node])),
            }
        }
        for (root, mut kids) in merged {
            kids.sort_unstable();
            let size = kids.iter().map(|&k| nodes[k].size).sum();
            node_of[root] = nodes.len();
            nodes.push(Merge { children: kids, size, level });
        }
        start = end;
    }
    nodes
}

struct Cluster {
    parent: Option<usize>,
    birth: f64,
    size: usize,
    children: Vec<usize>,
    stability: f64,
}

fn lambda(level: f64) -> f64 {
    if level > 0.0 {
        1.0 / level
    } else {
        f64::INFINITY
    }
}

/// `a - b` with equal infinities giving zero.
fn span(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

fn leaves(nodes: &[Merge], n: usize, id: usize, out: &mut Vec<usize>) {
    let mut stack = vec![id];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            stack.extend(nodes[x].children.iter().copied());
        }
    }
}

/// Cluster label of every point, `None` for noise. Labels are numbered in
/// condensed-tree order.
pub fn cluster_labels(points: &[f64], dims: usize, min_cluster_size: usize, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len().checked_div(dims).unwrap_or(0);
    if n < 2 {
        return vec![None; n];
    }
    let mcs = min_cluster_size.max(2);
    let core = core_distances(points, dims, min_samples);
    let nodes = single_linkage(n, spanning_tree(points, dims, &core));

    let mut clusters = vec![Cluster {
        parent: None,
        birth: 0.0,
        size: n,
        children: Vec::new(),
        stability: 0.0,
    }];
    let mut fell_from = vec![0usize; n];
    let mut stack = vec![(nodes.len() - 1, 0usize)];
    let mut pts = Vec::new();
    while let Some((id, c)) = stack.pop() {
        let lam = lambda(nodes[id].level);
        let birth = clusters[c].birth;
        let big: Vec<usize> = nodes[id].children.iter().copied().filter(|&k| nodes[k].size >= mcs).collect();
        for &kid in nodes[id].children.iter().filter(|&&k| nodes[k].size < mcs) {
            pts.clear();
            leaves(&nodes, n, kid, &mut pts);
            for &p in &pts {
                fell_from[p] = c;
            }
            clusters[c].stability += pts.len() as f64 * span(lam, birth);
        }
        if big.len() == 1 {
            stack.push((big[0], c));
        } else if big.len() > 1 {
            for kid in big {
                let size = nodes[kid].size;
                let child = clusters.len();
                clusters.push(Cluster {
                    parent: Some(c),
                    birth: lam,
                    size,
                    children: Vec::new(),
                    stability: 0.0,
                });
                clusters[c].children.push(child);
                clusters[c].stability += size as f64 * span(lam, birth);
                stack.push((kid, child));
            }
        }
    }

    let m = clusters.len();
    let mut selected = vec![false; m];
    let mut best = vec![0.0; m];
    for c in (1..m).rev() {
        let kids = &clusters[c].children;
        if kids.is_empty() {
            selected[c] = true;
            best[c] = clusters[c].stability;
            continue;
        }
        let below: f64 = kids.iter().map(|&k| best[k]).sum();
        if below > clusters[c].stability {
            best[c] = below;
        } else {
            best[c] = clusters[c].stability;
            selected[c] = true;
            let mut st = kids.clone();
            while let Some(d) = st.pop() {
                selected[d] = false;
                st.extend(clusters[d].children.iter().copied());
            }
        }
    }

    let mut label_of = vec![None; m];
    let mut next = 0;
    for c in 1..m {
        if selected[c] {
            label_of[c] = Some(next);
            next += 1;
        }
    }
    debug_assert!(clusters.iter().all(|c| c.size >= mcs || c.parent.is_none()));
    fell_from
        .iter()
        .map(|&c| {
            let mut cur = Some(c);
            while let Some(x) = cur {
                if x == 0 {
                    return None;
                }
                if selected[x] {
                    return label_of[x];
                }
                cur = clusters[x].parent;
            }
            None
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use crate::synthetic::gaussian;

    #[test]
    fn two_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for center in [0.0, 100.0] {
            for _ in 0..30 {
                for _ in 0..5 {
                    pts.push(center + 0.5 * gaussian(&mut rng));
                }
            }
        }
        let labels = cluster_labels(&pts, 5, 10, 10);
        assert!(labels.iter().all(Option::is_some));
        assert!(labels[..30].iter().all(|l| *l == labels[0]));
        assert!(labels[30..].iter().all(|l| *l == labels[30]));
        assert_ne!(labels[0], labels[30]);
    }

    #[test]
    fn fewer_points_than_min_cluster_size_is_all_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<f64> = (0..9 * 5).map(|_| rng.gen()).collect();
        assert!(cluster_labels(&pts, 5, 10, 10).iter().all(Option::is_none));
        assert!(cluster_labels(&[], 5, 10, 10).is_empty());
        assert_eq!(cluster_labels(&[1.0, 2.0], 2, 10, 10), vec![None]);
    }

    #[test]
    fn core_distance_counts_the_point_itself() {
        let pts = [0.0, 1.0, 3.0, 7.0];
        assert_eq!(core_distances(&pts, 1, 1), vec![0.0; 4]);
        assert_eq!(core_distances(&pts, 1, 2), vec![1.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn equal_weights_merge_together() {
        let nodes = single_linkage(4, vec![(0, 1, 1.0), (2, 3, 1.0), (1, 2, 1.0)]);
        assert_eq!(nodes.len(), 5);
        assert_eq!(nodes[4].children, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_points_do_not_produce_nan() {
        let mut pts = vec![0.0; 12 * 2];
        pts.extend(std::iter::repeat_n(50.0, 12 * 2));
        let labels = cluster_labels(&pts, 2, 5, 5);
        assert_eq!(labels.len(), 24);
        assert_ne!(labels[0], labels[12]);
    }
}
