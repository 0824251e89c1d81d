use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Job, ProjectionConfig, ProjectionError};

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const BISECTION_STEPS: usize = 64;
const GRAD_CLIP: f64 = 4.0;
const INIT_RANGE: f64 = 10.0;

/// Low-dimensional coordinates, one row per projected document.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinates {
    pub dims: usize,
    /// Vector positions of the rows, ascending.
    pub points: Vec<usize>,
    pub values: Vec<f64>,
}

impl Coordinates {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    /// `doc_id,dim0,...` CSV with one line per row.
    pub fn to_csv<'a>(&self, doc_id: impl Fn(usize) -> &'a str) -> String {
        let mut out = String::from("doc_id");
        for d in 0..self.dims {
            out.push_str(&format!(",dim{d}"));
        }
        out.push('\n');
        for (i, &p) in self.points.iter().enumerate() {
            out.push_str(doc_id(p));
            for v in self.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the target membership
/// curve defined by `spread` and `min_dist`, by Levenberg-Marquardt.
pub fn fit_curve(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let cost = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut c = cost(a, b);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let u = if x > 0.0 { x.powf(2.0 * b) } else { 0.0 };
            let denom = 1.0 + a * u;
            let r = 1.0 / denom - y;
            let da = -u / (denom * denom);
            let db = if x > 0.0 { -a * u * 2.0 * x.ln() / (denom * denom) } else { 0.0 };
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (m00, m11) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m00 * m11 - jab * jab;
            let step_a = -(m11 * ga - jab * gb) / det;
            let step_b = -(m00 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let nc = if na > 0.0 && nb > 0.0 { cost(na, nb) } else { f64::INFINITY };
            if nc < c {
                let done = (c - nc) <= 1e-15 * c.max(1e-300) || (step_a.abs() + step_b.abs()) < 1e-14;
                a = na;
                b = nb;
                c = nc;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

/// Exact k nearest neighbors of every point, excluding the point itself,
/// nearest first with ties broken by index.
pub(crate) fn nearest_neighbors<D>(n: usize, k: usize, dist: &D) -> Vec<Vec<(usize, f64)>>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    let row = |i: usize| -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, dist(i, j))).collect();
        let order = |x: &(usize, f64), y: &(usize, f64)| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0));
        if k < all.len() {
            all.select_nth_unstable_by(k, order);
            all.truncate(k);
        }
        all.sort_unstable_by(order);
        all
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

/// Per-point (rho, sigma): distance to the nearest neighbor and the
/// bandwidth making the neighbor memberships sum to log2(k).
pub(crate) fn smooth_distances(knn: &[Vec<(usize, f64)>], k: usize) -> Vec<(f64, f64)> {
    let target = (k as f64).log2();
    let all_mean = {
        let (s, c) = knn.iter().flatten().fold((0.0, 0usize), |(s, c), x| (s + x.1, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    knn.iter()
        .map(|row| {
            let rho = row.first().map_or(0.0, |x| x.1);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..BISECTION_STEPS {
                let psum: f64 = row
                    .iter()
                    .map(|&(_, d)| {
                        let d = d - rho;
                        if d > 0.0 {
                            (-d / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi == f64::INFINITY { mid * 2.0 } else { (lo + hi) / 2.0 };
                }
            }
            let mean = row.iter().map(|x| x.1).sum::<f64>() / row.len().max(1) as f64;
            let floor = if rho > 0.0 { mean } else { all_mean } * MIN_K_DIST_SCALE;
            (rho, mid.max(floor))
        })
        .collect()
}

/// Symmetric fuzzy neighbor graph as directed edges `(head, tail, weight)`
/// sorted by `(head, tail)`, each undirected edge present in both
/// directions.
pub(crate) fn fuzzy_graph(knn: &[Vec<(usize, f64)>], smooth: &[(f64, f64)]) -> Vec<(usize, usize, f64)> {
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (i, row) in knn.iter().enumerate() {
        let (rho, sigma) = smooth[i];
        for &(j, d) in row {
            let w = if d - rho <= 0.0 || sigma == 0.0 {
                1.0
            } else {
                (-(d - rho) / sigma).exp()
            };
            let e = pairs.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                e.0 = w;
            } else {
                e.1 = w;
            }
        }
    }
    let mut edges = Vec::with_capacity(pairs.len() * 2);
    for (&(i, j), &(a, b)) in &pairs {
        let w = a + b - a * b;
        if w > 0.0 {
            edges.push((i, j, w));
            edges.push((j, i, w));
        }
    }
    edges.sort_unstable_by_key(|e| (e.0, e.1));
    edges
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Embeds `n` points given a pairwise distance into `config.target_dims`
/// dimensions. Row order of the result follows point order.
pub(crate) fn layout<D>(
    n: usize,
    dist: &D,
    config: &ProjectionConfig,
    seed: u64,
    job: &Job<'_>,
) -> Result<Vec<f64>, ProjectionError>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    let k = config.n_neighbors;
    if n <= k {
        return Err(ProjectionError::TooFewDocs { have: n, need: k + 1 });
    }
    let dims = config.target_dims;
    let knn = nearest_neighbors(n, k, dist);
    job.check()?;
    let smooth = smooth_distances(&knn, k);
    let mut edges = fuzzy_graph(&knn, &smooth);

    let epochs = config.epochs;
    let max_w = edges.iter().fold(0.0f64, |m, e| m.max(e.2));
    edges.retain(|e| e.2 >= max_w / epochs as f64);
    let per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let per_negative: Vec<f64> = per_sample
        .iter()
        .map(|p| p / config.negative_sample_rate.max(1) as f64)
        .collect();
    let mut next_sample = per_sample.clone();
    let mut next_negative = per_negative.clone();
    let negatives_on = config.negative_sample_rate > 0;

    let (a, b) = fit_curve(config.spread, config.min_dist);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<f64> = (0..n * dims).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect();
    let mut delta = vec![0.0; dims];

    for epoch in 0..epochs {
        job.check()?;
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        let now = epoch as f64;
        for (idx, &(head, tail, _)) in edges.iter().enumerate() {
            if next_sample[idx] > now {
                continue;
            }
            let d2: f64 = (0..dims).map(|d| (y[head * dims + d] - y[tail * dims + d]).powi(2)).sum();
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..dims {
                let g = clip(coeff * (y[head * dims + d] - y[tail * dims + d]));
                y[head * dims + d] += g * alpha;
                y[tail * dims + d] -= g * alpha;
            }
            next_sample[idx] += per_sample[idx];

            if !negatives_on {
                continue;
            }
            let draws = ((now - next_negative[idx]) / per_negative[idx]).trunc().max(0.0) as usize;
            for _ in 0..draws {
                let other = rng.gen_range(0..n as u32) as usize;
                if other == head {
                    continue;
                }
                let d2: f64 = (0..dims).map(|d| (y[head * dims + d] - y[other * dims + d]).powi(2)).sum();
                if d2 <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                for (d, slot) in delta.iter_mut().enumerate() {
                    *slot = clip(coeff * (y[head * dims + d] - y[other * dims + d]));
                }
                for (d, g) in delta.iter().enumerate() {
                    y[head * dims + d] += g * alpha;
                }
            }
            next_negative[idx] += draws as f64 * per_negative[idx];
        }
        job.report(epoch + 1, epochs);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.optimize.curve_fit on the same 300-point
    // target curve.
    #[test]
    fn curve_fit_matches_reference_least_squares() {
        for (spread, min_dist, a, b) in [
            (1.0, 0.1, 1.5769434602697652, 0.8950608778515733),
            (1.0, 0.5, 0.5830300203414425, 1.3341669924314914),
            (2.0, 0.3, 0.3794946886311041, 0.9488152194414622),
        ] {
            let (fa, fb) = fit_curve(spread, min_dist);
            assert!((fa - a).abs() < 1e-5, "a: {fa} vs {a}");
            assert!((fb - b).abs() < 1e-5, "b: {fb} vs {b}");
        }
    }

    fn line_dist(i: usize, j: usize) -> f64 {
        (i as f64 - j as f64).abs()
    }

    #[test]
    fn knn_excludes_self_and_breaks_ties_by_index() {
        let knn = nearest_neighbors(6, 2, &line_dist);
        assert_eq!(knn[0], vec![(1, 1.0), (2, 2.0)]);
        assert_eq!(knn[3], vec![(2, 1.0), (4, 1.0)]);
    }

    #[test]
    fn bandwidth_hits_target_sum() {
        let knn = nearest_neighbors(40, 15, &|i, j| ((i * 7919 + j * 104729) % 97) as f64 / 97.0 + line_dist(i, j));
        let smooth = smooth_distances(&knn, 15);
        for (row, &(rho, sigma)) in knn.iter().zip(&smooth) {
            assert_eq!(rho, row[0].1);
            let s: f64 = row.iter().map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp()).sum();
            assert!((s - 15f64.log2()).abs() < 1e-4, "{s}");
        }
    }

    #[test]
    fn fuzzy_union_is_symmetric() {
        let knn = nearest_neighbors(10, 3, &line_dist);
        let smooth = smooth_distances(&knn, 3);
        let edges = fuzzy_graph(&knn, &smooth);
        for &(i, j, w) in &edges {
            assert!(edges.iter().any(|&(a, b, v)| a == j && b == i && v == w));
            assert!(w > 0.0 && w <= 1.0);
        }
    }

    #[test]
    fn too_few_points() {
        let cfg = ProjectionConfig::default();
        let r = layout(15, &line_dist, &cfg, 1, &Job::default());
        assert_eq!(r, Err(ProjectionError::TooFewDocs { have: 15, need: 16 }));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = ProjectionConfig { epochs: 30, ..Default::default() };
        let a = layout(40, &line_dist, &cfg, 7, &Job::default()).unwrap();
        let b = layout(40, &line_dist, &cfg, 7, &Job::default()).unwrap();
        let c = layout(40, &line_dist, &cfg, 8, &Job::default()).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, c);
        assert_eq!(a.len(), 40 * 5);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cancellation_stops_the_job() {
        let token = super::super::CancelToken::default();
        token.cancel();
        let job = Job { cancel: Some(&token), progress: None };
        let r = layout(40, &line_dist, &ProjectionConfig::default(), 1, &job);
        assert_eq!(r, Err(ProjectionError::Cancelled));
    }

    #[test]
    fn csv_export() {
        let c = Coordinates { dims: 2, points: vec![3, 5], values: vec![0.5, -1.0, 2.0, 0.25] };
        let csv = c.to_csv(|p| if p == 3 { "a" } else { "b" });
        assert_eq!(csv, "doc_id,dim0,dim1\na,0.5,-1\nb,2,0.25\n");
    }
}
