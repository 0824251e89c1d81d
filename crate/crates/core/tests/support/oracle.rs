//! Slow, obviously-correct reference implementations.

use curate_core::query::QueryAst;

/// Correctly rounded sum (Shewchuk's partials with the final half-way
/// correction, as in CPython's `math.fsum`).
pub fn fsum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Full-scan ranking: mean of the controls, normalized, every candidate
/// scored and the whole list sorted.
pub fn naive_rank(
    rows: &[Vec<f32>],
    controls: &[Vec<f32>],
    candidates: Option<&[usize]>,
    max_results: usize,
    floor: f64,
) -> Vec<(usize, f64)> {
    let dim = controls[0].len();
    let n = controls.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|c| fsum(controls.iter().map(|v| v[c] as f64)) / n).collect();
    let mut norm = 0.0;
    for m in &mean {
        norm += m * m;
    }
    let norm = f64::sqrt(norm);
    let target: Vec<f32> = if (norm - 1.0).abs() <= 1e-6 {
        mean.iter().map(|&m| m as f32).collect()
    } else {
        mean.iter().map(|&m| (m / norm) as f32).collect()
    };
    let mut pool: Vec<usize> = match candidates {
        Some(c) => c.to_vec(),
        None => (0..rows.len()).collect(),
    };
    pool.sort_unstable();
    pool.dedup();
    let mut scored: Vec<(usize, f64)> = pool
        .into_iter()
        .map(|p| (p, fsum(rows[p].iter().zip(&target).map(|(&a, &b)| a as f64 * b as f64))))
        .filter(|&(_, s)| floor <= -1.0 || s >= floor)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(max_results);
    scored
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// A document as two token sequences; phrases never span them.
pub struct ScanDoc {
    pub id: String,
    pub title: Vec<String>,
    pub body: Vec<String>,
}

impl ScanDoc {
    pub fn new(id: &str, title: &str, body: &str) -> Self {
        ScanDoc {
            id: id.to_owned(),
            title: words(title),
            body: words(body),
        }
    }

    fn tokens(&self) -> impl Iterator<Item = &String> {
        self.title.iter().chain(&self.body)
    }

    fn leaf(&self, node: &QueryAst) -> bool {
        match node {
            QueryAst::Term(t) => self.tokens().any(|x| x == t),
            QueryAst::Prefix(p) => self.tokens().any(|x| x.starts_with(p.as_str())),
            QueryAst::Phrase(ph) => [&self.title, &self.body]
                .iter()
                .any(|seq| seq.len() >= ph.len() && seq.windows(ph.len()).any(|w| w == ph.as_slice())),
            _ => unreachable!(),
        }
    }

    pub fn matches(&self, node: &QueryAst) -> bool {
        match node {
            QueryAst::And(cs) => cs.iter().all(|c| self.matches(c)),
            QueryAst::Or(cs) => cs.iter().any(|c| self.matches(c)),
            QueryAst::Not(x) => !self.matches(x),
            leaf => self.leaf(leaf),
        }
    }
}

fn positive_leaves<'a>(node: &'a QueryAst, negated: bool, out: &mut Vec<&'a QueryAst>) {
    match node {
        QueryAst::And(cs) | QueryAst::Or(cs) => cs.iter().for_each(|c| positive_leaves(c, negated, out)),
        QueryAst::Not(x) => positive_leaves(x, !negated, out),
        leaf => {
            if !negated && !out.contains(&leaf) {
                out.push(leaf)
            }
        }
    }
}

/// Every matching document, most distinct positive leaves first, then
/// corpus order.
pub fn naive_query(docs: &[ScanDoc], ast: &QueryAst) -> Vec<String> {
    let mut leaves = Vec::new();
    positive_leaves(ast, false, &mut leaves);
    let mut hits: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.matches(ast))
        .map(|(i, d)| (leaves.iter().filter(|l| d.leaf(l)).count(), i))
        .collect();
    hits.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    hits.into_iter().map(|(_, i)| docs[i].id.clone()).collect()
}

/// Whether a document with no tokens at all would match.
pub fn matches_empty(ast: &QueryAst) -> bool {
    ScanDoc::new("", "", "").matches(ast)
}

fn dist(points: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let mut s = 0.0;
    for (a, b) in points[i].iter().zip(&points[j]) {
        s += (a - b) * (a - b);
    }
    s.sqrt()
}

fn components(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut stack = vec![s];
        while let Some(x) = stack.pop() {
            for y in 0..n {
                if comp[y] == usize::MAX && linked(x, y) {
                    comp[y] = next;
                    stack.push(y);
                }
            }
        }
        next += 1;
    }
    comp
}

struct NaiveCluster {
    parent: Option<usize>,
    birth: f64,
    /// Points still inside, with the level at which each left.
    exits: Vec<f64>,
    children: Vec<usize>,
}

/// HDBSCAN* by thresholding: for every mutual-reachability level, from the
/// top down, recompute connected components from scratch and split or
/// shrink each live cluster accordingly. Labels are relabeled by first
/// appearance; `None` is noise.
pub fn naive_hdbscan(points: &[Vec<f64>], min_cluster_size: usize, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    if n < 2 {
        return vec![None; n];
    }
    let mcs = min_cluster_size.max(2);
    let k = min_samples.clamp(1, n);
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| dist(points, i, j)).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    let mreach = |i: usize, j: usize| dist(points, i, j).max(core[i]).max(core[j]);
    let mut levels: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| mreach(i, j)).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();

    let lambda = |w: f64| if w > 0.0 { 1.0 / w } else { f64::INFINITY };
    let mut clusters = vec![NaiveCluster {
        parent: None,
        birth: 0.0,
        exits: Vec::new(),
        children: Vec::new(),
    }];
    let mut last_cluster = vec![0usize; n];
    let mut live: Vec<(usize, Vec<usize>)> = vec![(0, (0..n).collect())];
    for &w in &levels {
        let comp = components(n, |a, b| a != b && mreach(a, b) < w);
        let lam = lambda(w);
        let mut next_live = Vec::new();
        for (c, members) in live {
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for &p in &members {
                match groups.iter_mut().find(|(id, _)| *id == comp[p]) {
                    Some((_, g)) => g.push(p),
                    None => groups.push((comp[p], vec![p])),
                }
            }
            let big: Vec<Vec<usize>> = groups.iter().filter(|(_, g)| g.len() >= mcs).map(|(_, g)| g.clone()).collect();
            for (_, g) in groups.iter().filter(|(_, g)| g.len() < mcs) {
                for &p in g {
                    clusters[c].exits.push(lam);
                    last_cluster[p] = c;
                }
            }
            match big.len() {
                0 => {}
                1 => next_live.push((c, big.into_iter().next().unwrap())),
                _ => {
                    for g in big {
                        for _ in &g {
                            clusters[c].exits.push(lam);
                        }
                        let id = clusters.len();
                        clusters.push(NaiveCluster {
                            parent: Some(c),
                            birth: lam,
                            exits: Vec::new(),
                            children: Vec::new(),
                        });
                        clusters[c].children.push(id);
                        next_live.push((id, g));
                    }
                }
            }
        }
        live = next_live;
    }
    assert!(live.is_empty(), "every cluster ends by the lowest level");

    let stability: Vec<f64> = clusters
        .iter()
        .map(|c| fsum(c.exits.iter().map(|&l| if l == c.birth { 0.0 } else { l - c.birth })))
        .collect();
    // Excess of mass, children first; a cluster beats its descendants on ties.
    fn best(c: usize, clusters: &[NaiveCluster], stability: &[f64], chosen: &mut Vec<usize>) -> f64 {
        let mut below = Vec::new();
        let sum: f64 = clusters[c].children.iter().map(|&k| best(k, clusters, stability, &mut below)).sum();
        if clusters[c].children.is_empty() || sum <= stability[c] {
            chosen.push(c);
            stability[c]
        } else {
            chosen.extend(below);
            sum
        }
    }
    let mut chosen = Vec::new();
    for &c in &clusters[0].children {
        best(c, &clusters, &stability, &mut chosen);
    }

    let raw: Vec<Option<usize>> = (0..n)
        .map(|p| {
            let mut cur = Some(last_cluster[p]);
            while let Some(c) = cur {
                if chosen.contains(&c) {
                    return Some(c);
                }
                cur = clusters[c].parent;
            }
            None
        })
        .collect();
    canonical_labels(&raw)
}

/// Renumbers labels by first appearance so labelings compare as
/// partitions.
pub fn canonical_labels(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut seen: Vec<usize> = Vec::new();
    labels
        .iter()
        .map(|l| {
            l.map(|x| match seen.iter().position(|&s| s == x) {
                Some(i) => i,
                None => {
                    seen.push(x);
                    seen.len() - 1
                }
            })
        })
        .collect()
}
