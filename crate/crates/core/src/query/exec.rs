use std::collections::HashMap;

use super::{InvertedIndex, Posting, QueryAst};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryOptions {
    /// When non-zero, a bare term also matches index tokens within this
    /// Levenshtein distance. Off by default.
    pub max_edits: u8,
}

type DocSet = Vec<u32>;

fn intersect(a: &[u32], b: &[u32]) -> DocSet {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn union(a: &[u32], b: &[u32]) -> DocSet {
    let (mut i, mut j, mut out) = (0, 0, Vec::with_capacity(a.len() + b.len()));
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
    out
}

fn difference(a: &[u32], b: &[u32]) -> DocSet {
    let mut j = 0;
    a.iter()
        .copied()
        .filter(|&x| {
            while j < b.len() && b[j] < x {
                j += 1;
            }
            !(j < b.len() && b[j] == x)
        })
        .collect()
}

fn docs_of(list: &[Posting]) -> DocSet {
    list.iter().map(|p| p.doc).collect()
}

fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

struct Evaluator<'a> {
    index: &'a InvertedIndex,
    opts: QueryOptions,
}

impl Evaluator<'_> {
    fn leaf(&self, node: &QueryAst) -> DocSet {
        match node {
            QueryAst::Term(t) => {
                if self.opts.max_edits == 0 {
                    return docs_of(self.index.postings(t));
                }
                let k = self.opts.max_edits as usize;
                self.index
                    .tokens()
                    .filter(|tok| tok.len().abs_diff(t.len()) <= k && levenshtein(tok, t) <= k)
                    .fold(Vec::new(), |acc, tok| union(&acc, &docs_of(self.index.postings(tok))))
            }
            QueryAst::Prefix(stem) => self
                .index
                .prefixed(stem)
                .fold(Vec::new(), |acc, (_, list)| union(&acc, &docs_of(list))),
            QueryAst::Phrase(tokens) => self.phrase(tokens),
            _ => unreachable!("not a leaf"),
        }
    }

    fn phrase(&self, tokens: &[String]) -> DocSet {
        let lists: Vec<&[Posting]> = tokens.iter().map(|t| self.index.postings(t)).collect();
        let mut candidates = docs_of(lists[0]);
        for l in &lists[1..] {
            candidates = intersect(&candidates, &docs_of(l));
        }
        let find = |l: &[Posting], doc: u32| -> usize { l.binary_search_by_key(&doc, |p| p.doc).expect("candidate") };
        candidates
            .into_iter()
            .filter(|&doc| {
                let first = &lists[0][find(lists[0], doc)].positions;
                first.iter().any(|&start| {
                    lists[1..].iter().enumerate().all(|(k, l)| {
                        l[find(l, doc)]
                            .positions
                            .binary_search(&(start + k as u32 + 1))
                            .is_ok()
                    })
                })
            })
            .collect()
    }

    /// Documents matching a bounded node.
    fn eval(&self, node: &QueryAst) -> DocSet {
        match node {
            QueryAst::Term(_) | QueryAst::Phrase(_) | QueryAst::Prefix(_) => self.leaf(node),
            QueryAst::Or(cs) => cs.iter().fold(Vec::new(), |acc, c| union(&acc, &self.eval(c))),
            QueryAst::And(cs) => {
                let (bounded, rest): (Vec<&QueryAst>, Vec<&QueryAst>) = cs.iter().partition(|c| c.is_bounded());
                let mut set = self.eval(bounded[0]);
                for c in &bounded[1..] {
                    set = intersect(&set, &self.eval(c));
                }
                for c in rest {
                    set = self.within(c, &set);
                }
                set
            }
            QueryAst::Not(inner) => match inner.as_ref() {
                QueryAst::Not(x) => self.eval(x),
                _ => unreachable!("unbounded negation"),
            },
        }
    }

    /// Members of `cand` matching `node`. Negation is a difference against
    /// `cand`, never against the corpus.
    fn within(&self, node: &QueryAst, cand: &[u32]) -> DocSet {
        match node {
            QueryAst::Term(_) | QueryAst::Phrase(_) | QueryAst::Prefix(_) => intersect(cand, &self.leaf(node)),
            QueryAst::Not(inner) => difference(cand, &self.within(inner, cand)),
            QueryAst::And(cs) => cs.iter().fold(cand.to_vec(), |acc, c| self.within(c, &acc)),
            QueryAst::Or(cs) => cs.iter().fold(Vec::new(), |acc, c| union(&acc, &self.within(c, cand))),
        }
    }
}

/// Runs a parsed query with default options.
pub fn execute_query(ast: &QueryAst, index: &InvertedIndex) -> Vec<String> {
    execute_query_with(ast, index, QueryOptions::default())
}

/// Matching document ids ordered by the number of distinct positive terms
/// matched (descending), then ingest order.
pub fn execute_query_with(ast: &QueryAst, index: &InvertedIndex, opts: QueryOptions) -> Vec<String> {
    if !ast.is_bounded() {
        return Vec::new();
    }
    let ev = Evaluator { index, opts };
    let hits = ev.eval(ast);
    let leaf_sets: Vec<DocSet> = ast.positive_leaves().into_iter().map(|l| ev.leaf(l)).collect();
    let mut counts: HashMap<u32, usize> = HashMap::with_capacity(hits.len());
    for set in &leaf_sets {
        for d in intersect(&hits, set) {
            *counts.entry(d).or_default() += 1;
        }
    }
    let mut ranked: Vec<(usize, u32)> = hits.iter().map(|d| (counts.get(d).copied().unwrap_or(0), *d)).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().map(|(_, d)| index.doc_id(d).to_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, FieldMap, IngestOptions, InputFormat};
    use crate::query::parse_query;

    fn index() -> InvertedIndex {
        let mut c = Corpus::new("c", FieldMap { id: Some("id".into()), ..FieldMap::body("text") });
        c.ingest(
            &b"{\"id\":\"d1\",\"text\":\"wifi bill\"}\n{\"id\":\"d2\",\"text\":\"netflix password\"}\n{\"id\":\"d3\",\"text\":\"wifi password\"}\n"[..],
            InputFormat::Jsonl,
            &IngestOptions::default(),
        )
        .unwrap();
        InvertedIndex::build(&c)
    }

    fn run(q: &str) -> Vec<String> {
        execute_query(&parse_query(q).unwrap(), &index())
    }

    #[test]
    fn and_query() {
        assert_eq!(run("wifi AND password"), vec!["d3"]);
    }

    #[test]
    fn or_query_orders_by_match_count_then_ingest() {
        assert_eq!(run("wifi OR password"), vec!["d3", "d1", "d2"]);
    }

    #[test]
    fn negation_and_prefix() {
        assert_eq!(run("password NOT wifi"), vec!["d2"]);
        assert_eq!(run("net*"), vec!["d2"]);
        assert_eq!(run("pass* NOT (bill OR netflix)"), vec!["d3"]);
    }

    #[test]
    fn phrases() {
        assert_eq!(run("\"wifi password\""), vec!["d3"]);
        assert!(run("\"password wifi\"").is_empty());
    }

    #[test]
    fn empty_index_returns_nothing() {
        let idx = InvertedIndex::default();
        assert!(execute_query(&parse_query("wifi OR x*").unwrap(), &idx).is_empty());
    }

    #[test]
    fn edit_distance_expansion_is_opt_in() {
        let ast = parse_query("wify").unwrap();
        assert!(execute_query(&ast, &index()).is_empty());
        let fuzzy = execute_query_with(&ast, &index(), QueryOptions { max_edits: 1 });
        assert_eq!(fuzzy, vec!["d1", "d3"]);
    }

    #[test]
    fn set_helpers() {
        assert_eq!(union(&[1, 3, 5], &[2, 3, 6]), vec![1, 2, 3, 5, 6]);
        assert_eq!(intersect(&[1, 3, 5], &[2, 3, 5]), vec![3, 5]);
        assert_eq!(difference(&[1, 3, 5], &[3]), vec![1, 5]);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }
}
