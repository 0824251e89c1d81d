//! Boolean keyword search: query syntax, inverted index and evaluation.
//!
//! ```text
//! query   := or
//! or      := and ("OR" and)*
//! and     := unary (("AND")? unary)*
//! unary   := "NOT" unary | primary
//! primary := term | '"' phrase '"' | term '*' | "(" query ")"
//! ```
//!
//! Operators are case-sensitive uppercase words; everything else is
//! lowercased and tokenized like document text. Negation is only allowed
//! where a positive sibling bounds it, so a query can never enumerate the
//! whole corpus.

mod exec;
mod index;
mod parser;

pub use exec::{execute_query, execute_query_with, QueryOptions};
pub use index::{InvertedIndex, Posting, INDEX_FORMAT_VERSION};
pub use parser::parse_query;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryAst {
    Term(String),
    Phrase(Vec<String>),
    Prefix(String),
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
    Not(Box<QueryAst>),
}

impl QueryAst {
    /// True when the set of matching documents is bounded by positive
    /// terms, i.e. evaluation never needs the complement of the corpus.
    pub fn is_bounded(&self) -> bool {
        match self {
            QueryAst::Term(_) | QueryAst::Phrase(_) | QueryAst::Prefix(_) => true,
            QueryAst::And(cs) => cs.iter().any(QueryAst::is_bounded),
            QueryAst::Or(cs) => !cs.is_empty() && cs.iter().all(QueryAst::is_bounded),
            QueryAst::Not(inner) => match inner.as_ref() {
                QueryAst::Not(x) => x.is_bounded(),
                _ => false,
            },
        }
    }

    /// Leaves reached through an even number of negations.
    pub(crate) fn positive_leaves(&self) -> Vec<&QueryAst> {
        fn walk<'a>(node: &'a QueryAst, negated: bool, out: &mut Vec<&'a QueryAst>) {
            match node {
                QueryAst::Term(_) | QueryAst::Phrase(_) | QueryAst::Prefix(_) => {
                    if !negated && !out.contains(&node) {
                        out.push(node);
                    }
                }
                QueryAst::And(cs) | QueryAst::Or(cs) => cs.iter().for_each(|c| walk(c, negated, out)),
                QueryAst::Not(inner) => walk(inner, !negated, out),
            }
        }
        let mut out = Vec::new();
        walk(self, false, &mut out);
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("parse error at byte {position}: expected {}, found {found}", expected.join(" or "))]
    Parse {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("query only negates terms; add a positive term to bound it")]
    PureNegation,
    #[error("index file: {0}")]
    Format(String),
}
