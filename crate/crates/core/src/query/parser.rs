use super::{QueryAst, QueryError};
use crate::embedding::tokenize;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Prefix(String),
    Quoted(String),
    LParen,
    RParen,
    And,
    Or,
    Not,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("term {w:?}"),
            Tok::Prefix(p) => format!("prefix {p:?}*"),
            Tok::Quoted(q) => format!("phrase \"{q}\""),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Not => "NOT".into(),
            Tok::End => "end of query".into(),
        }
    }

    fn starts_unary(&self) -> bool {
        matches!(self, Tok::Word(_) | Tok::Prefix(_) | Tok::Quoted(_) | Tok::LParen | Tok::Not)
    }
}

fn perr(position: usize, expected: &[&str], found: impl Into<String>) -> QueryError {
    QueryError::Parse {
        position,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: found.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            chars.next();
            out.push((pos, Tok::LParen));
        } else if c == ')' {
            chars.next();
            out.push((pos, Tok::RParen));
        } else if c == '"' {
            chars.next();
            let start = pos + 1;
            let mut end = None;
            for (p, ch) in chars.by_ref() {
                if ch == '"' {
                    end = Some(p);
                    break;
                }
            }
            let end = end.ok_or_else(|| perr(text.len(), &["closing '\"'"], "end of query"))?;
            out.push((pos, Tok::Quoted(text[start..end].to_owned())));
        } else {
            let mut end = text.len();
            while let Some(&(p, ch)) = chars.peek() {
                if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' {
                    end = p;
                    break;
                }
                chars.next();
            }
            let word = &text[pos..end];
            let tok = match word {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                w if w.ends_with('*') => Tok::Prefix(w.trim_end_matches('*').to_owned()),
                w => Tok::Word(w.to_owned()),
            };
            out.push((pos, tok));
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

const PRIMARY: &[&str] = &["term", "phrase", "prefix", "'('", "NOT"];

impl Parser {
    fn peek(&self) -> &(usize, Tok) {
        &self.toks[self.at]
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn or(&mut self) -> Result<QueryAst, QueryError> {
        let mut parts = vec![self.and()?];
        while self.peek().1 == Tok::Or {
            self.bump();
            parts.push(self.and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { QueryAst::Or(parts) })
    }

    fn and(&mut self) -> Result<QueryAst, QueryError> {
        let mut parts = vec![self.unary()?];
        loop {
            if self.peek().1 == Tok::And {
                self.bump();
                parts.push(self.unary()?);
            } else if self.peek().1.starts_unary() {
                parts.push(self.unary()?);
            } else {
                break;
            }
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { QueryAst::And(parts) })
    }

    fn unary(&mut self) -> Result<QueryAst, QueryError> {
        if self.peek().1 == Tok::Not {
            self.bump();
            return Ok(QueryAst::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<QueryAst, QueryError> {
        let (pos, tok) = self.bump();
        match tok {
            Tok::Word(w) => {
                let mut toks = tokenize(&w);
                match toks.len() {
                    0 => Err(perr(pos, &["term with letters or digits"], format!("{w:?}"))),
                    1 => Ok(QueryAst::Term(toks.pop().unwrap())),
                    _ => Ok(QueryAst::Phrase(toks)),
                }
            }
            Tok::Quoted(q) => {
                let mut toks = tokenize(&q);
                match toks.len() {
                    0 => Err(perr(pos, &["non-empty phrase"], format!("\"{q}\""))),
                    1 => Ok(QueryAst::Term(toks.pop().unwrap())),
                    _ => Ok(QueryAst::Phrase(toks)),
                }
            }
            Tok::Prefix(stem) => {
                let mut toks = tokenize(&stem);
                if toks.len() != 1 {
                    return Err(perr(pos, &["single-token prefix"], format!("{stem:?}*")));
                }
                Ok(QueryAst::Prefix(toks.pop().unwrap()))
            }
            Tok::LParen => {
                let inner = self.or()?;
                let (p, close) = self.bump();
                if close != Tok::RParen {
                    return Err(perr(p, &["')'", "OR", "AND"], close.describe()));
                }
                Ok(inner)
            }
            other => Err(perr(pos, PRIMARY, other.describe())),
        }
    }
}

/// Parses a boolean keyword query.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let ast = p.or()?;
    let (pos, rest) = p.bump();
    if rest != Tok::End {
        return Err(perr(pos, &["OR", "AND", "end of query"], rest.describe()));
    }
    if !ast.is_bounded() {
        return Err(QueryError::PureNegation);
    }
    Ok(ast)
}
