//! Thread-domain expressions.
//!
//! An expression selects hardware threads by logical position inside a
//! thread domain, e.g. `M0:0,1@M2:0,1` is the first two cores of the first
//! and third NUMA domains. Grammar:
//!
//! ```text
//! expr := term ('@' term)*
//! term := TAG (':' list)?          a bare TAG selects the whole domain
//! list := item (',' item)*
//! item := INT | INT '-' INT
//! TAG  := 'N' | 'S' INT | 'C' INT | 'M' INT
//! ```

use thiserror::Error;

use crate::topo::{enumerate_domain, DomainTag, TopologyMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("term `{term}`: logical index {index} out of range (domain has {size} threads)")]
    OutOfRange {
        term: String,
        index: u32,
        size: usize,
    },
    #[error("duplicate CPU {os_id} selected by `{expr}`")]
    DuplicateCpu { os_id: u32, expr: String },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
}

/// One selector inside a term: a single logical index or an inclusive
/// range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Single(u32),
    Range(u32, u32),
}

impl Selector {
    fn indices(&self) -> impl Iterator<Item = u32> {
        match *self {
            Selector::Single(i) => i..=i,
            Selector::Range(lo, hi) => lo..=hi,
        }
    }

    pub fn cardinality(&self) -> usize {
        match *self {
            Selector::Single(_) => 1,
            Selector::Range(lo, hi) => (hi - lo + 1) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub tag: DomainTag,
    /// None = bare term, selects the whole domain.
    pub selectors: Option<Vec<Selector>>,
}

/// Parsed thread-domain expression, term and selector order preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainExpr {
    pub terms: Vec<Term>,
}

/// Ordered, duplicate-free list of OS CPU ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpuList {
    os_ids: Vec<u32>,
}

impl CpuList {
    pub fn new(os_ids: Vec<u32>) -> Result<Self, String> {
        if os_ids.is_empty() {
            return Err("CPU list must be nonempty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &os_ids {
            if !seen.insert(*id) {
                return Err(format!("duplicate CPU {id}"));
            }
        }
        Ok(CpuList { os_ids })
    }

    pub fn os_ids(&self) -> &[u32] {
        &self.os_ids
    }

    pub fn len(&self) -> usize {
        self.os_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.os_ids.is_empty()
    }

    pub fn first(&self) -> u32 {
        self.os_ids[0]
    }
}

impl std::fmt::Display for CpuList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ids: Vec<String> = self.os_ids.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", ids.join(","))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn integer(&mut self) -> Result<u32, ExprError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected integer");
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ExprError::Parse {
                offset: start,
                message: "integer out of range".into(),
            })
    }

    fn tag(&mut self) -> Result<DomainTag, ExprError> {
        match self.peek() {
            Some(b'N') => {
                self.pos += 1;
                Ok(DomainTag::Node)
            }
            Some(c @ (b'S' | b'C' | b'M')) => {
                self.pos += 1;
                let k = self.integer()?;
                Ok(match c {
                    b'S' => DomainTag::Socket(k),
                    b'C' => DomainTag::LlcGroup(k),
                    _ => DomainTag::NumaDomain(k),
                })
            }
            Some(c) => self.err(format!("unknown domain prefix `{}`", c as char)),
            None => self.err("unexpected end of expression"),
        }
    }

    fn selector(&mut self) -> Result<Selector, ExprError> {
        let lo = self.integer()?;
        if self.eat(b'-') {
            let at = self.pos;
            let hi = self.integer()?;
            if hi < lo {
                return Err(ExprError::Parse {
                    offset: at,
                    message: format!("reversed range {lo}-{hi}"),
                });
            }
            Ok(Selector::Range(lo, hi))
        } else {
            Ok(Selector::Single(lo))
        }
    }

    fn term(&mut self) -> Result<Term, ExprError> {
        let tag = self.tag()?;
        if !self.eat(b':') {
            return Ok(Term {
                tag,
                selectors: None,
            });
        }
        let mut selectors = vec![self.selector()?];
        while self.eat(b',') {
            selectors.push(self.selector()?);
        }
        Ok(Term {
            tag,
            selectors: Some(selectors),
        })
    }
}

/// Parse a thread-domain expression. Whitespace is not permitted.
pub fn parse_expr(text: &str) -> Result<DomainExpr, ExprError> {
    let mut cur = Cursor {
        bytes: text.as_bytes(),
        pos: 0,
    };
    if cur.bytes.is_empty() {
        return cur.err("empty expression");
    }
    let mut terms = vec![cur.term()?];
    while cur.eat(b'@') {
        terms.push(cur.term()?);
    }
    if cur.pos != cur.bytes.len() {
        return cur.err("trailing input");
    }
    Ok(DomainExpr { terms })
}

/// Canonical printed form; `parse_expr(print(e)) == e`.
pub fn print_expr(expr: &DomainExpr) -> String {
    let terms: Vec<String> = expr
        .terms
        .iter()
        .map(|t| {
            let mut s = t.tag.to_string();
            if let Some(sel) = &t.selectors {
                s.push(':');
                let items: Vec<String> = sel
                    .iter()
                    .map(|s| match s {
                        Selector::Single(i) => i.to_string(),
                        Selector::Range(lo, hi) => format!("{lo}-{hi}"),
                    })
                    .collect();
                s.push_str(&items.join(","));
            }
            s
        })
        .collect();
    terms.join("@")
}

/// Resolve logical selector indices to OS CPU ids against a topology. For
/// each term, indices select into the domain's canonical enumeration;
/// results concatenate in term order. Duplicates are hard errors.
pub fn resolve(expr: &DomainExpr, topo: &TopologyMap) -> Result<CpuList, ExprError> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for term in &expr.terms {
        let members = enumerate_domain(topo, term.tag)
            .map_err(|_| ExprError::UnknownDomain(term.tag.to_string()))?;
        let mut push = |idx: u32| -> Result<(), ExprError> {
            let os = *members
                .get(idx as usize)
                .ok_or_else(|| ExprError::OutOfRange {
                    term: print_term(term),
                    index: idx,
                    size: members.len(),
                })?;
            if !seen.insert(os) {
                return Err(ExprError::DuplicateCpu {
                    os_id: os,
                    expr: print_expr(expr),
                });
            }
            out.push(os);
            Ok(())
        };
        match &term.selectors {
            None => {
                for idx in 0..members.len() as u32 {
                    push(idx)?;
                }
            }
            Some(selectors) => {
                for sel in selectors {
                    for idx in sel.indices() {
                        push(idx)?;
                    }
                }
            }
        }
    }
    Ok(CpuList { os_ids: out })
}

fn print_term(term: &Term) -> String {
    print_expr(&DomainExpr {
        terms: vec![term.clone()],
    })
}

/// Parse and resolve in one step.
pub fn resolve_str(text: &str, topo: &TopologyMap) -> Result<CpuList, ExprError> {
    resolve(&parse_expr(text)?, topo)
}
