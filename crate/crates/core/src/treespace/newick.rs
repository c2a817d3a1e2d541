//! Rooted Newick with integer leaf labels `0..=p`.
//!
//! The root leaf `0` hangs from the top-level node with the root length as
//! its branch length. Children are ordered by smallest descendant leaf and
//! zero-length internal edges are never written, so every tree has exactly
//! one text form, e.g. `(0:1.0,1:1.0,2:1.0,3:1.0);` for the 3-leaf star.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};

use super::split::{full_mask, Split, MAX_LEAVES};
use super::tree::Tree;

fn fmt_len(x: f64) -> String {
    // Debug formatting is the shortest string that parses back exactly.
    format!("{x:?}")
}

pub fn to_newick(t: &Tree) -> String {
    let p = t.p();
    let mut out = String::new();
    out.push('(');
    write!(out, "0:{}", fmt_len(t.root_length())).unwrap();
    let full = full_mask(p);
    write_children(t, full, &mut out);
    out.push_str(");");
    out
}

fn write_children(t: &Tree, block: u64, out: &mut String) {
    let p = t.p();
    let inner: Vec<Split> = t
        .splits()
        .copied()
        .filter(|s| s.mask() != block && s.mask() & !block == 0)
        .collect();
    let mut children: Vec<u64> = Vec::new();
    let mut covered = 0u64;
    for s in &inner {
        if !inner.iter().any(|o| o != s && s.is_subset_of(o)) {
            children.push(s.mask());
            covered |= s.mask();
        }
    }
    let mut rest = block & !covered;
    while rest != 0 {
        let bit = rest & rest.wrapping_neg();
        children.push(bit);
        rest &= !bit;
    }
    children.sort_by_key(|m| m.trailing_zeros());
    for c in children {
        out.push(',');
        if c.count_ones() == 1 {
            let leaf = c.trailing_zeros() as usize + 1;
            write!(out, "{leaf}:{}", fmt_len(t.leaf_lengths()[leaf - 1])).unwrap();
        } else {
            let s = Split::new_unchecked(c, p);
            let mut sub = String::new();
            write_children(t, c, &mut sub);
            // `sub` starts with a separator comma.
            write!(out, "({}):{}", &sub[1..], fmt_len(t.internal()[&s])).unwrap();
        }
    }
}

#[derive(Debug)]
enum Node {
    Leaf { label: usize, len: f64 },
    Inner { children: Vec<Node>, len: Option<f64> },
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(parse_err(format!("expected '{}' at byte {}", c as char, self.pos)))
        }
    }

    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && !b"(),:;".contains(&self.s[self.pos]) && !self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn length(&mut self) -> Result<Option<f64>> {
        if self.peek() == Some(b':') {
            self.pos += 1;
            let tok = self.token();
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(format!("bad branch length {tok:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(parse_err(format!("branch length must be finite and non-negative, got {tok}")));
            }
            Ok(Some(v))
        } else {
            Ok(None)
        }
    }

    fn node(&mut self) -> Result<Node> {
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut children = vec![self.node()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                children.push(self.node()?);
            }
            self.expect(b')')?;
            // Internal node labels are ignored.
            let _ = self.token();
            let len = self.length()?;
            Ok(Node::Inner { children, len })
        } else {
            let tok = self.token();
            let label: usize = tok
                .parse()
                .map_err(|_| parse_err(format!("leaf label must be an integer, got {tok:?}")))?;
            let len = self
                .length()?
                .ok_or_else(|| parse_err(format!("leaf {label} has no branch length")))?;
            Ok(Node::Leaf { label, len })
        }
    }
}

fn max_label(n: &Node) -> usize {
    match n {
        Node::Leaf { label, .. } => *label,
        Node::Inner { children, .. } => children.iter().map(max_label).max().unwrap_or(0),
    }
}

struct Collector {
    p: usize,
    leaves: Vec<Option<f64>>,
    internal: BTreeMap<u64, f64>,
    root: Option<f64>,
    extra_root: f64,
}

impl Collector {
    fn visit(&mut self, n: &Node, top: bool) -> Result<u64> {
        match n {
            Node::Leaf { label, len } => {
                if *label == 0 {
                    if !top {
                        return Err(parse_err("root leaf 0 must hang from the top-level node"));
                    }
                    if self.root.replace(*len).is_some() {
                        return Err(parse_err("root leaf 0 appears twice"));
                    }
                    return Ok(0);
                }
                let slot = &mut self.leaves[*label - 1];
                if slot.replace(*len).is_some() {
                    return Err(parse_err(format!("leaf {label} appears twice")));
                }
                if *len <= 0.0 {
                    return Err(parse_err(format!("leaf {label} needs a positive length")));
                }
                Ok(1u64 << (label - 1))
            }
            Node::Inner { children, len } => {
                let mut mask = 0u64;
                for c in children {
                    mask |= self.visit(c, false)?;
                }
                let len = len.ok_or_else(|| parse_err("internal node without branch length"))?;
                if mask == full_mask(self.p) {
                    self.extra_root += len;
                } else if len > 0.0 && mask.count_ones() >= 2 {
                    if self.internal.insert(mask, len).is_some() {
                        return Err(parse_err("duplicate clade"));
                    }
                } else if mask.count_ones() < 2 {
                    return Err(parse_err("internal node with fewer than two leaves"));
                }
                Ok(mask)
            }
        }
    }
}

pub fn parse_newick(text: &str) -> Result<Tree> {
    let mut parser = Parser {
        s: text.as_bytes(),
        pos: 0,
    };
    let root = parser.node()?;
    parser.expect(b';')?;
    if parser.peek().is_some() {
        return Err(parse_err("trailing input after ';'"));
    }
    let children = match &root {
        Node::Inner { children, .. } => children,
        Node::Leaf { .. } => return Err(parse_err("top level must be a parenthesised node")),
    };
    let p = max_label(&root);
    if p == 0 || p > MAX_LEAVES {
        return Err(parse_err(format!("leaf labels must span 1..=p with p <= {MAX_LEAVES}")));
    }
    let mut c = Collector {
        p,
        leaves: vec![None; p],
        internal: BTreeMap::new(),
        root: None,
        extra_root: 0.0,
    };
    for ch in children {
        c.visit(ch, true)?;
    }
    let root_len = c.root.ok_or_else(|| parse_err("root leaf 0 is missing"))? + c.extra_root;
    let leaves = c
        .leaves
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| parse_err(format!("leaf {} is missing", i + 1))))
        .collect::<Result<Vec<f64>>>()?;
    let internal = c
        .internal
        .into_iter()
        .map(|(m, v)| (Split::new_unchecked(m, p), v));
    Tree::new(p, internal, leaves, root_len).map_err(|e| parse_err(e.to_string()))
}
