//! Newick reader and writer.
//!
//! Branch lengths are mandatory on every non-root edge. A length on the
//! outermost node (`(A:1,B:1):0.5;` or `A:1;`) is read as an edge hanging
//! below an implicit, unlabeled root.

use std::fmt::Write as _;

use super::{Node, NodeId, PhyloTree};
use crate::error::{Error, Result};

const META: &[u8] = b"(),:;";

#[derive(Debug, Default)]
struct Raw {
    parent: Option<usize>,
    children: Vec<usize>,
    label: Option<String>,
    length: Option<f64>,
    closed: bool,
    start: usize,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        position,
        message: message.into(),
    }
}

pub fn parse_newick(text: &str) -> Result<PhyloTree> {
    let bytes = text.as_bytes();
    let mut raw = vec![Raw::default()];
    let mut cur = 0usize;
    let mut i = 0usize;

    let finish = |raw: &[Raw], u: usize| -> Result<()> {
        if raw[u].children.is_empty() && raw[u].label.is_none() {
            return Err(syntax(raw[u].start, "tip without a label"));
        }
        Ok(())
    };

    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(syntax(i, "unexpected end of input (missing ';')"));
        }
        match bytes[i] {
            b'(' => {
                let r = &raw[cur];
                if r.closed || !r.children.is_empty() || r.label.is_some() || r.length.is_some() {
                    return Err(syntax(i, "unexpected '('"));
                }
                let child = raw.len();
                raw.push(Raw {
                    parent: Some(cur),
                    start: i + 1,
                    ..Raw::default()
                });
                raw[cur].children.push(child);
                cur = child;
                i += 1;
            }
            b',' => {
                let Some(p) = raw[cur].parent else {
                    return Err(syntax(i, "',' outside of parentheses"));
                };
                finish(&raw, cur)?;
                let child = raw.len();
                raw.push(Raw {
                    parent: Some(p),
                    start: i + 1,
                    ..Raw::default()
                });
                raw[p].children.push(child);
                cur = child;
                i += 1;
            }
            b')' => {
                let Some(p) = raw[cur].parent else {
                    return Err(syntax(i, "unbalanced ')'"));
                };
                finish(&raw, cur)?;
                cur = p;
                raw[cur].closed = true;
                i += 1;
            }
            b':' => {
                if raw[cur].length.is_some() {
                    return Err(syntax(i, "duplicate branch length"));
                }
                let mut start = i + 1;
                while start < bytes.len() && bytes[start].is_ascii_whitespace() {
                    start += 1;
                }
                let mut j = start;
                while j < bytes.len()
                    && !META.contains(&bytes[j])
                    && !bytes[j].is_ascii_whitespace()
                {
                    j += 1;
                }
                let token = &text[start..j];
                let value: f64 = token
                    .parse()
                    .map_err(|_| syntax(start, format!("invalid branch length `{token}`")))?;
                if !value.is_finite() {
                    return Err(syntax(start, format!("non-finite branch length `{token}`")));
                }
                raw[cur].length = Some(value);
                i = j;
            }
            b';' => {
                if raw[cur].parent.is_some() {
                    return Err(syntax(i, "unbalanced '(' before ';'"));
                }
                finish(&raw, cur)?;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                if i < bytes.len() {
                    return Err(syntax(i, "trailing characters after ';'"));
                }
                break;
            }
            _ => {
                let r = &raw[cur];
                if r.label.is_some() || r.length.is_some() || !(r.children.is_empty() || r.closed) {
                    return Err(syntax(i, "unexpected label"));
                }
                let start = i;
                let mut j = i;
                while j < bytes.len() && !META.contains(&bytes[j]) {
                    if !(bytes[j] == b' ' || bytes[j].is_ascii_graphic())
                        && !bytes[j].is_ascii_whitespace()
                    {
                        return Err(syntax(j, "non-printable character in label"));
                    }
                    j += 1;
                }
                let label = text[start..j].trim();
                if !label.is_empty() {
                    raw[cur].label = Some(label.to_string());
                }
                i = j;
            }
        }
    }

    // Outer node with a length hangs below an implicit root.
    let implicit_root = raw[0].length.is_some();
    let offset = usize::from(implicit_root);
    let mut nodes: Vec<Node> = Vec::with_capacity(raw.len() + offset);
    if implicit_root {
        nodes.push(Node {
            parent: None,
            children: vec![1],
            length: None,
            label: None,
        });
    }
    for (id, r) in raw.iter().enumerate() {
        let parent = match r.parent {
            Some(p) => Some(p + offset),
            None if implicit_root => Some(0),
            None => None,
        };
        let length = match (parent, r.length) {
            (None, _) => None,
            (Some(_), Some(len)) => {
                if len < 0.0 {
                    let node = r
                        .label
                        .clone()
                        .unwrap_or_else(|| format!("node at byte {}", r.start));
                    return Err(Error::NegativeBranchLength { node, length: len });
                }
                Some(len)
            }
            (Some(_), None) => {
                return Err(Error::MissingBranchLength(
                    r.label
                        .clone()
                        .unwrap_or_else(|| format!("node #{id} at byte {}", r.start)),
                ))
            }
        };
        nodes.push(Node {
            parent,
            children: r.children.iter().map(|c| c + offset).collect(),
            length,
            label: r.label.clone(),
        });
    }
    PhyloTree::from_nodes(nodes, 0)
}

/// Serialize with the shortest round-tripping decimal for each length.
pub fn write_newick(tree: &PhyloTree) -> String {
    enum Step {
        Enter(NodeId),
        Exit(NodeId),
        Comma,
    }
    let mut out = String::new();
    let mut stack = vec![Step::Enter(tree.root())];
    while let Some(step) = stack.pop() {
        match step {
            Step::Enter(u) => {
                let children = tree.children(u);
                if children.is_empty() {
                    out.push_str(tree.label(u).unwrap_or(""));
                    write_length(&mut out, tree, u);
                } else {
                    out.push('(');
                    stack.push(Step::Exit(u));
                    for (k, &c) in children.iter().enumerate().rev() {
                        stack.push(Step::Enter(c));
                        if k > 0 {
                            stack.push(Step::Comma);
                        }
                    }
                }
            }
            Step::Exit(u) => {
                out.push(')');
                if let Some(l) = tree.label(u) {
                    out.push_str(l);
                }
                write_length(&mut out, tree, u);
            }
            Step::Comma => out.push(','),
        }
    }
    out.push(';');
    out
}

fn write_length(out: &mut String, tree: &PhyloTree, u: NodeId) {
    if let Some(len) = tree.node(u).length {
        let _ = write!(out, ":{len}");
    }
}
