//! Rooted trees with branch lengths.
//!
//! Nodes live in a flat arena and are addressed by [`NodeId`]. Every vector or
//! matrix indexed by tips elsewhere in the crate uses the canonical tip order:
//! left-to-right depth-first order of the arena's child lists.

mod newick;
mod ops;
mod stats;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use newick::{parse_newick, write_newick};
pub use stats::{tree_stats, HeightPolicy, TreeStats, ULTRAMETRIC_RTOL};

/// Index into the tree's node arena.
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Length of the edge to the parent; `None` only for the root.
    pub length: Option<f64>,
    pub label: Option<String>,
}

/// Immutable rooted tree.
#[derive(Debug, Clone)]
pub struct PhyloTree {
    nodes: Vec<Node>,
    root: NodeId,
    preorder: Vec<NodeId>,
    tips: Vec<NodeId>,
    tip_pos: Vec<Option<usize>>,
    tip_labels: HashMap<String, NodeId>,
    depth: Vec<f64>,
}

impl PhyloTree {
    /// Validate an arena and build the derived indices.
    pub fn from_nodes(nodes: Vec<Node>, root: NodeId) -> Result<Self> {
        if nodes.is_empty() || root >= nodes.len() {
            return Err(Error::InvalidTree(
                "empty arena or root out of range".into(),
            ));
        }
        if nodes[root].parent.is_some() {
            return Err(Error::InvalidTree("root has a parent".into()));
        }
        for (id, node) in nodes.iter().enumerate() {
            match node.parent {
                None if id != root => {
                    return Err(Error::InvalidTree(format!(
                        "node {id} has no parent but is not the root"
                    )))
                }
                Some(p) => {
                    if p >= nodes.len() || !nodes[p].children.contains(&id) {
                        return Err(Error::InvalidTree(format!(
                            "node {id}: inconsistent parent link"
                        )));
                    }
                    match node.length {
                        None => return Err(Error::MissingBranchLength(describe(node, id))),
                        Some(len) if !len.is_finite() => {
                            return Err(Error::InvalidTree(format!(
                                "non-finite branch length above {}",
                                describe(node, id)
                            )))
                        }
                        Some(len) if len < 0.0 => {
                            return Err(Error::NegativeBranchLength {
                                node: describe(node, id),
                                length: len,
                            })
                        }
                        _ => {}
                    }
                }
                None => {}
            }
            for &c in &node.children {
                if c >= nodes.len() || nodes[c].parent != Some(id) {
                    return Err(Error::InvalidTree(format!(
                        "node {id}: inconsistent child link"
                    )));
                }
            }
        }

        let mut preorder = Vec::with_capacity(nodes.len());
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut seen[u], true) {
                return Err(Error::InvalidTree("cycle detected".into()));
            }
            preorder.push(u);
            stack.extend(nodes[u].children.iter().rev());
        }
        if preorder.len() != nodes.len() {
            return Err(Error::InvalidTree("arena is not connected".into()));
        }

        let mut tips = Vec::new();
        let mut tip_pos = vec![None; nodes.len()];
        let mut tip_labels = HashMap::new();
        let mut depth = vec![0.0; nodes.len()];
        for &u in &preorder {
            if let Some(p) = nodes[u].parent {
                depth[u] = depth[p] + nodes[u].length.unwrap_or(0.0);
            }
            if nodes[u].children.is_empty() && u != root {
                let label = nodes[u]
                    .label
                    .clone()
                    .ok_or_else(|| Error::InvalidTree(format!("tip node {u} has no label")))?;
                if tip_labels.insert(label.clone(), u).is_some() {
                    return Err(Error::DuplicateLabel(label));
                }
                tip_pos[u] = Some(tips.len());
                tips.push(u);
            }
        }
        if tips.is_empty() {
            return Err(Error::InvalidTree("tree has no tips".into()));
        }

        Ok(Self {
            nodes,
            root,
            preorder,
            tips,
            tip_pos,
            tip_labels,
            depth,
        })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tips(&self) -> usize {
        self.tips.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    /// Edge length above `id`, zero for the root.
    pub fn edge_length(&self, id: NodeId) -> f64 {
        self.nodes[id].length.unwrap_or(0.0)
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.nodes[id].label.as_deref()
    }

    pub fn is_tip(&self, id: NodeId) -> bool {
        self.tip_pos[id].is_some()
    }

    /// Tips in canonical order.
    pub fn tips(&self) -> &[NodeId] {
        &self.tips
    }

    /// Position of a tip in canonical order.
    pub fn tip_index(&self, id: NodeId) -> Option<usize> {
        self.tip_pos[id]
    }

    pub fn tip_labels(&self) -> Vec<&str> {
        self.tips
            .iter()
            .map(|&t| self.nodes[t].label.as_deref().unwrap_or(""))
            .collect()
    }

    pub fn tip_by_label(&self, label: &str) -> Option<NodeId> {
        self.tip_labels.get(label).copied()
    }

    /// Any node (tip or internal) carrying `label`; the first in preorder wins.
    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.preorder
            .iter()
            .copied()
            .find(|&u| self.nodes[u].label.as_deref() == Some(label))
    }

    /// Parents before children.
    pub fn preorder(&self) -> &[NodeId] {
        &self.preorder
    }

    /// Children before parents.
    pub fn postorder(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.preorder.iter().rev().copied()
    }

    /// Distance from the root to `id`.
    pub fn depth(&self, id: NodeId) -> f64 {
        self.depth[id]
    }

    /// Root-to-tip distances in canonical order.
    pub fn tip_heights(&self) -> Vec<f64> {
        self.tips.iter().map(|&t| self.depth[t]).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.nodes.iter().filter_map(|n| n.length).sum()
    }

    /// Canonical indices of the tips below `id` (inclusive when `id` is a tip).
    pub fn tips_below(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(u) = stack.pop() {
            if let Some(i) = self.tip_pos[u] {
                out.push(i);
            }
            stack.extend(self.nodes[u].children.iter().rev());
        }
        out
    }

    /// Most recent common ancestor of a nonempty node set.
    pub fn mrca(&self, ids: &[NodeId]) -> Option<NodeId> {
        let (&first, rest) = ids.split_first()?;
        let mut path = self.ancestors(first);
        for &id in rest {
            let other = self.ancestors(id);
            let keep: std::collections::HashSet<_> = other.into_iter().collect();
            path.retain(|u| keep.contains(u));
        }
        path.first().copied()
    }

    /// `id` followed by its ancestors up to the root.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut u = id;
        while let Some(p) = self.nodes[u].parent {
            out.push(p);
            u = p;
        }
        out
    }

    /// Resolve a node reference: a node label, or comma-separated tip labels
    /// naming their most recent common ancestor.
    pub fn resolve_node(&self, spec: &str) -> Result<NodeId> {
        if let Some(u) = self.node_by_label(spec) {
            return Ok(u);
        }
        let parts: Vec<&str> = spec
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if parts.len() < 2 {
            return Err(Error::UnknownNode(spec.to_string()));
        }
        let ids = parts
            .iter()
            .map(|p| {
                self.tip_by_label(p)
                    .ok_or_else(|| Error::UnknownLabel(p.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.mrca(&ids)
            .ok_or_else(|| Error::UnknownNode(spec.to_string()))
    }

    /// Clade below `id` as its own tree; the edge above `id` is dropped.
    pub fn subtree(&self, id: NodeId) -> Result<PhyloTree> {
        let mut b = TreeBuilder::with_root_label(self.nodes[id].label.clone());
        let mut stack: Vec<(NodeId, NodeId)> = self.nodes[id]
            .children
            .iter()
            .rev()
            .map(|&c| (b.root(), c))
            .collect();
        while let Some((np, u)) = stack.pop() {
            let nu = b.add_child(np, self.edge_length(u), self.nodes[u].label.clone());
            stack.extend(self.nodes[u].children.iter().rev().map(|&c| (nu, c)));
        }
        b.build()
    }

    /// Keep only the tips whose labels are in `keep`; see [`ops::restrict_to_tips`].
    pub fn restrict<S: AsRef<str>>(&self, keep: &[S]) -> Result<PhyloTree> {
        ops::restrict_to_tips(self, keep)
    }
}

fn describe(node: &Node, id: NodeId) -> String {
    node.label.clone().unwrap_or_else(|| format!("node #{id}"))
}

/// Incremental arena construction for generators and tree surgery.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    nodes: Vec<Node>,
}

impl Default for TreeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::with_root_label(None)
    }

    pub fn with_root_label(label: Option<String>) -> Self {
        Self {
            nodes: vec![Node {
                parent: None,
                children: Vec::new(),
                length: None,
                label,
            }],
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn add_child(&mut self, parent: NodeId, length: f64, label: Option<String>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            parent: Some(parent),
            children: Vec::new(),
            length: Some(length),
            label,
        });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn add_tip(&mut self, parent: NodeId, length: f64, label: impl Into<String>) -> NodeId {
        self.add_child(parent, length, Some(label.into()))
    }

    pub fn build(self) -> Result<PhyloTree> {
        PhyloTree::from_nodes(self.nodes, 0)
    }
}

pub use ops::{reroot, restrict_to_indices, restrict_to_tips};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_left_to_right() {
        let t = parse_newick("((B:1,A:1):1,(D:1,C:1):1);").unwrap();
        assert_eq!(t.tip_labels(), vec!["B", "A", "D", "C"]);
        assert_eq!(t.tip_heights(), vec![2.0; 4]);
    }

    #[test]
    fn mrca_and_resolve() {
        let t = parse_newick("((A:1,B:1)ab:1,C:2)r;").unwrap();
        let ab = t.resolve_node("A,B").unwrap();
        assert_eq!(t.label(ab), Some("ab"));
        assert_eq!(t.resolve_node("ab").unwrap(), ab);
        assert_eq!(t.resolve_node("A,C").unwrap(), t.root());
        assert!(matches!(t.resolve_node("zz"), Err(Error::UnknownNode(_))));
        assert!(matches!(t.resolve_node("A,Q"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn subtree_drops_the_subtending_edge() {
        let t = parse_newick("((A:1,B:2)ab:5,C:2);").unwrap();
        let ab = t.resolve_node("ab").unwrap();
        let s = t.subtree(ab).unwrap();
        assert_eq!(s.tip_heights(), vec![1.0, 2.0]);
        assert_eq!(s.total_length(), 3.0);
    }

    #[test]
    fn builder_rejects_duplicate_tips() {
        let mut b = TreeBuilder::new();
        b.add_tip(0, 1.0, "A");
        b.add_tip(0, 1.0, "A");
        assert_eq!(b.build().unwrap_err(), Error::DuplicateLabel("A".into()));
    }
}
