use std::collections::HashSet;

use super::{Node, NodeId, PhyloTree, TreeBuilder};
use crate::error::{Error, Result};

/// Prune an arena down to the tips flagged in `keep`, suppressing unary
/// non-root nodes by summing edge lengths. The root is always retained, so it
/// may come out with a single child.
fn prune(nodes: &[Node], root: NodeId, keep: &[bool]) -> Result<PhyloTree> {
    // Post-order liveness without recursion.
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        order.push(u);
        stack.extend(nodes[u].children.iter().copied());
    }
    let mut alive = vec![false; nodes.len()];
    for &u in order.iter().rev() {
        alive[u] = if nodes[u].children.is_empty() {
            keep[u]
        } else {
            nodes[u].children.iter().any(|&c| alive[c])
        };
    }
    if !alive[root] {
        return Err(Error::InvalidParameter("no tips left after pruning".into()));
    }

    let live_children = |u: NodeId| -> Vec<NodeId> {
        nodes[u]
            .children
            .iter()
            .copied()
            .filter(|&c| alive[c])
            .collect()
    };

    let mut b = TreeBuilder::with_root_label(nodes[root].label.clone());
    let mut stack: Vec<(NodeId, NodeId, f64)> = live_children(root)
        .into_iter()
        .rev()
        .map(|c| (0, c, nodes[c].length.unwrap_or(0.0)))
        .collect();
    while let Some((np, u, acc)) = stack.pop() {
        if nodes[u].children.is_empty() {
            b.add_child(np, acc, nodes[u].label.clone());
            continue;
        }
        let kids = live_children(u);
        if kids.len() == 1 {
            let c = kids[0];
            stack.push((np, c, acc + nodes[c].length.unwrap_or(0.0)));
        } else {
            let nu = b.add_child(np, acc, nodes[u].label.clone());
            stack.extend(
                kids.into_iter()
                    .rev()
                    .map(|c| (nu, c, nodes[c].length.unwrap_or(0.0))),
            );
        }
    }
    b.build()
}

/// Tree spanning exactly the tips in `keep`.
///
/// The original root is kept (possibly with a single child edge) so shared
/// ancestry times between retained tips, and their root-to-tip heights, are
/// unchanged.
pub fn restrict_to_tips<S: AsRef<str>>(tree: &PhyloTree, keep: &[S]) -> Result<PhyloTree> {
    if keep.is_empty() {
        return Err(Error::InvalidParameter("tip set to keep is empty".into()));
    }
    let mut flags = vec![false; tree.n_nodes()];
    for label in keep {
        let label = label.as_ref();
        let id = tree
            .tip_by_label(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        flags[id] = true;
    }
    prune(tree.nodes(), tree.root(), &flags)
}

/// Same as [`restrict_to_tips`], addressed by canonical tip indices.
pub fn restrict_to_indices(tree: &PhyloTree, keep: &[usize]) -> Result<PhyloTree> {
    if keep.is_empty() {
        return Err(Error::InvalidParameter("tip set to keep is empty".into()));
    }
    let mut flags = vec![false; tree.n_nodes()];
    for &i in keep {
        let id = *tree
            .tips()
            .get(i)
            .ok_or_else(|| Error::InvalidParameter(format!("tip index {i} out of range")))?;
        flags[id] = true;
    }
    prune(tree.nodes(), tree.root(), &flags)
}

/// Move the root to internal node `target`.
///
/// Edges on the path from the old root are reversed; the old root is
/// suppressed if it becomes unary. Tip-to-tip path lengths are unchanged, and
/// so is the total length unless the old root had a single child, in which
/// case its dangling edge is dropped.
pub fn reroot(tree: &PhyloTree, target: NodeId) -> Result<PhyloTree> {
    if target >= tree.n_nodes() {
        return Err(Error::UnknownNode(format!("#{target}")));
    }
    if tree.is_tip(target) {
        return Err(Error::InvalidParameter("cannot reroot at a tip".into()));
    }
    if target == tree.root() {
        return Ok(tree.clone());
    }

    // Neighbours in original child order, then the original parent.
    let neighbours = |u: NodeId| -> Vec<(NodeId, f64)> {
        let mut out: Vec<(NodeId, f64)> = tree
            .children(u)
            .iter()
            .map(|&c| (c, tree.edge_length(c)))
            .collect();
        if let Some(p) = tree.parent(u) {
            out.push((p, tree.edge_length(u)));
        }
        out
    };

    let mut nodes = vec![Node {
        parent: None,
        children: Vec::new(),
        length: None,
        label: tree.node(target).label.clone(),
    }];
    let mut keep = vec![false];
    let mut stack: Vec<(NodeId, NodeId, NodeId, f64)> = neighbours(target)
        .into_iter()
        .rev()
        .map(|(v, len)| (0, v, target, len))
        .collect();
    let mut visited: HashSet<NodeId> = HashSet::from([target]);
    while let Some((np, u, from, len)) = stack.pop() {
        if !visited.insert(u) {
            return Err(Error::InvalidTree("cycle while rerooting".into()));
        }
        let id = nodes.len();
        nodes.push(Node {
            parent: Some(np),
            children: Vec::new(),
            length: Some(len),
            label: tree.node(u).label.clone(),
        });
        nodes[np].children.push(id);
        keep.push(tree.is_tip(u));
        stack.extend(
            neighbours(u)
                .into_iter()
                .filter(|&(v, _)| v != from)
                .rev()
                .map(|(v, l)| (id, v, u, l)),
        );
    }
    prune(&nodes, 0, &keep)
}
