use super::{Node, Tree};
use crate::error::{Error, Result};
use crate::stats::Correction;

/// Multiple-testing pruning.
///
/// The correction runs once over the raw p-values of every internal node of
/// `tree`. A split survives when its own hypothesis is rejected or when any
/// split below it survives; everything else collapses into a leaf. Surviving
/// splits carry their adjusted p-value and node ids are renumbered in
/// preorder.
pub fn prune(tree: &Tree, alpha: f64, correction: Correction) -> Result<Tree> {
    let internal: Vec<usize> = tree.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.id).collect();
    let raw: Vec<f64> = internal
        .iter()
        .map(|&id| {
            tree.nodes[id]
                .split
                .as_ref()
                .map(|s| s.p_raw)
                .ok_or_else(|| Error::MalformedTree(format!("node {id} has children but no split")))
        })
        .collect::<Result<_>>()?;
    let result = correction.apply(&raw, alpha)?;

    let mut adjusted = vec![None; tree.nodes.len()];
    let mut rejected = vec![false; tree.nodes.len()];
    for (k, &id) in internal.iter().enumerate() {
        adjusted[id] = Some(result.adjusted_p[k]);
        rejected[id] = result.reject[k];
    }

    // Children always carry larger ids than their parent.
    let mut keep = vec![false; tree.nodes.len()];
    for id in (0..tree.nodes.len()).rev() {
        if let Some((l, r)) = tree.nodes[id].children {
            keep[id] = rejected[id] || keep[l] || keep[r];
        }
    }

    let mut nodes = Vec::with_capacity(tree.nodes.len());
    copy_subtree(tree, 0, &keep, &adjusted, &mut nodes);
    Ok(Tree {
        nodes,
        ..tree.clone()
    })
}

fn copy_subtree(tree: &Tree, old: usize, keep: &[bool], adjusted: &[Option<f64>], out: &mut Vec<Node>) -> usize {
    let src = &tree.nodes[old];
    let id = out.len();
    out.push(Node {
        id,
        split: None,
        children: None,
        violating: false,
        leaf_estimate: None,
        ..src.clone()
    });
    if let (true, Some(split), Some((l, r))) = (keep[old], &src.split, src.children) {
        let left = copy_subtree(tree, l, keep, adjusted, out);
        let right = copy_subtree(tree, r, keep, adjusted, out);
        let mut split = split.clone();
        split.p_adjusted = adjusted[old];
        out[id].split = Some(split);
        out[id].children = Some((left, right));
    }
    id
}
