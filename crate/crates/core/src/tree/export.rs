use std::fmt::Write;

use super::Tree;

impl Tree {
    /// Graphviz rendering. Violating leaves are filled red.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph bicause_tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        for node in &self.nodes {
            let mut label = match &node.split {
                Some(s) => format!("{} <= {}\\n", escape(&s.feature), s.value),
                None => String::new(),
            };
            let _ = write!(label, "n = {}\\nprevalence = {:.3}", node.n, node.prevalence());
            if let Some(effect) = node.leaf_estimate.as_ref().and_then(|e| e.effect) {
                let _ = write!(label, "\\neffect = {effect:.4}");
            }
            let style = if node.violating {
                ", style=filled, fillcolor=red"
            } else {
                ""
            };
            let _ = writeln!(out, "  n{} [label=\"{}\"{}];", node.id, label, style);
            if let Some((l, r)) = node.children {
                let _ = writeln!(out, "  n{} -> n{} [label=\"yes\"];", node.id, l);
                let _ = writeln!(out, "  n{} -> n{} [label=\"no\"];", node.id, r);
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
