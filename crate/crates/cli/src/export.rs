//! Graph exports: Graphviz DOT and the JSON graph view.

use std::fmt::Write;

use reflexa_core::{NodeKind, SessionState};

pub fn to_json(session: &SessionState) -> String {
    let mut text = serde_json::to_string_pretty(&serde_json::json!({
        "session_id": session.session_id,
        "graph": session.graph.view(),
    }))
    .expect("graph view serializes");
    text.push('\n');
    text
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// Nodes in creation order, edges parent to child, active node in bold.
pub fn to_dot(session: &SessionState) -> String {
    let view = session.graph.view();
    let mut out = format!("digraph \"{}\" {{\n  rankdir=TB;\n  node [shape=box];\n", escape(&session.session_id));
    for n in &view.nodes {
        let kind = serde_json::to_value(n.kind).unwrap();
        let mut attrs = format!(
            "label=\"{}\\n{} {}\"",
            escape(&n.title),
            kind.as_str().unwrap_or_default(),
            n.id
        );
        if n.kind == NodeKind::Merged {
            attrs.push_str(", shape=ellipse");
        }
        if n.id == view.active_id {
            attrs.push_str(", style=bold");
        }
        writeln!(out, "  \"{}\" [{attrs}];", n.id).unwrap();
    }
    for (from, to) in &view.edges {
        writeln!(out, "  \"{from}\" -> \"{to}\";").unwrap();
    }
    out.push_str("}\n");
    out
}
