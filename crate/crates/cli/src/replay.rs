//! Re-derives every recorded exchange of a mock-mode session and checks it
//! against the file.
//!
//! Inputs are rebuilt from the graph: a dialogue turn sees its node's code
//! and the branch history older than itself; a derived node's exchange sees
//! its parents' code. The dispatch counter is re-run over dialogue turns in
//! sequence order to confirm which turns were templated.

use reflexa_core::persist;
use reflexa_core::prompt::CallKind;
use reflexa_core::{ChatTurn, ContextBundle, DispatchState, Decision, Engine, NodeKind, SessionState, VersionNode};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub seq: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub checked: usize,
    /// Turns whose inputs no longer exist (a merge parent was deleted).
    pub skipped: Vec<u64>,
    pub divergences: Vec<Divergence>,
    /// Whether re-serializing the loaded session reproduces the input bytes.
    pub canonical: bool,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.divergences.is_empty() && self.canonical
    }
}

pub fn replay(engine: &Engine, session: &SessionState, original: &str) -> ReplayReport {
    let mut report = ReplayReport {
        canonical: persist::to_string(session) == original,
        ..ReplayReport::default()
    };
    let mut turns: Vec<(&VersionNode, &ChatTurn)> = session
        .graph
        .nodes()
        .flat_map(|n| n.turns.iter().map(move |t| (n, t)))
        .collect();
    turns.sort_by_key(|(_, t)| t.seq);

    let mut dispatch = DispatchState::default();
    for (node, turn) in turns {
        let diverge = |reason: String| Divergence { seq: turn.seq, reason };
        let outcome = match turn.reply.call_kind {
            CallKind::Modify | CallKind::Merge => check_derived(engine, session, node, turn),
            _ => check_dialogue(engine, session, &mut dispatch, node, turn),
        };
        match outcome {
            Ok(true) => report.checked += 1,
            Ok(false) => report.skipped.push(turn.seq),
            Err(reason) => report.divergences.push(diverge(reason)),
        }
    }
    report
}

fn check_dialogue(
    engine: &Engine,
    session: &SessionState,
    dispatch: &mut DispatchState,
    node: &VersionNode,
    turn: &ChatTurn,
) -> Result<bool, String> {
    let decision = dispatch.observe(turn.mode);
    let template = match (decision, &turn.template_id) {
        (Decision::Plain, None) => None,
        (Decision::TemplateEligible, Some(id)) => {
            let chosen = engine
                .templates
                .select(turn.mode, &turn.user_prompt, &*engine.embedder)
                .map_err(|e| e.to_string())?;
            if &chosen.id != id {
                return Err(format!("template {} recorded, {} selected", id, chosen.id));
            }
            dispatch.enter_template(id.clone());
            Some(chosen)
        }
        (d, id) => return Err(format!("dispatch decided {d:?} but template is {id:?}")),
    };
    if template.is_some() {
        dispatch.exit_template().map_err(|e| e.to_string())?;
    }

    let history = session
        .graph
        .branch_history(node.id)
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|t| t.seq < turn.seq)
        .collect();
    let context = ContextBundle {
        node_id: node.id,
        code: node.code.clone(),
        history,
    };
    let examples = if turn.mode == reflexa_core::ReflectionMode::General {
        engine
            .examples_for(&turn.user_prompt, session.settings.fewshot_k as usize)
            .map_err(|e| e.to_string())?
    } else {
        Vec::new()
    };
    let bundle = engine
        .prompts
        .build_mode_prompt(
            turn.mode,
            template,
            &context,
            &examples,
            &turn.user_prompt,
            session.settings.context_window_turns as usize,
        )
        .map_err(|e| e.to_string())?;
    compare(engine, session, &bundle, turn)
}

fn check_derived(engine: &Engine, session: &SessionState, node: &VersionNode, turn: &ChatTurn) -> Result<bool, String> {
    let parents: Vec<&VersionNode> = node.parent_ids.iter().filter_map(|p| session.graph.get(*p)).collect();
    let bundle = match (node.kind, parents.as_slice()) {
        (NodeKind::Modified | NodeKind::Spark, [base]) => engine.prompts.build_modify_prompt(base, &turn.user_prompt),
        (NodeKind::Merged, [a, b]) => engine
            .prompts
            .build_merge_prompt(a, b, &turn.user_prompt)
            .map_err(|e| e.to_string())?,
        (NodeKind::Merged, [_]) => return Ok(false),
        (kind, p) => return Err(format!("{kind:?} node with {} parent(s) has a derived exchange", p.len())),
    };
    if node.turns.first().map(|t| t.seq) == Some(turn.seq) && node.code != turn.reply.code() {
        return Err("node code differs from the reply that created it".into());
    }
    compare(engine, session, &bundle, turn)
}

fn compare(
    engine: &Engine,
    session: &SessionState,
    bundle: &reflexa_core::PromptBundle,
    turn: &ChatTurn,
) -> Result<bool, String> {
    let reply = engine
        .gateway
        .complete(bundle, &session.settings.chat_model)
        .map_err(|e| e.to_string())?;
    if reply != turn.reply {
        return Err(format!("reply differs ({:?} call)", bundle.call_kind));
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::{run_script, Script};
    use reflexa_core::SessionSettings;

    fn session() -> SessionState {
        let engine = Engine::mock();
        let mut s = SessionState::create("r", SessionSettings::mock()).unwrap();
        let script = Script::parse(
            r#"[
            {"op":"turn","mode":"General","prompt":"a garden"},
            {"op":"collect","code":"circle(1,1,1);","title":"g"},
            {"op":"turn","mode":"R2","prompt":"how do parts connect"},
            {"op":"turn","mode":"R2","prompt":"anything"},
            {"op":"modify","node":"1","instruction":"add wind"},
            {"op":"spark","node":"1","spark":"kaleidoscope"},
            {"op":"merge","a":"2","b":"3","instruction":"both"},
            {"op":"turn","mode":"R3","prompt":"visual style"}
        ]"#,
        )
        .unwrap();
        run_script(&engine, &script.commands, &mut s, None, |_| {}).unwrap();
        s
    }

    #[test]
    fn faithful_session_replays_clean() {
        let s = session();
        let text = persist::to_string(&s);
        let report = replay(&Engine::mock(), &s, &text);
        assert_eq!(report.divergences, vec![]);
        assert_eq!(report.checked, 7);
        assert!(report.ok());
    }

    #[test]
    fn tampering_is_detected() {
        let mut s = session();
        let text = persist::to_string(&s);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["nodes"][1]["turns"][0]["user_prompt"] = "edited".into();
        let tampered = persist::from_str(&v.to_string()).unwrap();
        let report = replay(&Engine::mock(), &tampered, &v.to_string());
        assert!(!report.canonical);
        assert_eq!(report.divergences[0].seq, 2);

        s.graph.delete(reflexa_core::NodeId(2), true).unwrap();
        let report = replay(&Engine::mock(), &s, &persist::to_string(&s));
        assert_eq!(report.skipped.len(), 1);
        assert!(report.ok());
    }
}
