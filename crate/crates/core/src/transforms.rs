//! Modify, merge and spark: LLM-backed operations that derive a new node.
//!
//! The model is called before the graph is touched, so a gateway failure
//! leaves the session unchanged.

use crate::dispatch::ReflectionMode;
use crate::engine::{Engine, EngineError, TransformOutcome};
use crate::gateway::StructuredReply;
use crate::graph::{ChatTurn, NodeId, NodeKind};
use crate::prompt::PromptError;
use crate::session::SessionState;

const TITLE_CHARS: usize = 40;

struct Derived {
    kind: NodeKind,
    parents: Vec<NodeId>,
    title: String,
    description: String,
    preview_asset: Option<String>,
    instruction: String,
}

impl Engine {
    /// Derives a `modified` child of `node_id` following `instruction`.
    pub fn modify_node(
        &self,
        session: &mut SessionState,
        node_id: NodeId,
        instruction: &str,
    ) -> Result<TransformOutcome, EngineError> {
        let base = session.graph.node(node_id)?;
        let bundle = self.prompts.build_modify_prompt(base, instruction);
        let reply = self.gateway.complete(&bundle, &session.settings.chat_model)?;
        let title = title_from(instruction).unwrap_or_else(|| format!("modify of {node_id}"));
        commit(
            session,
            Derived {
                kind: NodeKind::Modified,
                parents: vec![node_id],
                title,
                description: instruction.to_string(),
                preview_asset: None,
                instruction: instruction.to_string(),
            },
            reply,
        )
    }

    /// Fuses `a` (Version A) and `b` (Version B) into a `merged` node.
    pub fn merge_nodes(
        &self,
        session: &mut SessionState,
        a: NodeId,
        b: NodeId,
        instruction: &str,
    ) -> Result<TransformOutcome, EngineError> {
        if a == b {
            return Err(PromptError::SameNode(a).into());
        }
        let (na, nb) = (session.graph.node(a)?, session.graph.node(b)?);
        let bundle = self.prompts.build_merge_prompt(na, nb, instruction)?;
        let reply = self.gateway.complete(&bundle, &session.settings.chat_model)?;
        let title = title_from(instruction).unwrap_or_else(|| format!("merge of {a} and {b}"));
        commit(
            session,
            Derived {
                kind: NodeKind::Merged,
                parents: vec![a, b],
                title,
                description: instruction.to_string(),
                preview_asset: None,
                instruction: instruction.to_string(),
            },
            reply,
        )
    }

    /// Applies a Spark: a modify whose inspiration is the Spark's reference
    /// snippet, saved as a `spark` node.
    pub fn apply_spark(
        &self,
        session: &mut SessionState,
        node_id: NodeId,
        spark_id: &str,
    ) -> Result<TransformOutcome, EngineError> {
        let base = session.graph.node(node_id)?;
        let spark = self
            .sparks
            .get(spark_id)
            .ok_or_else(|| EngineError::UnknownSpark(spark_id.to_string()))?;
        let bundle = self.prompts.build_modify_prompt(base, &spark.reference);
        let reply = self.gateway.complete(&bundle, &session.settings.chat_model)?;
        commit(
            session,
            Derived {
                kind: NodeKind::Spark,
                parents: vec![node_id],
                title: spark.label.clone(),
                description: format!("Spark: {}", spark.label),
                preview_asset: Some(spark.preview_asset.clone()),
                instruction: spark.reference.clone(),
            },
            reply,
        )
    }
}

fn title_from(instruction: &str) -> Option<String> {
    let line = instruction.lines().map(str::trim).find(|l| !l.is_empty())?;
    Some(line.chars().take(TITLE_CHARS).collect())
}

/// Adds the derived node, activates it and records the exchange on it.
fn commit(session: &mut SessionState, d: Derived, reply: StructuredReply) -> Result<TransformOutcome, EngineError> {
    let now = session.now();
    let id = session.graph.add_derived(
        d.kind,
        d.parents,
        reply.code().to_string(),
        d.title,
        d.description,
        d.preview_asset,
        now,
    )?;
    let seq = session.graph.next_turn_seq();
    let created_at = session.now();
    session.graph.record_turn(ChatTurn {
        seq,
        mode: ReflectionMode::General,
        template_id: None,
        user_prompt: d.instruction,
        reply: reply.clone(),
        created_at,
    })?;
    let node = session.graph.node(id)?.clone();
    Ok(TransformOutcome { node, reply })
}
