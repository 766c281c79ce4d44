//! Session operations that need prompts, templates, retrieval or a model.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dispatch::{Decision, DispatchError, ReflectionMode, TemplateCatalog};
use crate::gateway::{
    CachingEmbedder, Embedder, Gateway, GatewayError, HttpBackend, HttpEmbedder, MockEmbedder,
    ProviderConfig, StructuredReply,
};
use crate::graph::{ChatTurn, GraphError, NodeId, VersionNode};
use crate::inspiration::{IndexError, InspirationEntry, InspirationIndex, SparkCatalog};
use crate::prompt::{PromptError, PromptLibrary};
use crate::session::{SessionError, SessionState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("unknown spark `{0}`")]
    UnknownSpark(String),
    #[error("prompt must not be empty")]
    EmptyPrompt,
}

impl EngineError {
    /// Stable kebab-case code for wire responses.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Graph(e) => match e {
                GraphError::UnknownNode(_) => "unknown-node",
                GraphError::CannotDuplicateRoot => "cannot-duplicate-root",
                GraphError::CannotDeleteRoot => "cannot-delete-root",
                GraphError::HasChildren(_) => "has-children",
                GraphError::StaleSequence { .. } => "stale-sequence",
                GraphError::InvalidParents { .. } => "invalid-parents",
            },
            Self::Dispatch(e) => match e {
                DispatchError::NotInTemplate => "not-in-template",
                DispatchError::NoTemplates(_) => "no-templates",
                DispatchError::InvalidCatalog(_) => "invalid-catalog",
                DispatchError::Embedding(g) => gateway_code(g),
            },
            Self::Prompt(e) => match e {
                PromptError::TemplateModeMismatch { .. } => "template-mode-mismatch",
                PromptError::SameNode(_) => "same-node",
                PromptError::Io { .. } => "io-error",
            },
            Self::Gateway(g) => gateway_code(g),
            Self::Index(e) => match e {
                IndexError::UnreadableFile { .. } => "unreadable-file",
                IndexError::DuplicateId(_) => "duplicate-id",
                IndexError::InvalidEntry { .. } => "invalid-entry",
                IndexError::EmptyIndex => "empty-index",
                IndexError::InvalidK => "invalid-k",
                IndexError::Embedding(g) => gateway_code(g),
            },
            Self::Session(SessionError::InvalidSettings(_)) => "invalid-settings",
            Self::UnknownSpark(_) => "unknown-spark",
            Self::EmptyPrompt => "empty-prompt",
        }
    }

    /// Whether the failure came from the model provider rather than the caller.
    pub fn is_upstream(&self) -> bool {
        matches!(
            self.code(),
            "provider-error" | "malformed-reply" | "missing-keys" | "provider-config"
        )
    }
}

fn gateway_code(e: &GatewayError) -> &'static str {
    match e {
        GatewayError::Provider(_) => "provider-error",
        GatewayError::MalformedReply(_) => "malformed-reply",
        GatewayError::MissingKeys(_) => "missing-keys",
        GatewayError::EmptyText => "empty-text",
        GatewayError::DimMismatch(..) => "dim-mismatch",
        GatewayError::ZeroVector => "zero-vector",
        GatewayError::Config(_) => "provider-config",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnOutcome {
    pub reply: StructuredReply,
    pub template_id: Option<String>,
    pub template_name: Option<String>,
    pub decision: Decision,
    pub seq: u64,
    pub node_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformOutcome {
    pub node: VersionNode,
    pub reply: StructuredReply,
}

/// Shared, read-only machinery used by every session.
pub struct Engine {
    pub prompts: PromptLibrary,
    pub templates: TemplateCatalog,
    pub index: InspirationIndex,
    pub sparks: SparkCatalog,
    pub gateway: Gateway,
    pub embedder: Arc<dyn Embedder + Send + Sync>,
}

impl Engine {
    /// Bundled prompts and catalogs with an empty inspiration index.
    pub fn new(gateway: Gateway, embedder: Arc<dyn Embedder + Send + Sync>) -> Self {
        Self {
            prompts: PromptLibrary::builtin(),
            templates: TemplateCatalog::builtin(),
            index: InspirationIndex::new(),
            sparks: SparkCatalog::builtin(),
            gateway,
            embedder,
        }
    }

    /// Fully offline engine with the bundled corpus indexed.
    pub fn mock() -> Self {
        let mut engine = Self::new(Gateway::mock(), Arc::new(MockEmbedder::default()));
        engine
            .index_entries(InspirationIndex::builtin_entries())
            .expect("mock embedding of the bundled corpus");
        engine
    }

    /// Mock engine when `config.mock`, otherwise HTTP backends. The corpus
    /// comes from `corpus_dir` when given, else the bundled one.
    pub fn from_config(
        config: &ProviderConfig,
        corpus_dir: Option<&Path>,
        cache_dir: Option<&Path>,
    ) -> Result<Self, EngineError> {
        let mut engine = if config.mock {
            let mut e = Self::mock();
            e.index = InspirationIndex::new();
            e
        } else {
            let backend = HttpBackend::new(config.clone())?;
            let embedder = CachingEmbedder::new(Arc::new(HttpEmbedder::new(config.clone())?));
            Self::new(Gateway::new(Arc::new(backend)), Arc::new(embedder))
        };
        let model_key = if config.mock { "mock".to_string() } else { config.embed_model.clone() };
        match (corpus_dir, cache_dir) {
            (Some(dir), Some(cache)) => {
                let embedder = engine.embedder.clone();
                engine.index.ingest_cached(dir, cache, &model_key, &*embedder)?;
            }
            (Some(dir), None) => {
                let embedder = engine.embedder.clone();
                engine.index.ingest(dir, &*embedder)?;
            }
            (None, _) => engine.index_entries(InspirationIndex::builtin_entries())?,
        }
        log::info!(
            "engine ready: {} inspiration entries, {} templates, prompts sha256 {}",
            engine.index.len(),
            engine.templates.len(),
            engine.prompts.checksum()
        );
        Ok(engine)
    }

    pub fn with_gateway(mut self, gateway: Gateway) -> Self {
        self.gateway = gateway;
        self
    }

    fn index_entries(&mut self, entries: Vec<InspirationEntry>) -> Result<(), EngineError> {
        let embedder = self.embedder.clone();
        let tagged = entries
            .into_iter()
            .map(|e| (format!("builtin:{}", e.id).into(), e))
            .collect();
        self.index.insert_all(tagged, &*embedder)?;
        Ok(())
    }

    /// Few-shot examples for a General turn; none when the index is empty.
    pub fn examples_for(&self, prompt: &str, k: usize) -> Result<Vec<InspirationEntry>, EngineError> {
        if self.index.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.index.retrieve(prompt, k, &*self.embedder)?)
    }

    /// One dialogue exchange on the active node.
    ///
    /// The second consecutive turn in the same reflective mode is governed by
    /// a secondary template, after which the template is exited. On error the
    /// session is left exactly as it was.
    pub fn turn(
        &self,
        session: &mut SessionState,
        mode: ReflectionMode,
        prompt: &str,
    ) -> Result<TurnOutcome, EngineError> {
        if prompt.trim().is_empty() {
            return Err(EngineError::EmptyPrompt);
        }
        let saved = session.dispatch.clone();
        let result = self.turn_inner(session, mode, prompt);
        if result.is_err() {
            session.dispatch = saved;
        }
        result
    }

    fn turn_inner(
        &self,
        session: &mut SessionState,
        mode: ReflectionMode,
        prompt: &str,
    ) -> Result<TurnOutcome, EngineError> {
        let decision = session.dispatch.observe(mode);
        let template = match decision {
            Decision::TemplateEligible => Some(self.templates.select(mode, prompt, &*self.embedder)?),
            Decision::Plain => None,
        };
        if let Some(t) = template {
            session.dispatch.enter_template(&t.id);
        }

        let node_id = session.graph.active_id();
        let context = session.graph.context(node_id)?;
        let examples = if mode == ReflectionMode::General {
            self.examples_for(prompt, session.settings.fewshot_k as usize)?
        } else {
            Vec::new()
        };
        let bundle = self.prompts.build_mode_prompt(
            mode,
            template,
            &context,
            &examples,
            prompt,
            session.settings.context_window_turns as usize,
        )?;
        let reply = self.gateway.complete(&bundle, &session.settings.chat_model)?;

        let seq = session.graph.next_turn_seq();
        session.graph.record_turn(ChatTurn {
            seq,
            mode,
            template_id: template.map(|t| t.id.clone()),
            user_prompt: prompt.to_string(),
            reply: reply.clone(),
            created_at: session.now(),
        })?;
        if template.is_some() {
            session.dispatch.exit_template()?;
        }
        Ok(TurnOutcome {
            reply,
            template_id: template.map(|t| t.id.clone()),
            template_name: template.map(|t| t.name.clone()),
            decision,
            seq,
            node_id,
        })
    }
}
