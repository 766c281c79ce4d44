//! Reflection-scaffolding engine for LLM-assisted creative coding.
//!
//! The engine keeps a versioned DAG of p5.js sketches per session, routes
//! dialogue through the reflection modes (General, R1, R2, R3), escalates
//! repeated same-mode turns into secondary templates, and performs the
//! LLM-backed node operations (modify, merge, spark).
//!
//! Everything that talks to a model goes through [`gateway::Gateway`], which
//! has a deterministic offline backend so whole sessions can be replayed
//! byte-for-byte.

pub mod dispatch;
pub mod engine;
pub mod gateway;
pub mod graph;
pub mod inspiration;
pub mod persist;
pub mod prompt;
pub mod session;
mod transforms;

pub use dispatch::{Decision, DispatchState, ReflectionMode, TemplateCatalog, TemplateSpec};
pub use engine::{Engine, EngineError, TurnOutcome, TransformOutcome};
pub use gateway::{EmbeddingVector, Gateway, GatewayError, StructuredReply};
pub use graph::{
    ChatTurn, ContextBundle, GraphError, GraphView, NodeId, NodeKind, NodeSummary, VersionGraph, VersionNode,
};
pub use inspiration::{InspirationEntry, InspirationIndex, SparkCatalog, SparkOption};
pub use persist::PersistError;
pub use prompt::{CallKind, PromptBundle, PromptLibrary};
pub use session::{SessionSettings, SessionState, Timestamp};
