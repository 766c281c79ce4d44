//! Prompt assembly for every LLM call.
//!
//! A [`PromptBundle`] is a pure function of its inputs; the same inputs give
//! byte-identical bundles, which is what makes mock replays reproducible.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dispatch::{ReflectionMode, TemplateSpec};
use crate::graph::{ChatTurn, ContextBundle, NodeId, VersionNode};
use crate::inspiration::InspirationEntry;

/// Placeholder in the General prompt that receives retrieved examples.
pub const EXAMPLES_SLOT: &str = "{{examples}}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    General,
    R1,
    R2,
    R3,
    Template,
    Modify,
    Merge,
}

impl CallKind {
    pub fn for_mode(mode: ReflectionMode) -> Self {
        match mode {
            ReflectionMode::General => Self::General,
            ReflectionMode::R1 => Self::R1,
            ReflectionMode::R2 => Self::R2,
            ReflectionMode::R3 => Self::R3,
        }
    }
}

/// Required reply keys. Template calls use the keys of their parent `mode`;
/// `mode` is ignored for every other kind.
pub fn expected_keys(kind: CallKind, mode: ReflectionMode) -> &'static [&'static str] {
    match kind {
        CallKind::General => &["code", "rationale", "summary", "reflection"],
        CallKind::R1 | CallKind::Modify | CallKind::Merge => &["code", "rationale", "reflection"],
        CallKind::R2 => &["code", "exploration", "reflection"],
        CallKind::R3 => &["code", "reflection", "advice"],
        CallKind::Template => expected_keys(CallKind::for_mode(mode), mode),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub context_block: String,
    pub examples_block: String,
    pub user_prompt: String,
    pub expected_keys: Vec<String>,
    pub call_kind: CallKind,
}

impl PromptBundle {
    /// System message with the examples slot filled.
    pub fn render_system(&self) -> String {
        self.system_prompt.replace(EXAMPLES_SLOT, &self.examples_block)
    }

    /// User message: context sections followed by the request.
    pub fn render_user(&self) -> String {
        let heading = match self.call_kind {
            CallKind::Modify => "### Code Inspiration Example",
            CallKind::Merge => "### Fusion Instruction",
            _ => "### Request",
        };
        format!("{}\n\n{}\n{}", self.context_block, heading, self.user_prompt)
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template `{template}` belongs to {template_mode}, not {mode}")]
    TemplateModeMismatch {
        template: String,
        template_mode: ReflectionMode,
        mode: ReflectionMode,
    },
    #[error("cannot merge node {0} with itself")]
    SameNode(NodeId),
    #[error("failed to read prompt file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

const FILES: [&str; 6] = ["general", "r1", "r2", "r3", "modify", "merge"];

/// The six base system prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptLibrary {
    pub general: String,
    pub r1: String,
    pub r2: String,
    pub r3: String,
    pub modify: String,
    pub merge: String,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        Self {
            general: include_str!("../data/prompts/general.md").to_string(),
            r1: include_str!("../data/prompts/r1.md").to_string(),
            r2: include_str!("../data/prompts/r2.md").to_string(),
            r3: include_str!("../data/prompts/r3.md").to_string(),
            modify: include_str!("../data/prompts/modify.md").to_string(),
            merge: include_str!("../data/prompts/merge.md").to_string(),
        }
    }

    /// Loads `general.md`, `r1.md`, ... `merge.md` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut texts = Vec::with_capacity(FILES.len());
        for name in FILES {
            let path = dir.join(format!("{name}.md"));
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            texts.push(text);
        }
        let mut it = texts.into_iter();
        let mut next = || it.next().expect("six prompt files");
        let lib = Self {
            general: next(),
            r1: next(),
            r2: next(),
            r3: next(),
            modify: next(),
            merge: next(),
        };
        log::info!("loaded prompts from {} (sha256 {})", dir.display(), lib.checksum());
        Ok(lib)
    }

    /// SHA-256 over all prompt texts, for reproducibility logs.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, text) in FILES.iter().zip(self.texts()) {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    fn texts(&self) -> [&str; 6] {
        [&self.general, &self.r1, &self.r2, &self.r3, &self.modify, &self.merge]
    }

    pub fn for_mode(&self, mode: ReflectionMode) -> &str {
        match mode {
            ReflectionMode::General => &self.general,
            ReflectionMode::R1 => &self.r1,
            ReflectionMode::R2 => &self.r2,
            ReflectionMode::R3 => &self.r3,
        }
    }

    /// Bundle for a dialogue turn.
    ///
    /// When a template governs the turn its prompt is appended after the mode
    /// prompt. Examples only fill the General prompt's slot.
    pub fn build_mode_prompt(
        &self,
        mode: ReflectionMode,
        template: Option<&TemplateSpec>,
        context: &ContextBundle,
        examples: &[InspirationEntry],
        user_prompt: &str,
        history_window: usize,
    ) -> Result<PromptBundle, PromptError> {
        let mut system_prompt = self.for_mode(mode).to_string();
        let call_kind = match template {
            Some(t) if t.mode != mode => {
                return Err(PromptError::TemplateModeMismatch {
                    template: t.id.clone(),
                    template_mode: t.mode,
                    mode,
                })
            }
            Some(t) => {
                write!(
                    system_prompt,
                    "\n\n## Secondary Reflection Template: {}\n{}\n\nFor this turn the template above takes precedence over the process described earlier. Reply with the same JSON keys.\n",
                    t.name, t.system_prompt
                )
                .unwrap();
                CallKind::Template
            }
            None => CallKind::for_mode(mode),
        };

        let examples_block = if mode == ReflectionMode::General {
            render_examples(examples)
        } else {
            String::new()
        };

        Ok(PromptBundle {
            system_prompt,
            context_block: render_context(&context.code, truncate_history(&context.history, history_window)),
            examples_block,
            user_prompt: user_prompt.to_string(),
            expected_keys: keys(expected_keys(call_kind, mode)),
            call_kind,
        })
    }

    /// Bundle for modifying `base` with an instruction or a Spark reference.
    /// Chat history is not included.
    pub fn build_modify_prompt(&self, base: &VersionNode, inspiration: &str) -> PromptBundle {
        PromptBundle {
            system_prompt: self.modify.clone(),
            context_block: format!("### Base Code\n{}", fenced(&base.code)),
            examples_block: String::new(),
            user_prompt: inspiration.to_string(),
            expected_keys: keys(expected_keys(CallKind::Modify, ReflectionMode::General)),
            call_kind: CallKind::Modify,
        }
    }

    /// Bundle for fusing `a` (Version A) and `b` (Version B).
    pub fn build_merge_prompt(
        &self,
        a: &VersionNode,
        b: &VersionNode,
        instruction: &str,
    ) -> Result<PromptBundle, PromptError> {
        if a.id == b.id {
            return Err(PromptError::SameNode(a.id));
        }
        Ok(PromptBundle {
            system_prompt: self.merge.clone(),
            context_block: format!(
                "### Version A\n{}\n\n### Version B\n{}",
                fenced(&a.code),
                fenced(&b.code)
            ),
            examples_block: String::new(),
            user_prompt: instruction.to_string(),
            expected_keys: keys(expected_keys(CallKind::Merge, ReflectionMode::General)),
            call_kind: CallKind::Merge,
        })
    }
}

/// The last `k` turns, in order.
pub fn truncate_history(turns: &[ChatTurn], k: usize) -> &[ChatTurn] {
    &turns[turns.len().saturating_sub(k)..]
}

fn keys(list: &[&str]) -> Vec<String> {
    list.iter().map(|k| k.to_string()).collect()
}

fn fenced(code: &str) -> String {
    format!("```javascript\n{code}\n```")
}

fn render_context(code: &str, history: &[ChatTurn]) -> String {
    let mut out = format!("### Current Code\n{}\n\n### Branch History\n", fenced(code));
    if history.is_empty() {
        out.push_str("(no previous turns)");
    }
    for turn in history {
        let label = match &turn.template_id {
            Some(t) => format!("{} / {t}", turn.mode),
            None => turn.mode.to_string(),
        };
        writeln!(out, "[{}] {label} user: {}", turn.seq, turn.user_prompt).unwrap();
        for (k, v) in turn.reply.fields.iter().filter(|(k, _)| *k != "code") {
            writeln!(out, "[{}] assistant {k}: {v}", turn.seq).unwrap();
        }
    }
    out.trim_end().to_string()
}

fn render_examples(examples: &[InspirationEntry]) -> String {
    examples
        .iter()
        .map(|e| format!("#### {}\n{}\n{}", e.title, e.description, fenced(&e.code)))
        .collect::<Vec<_>>()
        .join("\n\n")
}
