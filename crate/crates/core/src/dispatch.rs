//! Reflection modes and secondary-template escalation.
//!
//! Two consecutive turns in the same reflective mode (R1, R2 or R3) make the
//! second one eligible for a secondary template. Which template is chosen
//! depends on the prompt: an explicit keyword wins, otherwise the template
//! whose description is closest in embedding space.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{cosine, Embedder, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReflectionMode {
    General,
    R1,
    R2,
    R3,
}

impl ReflectionMode {
    pub const ALL: [ReflectionMode; 4] = [Self::General, Self::R1, Self::R2, Self::R3];

    /// Whether the mode takes part in template escalation.
    pub fn is_reflective(self) -> bool {
        !matches!(self, Self::General)
    }
}

impl fmt::Display for ReflectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::General => "General",
            Self::R1 => "R1",
            Self::R2 => "R2",
            Self::R3 => "R3",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ReflectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Ok(Self::General),
            "r1" => Ok(Self::R1),
            "r2" => Ok(Self::R2),
            "r3" => Ok(Self::R3),
            other => Err(format!("unknown reflection mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub id: String,
    pub mode: ReflectionMode,
    pub name: String,
    /// Case-folded trigger strings; the folded name is always one of them.
    pub keywords: Vec<String>,
    /// Purpose sentence used for semantic matching.
    pub description: String,
    pub system_prompt: String,
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("not in a secondary template")]
    NotInTemplate,
    #[error("mode {0} has no secondary templates")]
    NoTemplates(ReflectionMode),
    #[error("template catalog is invalid: {0}")]
    InvalidCatalog(String),
    #[error("embedding failed during template selection: {0}")]
    Embedding(#[from] GatewayError),
}

const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.json");

/// The ordered list of secondary templates. Order is the tie-breaker for both
/// selection paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateCatalog {
    templates: Vec<TemplateSpec>,
}

impl TemplateCatalog {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("bundled template catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, DispatchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DispatchError::InvalidCatalog(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, DispatchError> {
        let templates: Vec<TemplateSpec> =
            serde_json::from_str(text).map_err(|e| DispatchError::InvalidCatalog(e.to_string()))?;
        Self::new(templates)
    }

    pub fn new(templates: Vec<TemplateSpec>) -> Result<Self, DispatchError> {
        let mut ids = BTreeSet::new();
        for t in &templates {
            let bad = |msg: &str| Err(DispatchError::InvalidCatalog(format!("{}: {msg}", t.id)));
            if !ids.insert(t.id.as_str()) {
                return bad("duplicate id");
            }
            if !t.mode.is_reflective() {
                return bad("templates must belong to R1, R2 or R3");
            }
            if t.keywords.is_empty() {
                return bad("keywords are empty");
            }
            if t.keywords.iter().any(|k| k.is_empty() || *k != k.to_lowercase()) {
                return bad("keywords must be nonempty and case-folded");
            }
            if !t.keywords.contains(&t.name.to_lowercase()) {
                return bad("the folded name must be a keyword");
            }
            if t.description.trim().is_empty() || t.system_prompt.trim().is_empty() {
                return bad("description and system_prompt must be nonempty");
            }
        }
        Ok(Self { templates })
    }

    pub fn all(&self) -> &[TemplateSpec] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TemplateSpec> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn for_mode(&self, mode: ReflectionMode) -> impl Iterator<Item = &TemplateSpec> {
        self.templates.iter().filter(move |t| t.mode == mode)
    }

    /// Picks the template for a templated turn.
    ///
    /// Keyword path: the first template (catalog order) with any keyword
    /// contained in the case-folded prompt. No embedding call is made.
    /// Semantic path: argmax of cosine similarity between the prompt and each
    /// template description; ties go to the earlier template.
    pub fn select(
        &self,
        mode: ReflectionMode,
        user_prompt: &str,
        embedder: &dyn Embedder,
    ) -> Result<&TemplateSpec, DispatchError> {
        let candidates: Vec<&TemplateSpec> = self.for_mode(mode).collect();
        if candidates.is_empty() {
            return Err(DispatchError::NoTemplates(mode));
        }
        let folded = user_prompt.to_lowercase();
        if let Some(t) = candidates
            .iter()
            .find(|t| t.keywords.iter().any(|k| folded.contains(k.as_str())))
        {
            return Ok(t);
        }

        let query = embedder.embed(user_prompt)?;
        let mut best: Option<(&TemplateSpec, f64)> = None;
        for t in candidates {
            let v = embedder.embed(&t.description)?;
            let score = cosine(&query, &v)?;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((t, score));
            }
        }
        Ok(best.expect("candidates nonempty").0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Plain,
    TemplateEligible,
}

/// Consecutive-mode counter kept per session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchState {
    pub last_mode: Option<ReflectionMode>,
    pub run_length: u32,
    pub in_template: Option<String>,
}

impl DispatchState {
    /// Registers a turn in `mode` and says whether it may use a template.
    pub fn observe(&mut self, mode: ReflectionMode) -> Decision {
        let repeat = self.last_mode == Some(mode) && self.run_length >= 1;
        if self.last_mode == Some(mode) {
            self.run_length += 1;
        } else {
            self.last_mode = Some(mode);
            self.run_length = 1;
        }
        if repeat && mode.is_reflective() {
            Decision::TemplateEligible
        } else {
            Decision::Plain
        }
    }

    pub fn enter_template(&mut self, template_id: impl Into<String>) {
        self.in_template = Some(template_id.into());
    }

    /// Leaves the template and restarts the run counter.
    pub fn exit_template(&mut self) -> Result<(), DispatchError> {
        if self.in_template.take().is_none() {
            return Err(DispatchError::NotInTemplate);
        }
        self.run_length = 0;
        self.last_mode = None;
        Ok(())
    }
}
