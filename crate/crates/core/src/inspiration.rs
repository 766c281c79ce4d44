//! Few-shot inspiration corpus and the Spark quick-transform catalog.
//!
//! The corpus is small (tens to hundreds of sketches), so retrieval is an
//! exact full scan over cosine similarity.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{cosine, Embedder, EmbeddingVector, GatewayError};
use crate::graph::VersionNode;

/// Source directory of the bundled corpus.
pub const BUILTIN_CORPUS_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/inspiration");

const BUILTIN_CORPUS: [&str; 20] = [
    include_str!("../data/inspiration/01-bouncing-ball.json"),
    include_str!("../data/inspiration/02-recursive-tree.json"),
    include_str!("../data/inspiration/03-perlin-noise-terrain.json"),
    include_str!("../data/inspiration/04-flow-field.json"),
    include_str!("../data/inspiration/05-particle-fountain.json"),
    include_str!("../data/inspiration/06-game-of-life.json"),
    include_str!("../data/inspiration/07-mandelbrot.json"),
    include_str!("../data/inspiration/08-sine-lissajous.json"),
    include_str!("../data/inspiration/09-color-wheel.json"),
    include_str!("../data/inspiration/10-spiral-typography.json"),
    include_str!("../data/inspiration/11-rotating-cubes.json"),
    include_str!("../data/inspiration/12-mouse-painter.json"),
    include_str!("../data/inspiration/13-starfield.json"),
    include_str!("../data/inspiration/14-voronoi-cells.json"),
    include_str!("../data/inspiration/15-sound-visualizer.json"),
    include_str!("../data/inspiration/16-generative-grid.json"),
    include_str!("../data/inspiration/17-orbiting-planets.json"),
    include_str!("../data/inspiration/18-reaction-diffusion.json"),
    include_str!("../data/inspiration/19-kinetic-lines.json"),
    include_str!("../data/inspiration/20-breathing-circles.json"),
];

const BUILTIN_SPARKS: &str = include_str!("../data/sparks.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InspirationEntry {
    pub id: String,
    pub title: String,
    pub description: String,
    pub code: String,
    pub source: String,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("duplicate inspiration id `{0}`")]
    DuplicateId(String),
    #[error("invalid entry in {path}: {reason}")]
    InvalidEntry { path: PathBuf, reason: String },
    #[error("the inspiration index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Embedding(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Indexed {
    entry: InspirationEntry,
    embedding: EmbeddingVector,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    checksum: String,
    entries: Vec<Indexed>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InspirationIndex {
    entries: BTreeMap<String, Indexed>,
}

impl InspirationIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// The bundled 20-sketch corpus, parsed but not embedded.
    pub fn builtin_entries() -> Vec<InspirationEntry> {
        BUILTIN_CORPUS
            .iter()
            .map(|text| serde_json::from_str(text).expect("bundled corpus entry is valid"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn get(&self, id: &str) -> Option<&InspirationEntry> {
        self.entries.get(id).map(|i| &i.entry)
    }

    /// Embeds and inserts `entries`, replacing any with the same id.
    /// Nothing is inserted if any entry is invalid or fails to embed.
    pub fn insert_all(
        &mut self,
        entries: Vec<(PathBuf, InspirationEntry)>,
        embedder: &dyn Embedder,
    ) -> Result<usize, IndexError> {
        let mut seen = BTreeSet::new();
        let mut staged = Vec::with_capacity(entries.len());
        for (path, entry) in entries {
            if entry.id.trim().is_empty() {
                return Err(IndexError::InvalidEntry { path, reason: "empty id".into() });
            }
            if entry.description.trim().is_empty() {
                return Err(IndexError::InvalidEntry { path, reason: "empty description".into() });
            }
            if !seen.insert(entry.id.clone()) {
                return Err(IndexError::DuplicateId(entry.id));
            }
            let embedding = embedder.embed(&entry.description)?;
            staged.push(Indexed { entry, embedding });
        }
        let n = staged.len();
        for item in staged {
            self.entries.insert(item.entry.id.clone(), item);
        }
        Ok(n)
    }

    /// Ingests every `*.json` file in `dir`. Re-ingesting the same files
    /// leaves the index unchanged.
    pub fn ingest(&mut self, dir: &Path, embedder: &dyn Embedder) -> Result<usize, IndexError> {
        let files = read_corpus(dir)?;
        let parsed = files
            .into_iter()
            .map(|(path, bytes)| {
                serde_json::from_slice::<InspirationEntry>(&bytes)
                    .map(|e| (path.clone(), e))
                    .map_err(|e| IndexError::UnreadableFile { path, reason: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.insert_all(parsed, embedder)
    }

    /// Like [`ingest`](Self::ingest), but reuses embeddings stored in
    /// `cache_dir` when the corpus bytes and `model_key` are unchanged.
    pub fn ingest_cached(
        &mut self,
        dir: &Path,
        cache_dir: &Path,
        model_key: &str,
        embedder: &dyn Embedder,
    ) -> Result<usize, IndexError> {
        let files = read_corpus(dir)?;
        let mut h = Sha256::new();
        h.update(model_key.as_bytes());
        for (path, bytes) in &files {
            h.update([0]);
            h.update(path.file_name().unwrap_or_default().as_encoded_bytes());
            h.update([0]);
            h.update(bytes);
        }
        let checksum = hex::encode(h.finalize());
        let cache_path = cache_dir.join(format!("inspiration-{}.json", &checksum[..16]));

        if let Ok(text) = std::fs::read_to_string(&cache_path) {
            if let Ok(cache) = serde_json::from_str::<CacheFile>(&text) {
                if cache.checksum == checksum {
                    log::info!("inspiration index loaded from cache {}", cache_path.display());
                    let n = cache.entries.len();
                    for item in cache.entries {
                        self.entries.insert(item.entry.id.clone(), item);
                    }
                    return Ok(n);
                }
            }
        }

        let n = self.ingest(dir, embedder)?;
        let ids: BTreeSet<String> = files
            .iter()
            .filter_map(|(_, b)| serde_json::from_slice::<InspirationEntry>(b).ok().map(|e| e.id))
            .collect();
        let cache = CacheFile {
            checksum,
            entries: ids.iter().filter_map(|id| self.entries.get(id).cloned()).collect(),
        };
        let written = std::fs::create_dir_all(cache_dir)
            .and_then(|_| std::fs::write(&cache_path, serde_json::to_vec(&cache).expect("serializable")));
        if let Err(e) = written {
            log::warn!("could not write inspiration cache {}: {e}", cache_path.display());
        }
        Ok(n)
    }

    /// Top-`k` entries by cosine similarity to `query`, best first; ties go
    /// to the smaller id.
    pub fn retrieve(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<InspirationEntry>, IndexError> {
        Ok(self
            .retrieve_scored(query, k, embedder)?
            .into_iter()
            .map(|(e, _)| e)
            .collect())
    }

    pub fn retrieve_scored(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<(InspirationEntry, f64)>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let q = embedder.embed(query)?;
        let mut scored = self
            .entries
            .values()
            .map(|i| cosine(&q, &i.embedding).map(|s| (&i.entry, s)))
            .collect::<Result<Vec<_>, _>>()?;
        scored.sort_by(|(a, sa), (b, sb)| sb.total_cmp(sa).then_with(|| a.id.cmp(&b.id)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(e, s)| (e.clone(), s))
            .collect())
    }
}

fn read_corpus(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, IndexError> {
    let unreadable = |path: &Path, e: std::io::Error| IndexError::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| unreadable(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| std::fs::read(&p).map(|b| (p.clone(), b)).map_err(|e| unreadable(&p, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparkOption {
    pub id: String,
    pub label: String,
    /// Snippet handed to the modify prompt as the inspiration example.
    pub reference: String,
    pub preview_asset: String,
}

#[derive(Debug, Error)]
pub enum SparkError {
    #[error("spark catalog is invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparkCatalog {
    options: Vec<SparkOption>,
}

impl SparkCatalog {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_SPARKS).expect("bundled spark catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, SparkError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SparkError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SparkError> {
        let options: Vec<SparkOption> =
            serde_json::from_str(text).map_err(|e| SparkError::Invalid(e.to_string()))?;
        let mut ids = BTreeSet::new();
        for o in &options {
            if !ids.insert(o.id.as_str()) {
                return Err(SparkError::Invalid(format!("duplicate id `{}`", o.id)));
            }
            if o.reference.trim().is_empty() {
                return Err(SparkError::Invalid(format!("`{}` has an empty reference", o.id)));
            }
        }
        Ok(Self { options })
    }

    pub fn all(&self) -> &[SparkOption] {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SparkOption> {
        self.options.iter().find(|o| o.id == id)
    }

    /// Options offered for `node`. Currently the full catalog for every node.
    pub fn options_for(&self, _node: &VersionNode) -> &[SparkOption] {
        &self.options
    }
}
