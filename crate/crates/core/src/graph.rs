//! The per-session version DAG.
//!
//! Nodes are immutable sketch snapshots linked to the node(s) they were
//! derived from. Chat turns are attached to whichever node was active when
//! they happened, and the dialogue context for a node is the concatenation
//! of turns along its branch path.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dispatch::ReflectionMode;
use crate::gateway::StructuredReply;
use crate::session::Timestamp;

/// Sequential node identifier, rendered as a decimal string on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Collected,
    Modified,
    Merged,
    Spark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub seq: u64,
    pub mode: ReflectionMode,
    pub template_id: Option<String>,
    pub user_prompt: String,
    pub reply: StructuredReply,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionNode {
    pub id: NodeId,
    pub parent_ids: Vec<NodeId>,
    pub kind: NodeKind,
    pub code: String,
    pub title: String,
    pub description: String,
    pub preview_asset: Option<String>,
    pub created_at: Timestamp,
    pub turns: Vec<ChatTurn>,
}

/// Node metadata without code or turns, for graph views.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub kind: NodeKind,
    pub title: String,
    pub parent_ids: Vec<NodeId>,
    pub preview_asset: Option<String>,
    pub turn_count: usize,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphView {
    pub active_id: NodeId,
    pub nodes: Vec<NodeSummary>,
    pub edges: Vec<(NodeId, NodeId)>,
}

/// Code plus branch-scoped dialogue for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub node_id: NodeId,
    pub code: String,
    pub history: Vec<ChatTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("the root node cannot be duplicated")]
    CannotDuplicateRoot,
    #[error("the root node cannot be deleted")]
    CannotDeleteRoot,
    #[error("node {0} has children; pass recursive to delete the subtree")]
    HasChildren(NodeId),
    #[error("turn sequence {seq} is stale (next expected at least {expected})")]
    StaleSequence { seq: u64, expected: u64 },
    #[error("invalid parent set for a {kind:?} node: {count} parent(s)")]
    InvalidParents { kind: NodeKind, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VersionGraph {
    nodes: BTreeMap<NodeId, VersionNode>,
    active_id: NodeId,
    next_seq: u64,
    next_turn_seq: u64,
}

impl VersionGraph {
    /// A graph holding only an empty root node, which is active.
    pub fn new(now: Timestamp) -> Self {
        let root = VersionNode {
            id: NodeId(0),
            parent_ids: Vec::new(),
            kind: NodeKind::Root,
            code: String::new(),
            title: "root".to_string(),
            description: String::new(),
            preview_asset: None,
            created_at: now,
            turns: Vec::new(),
        };
        let mut nodes = BTreeMap::new();
        nodes.insert(root.id, root);
        Self {
            nodes,
            active_id: NodeId(0),
            next_seq: 1,
            next_turn_seq: 1,
        }
    }

    /// Rebuilds a graph from persisted parts and checks every structural
    /// invariant.
    pub fn from_parts(
        nodes: Vec<VersionNode>,
        active_id: NodeId,
        next_seq: u64,
        next_turn_seq: u64,
    ) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for node in nodes {
            if let Some(prev) = map.insert(node.id, node) {
                return Err(format!("duplicate node id {}", prev.id));
            }
        }
        let graph = Self {
            nodes: map,
            active_id,
            next_seq,
            next_turn_seq,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn active_id(&self) -> NodeId {
        self.active_id
    }

    pub fn active(&self) -> &VersionNode {
        &self.nodes[&self.active_id]
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// The smallest sequence number [`record_turn`](Self::record_turn) will accept.
    pub fn next_turn_seq(&self) -> u64 {
        self.next_turn_seq
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_id(&self) -> NodeId {
        self.nodes
            .values()
            .find(|n| n.kind == NodeKind::Root)
            .map(|n| n.id)
            .expect("graph always has a root")
    }

    pub fn get(&self, id: NodeId) -> Option<&VersionNode> {
        self.nodes.get(&id)
    }

    pub fn node(&self, id: NodeId) -> Result<&VersionNode, GraphError> {
        self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))
    }

    /// Nodes in creation order.
    pub fn nodes(&self) -> impl Iterator<Item = &VersionNode> {
        self.nodes.values()
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.parent_ids.contains(&id))
            .map(|n| n.id)
            .collect()
    }

    pub fn view(&self) -> GraphView {
        GraphView {
            active_id: self.active_id,
            nodes: self
                .nodes
                .values()
                .map(|n| NodeSummary {
                    id: n.id,
                    kind: n.kind,
                    title: n.title.clone(),
                    parent_ids: n.parent_ids.clone(),
                    preview_asset: n.preview_asset.clone(),
                    turn_count: n.turns.len(),
                    created_at: n.created_at,
                })
                .collect(),
            edges: self.edges(),
        }
    }

    /// `(parent, child)` pairs in child creation order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes
            .values()
            .flat_map(|n| n.parent_ids.iter().map(move |p| (*p, n.id)))
            .collect()
    }

    fn alloc_id(&mut self) -> NodeId {
        let id = NodeId(self.next_seq);
        self.next_seq += 1;
        id
    }

    /// Saves `code` as a child of the active node and activates it.
    pub fn collect(
        &mut self,
        code: impl Into<String>,
        title: impl Into<String>,
        preview_asset: Option<String>,
        now: Timestamp,
    ) -> NodeId {
        let parent = self.active_id;
        let id = self.insert_node(
            NodeKind::Collected,
            vec![parent],
            code.into(),
            title.into(),
            String::new(),
            preview_asset,
            now,
        );
        self.active_id = id;
        id
    }

    /// Inserts a node derived by an LLM operation and activates it.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn add_derived(
        &mut self,
        kind: NodeKind,
        parent_ids: Vec<NodeId>,
        code: String,
        title: String,
        description: String,
        preview_asset: Option<String>,
        now: Timestamp,
    ) -> Result<NodeId, GraphError> {
        let expected = if kind == NodeKind::Merged { 2 } else { 1 };
        if kind == NodeKind::Root || parent_ids.len() != expected {
            return Err(GraphError::InvalidParents {
                kind,
                count: parent_ids.len(),
            });
        }
        for p in &parent_ids {
            self.node(*p)?;
        }
        let id = self.insert_node(kind, parent_ids, code, title, description, preview_asset, now);
        self.active_id = id;
        Ok(id)
    }

    #[allow(clippy::too_many_arguments)]
    fn insert_node(
        &mut self,
        kind: NodeKind,
        parent_ids: Vec<NodeId>,
        code: String,
        title: String,
        description: String,
        preview_asset: Option<String>,
        now: Timestamp,
    ) -> NodeId {
        let id = self.alloc_id();
        self.nodes.insert(
            id,
            VersionNode {
                id,
                parent_ids,
                kind,
                code,
                title,
                description,
                preview_asset,
                created_at: now,
                turns: Vec::new(),
            },
        );
        id
    }

    pub fn activate(&mut self, id: NodeId) -> Result<ContextBundle, GraphError> {
        let bundle = self.context(id)?;
        self.active_id = id;
        Ok(bundle)
    }

    /// Context for `id` without changing the active node.
    pub fn context(&self, id: NodeId) -> Result<ContextBundle, GraphError> {
        let node = self.node(id)?;
        Ok(ContextBundle {
            node_id: id,
            code: node.code.clone(),
            history: self.branch_history(id)?,
        })
    }

    /// Node ids from the branch start down to `id`.
    ///
    /// The walk follows the first parent and stops at the root or at a merged
    /// node, so a merge starts a fresh dialogue branch.
    pub fn branch_path(&self, id: NodeId) -> Result<Vec<NodeId>, GraphError> {
        let mut path = Vec::new();
        let mut cur = self.node(id)?;
        loop {
            path.push(cur.id);
            if cur.kind == NodeKind::Merged {
                break;
            }
            match cur.parent_ids.first() {
                Some(p) => cur = self.node(*p)?,
                None => break,
            }
        }
        path.reverse();
        Ok(path)
    }

    pub fn branch_history(&self, id: NodeId) -> Result<Vec<ChatTurn>, GraphError> {
        let path = self.branch_path(id)?;
        Ok(path
            .iter()
            .flat_map(|n| self.nodes[n].turns.iter().cloned())
            .collect())
    }

    /// Forks `id`: a new collected child with the same code and title but no
    /// turns. The active node is unchanged.
    pub fn duplicate(&mut self, id: NodeId, now: Timestamp) -> Result<NodeId, GraphError> {
        let src = self.node(id)?;
        if src.kind == NodeKind::Root {
            return Err(GraphError::CannotDuplicateRoot);
        }
        let (code, title, preview) = (src.code.clone(), src.title.clone(), src.preview_asset.clone());
        Ok(self.insert_node(
            NodeKind::Collected,
            vec![id],
            code,
            title,
            String::new(),
            preview,
            now,
        ))
    }

    /// Removes `id` (and, when `recursive`, everything that only descends
    /// from it). Returns the number of removed nodes.
    ///
    /// A merged descendant with one parent outside the removed set survives
    /// and loses the dangling parent reference.
    pub fn delete(&mut self, id: NodeId, recursive: bool) -> Result<usize, GraphError> {
        let target = self.node(id)?;
        if target.kind == NodeKind::Root {
            return Err(GraphError::CannotDeleteRoot);
        }
        let fallback = target.parent_ids[0];
        if !recursive && !self.children(id).is_empty() {
            return Err(GraphError::HasChildren(id));
        }

        // Parents always precede children in id order, so one pass suffices.
        let mut doomed = BTreeSet::from([id]);
        for node in self.nodes.values() {
            if node.id > id
                && !node.parent_ids.is_empty()
                && node.parent_ids.iter().all(|p| doomed.contains(p))
            {
                doomed.insert(node.id);
            }
        }

        for d in &doomed {
            self.nodes.remove(d);
        }
        for node in self.nodes.values_mut() {
            node.parent_ids.retain(|p| !doomed.contains(p));
        }
        if doomed.contains(&self.active_id) {
            self.active_id = fallback;
        }
        Ok(doomed.len())
    }

    /// Appends `turn` to the active node.
    pub fn record_turn(&mut self, turn: ChatTurn) -> Result<(), GraphError> {
        if turn.seq < self.next_turn_seq {
            return Err(GraphError::StaleSequence {
                seq: turn.seq,
                expected: self.next_turn_seq,
            });
        }
        self.next_turn_seq = turn.seq + 1;
        let active = self.active_id;
        self.nodes
            .get_mut(&active)
            .expect("active node exists")
            .turns
            .push(turn);
        Ok(())
    }

    /// Checks every structural invariant; the error names the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let roots: Vec<_> = self
            .nodes
            .values()
            .filter(|n| n.kind == NodeKind::Root)
            .collect();
        if roots.len() != 1 {
            return Err(format!("expected exactly one root, found {}", roots.len()));
        }
        if !roots[0].parent_ids.is_empty() {
            return Err("root has parents".into());
        }
        if !self.nodes.contains_key(&self.active_id) {
            return Err(format!("active node {} does not exist", self.active_id));
        }
        let mut last_turn = 0;
        let mut seqs = BTreeSet::new();
        for node in self.nodes.values() {
            if node.id.0 >= self.next_seq {
                return Err(format!("node {} is not below next_seq {}", node.id, self.next_seq));
            }
            let n = node.parent_ids.len();
            let ok = match node.kind {
                NodeKind::Root => n == 0,
                // A merge may lose one parent to a delete but keeps its kind.
                NodeKind::Merged => n == 1 || n == 2,
                _ => n == 1,
            };
            if !ok {
                return Err(format!("node {} ({:?}) has {} parents", node.id, node.kind, n));
            }
            let mut distinct = BTreeSet::new();
            for p in &node.parent_ids {
                if *p >= node.id {
                    return Err(format!("node {} has parent {} that is not older", node.id, p));
                }
                if !self.nodes.contains_key(p) {
                    return Err(format!("node {} has missing parent {}", node.id, p));
                }
                if !distinct.insert(*p) {
                    return Err(format!("node {} lists parent {} twice", node.id, p));
                }
            }
            for t in &node.turns {
                if !seqs.insert(t.seq) {
                    return Err(format!("turn seq {} appears twice", t.seq));
                }
                last_turn = last_turn.max(t.seq);
            }
            for w in node.turns.windows(2) {
                if w[0].seq >= w[1].seq {
                    return Err(format!("turns on node {} are out of order", node.id));
                }
            }
        }
        if !seqs.is_empty() && last_turn >= self.next_turn_seq {
            return Err(format!(
                "turn seq {} is not below next_turn_seq {}",
                last_turn, self.next_turn_seq
            ));
        }
        Ok(())
    }
}
