//! Mission-specific reasoning graphs: a layered DAG per anomaly class.
//!
//! Layer 0 holds the single sensor node (it receives the frame embedding at
//! inference time), layer 1 the LLM-extracted key concepts, layers
//! `2..=d_sub+1` the ConceptNet-expanded sub-graph words, and layer
//! `d_sub+2` the single encoding node that collects every sub-graph leaf.

pub mod builder;
pub mod client;
pub mod prompts;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

pub use builder::{build_mission_graph, KgBuildOptions};
pub use client::{ConceptNetClient, LlmClient, LlmRequest, PromptKind};

/// Reserved node ids for the two unlabeled nodes.
pub const SENSOR_ID: &str = "__sensor__";
pub const ENCODING_ID: &str = "__encoding__";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("malformed LLM response: {0}")]
    MalformedResponse(String),
    #[error("layer {0} became empty after pruning")]
    EmptyLayer(usize),
    #[error("structural violations: {0:?}")]
    StructuralViolation(Vec<String>),
    #[error("service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One mission: the natural-language task plus generation limits.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MissionSpec {
    pub mission_id: String,
    pub mission_text: String,
    /// Number of key-concept words requested per layer (`n_cpt`).
    pub n_concepts: usize,
    /// Number of sub-graph layers (`d_sub`).
    pub sub_depth: usize,
    /// Hard cap on LLM-selected parents per node.
    pub max_parents: usize,
    pub max_repair_attempts: usize,
}

impl MissionSpec {
    pub fn new(mission_id: &str, mission_text: &str) -> Self {
        Self {
            mission_id: mission_id.to_string(),
            mission_text: mission_text.to_string(),
            n_concepts: 20,
            sub_depth: 1,
            max_parents: 5,
            max_repair_attempts: 3,
        }
    }

    pub fn validate(&self) -> Result<(), KgError> {
        let mut v = Vec::new();
        if self.n_concepts < 1 {
            v.push("n_concepts must be >= 1".to_string());
        }
        if self.max_parents < 1 {
            v.push("max_parents must be >= 1".to_string());
        }
        if self.max_repair_attempts < 1 {
            v.push("max_repair_attempts must be >= 1".to_string());
        }
        if self.mission_text.is_empty() {
            v.push("mission_text must be non-empty".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(KgError::StructuralViolation(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Sensor,
    KeyConcept,
    SubGraph,
    Encoding,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphNode {
    #[serde(rename = "id")]
    pub node_id: String,
    pub label: String,
    pub kind: NodeKind,
    #[serde(rename = "layer")]
    pub layer_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeProvenance {
    SensorFanout,
    Conceptnet,
    LlmSelected,
    EncodingFanin,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub provenance: EdgeProvenance,
}

/// Everything that happened while generating a graph, in call order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    LlmCall {
        kind: PromptKind,
        layer: usize,
        attempt: u32,
        subject: String,
        system: String,
        user: String,
        response: String,
    },
    ConceptnetCall {
        term: String,
        neighbors: Vec<String>,
    },
    Violations {
        layer: usize,
        items: Vec<String>,
    },
    Truncation {
        label: String,
        dropped: Vec<String>,
    },
    Pruned {
        layer: usize,
        nodes: Vec<String>,
        edges: Vec<(String, String)>,
    },
    Warning {
        message: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningGraph {
    pub mission: MissionSpec,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub generation_trace: Vec<TraceEvent>,
}

/// On-disk representation; field names are part of the file format.
#[derive(Debug, Serialize, Deserialize)]
struct KgFile {
    mission_id: String,
    d_sub: usize,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    trace: Vec<TraceEvent>,
}

impl ReasoningGraph {
    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    /// Key-concept labels in layer order.
    pub fn key_concepts(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::KeyConcept)
            .map(|n| n.label.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String, KgError> {
        let f = KgFile {
            mission_id: self.mission.mission_id.clone(),
            d_sub: self.mission.sub_depth,
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            trace: self.generation_trace.clone(),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), KgError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KgError> {
        let f: KgFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut mission = MissionSpec::new(&f.mission_id, &f.mission_id);
        mission.sub_depth = f.d_sub;
        mission.n_concepts = f
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::KeyConcept)
            .count()
            .max(1);
        Ok(Self {
            mission,
            nodes: f.nodes,
            edges: f.edges,
            generation_trace: f.trace,
        })
    }
}

/// Case-folds, trims, and collapses internal whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses a comma-separated label list from an LLM reply.
///
/// Takes the first non-empty line, splits on commas, normalizes each token,
/// and removes case-folded duplicates while preserving order. A reply that
/// yields a single token containing sentence punctuation is treated as prose
/// and rejected.
pub fn parse_label_list(reply: &str) -> Result<Vec<String>, KgError> {
    let line = reply
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| KgError::MalformedResponse("empty reply".to_string()))?;
    let tokens: Vec<String> = line
        .split(',')
        .map(normalize_label)
        .filter(|t| !t.is_empty() && !t.starts_with("__"))
        .collect();
    if tokens.is_empty() {
        return Err(KgError::MalformedResponse(format!(
            "no labels in reply line {line:?}"
        )));
    }
    if tokens.len() == 1 && tokens[0].contains(['.', '!', '?']) {
        return Err(KgError::MalformedResponse(format!(
            "reply looks like prose, not a comma-separated list: {line:?}"
        )));
    }
    let mut seen = BTreeSet::new();
    Ok(tokens
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect())
}

/// Re-checks every structural invariant; an empty result means the graph is
/// well formed.
pub fn validate_graph(g: &ReasoningGraph) -> Vec<String> {
    let mut out = Vec::new();
    let d_sub = g.mission.sub_depth;
    let final_layer = d_sub + 2;

    let sensors: Vec<_> = g.nodes.iter().filter(|n| n.kind == NodeKind::Sensor).collect();
    let encodings: Vec<_> = g
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Encoding)
        .collect();
    if sensors.len() != 1 {
        out.push(format!("expected exactly one sensor node, found {}", sensors.len()));
    }
    if encodings.len() != 1 {
        out.push(format!(
            "expected exactly one encoding node, found {}",
            encodings.len()
        ));
    }

    let mut by_id: BTreeMap<&str, &GraphNode> = BTreeMap::new();
    for n in &g.nodes {
        if by_id.insert(&n.node_id, n).is_some() {
            out.push(format!("duplicate node id {:?}", n.node_id));
        }
    }

    // Label uniqueness across all layers (case-folded; unlabeled nodes skip).
    let mut labels = BTreeSet::new();
    for n in &g.nodes {
        if n.label.is_empty() {
            continue;
        }
        if !labels.insert(normalize_label(&n.label)) {
            out.push(format!("duplicate label {:?} across layers", n.label));
        }
    }

    // kind <-> layer consistency.
    for n in &g.nodes {
        let ok = match n.kind {
            NodeKind::Sensor => n.layer_index == 0,
            NodeKind::KeyConcept => n.layer_index == 1,
            NodeKind::SubGraph => (2..=d_sub + 1).contains(&n.layer_index),
            NodeKind::Encoding => n.layer_index == final_layer,
        };
        if !ok {
            out.push(format!(
                "node {:?} kind {:?} inconsistent with layer {}",
                n.node_id, n.kind, n.layer_index
            ));
        }
    }

    let layer_of = |id: &str| by_id.get(id).map(|n| n.layer_index);
    let kind_of = |id: &str| by_id.get(id).map(|n| n.kind);

    let mut sub_out_degree: BTreeMap<&str, usize> = BTreeMap::new();
    let mut degree: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &g.edges {
        let (Some(ls), Some(ld)) = (layer_of(&e.src), layer_of(&e.dst)) else {
            out.push(format!("edge {:?}->{:?} references unknown node", e.src, e.dst));
            continue;
        };
        *degree.entry(e.src.as_str()).or_default() += 1;
        *degree.entry(e.dst.as_str()).or_default() += 1;
        if ls >= ld {
            out.push(format!(
                "edge {:?}->{:?} does not increase layer index ({ls} -> {ld})",
                e.src, e.dst
            ));
        }
        match e.provenance {
            EdgeProvenance::SensorFanout => {
                if kind_of(&e.src) != Some(NodeKind::Sensor)
                    || kind_of(&e.dst) != Some(NodeKind::KeyConcept)
                {
                    out.push(format!(
                        "sensor_fanout edge {:?}->{:?} must run sensor -> key_concept",
                        e.src, e.dst
                    ));
                }
            }
            EdgeProvenance::EncodingFanin => {
                if kind_of(&e.dst) != Some(NodeKind::Encoding) {
                    out.push(format!(
                        "encoding_fanin edge {:?}->{:?} must end at the encoding node",
                        e.src, e.dst
                    ));
                }
            }
            EdgeProvenance::Conceptnet | EdgeProvenance::LlmSelected => {
                if ld != ls + 1 {
                    out.push(format!(
                        "sub edge {:?}->{:?} must connect adjacent layers ({ls} -> {ld})",
                        e.src, e.dst
                    ));
                }
                if kind_of(&e.src) == Some(NodeKind::SubGraph) {
                    *sub_out_degree.entry(e.src.as_str()).or_default() += 1;
                }
            }
        }
    }

    // Acyclicity via Kahn's algorithm.
    {
        let ids: Vec<&str> = g.nodes.iter().map(|n| n.node_id.as_str()).collect();
        let mut indeg: BTreeMap<&str, usize> = ids.iter().map(|&i| (i, 0)).collect();
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &g.edges {
            if by_id.contains_key(e.src.as_str()) && by_id.contains_key(e.dst.as_str()) {
                adj.entry(e.src.as_str()).or_default().push(e.dst.as_str());
                *indeg.entry(e.dst.as_str()).or_default() += 1;
            }
        }
        let mut queue: Vec<&str> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&i, _)| i)
            .collect();
        let mut visited = 0usize;
        while let Some(u) = queue.pop() {
            visited += 1;
            for v in adj.get(u).cloned().unwrap_or_default() {
                let d = indeg.get_mut(v).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(v);
                }
            }
        }
        if visited != g.nodes.len() {
            out.push("graph contains a cycle".to_string());
        }
    }

    // Key concepts: in-degree exactly 1, from the sensor.
    for n in g.nodes.iter().filter(|n| n.kind == NodeKind::KeyConcept) {
        let parents: Vec<_> = g.edges.iter().filter(|e| e.dst == n.node_id).collect();
        if parents.len() != 1 || kind_of(&parents.first().map(|e| e.src.clone()).unwrap_or_default()) != Some(NodeKind::Sensor) {
            out.push(format!(
                "key concept {:?} must have exactly one parent (the sensor), found {}",
                n.label,
                parents.len()
            ));
        }
    }

    // Sub-graph nodes: at least one parent in the immediately previous layer.
    for n in g.nodes.iter().filter(|n| n.kind == NodeKind::SubGraph) {
        let has_parent = g.edges.iter().any(|e| {
            e.dst == n.node_id && layer_of(&e.src) == Some(n.layer_index - 1)
        });
        if !has_parent {
            out.push(format!(
                "sub-graph node {:?} has no parent in layer {}",
                n.label,
                n.layer_index - 1
            ));
        }
    }

    // Encoding fan-in must be exactly the set of sub-graph leaves (key
    // concepts when d_sub = 0).
    if let Some(enc) = encodings.first() {
        let leaf_kind = if d_sub == 0 {
            NodeKind::KeyConcept
        } else {
            NodeKind::SubGraph
        };
        let leaves: BTreeSet<&str> = g
            .nodes
            .iter()
            .filter(|n| {
                n.kind == leaf_kind && sub_out_degree.get(n.node_id.as_str()).copied().unwrap_or(0) == 0
            })
            .map(|n| n.node_id.as_str())
            .collect();
        let fanin: BTreeSet<&str> = g
            .edges
            .iter()
            .filter(|e| e.dst == enc.node_id)
            .map(|e| e.src.as_str())
            .collect();
        if leaves != fanin {
            out.push(format!(
                "encoding fan-in {:?} does not match leaf set {:?}",
                fanin, leaves
            ));
        }
    }

    // No isolated nodes.
    for n in &g.nodes {
        if degree.get(n.node_id.as_str()).copied().unwrap_or(0) == 0 {
            out.push(format!("node {:?} is isolated", n.node_id));
        }
    }

    // Sensor out-degree equals the number of key concepts.
    if let Some(snr) = sensors.first() {
        let fanout = g.edges.iter().filter(|e| e.src == snr.node_id).count();
        let n_kc = g.nodes.iter().filter(|n| n.kind == NodeKind::KeyConcept).count();
        if fanout != n_kc {
            out.push(format!(
                "sensor out-degree {fanout} != number of key concepts {n_kc}"
            ));
        }
        if n_kc == 0 {
            out.push("graph has no key-concept nodes".to_string());
        }
    }

    // Every sub-graph layer present in the declared depth must be non-empty.
    for l in 2..=d_sub + 1 {
        if !g.nodes.iter().any(|n| n.layer_index == l) {
            out.push(format!("declared sub-graph layer {l} is empty"));
        }
    }

    out
}
