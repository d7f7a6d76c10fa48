//! Graph generation: prompt the LLM layer by layer, expand with ConceptNet,
//! detect rule violations, repair with bounded correction prompts, prune
//! what cannot be repaired, then assemble and validate the DAG.

use super::client::{ConceptNetClient, LlmClient, LlmRequest, PromptKind};
use super::prompts;
use super::{
    normalize_label, parse_label_list, validate_graph, EdgeProvenance, GraphEdge, GraphNode,
    KgError, MissionSpec, NodeKind, ReasoningGraph, TraceEvent, ENCODING_ID, SENSOR_ID,
};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct KgBuildOptions {
    /// When set, an LLM-selected edge is kept only if ConceptNet also
    /// relates the pair.
    pub edges_require_conceptnet: bool,
}

impl Default for KgBuildOptions {
    fn default() -> Self {
        Self {
            edges_require_conceptnet: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Candidate label already used by an earlier layer.
    DuplicateNode { label: String },
    /// Claimed parent is not a node of the previous layer.
    InvalidEdgeParent { label: String, parent: String },
    /// Every claimed parent of the node failed validation.
    ZeroValidParents { label: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateNode { label } => write!(f, "duplicate node {label:?}"),
            Violation::InvalidEdgeParent { label, parent } => {
                write!(f, "edge parent {parent:?} of {label:?} not in previous layer")
            }
            Violation::ZeroValidParents { label } => {
                write!(f, "node {label:?} has zero valid parents")
            }
        }
    }
}

/// Pure rule check over one layer's candidates and their claimed edges.
pub fn detect_errors(
    candidates: &[String],
    claimed_edges: &BTreeMap<String, Vec<String>>,
    earlier_labels: &BTreeSet<String>,
    prev_labels: &BTreeSet<String>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in candidates {
        if earlier_labels.contains(c) {
            out.push(Violation::DuplicateNode { label: c.clone() });
        }
    }
    for (label, parents) in claimed_edges {
        let mut valid = 0usize;
        for p in parents {
            if prev_labels.contains(p) {
                valid += 1;
            } else {
                out.push(Violation::InvalidEdgeParent {
                    label: label.clone(),
                    parent: p.clone(),
                });
            }
        }
        if valid == 0 {
            out.push(Violation::ZeroValidParents {
                label: label.clone(),
            });
        }
    }
    out
}

fn ask(
    llm: &dyn LlmClient,
    trace: &mut Vec<TraceEvent>,
    req: &LlmRequest,
) -> Result<String, KgError> {
    let response = llm.complete(req)?;
    trace.push(TraceEvent::LlmCall {
        kind: req.kind,
        layer: req.layer,
        attempt: req.attempt,
        subject: req.subject.clone(),
        system: req.system.clone(),
        user: req.user.clone(),
        response: response.clone(),
    });
    Ok(response)
}

/// Asks for the first level of key-concept words and parses the reply.
pub fn generate_initial_concepts(
    mission: &MissionSpec,
    llm: &dyn LlmClient,
    trace: &mut Vec<TraceEvent>,
) -> Result<Vec<String>, KgError> {
    let req = LlmRequest {
        kind: PromptKind::InitialNodes,
        mission_id: mission.mission_id.clone(),
        layer: 1,
        attempt: 0,
        subject: mission.mission_text.clone(),
        system: prompts::initial_system(mission.n_concepts),
        user: prompts::initial_user(&mission.mission_text),
    };
    parse_label_list(&ask(llm, trace, &req)?)
}

/// ConceptNet neighbors for each label; every lookup is traced.
pub fn suggest_related(
    labels: &[String],
    cn: &dyn ConceptNetClient,
    trace: &mut Vec<TraceEvent>,
) -> Result<BTreeMap<String, BTreeSet<String>>, KgError> {
    let mut out = BTreeMap::new();
    for label in labels {
        let neighbors = cn.related(label)?;
        trace.push(TraceEvent::ConceptnetCall {
            term: label.clone(),
            neighbors: neighbors.iter().cloned().collect(),
        });
        out.insert(label.clone(), neighbors);
    }
    Ok(out)
}

/// Deterministic suggestion string: previous-layer order, then sorted
/// neighbors, first occurrence wins.
fn suggestion_list(
    prev_labels: &[String],
    suggestions: &BTreeMap<String, BTreeSet<String>>,
) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for l in prev_labels {
        if let Some(ns) = suggestions.get(l) {
            for n in ns {
                if seen.insert(n.clone()) {
                    out.push(n.clone());
                }
            }
        }
    }
    out
}

/// Asks for the next sub-graph level given the previous level and ConceptNet
/// suggestions. Duplicates against earlier layers are NOT filtered here;
/// `detect_errors` flags them downstream.
pub fn generate_next_layer(
    prev_labels: &[String],
    suggestions: &BTreeMap<String, BTreeSet<String>>,
    mission: &MissionSpec,
    layer: usize,
    llm: &dyn LlmClient,
    trace: &mut Vec<TraceEvent>,
) -> Result<Vec<String>, KgError> {
    let req = LlmRequest {
        kind: PromptKind::NextNodes,
        mission_id: mission.mission_id.clone(),
        layer,
        attempt: 0,
        subject: mission.mission_text.clone(),
        system: prompts::next_system(mission.n_concepts),
        user: prompts::next_user(
            &mission.mission_text,
            &prev_labels.join(", "),
            &suggestion_list(prev_labels, suggestions).join(", "),
        ),
    };
    parse_label_list(&ask(llm, trace, &req)?)
}

/// Asks which previous-level words support `new_label`. Replies longer than
/// `max_parents` are truncated in reply order and the truncation is traced.
pub fn generate_edges(
    new_label: &str,
    prev_labels: &[String],
    mission: &MissionSpec,
    layer: usize,
    llm: &dyn LlmClient,
    trace: &mut Vec<TraceEvent>,
) -> Result<Vec<String>, KgError> {
    let req = LlmRequest {
        kind: PromptKind::EdgeSelection,
        mission_id: mission.mission_id.clone(),
        layer,
        attempt: 0,
        subject: new_label.to_string(),
        system: prompts::edge_system(mission.max_parents),
        user: prompts::edge_user(new_label, &prev_labels.join(", ")),
    };
    let mut parents = parse_label_list(&ask(llm, trace, &req)?)?;
    truncate_parents(&mut parents, mission.max_parents, new_label, trace);
    Ok(parents)
}

fn truncate_parents(
    parents: &mut Vec<String>,
    max_parents: usize,
    label: &str,
    trace: &mut Vec<TraceEvent>,
) {
    if parents.len() > max_parents {
        let dropped = parents.split_off(max_parents);
        trace.push(TraceEvent::Truncation {
            label: label.to_string(),
            dropped,
        });
    }
}

/// Node-level repair loop: re-prompts while duplicates against earlier
/// layers persist, then prunes the offenders.
fn repair_node_layer(
    mission: &MissionSpec,
    llm: &dyn LlmClient,
    trace: &mut Vec<TraceEvent>,
    layer: usize,
    mut labels: Vec<String>,
    earlier: &BTreeSet<String>,
    context: Option<(&str, &str)>, // (prev list, suggestion list) for sub layers
) -> Result<Vec<String>, KgError> {
    let mut attempt: u32 = 0;
    loop {
        let dups: Vec<String> = labels
            .iter()
            .filter(|l| earlier.contains(*l))
            .cloned()
            .collect();
        if dups.is_empty() {
            break;
        }
        trace.push(TraceEvent::Violations {
            layer,
            items: dups
                .iter()
                .map(|d| Violation::DuplicateNode { label: d.clone() }.to_string())
                .collect(),
        });
        if attempt as usize >= mission.max_repair_attempts {
            labels.retain(|l| !earlier.contains(l));
            trace.push(TraceEvent::Pruned {
                layer,
                nodes: dups,
                edges: vec![],
            });
            break;
        }
        attempt += 1;
        let (kind, system, user) = match context {
            None => (
                PromptKind::InitialNodes,
                prompts::initial_system(mission.n_concepts),
                prompts::node_correction(&dups, &mission.mission_text),
            ),
            Some((prev, suggested)) => (
                PromptKind::NextNodes,
                prompts::next_system(mission.n_concepts),
                prompts::next_correction(&dups, &mission.mission_text, prev, suggested),
            ),
        };
        let req = LlmRequest {
            kind,
            mission_id: mission.mission_id.clone(),
            layer,
            attempt,
            subject: mission.mission_text.clone(),
            system,
            user,
        };
        labels = parse_label_list(&ask(llm, trace, &req)?)?;
    }
    if labels.is_empty() {
        return Err(KgError::EmptyLayer(layer));
    }
    Ok(labels)
}

/// Edge-level repair loop for one node. Returns the parent set with
/// provenance, or `None` when the node must be pruned.
#[allow(clippy::too_many_arguments)]
fn repair_edges_for_node(
    mission: &MissionSpec,
    llm: &dyn LlmClient,
    trace: &mut Vec<TraceEvent>,
    layer: usize,
    label: &str,
    prev_labels: &[String],
    prev_set: &BTreeSet<String>,
    cn_parents: &BTreeSet<String>,
    opts: &KgBuildOptions,
) -> Result<Option<Vec<(String, EdgeProvenance)>>, KgError> {
    let mut parents = generate_edges(label, prev_labels, mission, layer, llm, trace)?;
    let mut attempt: u32 = 0;
    loop {
        let bad: Vec<String> = parents
            .iter()
            .filter(|p| !prev_set.contains(*p))
            .cloned()
            .collect();
        if bad.is_empty() {
            break;
        }
        trace.push(TraceEvent::Violations {
            layer,
            items: bad
                .iter()
                .map(|p| {
                    Violation::InvalidEdgeParent {
                        label: label.to_string(),
                        parent: p.clone(),
                    }
                    .to_string()
                })
                .collect(),
        });
        if attempt as usize >= mission.max_repair_attempts {
            trace.push(TraceEvent::Pruned {
                layer,
                nodes: vec![],
                edges: bad.iter().map(|p| (p.clone(), label.to_string())).collect(),
            });
            parents.retain(|p| prev_set.contains(p));
            break;
        }
        attempt += 1;
        let req = LlmRequest {
            kind: PromptKind::EdgeSelection,
            mission_id: mission.mission_id.clone(),
            layer,
            attempt,
            subject: label.to_string(),
            system: prompts::edge_system(mission.max_parents),
            user: prompts::edge_correction(&bad, label, &prev_labels.join(", ")),
        };
        parents = parse_label_list(&ask(llm, trace, &req)?)?;
        truncate_parents(&mut parents, mission.max_parents, label, trace);
    }

    if opts.edges_require_conceptnet {
        parents.retain(|p| cn_parents.contains(p));
    }

    let mut out: Vec<(String, EdgeProvenance)> = parents
        .iter()
        .map(|p| (p.clone(), EdgeProvenance::LlmSelected))
        .collect();
    for p in cn_parents {
        if !parents.contains(p) {
            out.push((p.clone(), EdgeProvenance::Conceptnet));
        }
    }
    if out.is_empty() {
        // No validated LLM parent and no ConceptNet neighbor: the node would
        // be unreachable, so it is pruned.
        trace.push(TraceEvent::Pruned {
            layer,
            nodes: vec![label.to_string()],
            edges: vec![],
        });
        return Ok(None);
    }
    Ok(Some(out))
}

/// Attaches sensor and encoding nodes to the validated layers and returns
/// the completed graph.
pub fn assemble_graph(
    mission: &MissionSpec,
    layers: &[Vec<String>],
    sub_edges: &[(String, String, EdgeProvenance)],
    mut trace: Vec<TraceEvent>,
) -> Result<ReasoningGraph, KgError> {
    if layers.len() != mission.sub_depth + 1 {
        return Err(KgError::StructuralViolation(vec![format!(
            "expected {} layers (key concepts + {} sub layers), got {}",
            mission.sub_depth + 1,
            mission.sub_depth,
            layers.len()
        )]));
    }
    let d_sub = mission.sub_depth;
    let mut nodes = vec![GraphNode {
        node_id: SENSOR_ID.to_string(),
        label: String::new(),
        kind: NodeKind::Sensor,
        layer_index: 0,
    }];
    for (i, layer_labels) in layers.iter().enumerate() {
        let (kind, layer_index) = if i == 0 {
            (NodeKind::KeyConcept, 1)
        } else {
            (NodeKind::SubGraph, i + 1)
        };
        for label in layer_labels {
            nodes.push(GraphNode {
                node_id: label.clone(),
                label: label.clone(),
                kind,
                layer_index,
            });
        }
    }
    nodes.push(GraphNode {
        node_id: ENCODING_ID.to_string(),
        label: String::new(),
        kind: NodeKind::Encoding,
        layer_index: d_sub + 2,
    });

    let mut edges: Vec<GraphEdge> = layers[0]
        .iter()
        .map(|kc| GraphEdge {
            src: SENSOR_ID.to_string(),
            dst: kc.clone(),
            provenance: EdgeProvenance::SensorFanout,
        })
        .collect();
    edges.extend(sub_edges.iter().map(|(s, d, p)| GraphEdge {
        src: s.clone(),
        dst: d.clone(),
        provenance: *p,
    }));

    // Encoding fan-in: sub-graph nodes without outgoing sub edges. With no
    // sub layers the key concepts take that role.
    let has_out: BTreeSet<&str> = sub_edges.iter().map(|(s, _, _)| s.as_str()).collect();
    let leaf_layers: &[Vec<String>] = if d_sub == 0 {
        trace.push(TraceEvent::Warning {
            message: "sub_depth is 0: encoding fan-in comes directly from key concepts".into(),
        });
        &layers[0..1]
    } else {
        &layers[1..]
    };
    for layer_labels in leaf_layers {
        for label in layer_labels {
            if !has_out.contains(label.as_str()) {
                edges.push(GraphEdge {
                    src: label.clone(),
                    dst: ENCODING_ID.to_string(),
                    provenance: EdgeProvenance::EncodingFanin,
                });
            }
        }
    }

    let graph = ReasoningGraph {
        mission: mission.clone(),
        nodes,
        edges,
        generation_trace: trace,
    };
    let violations = validate_graph(&graph);
    if !violations.is_empty() {
        return Err(KgError::StructuralViolation(violations));
    }
    Ok(graph)
}

/// Full generation pipeline for one mission.
pub fn build_mission_graph(
    mission: &MissionSpec,
    llm: &dyn LlmClient,
    cn: &dyn ConceptNetClient,
    opts: &KgBuildOptions,
) -> Result<ReasoningGraph, KgError> {
    mission.validate()?;
    let mut trace = Vec::new();

    let initial = generate_initial_concepts(mission, llm, &mut trace)?;
    let key_concepts = repair_node_layer(
        mission,
        llm,
        &mut trace,
        1,
        initial,
        &BTreeSet::new(),
        None,
    )?;

    let mut layers = vec![key_concepts];
    let mut earlier: BTreeSet<String> = layers[0].iter().cloned().collect();
    let mut sub_edges: Vec<(String, String, EdgeProvenance)> = Vec::new();

    for k in 1..=mission.sub_depth {
        let layer_index = k + 1;
        let prev_labels = layers.last().unwrap().clone();
        let prev_set: BTreeSet<String> = prev_labels.iter().cloned().collect();

        let suggestions = suggest_related(&prev_labels, cn, &mut trace)?;
        let suggested_str = suggestion_list(&prev_labels, &suggestions).join(", ");
        let prev_str = prev_labels.join(", ");

        let candidates = generate_next_layer(
            &prev_labels,
            &suggestions,
            mission,
            layer_index,
            llm,
            &mut trace,
        )?;
        let candidates = repair_node_layer(
            mission,
            llm,
            &mut trace,
            layer_index,
            candidates,
            &earlier,
            Some((&prev_str, &suggested_str)),
        )?;

        let mut kept = Vec::new();
        for label in &candidates {
            let cn_parents: BTreeSet<String> = prev_labels
                .iter()
                .filter(|v| {
                    suggestions
                        .get(*v)
                        .map(|ns| ns.contains(label))
                        .unwrap_or(false)
                })
                .cloned()
                .collect();
            match repair_edges_for_node(
                mission,
                llm,
                &mut trace,
                layer_index,
                label,
                &prev_labels,
                &prev_set,
                &cn_parents,
                opts,
            )? {
                Some(parents) => {
                    for (p, prov) in parents {
                        sub_edges.push((p, label.clone(), prov));
                    }
                    kept.push(label.clone());
                }
                None => {}
            }
        }
        if kept.is_empty() {
            return Err(KgError::EmptyLayer(layer_index));
        }
        earlier.extend(kept.iter().cloned());
        layers.push(kept);
    }

    assemble_graph(mission, &layers, &sub_edges, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::client::{MapConceptNet, ProceduralLlm, ScriptedLlm};

    fn mission(id: &str, n: usize, d: usize) -> MissionSpec {
        let mut m = MissionSpec::new(id, id);
        m.n_concepts = n;
        m.sub_depth = d;
        m
    }

    fn count_llm_calls(trace: &[TraceEvent]) -> usize {
        trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::LlmCall { .. }))
            .count()
    }

    fn correction_calls(trace: &[TraceEvent]) -> usize {
        trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::LlmCall { attempt, .. } if *attempt > 0))
            .count()
    }

    #[test]
    fn initial_concepts_parses_twenty_words() {
        let m = mission("shooting", 20, 1);
        let mut llm = ScriptedLlm::new();
        let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        llm.insert("shooting/initial/1", &[&words.join(", ")]);
        let mut trace = Vec::new();
        let got = generate_initial_concepts(&m, &llm, &mut trace).unwrap();
        assert_eq!(got.len(), 20);
        assert_eq!(count_llm_calls(&trace), 1);
    }

    #[test]
    fn initial_concepts_prose_is_malformed() {
        let m = mission("shooting", 20, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("shooting/initial/1", &["I am sorry but I cannot help."]);
        let mut trace = Vec::new();
        let err = generate_initial_concepts(&m, &llm, &mut trace).unwrap_err();
        assert!(matches!(err, KgError::MalformedResponse(_)));
    }

    #[test]
    fn detect_errors_examples() {
        let earlier: BTreeSet<String> = ["gun".to_string()].into();
        let prev: BTreeSet<String> = ["gun".to_string(), "crowd".to_string()].into();

        // Duplicate against an earlier layer.
        let v = detect_errors(&["gun".into()], &BTreeMap::new(), &earlier, &prev);
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::DuplicateNode { label } if label == "gun"));

        // All fresh, all valid.
        let mut claimed = BTreeMap::new();
        claimed.insert("panic".to_string(), vec!["crowd".to_string()]);
        assert!(detect_errors(&["panic".into()], &claimed, &earlier, &prev).is_empty());

        // A node whose only claimed parent is invalid yields both an edge
        // violation and a zero-parent violation.
        let mut claimed = BTreeMap::new();
        claimed.insert("panic".to_string(), vec!["ghost".to_string()]);
        let v = detect_errors(&["panic".into()], &claimed, &earlier, &prev);
        assert_eq!(v.len(), 2);
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::InvalidEdgeParent { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::ZeroValidParents { .. })));
    }

    #[test]
    fn edge_truncation_keeps_first_max_parents() {
        let m = mission("m", 20, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/edges/2/new", &["p0, p1, p2, p3, p4, p5"]);
        let prev: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        let mut trace = Vec::new();
        let got = generate_edges("new", &prev, &m, 2, &llm, &mut trace).unwrap();
        assert_eq!(got, vec!["p0", "p1", "p2", "p3", "p4"]);
        assert!(trace
            .iter()
            .any(|e| matches!(e, TraceEvent::Truncation { dropped, .. } if dropped == &vec!["p5".to_string()])));
    }

    #[test]
    fn duplicate_fixed_on_first_attempt() {
        let m = mission("m", 3, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/initial/1", &["a, b, c"]);
        llm.insert("m/next/2", &["a, x, y", "x, y, z"]);
        for lbl in ["x", "y", "z"] {
            llm.insert(&format!("m/edges/2/{lbl}"), &["a"]);
        }
        let cn = MapConceptNet::default();
        let g = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        assert_eq!(correction_calls(&g.generation_trace), 1);
        let labels: Vec<&str> = g
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::SubGraph)
            .map(|n| n.label.as_str())
            .collect();
        assert_eq!(labels, vec!["x", "y", "z"]);
    }

    #[test]
    fn persistent_duplicate_is_pruned_after_three_attempts() {
        let m = mission("m", 3, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/initial/1", &["a, b, c"]);
        // Single reply: the attempt index clamps, so the duplicate persists
        // through every correction.
        llm.insert("m/next/2", &["a, x, y"]);
        for lbl in ["x", "y"] {
            llm.insert(&format!("m/edges/2/{lbl}"), &["b"]);
        }
        let cn = MapConceptNet::default();
        let g = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        // 3 correction attempts then prune.
        assert_eq!(correction_calls(&g.generation_trace), 3);
        assert!(g
            .generation_trace
            .iter()
            .any(|e| matches!(e, TraceEvent::Pruned { nodes, .. } if nodes.contains(&"a".to_string()))));
        let labels: Vec<&str> = g
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::SubGraph)
            .map(|n| n.label.as_str())
            .collect();
        assert_eq!(labels, vec!["x", "y"]);
    }

    #[test]
    fn all_candidates_pruned_is_empty_layer() {
        let m = mission("m", 2, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/initial/1", &["a, b"]);
        llm.insert("m/next/2", &["a, b"]); // every candidate is a duplicate
        let cn = MapConceptNet::default();
        let err = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap_err();
        assert!(matches!(err, KgError::EmptyLayer(2)));
    }

    #[test]
    fn six_node_example_assembles_exactly() {
        let m = mission("m", 2, 1);
        let layers = vec![
            vec!["a".to_string(), "b".to_string()],
            vec!["c".to_string(), "d".to_string()],
        ];
        let sub_edges = vec![
            ("a".to_string(), "c".to_string(), EdgeProvenance::LlmSelected),
            ("b".to_string(), "c".to_string(), EdgeProvenance::LlmSelected),
            ("b".to_string(), "d".to_string(), EdgeProvenance::LlmSelected),
        ];
        let g = assemble_graph(&m, &layers, &sub_edges, vec![]).unwrap();
        assert_eq!(g.nodes.len(), 6);
        assert_eq!(g.edges.len(), 7);
        let has = |s: &str, d: &str| g.edges.iter().any(|e| e.src == s && e.dst == d);
        assert!(has(SENSOR_ID, "a"));
        assert!(has(SENSOR_ID, "b"));
        assert!(has("a", "c"));
        assert!(has("b", "c"));
        assert!(has("b", "d"));
        assert!(has("c", ENCODING_ID));
        assert!(has("d", ENCODING_ID));
        assert!(validate_graph(&g).is_empty());
    }

    #[test]
    fn depth_zero_connects_key_concepts_to_encoding_with_warning() {
        let m = mission("m", 2, 0);
        let layers = vec![vec!["a".to_string(), "b".to_string()]];
        let g = assemble_graph(&m, &layers, &[], vec![]).unwrap();
        assert!(g
            .generation_trace
            .iter()
            .any(|e| matches!(e, TraceEvent::Warning { .. })));
        assert!(g
            .edges
            .iter()
            .any(|e| e.src == "a" && e.dst == ENCODING_ID));
        assert!(validate_graph(&g).is_empty());
    }

    #[test]
    fn conceptnet_fallback_keeps_node_alive() {
        let m = mission("m", 2, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/initial/1", &["a, b"]);
        llm.insert("m/next/2", &["x, y"]);
        // x claims only an invalid parent and never repairs; y behaves.
        llm.insert("m/edges/2/x", &["ghost"]);
        llm.insert("m/edges/2/y", &["b"]);
        let cn = MapConceptNet::from_pairs(&[("a", "x")]);
        let g = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        // x survives through the ConceptNet edge a -> x.
        let e = g
            .edges
            .iter()
            .find(|e| e.src == "a" && e.dst == "x")
            .expect("conceptnet edge");
        assert_eq!(e.provenance, EdgeProvenance::Conceptnet);
    }

    #[test]
    fn node_without_any_parent_source_is_pruned() {
        let m = mission("m", 2, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/initial/1", &["a, b"]);
        llm.insert("m/next/2", &["x, y"]);
        llm.insert("m/edges/2/x", &["ghost"]); // invalid forever, no ConceptNet
        llm.insert("m/edges/2/y", &["a"]);
        let cn = MapConceptNet::default();
        let g = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        assert!(g.node("x").is_none());
        assert!(g.node("y").is_some());
    }

    #[test]
    fn edges_require_conceptnet_filters_llm_edges() {
        let m = mission("m", 2, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/initial/1", &["a, b"]);
        llm.insert("m/next/2", &["x"]);
        llm.insert("m/edges/2/x", &["a, b"]);
        let cn = MapConceptNet::from_pairs(&[("a", "x")]);
        let opts = KgBuildOptions {
            edges_require_conceptnet: true,
        };
        let g = build_mission_graph(&m, &llm, &cn, &opts).unwrap();
        assert!(g.edges.iter().any(|e| e.src == "a" && e.dst == "x"));
        assert!(!g.edges.iter().any(|e| e.src == "b" && e.dst == "x"));
    }

    #[test]
    fn procedural_generation_is_reproducible_and_valid() {
        let m = mission("shooting", 20, 2);
        let llm = ProceduralLlm::adversarial(7, 1);
        let cn = MapConceptNet::default();
        let a = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        let b = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(validate_graph(&a).is_empty());
    }

    #[test]
    fn final_graph_has_no_remaining_violations() {
        let m = mission("arson", 10, 2);
        let llm = ProceduralLlm::adversarial(11, 2);
        let cn = MapConceptNet::default();
        let g = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        // Re-run detect_errors layer by layer over the final graph.
        let mut earlier = BTreeSet::new();
        for layer in 1..=m.sub_depth + 1 {
            let labels: Vec<String> = g
                .nodes
                .iter()
                .filter(|n| n.layer_index == layer)
                .map(|n| n.label.clone())
                .collect();
            let prev: BTreeSet<String> = g
                .nodes
                .iter()
                .filter(|n| n.layer_index == layer - 1)
                .map(|n| n.label.clone())
                .collect();
            let mut claimed = BTreeMap::new();
            if layer >= 2 {
                for l in &labels {
                    let parents: Vec<String> = g
                        .edges
                        .iter()
                        .filter(|e| {
                            &e.dst == l
                                && matches!(
                                    e.provenance,
                                    EdgeProvenance::LlmSelected | EdgeProvenance::Conceptnet
                                )
                        })
                        .map(|e| e.src.clone())
                        .collect();
                    claimed.insert(l.clone(), parents);
                }
            }
            let v = detect_errors(&labels, &claimed, &earlier, &prev);
            assert!(v.is_empty(), "layer {layer} violations: {v:?}");
            earlier.extend(labels);
        }
    }

    #[test]
    fn trace_has_every_call_exactly_once() {
        let m = mission("m", 3, 1);
        let mut llm = ScriptedLlm::new();
        llm.insert("m/initial/1", &["a, b, c"]);
        llm.insert("m/next/2", &["x, y, z"]);
        for lbl in ["x", "y", "z"] {
            llm.insert(&format!("m/edges/2/{lbl}"), &["a, b"]);
        }
        let cn = MapConceptNet::from_pairs(&[("a", "x")]);
        let g = build_mission_graph(&m, &llm, &cn, &KgBuildOptions::default()).unwrap();
        // 1 initial + 1 next + 3 edge prompts, no corrections.
        assert_eq!(count_llm_calls(&g.generation_trace), 5);
        // 3 ConceptNet lookups, one per previous-layer label.
        let cn_calls = g
            .generation_trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::ConceptnetCall { .. }))
            .count();
        assert_eq!(cn_calls, 3);
    }
}
