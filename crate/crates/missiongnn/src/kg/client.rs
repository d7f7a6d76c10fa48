//! Service clients for graph generation.
//!
//! Production backends talk HTTP; tests and desk-scale runs use the
//! deterministic fixture backends ([`ScriptedLlm`], [`ProceduralLlm`],
//! [`MapConceptNet`]). Every backend is safe for concurrent use, so distinct
//! missions can be generated in parallel.

use super::{normalize_label, KgError};
use crate::rngs::rng_for;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    InitialNodes,
    NextNodes,
    EdgeSelection,
}

impl PromptKind {
    pub fn tag(self) -> &'static str {
        match self {
            PromptKind::InitialNodes => "initial",
            PromptKind::NextNodes => "next",
            PromptKind::EdgeSelection => "edges",
        }
    }
}

/// One chat-style completion request. `attempt` 0 is the original prompt;
/// higher attempts carry the error-correction prompt in `user`.
#[derive(Debug, Clone)]
pub struct LlmRequest {
    pub kind: PromptKind,
    pub mission_id: String,
    pub layer: usize,
    pub attempt: u32,
    /// Mission text for node prompts, the new label for edge prompts.
    pub subject: String,
    pub system: String,
    pub user: String,
}

impl LlmRequest {
    /// Stable lookup key for scripted fixtures.
    pub fn script_key(&self) -> String {
        match self.kind {
            PromptKind::EdgeSelection => format!(
                "{}/{}/{}/{}",
                self.mission_id,
                self.kind.tag(),
                self.layer,
                self.subject
            ),
            _ => format!("{}/{}/{}", self.mission_id, self.kind.tag(), self.layer),
        }
    }
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<String, KgError>;
}

pub trait ConceptNetClient: Send + Sync {
    /// Related terms under the configured relation; empty when unknown.
    fn related(&self, term: &str) -> Result<BTreeSet<String>, KgError>;
}

// ---------------------------------------------------------------------------
// Fixture backends
// ---------------------------------------------------------------------------

/// Replays canned responses keyed by [`LlmRequest::script_key`]; the attempt
/// number indexes into the reply list (clamped to the last entry).
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct ScriptedLlm {
    pub replies: BTreeMap<String, Vec<String>>,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: &str, replies: &[&str]) {
        self.replies
            .insert(key.to_string(), replies.iter().map(|s| s.to_string()).collect());
    }

    pub fn load(path: &Path) -> Result<Self, KgError> {
        let replies = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(Self { replies })
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, KgError> {
        let key = req.script_key();
        let replies = self
            .replies
            .get(&key)
            .ok_or_else(|| KgError::ServiceUnavailable(format!("no scripted reply for {key:?}")))?;
        let idx = (req.attempt as usize).min(replies.len().saturating_sub(1));
        Ok(replies[idx].clone())
    }
}

/// Derives a 32-byte RNG seed from a global seed and a context string.
pub fn derive_seed(seed: u64, context: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(context.as_bytes());
    h.finalize().into()
}

fn rng_for(seed: u64, context: &str) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::from_seed(derive_seed(seed, context))
}

/// A seeded synthetic LLM for bulk graph generation.
///
/// Produces a deterministic vocabulary per (mission, layer) and can inject
/// duplicate-node and invalid-parent errors to exercise the detection and
/// repair loop. A correction request is honored once the attempt number
/// exceeds `stubborn_corrections`; until then the same errors reappear.
#[derive(Debug, Clone)]
pub struct ProceduralLlm {
    pub seed: u64,
    /// Probability a sub-graph layer reply duplicates earlier-layer words.
    pub dup_rate: f64,
    /// Probability an edge reply names a parent outside the previous layer.
    pub bad_parent_rate: f64,
    /// Probability an edge reply selects more words than the stated cap.
    pub over_cap_rate: f64,
    /// Corrections keep failing while `attempt <= stubborn_corrections`.
    pub stubborn_corrections: u32,
}

impl ProceduralLlm {
    pub fn clean(seed: u64) -> Self {
        Self {
            seed,
            dup_rate: 0.0,
            bad_parent_rate: 0.0,
            over_cap_rate: 0.0,
            stubborn_corrections: 0,
        }
    }

    pub fn adversarial(seed: u64, stubborn_corrections: u32) -> Self {
        Self {
            seed,
            dup_rate: 0.6,
            bad_parent_rate: 0.4,
            over_cap_rate: 0.2,
            stubborn_corrections,
        }
    }

    fn word(mission: &str, layer: usize, idx: usize) -> String {
        // Mission id folded into the word so vocabularies never collide
        // across missions.
        let mut h = Sha256::new();
        h.update(mission.as_bytes());
        let tag = hex_prefix(&h.finalize(), 3);
        format!("{tag}l{layer}w{idx:02}")
    }

    fn layer_words(&self, mission: &str, layer: usize, count: usize) -> Vec<String> {
        (0..count).map(|i| Self::word(mission, layer, i)).collect()
    }

    fn node_reply(&self, req: &LlmRequest, count: usize) -> String {
        use rand::Rng;
        let mut words = self.layer_words(&req.mission_id, req.layer, count);
        if req.layer > 1 && self.dup_rate > 0.0 {
            let mut rng = rng_for(
                self.seed,
                &format!("dup/{}/{}", req.mission_id, req.layer),
            );
            if rng.gen_bool(self.dup_rate) {
                // Replace up to two words with layer-1 words, which are never
                // pruned and therefore always collide.
                let n_inject = 1 + rng.gen_range(0..2usize);
                for k in 0..n_inject.min(words.len()) {
                    let victim = rng.gen_range(0..words.len());
                    let donor = rng.gen_range(0..count.max(1));
                    if req.attempt <= self.stubborn_corrections {
                        words[victim] = Self::word(&req.mission_id, 1, donor);
                    } else {
                        words[victim] = Self::word(&req.mission_id, req.layer, 90 + k);
                    }
                }
            }
        }
        words.join(", ")
    }

    fn edge_reply(&self, req: &LlmRequest, max_parents: usize) -> Result<String, KgError> {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let prev = super::prompts::extract_field(&req.user, "Comma-separated list")
            .ok_or_else(|| {
                KgError::ServiceUnavailable("edge prompt carries no previous-level list".into())
            })?;
        let prev: Vec<String> = prev.split(',').map(normalize_label).filter(|s| !s.is_empty()).collect();
        if prev.is_empty() {
            return Err(KgError::ServiceUnavailable("empty previous level".into()));
        }
        let mut rng = rng_for(
            self.seed,
            &format!("edge/{}/{}/{}", req.mission_id, req.layer, req.subject),
        );
        let want = if self.over_cap_rate > 0.0 && rng.gen_bool(self.over_cap_rate) {
            max_parents + 1
        } else {
            1 + rng.gen_range(0..max_parents)
        };
        let mut picks: Vec<String> = prev
            .choose_multiple(&mut rng, want.min(prev.len()))
            .cloned()
            .collect();
        if self.bad_parent_rate > 0.0
            && rng.gen_bool(self.bad_parent_rate)
            && req.attempt <= self.stubborn_corrections
        {
            picks.push(format!("ghost{}", rng.gen_range(0..100)));
        }
        Ok(picks.join(", "))
    }
}

impl LlmClient for ProceduralLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, KgError> {
        match req.kind {
            PromptKind::InitialNodes => {
                let n = parse_count_after(&req.system, "Observe ").unwrap_or(20);
                Ok(self.node_reply(req, n))
            }
            PromptKind::NextNodes => {
                let n = parse_count_after(&req.system, "must be ").unwrap_or(20);
                Ok(self.node_reply(req, n))
            }
            PromptKind::EdgeSelection => {
                let m = parse_count_after(&req.system, "maximum ").unwrap_or(5);
                self.edge_reply(req, m)
            }
        }
    }
}

fn parse_count_after(text: &str, marker: &str) -> Option<usize> {
    let at = text.find(marker)? + marker.len();
    let digits: String = text[at..].chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).map(|b| format!("{b:02x}")).collect()
}

/// In-memory ConceptNet fixture.
#[derive(Debug, Default, Clone)]
pub struct MapConceptNet {
    pub map: BTreeMap<String, BTreeSet<String>>,
}

impl MapConceptNet {
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (a, b) in pairs {
            map.entry(normalize_label(a))
                .or_default()
                .insert(normalize_label(b));
        }
        Self { map }
    }

    /// Loads the tab-separated `term<TAB>related_term` file format.
    pub fn load(path: &Path) -> Result<Self, KgError> {
        let text = std::fs::read_to_string(path)?;
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (term, rel) = line.split_once('\t').ok_or_else(|| {
                KgError::ServiceUnavailable(format!(
                    "conceptnet file line {} is not tab-separated",
                    lineno + 1
                ))
            })?;
            map.entry(normalize_label(term))
                .or_default()
                .insert(normalize_label(rel));
        }
        Ok(Self { map })
    }
}

impl ConceptNetClient for MapConceptNet {
    fn related(&self, term: &str) -> Result<BTreeSet<String>, KgError> {
        Ok(self.map.get(&normalize_label(term)).cloned().unwrap_or_default())
    }
}

// ---------------------------------------------------------------------------
// HTTP backends
// ---------------------------------------------------------------------------

/// Chat-completion client. Credentials come from the environment so they
/// never land in config files.
#[cfg(feature = "http")]
pub struct HttpLlm {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpLlm {
    pub const API_KEY_ENV: &'static str = "MISSIONGNN_LLM_API_KEY";

    pub fn new(endpoint: &str, model: &str) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: std::env::var(Self::API_KEY_ENV).ok(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[cfg(feature = "http")]
impl LlmClient for HttpLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, KgError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        });
        let mut http = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp: serde_json::Value = http
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| KgError::ServiceUnavailable(e.to_string()))?
            .json()
            .map_err(|e| KgError::ServiceUnavailable(e.to_string()))?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| {
                KgError::ServiceUnavailable("chat response missing choices[0].message.content".into())
            })
    }
}

/// Queries a ConceptNet-style API for one relation type.
#[cfg(feature = "http")]
pub struct HttpConceptNet {
    pub base_url: String,
    pub relation: String,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpConceptNet {
    pub fn new(base_url: &str, relation: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            relation: relation.to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[cfg(feature = "http")]
impl ConceptNetClient for HttpConceptNet {
    fn related(&self, term: &str) -> Result<BTreeSet<String>, KgError> {
        let node = format!("/c/en/{}", term.replace(' ', "_"));
        let url = format!(
            "{}/query?node={}&rel={}&limit=200",
            self.base_url, node, self.relation
        );
        let resp: serde_json::Value = self
            .client
            .get(&url)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| KgError::ServiceUnavailable(e.to_string()))?
            .json()
            .map_err(|e| KgError::ServiceUnavailable(e.to_string()))?;
        let mut out = BTreeSet::new();
        if let Some(edges) = resp["edges"].as_array() {
            for e in edges {
                for side in ["start", "end"] {
                    if let Some(label) = e[side]["label"].as_str() {
                        let norm = normalize_label(label);
                        if norm != normalize_label(term) {
                            out.insert(norm);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_by_attempt() {
        let mut llm = ScriptedLlm::new();
        llm.insert("m/next/2", &["a, b", "c, d"]);
        let mut req = LlmRequest {
            kind: PromptKind::NextNodes,
            mission_id: "m".into(),
            layer: 2,
            attempt: 0,
            subject: "m".into(),
            system: String::new(),
            user: String::new(),
        };
        assert_eq!(llm.complete(&req).unwrap(), "a, b");
        req.attempt = 1;
        assert_eq!(llm.complete(&req).unwrap(), "c, d");
        req.attempt = 5; // past the end clamps to the last reply
        assert_eq!(llm.complete(&req).unwrap(), "c, d");
    }

    #[test]
    fn procedural_is_deterministic() {
        let llm = ProceduralLlm::adversarial(7, 1);
        let req = LlmRequest {
            kind: PromptKind::InitialNodes,
            mission_id: "shooting".into(),
            layer: 1,
            attempt: 0,
            subject: "shooting".into(),
            system: super::super::prompts::initial_system(20),
            user: String::new(),
        };
        let a = llm.complete(&req).unwrap();
        let b = llm.complete(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.split(',').count(), 20);
    }

    #[test]
    fn map_conceptnet_lookup() {
        let cn = MapConceptNet::from_pairs(&[("gun", "firearm"), ("gun", "weapon")]);
        let got = cn.related("Gun").unwrap();
        assert!(got.contains("firearm") && got.contains("weapon"));
        assert!(cn.related("absent").unwrap().is_empty());
    }

    #[test]
    fn conceptnet_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.tsv");
        std::fs::write(&p, "gun\tfirearm\ncrowd\tpeople\n").unwrap();
        let cn = MapConceptNet::load(&p).unwrap();
        assert!(cn.related("gun").unwrap().contains("firearm"));
        std::fs::write(&p, "gun firearm\n").unwrap();
        assert!(MapConceptNet::load(&p).is_err());
    }

    #[test]
    fn shared_neighbor_appears_in_both_entries() {
        let cn = MapConceptNet::from_pairs(&[("gun", "violence"), ("knife", "violence")]);
        assert!(cn.related("gun").unwrap().contains("violence"));
        assert!(cn.related("knife").unwrap().contains("violence"));
    }
}
