//! Joint-space embeddings for node labels (text) and video frames (image).
//!
//! Three interchangeable backends: a byte-exact binary cache of precomputed
//! vectors, an HTTP embedding service, and a fully deterministic synthetic
//! generator for desk-scale training. Encoders are never executed in-repo;
//! frozen-model embeddings arrive through the cache or the service.

pub mod cache;

use crate::rngs::rng_for;
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use thiserror::Error;

pub use cache::{frame_key, EmbeddingCache, CACHE_MAGIC};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("corrupt cache: {0}")]
    CorruptCache(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("missing frame {video_id}/{frame_index}")]
    MissingFrame { video_id: String, frame_index: usize },
    #[error("missing label {0:?}")]
    MissingLabel(String),
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A joint-space embedding provider. The empty label is the encoding-node
/// sentinel and always maps to the zero vector.
pub trait EmbeddingSource: Send + Sync {
    fn d_emb(&self) -> usize;
    fn embed_text(&self, label: &str) -> Result<Vec<f32>, EmbedError>;
    fn embed_frame(&self, video_id: &str, frame_index: usize) -> Result<Vec<f32>, EmbedError>;
}

/// Unit-norm Gaussian vector drawn from a context-keyed stream.
fn unit_gaussian(seed: u64, context: &str, d: usize) -> Vec<f32> {
    let mut rng = rng_for(seed, context);
    let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-30);
    raw.iter().map(|x| (x / norm) as f32).collect()
}

/// Deterministic synthetic backend.
///
/// Text embeddings are unit-norm Gaussians keyed by the label. Frames are
/// unit-norm Gaussian noise; frames inside a video's anomaly event interval
/// additionally carry `beta` times the mean key-concept embedding of the
/// video's class, which ties the frame signal to the mission graph content.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    pub seed: u64,
    d_emb: usize,
    pub beta: f32,
    class_signals: BTreeMap<u32, Vec<f32>>,
    /// video_id -> (class, event start, event end exclusive)
    events: BTreeMap<String, (u32, usize, usize)>,
}

impl SyntheticEmbedder {
    pub fn new(seed: u64, d_emb: usize, beta: f32) -> Self {
        Self {
            seed,
            d_emb,
            beta,
            class_signals: BTreeMap::new(),
            events: BTreeMap::new(),
        }
    }

    /// Registers a class signal as the mean of its key-concept embeddings.
    pub fn register_class(&mut self, class: u32, key_concepts: &[&str]) {
        let mut acc = vec![0f64; self.d_emb];
        for label in key_concepts {
            let v = unit_gaussian(self.seed, &format!("text/{label}"), self.d_emb);
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += *x as f64;
            }
        }
        let n = key_concepts.len().max(1) as f64;
        self.class_signals
            .insert(class, acc.iter().map(|a| (a / n) as f32).collect());
    }

    pub fn register_event(&mut self, video_id: &str, class: u32, start: usize, end: usize) {
        self.events.insert(video_id.to_string(), (class, start, end));
    }

    pub fn class_signal(&self, class: u32) -> Option<&[f32]> {
        self.class_signals.get(&class).map(|v| v.as_slice())
    }
}

/// Seeded position of the contiguous anomaly interval: 20% of the video.
pub fn event_interval(seed: u64, video_id: &str, frame_count: usize) -> (usize, usize) {
    let len = (frame_count / 5).max(1).min(frame_count);
    let mut rng = rng_for(seed, &format!("event/{video_id}"));
    let start = rng.gen_range(0..=frame_count - len);
    (start, start + len)
}

impl EmbeddingSource for SyntheticEmbedder {
    fn d_emb(&self) -> usize {
        self.d_emb
    }

    fn embed_text(&self, label: &str) -> Result<Vec<f32>, EmbedError> {
        if label.is_empty() {
            return Ok(vec![0.0; self.d_emb]);
        }
        Ok(unit_gaussian(self.seed, &format!("text/{label}"), self.d_emb))
    }

    fn embed_frame(&self, video_id: &str, frame_index: usize) -> Result<Vec<f32>, EmbedError> {
        let mut v = unit_gaussian(
            self.seed,
            &format!("frame/{video_id}/{frame_index}"),
            self.d_emb,
        );
        if let Some(&(class, start, end)) = self.events.get(video_id) {
            if (start..end).contains(&frame_index) {
                let signal = self.class_signals.get(&class).ok_or_else(|| {
                    EmbedError::BackendFailure(format!("class {class} has no registered signal"))
                })?;
                for (x, s) in v.iter_mut().zip(signal) {
                    *x += self.beta * s;
                }
            }
        }
        Ok(v)
    }
}

/// Cache-backed source; text keys are the labels, frame keys are
/// `video_id/frame_index`.
pub struct CacheEmbedder {
    cache: EmbeddingCache,
}

impl CacheEmbedder {
    pub fn new(cache: EmbeddingCache) -> Self {
        Self { cache }
    }

    pub fn open(path: &std::path::Path) -> Result<Self, EmbedError> {
        Ok(Self {
            cache: EmbeddingCache::read(path)?,
        })
    }
}

impl EmbeddingSource for CacheEmbedder {
    fn d_emb(&self) -> usize {
        self.cache.d_emb
    }

    fn embed_text(&self, label: &str) -> Result<Vec<f32>, EmbedError> {
        if label.is_empty() {
            return Ok(vec![0.0; self.cache.d_emb]);
        }
        self.cache
            .get(label)
            .map(|v| v.to_vec())
            .ok_or_else(|| EmbedError::MissingLabel(label.to_string()))
    }

    fn embed_frame(&self, video_id: &str, frame_index: usize) -> Result<Vec<f32>, EmbedError> {
        self.cache
            .get(&frame_key(video_id, frame_index))
            .map(|v| v.to_vec())
            .ok_or_else(|| EmbedError::MissingFrame {
                video_id: video_id.to_string(),
                frame_index,
            })
    }
}

/// Client for an embedding service speaking
/// `POST {kind: "text"|"image", payload} -> {vector: [...]}`.
#[cfg(feature = "http")]
pub struct HttpEmbedder {
    pub endpoint: String,
    d_emb: usize,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpEmbedder {
    pub fn new(endpoint: &str, d_emb: usize) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            d_emb,
            client: reqwest::blocking::Client::new(),
        }
    }

    fn fetch(&self, kind: &str, payload: &str) -> Result<Vec<f32>, EmbedError> {
        let body = serde_json::json!({ "kind": kind, "payload": payload });
        let resp: serde_json::Value = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| EmbedError::BackendFailure(e.to_string()))?
            .json()
            .map_err(|e| EmbedError::BackendFailure(e.to_string()))?;
        let vec: Vec<f32> = resp["vector"]
            .as_array()
            .ok_or_else(|| EmbedError::BackendFailure("response missing vector".into()))?
            .iter()
            .map(|v| v.as_f64().unwrap_or(f64::NAN) as f32)
            .collect();
        if vec.len() != self.d_emb {
            return Err(EmbedError::DimMismatch {
                expected: self.d_emb,
                got: vec.len(),
            });
        }
        Ok(vec)
    }
}

#[cfg(feature = "http")]
impl EmbeddingSource for HttpEmbedder {
    fn d_emb(&self) -> usize {
        self.d_emb
    }

    fn embed_text(&self, label: &str) -> Result<Vec<f32>, EmbedError> {
        if label.is_empty() {
            return Ok(vec![0.0; self.d_emb]);
        }
        self.fetch("text", label)
    }

    fn embed_frame(&self, video_id: &str, frame_index: usize) -> Result<Vec<f32>, EmbedError> {
        self.fetch("image", &frame_key(video_id, frame_index))
    }
}
