//! Binary embedding cache.
//!
//! Layout: magic `MGNNEMB1`, u32 dimension, u32 entry count, then per entry
//! a u16 key length, the UTF-8 key, and `d_emb` little-endian f32 values.
//! Round trips are byte-exact.

use super::EmbedError;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CACHE_MAGIC: &[u8; 8] = b"MGNNEMB1";

/// In-memory cache; insertion order is preserved on disk.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingCache {
    pub d_emb: usize,
    entries: Vec<(String, Vec<f32>)>,
    index: HashMap<String, usize>,
}

impl EmbeddingCache {
    pub fn new(d_emb: usize) -> Self {
        Self {
            d_emb,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: &str, values: Vec<f32>) -> Result<(), EmbedError> {
        if values.len() != self.d_emb {
            return Err(EmbedError::DimMismatch {
                expected: self.d_emb,
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(EmbedError::BackendFailure(format!(
                "non-finite values for key {key:?}"
            )));
        }
        if let Some(&i) = self.index.get(key) {
            self.entries[i].1 = values;
        } else {
            self.index.insert(key.to_string(), self.entries.len());
            self.entries.push((key.to_string(), values));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index.get(key).map(|&i| self.entries[i].1.as_slice())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn write(&self, path: &Path) -> Result<(), EmbedError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(&(self.d_emb as u32).to_le_bytes())?;
        f.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (key, values) in &self.entries {
            let kb = key.as_bytes();
            if kb.len() > u16::MAX as usize {
                return Err(EmbedError::BackendFailure(format!(
                    "key too long ({} bytes)",
                    kb.len()
                )));
            }
            f.write_all(&(kb.len() as u16).to_le_bytes())?;
            f.write_all(kb)?;
            for v in values {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, EmbedError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let corrupt = |d: &str| EmbedError::CorruptCache(d.to_string());

        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)
            .map_err(|_| corrupt("file shorter than header"))?;
        if &magic != CACHE_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let mut u32buf = [0u8; 4];
        f.read_exact(&mut u32buf)
            .map_err(|_| corrupt("missing dimension"))?;
        let d_emb = u32::from_le_bytes(u32buf) as usize;
        f.read_exact(&mut u32buf)
            .map_err(|_| corrupt("missing count"))?;
        let count = u32::from_le_bytes(u32buf) as usize;

        let mut cache = Self::new(d_emb);
        for i in 0..count {
            let mut u16buf = [0u8; 2];
            f.read_exact(&mut u16buf)
                .map_err(|_| corrupt(&format!("truncated at entry {i}")))?;
            let klen = u16::from_le_bytes(u16buf) as usize;
            let mut kbuf = vec![0u8; klen];
            f.read_exact(&mut kbuf)
                .map_err(|_| corrupt(&format!("truncated key at entry {i}")))?;
            let key = String::from_utf8(kbuf)
                .map_err(|_| corrupt(&format!("key at entry {i} is not UTF-8")))?;
            if cache.index.contains_key(&key) {
                return Err(corrupt(&format!("duplicate key {key:?}")));
            }
            let mut vbuf = vec![0u8; d_emb * 4];
            f.read_exact(&mut vbuf)
                .map_err(|_| corrupt(&format!("truncated row at entry {i}")))?;
            let values: Vec<f32> = vbuf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            cache.index.insert(key.clone(), cache.entries.len());
            cache.entries.push((key, values));
        }
        let mut rest = [0u8; 1];
        if f.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes after last entry"));
        }
        Ok(cache)
    }
}

/// Cache key for a frame row.
pub fn frame_key(video_id: &str, frame_index: usize) -> String {
    format!("{video_id}/{frame_index}")
}
