//! `TCLP` embedding store.
//!
//! Layout, little-endian: magic `"TCLP"`, version `u32 = 1`, dimension
//! `u32`, record count `u32`, then per record `id_len u16`, UTF-8 id bytes
//! and `d` `f32` values.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binfmt::{self, ByteReader, FORMAT_VERSION};
use crate::embedding::Embedding;
use crate::encoders::TextEncoder;
use crate::error::{check_dim, Error, Result};

pub const TCLP_MAGIC: [u8; 4] = *b"TCLP";

/// Informational sidecar written next to a store as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StoreMetadata {
    pub model: String,
    #[serde(default)]
    pub notes: String,
}

/// Ordered id -> embedding map with a fixed dimension. Values are held as
/// `f32`, exactly as they are stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    values: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Malformed("embedding dimension is 0".into()));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Inserts raw values. Ids must be unique.
    pub fn insert_raw(&mut self, id: impl Into<String>, values: Vec<f32>) -> Result<()> {
        let id = id.into();
        binfmt::check_id(&id)?;
        check_dim(self.dim, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding {id:?}")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.push(values);
        Ok(())
    }

    /// Inserts an embedding, rounding its values to `f32`.
    pub fn insert(&mut self, id: impl Into<String>, embedding: &Embedding) -> Result<()> {
        self.insert_raw(id, embedding.values().iter().map(|&v| v as f32).collect())
    }

    pub fn raw(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.values[i].as_slice())
    }

    pub fn get(&self, id: &str) -> Option<Embedding> {
        self.raw(id).and_then(|v| Embedding::from_f32(v).ok())
    }

    /// Like [`get`](Self::get), reporting a missing id as unresolved.
    pub fn require(&self, id: &str) -> Result<Embedding> {
        let raw = self
            .raw(id)
            .ok_or_else(|| Error::Unresolved(vec![id.to_string()]))?;
        Embedding::from_f32(raw)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + self.len() * (2 + 4 * self.dim));
        out.extend_from_slice(&TCLP_MAGIC);
        binfmt::put_u32(&mut out, FORMAT_VERSION);
        binfmt::put_u32(&mut out, binfmt::to_u32(self.dim, "dimension")?);
        binfmt::put_u32(&mut out, binfmt::to_u32(self.len(), "record count")?);
        for (id, values) in self.iter() {
            binfmt::put_id(&mut out, id);
            binfmt::put_f32s(&mut out, values.iter().copied());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(TCLP_MAGIC)?;
        let dim = r.u32("dimension")? as usize;
        let count = r.u32("record count")? as usize;
        let mut store = Self::new(dim)?;
        for _ in 0..count {
            let id = r.id()?;
            let values = r.f32s(dim, "record values")?;
            store.insert_raw(id, values)?;
        }
        r.finish()?;
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn sidecar_path(store_path: &Path) -> PathBuf {
    store_path.with_extension("json")
}

pub fn save_metadata(store_path: &Path, meta: &StoreMetadata) -> Result<()> {
    let path = sidecar_path(store_path);
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Reads the sidecar if present.
pub fn load_metadata(store_path: &Path) -> Result<Option<StoreMetadata>> {
    let path = sidecar_path(store_path);
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&path, e)),
    }
}

impl TextEncoder for EmbeddingStore {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Looks the text up by id.
    fn encode_text(&self, text: &str) -> Result<Embedding> {
        self.require(text)
    }
}
