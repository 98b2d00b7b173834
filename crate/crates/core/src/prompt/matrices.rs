//! `TCPM` prompt-matrix store.
//!
//! Layout, little-endian: magic `"TCPM"`, version `u32 = 1`, rows `M u32`,
//! columns `d u32`, record count `u32`, then per record `id_len u16`, UTF-8
//! id bytes and `M * d` row-major `f32` values.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use crate::binfmt::{self, ByteReader, FORMAT_VERSION};
use crate::error::{Error, Result};

pub const TCPM_MAGIC: [u8; 4] = *b"TCPM";

/// Ordered id -> `[rows x cols]` matrix map, held as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptMatrixStore {
    rows: usize,
    cols: usize,
    ids: Vec<String>,
    values: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl PromptMatrixStore {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Malformed(format!("prompt matrix shape {rows}x{cols}")));
        }
        Ok(Self {
            rows,
            cols,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn insert_raw(&mut self, id: impl Into<String>, values: Vec<f32>) -> Result<()> {
        let id = id.into();
        binfmt::check_id(&id)?;
        if values.len() != self.rows * self.cols {
            return Err(Error::LengthMismatch {
                expected: self.rows * self.cols,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("prompt matrix {id:?}")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.push(values);
        Ok(())
    }

    /// Inserts a matrix, rounding to `f32`.
    pub fn insert(&mut self, id: impl Into<String>, matrix: &Array2<f64>) -> Result<()> {
        if matrix.dim() != (self.rows, self.cols) {
            return Err(Error::invalid(format!(
                "matrix shape {:?} differs from store shape ({}, {})",
                matrix.dim(),
                self.rows,
                self.cols
            )));
        }
        self.insert_raw(id, matrix.iter().map(|&v| v as f32).collect())
    }

    pub fn raw(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.values[i].as_slice())
    }

    pub fn get(&self, id: &str) -> Option<Array2<f64>> {
        self.raw(id).map(|v| {
            Array2::from_shape_vec((self.rows, self.cols), v.iter().map(|&x| f64::from(x)).collect())
                .expect("length checked on insert")
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + self.len() * (2 + 4 * self.rows * self.cols));
        out.extend_from_slice(&TCPM_MAGIC);
        binfmt::put_u32(&mut out, FORMAT_VERSION);
        binfmt::put_u32(&mut out, binfmt::to_u32(self.rows, "rows")?);
        binfmt::put_u32(&mut out, binfmt::to_u32(self.cols, "columns")?);
        binfmt::put_u32(&mut out, binfmt::to_u32(self.len(), "record count")?);
        for (id, values) in self.ids.iter().zip(&self.values) {
            binfmt::put_id(&mut out, id);
            binfmt::put_f32s(&mut out, values.iter().copied());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(TCPM_MAGIC)?;
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("columns")? as usize;
        let count = r.u32("record count")? as usize;
        let mut store = Self::new(rows, cols)?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Malformed("prompt matrix size overflows".into()))?;
        for _ in 0..count {
            let id = r.id()?;
            let values = r.f32s(n, "matrix values")?;
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
