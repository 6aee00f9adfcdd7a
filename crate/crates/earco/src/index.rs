//! Exact flat vector index searched by L2 distance.
//!
//! Desk-scale corpora fit in memory, so the index is a plain scan: every
//! query compares against every stored vector, which keeps results exact
//! and lets tests check them against an independent brute-force oracle.
//! Ties are broken by the lexicographically smaller incident id so
//! results never depend on insertion order.
//!
//! On disk the index is `EARCIDX1` followed by a little-endian header and
//! one `(id_len: u32, id bytes, dim x f32)` record per entry, preserving
//! f32 bits exactly.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::embedding::EmbeddingVector;

const MAGIC: &[u8; 8] = b"EARCIDX1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector dimension mismatch: index dim {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate incident id {0:?}")]
    DuplicateId(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be >= 1")]
    InvalidK,
    #[error("unrecognized index file header")]
    VersionMismatch,
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One search hit: stored incident id and its L2 distance to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub incident_id: String,
    pub distance: f64,
}

/// Exact flat store of embedding vectors keyed by incident id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    by_id: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "index dimension must be positive");
        Self { dim, ids: Vec::new(), vectors: Vec::new(), by_id: HashMap::new() }
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

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, id: &str) -> Option<&EmbeddingVector> {
        self.by_id.get(id).map(|&i| &self.vectors[i])
    }

    pub fn add(&mut self, id: impl Into<String>, vector: EmbeddingVector) -> Result<(), IndexError> {
        let id = id.into();
        if vector.dim() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, got: vector.dim() });
        }
        if self.by_id.contains_key(&id) {
            return Err(IndexError::DuplicateId(id));
        }
        self.by_id.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    /// Top-k nearest entries by L2 distance, ascending, ties broken by
    /// smaller incident id. Returns `min(k, len)` results.
    pub fn search_top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<QueryResult>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, got: query.dim() });
        }
        let mut hits: Vec<QueryResult> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| QueryResult { incident_id: id.clone(), distance: query.l2_distance(v) })
            .collect();
        hits.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.incident_id.cmp(&b.incident_id))
        });
        hits.truncate(k.min(hits.len()));
        Ok(hits)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (id, vector) in self.ids.iter().zip(&self.vectors) {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for v in vector.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "header")?;
        if &magic != MAGIC {
            return Err(IndexError::VersionMismatch);
        }
        let mut buf4 = [0u8; 4];
        let mut buf8 = [0u8; 8];
        read_exact(&mut r, &mut buf4, "dim")?;
        let dim = u32::from_le_bytes(buf4) as usize;
        if dim == 0 {
            return Err(IndexError::Corrupt("zero dimension".to_string()));
        }
        read_exact(&mut r, &mut buf8, "count")?;
        let count = u64::from_le_bytes(buf8) as usize;

        let mut index = VectorIndex::new(dim);
        for entry in 0..count {
            read_exact(&mut r, &mut buf4, "id length")?;
            let id_len = u32::from_le_bytes(buf4) as usize;
            let mut id_bytes = vec![0u8; id_len];
            read_exact(&mut r, &mut id_bytes, "id bytes")?;
            let id = String::from_utf8(id_bytes)
                .map_err(|_| IndexError::Corrupt(format!("entry {entry}: id is not UTF-8")))?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                read_exact(&mut r, &mut buf4, "vector component")?;
                values.push(f32::from_le_bytes(buf4));
            }
            let vector = EmbeddingVector::new(values)
                .map_err(|e| IndexError::Corrupt(format!("entry {entry}: {e}")))?;
            index.add(id, vector)?;
        }
        // Trailing bytes mean the header lied about the count.
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(IndexError::Corrupt("trailing bytes after last entry".to_string()));
        }
        Ok(index)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), IndexError> {
    r.read_exact(buf)
        .map_err(|_| IndexError::Corrupt(format!("truncated while reading {what}")))
}
