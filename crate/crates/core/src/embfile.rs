//! Embedding and score sidecar files.
//!
//! An embedding set with prefix `p` is two files: `p.json`, a header
//! `{"dim": D, "count": N, "ids": [...]}`, and `p.bin`, `N * D` little-endian
//! `f32` values in row-major order. Aesthetic scores are JSONL lines
//! `{"id": ..., "aesthetic": ...}`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::EmbeddingFileError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    dim: usize,
    count: usize,
    ids: Vec<String>,
}

/// Embeddings as stored: ids plus a row-major `count x dim` block.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub ids: Vec<String>,
    pub data: Vec<f32>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self, EmbeddingFileError> {
        if data.len() != ids.len() * dim {
            return Err(EmbeddingFileError::PayloadSize { expected: ids.len() * dim * 4, actual: data.len() * 4 });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(EmbeddingFileError::DuplicateId(dup.clone()));
        }
        Ok(Self { dim, ids, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Id to row index.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn header_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".json")
}

pub fn payload_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".bin")
}

pub fn read_embeddings(prefix: impl AsRef<Path>) -> Result<EmbeddingSet, EmbeddingFileError> {
    let prefix = prefix.as_ref();
    let hp = header_path(prefix);
    let bp = payload_path(prefix);
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |e| EmbeddingFileError::Io(p, e)
    };
    let header: Header = serde_json::from_str(&fs::read_to_string(&hp).map_err(io(&hp))?)?;
    if header.ids.len() != header.count {
        return Err(EmbeddingFileError::CountMismatch { ids: header.ids.len(), count: header.count });
    }
    let bytes = fs::read(&bp).map_err(io(&bp))?;
    let expected = header.count * header.dim * 4;
    if bytes.len() != expected {
        return Err(EmbeddingFileError::PayloadSize { expected, actual: bytes.len() });
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    EmbeddingSet::new(header.dim, header.ids, data)
}

pub fn write_embeddings(prefix: impl AsRef<Path>, set: &EmbeddingSet) -> Result<(), EmbeddingFileError> {
    let prefix = prefix.as_ref();
    let header = Header { dim: set.dim, count: set.ids.len(), ids: set.ids.clone() };
    let hp = header_path(prefix);
    let bp = payload_path(prefix);
    fs::write(&hp, serde_json::to_string(&header)?).map_err(|e| EmbeddingFileError::Io(hp.display().to_string(), e))?;
    let bytes: Vec<u8> = set.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bp, bytes).map_err(|e| EmbeddingFileError::Io(bp.display().to_string(), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AestheticLine {
    pub id: String,
    pub aesthetic: f64,
}

pub fn read_aesthetic(path: impl AsRef<Path>) -> Result<HashMap<String, f64>, EmbeddingFileError> {
    let path = path.as_ref();
    let io = |e| EmbeddingFileError::Io(path.display().to_string(), e);
    let file = fs::File::open(path).map_err(io)?;
    let mut out = HashMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AestheticLine = serde_json::from_str(&line)?;
        if out.insert(rec.id.clone(), rec.aesthetic).is_some() {
            return Err(EmbeddingFileError::DuplicateId(rec.id));
        }
    }
    Ok(out)
}

pub fn write_aesthetic(path: impl AsRef<Path>, lines: &[AestheticLine]) -> Result<(), EmbeddingFileError> {
    let path = path.as_ref();
    let mut text = String::new();
    for l in lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| EmbeddingFileError::Io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let pfx = dir.path().join("img");
        let set = EmbeddingSet::new(2, vec!["a".into(), "b".into()], vec![1.0, -2.0, 0.5, 3.25]).unwrap();
        write_embeddings(&pfx, &set).unwrap();
        assert_eq!(read_embeddings(&pfx).unwrap(), set);
        let bytes = fs::read(payload_path(&pfx)).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[4..8], &(-2.0f32).to_le_bytes());
        let header = fs::read_to_string(header_path(&pfx)).unwrap();
        assert_eq!(header, r#"{"dim":2,"count":2,"ids":["a","b"]}"#);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let pfx = dir.path().join("e");
        fs::write(header_path(&pfx), r#"{"dim":3,"count":1,"ids":["x"]}"#).unwrap();
        fs::write(payload_path(&pfx), [0u8; 8]).unwrap();
        assert!(matches!(read_embeddings(&pfx), Err(EmbeddingFileError::PayloadSize { expected: 12, actual: 8 })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(matches!(
            EmbeddingSet::new(1, vec!["a".into(), "a".into()], vec![1.0, 2.0]),
            Err(EmbeddingFileError::DuplicateId(_))
        ));
    }

    #[test]
    fn aesthetic_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        write_aesthetic(&p, &[AestheticLine { id: "x".into(), aesthetic: 4.5 }]).unwrap();
        let m = read_aesthetic(&p).unwrap();
        assert_eq!(m["x"], 4.5);
    }
}
