//! EMB1 binary embedding files.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "M2E1"
//! 4       4   u32   version (1)
//! 8       4   u32   dtype (1 = float32, 2 = float64)
//! 12      8   u64   n
//! 20      8   u64   d
//! 28      n*d*w     values, row-major
//! ..      8   u64   metadata length in bytes
//! ..      len       UTF-8 JSON {"lang": str, "ids": [str], "texts": [str] | null}
//! ```
//!
//! All integers and floats are little-endian. Embedding sets are always
//! written as float32; float64 is reserved for model parameters, which must
//! roundtrip without rounding.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"M2E1";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
pub const DTYPE_F64: u32 = 2;
const HEADER_LEN: usize = 28;

/// Row vectors plus their ids, language tag and optional source texts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    n: usize,
    d: usize,
    vectors: Vec<f32>,
    pub ids: Vec<String>,
    pub lang: String,
    pub texts: Option<Vec<String>>,
}

impl EmbeddingSet {
    pub fn new(
        n: usize,
        d: usize,
        vectors: Vec<f32>,
        ids: Vec<String>,
        lang: impl Into<String>,
        texts: Option<Vec<String>>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if vectors.len() != n * d {
            return Err(Error::invalid(format!(
                "{} values for a {n}x{d} embedding set",
                vectors.len()
            )));
        }
        if ids.len() != n {
            return Err(Error::invalid(format!("{} ids for {n} rows", ids.len())));
        }
        if let Some(t) = &texts {
            if t.len() != n {
                return Err(Error::invalid(format!("{} texts for {n} rows", t.len())));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding values".into()));
        }
        Ok(Self {
            n,
            d,
            vectors,
            ids,
            lang: lang.into(),
            texts,
        })
    }

    /// Rounds `m` to 32-bit storage.
    pub fn from_matrix(
        m: &Matrix,
        ids: Vec<String>,
        lang: impl Into<String>,
        texts: Option<Vec<String>>,
    ) -> Result<Self> {
        let v = m.as_slice().iter().map(|&x| x as f32).collect();
        Self::new(m.rows(), m.cols(), v, ids, lang, texts)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_f32(self.n, self.d, &self.vectors).expect("consistent shape")
    }

    pub fn text(&self, i: usize) -> Option<&str> {
        self.texts.as_ref().map(|t| t[i].as_str())
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut vectors = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            vectors.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            d: self.d,
            vectors,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            lang: self.lang.clone(),
            texts: self.texts.as_ref().map(|t| idx.iter().map(|&i| t[i].clone()).collect()),
        }
    }

    pub fn id_index(&self) -> std::collections::HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    lang: String,
    ids: Vec<String>,
    texts: Option<Vec<String>>,
}

fn header(dtype: u32, n: usize, d: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&dtype.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    buf
}

fn append_metadata(buf: &mut Vec<u8>, meta: &Metadata, path: &Path) -> Result<()> {
    let json = serde_json::to_vec(meta).map_err(|e| Error::json(path, e))?;
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    Ok(())
}

pub fn encode_emb1(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let mut buf = header(DTYPE_F32, set.n, set.d);
    buf.reserve(set.vectors.len() * 4 + 64);
    for x in &set.vectors {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let meta = Metadata {
        lang: set.lang.clone(),
        ids: set.ids.clone(),
        texts: set.texts.clone(),
    };
    append_metadata(&mut buf, &meta, Path::new("<memory>"))?;
    Ok(buf)
}

pub fn write_emb1(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = encode_emb1(set)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes a float64 tensor (model parameters). Row ids are `row{i}`.
pub fn write_emb1_f64(m: &Matrix, lang: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = header(DTYPE_F64, m.rows(), m.cols());
    for x in m.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let meta = Metadata {
        lang: lang.to_string(),
        ids: (0..m.rows()).map(|i| format!("row{i}")).collect(),
        texts: None,
    };
    append_metadata(&mut buf, &meta, path)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Decoded {
    dtype: u32,
    n: usize,
    d: usize,
    payload_start: usize,
    meta: Metadata,
}

fn take<'a>(bytes: &'a [u8], at: usize, len: usize, path: &Path, what: &'static str) -> Result<&'a [u8]> {
    bytes
        .get(at..at.checked_add(len).ok_or_else(|| Error::Truncated { path: path.into(), what })?)
        .ok_or_else(|| Error::Truncated { path: path.into(), what })
}

fn decode(bytes: &[u8], path: &Path) -> Result<Decoded> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { path: path.into(), what: "magic" });
    }
    if &bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic { path: path.into(), found });
    }
    let h = take(bytes, 0, HEADER_LEN, path, "header")?;
    let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::VersionMismatch { path: path.into(), found: version });
    }
    let dtype = u32::from_le_bytes(h[8..12].try_into().unwrap());
    let width = match dtype {
        DTYPE_F32 => 4,
        DTYPE_F64 => 8,
        other => return Err(Error::UnsupportedDtype { path: path.into(), found: other }),
    };
    let n = u64::from_le_bytes(h[12..20].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(h[20..28].try_into().unwrap()) as usize;
    let payload_len = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(width))
        .ok_or(Error::Truncated { path: path.into(), what: "values" })?;
    take(bytes, HEADER_LEN, payload_len, path, "values")?;
    let meta_at = HEADER_LEN + payload_len;
    let len_bytes = take(bytes, meta_at, 8, path, "metadata length")?;
    let meta_len = u64::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
    let meta_bytes = take(bytes, meta_at + 8, meta_len, path, "metadata")?;
    let meta: Metadata = serde_json::from_slice(meta_bytes).map_err(|e| Error::json(path, e))?;
    if meta.ids.len() != n {
        return Err(Error::IdCountMismatch {
            path: path.into(),
            ids: meta.ids.len(),
            rows: n,
        });
    }
    Ok(Decoded {
        dtype,
        n,
        d,
        payload_start: HEADER_LEN,
        meta,
    })
}

pub fn decode_emb1(bytes: &[u8], path: &Path) -> Result<EmbeddingSet> {
    let dec = decode(bytes, path)?;
    if dec.dtype != DTYPE_F32 {
        return Err(Error::UnsupportedDtype { path: path.into(), found: dec.dtype });
    }
    let raw = &bytes[dec.payload_start..dec.payload_start + dec.n * dec.d * 4];
    let vectors = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSet::new(dec.n, dec.d, vectors, dec.meta.ids, dec.meta.lang, dec.meta.texts)
}

pub fn read_emb1(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_emb1(&bytes, path)
}

/// Reads any dtype as a 64-bit matrix.
pub fn read_emb1_f64(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let dec = decode(&bytes, path)?;
    let start = dec.payload_start;
    let values: Vec<f64> = match dec.dtype {
        DTYPE_F32 => bytes[start..start + dec.n * dec.d * 4]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        _ => bytes[start..start + dec.n * dec.d * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Matrix::from_vec(dec.n, dec.d, values)
}
