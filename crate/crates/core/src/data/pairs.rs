use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{read_json, resolve, write_json};
use super::emb1::{read_emb1, write_emb1, EmbeddingSet};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Row `i` of `zm` (multilingual space) and `ze` (multimodal text space)
/// embed the same sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub zm: EmbeddingSet,
    pub ze: EmbeddingSet,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.zm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zm.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.zm.dim()
    }

    pub fn d_out(&self) -> usize {
        self.ze.dim()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            zm: self.zm.select(idx),
            ze: self.ze.select(idx),
        }
    }

    /// Same pairs ordered by id, so that downstream shuffles depend only on
    /// the seed and the pair count.
    pub fn canonical_order(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.zm.ids[a].cmp(&self.zm.ids[b]));
        self.select(&idx)
    }
}

/// `{"zm": path, "ze": path}` with optional declared widths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairManifest {
    pub zm: std::path::PathBuf,
    pub ze: std::path::PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_e: Option<usize>,
}

fn dedup_key(text: &str) -> &str {
    text.trim()
}

/// Inner join on id in `zm` order, dropping rows whose trimmed text repeats
/// an earlier row's.
pub fn build_pairs(zm: &EmbeddingSet, ze: &EmbeddingSet) -> Result<PairedDataset> {
    let zm_texts = zm
        .texts
        .as_ref()
        .ok_or_else(|| Error::invalid("multilingual set carries no texts"))?;
    if ze.texts.is_none() {
        return Err(Error::invalid("multimodal set carries no texts"));
    }
    let ze_index = ze.id_index();
    let mut keep_m = Vec::new();
    let mut keep_e = Vec::new();
    let mut seen = HashSet::new();
    let mut joined = 0usize;
    for (i, id) in zm.ids.iter().enumerate() {
        let Some(&j) = ze_index.get(id.as_str()) else {
            continue;
        };
        joined += 1;
        if seen.insert(dedup_key(&zm_texts[i])) {
            keep_m.push(i);
            keep_e.push(j);
        }
    }
    if joined == 0 {
        return Err(Error::invalid("pair sets share no ids"));
    }
    Ok(PairedDataset {
        zm: zm.select(&keep_m),
        ze: ze.select(&keep_e),
    })
}

/// Concatenates datasets, then applies the same text dedup across all of
/// them (first occurrence wins). Repeated ids are dropped the same way.
pub fn concat_pairs(parts: &[PairedDataset]) -> Result<PairedDataset> {
    let first = parts.first().ok_or_else(|| Error::invalid("no pair datasets given"))?;
    let (dm, de) = (first.d_in(), first.d_out());
    let mut zm_v = Vec::new();
    let mut ze_v = Vec::new();
    let mut ids = Vec::new();
    let mut zm_t = Vec::new();
    let mut ze_t = Vec::new();
    let mut seen_text = HashSet::new();
    let mut seen_id = HashSet::new();
    for p in parts {
        if p.d_in() != dm || p.d_out() != de {
            return Err(Error::invalid(format!(
                "pair dataset dims ({}, {}) differ from ({dm}, {de})",
                p.d_in(),
                p.d_out()
            )));
        }
        for i in 0..p.len() {
            let text = p.zm.text(i).unwrap_or("");
            if !seen_id.insert(p.zm.ids[i].clone()) || !seen_text.insert(dedup_key(text).to_string()) {
                continue;
            }
            zm_v.extend_from_slice(p.zm.row(i));
            ze_v.extend_from_slice(p.ze.row(i));
            ids.push(p.zm.ids[i].clone());
            zm_t.push(text.to_string());
            ze_t.push(p.ze.text(i).unwrap_or("").to_string());
        }
    }
    let n = ids.len();
    Ok(PairedDataset {
        zm: EmbeddingSet::new(n, dm, zm_v, ids.clone(), first.zm.lang.clone(), Some(zm_t))?,
        ze: EmbeddingSet::new(n, de, ze_v, ids, first.ze.lang.clone(), Some(ze_t))?,
    })
}

pub fn load_pair_manifest(path: impl AsRef<Path>) -> Result<PairedDataset> {
    let path = path.as_ref();
    let m: PairManifest = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let zm = read_emb1(resolve(base, &m.zm))?;
    let ze = read_emb1(resolve(base, &m.ze))?;
    for (declared, actual, which) in [(m.d_m, zm.dim(), "d_m"), (m.d_e, ze.dim(), "d_e")] {
        if let Some(d) = declared {
            if d != actual {
                return Err(Error::invalid(format!(
                    "{}: manifest declares {which}={d} but file has d={actual}",
                    path.display()
                )));
            }
        }
    }
    build_pairs(&zm, &ze)
}

/// Loads every manifest and dedups across their concatenation.
pub fn load_pairs<P: AsRef<Path>>(manifests: &[P]) -> Result<PairedDataset> {
    let parts = manifests
        .iter()
        .map(load_pair_manifest)
        .collect::<Result<Vec<_>>>()?;
    concat_pairs(&parts)
}

pub fn save_pairs(pairs: &PairedDataset, dir: impl AsRef<Path>, stem: &str) -> Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let zm = format!("{stem}.zm.emb1");
    let ze = format!("{stem}.ze.emb1");
    write_emb1(&pairs.zm, dir.join(&zm))?;
    write_emb1(&pairs.ze, dir.join(&ze))?;
    let manifest = PairManifest {
        zm: zm.into(),
        ze: ze.into(),
        d_m: Some(pairs.d_in()),
        d_e: Some(pairs.d_out()),
    };
    let path = dir.join(format!("{stem}.pairs.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Random `n`-pair training split (Fisher-Yates selection).
pub fn sample_split(pairs: &PairedDataset, n: usize, seed: u64) -> Result<PairedDataset> {
    if n > pairs.len() {
        return Err(Error::invalid(format!(
            "requested {n} pairs but only {} available",
            pairs.len()
        )));
    }
    let idx = Rng::new(seed).sample_indices(pairs.len(), n);
    Ok(pairs.select(&idx))
}
