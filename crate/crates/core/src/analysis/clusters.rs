//! Within-cluster pairwise cosine distances for groups of paraphrases.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{dot, l2_normalize_rows, Matrix};
use crate::model::TOOLKIT_VERSION;

/// `{min, q1, median, q3, max}` with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile `q` of sorted data, interpolating between order statistics at
/// position `q·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("five-number summary of no values"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// `1 − cos` over the strict upper triangle, row-major.
pub fn pairwise_cosine_distances(points: &Matrix) -> Result<Vec<f64>> {
    let u = l2_normalize_rows(points)?;
    let n = u.rows();
    let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((1.0 - dot(u.row(i), u.row(j))).clamp(0.0, 2.0));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistanceEntry {
    pub cluster: String,
    pub family: String,
    pub n_points: usize,
    pub n_pairs: usize,
    pub summary: FiveNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistanceReport {
    pub toolkit_version: String,
    pub entries: Vec<ClusterDistanceEntry>,
}

impl ClusterDistanceReport {
    pub fn get(&self, cluster: &str, family: &str) -> Option<&ClusterDistanceEntry> {
        self.entries.iter().find(|e| e.cluster == cluster && e.family == family)
    }
}

/// `families` maps a family name to its named clusters.
pub fn cosine_cluster_stats(families: &BTreeMap<String, Vec<(String, Matrix)>>) -> Result<ClusterDistanceReport> {
    let mut entries = Vec::new();
    for (family, clusters) in families {
        for (name, m) in clusters {
            if m.rows() < 2 {
                return Err(Error::invalid(format!(
                    "cluster {name:?} in family {family:?} has {} point(s), need at least 2",
                    m.rows()
                )));
            }
            let d = pairwise_cosine_distances(m)?;
            entries.push(ClusterDistanceEntry {
                cluster: name.clone(),
                family: family.clone(),
                n_points: m.rows(),
                n_pairs: d.len(),
                summary: FiveNumber::of(&d)?,
            });
        }
    }
    Ok(ClusterDistanceReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        entries,
    })
}

/// Named sentence groups from a text file: `[name]` opens a group, each
/// following non-empty line is a sentence, `#` lines are comments.
pub fn read_sentence_clusters(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<String>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sentence_clusters(&text)
}

pub fn parse_sentence_clusters(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            out.push((name.trim().to_string(), Vec::new()));
        } else if let Some((_, sents)) = out.last_mut() {
            sents.push(line.to_string());
        } else {
            return Err(Error::invalid(format!("line {}: sentence before any [cluster] header", lineno + 1)));
        }
    }
    Ok(out)
}

/// Groups the rows of `set` by the cluster prefix of their id
/// (`"{cluster}/{index}"`), keeping first-seen cluster order.
pub fn clusters_by_id_prefix(set: &EmbeddingSet) -> Result<Vec<(String, Matrix)>> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, id) in set.ids.iter().enumerate() {
        let (prefix, _) = id
            .split_once('/')
            .ok_or_else(|| Error::invalid(format!("id {id:?} has no cluster prefix (expected cluster/index)")))?;
        if !rows.contains_key(prefix) {
            order.push(prefix.to_string());
        }
        rows.entry(prefix.to_string()).or_default().push(i);
    }
    let m = set.to_matrix();
    Ok(order
        .into_iter()
        .map(|name| {
            let sel = m.select_rows(&rows[&name]);
            (name, sel)
        })
        .collect())
}
