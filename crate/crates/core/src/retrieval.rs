//! Recall@K retrieval evaluation with cosine ranking.
//!
//! Gallery items are ranked by cosine similarity to each query, computed in
//! 64-bit. Equal similarities are ordered by ascending gallery row, so every
//! ranking is deterministic. A query counts as a hit at `K` when any of its
//! relevant items lands in the top `K`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, Relevance, RetrievalCorpus};
use crate::error::{Error, Result};
use crate::linalg::{dot, l2_normalize_rows, Matrix};
use crate::model::{ProjectionModel, TOOLKIT_VERSION};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// K → recall in percent.
pub type RecallAtK = BTreeMap<usize, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Text queries against the media gallery (T2I, T2A).
    #[serde(rename = "q2g")]
    QueryToGallery,
    /// Media items against the text queries (I2T, A2T).
    #[serde(rename = "g2q")]
    GalleryToQuery,
    /// Each caption against the other captions of the same set.
    #[serde(rename = "t2t")]
    TextToText,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::QueryToGallery => "q2g",
            Self::GalleryToQuery => "g2q",
            Self::TextToText => "t2t",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q2g" | "t2i" | "t2a" => Ok(Self::QueryToGallery),
            "g2q" | "i2t" | "a2t" => Ok(Self::GalleryToQuery),
            "t2t" => Ok(Self::TextToText),
            other => Err(Error::Usage(format!("unknown retrieval direction {other:?}"))),
        }
    }
}

fn check_ks(ks: &[usize], gallery_size: usize) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::invalid("at least one K is required"));
    }
    if ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!("ks must be positive and strictly ascending: {ks:?}")));
    }
    let kmax = *ks.last().unwrap();
    if kmax > gallery_size {
        return Err(Error::invalid(format!("K={kmax} exceeds gallery size {gallery_size}")));
    }
    Ok(())
}

/// 0-based rank of the best-placed relevant item.
fn best_rank(sims: &[f64], relevant: &[usize], excluded: Option<usize>) -> usize {
    relevant
        .iter()
        .map(|&r| {
            let sr = sims[r];
            sims.iter()
                .enumerate()
                .filter(|&(j, &s)| Some(j) != excluded && (s > sr || (s == sr && j < r)))
                .count()
        })
        .min()
        .expect("non-empty relevance")
}

/// Recall@K over row-matrices. `relevant[q]` lists gallery rows; with
/// `exclude_self`, query `q` never sees gallery row `q` (same-set probes).
pub fn recall_from_matrices(
    queries: &Matrix,
    gallery: &Matrix,
    relevant: &[Vec<usize>],
    ks: &[usize],
    exclude_self: bool,
) -> Result<RecallAtK> {
    if queries.cols() != gallery.cols() {
        return Err(Error::Shape {
            op: "recall",
            left: queries.shape(),
            right: gallery.shape(),
        });
    }
    if relevant.len() != queries.rows() {
        return Err(Error::invalid("one relevance list per query required"));
    }
    if queries.rows() == 0 {
        return Err(Error::invalid("no queries"));
    }
    let effective = gallery.rows() - usize::from(exclude_self);
    check_ks(ks, effective)?;
    for (q, rel) in relevant.iter().enumerate() {
        if rel.is_empty() {
            return Err(Error::invalid(format!("query row {q} has an empty relevance set")));
        }
        if let Some(&bad) = rel.iter().find(|&&g| g >= gallery.rows() || (exclude_self && g == q)) {
            return Err(Error::invalid(format!("query row {q} has invalid relevant row {bad}")));
        }
    }
    let qn = l2_normalize_rows(queries)?;
    let gn = l2_normalize_rows(gallery)?;

    let ranks: Vec<usize> = (0..qn.rows())
        .into_par_iter()
        .map(|q| {
            let qrow = qn.row(q);
            let sims: Vec<f64> = gn.row_iter().map(|g| dot(qrow, g)).collect();
            best_rank(&sims, &relevant[q], exclude_self.then_some(q))
        })
        .collect();

    let nq = ranks.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| r < k).count();
            (k, 100.0 * hits as f64 / nq)
        })
        .collect())
}

fn resolve_relevance(queries: &EmbeddingSet, gallery: &EmbeddingSet, relevance: &Relevance) -> Result<Vec<Vec<usize>>> {
    let gindex = gallery.id_index();
    queries
        .ids
        .iter()
        .map(|qid| {
            let rel = relevance
                .get(qid)
                .filter(|r| !r.is_empty())
                .ok_or_else(|| Error::invalid(format!("query {qid:?} has an empty relevance set")))?;
            rel.iter()
                .map(|g| {
                    gindex
                        .get(g.as_str())
                        .copied()
                        .ok_or_else(|| Error::invalid(format!("unknown gallery id {g:?}")))
                })
                .collect()
        })
        .collect()
}

/// Recall@K of `queries` against `gallery`.
pub fn recall_at_k(queries: &EmbeddingSet, gallery: &EmbeddingSet, relevance: &Relevance, ks: &[usize]) -> Result<RecallAtK> {
    let rel = resolve_relevance(queries, gallery, relevance)?;
    recall_from_matrices(&queries.to_matrix(), &gallery.to_matrix(), &rel, ks, false)
}

/// Caption-to-caption recall: each caption queries every other caption;
/// siblings from the same instance are relevant.
pub fn t2t_recall_matrix(captions: &Matrix, instances: &[String], ks: &[usize]) -> Result<RecallAtK> {
    if instances.len() != captions.rows() {
        return Err(Error::invalid("one instance id per caption required"));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        groups.entry(inst.as_str()).or_default().push(i);
    }
    if let Some((inst, _)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::invalid(format!("instance {inst:?} has a single caption")));
    }
    let relevant: Vec<Vec<usize>> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| groups[inst.as_str()].iter().copied().filter(|&j| j != i).collect())
        .collect();
    recall_from_matrices(captions, captions, &relevant, ks, true)
}

pub fn t2t_recall(captions: &EmbeddingSet, instances: &[String], ks: &[usize]) -> Result<RecallAtK> {
    t2t_recall_matrix(&captions.to_matrix(), instances, ks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub lang: String,
    pub direction: Direction,
    pub k: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageEntry {
    /// `"all"` or `"subset"`.
    pub set: String,
    pub langs: Vec<String>,
    pub direction: Direction,
    pub k: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub toolkit_version: String,
    pub corpus: String,
    pub ks: Vec<usize>,
    pub results: Vec<RecallEntry>,
    pub averages: Vec<AverageEntry>,
    pub model: Option<String>,
    pub gallery_size: usize,
    pub query_counts: BTreeMap<String, usize>,
}

impl RecallReport {
    pub fn get(&self, lang: &str, direction: Direction, k: usize) -> Option<f64> {
        self.results
            .iter()
            .find(|e| e.lang == lang && e.direction == direction && e.k == k)
            .map(|e| e.recall)
    }

    pub fn average(&self, set: &str, direction: Direction, k: usize) -> Option<f64> {
        self.averages
            .iter()
            .find(|e| e.set == set && e.direction == direction && e.k == k)
            .map(|e| e.recall)
    }
}

/// Per-language evaluation of `corpus`. With a model, query embeddings are
/// projected before ranking; the gallery is left untouched.
pub fn evaluate_corpus(
    model: Option<&ProjectionModel>,
    corpus: &RetrievalCorpus,
    directions: &[Direction],
    ks: &[usize],
    lang_subset: Option<&[String]>,
) -> Result<RecallReport> {
    if corpus.query_sets.is_empty() {
        return Err(Error::invalid("corpus has no query sets"));
    }
    if let Some(subset) = lang_subset {
        if let Some(bad) = subset.iter().find(|l| !corpus.query_sets.contains_key(*l)) {
            return Err(Error::Usage(format!("language {bad:?} is not in corpus {}", corpus.name)));
        }
        if subset.is_empty() {
            return Err(Error::Usage("empty language subset".into()));
        }
    }
    let dirs: BTreeSet<Direction> = directions.iter().copied().collect();
    let gallery = corpus.gallery.to_matrix();
    let mut results = Vec::new();
    let mut query_counts = BTreeMap::new();

    for (lang, set) in &corpus.query_sets {
        query_counts.insert(lang.clone(), set.len());
        let raw = set.to_matrix();
        let q = match model {
            Some(m) => m.project(&raw)?,
            None => raw,
        };
        let rel_rows = resolve_relevance(set, &corpus.gallery, &corpus.relevance)?;
        for &dir in &dirs {
            let r = match dir {
                Direction::QueryToGallery => recall_from_matrices(&q, &gallery, &rel_rows, ks, false)?,
                Direction::GalleryToQuery => {
                    let (rows, rel) = invert(&rel_rows, gallery.rows());
                    recall_from_matrices(&gallery.select_rows(&rows), &q, &rel, ks, false)?
                }
                Direction::TextToText => {
                    let instances: Vec<String> = set
                        .ids
                        .iter()
                        .map(|qid| {
                            let mut g = corpus.relevance[qid].clone();
                            g.sort();
                            g.join("\u{1f}")
                        })
                        .collect();
                    t2t_recall_matrix(&q, &instances, ks)?
                }
            };
            for (k, recall) in r {
                results.push(RecallEntry {
                    lang: lang.clone(),
                    direction: dir,
                    k,
                    recall,
                });
            }
        }
    }

    let all_langs = corpus.languages();
    let mut averages = average_entries("all", &all_langs, &results, &dirs, ks);
    if let Some(subset) = lang_subset {
        let mut s = subset.to_vec();
        s.sort();
        s.dedup();
        averages.extend(average_entries("subset", &s, &results, &dirs, ks));
    }

    Ok(RecallReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        corpus: corpus.name.clone(),
        ks: ks.to_vec(),
        results,
        averages,
        model: None,
        gallery_size: corpus.gallery.len(),
        query_counts,
    })
}

/// Gallery rows that some query points at, each with its relevant query rows.
fn invert(rel_rows: &[Vec<usize>], gallery_size: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut inv: HashMap<usize, Vec<usize>> = HashMap::new();
    for (q, rel) in rel_rows.iter().enumerate() {
        for &g in rel {
            inv.entry(g).or_default().push(q);
        }
    }
    let mut rows = Vec::new();
    let mut rel = Vec::new();
    for g in 0..gallery_size {
        if let Some(qs) = inv.remove(&g) {
            rows.push(g);
            rel.push(qs);
        }
    }
    (rows, rel)
}

fn average_entries(
    set: &str,
    langs: &[String],
    results: &[RecallEntry],
    dirs: &BTreeSet<Direction>,
    ks: &[usize],
) -> Vec<AverageEntry> {
    let mut out = Vec::new();
    for &dir in dirs {
        for &k in ks {
            let vals: Vec<f64> = langs
                .iter()
                .filter_map(|l| {
                    results
                        .iter()
                        .find(|e| &e.lang == l && e.direction == dir && e.k == k)
                        .map(|e| e.recall)
                })
                .collect();
            if vals.is_empty() {
                continue;
            }
            out.push(AverageEntry {
                set: set.to_string(),
                langs: langs.to_vec(),
                direction: dir,
                k,
                recall: vals.iter().sum::<f64>() / vals.len() as f64,
            });
        }
    }
    out
}

/// Checkpoint-selection score: the flat mean of query→gallery and
/// gallery→query Recall@{1,5,10}, each averaged over all languages.
pub fn validation_score(model: &ProjectionModel, val: &RetrievalCorpus) -> Result<f64> {
    let report = evaluate_corpus(
        Some(model),
        val,
        &[Direction::QueryToGallery, Direction::GalleryToQuery],
        &DEFAULT_KS,
        None,
    )?;
    let vals: Vec<f64> = report.averages.iter().map(|a| a.recall).collect();
    debug_assert_eq!(vals.len(), 6);
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}
