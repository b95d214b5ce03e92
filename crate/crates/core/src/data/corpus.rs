use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::emb1::{read_emb1, write_emb1, EmbeddingSet};
use crate::error::{Error, Result};

/// Query id to the gallery ids that count as a hit.
pub type Relevance = BTreeMap<String, Vec<String>>;

/// A gallery (images, audio, ...) plus per-language query sets.
#[derive(Debug, Clone)]
pub struct RetrievalCorpus {
    pub name: String,
    pub gallery: EmbeddingSet,
    pub query_sets: BTreeMap<String, EmbeddingSet>,
    pub relevance: Relevance,
}

impl RetrievalCorpus {
    pub fn new(
        name: impl Into<String>,
        gallery: EmbeddingSet,
        query_sets: BTreeMap<String, EmbeddingSet>,
        relevance: Relevance,
    ) -> Result<Self> {
        let c = Self {
            name: name.into(),
            gallery,
            query_sets,
            relevance,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let gallery_ids: HashSet<&str> = self.gallery.ids.iter().map(String::as_str).collect();
        for (qid, rel) in &self.relevance {
            if rel.is_empty() {
                return Err(Error::invalid(format!("query {qid:?} has no relevant gallery ids")));
            }
            if let Some(missing) = rel.iter().find(|g| !gallery_ids.contains(g.as_str())) {
                return Err(Error::invalid(format!(
                    "query {qid:?} references unknown gallery id {missing:?}"
                )));
            }
        }
        for (lang, set) in &self.query_sets {
            if set.is_empty() {
                return Err(Error::invalid(format!("query set {lang} is empty")));
            }
            if let Some(q) = set.ids.iter().find(|q| !self.relevance.contains_key(*q)) {
                return Err(Error::invalid(format!(
                    "query {q:?} in language {lang} has no relevance entry"
                )));
            }
        }
        Ok(())
    }

    pub fn languages(&self) -> Vec<String> {
        self.query_sets.keys().cloned().collect()
    }

    /// 1:1 corpus from paired data: targets form the gallery and inputs the
    /// single query set `lang`, both keyed by pair id.
    pub fn from_pairs(name: impl Into<String>, pairs: &super::PairedDataset, lang: &str) -> Result<Self> {
        let relevance: Relevance = pairs.zm.ids.iter().map(|id| (id.clone(), vec![id.clone()])).collect();
        let mut queries = pairs.zm.clone();
        queries.lang = lang.to_string();
        Self::new(name, pairs.ze.clone(), BTreeMap::from([(lang.to_string(), queries)]), relevance)
    }

    /// Writes EMB1 files, `relevance.jsonl` and `corpus.json` into `dir`.
    /// Returns the manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_emb1(&self.gallery, dir.join("gallery.emb1"))?;
        let mut queries = Vec::new();
        for (lang, set) in &self.query_sets {
            let file = format!("queries.{lang}.emb1");
            write_emb1(set, dir.join(&file))?;
            queries.push(QueryEntry {
                lang: lang.clone(),
                file: file.into(),
            });
        }
        write_relevance(&self.relevance, dir.join("relevance.jsonl"))?;
        let manifest = CorpusManifest {
            name: Some(self.name.clone()),
            gallery: "gallery.emb1".into(),
            queries,
            relevance: "relevance.jsonl".into(),
        };
        let path = dir.join("corpus.json");
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryEntry {
    pub lang: String,
    pub file: PathBuf,
}

/// `{"gallery": path, "queries": [{"lang", "file"}], "relevance": path}`;
/// relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub gallery: PathBuf,
    pub queries: Vec<QueryEntry>,
    pub relevance: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct RelevanceLine {
    query_id: String,
    gallery_ids: Vec<String>,
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_relevance(path: impl AsRef<Path>) -> Result<Relevance> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Relevance::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RelevanceLine = serde_json::from_str(&line).map_err(|e| Error::json(path, e))?;
        out.entry(rec.query_id).or_default().extend(rec.gallery_ids);
    }
    Ok(out)
}

pub fn write_relevance(rel: &Relevance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for (q, g) in rel {
        let line = RelevanceLine {
            query_id: q.clone(),
            gallery_ids: g.clone(),
        };
        serde_json::to_writer(&mut buf, &line).map_err(|e| Error::json(path, e))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<RetrievalCorpus> {
    let manifest_path = manifest_path.as_ref();
    let m: CorpusManifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let gallery = read_emb1(resolve(base, &m.gallery))?;
    let mut query_sets = BTreeMap::new();
    for q in &m.queries {
        // query dims may differ from the gallery until projected
        let set = read_emb1(resolve(base, &q.file))?;
        if query_sets.insert(q.lang.clone(), set).is_some() {
            return Err(Error::invalid(format!("language {} listed twice", q.lang)));
        }
    }
    let relevance = read_relevance(resolve(base, &m.relevance))?;
    let name = m.name.unwrap_or_else(|| {
        manifest_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    RetrievalCorpus::new(name, gallery, query_sets, relevance)
}
