//! Point selection for 2-D visualization: cluster the gallery, keep a
//! spread-out subset of large clusters, sample a few instances from each
//! and gather their text embeddings from every family.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tsne::{tsne, TsneConfig, TsneOutput};
use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{farthest_cluster_selection, kmeans, Matrix};
use crate::model::TOOLKIT_VERSION;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VizPrepConfig {
    pub k: usize,
    pub top_n: usize,
    pub select: usize,
    pub per_cluster: usize,
    pub min_cluster_size: usize,
    pub seed: u64,
    pub kmeans_iters: usize,
}

impl Default for VizPrepConfig {
    fn default() -> Self {
        Self {
            k: 100,
            top_n: 50,
            select: 17,
            per_cluster: 10,
            min_cluster_size: 3,
            seed: 0,
            kmeans_iters: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizPoint {
    pub id: String,
    pub family: String,
    pub cluster: usize,
}

#[derive(Debug, Clone)]
pub struct VizPrepOutput {
    pub config: VizPrepConfig,
    /// KMeans cluster ids in selection order.
    pub selected_clusters: Vec<usize>,
    /// Sampled gallery rows per selected cluster.
    pub sampled: Vec<(usize, Vec<usize>)>,
    pub points: Vec<VizPoint>,
    /// One row per entry of `points`.
    pub features: Matrix,
    pub coords: Option<Matrix>,
    pub tsne: Option<TsneOutput>,
}

pub fn vizprep(
    gallery: &EmbeddingSet,
    text_families: &BTreeMap<String, EmbeddingSet>,
    cfg: &VizPrepConfig,
) -> Result<VizPrepOutput> {
    if cfg.k == 0 || cfg.k > gallery.len() {
        return Err(Error::Usage(format!("k={} must be in 1..={} (gallery size)", cfg.k, gallery.len())));
    }
    if cfg.select == 0 || cfg.select > cfg.top_n {
        return Err(Error::Usage(format!("select={} must be in 1..={} (top_n)", cfg.select, cfg.top_n)));
    }
    if cfg.per_cluster == 0 {
        return Err(Error::Usage("per_cluster must be >= 1".into()));
    }
    let dims: Vec<usize> = text_families.values().map(|s| s.dim()).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::invalid(format!("text families have different dimensions {dims:?}")));
    }

    let g = gallery.to_matrix();
    let km = kmeans(&g, cfg.k, cfg.seed, cfg.kmeans_iters)?;
    let mut by_size: Vec<usize> = (0..cfg.k).collect();
    by_size.sort_by(|&a, &b| km.sizes[b].cmp(&km.sizes[a]).then(a.cmp(&b)));
    let candidates: Vec<usize> = by_size
        .into_iter()
        .take(cfg.top_n)
        .filter(|&c| km.sizes[c] >= cfg.min_cluster_size)
        .collect();
    if candidates.len() < cfg.select {
        return Err(Error::Usage(format!(
            "only {} eligible clusters (size >= {} among the {} largest), cannot select {}",
            candidates.len(),
            cfg.min_cluster_size,
            cfg.top_n,
            cfg.select
        )));
    }
    let selected = farthest_cluster_selection(&km.centroids, &km.sizes, &candidates, cfg.select)?;

    let mut rng = Rng::derive(cfg.seed, 1);
    let mut sampled = Vec::with_capacity(selected.len());
    for &c in &selected {
        let members: Vec<usize> = (0..g.rows()).filter(|&i| km.assignments[i] == c).collect();
        let take = cfg.per_cluster.min(members.len());
        let mut rows: Vec<usize> = rng.sample_indices(members.len(), take).into_iter().map(|k| members[k]).collect();
        rows.sort_unstable();
        sampled.push((c, rows));
    }

    let mut points = Vec::new();
    let mut feats: Vec<Vec<f64>> = Vec::new();
    for (family, set) in text_families {
        let index = set.id_index();
        for (c, rows) in &sampled {
            for &r in rows {
                let id = &gallery.ids[r];
                let row = *index
                    .get(id.as_str())
                    .ok_or_else(|| Error::invalid(format!("family {family:?} has no embedding for id {id:?}")))?;
                points.push(VizPoint {
                    id: id.clone(),
                    family: family.clone(),
                    cluster: *c,
                });
                feats.push(set.row(row).iter().map(|&x| x as f64).collect());
            }
        }
    }
    let features = if feats.is_empty() {
        Matrix::zeros(0, dims.first().copied().unwrap_or(0))
    } else {
        Matrix::from_rows(&feats)?
    };
    Ok(VizPrepOutput {
        config: *cfg,
        selected_clusters: selected,
        sampled,
        points,
        features,
        coords: None,
        tsne: None,
    })
}

impl VizPrepOutput {
    /// Runs t-SNE jointly over all gathered points.
    pub fn embed(&mut self, cfg: &TsneConfig) -> Result<()> {
        let out = tsne(&self.features, cfg)?;
        self.coords = Some(out.coords.clone());
        self.tsne = Some(out);
        Ok(())
    }

    /// `id,family,cluster,x,y`; coordinates are empty before [`embed`](Self::embed).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,family,cluster,x,y\n");
        for (i, p) in self.points.iter().enumerate() {
            let (x, y) = match &self.coords {
                Some(c) => (c[(i, 0)].to_string(), c[(i, 1)].to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(s, "{},{},{},{x},{y}", csv_field(&p.id), csv_field(&p.family), p.cluster);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn metadata(&self) -> VizPrepMetadata {
        VizPrepMetadata {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            config: self.config,
            selected_clusters: self.selected_clusters.clone(),
            n_points: self.points.len(),
            tsne: self.tsne.as_ref().map(|t| t.metadata()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VizPrepMetadata {
    pub toolkit_version: String,
    pub config: VizPrepConfig,
    pub selected_clusters: Vec<usize>,
    pub n_points: usize,
    pub tsne: Option<super::tsne::TsneMetadata>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
