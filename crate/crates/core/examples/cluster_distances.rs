//! Within-cluster cosine distances for the bundled sentence clusters, using
//! stand-in embeddings: each sentence gets its cluster's direction plus
//! noise, tighter in one family than the other.
//!
//!     cargo run --example cluster_distances

use std::collections::BTreeMap;

use embalign::analysis::{cosine_cluster_stats, read_sentence_clusters};
use embalign::linalg::Matrix;
use embalign::Rng;

fn main() -> embalign::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/sentence_clusters.txt");
    let clusters = read_sentence_clusters(path)?;
    let mut rng = Rng::new(3);
    let d = 32;
    let mut families: BTreeMap<String, Vec<(String, Matrix)>> = BTreeMap::new();
    for (name, sentences) in &clusters {
        let center: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for (family, spread) in [("tight", 0.1), ("loose", 0.3)] {
            let rows: Vec<Vec<f64>> = sentences
                .iter()
                .map(|_| center.iter().map(|c| c + spread * rng.normal()).collect())
                .collect();
            families
                .entry(family.to_string())
                .or_default()
                .push((name.clone(), Matrix::from_rows(&rows)?));
        }
    }
    let report = cosine_cluster_stats(&families)?;
    println!("{:<10} {:<6} {:>7} {:>7} {:>7}", "cluster", "family", "min", "median", "max");
    for e in &report.entries {
        println!(
            "{:<10} {:<6} {:>7.4} {:>7.4} {:>7.4}",
            e.cluster, e.family, e.summary.min, e.summary.median, e.summary.max
        );
    }
    Ok(())
}
