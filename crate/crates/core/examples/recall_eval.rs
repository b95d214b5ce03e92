//! Recall@K on a small two-language corpus with multi-caption relevance,
//! in all three directions.
//!
//!     cargo run --example recall_eval

use std::collections::BTreeMap;

use embalign::data::{EmbeddingSet, RetrievalCorpus};
use embalign::linalg::Matrix;
use embalign::retrieval::{evaluate_corpus, Direction};
use embalign::Rng;

fn noisy(base: &Matrix, sigma: f64, rng: &mut Rng) -> Matrix {
    let mut m = base.clone();
    m.as_mut_slice().iter_mut().for_each(|x| *x += sigma * rng.normal());
    m
}

fn main() -> embalign::Result<()> {
    let mut rng = Rng::new(5);
    let n_images = 40;
    let images = Matrix::random_normal(n_images, 16, &mut rng);
    let gallery = EmbeddingSet::from_matrix(&images, (0..n_images).map(|i| format!("img{i}")).collect(), "media", None)?;

    // three captions per image
    let caption_rows: Vec<usize> = (0..n_images * 3).map(|c| c / 3).collect();
    let base = images.select_rows(&caption_rows);
    let ids: Vec<String> = (0..caption_rows.len()).map(|c| format!("cap{c}")).collect();
    let relevance = ids
        .iter()
        .zip(&caption_rows)
        .map(|(c, &img)| (c.clone(), vec![format!("img{img}")]))
        .collect();
    let mut queries = BTreeMap::new();
    for (lang, sigma) in [("en", 0.4), ("sw", 1.0)] {
        let m = noisy(&base, sigma, &mut rng);
        queries.insert(lang.to_string(), EmbeddingSet::from_matrix(&m, ids.clone(), lang, None)?);
    }
    let corpus = RetrievalCorpus::new("toy", gallery, queries, relevance)?;

    let dirs = [Direction::QueryToGallery, Direction::GalleryToQuery, Direction::TextToText];
    let report = evaluate_corpus(None, &corpus, &dirs, &[1, 5, 10], Some(&["en".to_string()]))?;
    for e in &report.results {
        println!("{:>3} {:<4} R@{:<2} {:6.2}", e.lang, e.direction.as_str(), e.k, e.recall);
    }
    for a in &report.averages {
        println!("avg[{}] {:<4} R@{:<2} {:6.2}", a.set, a.direction.as_str(), a.k, a.recall);
    }
    Ok(())
}
