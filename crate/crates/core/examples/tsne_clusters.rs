//! Exact t-SNE on clustered points, printing calibration and KL figures.
//!
//!     cargo run --release --example tsne_clusters -- [out.csv]

use embalign::analysis::{tsne, TsneConfig};
use embalign::linalg::sq_dist;
use embalign::{Matrix, Rng};

fn main() -> embalign::Result<()> {
    let mut rng = Rng::new(8);
    let (clusters, per, d) = (8, 25, 16);
    let centers = Matrix::random_normal(clusters, d, &mut rng).scale(4.0);
    let mut rows = Vec::new();
    for c in 0..clusters {
        for _ in 0..per {
            rows.push(centers.row(c).iter().map(|x| x + rng.normal()).collect::<Vec<_>>());
        }
    }
    // one exact duplicate
    rows[1] = rows[0].clone();
    let x = Matrix::from_rows(&rows)?;

    let out = tsne(&x, &TsneConfig { seed: 1, ..TsneConfig::default() })?;
    let meta = out.metadata();
    println!("points: {}", meta.n);
    println!(
        "realized perplexity: {:.6} .. {:.6}",
        meta.min_realized_perplexity, meta.max_realized_perplexity
    );
    println!("KL: {:.4} -> {:.4}", meta.initial_kl, meta.final_kl);
    println!(
        "duplicate pair distance: {:.2e}",
        sq_dist(out.coords.row(0), out.coords.row(1)).sqrt()
    );

    if let Some(path) = std::env::args().nth(1) {
        let mut csv = String::from("cluster,x,y\n");
        for i in 0..out.coords.rows() {
            csv.push_str(&format!("{},{},{}\n", i / per, out.coords[(i, 0)], out.coords[(i, 1)]));
        }
        std::fs::write(&path, csv).expect("write csv");
        println!("wrote {path}");
    }
    Ok(())
}
