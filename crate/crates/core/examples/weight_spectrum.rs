//! Spectral summary of a few hand-made maps and of a freshly initialized
//! projection.
//!
//!     cargo run --example weight_spectrum

use embalign::analysis::{analyze_model, spectrum_report, DEFAULT_TAU};
use embalign::linalg::Matrix;
use embalign::model::{ProjectionConfig, ProjectionModel};
use embalign::Rng;

fn main() -> embalign::Result<()> {
    let mut rng = Rng::new(1);
    let d = 64;
    let low = Matrix::random_normal(d, 8, &mut rng).matmul(&Matrix::random_normal(8, d, &mut rng))?;
    let maps = [
        ("orthogonal", Matrix::random_orthogonal(d, &mut rng)),
        ("gaussian", Matrix::random_normal(d, d, &mut rng).scale(1.0 / (d as f64).sqrt())),
        ("rank 8", low),
        ("scaled identity", Matrix::identity(d).scale(3.0)),
    ];
    println!("{:<16} {:>9} {:>9} {:>11} {:>9}", "map", "rank@tau", "rank(H)", "orth dev", "sigma_1");
    for (name, w) in &maps {
        let r = spectrum_report(w, &vec![0.0; d], DEFAULT_TAU)?;
        println!(
            "{name:<16} {:>9} {:>9.2} {:>11.3e} {:>9.3}",
            r.eff_rank_threshold, r.eff_rank_entropy, r.orth_deviation, r.singular_values[0]
        );
    }

    let model = ProjectionModel::init(ProjectionConfig::new(d, d, 2, false, 0))?;
    let r = analyze_model(&model, DEFAULT_TAU)?;
    println!(
        "\n2-layer init: rank@tau {} rank(H) {:.2} orth dev {:.3} bias {:.3}",
        r.eff_rank_threshold, r.eff_rank_entropy, r.orth_deviation, r.bias_norm
    );
    Ok(())
}
