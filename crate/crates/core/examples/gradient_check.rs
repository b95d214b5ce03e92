//! Analytic gradients of the combined loss against central differences for
//! every layer/skip variant.
//!
//!     cargo run --example gradient_check

use embalign::linalg::Matrix;
use embalign::model::{ProjectionConfig, ProjectionModel, ALLOWED_LAYERS};
use embalign::objectives::{combined_loss, LossConfig, LossKind};
use embalign::Rng;

fn loss(m: &ProjectionModel, x: &Matrix, e: &Matrix, cfg: &LossConfig) -> f64 {
    combined_loss(&m.project(x).unwrap(), e, cfg).unwrap().loss
}

fn main() -> embalign::Result<()> {
    let h = 1e-5;
    let mut rng = Rng::new(0);
    let x = Matrix::random_normal(8, 16, &mut rng);
    let e = Matrix::random_normal(8, 16, &mut rng);
    for kind in [LossKind::Combined, LossKind::Mse, LossKind::L1, LossKind::Similarity] {
        let cfg = LossConfig {
            kind,
            ..LossConfig::default()
        };
        for &layers in &ALLOWED_LAYERS {
            for skip in [false, true] {
                let model = ProjectionModel::init(ProjectionConfig::new(16, 16, layers, skip, 1))?;
                let (u, cache) = model.forward(&x)?;
                let out = combined_loss(&u, &e, &cfg)?;
                let (grads, _) = model.backward(&cache, &out.grad)?;
                let mut worst: f64 = 0.0;
                for (t, (_, g)) in grads.tensors().iter().enumerate() {
                    for k in 0..g.len() {
                        let mut plus = model.clone();
                        plus.tensors_mut()[t].1[k] += h;
                        let mut minus = model.clone();
                        minus.tensors_mut()[t].1[k] -= h;
                        let num = (loss(&plus, &x, &e, &cfg) - loss(&minus, &x, &e, &cfg)) / (2.0 * h);
                        worst = worst.max((g[k] - num).abs() / g[k].abs().max(num.abs()).max(1e-3));
                    }
                }
                println!("{kind:?} layers={layers} skip={skip:<5} loss {:.4} max rel err {worst:.2e}", out.loss);
            }
        }
    }
    Ok(())
}
