//! Train a projection on the synthetic benchmark and evaluate it on the
//! held-out corpus.
//!
//!     cargo run --release --example synthetic_alignment -- [epochs] [n]

use embalign::data::{synth_generate, RetrievalCorpus, SynthConfig};
use embalign::model::ProjectionConfig;
use embalign::retrieval::{evaluate_corpus, Direction, DEFAULT_KS};
use embalign::trainer::{train, TrainConfig};

fn main() -> embalign::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(20, |a| a.parse().expect("epochs"));
    let n: usize = args.next().map_or(5000, |a| a.parse().expect("n"));

    let data = synth_generate(&SynthConfig::new(1, n, 64, 64, 64, 0.01))?;
    // pick the checkpoint on training pairs, report on the held-out corpus
    let val_pairs = data.pairs.select(&(0..n.min(1000)).collect::<Vec<_>>());
    let val = RetrievalCorpus::from_pairs("train-val", &val_pairs, "en")?;
    let cfg = TrainConfig {
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = std::env::temp_dir().join("embalign-synthetic-run");
    let t0 = std::time::Instant::now();
    let (model, log) = train(&data.pairs, Some(&val), ProjectionConfig::new(64, 64, 2, false, 1), &cfg, &out)?;
    println!("trained {} steps in {:.1?}", log.steps.len(), t0.elapsed());
    for e in &log.epochs {
        println!(
            "epoch {:>3}  loss {:.5}  val {:.2}{}",
            e.epoch,
            e.mean_loss,
            e.val_score.unwrap_or(f64::NAN),
            if e.is_best { "  *" } else { "" }
        );
    }

    let report = evaluate_corpus(Some(&model), &data.corpus, &[Direction::QueryToGallery], &DEFAULT_KS, None)?;
    for k in DEFAULT_KS {
        println!("held-out T2I R@{k}: {:.2}", report.get("en", Direction::QueryToGallery, k).unwrap());
    }
    println!("run directory: {}", out.display());
    Ok(())
}
