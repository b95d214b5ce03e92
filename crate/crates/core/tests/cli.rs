use std::path::Path;
use std::process::{Command, Output};

use embalign::data::{read_emb1, write_emb1, EmbeddingSet};
use embalign::linalg::Matrix;
use embalign::model::{load_checkpoint, save_checkpoint, ProjectionModel};
use embalign::retrieval::{Direction, RecallReport};
use embalign::trainer::{read_log, LogEvent};
use embalign::Rng;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embalign"))
        .args(args)
        .env_remove("M2M_THREADS")
        .output()
        .expect("spawn embalign")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, n: &str) {
    let out = bin(&["synth", "--n", n, "--n-eval", "200", "--dm", "16", "--de", "16", "--seed", "4", "--out", p(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_lists_every_subcommand_and_defaults() {
    let out = bin(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["train", "eval", "analyze", "vizprep", "tsne", "synth"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    let train = String::from_utf8_lossy(&bin(&["train", "--help"]).stdout).to_string();
    for default in ["[default: 50]", "[default: 64]", "[default: 0.0003]", "[default: 48]"] {
        assert!(train.contains(default), "train help lacks {default}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["eval"]).status.code(), Some(2));
    assert_eq!(bin(&["eval", "--corpus", "/nonexistent/corpus.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "200");
    let pairs = dir.path().join("train.pairs.json");
    let bad_layers = bin(&["train", "--pairs", p(&pairs), "--out", p(&dir.path().join("r")), "--layers", "3"]);
    assert_eq!(bad_layers.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_layers.stderr).contains("1, 2, 4"));
    let bad_dir = bin(&["eval", "--corpus", p(&dir.path().join("corpus/corpus.json")), "--directions", "sideways"]);
    assert_eq!(bad_dir.status.code(), Some(2));
}

#[test]
fn synth_train_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1500");
    let corpus = dir.path().join("corpus/corpus.json");

    // the generating map retrieves almost perfectly
    let truth_report = dir.path().join("truth.json.report");
    let out = bin(&["eval", "--corpus", p(&corpus), "--model", p(&dir.path().join("truth_model")), "--out", p(&truth_report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: RecallReport = serde_json::from_slice(&std::fs::read(&truth_report).unwrap()).unwrap();
    assert!(report.get("en", Direction::QueryToGallery, 1).unwrap() >= 99.0);
    assert_eq!(report.gallery_size, 200);

    let run = dir.path().join("run");
    let out = bin(&[
        "train",
        "--pairs",
        p(&dir.path().join("train.pairs.json")),
        "--val",
        p(&corpus),
        "--out",
        p(&run),
        "--epochs",
        "4",
        "--batch",
        "32",
        "--lr",
        "3e-3",
        "--warmup",
        "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "log.jsonl", "cli.json", "best", "last"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let events = read_log(run.join("log.jsonl")).unwrap();
    let epochs = events.iter().filter(|e| matches!(e, LogEvent::Epoch(_))).count();
    assert_eq!(epochs, 4);

    let out = bin(&["eval", "--corpus", p(&corpus), "--model", p(&run.join("best")), "--directions", "t2i,i2t", "--ks", "1,10"]);
    assert!(out.status.success());
    let report: RecallReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.ks, vec![1, 10]);
    assert!(report.get("en", Direction::GalleryToQuery, 10).is_some());
    assert!(report.get("en", Direction::QueryToGallery, 10).unwrap() > 50.0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "300");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nepochs = 2\nbatch = 100\n\n[model]\nlayers = 1\n").unwrap();
    let run = dir.path().join("run");
    let out = bin(&[
        "train",
        "--config",
        p(&cfg),
        "--pairs",
        p(&dir.path().join("train.pairs.json")),
        "--out",
        p(&run),
        "--epochs",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let steps = read_log(run.join("log.jsonl"))
        .unwrap()
        .into_iter()
        .filter(|e| matches!(e, LogEvent::Step(_)))
        .count();
    // one epoch of 300 pairs in batches of 100
    assert_eq!(steps, 3);
    assert_eq!(load_checkpoint(run.join("last")).unwrap().config.n_layers, 1);

    std::fs::write(&cfg, "[train]\nepoch = 2\n").unwrap();
    let out = bin(&["train", "--config", p(&cfg), "--pairs", p(&dir.path().join("train.pairs.json")), "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generation_mode_logs_no_structure_term() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "200");
    let run = dir.path().join("run");
    let out = bin(&[
        "train",
        "--pairs",
        p(&dir.path().join("train.pairs.json")),
        "--out",
        p(&run),
        "--mode",
        "generation",
        "--epochs",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["train"]["loss"]["normalize"], false);
    assert_eq!(config["train"]["loss"]["beta"], 0.0);
    for e in read_log(run.join("log.jsonl")).unwrap() {
        if let LogEvent::Step(s) = e {
            assert_eq!(s.structure, 0.0);
        }
    }
}

fn cluster_family(path: &Path, seed: u64, clusters: usize, per: usize, d: usize) {
    let mut rng = Rng::new(seed);
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for c in 0..clusters {
        let center: Vec<f64> = (0..d).map(|_| 4.0 * rng.normal()).collect();
        for i in 0..per {
            rows.push(center.iter().map(|x| x + rng.normal()).collect::<Vec<f64>>());
            ids.push(format!("c{c}/{i}"));
        }
    }
    let m = Matrix::from_rows(&rows).unwrap();
    write_emb1(&EmbeddingSet::from_matrix(&m, ids, "en", None).unwrap(), path).unwrap();
}

#[test]
fn analyze_weights_and_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("id");
    save_checkpoint(&ProjectionModel::identity(8), &ckpt, None).unwrap();
    let fam = dir.path().join("fam.emb1");
    cluster_family(&fam, 1, 3, 6, 8);
    let family = format!("text={}", p(&fam));
    let out = bin(&["analyze", "--model", p(&ckpt), "--family", &family, "--project", "text"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["weights"]["orth_deviation"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["weights"]["eff_rank_threshold"], 8);
    let entries = v["clusters"]["entries"].as_array().unwrap();
    // three clusters for the family and again for its identity projection
    assert_eq!(entries.len(), 6);
    let med = |fam: &str, cl: &str| {
        entries
            .iter()
            .find(|e| e["family"] == fam && e["cluster"] == cl)
            .unwrap()["summary"]["median"]
            .as_f64()
            .unwrap()
    };
    assert!((med("text", "c0") - med("text_mapped", "c0")).abs() < 1e-6);
}

#[test]
fn vizprep_and_tsne_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let gallery = dir.path().join("gallery.emb1");
    cluster_family(&gallery, 2, 5, 8, 6);
    let fam = format!("en={}", p(&gallery));
    let csv = dir.path().join("viz.csv");
    let out = bin(&[
        "vizprep", "--gallery", p(&gallery), "--family", &fam, "--k", "5", "--top-n", "5", "--select", "3",
        "--per-cluster", "4", "--tsne", "--perplexity", "3", "--iters", "300", "--out", p(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "id,family,cluster,x,y");
    assert_eq!(text.lines().count(), 1 + 12);
    assert!(dir.path().join("viz.json").exists());

    let too_many = bin(&["vizprep", "--gallery", p(&gallery), "--family", &fam, "--k", "5", "--top-n", "5", "--select", "5", "--min-cluster-size", "20", "--out", p(&csv)]);
    assert_eq!(too_many.status.code(), Some(2));

    let tsv = dir.path().join("t.csv");
    let out = bin(&["tsne", "--input", p(&gallery), "--perplexity", "5", "--iters", "500", "--learning-rate", "20", "--out", p(&tsv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<String> = std::fs::read_to_string(&tsv).unwrap().lines().map(String::from).collect();
    assert_eq!(lines[0], "id,x,y");
    assert_eq!(lines.len(), 41);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("t.json")).unwrap()).unwrap();
    assert!(meta["final_kl"].as_f64().unwrap() < meta["initial_kl"].as_f64().unwrap());

    // infeasible perplexity is a usage error
    let out = bin(&["tsne", "--input", p(&gallery), "--perplexity", "30", "--out", p(&tsv)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_files_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "100");
    let zm = read_emb1(dir.path().join("train.zm.emb1")).unwrap();
    let ze = read_emb1(dir.path().join("train.ze.emb1")).unwrap();
    assert_eq!((zm.len(), zm.dim(), ze.dim()), (100, 16, 16));
    assert_eq!(zm.ids, ze.ids);
    let truth = load_checkpoint(dir.path().join("truth_model")).unwrap();
    let w = embalign::data::read_emb1_f64(dir.path().join("truth.map.emb1")).unwrap();
    assert_eq!(truth.layers[0].weight, w);
}
