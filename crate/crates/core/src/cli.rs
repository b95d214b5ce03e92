//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 1 when the
//! work itself fails, 2 for usage or configuration errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    analyze_model, clusters_by_id_prefix, cosine_cluster_stats, tsne, vizprep, ClusterDistanceReport, TsneConfig,
    VizPrepConfig, WeightReport,
};
use crate::data::{
    load_corpus, load_pairs, read_emb1, sample_split, save_pairs, synth_generate, write_emb1_f64, write_json,
    EmbeddingSet, SynthConfig,
};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, ProjectionConfig, ProjectionModel, TOOLKIT_VERSION};
use crate::objectives::{LossConfig, LossKind};
use crate::optim::AdamWConfig;
use crate::retrieval::{evaluate_corpus, Direction};
use crate::trainer::{train, TrainConfig, TrainMode};

pub const THREADS_ENV: &str = "M2M_THREADS";

#[derive(Debug, Parser)]
#[command(name = "embalign", version, about = "Align multilingual text embeddings to a multimodal embedding space")]
pub struct Cli {
    /// Worker threads for ranking and t-SNE (falls back to M2M_THREADS)
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a projection on paired embeddings
    Train(TrainArgs),
    /// Recall@K evaluation on a retrieval corpus
    Eval(EvalArgs),
    /// Weight spectrum of a checkpoint and/or paraphrase-cluster distances
    Analyze(AnalyzeArgs),
    /// Select clustered points for visualization, optionally with t-SNE
    Vizprep(VizprepArgs),
    /// Exact t-SNE of an embedding file
    Tsne(TsneArgs),
    /// Generate a synthetic benchmark with a known ground-truth map
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pair manifest(s); several are concatenated and deduplicated
    #[arg(long, num_args = 1..)]
    pub pairs: Vec<PathBuf>,
    /// Validation corpus manifest
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Run directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random training split of this many pairs [default: all]
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Linear layers: 1, 2 or 4 [default: 2]
    #[arg(long)]
    pub layers: Option<usize>,
    /// Residual shortcut around square layers [default: false]
    #[arg(long)]
    pub skip: Option<bool>,
    /// mse, l1, similarity or combined [default: combined]
    #[arg(long)]
    pub loss: Option<String>,
    /// Alignment weight [default: 48]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Structure weight [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// retrieval or generation [default: retrieval]
    #[arg(long)]
    pub mode: Option<String>,
    /// [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size [default: 64]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Peak learning rate [default: 0.0003]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Warmup steps [default: 50]
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Decoupled weight decay [default: 0.01]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Seed for init, shuffling and splits [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus manifest
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint directory; queries are projected through it
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ks: Vec<usize>,
    /// q2g (t2i, t2a), g2q (i2t, a2t), t2t
    #[arg(long, value_delimiter = ',', default_value = "q2g,g2q")]
    pub directions: Vec<String>,
    /// Language subset for an extra average
    #[arg(long, value_delimiter = ',')]
    pub langs: Option<Vec<String>>,
    /// Report path [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Checkpoint directory for the weight report
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Relative singular-value threshold for the effective rank
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// NAME=PATH of an EMB1 file with ids "cluster/index" (repeatable)
    #[arg(long = "family")]
    pub families: Vec<String>,
    /// Also report family NAME projected through --model as NAME_mapped
    #[arg(long)]
    pub project: Vec<String>,
    /// Report path [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VizprepArgs {
    /// Gallery EMB1 file clustered with KMeans
    #[arg(long)]
    pub gallery: PathBuf,
    /// NAME=PATH of a text EMB1 file keyed by gallery ids (repeatable)
    #[arg(long = "family")]
    pub families: Vec<String>,
    /// Checkpoint used for --project
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Replace family NAME by its projection through --model
    #[arg(long)]
    pub project: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub top_n: usize,
    #[arg(long, default_value_t = 17)]
    pub select: usize,
    #[arg(long, default_value_t = 10)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 3)]
    pub min_cluster_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compute t-SNE coordinates for the selected points
    #[arg(long)]
    pub tsne: bool,
    #[arg(long, default_value_t = 32.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// CSV path; metadata goes next to it as .json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    /// EMB1 input
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 32.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    /// CSV path (id,x,y); metadata goes next to it as .json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Held-out corpus size
    #[arg(long, default_value_t = 1000)]
    pub n_eval: usize,
    #[arg(long, default_value_t = 64)]
    pub dm: usize,
    #[arg(long, default_value_t = 64)]
    pub de: usize,
    /// Rank of the ground-truth map [default: min(dm, de)]
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub bias_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

/// Optional settings read from `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub pairs: Option<Vec<PathBuf>>,
    pub val: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub train_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub layers: Option<usize>,
    pub skip: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub kind: Option<String>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub mode: Option<String>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub warmup: Option<usize>,
    pub weight_decay: Option<f64>,
    pub seed: Option<u64>,
}

/// Fully resolved training invocation, saved as `cli.json` in the run
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CliConfig {
    pub toolkit_version: String,
    pub pairs: Vec<PathBuf>,
    pub val: Option<PathBuf>,
    pub out: PathBuf,
    pub train_size: Option<usize>,
    pub layers: usize,
    pub skip: bool,
    pub train: TrainConfig,
}

pub fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<CliConfig> {
        let file = match &self.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let pairs = if self.pairs.is_empty() {
            file.data.pairs.clone().unwrap_or_default()
        } else {
            self.pairs.clone()
        };
        if pairs.is_empty() {
            return Err(Error::Usage("no pair manifests given (--pairs)".into()));
        }
        let out = self
            .out
            .clone()
            .or(file.data.out.clone())
            .ok_or_else(|| Error::Usage("no run directory given (--out)".into()))?;

        let d = TrainConfig::default();
        let kind: LossKind = match self.loss.as_deref().or(file.loss.kind.as_deref()) {
            Some(s) => s.parse()?,
            None => d.loss.kind,
        };
        let mode: TrainMode = match self.mode.as_deref().or(file.train.mode.as_deref()) {
            Some(s) => s.parse()?,
            None => d.mode,
        };
        let mut train = TrainConfig {
            epochs: self.epochs.or(file.train.epochs).unwrap_or(d.epochs),
            batch_size: self.batch.or(file.train.batch).unwrap_or(d.batch_size),
            seed: self.seed.or(file.train.seed).unwrap_or(d.seed),
            loss: LossConfig {
                kind,
                lambda: self.lambda.or(file.loss.lambda).unwrap_or(d.loss.lambda),
                beta: self.beta.or(file.loss.beta).unwrap_or(d.loss.beta),
                normalize: true,
            },
            schedule: d.schedule,
            optimizer: AdamWConfig {
                weight_decay: self
                    .weight_decay
                    .or(file.train.weight_decay)
                    .unwrap_or(d.optimizer.weight_decay),
                ..d.optimizer
            },
            mode,
        };
        train.schedule.base_lr = self.lr.or(file.train.lr).unwrap_or(d.schedule.base_lr);
        train.schedule.warmup_steps = self.warmup.or(file.train.warmup).unwrap_or(d.schedule.warmup_steps);
        if mode == TrainMode::Generation {
            train.loss.normalize = false;
            train.loss.beta = 0.0;
        }
        train.validate()?;
        let layers = self.layers.or(file.model.layers).unwrap_or(2);
        ProjectionConfig::new(1, 1, layers, false, 0).validate()?;
        Ok(CliConfig {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            pairs,
            val: self.val.clone().or(file.data.val.clone()),
            out,
            train_size: self.train_size.or(file.data.train_size),
            layers,
            skip: self.skip.or(file.model.skip).unwrap_or(false),
            train,
        })
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Usage("--threads must be >= 1".into()));
    }
    // Fails only when a pool already exists in this process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Vizprep(a) => cmd_vizprep(a),
        Command::Tsne(a) => cmd_tsne(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_json(p, value)
        }
        None => {
            let s = serde_json::to_string_pretty(value).map_err(|e| Error::json("<stdout>", e))?;
            println!("{s}");
            Ok(())
        }
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let mut pairs = load_pairs(&cfg.pairs)?;
    if let Some(n) = cfg.train_size {
        pairs = sample_split(&pairs.canonical_order(), n, cfg.train.seed)?;
    }
    let val = cfg.val.as_ref().map(load_corpus).transpose()?;
    let model_cfg = ProjectionConfig::new(pairs.d_in(), pairs.d_out(), cfg.layers, cfg.skip, cfg.train.seed);
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_json(&cfg.out.join("cli.json"), &cfg)?;
    println!(
        "training on {} pairs ({} -> {}), {} layer(s), {} epochs",
        pairs.len(),
        pairs.d_in(),
        pairs.d_out(),
        cfg.layers,
        cfg.train.epochs
    );
    let (_, log) = train(&pairs, val.as_ref(), model_cfg, &cfg.train, &cfg.out)?;
    for e in &log.epochs {
        match e.val_score {
            Some(s) => println!(
                "epoch {:>3}  loss {:.6}  val {:.3}{}",
                e.epoch + 1,
                e.mean_loss,
                s,
                if e.is_best { "  (best)" } else { "" }
            ),
            None => println!("epoch {:>3}  loss {:.6}", e.epoch + 1, e.mean_loss),
        }
    }
    println!("best epoch {}; checkpoints in {}", log.best_epoch + 1, cfg.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let model = a.model.as_ref().map(load_checkpoint).transpose()?;
    let directions = a
        .directions
        .iter()
        .map(|d| d.parse())
        .collect::<Result<Vec<Direction>>>()?;
    let mut report = evaluate_corpus(model.as_ref(), &corpus, &directions, &a.ks, a.langs.as_deref())?;
    report.model = a.model.as_ref().map(|p| p.display().to_string());
    emit_json(&report, a.out.as_deref())
}

fn parse_family(spec: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(Error::Usage(format!("--family expects NAME=PATH, got {spec:?}"))),
    }
}

fn load_families(specs: &[String]) -> Result<BTreeMap<String, EmbeddingSet>> {
    let mut out = BTreeMap::new();
    for s in specs {
        let (name, path) = parse_family(s)?;
        if out.insert(name.clone(), read_emb1(&path)?).is_some() {
            return Err(Error::Usage(format!("family {name:?} given twice")));
        }
    }
    Ok(out)
}

fn project_set(model: &ProjectionModel, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let y = model.project(&set.to_matrix())?;
    EmbeddingSet::from_matrix(&y, set.ids.clone(), set.lang.clone(), set.texts.clone())
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    toolkit_version: String,
    model: Option<String>,
    weights: Option<WeightReport>,
    clusters: Option<ClusterDistanceReport>,
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    if a.model.is_none() && a.families.is_empty() {
        return Err(Error::Usage("nothing to analyze: give --model and/or --family".into()));
    }
    let model = a.model.as_ref().map(load_checkpoint).transpose()?;
    let weights = model.as_ref().map(|m| analyze_model(m, a.tau)).transpose()?;
    let mut families = load_families(&a.families)?;
    for name in &a.project {
        let m = model
            .as_ref()
            .ok_or_else(|| Error::Usage("--project needs --model".into()))?;
        let set = families
            .get(name)
            .ok_or_else(|| Error::Usage(format!("--project names unknown family {name:?}")))?;
        let mapped = project_set(m, set)?;
        families.insert(format!("{name}_mapped"), mapped);
    }
    let clusters = if families.is_empty() {
        None
    } else {
        let grouped = families
            .iter()
            .map(|(name, set)| Ok((name.clone(), clusters_by_id_prefix(set)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Some(cosine_cluster_stats(&grouped)?)
    };
    let report = AnalyzeReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        model: a.model.as_ref().map(|p| p.display().to_string()),
        weights,
        clusters,
    };
    emit_json(&report, a.out.as_deref())
}

fn cmd_vizprep(a: &VizprepArgs) -> Result<()> {
    let gallery = read_emb1(&a.gallery)?;
    let mut families = load_families(&a.families)?;
    if families.is_empty() {
        return Err(Error::Usage("vizprep needs at least one --family".into()));
    }
    if !a.project.is_empty() {
        let model = load_checkpoint(
            a.model
                .as_ref()
                .ok_or_else(|| Error::Usage("--project needs --model".into()))?,
        )?;
        for name in &a.project {
            let set = families
                .remove(name)
                .ok_or_else(|| Error::Usage(format!("--project names unknown family {name:?}")))?;
            families.insert(format!("{name}_mapped"), project_set(&model, &set)?);
        }
    }
    let cfg = VizPrepConfig {
        k: a.k,
        top_n: a.top_n,
        select: a.select,
        per_cluster: a.per_cluster,
        min_cluster_size: a.min_cluster_size,
        seed: a.seed,
        ..VizPrepConfig::default()
    };
    let mut out = vizprep(&gallery, &families, &cfg)?;
    if a.tsne {
        out.embed(&TsneConfig {
            perplexity: a.perplexity,
            iters: a.iters,
            seed: a.seed,
            ..TsneConfig::default()
        })?;
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    out.write_csv(&a.out)?;
    write_json(&a.out.with_extension("json"), &out.metadata())?;
    println!(
        "selected clusters {:?}; {} points written to {}",
        out.selected_clusters,
        out.points.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_tsne(a: &TsneArgs) -> Result<()> {
    let set = read_emb1(&a.input)?;
    let cfg = TsneConfig {
        perplexity: a.perplexity,
        iters: a.iters,
        seed: a.seed,
        learning_rate: a.learning_rate,
        ..TsneConfig::default()
    };
    let out = tsne(&set.to_matrix(), &cfg)?;
    let mut csv = String::from("id,x,y\n");
    for (i, id) in set.ids.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", id, out.coords[(i, 0)], out.coords[(i, 1)]));
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&a.out, csv).map_err(|e| Error::io(&a.out, e))?;
    let meta = out.metadata();
    write_json(&a.out.with_extension("json"), &meta)?;
    println!("KL {:.4} -> {:.4}; wrote {}", meta.initial_kl, meta.final_kl, a.out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    toolkit_version: String,
    config: SynthConfig,
    bias: Vec<f64>,
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(a.seed, a.n, a.dm, a.de, a.rank.unwrap_or(a.dm.min(a.de)), a.noise);
    cfg.n_eval = a.n_eval;
    cfg.bias_norm = a.bias_norm;
    let out = synth_generate(&cfg).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Usage(m),
        other => other,
    })?;
    let pairs_path = save_pairs(&out.pairs, &a.out, "train")?;
    let corpus_path = out.corpus.save(a.out.join("corpus"))?;
    write_emb1_f64(&out.truth.map, "param", a.out.join("truth.map.emb1"))?;
    write_json(
        &a.out.join("truth.json"),
        &TruthFile {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            config: cfg.clone(),
            bias: out.truth.bias.clone(),
        },
    )?;
    let truth_model = ProjectionModel::from_affine(out.truth.map.clone(), out.truth.bias.clone())?;
    save_checkpoint(&truth_model, a.out.join("truth_model"), None)?;
    println!("pairs: {}", pairs_path.display());
    println!("corpus: {}", corpus_path.display());
    println!("truth checkpoint: {}", a.out.join("truth_model").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("embalign").chain(args.iter().copied())).unwrap()
    }

    fn train_args(args: &[&str]) -> TrainArgs {
        match parse(args).command {
            Command::Train(t) => t,
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_resolve() {
        let c = train_args(&["train", "--pairs", "p.json", "--out", "run"]).resolve().unwrap();
        assert_eq!(c.layers, 2);
        assert_eq!(c.train.epochs, 50);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.train.loss, LossConfig::default());
        assert_eq!(c.train.schedule.base_lr, 3e-4);
        assert_eq!(c.train.schedule.warmup_steps, 50);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "[data]\npairs = [\"a.json\"]\nout = \"r\"\n[train]\nepochs = 7\nbatch = 32\n[loss]\nlambda = 10.0\n",
        )
        .unwrap();
        let c = train_args(&["train", "--config", path.to_str().unwrap(), "--epochs", "3"])
            .resolve()
            .unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.loss.lambda, 10.0);
        assert_eq!(c.train.loss.beta, 1.0);
        assert_eq!(c.pairs, vec![PathBuf::from("a.json")]);
    }

    #[test]
    fn bad_layers_is_usage() {
        let e = train_args(&["train", "--pairs", "p", "--out", "o", "--layers", "3"])
            .resolve()
            .unwrap_err();
        assert!(e.is_usage());
    }

    #[test]
    fn unknown_config_key_is_usage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "[train]\nepoch = 3\n").unwrap();
        let e = train_args(&["train", "--config", path.to_str().unwrap()]).resolve().unwrap_err();
        assert!(e.is_usage());
    }

    #[test]
    fn generation_mode_forces_loss() {
        let c = train_args(&["train", "--pairs", "p", "--out", "o", "--mode", "generation"])
            .resolve()
            .unwrap();
        assert!(!c.train.loss.normalize);
        assert_eq!(c.train.loss.beta, 0.0);
    }

    #[test]
    fn family_spec() {
        assert_eq!(parse_family("en=a/b.emb1").unwrap().0, "en");
        assert!(parse_family("nopath").unwrap_err().is_usage());
    }
}
