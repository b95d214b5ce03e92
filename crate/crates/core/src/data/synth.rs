//! Synthetic alignment benchmark with a known ground-truth affine map.
//!
//! Multilingual embeddings are unit-normalized Gaussian rows. Targets are
//! `map · z_m + bias + sigma · noise`, where `map = Q_e · diag(s) · Q_mᵀ`
//! for random orthogonal `Q_e`, `Q_m` and a spectrum with `map_rank`
//! nonzero values spaced linearly from 1.0 down to 0.5. A separate held-out
//! draw from the same truth forms a 1:1 retrieval corpus whose gallery
//! plays the role of the media embeddings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corpus::{Relevance, RetrievalCorpus};
use super::emb1::EmbeddingSet;
use super::pairs::PairedDataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    Random,
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n: usize,
    /// Size of the held-out retrieval corpus.
    pub n_eval: usize,
    pub d_m: usize,
    pub d_e: usize,
    pub map_rank: usize,
    pub noise_sigma: f64,
    /// Euclidean norm of the ground-truth bias.
    pub bias_norm: f64,
    pub truth: TruthKind,
}

impl SynthConfig {
    pub fn new(seed: u64, n: usize, d_m: usize, d_e: usize, map_rank: usize, noise_sigma: f64) -> Self {
        Self {
            seed,
            n,
            n_eval: 1000,
            d_m,
            d_e,
            map_rank,
            noise_sigma,
            bias_norm: 0.1,
            truth: TruthKind::Random,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    /// `d_e × d_m`.
    pub map: Matrix,
    pub bias: Vec<f64>,
    pub noise_sigma: f64,
}

impl SyntheticTruth {
    /// `map · x + bias` for every row of `x`.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_t(&self.map).expect("d_m columns");
        y.add_row_vector(&self.bias);
        y
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub pairs: PairedDataset,
    pub truth: SyntheticTruth,
    pub corpus: RetrievalCorpus,
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    if cfg.n < 2 {
        return Err(Error::invalid("synthetic set needs n >= 2"));
    }
    if cfg.d_m == 0 || cfg.d_e == 0 {
        return Err(Error::invalid("dimensions must be positive"));
    }
    if cfg.map_rank == 0 || cfg.map_rank > cfg.d_m.min(cfg.d_e) {
        return Err(Error::invalid(format!(
            "map_rank {} must be in 1..={}",
            cfg.map_rank,
            cfg.d_m.min(cfg.d_e)
        )));
    }
    if !(cfg.noise_sigma >= 0.0) || !cfg.noise_sigma.is_finite() {
        return Err(Error::invalid("noise_sigma must be finite and non-negative"));
    }
    let mut rng = Rng::new(cfg.seed);

    let (map, bias) = match cfg.truth {
        TruthKind::Identity => {
            if cfg.d_m != cfg.d_e {
                return Err(Error::invalid("identity truth needs d_m == d_e"));
            }
            (Matrix::identity(cfg.d_m), vec![0.0; cfg.d_e])
        }
        TruthKind::Random => {
            let qe = Matrix::random_orthogonal(cfg.d_e, &mut rng);
            let qm = Matrix::random_orthogonal(cfg.d_m, &mut rng);
            let mut core = Matrix::zeros(cfg.d_e, cfg.d_m);
            let r = cfg.map_rank;
            for i in 0..r {
                let frac = if r > 1 { i as f64 / (r - 1) as f64 } else { 0.0 };
                core[(i, i)] = 1.0 - 0.5 * frac;
            }
            let map = qe.matmul(&core)?.matmul_t(&qm)?;
            let mut bias: Vec<f64> = (0..cfg.d_e).map(|_| rng.normal()).collect();
            let norm = dot(&bias, &bias).sqrt();
            bias.iter_mut().for_each(|b| *b *= cfg.bias_norm / norm);
            (map, bias)
        }
    };
    let truth = SyntheticTruth {
        map,
        bias,
        noise_sigma: cfg.noise_sigma,
    };

    let (train_m, train_e) = draw(&truth, cfg.n, cfg.d_m, &mut rng);
    let (eval_m, eval_e) = draw(&truth, cfg.n_eval, cfg.d_m, &mut rng);

    let ids: Vec<String> = (0..cfg.n).map(|i| format!("p{i:06}")).collect();
    let texts: Vec<String> = (0..cfg.n).map(|i| format!("synthetic sentence {i}")).collect();
    let pairs = PairedDataset {
        zm: EmbeddingSet::from_matrix(&train_m, ids.clone(), "en", Some(texts.clone()))?,
        ze: EmbeddingSet::from_matrix(&train_e, ids, "en", Some(texts))?,
    };

    let qids: Vec<String> = (0..cfg.n_eval).map(|i| format!("q{i:05}")).collect();
    let gids: Vec<String> = (0..cfg.n_eval).map(|i| format!("g{i:05}")).collect();
    let relevance: Relevance = qids
        .iter()
        .zip(&gids)
        .map(|(q, g)| (q.clone(), vec![g.clone()]))
        .collect();
    let corpus = RetrievalCorpus::new(
        "synthetic",
        EmbeddingSet::from_matrix(&eval_e, gids, "media", None)?,
        BTreeMap::from([(
            "en".to_string(),
            EmbeddingSet::from_matrix(&eval_m, qids, "en", None)?,
        )]),
        relevance,
    )?;

    Ok(SynthOutput { pairs, truth, corpus })
}

fn draw(truth: &SyntheticTruth, n: usize, d_m: usize, rng: &mut Rng) -> (Matrix, Matrix) {
    let mut zm = Matrix::random_normal(n, d_m, rng);
    for i in 0..n {
        let r = zm.row_mut(i);
        let norm = dot(r, r).sqrt();
        r.iter_mut().for_each(|x| *x /= norm);
    }
    let mut ze = truth.apply(&zm);
    if truth.noise_sigma > 0.0 {
        for x in ze.as_mut_slice() {
            *x += truth.noise_sigma * rng.normal();
        }
    }
    (zm, ze)
}
