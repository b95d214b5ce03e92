//! Exact O(n²) t-SNE.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::rng::Rng;

pub const MAX_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// Per-coordinate adaptive step gains.
    pub gains: bool,
    pub init_std: f64,
    /// Allowed deviation of each row's entropy from `ln(perplexity)`, nats.
    pub entropy_tol: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 32.0,
            iters: 1000,
            seed: 0,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            gains: true,
            init_std: 1e-4,
            entropy_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneOutput {
    pub coords: Matrix,
    pub config: TsneConfig,
    pub initial_kl: f64,
    pub final_kl: f64,
    /// `exp(H)` of each calibrated conditional row.
    pub realized_perplexity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneMetadata {
    pub toolkit_version: String,
    pub n: usize,
    pub config: TsneConfig,
    pub initial_kl: f64,
    pub final_kl: f64,
    pub min_realized_perplexity: f64,
    pub max_realized_perplexity: f64,
}

impl TsneOutput {
    pub fn metadata(&self) -> TsneMetadata {
        let rp = &self.realized_perplexity;
        TsneMetadata {
            toolkit_version: crate::model::TOOLKIT_VERSION.to_string(),
            n: self.coords.rows(),
            config: self.config,
            initial_kl: self.initial_kl,
            final_kl: self.final_kl,
            min_realized_perplexity: rp.iter().cloned().fold(f64::INFINITY, f64::min),
            max_realized_perplexity: rp.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Row-conditional affinities `p_{j|i}` (row-major, zero diagonal) with
/// each row's bandwidth searched so its entropy matches `ln(perplexity)`.
pub fn conditional_affinities(points: &Matrix, perplexity: f64, tol: f64) -> Result<Vec<f64>> {
    let n = points.rows();
    if !(perplexity > 0.0) || 3.0 * perplexity >= n as f64 {
        return Err(Error::Usage(format!(
            "perplexity {perplexity} is infeasible for {n} points (need 3·perplexity < n)"
        )));
    }
    let target = perplexity.ln();
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d: Vec<f64> = (0..n).map(|j| sq_dist(points.row(i), points.row(j))).collect();
            calibrate_row(&d, i, target, tol)
        })
        .collect();
    let mut p = Vec::with_capacity(n * n);
    for r in rows {
        p.extend(r?);
    }
    Ok(p)
}

fn row_dist(d: &[f64], i: usize, beta: f64, dmin: f64) -> (Vec<f64>, f64) {
    let mut p: Vec<f64> = d
        .iter()
        .enumerate()
        .map(|(j, &dj)| if j == i { 0.0 } else { (-beta * (dj - dmin)).exp() })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    let h = entropy(&p);
    (p, h)
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Bisection on `ln β`; entropy decreases monotonically in `β`.
fn calibrate_row(d: &[f64], i: usize, target: f64, tol: f64) -> Result<Vec<f64>> {
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &x)| x)
        .fold(f64::INFINITY, f64::min);
    let spread = d.iter().cloned().fold(0.0, f64::max) - dmin;
    if spread <= 0.0 {
        // all other points equidistant: the uniform row is the only option
        let (p, _) = row_dist(d, i, 0.0, dmin);
        return Ok(p);
    }
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    let scale = spread.ln();
    let mut best = row_dist(d, i, (-scale).exp(), dmin);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (p, h) = row_dist(d, i, (mid - scale).exp(), dmin);
        let diff = h - target;
        best = (p, h);
        if diff.abs() <= tol {
            break;
        }
        if diff > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "bandwidth search for point {i} ended at entropy {} (target {target})",
            best.1
        )));
    }
    Ok(best.0)
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn symmetrize(cond: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

/// Unnormalized Student-t kernel per row, and its total.
fn kernel(y: &Matrix) -> (Vec<f64>, f64) {
    let n = y.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 / (1.0 + sq_dist(y.row(i), y.row(j))) })
                .collect()
        })
        .collect();
    let mut z = 0.0;
    let mut flat = Vec::with_capacity(n * n);
    for r in rows {
        z += r.iter().sum::<f64>();
        flat.extend(r);
    }
    (flat, z)
}

/// `KL(P ‖ Q)` for the embedding `y`.
pub fn kl_divergence(p: &[f64], y: &Matrix) -> f64 {
    let (num, z) = kernel(y);
    p.iter()
        .zip(&num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &w)| pij * (pij / (w / z)).ln())
        .sum()
}

fn gradient(p: &[f64], y: &Matrix, exaggeration: f64) -> Matrix {
    let n = y.rows();
    let (num, z) = kernel(y);
    let rows: Vec<[f64; 2]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            let yi = y.row(i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let c = 4.0 * (exaggeration * p[i * n + j] - w / z) * w;
                let yj = y.row(j);
                g[0] += c * (yi[0] - yj[0]);
                g[1] += c * (yi[1] - yj[1]);
            }
            g
        })
        .collect();
    Matrix::from_vec(n, 2, rows.into_iter().flatten().collect()).expect("n×2")
}

pub fn tsne(points: &Matrix, cfg: &TsneConfig) -> Result<TsneOutput> {
    let n = points.rows();
    if n > MAX_POINTS {
        return Err(Error::invalid(format!("exact t-SNE supports at most {MAX_POINTS} points, got {n}")));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    let cond = conditional_affinities(points, cfg.perplexity, cfg.entropy_tol)?;
    let realized_perplexity = cond.chunks(n).map(|r| entropy(r).exp()).collect();
    let p = symmetrize(&cond, n);

    let mut rng = Rng::new(cfg.seed);
    let mut y = Matrix::random_normal(n, 2, &mut rng).scale(cfg.init_std);
    let initial_kl = kl_divergence(&p, &y);
    let mut update = Matrix::zeros(n, 2);
    let mut gains = vec![1.0f64; n * 2];

    for it in 0..cfg.iters {
        let ex = if it < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let mom = if it < cfg.momentum_switch { cfg.momentum } else { cfg.final_momentum };
        let g = gradient(&p, &y, ex);
        let (gs, us, ys) = (g.as_slice(), update.as_mut_slice(), y.as_mut_slice());
        for k in 0..n * 2 {
            if cfg.gains {
                gains[k] = if (gs[k] > 0.0) != (us[k] > 0.0) {
                    gains[k] + 0.2
                } else {
                    (gains[k] * 0.8).max(0.01)
                };
            }
            us[k] = mom * us[k] - cfg.learning_rate * gains[k] * gs[k];
            ys[k] += us[k];
        }
        let mean = y.col_sums().into_iter().map(|s| s / n as f64).collect::<Vec<_>>();
        for r in 0..n {
            let row = y.row_mut(r);
            row[0] -= mean[0];
            row[1] -= mean[1];
        }
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("t-SNE embedding at iteration {it}")));
        }
    }
    let final_kl = kl_divergence(&p, &y);
    Ok(TsneOutput {
        coords: y,
        config: *cfg,
        initial_kl,
        final_kl,
        realized_perplexity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        let mut rows = Vec::new();
        for c in 0..3 {
            for _ in 0..n_per {
                let mut r: Vec<f64> = (0..5).map(|_| rng.normal() * 0.3).collect();
                r[c] += 5.0;
                rows.push(r);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn calibration_hits_target_perplexity() {
        let x = blobs(20, 1);
        let cond = conditional_affinities(&x, 10.0, 1e-10).unwrap();
        for row in cond.chunks(60) {
            assert!((entropy(row).exp() - 10.0).abs() < 1e-6);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_joint_sums_to_one() {
        let x = blobs(10, 2);
        let n = x.rows();
        let p = symmetrize(&conditional_affinities(&x, 5.0, 1e-10).unwrap(), n);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(p[i * n + j], p[j * n + i]);
                assert!(p[i * n + j] >= 0.0);
            }
        }
    }

    #[test]
    fn infeasible_perplexity() {
        let x = blobs(5, 3);
        assert!(tsne(&x, &TsneConfig::default()).unwrap_err().is_usage());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = blobs(6, 4);
        let n = x.rows();
        let p = symmetrize(&conditional_affinities(&x, 4.0, 1e-10).unwrap(), n);
        let mut rng = Rng::new(5);
        let y = Matrix::random_normal(n, 2, &mut rng);
        let g = gradient(&p, &y, 1.0);
        let h = 1e-6;
        for k in [0, 7, 2 * n - 1] {
            let mut yp = y.clone();
            yp.as_mut_slice()[k] += h;
            let mut ym = y.clone();
            ym.as_mut_slice()[k] -= h;
            let fd: f64 = (kl_divergence(&p, &yp) - kl_divergence(&p, &ym)) / (2.0 * h);
            assert!((fd - g.as_slice()[k]).abs() < 1e-6 * fd.abs().max(1.0), "{fd} vs {}", g.as_slice()[k]);
        }
    }

    #[test]
    fn separates_blobs_and_reduces_kl() {
        let x = blobs(15, 6);
        let cfg = TsneConfig {
            perplexity: 8.0,
            iters: 400,
            seed: 1,
            // affinities scale like 1/n², so tiny inputs want a smaller step
            learning_rate: 50.0,
            ..TsneConfig::default()
        };
        let out = tsne(&x, &cfg).unwrap();
        assert!(out.final_kl < out.initial_kl);
        // every point's nearest neighbor in the map lies in its own blob
        let y = &out.coords;
        for i in 0..y.rows() {
            let nn = (0..y.rows())
                .filter(|&j| j != i)
                .min_by(|&a, &b| sq_dist(y.row(i), y.row(a)).total_cmp(&sq_dist(y.row(i), y.row(b))))
                .unwrap();
            assert_eq!(nn / 15, i / 15, "point {i}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let x = blobs(12, 7);
        let cfg = TsneConfig {
            perplexity: 5.0,
            iters: 50,
            seed: 3,
            ..TsneConfig::default()
        };
        assert_eq!(tsne(&x, &cfg).unwrap().coords, tsne(&x, &cfg).unwrap().coords);
    }
}
