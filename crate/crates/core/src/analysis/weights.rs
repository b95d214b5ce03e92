//! Spectral summary of the composed projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, svd, Matrix};
use crate::model::{ProjectionModel, TOOLKIT_VERSION};

pub const DEFAULT_TAU: f64 = 0.01;

/// Folds the affine layers into one map: `F(x) = W_eff·x + b_eff`.
pub fn effective_map(model: &ProjectionModel) -> (Matrix, Vec<f64>) {
    let mut w: Option<Matrix> = None;
    let mut b: Vec<f64> = Vec::new();
    for (i, layer) in model.layers.iter().enumerate() {
        let mut a = layer.weight.clone();
        if model.config.has_skip(i) {
            a = a.add(&Matrix::identity(a.rows())).expect("square skip layer");
        }
        let (nw, nb) = match w {
            None => (a.clone(), layer.bias.clone()),
            Some(prev) => {
                let mut nb = a.matvec(&b).expect("layer chain");
                nb.iter_mut().zip(&layer.bias).for_each(|(x, y)| *x += y);
                (a.matmul(&prev).expect("layer chain"), nb)
            }
        };
        w = Some(nw);
        b = nb;
    }
    (w.expect("model has at least one layer"), b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub toolkit_version: String,
    pub d_in: usize,
    pub d_out: usize,
    /// Descending; `min(d_in, d_out)` values.
    pub singular_values: Vec<f64>,
    pub tau: f64,
    pub eff_rank_threshold: usize,
    pub eff_rank_entropy: f64,
    pub orth_deviation: f64,
    pub bias_norm: f64,
}

/// Singular values of `w`, descending. Rectangular maps go through the
/// smaller Gram matrix, whose singular values are the squared ones.
pub fn singular_values(w: &Matrix) -> Result<Vec<f64>> {
    if w.rows() == w.cols() {
        return Ok(svd(w)?.s);
    }
    let gram = if w.rows() < w.cols() { w.matmul_t(w)? } else { w.t_matmul(w)? };
    Ok(svd(&gram)?.s.into_iter().map(|s| s.max(0.0).sqrt()).collect())
}

/// Number of singular values at or above `tau·σ₁`.
pub fn eff_rank_threshold(s: &[f64], tau: f64) -> usize {
    match s.first() {
        Some(&s1) if s1 > 0.0 => s.iter().filter(|&&x| x >= tau * s1).count(),
        _ => 0,
    }
}

/// `exp` of the Shannon entropy of `σ / Σσ`.
pub fn eff_rank_entropy(s: &[f64]) -> f64 {
    let total: f64 = s.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = s
        .iter()
        .map(|&x| x / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    h.exp()
}

/// `‖WᵀW − I‖_F`.
pub fn orth_deviation(w: &Matrix) -> Result<f64> {
    let g = w.t_matmul(w)?;
    Ok(g.sub(&Matrix::identity(g.rows()))?.frobenius_norm())
}

pub fn spectrum_report(w: &Matrix, b: &[f64], tau: f64) -> Result<WeightReport> {
    if !w.is_finite() || b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("effective map".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Usage(format!("tau must be in (0, 1], got {tau}")));
    }
    let s = singular_values(w)?;
    Ok(WeightReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        d_in: w.cols(),
        d_out: w.rows(),
        tau,
        eff_rank_threshold: eff_rank_threshold(&s, tau),
        eff_rank_entropy: eff_rank_entropy(&s),
        orth_deviation: orth_deviation(w)?,
        bias_norm: dot(b, b).sqrt(),
        singular_values: s,
    })
}

pub fn analyze_model(model: &ProjectionModel, tau: f64) -> Result<WeightReport> {
    let (w, b) = effective_map(model);
    spectrum_report(&w, &b, tau)
}
