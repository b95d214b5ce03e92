//! Training objectives with analytic gradients.
//!
//! The main objective is `λ · MSE(û, ê) + β · L_str(û, ê)`, where `û`, `ê`
//! are the row-normalized projections and targets and `L_str` compares the
//! strict upper triangles of their in-batch cosine Gram matrices. Targets
//! are constants throughout: only the projection receives gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, NORM_EPS};

const UNIT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    L1,
    Similarity,
    Combined,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Self::Mse),
            "l1" => Ok(Self::L1),
            "similarity" => Ok(Self::Similarity),
            "combined" => Ok(Self::Combined),
            other => Err(Error::Usage(format!(
                "unknown loss {other:?} (expected mse, l1, similarity, combined)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda: f64,
    pub beta: f64,
    /// Row-normalize projections and targets before the loss (retrieval
    /// mode). Off for generation mode, which also drops the structure term.
    pub normalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Combined,
            lambda: 48.0,
            beta: 1.0,
            normalize: true,
        }
    }
}

impl LossConfig {
    pub fn generation() -> Self {
        Self {
            kind: LossKind::Combined,
            lambda: 1.0,
            beta: 0.0,
            normalize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Usage(format!(
                "lambda and beta must be finite and >= 0 (got {}, {})",
                self.lambda, self.beta
            )));
        }
        Ok(())
    }

    /// Structure weight actually applied.
    pub fn effective_beta(&self) -> f64 {
        if self.kind == LossKind::Combined && self.normalize {
            self.beta
        } else {
            0.0
        }
    }
}

/// Loss value, its unweighted components and the gradient with respect to
/// the raw projections.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub align: f64,
    pub structure: f64,
    pub grad: Matrix,
}

fn check_same(u: &Matrix, e: &Matrix, op: &'static str) -> Result<()> {
    if u.shape() != e.shape() {
        return Err(Error::Shape {
            op,
            left: u.shape(),
            right: e.shape(),
        });
    }
    if u.rows() == 0 {
        return Err(Error::invalid(format!("{op}: empty batch")));
    }
    Ok(())
}

/// Mean over all `B·d` elements of `(u − e)²`.
pub fn align_mse(u: &Matrix, e: &Matrix) -> Result<(f64, Matrix)> {
    check_same(u, e, "align_mse")?;
    let count = (u.rows() * u.cols()) as f64;
    let diff = u.sub(e)?;
    let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff.scale(2.0 / count)))
}

/// Mean absolute deviation; the subgradient uses `sign(0) = 0`.
pub fn l1_loss(u: &Matrix, e: &Matrix) -> Result<(f64, Matrix)> {
    check_same(u, e, "l1_loss")?;
    let count = (u.rows() * u.cols()) as f64;
    let diff = u.sub(e)?;
    let loss = diff.as_slice().iter().map(|d| d.abs()).sum::<f64>() / count;
    let grad: Vec<f64> = diff
        .as_slice()
        .iter()
        .map(|&d| {
            if d > 0.0 {
                1.0 / count
            } else if d < 0.0 {
                -1.0 / count
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, Matrix::from_vec(u.rows(), u.cols(), grad)?))
}

/// Mean over the `B(B−1)/2` strict-upper-triangle entries of
/// `(ÛÛᵀ − ÊÊᵀ)²`. Batches of one row contribute nothing.
pub fn structure_loss(u_hat: &Matrix, e_hat: &Matrix) -> Result<(f64, Matrix)> {
    check_same(u_hat, e_hat, "structure_loss")?;
    for m in [u_hat, e_hat] {
        for (row, n) in m.row_norms().into_iter().enumerate() {
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::NotUnitNorm { row, norm: n });
            }
        }
    }
    let b = u_hat.rows();
    if b < 2 {
        return Ok((0.0, Matrix::zeros(b, u_hat.cols())));
    }
    let pairs = (b * (b - 1) / 2) as f64;
    let r = u_hat.matmul_t(u_hat)?;
    let re = e_hat.matmul_t(e_hat)?;
    // symmetric residual with zero diagonal
    let mut diff = Matrix::zeros(b, b);
    let mut loss = 0.0;
    for i in 0..b {
        for j in i + 1..b {
            let d = r[(i, j)] - re[(i, j)];
            loss += d * d;
            diff[(i, j)] = d;
            diff[(j, i)] = d;
        }
    }
    let grad = diff.matmul(u_hat)?.scale(2.0 / pairs);
    Ok((loss / pairs, grad))
}

/// Row-normalized matrix that remembers the norms for backpropagation.
#[derive(Debug, Clone)]
pub struct NormalizedRows {
    pub output: Matrix,
    norms: Vec<f64>,
}

impl NormalizedRows {
    /// Maps `∂L/∂û` to `∂L/∂u` via `(I − ûûᵀ)/‖u‖` per row.
    pub fn backward(&self, du_hat: &Matrix) -> Result<Matrix> {
        if du_hat.shape() != self.output.shape() {
            return Err(Error::Shape {
                op: "normalize backward",
                left: du_hat.shape(),
                right: self.output.shape(),
            });
        }
        let mut du = du_hat.clone();
        for i in 0..du.rows() {
            let u_hat = self.output.row(i);
            let radial = dot(u_hat, du_hat.row(i));
            let inv = 1.0 / self.norms[i];
            for (g, &uh) in du.row_mut(i).iter_mut().zip(u_hat) {
                *g = (*g - radial * uh) * inv;
            }
        }
        Ok(du)
    }
}

pub fn normalize_with_grad(u: &Matrix) -> Result<NormalizedRows> {
    let norms = u.row_norms();
    let mut output = u.clone();
    for (i, &n) in norms.iter().enumerate() {
        if !(n > NORM_EPS) {
            return Err(Error::DegenerateRow { row: i, norm: n });
        }
        output.row_mut(i).iter_mut().for_each(|x| *x /= n);
    }
    Ok(NormalizedRows { output, norms })
}

/// Mean over rows of `1 − cos(u_i, e_i)`.
pub fn similarity_loss(u: &Matrix, e: &Matrix) -> Result<(f64, Matrix)> {
    check_same(u, e, "similarity_loss")?;
    let nu = normalize_with_grad(u)?;
    let ne = normalize_with_grad(e)?;
    let b = u.rows() as f64;
    let mut loss = 0.0;
    for i in 0..u.rows() {
        loss += 1.0 - dot(nu.output.row(i), ne.output.row(i));
    }
    let du_hat = ne.output.scale(-1.0 / b);
    Ok((loss / b, nu.backward(&du_hat)?))
}

/// Loss selected by `cfg`, with the gradient taken through any
/// normalization back to `u_raw`.
pub fn combined_loss(u_raw: &Matrix, e_raw: &Matrix, cfg: &LossConfig) -> Result<LossOutput> {
    check_same(u_raw, e_raw, "combined_loss")?;
    cfg.validate()?;
    if cfg.kind == LossKind::Similarity {
        let (l, g) = similarity_loss(u_raw, e_raw)?;
        return Ok(LossOutput {
            loss: l,
            align: l,
            structure: 0.0,
            grad: g,
        });
    }
    let weight = if cfg.kind == LossKind::Combined { cfg.lambda } else { 1.0 };
    let primary = |u: &Matrix, e: &Matrix| match cfg.kind {
        LossKind::L1 => l1_loss(u, e),
        _ => align_mse(u, e),
    };

    if !cfg.normalize {
        let (l, g) = primary(u_raw, e_raw)?;
        return Ok(LossOutput {
            loss: weight * l,
            align: l,
            structure: 0.0,
            grad: g.scale(weight),
        });
    }

    let nu = normalize_with_grad(u_raw)?;
    let e_hat = normalize_with_grad(e_raw)?.output;
    let (align, g_align) = primary(&nu.output, &e_hat)?;
    let beta = cfg.effective_beta();
    let mut loss = weight * align;
    let mut du_hat = g_align.scale(weight);
    let mut structure = 0.0;
    if cfg.kind == LossKind::Combined {
        let (s, g_str) = structure_loss(&nu.output, &e_hat)?;
        structure = s;
        if beta != 0.0 {
            loss += beta * s;
            du_hat = du_hat.add(&g_str.scale(beta))?;
        }
    }
    Ok(LossOutput {
        loss,
        align,
        structure,
        grad: nu.backward(&du_hat)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::l2_normalize_rows;
    use crate::rng::Rng;

    fn rows(r: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(r).unwrap()
    }

    /// Max elementwise relative error between an analytic gradient and
    /// central differences of `f`.
    fn fd_check(x: &Matrix, grad: &Matrix, f: impl Fn(&Matrix) -> f64) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..x.as_slice().len() {
            let mut p = x.clone();
            p.as_mut_slice()[k] += h;
            let mut m = x.clone();
            m.as_mut_slice()[k] -= h;
            let num = (f(&p) - f(&m)) / (2.0 * h);
            let a = grad.as_slice()[k];
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-4));
        }
        worst
    }

    #[test]
    fn mse_examples() {
        let u = rows(&[vec![1.0, 0.0]]);
        let e = rows(&[vec![0.0, 0.0]]);
        let (l, g) = align_mse(&u, &e).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g.as_slice(), &[1.0, 0.0]);
        let (l0, g0) = align_mse(&u, &u).unwrap();
        assert_eq!(l0, 0.0);
        assert!(g0.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mse_duplicate_rows_same_mean() {
        let mut rng = Rng::new(1);
        let u = Matrix::random_normal(3, 4, &mut rng);
        let e = Matrix::random_normal(3, 4, &mut rng);
        let uu = u.select_rows(&[0, 1, 2, 0, 1, 2]);
        let ee = e.select_rows(&[0, 1, 2, 0, 1, 2]);
        let a = align_mse(&u, &e).unwrap().0;
        let b = align_mse(&uu, &ee).unwrap().0;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn mse_shape_mismatch() {
        assert!(align_mse(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn l1_examples() {
        let u = rows(&[vec![1.0, -1.0]]);
        let e = rows(&[vec![0.0, 0.0]]);
        let (l, g) = l1_loss(&u, &e).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.as_slice(), &[0.5, -0.5]);
        let (l, g) = l1_loss(&u, &u).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn structure_two_rows_single_entry() {
        let mut rng = Rng::new(2);
        let u = l2_normalize_rows(&Matrix::random_normal(2, 3, &mut rng)).unwrap();
        let e = l2_normalize_rows(&Matrix::random_normal(2, 3, &mut rng)).unwrap();
        let (l, _) = structure_loss(&u, &e).unwrap();
        let expected = (dot(u.row(0), u.row(1)) - dot(e.row(0), e.row(1))).powi(2);
        assert!((l - expected).abs() < 1e-15);
        assert_eq!(structure_loss(&u, &u).unwrap().0, 0.0);
    }

    #[test]
    fn structure_single_row_is_zero() {
        let u = rows(&[vec![1.0, 0.0]]);
        let e = rows(&[vec![0.0, 1.0]]);
        let (l, g) = structure_loss(&u, &e).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn structure_rejects_non_unit_rows() {
        let u = rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(structure_loss(&u, &u), Err(Error::NotUnitNorm { row: 0, .. })));
    }

    #[test]
    fn structure_gradient_matches_fd() {
        let mut rng = Rng::new(3);
        let u = l2_normalize_rows(&Matrix::random_normal(4, 5, &mut rng)).unwrap();
        let e = l2_normalize_rows(&Matrix::random_normal(4, 5, &mut rng)).unwrap();
        let (_, g) = structure_loss(&u, &e).unwrap();
        let err = fd_check(&u, &g, |x| structure_loss(x, &e).unwrap().0);
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn structure_permutation_invariant() {
        let mut rng = Rng::new(4);
        let u = l2_normalize_rows(&Matrix::random_normal(6, 3, &mut rng)).unwrap();
        let e = l2_normalize_rows(&Matrix::random_normal(6, 3, &mut rng)).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let a = structure_loss(&u, &e).unwrap().0;
        let b = structure_loss(&u.select_rows(&perm), &e.select_rows(&perm)).unwrap().0;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn normalize_backward_kills_radial_component() {
        let u = rows(&[vec![3.0, 4.0]]);
        let n = normalize_with_grad(&u).unwrap();
        let du = n.backward(&n.output.scale(2.5)).unwrap();
        assert!(du.as_slice().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn normalize_backward_unit_row_is_projector() {
        let u = rows(&[vec![0.6, 0.8]]);
        let n = normalize_with_grad(&u).unwrap();
        let g = rows(&[vec![1.0, 0.0]]);
        let du = n.backward(&g).unwrap();
        // (I − ûûᵀ)·[1,0] = [1 − 0.36, −0.48]
        assert!((du[(0, 0)] - 0.64).abs() < 1e-15);
        assert!((du[(0, 1)] + 0.48).abs() < 1e-15);
    }

    #[test]
    fn normalize_jvp_matches_fd() {
        let mut rng = Rng::new(5);
        let u = Matrix::random_normal(3, 4, &mut rng);
        let w = Matrix::random_normal(3, 4, &mut rng);
        let n = normalize_with_grad(&u).unwrap();
        let du = n.backward(&w).unwrap();
        let f = |x: &Matrix| {
            let o = l2_normalize_rows(x).unwrap();
            o.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum::<f64>()
        };
        assert!(fd_check(&u, &du, f) < 1e-6);
    }

    #[test]
    fn normalize_degenerate_row() {
        assert!(normalize_with_grad(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn similarity_examples() {
        let e = rows(&[vec![1.0, 2.0, -1.0]]);
        let (l, _) = similarity_loss(&e.scale(3.0), &e).unwrap();
        assert!(l.abs() < 1e-15);
        let (l, _) = similarity_loss(&rows(&[vec![1.0, 0.0]]), &rows(&[vec![0.0, 1.0]])).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn similarity_gradient_matches_fd() {
        let mut rng = Rng::new(6);
        let u = Matrix::random_normal(8, 5, &mut rng);
        let e = Matrix::random_normal(8, 5, &mut rng);
        let (_, g) = similarity_loss(&u, &e).unwrap();
        assert!(fd_check(&u, &g, |x| similarity_loss(x, &e).unwrap().0) < 1e-6);
    }

    #[test]
    fn combined_zero_when_aligned() {
        let mut rng = Rng::new(7);
        let e = Matrix::random_normal(5, 4, &mut rng);
        let out = combined_loss(&e.scale(2.0), &e, &LossConfig::default()).unwrap();
        assert!(out.loss.abs() < 1e-28);
    }

    #[test]
    fn combined_degenerates_to_normalized_mse() {
        let mut rng = Rng::new(8);
        let u = Matrix::random_normal(5, 4, &mut rng);
        let e = Matrix::random_normal(5, 4, &mut rng);
        let cfg = LossConfig {
            lambda: 1.0,
            beta: 0.0,
            ..LossConfig::default()
        };
        let out = combined_loss(&u, &e, &cfg).unwrap();
        let direct = align_mse(&l2_normalize_rows(&u).unwrap(), &l2_normalize_rows(&e).unwrap()).unwrap().0;
        assert_eq!(out.loss, direct);
    }

    #[test]
    fn combined_gradient_matches_fd() {
        let mut rng = Rng::new(9);
        let u = Matrix::random_normal(8, 16, &mut rng);
        let e = Matrix::random_normal(8, 16, &mut rng);
        let cfg = LossConfig::default();
        let out = combined_loss(&u, &e, &cfg).unwrap();
        let err = fd_check(&u, &out.grad, |x| combined_loss(x, &e, &cfg).unwrap().loss);
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn other_kinds_gradients_match_fd() {
        let mut rng = Rng::new(10);
        let u = Matrix::random_normal(6, 5, &mut rng);
        let e = Matrix::random_normal(6, 5, &mut rng);
        for kind in [LossKind::Mse, LossKind::Similarity] {
            for normalize in [true, false] {
                let cfg = LossConfig {
                    kind,
                    normalize,
                    ..LossConfig::default()
                };
                let out = combined_loss(&u, &e, &cfg).unwrap();
                let err = fd_check(&u, &out.grad, |x| combined_loss(x, &e, &cfg).unwrap().loss);
                assert!(err < 1e-6, "{kind:?} {normalize}: {err:e}");
            }
        }
    }

    #[test]
    fn generation_mode_is_raw_mse() {
        let u = rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        let e = rows(&[vec![1.0, 1.0], vec![2.0, -2.0]]);
        let out = combined_loss(&u, &e, &LossConfig::generation()).unwrap();
        // ((2² + 1²) + (2² + 3²)) / 4
        assert!((out.loss - 18.0 / 4.0).abs() < 1e-15);
        assert_eq!(out.structure, 0.0);
    }

    #[test]
    fn target_rescaling_does_not_change_loss() {
        let mut rng = Rng::new(11);
        let u = Matrix::random_normal(8, 6, &mut rng);
        let e = Matrix::random_normal(8, 6, &mut rng);
        let mut scaled = e.clone();
        for i in 0..scaled.rows() {
            let s = rng.uniform_range(0.1, 10.0);
            scaled.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let cfg = LossConfig::default();
        let a = combined_loss(&u, &e, &cfg).unwrap().loss;
        let b = combined_loss(&u, &scaled, &cfg).unwrap().loss;
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn losses_non_negative() {
        let mut rng = Rng::new(12);
        for _ in 0..20 {
            let u = Matrix::random_normal(4, 3, &mut rng);
            let e = Matrix::random_normal(4, 3, &mut rng);
            for kind in [LossKind::Mse, LossKind::L1, LossKind::Similarity, LossKind::Combined] {
                let cfg = LossConfig {
                    kind,
                    ..LossConfig::default()
                };
                assert!(combined_loss(&u, &e, &cfg).unwrap().loss >= 0.0);
            }
        }
    }
}
