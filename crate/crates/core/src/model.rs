//! The projection network: a stack of affine layers with optional residual
//! shortcuts and no nonlinearities.
//!
//! Layer 0 maps `d_in → d_out`; any further layers are `d_out → d_out`. A
//! shortcut is added only around square layers, so with `d_in != d_out` the
//! first layer never carries one.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_emb1_f64, read_json, write_emb1_f64, write_json};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::objectives::LossConfig;
use crate::rng::Rng;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const ALLOWED_LAYERS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub d_in: usize,
    pub d_out: usize,
    pub n_layers: usize,
    pub skip: bool,
    pub seed: u64,
}

impl ProjectionConfig {
    pub fn new(d_in: usize, d_out: usize, n_layers: usize, skip: bool, seed: u64) -> Self {
        Self {
            d_in,
            d_out,
            n_layers,
            skip,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !ALLOWED_LAYERS.contains(&self.n_layers) {
            return Err(Error::Usage(format!(
                "n_layers must be one of 1, 2, 4 (got {})",
                self.n_layers
            )));
        }
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::invalid("projection dimensions must be positive"));
        }
        Ok(())
    }

    pub fn layer_shape(&self, i: usize) -> (usize, usize) {
        if i == 0 {
            (self.d_out, self.d_in)
        } else {
            (self.d_out, self.d_out)
        }
    }

    pub fn has_skip(&self, i: usize) -> bool {
        let (o, i_dim) = self.layer_shape(i);
        self.skip && o == i_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`; the layer computes `h · Wᵀ + b`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub config: ProjectionConfig,
    pub layers: Vec<Layer>,
}

/// Per-layer inputs retained by [`ProjectionModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &ProjectionModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        tensor_views(&self.layers)
    }
}

fn tensor_views(layers: &[Layer]) -> Vec<(String, &[f64])> {
    let mut out = Vec::with_capacity(layers.len() * 2);
    for (i, l) in layers.iter().enumerate() {
        out.push((format!("layer{i}.weight"), l.weight.as_slice()));
        out.push((format!("layer{i}.bias"), l.bias.as_slice()));
    }
    out
}

impl ProjectionModel {
    /// Weights ~ U(-1/√fan_in, 1/√fan_in) from `Rng(seed)`, biases zero.
    pub fn init(config: ProjectionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let layers = (0..config.n_layers)
            .map(|i| {
                let (out, fan_in) = config.layer_shape(i);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..out * fan_in).map(|_| rng.uniform_range(-bound, bound)).collect();
                Layer {
                    weight: Matrix::from_vec(out, fan_in, data).expect("shape"),
                    bias: vec![0.0; out],
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// Single affine layer `x ↦ x·Wᵀ + b` with `W` of shape `d_out × d_in`.
    pub fn from_affine(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::invalid("bias length must equal weight rows"));
        }
        let config = ProjectionConfig::new(weight.cols(), weight.rows(), 1, false, 0);
        config.validate()?;
        Ok(Self {
            config,
            layers: vec![Layer { weight, bias }],
        })
    }

    pub fn from_layers(config: ProjectionConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.n_layers {
            return Err(Error::invalid(format!(
                "{} layers for a {}-layer config",
                layers.len(),
                config.n_layers
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            let expected = config.layer_shape(i);
            if l.weight.shape() != expected || l.bias.len() != expected.0 {
                return Err(Error::CheckpointShape {
                    name: format!("layer{i}"),
                    expected,
                    found: l.weight.shape(),
                });
            }
        }
        Ok(Self { config, layers })
    }

    pub fn identity(d: usize) -> Self {
        Self::from_affine(Matrix::identity(d), vec![0.0; d]).expect("valid identity")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.rows() * l.weight.cols() + l.bias.len()).sum()
    }

    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        tensor_views(&self.layers)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.weight"), l.weight.as_mut_slice()));
            out.push((format!("layer{i}.bias"), l.bias.as_mut_slice()));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.config.d_in {
            return Err(Error::Shape {
                op: "forward",
                left: x.shape(),
                right: (x.rows(), self.config.d_in),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = h.matmul_t(&layer.weight)?;
            out.add_row_vector(&layer.bias);
            if self.config.has_skip(i) {
                out = out.add(&h)?;
            }
            inputs.push(h);
            h = out;
        }
        Ok((h, ForwardCache { inputs }))
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn backward(&self, cache: &ForwardCache, dy: &Matrix) -> Result<(Gradients, Matrix)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::invalid("forward cache does not match model depth"));
        }
        let batch = cache.inputs[0].rows();
        if dy.shape() != (batch, self.config.d_out) {
            return Err(Error::Shape {
                op: "backward",
                left: dy.shape(),
                right: (batch, self.config.d_out),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dh = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            if input.cols() != layer.weight.cols() || input.rows() != batch {
                return Err(Error::invalid(format!("stale forward cache at layer {i}")));
            }
            let dw = dh.t_matmul(input)?;
            let db = dh.col_sums();
            let mut dx = dh.matmul(&layer.weight)?;
            if self.config.has_skip(i) {
                dx = dx.add(&dh)?;
            }
            grads.push(Layer { weight: dw, bias: db });
            dh = dx;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, dh))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub toolkit_version: String,
    pub model: ProjectionConfig,
    #[serde(default)]
    pub loss: Option<LossConfig>,
}

pub fn save_checkpoint(model: &ProjectionModel, dir: impl AsRef<Path>, loss: Option<&LossConfig>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = CheckpointConfig {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        model: model.config,
        loss: loss.cloned(),
    };
    write_json(&dir.join("config.json"), &cfg)?;
    for (i, l) in model.layers.iter().enumerate() {
        write_emb1_f64(&l.weight, "param", dir.join(format!("layer{i}.weight.emb1")))?;
        let b = Matrix::from_vec(1, l.bias.len(), l.bias.clone())?;
        write_emb1_f64(&b, "param", dir.join(format!("layer{i}.bias.emb1")))?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<ProjectionModel> {
    load_checkpoint_with_config(dir).map(|(m, _)| m)
}

pub fn load_checkpoint_with_config(dir: impl AsRef<Path>) -> Result<(ProjectionModel, CheckpointConfig)> {
    let dir = dir.as_ref();
    let cfg: CheckpointConfig = read_json(&dir.join("config.json"))?;
    cfg.model.validate()?;
    let mut layers = Vec::with_capacity(cfg.model.n_layers);
    for i in 0..cfg.model.n_layers {
        let expected = cfg.model.layer_shape(i);
        let wpath = dir.join(format!("layer{i}.weight.emb1"));
        let bpath = dir.join(format!("layer{i}.bias.emb1"));
        for p in [&wpath, &bpath] {
            if !p.exists() {
                return Err(Error::MissingTensor(p.clone()));
            }
        }
        let weight = read_emb1_f64(&wpath)?;
        if weight.shape() != expected {
            return Err(Error::CheckpointShape {
                name: format!("layer{i}.weight"),
                expected,
                found: weight.shape(),
            });
        }
        let bias = read_emb1_f64(&bpath)?;
        if bias.shape() != (1, expected.0) {
            return Err(Error::CheckpointShape {
                name: format!("layer{i}.bias"),
                expected: (1, expected.0),
                found: bias.shape(),
            });
        }
        layers.push(Layer {
            weight,
            bias: bias.into_vec(),
        });
    }
    let model = ProjectionModel::from_layers(cfg.model, layers)?;
    if !model.is_finite() {
        return Err(Error::NonFinite(format!("checkpoint {}", dir.display())));
    }
    Ok((model, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_loss(model: &ProjectionModel, x: &Matrix, t: &Matrix) -> f64 {
        let y = model.project(x).unwrap();
        0.5 * y.sub(t).unwrap().as_slice().iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let cfg = ProjectionConfig::new(5, 3, 2, false, 7);
        let a = ProjectionModel::init(cfg).unwrap();
        let b = ProjectionModel::init(cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&x| x == 0.0)));
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.layers[0].weight.as_slice().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn two_layer_768_parameter_count() {
        let m = ProjectionModel::init(ProjectionConfig::new(768, 768, 2, false, 0)).unwrap();
        assert_eq!(m.param_count(), 1_181_184);
    }

    #[test]
    fn invalid_layer_count() {
        assert!(ProjectionModel::init(ProjectionConfig::new(4, 4, 3, false, 0)).unwrap_err().is_usage());
    }

    #[test]
    fn identity_forward() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(ProjectionModel::identity(3).project(&x).unwrap(), x);
    }

    #[test]
    fn zero_residual_layer_is_identity() {
        let cfg = ProjectionConfig::new(3, 3, 1, true, 0);
        let m = ProjectionModel::from_layers(
            cfg,
            vec![Layer {
                weight: Matrix::zeros(3, 3),
                bias: vec![0.0; 3],
            }],
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![0.5, 1.5, -1.0], vec![2.0, 0.0, 1.0]]).unwrap();
        assert_eq!(m.project(&x).unwrap(), x);
    }

    #[test]
    fn hand_composed_two_layers() {
        // W1 = [[1,2],[0,1]], b1 = [1,0]; W2 = [[0,1],[1,0]], b2 = [0,3]
        // x = [1,1]: h = [1+2+1, 0+1+0] = [4,1]; y = [1, 4] + [0,3] = [1,7]
        let cfg = ProjectionConfig::new(2, 2, 2, false, 0);
        let m = ProjectionModel::from_layers(
            cfg,
            vec![
                Layer {
                    weight: Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap(),
                    bias: vec![1.0, 0.0],
                },
                Layer {
                    weight: Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
                    bias: vec![0.0, 3.0],
                },
            ],
        )
        .unwrap();
        let y = m.project(&Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 7.0]);
    }

    #[test]
    fn forward_shape_error() {
        let m = ProjectionModel::identity(3);
        assert!(m.forward(&Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let m = ProjectionModel::init(ProjectionConfig::new(4, 4, 2, true, 1)).unwrap();
        let mut rng = Rng::new(2);
        let x = Matrix::random_normal(3, 4, &mut rng);
        let (_, cache) = m.forward(&x).unwrap();
        let (g, dx) = m.backward(&cache, &Matrix::zeros(3, 4)).unwrap();
        assert!(g.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_weight_grad_is_outer_product() {
        let m = ProjectionModel::init(ProjectionConfig::new(3, 2, 1, false, 4)).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
        let dy = Matrix::from_rows(&[vec![1.5, -0.5]]).unwrap();
        let (_, cache) = m.forward(&x).unwrap();
        let (g, _) = m.backward(&cache, &dy).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g.layers[0].weight[(o, i)], dy[(0, o)] * x[(0, i)]);
            }
        }
    }

    /// Central differences of ½‖F(x) − t‖² in every parameter and input.
    #[test]
    fn gradients_match_finite_differences_all_variants() {
        let h = 1e-5;
        for &layers in &ALLOWED_LAYERS {
            for skip in [false, true] {
                let mut rng = Rng::new(100 + layers as u64);
                let model = ProjectionModel::init(ProjectionConfig::new(5, 5, layers, skip, 3)).unwrap();
                let x = Matrix::random_normal(4, 5, &mut rng);
                let t = Matrix::random_normal(4, 5, &mut rng);
                let (y, cache) = model.forward(&x).unwrap();
                let (g, dx) = model.backward(&cache, &y.sub(&t).unwrap()).unwrap();

                let mut max_rel: f64 = 0.0;
                let analytic: Vec<Vec<f64>> = g.tensors().into_iter().map(|(_, s)| s.to_vec()).collect();
                for (ti, a) in analytic.iter().enumerate() {
                    for k in 0..a.len() {
                        let mut plus = model.clone();
                        plus.tensors_mut()[ti].1[k] += h;
                        let mut minus = model.clone();
                        minus.tensors_mut()[ti].1[k] -= h;
                        let num = (half_loss(&plus, &x, &t) - half_loss(&minus, &x, &t)) / (2.0 * h);
                        max_rel = max_rel.max((a[k] - num).abs() / a[k].abs().max(num.abs()).max(1e-3));
                    }
                }
                for k in 0..x.as_slice().len() {
                    let mut xp = x.clone();
                    xp.as_mut_slice()[k] += h;
                    let mut xm = x.clone();
                    xm.as_mut_slice()[k] -= h;
                    let num = (half_loss(&model, &xp, &t) - half_loss(&model, &xm, &t)) / (2.0 * h);
                    let a = dx.as_slice()[k];
                    max_rel = max_rel.max((a - num).abs() / a.abs().max(num.abs()).max(1e-3));
                }
                assert!(max_rel < 1e-6, "layers={layers} skip={skip}: {max_rel:e}");
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let m = ProjectionModel::init(ProjectionConfig::new(6, 4, 4, true, 7)).unwrap();
        save_checkpoint(&m, dir.path(), Some(&LossConfig::default())).unwrap();
        let (back, cfg) = load_checkpoint_with_config(dir.path()).unwrap();
        assert_eq!(back, m);
        for ((_, a), (_, b)) in back.tensors().iter().zip(m.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(cfg.toolkit_version, TOOLKIT_VERSION);
        assert_eq!(cfg.model.seed, 7);
        assert!(cfg.loss.is_some());
    }

    #[test]
    fn tampered_config_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = ProjectionModel::init(ProjectionConfig::new(3, 3, 1, false, 7)).unwrap();
        save_checkpoint(&m, dir.path(), None).unwrap();
        let path = dir.path().join("config.json");
        let mut cfg: CheckpointConfig = read_json(&path).unwrap();
        cfg.model.d_out = 5;
        write_json(&path, &cfg).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CheckpointShape { .. })));
    }

    #[test]
    fn missing_tensor_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = ProjectionModel::init(ProjectionConfig::new(3, 3, 2, false, 7)).unwrap();
        save_checkpoint(&m, dir.path(), None).unwrap();
        fs::remove_file(dir.path().join("layer1.bias.emb1")).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::MissingTensor(_))));
    }
}
