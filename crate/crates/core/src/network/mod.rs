//! Fully connected, bias-free deep networks `x^(l+1) = phi(W^(l) x^(l))`
//! with exact backpropagation and per-layer norm telemetry.
//!
//! Batches are `n x d` row-major matrices, one sample per row, so a layer
//! computes `H = X W^T`.

pub mod batchnorm;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod optim;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::activations::{Activation, AffineActivation};
use crate::data::thin_shell_row;
use crate::gpn::GpnConstants;
use crate::ortho::{
    orthogonality_defect, row_normalized, sample_haar_orthogonal, sample_haar_reflectors,
    sample_semi_orthogonal, HaarReflectors, RowNormParam,
};
use crate::{Error, Result};

pub use batchnorm::{BatchNorm, BnCache};
pub use gradcheck::{finite_difference_grad, GRADCHECK_CAP};
pub use loss::{loss_and_top_gradient, LossKind, Target};
pub use optim::SgdMomentum;

/// Tolerance on `|W^T W - I|_max` for freshly sampled orthogonal weights.
pub const INIT_DEFECT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Haar-random orthogonal `W`, trained (if at all) as a free matrix.
    HaarOrthogonal,
    /// `W = diag(1/|v_i|) V` with `V` the trained parameter.
    RowNormalized,
}

/// How Haar-orthogonal weights are held in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    /// Explicit matrices; batched products use GEMM.
    Dense,
    /// Householder reflectors; cheaper to sample, `O(d^2)` per sample to
    /// apply, and not trainable.
    Factored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    /// When present, layers use `a * phi + b`.
    pub gpn: Option<GpnConstants>,
    pub weight_mode: WeightMode,
    pub storage: Storage,
    pub batchnorm: bool,
    /// Dimension of raw inputs fed through an unconstrained bottom layer.
    pub input_dim: Option<usize>,
    /// Number of outputs of an unconstrained top layer.
    pub output_dim: Option<usize>,
}

impl NetworkConfig {
    pub fn new(width: usize, depth: usize, activation: Activation) -> Self {
        Self {
            width,
            depth,
            activation,
            gpn: None,
            weight_mode: WeightMode::HaarOrthogonal,
            storage: Storage::Dense,
            batchnorm: false,
            input_dim: None,
            output_dim: None,
        }
    }

    pub fn with_gpn(mut self, gpn: Option<GpnConstants>) -> Self {
        self.gpn = gpn;
        self
    }

    pub fn with_weight_mode(mut self, mode: WeightMode) -> Self {
        self.weight_mode = mode;
        self
    }

    pub fn with_storage(mut self, storage: Storage) -> Self {
        self.storage = storage;
        self
    }

    pub fn with_batchnorm(mut self, on: bool) -> Self {
        self.batchnorm = on;
        self
    }

    pub fn with_adapters(mut self, input_dim: Option<usize>, output_dim: Option<usize>) -> Self {
        self.input_dim = input_dim;
        self.output_dim = output_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 {
            return Err(Error::invalid(format!(
                "width and depth must be >= 1 (got d={}, L={})",
                self.width, self.depth
            )));
        }
        if self.input_dim == Some(0) || self.output_dim == Some(0) {
            return Err(Error::invalid("adapter dimensions must be positive"));
        }
        if self.storage == Storage::Factored && self.weight_mode == WeightMode::RowNormalized {
            return Err(Error::invalid(
                "factored storage only applies to Haar-orthogonal weights",
            ));
        }
        Ok(())
    }

    /// Width of the samples `forward` expects.
    pub fn input_width(&self) -> usize {
        self.input_dim.unwrap_or(self.width)
    }

    /// Width of the final output.
    pub fn output_width(&self) -> usize {
        self.output_dim.unwrap_or(self.width)
    }

    pub fn layer_activation(&self) -> AffineActivation {
        match &self.gpn {
            Some(c) => c.normalized(self.activation.clone()),
            None => AffineActivation::raw(self.activation.clone()),
        }
    }
}

/// One layer's weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    Dense(Array2<f64>),
    Factored(HaarReflectors),
    RowNormalized(RowNormParam),
}

impl LayerWeights {
    /// The effective `W` as an explicit matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            LayerWeights::Dense(w) => w.clone(),
            LayerWeights::Factored(h) => h.to_dense().into_inner(),
            LayerWeights::RowNormalized(p) => p.weights().clone(),
        }
    }

    /// `X W^T`.
    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            LayerWeights::Dense(w) => x.dot(&w.t()),
            LayerWeights::RowNormalized(p) => x.dot(&p.weights().t()),
            LayerWeights::Factored(h) => {
                let mut out = x.to_owned();
                if out.nrows() == 1 {
                    h.apply(out.as_slice_mut().expect("row-major batch"));
                } else {
                    h.apply_rows(&mut out);
                }
                out
            }
        }
    }

    /// `Y W`.
    fn apply_transpose(&self, y: &Array2<f64>) -> Array2<f64> {
        match self {
            LayerWeights::Dense(w) => y.dot(w),
            LayerWeights::RowNormalized(p) => y.dot(p.weights()),
            LayerWeights::Factored(h) => {
                let mut out = y.to_owned();
                if out.nrows() == 1 {
                    h.apply_transpose(out.as_slice_mut().expect("row-major batch"));
                } else {
                    h.apply_transpose_rows(&mut out);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    activation: AffineActivation,
    layers: Vec<LayerWeights>,
    batchnorm: Vec<BatchNorm>,
    input_adapter: Option<Array2<f64>>,
    output_adapter: Option<Array2<f64>>,
}

/// Sample a network's weights from `rng`.
pub fn init_network<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Network> {
    config.validate()?;
    let d = config.width;
    let input_adapter = match config.input_dim {
        Some(p) => Some(sample_semi_orthogonal(d, p, rng)?),
        None => None,
    };
    let mut layers = Vec::with_capacity(config.depth);
    for _ in 0..config.depth {
        let w = match (config.weight_mode, config.storage) {
            (WeightMode::HaarOrthogonal, Storage::Factored) => {
                LayerWeights::Factored(sample_haar_reflectors(d, rng)?)
            }
            (WeightMode::HaarOrthogonal, Storage::Dense) => {
                LayerWeights::Dense(sample_haar_orthogonal(d, rng)?.into_inner())
            }
            (WeightMode::RowNormalized, _) => LayerWeights::RowNormalized(row_normalized(
                sample_haar_orthogonal(d, rng)?.into_inner(),
            )?),
        };
        layers.push(w);
    }
    let output_adapter = match config.output_dim {
        Some(c) => Some(sample_semi_orthogonal(c, d, rng)?),
        None => None,
    };
    Network::from_parts(config.clone(), layers, None, input_adapter, output_adapter)
}

/// Whether batch-norm uses batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// States recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    /// Raw inputs when an input adapter is present.
    pub raw_input: Option<Array2<f64>>,
    /// Norms of the centered adapter outputs before rescaling to `sqrt(d)`.
    pub shell_norms: Vec<f64>,
    /// `x^(1) .. x^(L+1)`; empty if states were not kept.
    pub xs: Vec<Array2<f64>>,
    /// `h^(1) .. h^(L)`; empty if states were not kept.
    pub hs: Vec<Array2<f64>>,
    /// Batch-norm caches per layer when enabled and states were kept.
    pub bn: Vec<BnCache>,
    /// `norms[l][s] = |x_s^(l+1)|^2 / d` for `l = 0..=L`.
    pub norms: Vec<Vec<f64>>,
    /// Final output: the top adapter's logits, or `x^(L+1)`.
    pub output: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    pub fn depth(&self) -> usize {
        self.norms.len() - 1
    }

    pub fn states_kept(&self) -> bool {
        !self.xs.is_empty()
    }

    /// `x^(L+1)`.
    pub fn last_hidden(&self) -> Option<&Array2<f64>> {
        self.xs.last()
    }
}

/// What [`Network::backward`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Error signals, derivatives and dense weight gradients.
    Full,
    /// Only norms; weight-gradient norms come from batch Gram matrices.
    NormsOnly,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    /// `y^(l) = dE/dh^(l)`, one row per sample.
    pub y: Option<Array2<f64>>,
    /// `phi'` at the activation inputs.
    pub deriv: Option<Array2<f64>>,
    /// `dE/dW^(l) = sum_s y_s x_s^T`.
    pub grad_w: Option<Array2<f64>>,
    /// `dE/dV^(l)` in row-normalized mode.
    pub grad_raw: Option<Array2<f64>>,
    /// Batch-norm `(dE/dgamma, dE/dbeta)`.
    pub grad_bn: Option<(Array1<f64>, Array1<f64>)>,
    /// `|y_s^(l)|` per sample.
    pub y_norms: Vec<f64>,
    /// `|dE/dW^(l)|_F`.
    pub grad_fro: f64,
}

#[derive(Debug, Clone)]
pub struct BackwardTrace {
    pub mode: GradientMode,
    pub layers: Vec<LayerGrad>,
    /// `dE/dx^(L+1)`.
    pub g_top: Array2<f64>,
    pub grad_input_adapter: Option<Array2<f64>>,
    pub grad_output_adapter: Option<Array2<f64>>,
}

/// Gradients for every trainable parameter, in the layout
/// [`SgdMomentum`] consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `dE/dW`, or `dE/dV` in row-normalized mode.
    pub layers: Vec<Array2<f64>>,
    pub batchnorm: Vec<(Array1<f64>, Array1<f64>)>,
    pub input_adapter: Option<Array2<f64>>,
    pub output_adapter: Option<Array2<f64>>,
}

impl Gradients {
    /// First parameter group containing a non-finite entry.
    pub fn first_non_finite(&self) -> Option<String> {
        let bad2 = |a: &Array2<f64>| a.iter().any(|v| !v.is_finite());
        let bad1 = |a: &Array1<f64>| a.iter().any(|v| !v.is_finite());
        if let Some(l) = self.layers.iter().position(bad2) {
            return Some(format!("layer {}", l + 1));
        }
        if let Some(l) = self.batchnorm.iter().position(|(g, b)| bad1(g) || bad1(b)) {
            return Some(format!("batch-norm {}", l + 1));
        }
        if self.input_adapter.as_ref().is_some_and(bad2) {
            return Some("input adapter".into());
        }
        if self.output_adapter.as_ref().is_some_and(bad2) {
            return Some("output adapter".into());
        }
        None
    }

    /// Largest `|dE/dV|_F` (or `|dE/dW|_F`) over the hidden layers.
    pub fn max_layer_norm(&self) -> f64 {
        self.layers.iter().map(frobenius).fold(0.0, f64::max)
    }
}

/// Chain `dE/du` through `u = sqrt(d) c / |c|`, `c = z - mean(z)`:
/// `dE/dc = sqrt(d) / |c| (g - u (u.g) / d)`, then subtract the mean.
fn thin_shell_backward(u: &Array2<f64>, norms: &[f64], g_u: &Array2<f64>) -> Array2<f64> {
    let d = u.ncols() as f64;
    let mut g_z = g_u.clone();
    for ((mut g, u), &norm) in g_z
        .axis_iter_mut(Axis(0))
        .zip(u.axis_iter(Axis(0)))
        .zip(norms)
    {
        let proj = u.dot(&g) / d;
        g.scaled_add(-proj, &u);
        g *= d.sqrt() / norm;
        let mean = g.mean().unwrap_or(0.0);
        g -= mean;
    }
    g_z
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn row_sq_norms(a: &Array2<f64>) -> Vec<f64> {
    a.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect()
}

fn first_non_finite(a: &Array2<f64>) -> bool {
    a.iter().any(|v| !v.is_finite())
}

impl Network {
    /// Assemble a network from explicit parameters.
    pub fn from_parts(
        config: NetworkConfig,
        layers: Vec<LayerWeights>,
        batchnorm: Option<Vec<BatchNorm>>,
        input_adapter: Option<Array2<f64>>,
        output_adapter: Option<Array2<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.width;
        if layers.len() != config.depth {
            return Err(Error::DimensionMismatch {
                what: "layer count",
                expected: config.depth,
                got: layers.len(),
            });
        }
        for w in &layers {
            let shape = match w {
                LayerWeights::Dense(w) => w.dim(),
                LayerWeights::Factored(h) => (h.dim(), h.dim()),
                LayerWeights::RowNormalized(p) => p.weights().dim(),
            };
            if shape != (d, d) {
                return Err(Error::DimensionMismatch {
                    what: "layer weights",
                    expected: d,
                    got: if shape.0 != d { shape.0 } else { shape.1 },
                });
            }
        }
        let check = |a: &Option<Array2<f64>>, dim: Option<usize>, rows: bool, what| match (a, dim) {
            (None, None) => Ok(()),
            (Some(m), Some(k)) => {
                let want = if rows { (d, k) } else { (k, d) };
                if m.dim() == want {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch {
                        what,
                        expected: want.0 * want.1,
                        got: m.len(),
                    })
                }
            }
            _ => Err(Error::invalid(format!(
                "{what} presence does not match config"
            ))),
        };
        check(&input_adapter, config.input_dim, true, "input adapter")?;
        check(&output_adapter, config.output_dim, false, "output adapter")?;
        let batchnorm = match batchnorm {
            Some(bn) => {
                if !config.batchnorm || bn.len() != config.depth {
                    return Err(Error::invalid("batch-norm state does not match config"));
                }
                bn
            }
            None if config.batchnorm => (0..config.depth).map(|_| BatchNorm::new(d)).collect(),
            None => Vec::new(),
        };
        Ok(Self {
            activation: config.layer_activation(),
            config,
            layers,
            batchnorm,
            input_adapter,
            output_adapter,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn activation(&self) -> &AffineActivation {
        &self.activation
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerWeights] {
        &mut self.layers
    }

    pub fn batchnorm(&self) -> &[BatchNorm] {
        &self.batchnorm
    }

    pub fn batchnorm_mut(&mut self) -> &mut [BatchNorm] {
        &mut self.batchnorm
    }

    pub fn input_adapter(&self) -> Option<&Array2<f64>> {
        self.input_adapter.as_ref()
    }

    pub fn input_adapter_mut(&mut self) -> Option<&mut Array2<f64>> {
        self.input_adapter.as_mut()
    }

    pub fn output_adapter(&self) -> Option<&Array2<f64>> {
        self.output_adapter.as_ref()
    }

    pub fn output_adapter_mut(&mut self) -> Option<&mut Array2<f64>> {
        self.output_adapter.as_mut()
    }

    /// Largest `|W^T W - I|_max` over the hidden layers.
    pub fn max_orthogonality_defect(&self) -> f64 {
        self.layers
            .iter()
            .map(|w| orthogonality_defect(w.to_dense().view()))
            .fold(0.0, f64::max)
    }

    /// Forward pass recording every state.
    pub fn forward(&self, batch: &Array2<f64>, mode: Mode) -> Result<ForwardTrace> {
        self.forward_with(batch, mode, true)
    }

    /// Forward pass that keeps only norms and the output.
    pub fn forward_norms(&self, batch: &Array2<f64>, mode: Mode) -> Result<ForwardTrace> {
        self.forward_with(batch, mode, false)
    }

    fn forward_with(&self, batch: &Array2<f64>, mode: Mode, keep: bool) -> Result<ForwardTrace> {
        let d = self.config.width;
        if batch.ncols() != self.config.input_width() {
            return Err(Error::DimensionMismatch {
                what: "input width",
                expected: self.config.input_width(),
                got: batch.ncols(),
            });
        }
        if batch.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if first_non_finite(batch) {
            return Err(Error::NonFinite {
                location: "network input".into(),
                value: *batch.iter().find(|v| !v.is_finite()).unwrap(),
            });
        }
        let (raw_input, shell_norms, mut x) = match &self.input_adapter {
            Some(u) => {
                let z = batch.dot(&u.t());
                if first_non_finite(&z) {
                    return Err(Error::Overflow { layer: 0 });
                }
                let mut x = Array2::zeros(z.raw_dim());
                let mut norms = Vec::with_capacity(z.nrows());
                for (i, (src, dst)) in z
                    .axis_iter(Axis(0))
                    .zip(x.axis_iter_mut(Axis(0)))
                    .enumerate()
                {
                    norms.push(
                        thin_shell_row(src, dst, d).ok_or(Error::ZeroVarianceRow { row: i })?,
                    );
                }
                (keep.then(|| batch.to_owned()), norms, x)
            }
            None => (None, Vec::new(), batch.as_standard_layout().into_owned()),
        };
        let inv_d = 1.0 / d as f64;
        let mut norms = Vec::with_capacity(self.depth() + 1);
        norms.push(row_sq_norms(&x).into_iter().map(|v| v * inv_d).collect());
        let mut xs = Vec::new();
        let mut hs = Vec::new();
        let mut bn = Vec::new();
        for (l, w) in self.layers.iter().enumerate() {
            let h = w.apply(&x);
            let next = match self.batchnorm.get(l) {
                Some(norm) => {
                    let (out, cache) = norm.forward(&h, mode == Mode::Train);
                    if keep {
                        bn.push(cache);
                    }
                    out.mapv(|v| self.activation.value(v))
                }
                None => h.mapv(|v| self.activation.value(v)),
            };
            if first_non_finite(&next) || first_non_finite(&h) {
                return Err(Error::Overflow { layer: l + 1 });
            }
            norms.push(row_sq_norms(&next).into_iter().map(|v| v * inv_d).collect());
            if keep {
                xs.push(x);
                hs.push(h);
            }
            x = next;
        }
        let output = match &self.output_adapter {
            Some(o) => {
                let out = x.dot(&o.t());
                if first_non_finite(&out) {
                    return Err(Error::Overflow {
                        layer: self.depth() + 1,
                    });
                }
                out
            }
            None => x.clone(),
        };
        if keep {
            xs.push(x);
        }
        Ok(ForwardTrace {
            mode,
            raw_input,
            shell_norms,
            xs,
            hs,
            bn,
            norms,
            output,
        })
    }

    /// Fold the batch statistics recorded in a training trace into the
    /// batch-norm running averages.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace) {
        if trace.mode != Mode::Train {
            return;
        }
        for (norm, cache) in self.batchnorm.iter_mut().zip(&trace.bn) {
            norm.update_running(cache);
        }
    }

    /// Backpropagate `g_out = dE/d output` through a trace of this network.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        g_out: &Array2<f64>,
        mode: GradientMode,
    ) -> Result<BackwardTrace> {
        if !trace.states_kept() {
            return Err(Error::invalid("trace was recorded without states"));
        }
        if trace.hs.len() != self.depth()
            || (!self.batchnorm.is_empty() && trace.bn.len() != self.depth())
        {
            return Err(Error::DimensionMismatch {
                what: "trace depth",
                expected: self.depth(),
                got: trace.hs.len(),
            });
        }
        if g_out.dim() != trace.output.dim() {
            return Err(Error::DimensionMismatch {
                what: "top gradient",
                expected: trace.output.len(),
                got: g_out.len(),
            });
        }
        let x_top = trace.last_hidden().expect("states kept");
        let (g_top, grad_output_adapter) = match &self.output_adapter {
            Some(o) => (g_out.dot(o), Some(g_out.t().dot(x_top))),
            None => (g_out.to_owned(), None),
        };
        let full = mode == GradientMode::Full;
        let mut layers = Vec::with_capacity(self.depth());
        let mut g_x = g_top.clone();
        for l in (0..self.depth()).rev() {
            let h = &trace.hs[l];
            let x = &trace.xs[l];
            let (act_in, cache) = match self.batchnorm.get(l) {
                Some(norm) => {
                    let cache = &trace.bn[l];
                    (&cache.normalized * &norm.gamma + &norm.beta, Some(cache))
                }
                None => (h.clone(), None),
            };
            let deriv = act_in.mapv(|v| self.activation.derivative(v));
            let g_act = &g_x * &deriv;
            let (y, grad_bn) = match (self.batchnorm.get(l), cache) {
                (Some(norm), Some(cache)) => {
                    let (g_h, g_gamma, g_beta) = norm.backward(&g_act, cache);
                    (g_h, Some((g_gamma, g_beta)))
                }
                _ => (g_act, None),
            };
            if first_non_finite(&y) {
                return Err(Error::NonFiniteGradient {
                    what: format!("error signal at layer {}", l + 1),
                });
            }
            let y_norms: Vec<f64> = row_sq_norms(&y).into_iter().map(f64::sqrt).collect();
            let w = &self.layers[l];
            let next_g = (l > 0 || self.input_adapter.is_some()).then(|| w.apply_transpose(&y));
            let (grad_w, grad_raw, grad_fro) = if full {
                let gw = y.t().dot(x);
                let fro = frobenius(&gw);
                let raw = match w {
                    LayerWeights::RowNormalized(p) => Some(p.raw_gradient(&gw)),
                    _ => None,
                };
                (Some(gw), raw, fro)
            } else {
                // |sum_s y_s x_s^T|_F^2 = sum_{s,t} (y_s.y_t)(x_s.x_t)
                let gy = y.dot(&y.t());
                let gx = x.dot(&x.t());
                let fro2: f64 = gy.iter().zip(gx.iter()).map(|(a, b)| a * b).sum();
                (None, None, fro2.max(0.0).sqrt())
            };
            layers.push(LayerGrad {
                y: full.then(|| y.clone()),
                deriv: full.then_some(deriv),
                grad_w,
                grad_raw,
                grad_bn,
                y_norms,
                grad_fro,
            });
            if let Some(g) = next_g {
                g_x = g;
            }
        }
        layers.reverse();
        let grad_input_adapter = match (&self.input_adapter, &trace.raw_input) {
            (Some(_), Some(raw)) => {
                let g_z = thin_shell_backward(&trace.xs[0], &trace.shell_norms, &g_x);
                Some(g_z.t().dot(raw))
            }
            _ => None,
        };
        Ok(BackwardTrace {
            mode,
            layers,
            g_top,
            grad_input_adapter,
            grad_output_adapter,
        })
    }
}

impl BackwardTrace {
    /// Collect parameter gradients; requires [`GradientMode::Full`].
    pub fn gradients(&self) -> Result<Gradients> {
        if self.mode != GradientMode::Full {
            return Err(Error::invalid(
                "parameter gradients need a full backward pass",
            ));
        }
        let layers = self
            .layers
            .iter()
            .map(|g| {
                g.grad_raw
                    .clone()
                    .or_else(|| g.grad_w.clone())
                    .expect("full mode keeps weight gradients")
            })
            .collect();
        let batchnorm = self
            .layers
            .iter()
            .filter_map(|g| g.grad_bn.clone())
            .collect();
        Ok(Gradients {
            layers,
            batchnorm,
            input_adapter: self.grad_input_adapter.clone(),
            output_adapter: self.grad_output_adapter.clone(),
        })
    }

    /// `|y^(l)|` for sample `s`, layers `1..=L`.
    pub fn y_norms(&self, s: usize) -> Vec<f64> {
        self.layers.iter().map(|g| g.y_norms[s]).collect()
    }
}
