//! The composed model `h(f(X))`: the non-label party owns the MLP `f`, the
//! label party owns the logit head `h`. The backward pass is split at the cut
//! layer so the per-example cut gradients can be inspected (and perturbed)
//! before they reach `f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic loss `log(1 + exp(-logit)) + (1 - y) * logit`, stable for large |logit|.
pub fn loss(logit: f64, y: f64) -> f64 {
    softplus(-logit) + (1.0 - y) * logit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Dense layer `act(W x + b)` with `W` stored `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(spec: LayerSpec) -> Self {
        Layer {
            spec,
            weights: Matrix::zeros(spec.out_dim, spec.in_dim),
            bias: vec![0.0; spec.out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(spec: LayerSpec, rng: &mut RngStream) -> Self {
        let mut layer = Layer::zeros(spec);
        let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
        for w in layer.weights.as_mut_slice() {
            *w = (2.0 * rng.uniform() - 1.0) * limit;
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

/// Per-layer parameter gradients, same shapes as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Cached activations of one MLP forward pass over a batch.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub post: Vec<Matrix>,
}

impl MlpTrace {
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }
}

pub struct MlpBackward {
    pub grads: MlpGrads,
    /// Per-example gradient with respect to the MLP input.
    pub input_grad: Matrix,
    /// Per-example gradient with respect to each layer's post-activation output.
    pub activation_grads: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("mlp layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].spec.out_dim != pair[1].spec.in_dim {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].spec.out_dim,
                    actual: pair[1].spec.in_dim,
                    context: "consecutive layer dims",
                });
            }
        }
        if layers.iter().any(|l| l.spec.in_dim == 0 || l.spec.out_dim == 0) {
            return Err(Error::InvalidParameter("layer dims must be >= 1".into()));
        }
        Ok(Mlp { layers })
    }

    pub fn glorot(specs: &[LayerSpec], rng: &mut RngStream) -> Result<Self> {
        Mlp::new(specs.iter().map(|&s| Layer::glorot(s, rng)).collect())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn forward(&self, input: &Matrix) -> Result<MlpTrace> {
        self.forward_from(0, input)
    }

    /// Forward pass starting at layer `start`; `input` must have that layer's input width.
    pub fn forward_from(&self, start: usize, input: &Matrix) -> Result<MlpTrace> {
        let expected = self.layers[start].spec.in_dim;
        if input.cols() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: input.cols(),
                context: "mlp input width",
            });
        }
        let b = input.rows();
        let mut pre = Vec::with_capacity(self.layers.len() - start);
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len() - start);
        for layer in &self.layers[start..] {
            let x = post.last().unwrap_or(input);
            let mut z = Matrix::zeros(b, layer.spec.out_dim);
            let mut a = Matrix::zeros(b, layer.spec.out_dim);
            for r in 0..b {
                let xr = x.row(r);
                let zr = z.row_mut(r);
                for (o, zo) in zr.iter_mut().enumerate() {
                    *zo = layer.bias[o] + crate::numeric::dot(layer.weights.row(o), xr);
                }
                let ar = a.row_mut(r);
                for (ao, &zo) in ar.iter_mut().zip(z.row(r)) {
                    *ao = layer.spec.activation.apply(zo);
                }
            }
            pre.push(z);
            post.push(a);
        }
        Ok(MlpTrace {
            input: input.clone(),
            pre,
            post,
        })
    }

    /// Reverse pass. `grad_out` holds per-example gradients w.r.t. the MLP
    /// output; parameter gradients are the batch sum scaled by `param_scale`.
    pub fn backward(&self, trace: &MlpTrace, grad_out: &Matrix, param_scale: f64) -> Result<MlpBackward> {
        let b = trace.input.rows();
        if grad_out.rows() != b || grad_out.cols() != self.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: b * self.out_dim(),
                actual: grad_out.rows() * grad_out.cols(),
                context: "mlp output gradient shape",
            });
        }
        let n = self.layers.len();
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(n);
        let mut activation_grads = vec![Matrix::zeros(0, 0); n];
        let mut upstream = grad_out.clone();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let input = if k == 0 { &trace.input } else { &trace.post[k - 1] };
            let (z, a) = (&trace.pre[k], &trace.post[k]);
            let mut delta = upstream.clone();
            for r in 0..b {
                let dr = delta.row_mut(r);
                for ((d, &zo), &ao) in dr.iter_mut().zip(z.row(r)).zip(a.row(r)) {
                    *d *= layer.spec.activation.derivative(zo, ao);
                }
            }
            let mut gw = Matrix::zeros(layer.spec.out_dim, layer.spec.in_dim);
            let mut gb = vec![0.0; layer.spec.out_dim];
            let mut down = Matrix::zeros(b, layer.spec.in_dim);
            for r in 0..b {
                let dr = delta.row(r);
                let xr = input.row(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    crate::numeric::axpy(d, xr, gw.row_mut(o));
                    crate::numeric::axpy(d, layer.weights.row(o), down.row_mut(r));
                }
            }
            for v in gw.as_mut_slice() {
                *v *= param_scale;
            }
            for v in &mut gb {
                *v *= param_scale;
            }
            grads.push(LayerGrad { weights: gw, bias: gb });
            activation_grads[k] = upstream;
            upstream = down;
        }
        grads.reverse();
        Ok(MlpBackward {
            grads: MlpGrads { layers: grads },
            input_grad: upstream,
            activation_grads,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters flattened as (weights row-major, bias) per layer, in order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: params.len(),
                context: "flat parameter vector",
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights.as_mut_slice().copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }
}

/// `f` is held by the non-label party, `h` (ending in a single logit) by the label party.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitNet {
    pub f: Mlp,
    pub h: Mlp,
}

impl SplitNet {
    pub fn new(f: Mlp, h: Mlp) -> Result<Self> {
        if f.out_dim() != h.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: f.out_dim(),
                actual: h.in_dim(),
                context: "cut layer width",
            });
        }
        if h.out_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: h.out_dim(),
                context: "h must end in a single logit",
            });
        }
        Ok(SplitNet { f, h })
    }

    /// Builds a Glorot-initialized net from a flat layer list split at `cut_index`
    /// (number of layers owned by `f`).
    pub fn from_specs(specs: &[LayerSpec], cut_index: usize, rng: &mut RngStream) -> Result<Self> {
        if cut_index == 0 || cut_index >= specs.len() {
            return Err(Error::InvalidParameter(format!(
                "cut index {cut_index} must leave both f and h nonempty ({} layers)",
                specs.len()
            )));
        }
        let f = Mlp::glorot(&specs[..cut_index], rng)?;
        let h = Mlp::glorot(&specs[cut_index..], rng)?;
        SplitNet::new(f, h)
    }

    pub fn cut_dim(&self) -> usize {
        self.f.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.f.in_dim()
    }

    /// Width of the first hidden layer of `f`, i.e. the first-layer probe.
    pub fn first_hidden_dim(&self) -> usize {
        self.f.layers[0].spec.out_dim
    }
}

#[derive(Debug, Clone)]
pub struct ForwardState {
    pub f_trace: MlpTrace,
    pub h_trace: MlpTrace,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardState {
    pub fn cut_features(&self) -> &Matrix {
        self.f_trace.output()
    }

    pub fn batch_size(&self) -> usize {
        self.logits.len()
    }
}

pub fn forward(net: &SplitNet, x: &Matrix) -> Result<ForwardState> {
    let f_trace = net.f.forward(x)?;
    let h_trace = net.h.forward(f_trace.output())?;
    let logits: Vec<f64> = h_trace.output().iter_rows().map(|r| r[0]).collect();
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let probs = logits.iter().map(|&l| sigmoid(l)).collect();
    Ok(ForwardState {
        f_trace,
        h_trace,
        logits,
        probs,
    })
}

pub fn mean_loss(state: &ForwardState, y: &[f64]) -> f64 {
    state.logits.iter().zip(y).map(|(&l, &t)| loss(l, t)).sum::<f64>() / y.len() as f64
}

/// Output of the label party's backward pass.
pub struct LabelBackward {
    /// Per-example `dL_j / d f(X_j)`, one row per example.
    pub cut_gradients: Matrix,
    /// Batch-mean gradients of `h`'s parameters.
    pub h_grads: MlpGrads,
}

fn check_labels(y: &[f64], b: usize) -> Result<()> {
    if y.len() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            actual: y.len(),
            context: "label count",
        });
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidLabel(bad));
    }
    Ok(())
}

pub fn label_backward(net: &SplitNet, state: &ForwardState, y: &[f64]) -> Result<LabelBackward> {
    let b = state.batch_size();
    check_labels(y, b)?;
    // dL/dlogit = sigmoid(logit) - y, per example
    let dlogit: Vec<f64> = state.probs.iter().zip(y).map(|(p, t)| p - t).collect();
    let grad_out = Matrix::from_vec(b, 1, dlogit)?;
    let back = net.h.backward(&state.h_trace, &grad_out, 1.0 / b as f64)?;
    Ok(LabelBackward {
        cut_gradients: back.input_grad,
        h_grads: back.grads,
    })
}

pub fn cut_gradients(net: &SplitNet, state: &ForwardState, y: &[f64]) -> Result<Matrix> {
    Ok(label_backward(net, state, y)?.cut_gradients)
}

pub struct NonLabelBackward {
    /// Batch-mean gradients of `f`'s parameters; linear in the received matrix.
    pub f_grads: MlpGrads,
    /// Per-example gradients at the first hidden layer's activation output.
    pub first_layer_gradients: Matrix,
}

/// Continues backpropagation into `f` from the (possibly perturbed) cut gradients.
pub fn backprop_nonlabel(net: &SplitNet, state: &ForwardState, received: &Matrix) -> Result<NonLabelBackward> {
    let b = state.batch_size();
    if received.rows() != b || received.cols() != net.cut_dim() {
        return Err(Error::DimensionMismatch {
            expected: b * net.cut_dim(),
            actual: received.rows() * received.cols(),
            context: "received cut gradient shape",
        });
    }
    let mut back = net.f.backward(&state.f_trace, received, 1.0 / b as f64)?;
    let first_layer_gradients = back.activation_grads.swap_remove(0);
    Ok(NonLabelBackward {
        f_grads: back.grads,
        first_layer_gradients,
    })
}

/// Full clean backward pass of both parties.
pub struct GradientBundle {
    pub cut_gradients: Matrix,
    pub first_layer_gradients: Matrix,
    pub f_grads: MlpGrads,
    pub h_grads: MlpGrads,
}

pub fn backward(net: &SplitNet, state: &ForwardState, y: &[f64]) -> Result<GradientBundle> {
    let label = label_backward(net, state, y)?;
    let nonlabel = backprop_nonlabel(net, state, &label.cut_gradients)?;
    Ok(GradientBundle {
        cut_gradients: label.cut_gradients,
        first_layer_gradients: nonlabel.first_layer_gradients,
        f_grads: nonlabel.f_grads,
        h_grads: label.h_grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerSpec {
    pub fn adam(lr: f64) -> Self {
        OptimizerSpec::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Optimizer state for one MLP. Adam moments persist across `apply_update` calls.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Self {
        Optimizer {
            spec,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn spec(&self) -> OptimizerSpec {
        self.spec
    }
}

pub fn apply_update(net: &mut Mlp, grads: &MlpGrads, opt: &mut Optimizer) -> Result<()> {
    let g = grads.flat();
    let mut params = net.params_flat();
    if g.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: g.len(),
            context: "gradient vs parameter count",
        });
    }
    match opt.spec {
        OptimizerSpec::Sgd { lr } => {
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= lr * gi;
            }
        }
        OptimizerSpec::Adam { lr, beta1, beta2, eps } => {
            if opt.m.len() != params.len() {
                opt.m = vec![0.0; params.len()];
                opt.v = vec![0.0; params.len()];
            }
            opt.step += 1;
            let t = opt.step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            for i in 0..params.len() {
                opt.m[i] = beta1 * opt.m[i] + (1.0 - beta1) * g[i];
                opt.v[i] = beta2 * opt.v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = opt.m[i] / bc1;
                let v_hat = opt.v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    net.set_params_flat(&params)
}
