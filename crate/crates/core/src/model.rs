//! Feedforward ReLU network with explicit reverse-mode gradients.
//!
//! Layout: `input -> [dense -> relu -> dropout] x H -> dense -> softmax`. The
//! embedding `h(x)` is the last hidden ReLU activation, taken before its
//! dropout mask, i.e. the representation fed into the final linear map.
//! Dropout is inverted (kept units are scaled by `1 / (1 - rate)`), so eval
//! mode applies no mask and no rescaling.
//!
//! Dense weights are stored row-major with shape `(in_dim, out_dim)`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::FeatureScaler;
use crate::seeding::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    /// Widths of the ReLU layers; the last one is the embedding width.
    pub hidden_dims: Vec<usize>,
    pub class_count: usize,
    pub dropout_rate: f64,
    /// Coefficient of the `sum W^2` penalty on dense weights (biases excluded).
    pub weight_decay: f64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![64, 32],
            class_count,
            dropout_rate: 0.5,
            weight_decay: 1e-4,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        *self.hidden_dims.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.class_count == 0 {
            return Err(Error::invalid("input_dim and class_count must be positive"));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::invalid("at least one hidden layer is required for the embedding"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden layers must have positive width"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_dims);
        widths.push(self.class_count);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.out_dim..(i + 1) * self.out_dim];
            for (zo, w) in z.iter_mut().zip(row) {
                *zo += xi * w;
            }
        }
        z
    }

    /// `W * dz`, the gradient flowing back into the layer input.
    fn backward_input(&self, dz: &[f64]) -> Vec<f64> {
        (0..self.in_dim)
            .map(|i| {
                let row = &self.weights[i * self.out_dim..(i + 1) * self.out_dim];
                row.iter().zip(dz).map(|(w, d)| w * d).sum()
            })
            .collect()
    }
}

/// Network parameters (also used to hold gradients of the same shape).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Dense>,
}

impl Params {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            layers: spec.layer_dims().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect()
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters in a fixed flat order: per layer, weights then bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn get(&self, k: usize) -> f64 {
        *self.iter().nth(k).expect("parameter index in range")
    }

    pub fn set(&mut self, k: usize, v: f64) {
        *self.iter_mut().nth(k).expect("parameter index in range") = v;
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// `sum W^2` over dense weights, biases excluded.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init(spec: &MlpSpec, seed: u64) -> Result<Params> {
    spec.validate()?;
    let mut params = Params::zeros(spec);
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let mut rng = rng_for(seed, &[0x1417, k as u64]);
        let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..=limit);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks are drawn from a stream seeded by `seed`, so a trace is a
    /// deterministic function of `(params, x, seed)`.
    Train { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input of each dense layer (the network input, then each masked hidden activation).
    pub layer_inputs: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pub pre: Vec<Vec<f64>>,
    /// Hidden ReLU activations before dropout.
    pub hidden: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers per hidden layer (train mode only).
    pub masks: Vec<Option<Vec<f64>>>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ForwardTrace {
    pub fn embedding(&self) -> &[f64] {
        self.hidden.last().expect("network has a hidden layer")
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.probabilities)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn forward(spec: &MlpSpec, params: &Params, x: &[f64], mode: Mode) -> Result<ForwardTrace> {
    if x.len() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input to forward"));
    }
    if params.shapes() != spec.layer_dims() {
        return Err(Error::invalid("parameter shapes do not match the network spec"));
    }
    let n_hidden = spec.hidden_dims.len();
    let mut rng = match mode {
        Mode::Train { seed } => Some(rng_for(seed, &[0xD809])),
        Mode::Eval => None,
    };
    let keep = 1.0 - spec.dropout_rate;
    let mut layer_inputs = Vec::with_capacity(n_hidden + 1);
    let mut pre = Vec::with_capacity(n_hidden);
    let mut hidden = Vec::with_capacity(n_hidden);
    let mut masks = Vec::with_capacity(n_hidden);
    let mut a = x.to_vec();
    for layer in &params.layers[..n_hidden] {
        let z = layer.forward(&a);
        let h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        let mask = match rng.as_mut() {
            Some(rng) if spec.dropout_rate > 0.0 => Some(
                (0..h.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect::<Vec<f64>>(),
            ),
            _ => None,
        };
        let next = match &mask {
            Some(m) => h.iter().zip(m).map(|(v, m)| v * m).collect(),
            None => h.clone(),
        };
        layer_inputs.push(std::mem::replace(&mut a, next));
        pre.push(z);
        hidden.push(h);
        masks.push(mask);
    }
    let logits = params.layers[n_hidden].forward(&a);
    layer_inputs.push(a);
    let probabilities = softmax(&logits);
    Ok(ForwardTrace {
        layer_inputs,
        pre,
        hidden,
        masks,
        logits,
        probabilities,
    })
}

/// Loss gradients arriving at one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Upstream {
    /// `dL/dh(x)`; empty means zero.
    pub d_embedding: Vec<f64>,
    /// `dL/dlogits`; empty means zero.
    pub d_logits: Vec<f64>,
}

impl Upstream {
    pub fn zero() -> Self {
        Self {
            d_embedding: Vec::new(),
            d_logits: Vec::new(),
        }
    }
}

/// Converts a gradient with respect to softmax probabilities into one with
/// respect to logits: `p * (g - <p, g>)`.
pub fn probability_grad_to_logits(probabilities: &[f64], d_prob: &[f64]) -> Vec<f64> {
    let inner: f64 = probabilities.iter().zip(d_prob).map(|(p, g)| p * g).sum();
    probabilities.iter().zip(d_prob).map(|(p, g)| p * (g - inner)).collect()
}

/// Accumulates exact parameter gradients over all traces and adds the
/// weight-decay gradient `2 * decay * W` once.
pub fn backward(spec: &MlpSpec, params: &Params, traces: &[ForwardTrace], upstream: &[Upstream]) -> Result<Params> {
    if traces.len() != upstream.len() {
        return Err(Error::invalid(format!(
            "{} traces but {} upstream gradients",
            traces.len(),
            upstream.len()
        )));
    }
    let n_hidden = spec.hidden_dims.len();
    let mut grad = params.zeros_like();
    for (trace, up) in traces.iter().zip(upstream) {
        if trace.hidden.len() != n_hidden || trace.logits.len() != spec.class_count {
            return Err(Error::invalid("trace does not match the network"));
        }
        if !up.d_logits.is_empty() && up.d_logits.len() != spec.class_count {
            return Err(Error::invalid("logit gradient has the wrong length"));
        }
        if !up.d_embedding.is_empty() && up.d_embedding.len() != spec.embedding_dim() {
            return Err(Error::invalid("embedding gradient has the wrong length"));
        }

        // output layer
        let out = &params.layers[n_hidden];
        let mut d_a = if up.d_logits.is_empty() {
            vec![0.0; out.in_dim]
        } else {
            accumulate(&mut grad.layers[n_hidden], &trace.layer_inputs[n_hidden], &up.d_logits);
            out.backward_input(&up.d_logits)
        };

        for k in (0..n_hidden).rev() {
            let mut d_h = match &trace.masks[k] {
                Some(m) => d_a.iter().zip(m).map(|(d, m)| d * m).collect(),
                None => d_a,
            };
            if k == n_hidden - 1 && !up.d_embedding.is_empty() {
                for (d, e) in d_h.iter_mut().zip(&up.d_embedding) {
                    *d += e;
                }
            }
            let d_z: Vec<f64> = d_h
                .iter()
                .zip(&trace.pre[k])
                .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
                .collect();
            accumulate(&mut grad.layers[k], &trace.layer_inputs[k], &d_z);
            d_a = if k > 0 {
                params.layers[k].backward_input(&d_z)
            } else {
                Vec::new()
            };
        }
    }
    if spec.weight_decay > 0.0 {
        for (g, p) in grad.layers.iter_mut().zip(&params.layers) {
            for (gw, w) in g.weights.iter_mut().zip(&p.weights) {
                *gw += 2.0 * spec.weight_decay * w;
            }
        }
    }
    Ok(grad)
}

fn accumulate(g: &mut Dense, input: &[f64], d_out: &[f64]) {
    for (i, xi) in input.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        let row = &mut g.weights[i * g.out_dim..(i + 1) * g.out_dim];
        for (w, d) in row.iter_mut().zip(d_out) {
            *w += xi * d;
        }
    }
    for (b, d) in g.bias.iter_mut().zip(d_out) {
        *b += d;
    }
}

/// `decay * sum W^2`, the loss term whose gradient [`backward`] adds.
pub fn weight_decay_penalty(spec: &MlpSpec, params: &Params) -> f64 {
    spec.weight_decay * params.weight_sq_norm()
}

/// A trained network together with the input standardization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: MlpSpec,
    pub params: Params,
    pub scaler: Option<FeatureScaler>,
}

const MAGIC: &str = "diagnet-mlp 1";

impl Model {
    /// Class probabilities for a raw (unscaled) sample.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scaled;
        let input = match &self.scaler {
            Some(s) => {
                if x.len() != s.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: s.dim(),
                        actual: x.len(),
                    });
                }
                scaled = s.apply(x);
                &scaled
            }
            None => x,
        };
        Ok(forward(&self.spec, &self.params, input, Mode::Eval)?.probabilities)
    }

    /// Plain-text serialization: a header with the network shape and optional
    /// scaler, then one `weights`/`bias` line pair per layer. Floats use the
    /// shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "input_dim {}", self.spec.input_dim);
        let hidden: Vec<String> = self.spec.hidden_dims.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "hidden {}", hidden.join(" "));
        let _ = writeln!(s, "class_count {}", self.spec.class_count);
        let _ = writeln!(s, "dropout_rate {}", self.spec.dropout_rate);
        let _ = writeln!(s, "weight_decay {}", self.spec.weight_decay);
        match &self.scaler {
            None => {
                let _ = writeln!(s, "scaler none");
            }
            Some(sc) => {
                let _ = writeln!(s, "scaler {}", sc.dim());
                let _ = writeln!(s, "mean {}", join(&sc.mean));
                let _ = writeln!(s, "inv_sd {}", join(&sc.inv_sd));
            }
        }
        for (k, l) in self.params.layers.iter().enumerate() {
            let _ = writeln!(s, "layer {k} {} {}", l.in_dim, l.out_dim);
            let _ = writeln!(s, "weights {}", join(&l.weights));
            let _ = writeln!(s, "bias {}", join(&l.bias));
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let fail = |message: String| Error::Format {
            path: origin.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        let mut next = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| fail(format!("missing {key} line")))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.map(str::to_string).collect()),
                _ => Err(fail(format!("expected {key:?}, found {line:?}"))),
            }
        };
        let magic = next("diagnet-mlp")?;
        if magic != ["1"] {
            return Err(fail("unsupported model file version".into()));
        }
        let one_usize = |v: Vec<String>, key: &str| -> Result<usize> {
            match v.as_slice() {
                [x] => x.parse().map_err(|_| fail(format!("bad {key}"))),
                _ => Err(fail(format!("bad {key}"))),
            }
        };
        let floats = |v: Vec<String>, key: &str| -> Result<Vec<f64>> {
            v.iter()
                .map(|x| x.parse::<f64>().map_err(|_| fail(format!("bad number in {key}"))))
                .collect()
        };
        let input_dim = one_usize(next("input_dim")?, "input_dim")?;
        let hidden_dims = next("hidden")?
            .iter()
            .map(|x| x.parse().map_err(|_| fail("bad hidden width".into())))
            .collect::<Result<Vec<usize>>>()?;
        let class_count = one_usize(next("class_count")?, "class_count")?;
        let dropout_rate = floats(next("dropout_rate")?, "dropout_rate")?;
        let weight_decay = floats(next("weight_decay")?, "weight_decay")?;
        let spec = MlpSpec {
            input_dim,
            hidden_dims,
            class_count,
            dropout_rate: *dropout_rate.first().ok_or_else(|| fail("bad dropout_rate".into()))?,
            weight_decay: *weight_decay.first().ok_or_else(|| fail("bad weight_decay".into()))?,
        };
        spec.validate()?;
        let scaler_head = next("scaler")?;
        let scaler = if scaler_head == ["none"] {
            None
        } else {
            let dim = one_usize(scaler_head, "scaler")?;
            let mean = floats(next("mean")?, "mean")?;
            let inv_sd = floats(next("inv_sd")?, "inv_sd")?;
            if mean.len() != dim || inv_sd.len() != dim {
                return Err(fail("scaler length mismatch".into()));
            }
            Some(FeatureScaler { mean, inv_sd })
        };
        let mut layers = Vec::new();
        for (k, (in_dim, out_dim)) in spec.layer_dims().into_iter().enumerate() {
            let head = next("layer")?;
            if head != [k.to_string(), in_dim.to_string(), out_dim.to_string()] {
                return Err(fail(format!("layer {k} header does not match the network shape")));
            }
            let weights = floats(next("weights")?, "weights")?;
            let bias = floats(next("bias")?, "bias")?;
            if weights.len() != in_dim * out_dim || bias.len() != out_dim {
                return Err(fail(format!("layer {k} has the wrong number of values")));
            }
            layers.push(Dense {
                in_dim,
                out_dim,
                weights,
                bias,
            });
        }
        Ok(Self {
            spec,
            params: Params { layers },
            scaler,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
