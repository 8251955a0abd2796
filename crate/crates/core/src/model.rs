//! Tiny MLP classifier with hand-written backpropagation.
//!
//! The backbone is a stack of ReLU layers ending in the feature layer; a
//! linear head maps features to logits, followed by a softmax. Features are
//! the post-activation output of the last backbone layer.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{param_err, Error, Result};
use crate::numerics::{softmax_unchecked, ClassDistribution, FeatureVector};

const MODEL_MAGIC: &str = "AGGMATCH-MODEL v1";

/// Layer widths of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    /// Hidden widths; the last one is the feature dimension.
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Result<Self> {
        if input_dim == 0 || classes == 0 {
            return param_err("input dimension and class count must be positive");
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return param_err("backbone needs at least one non-empty hidden layer");
        }
        Ok(Self { input_dim, hidden, classes })
    }

    pub fn feature_dim(&self) -> usize {
        *self.hidden.last().expect("validated non-empty")
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in self.hidden.iter().chain(std::iter::once(&self.classes)) {
            dims.push((w, fan_in));
            fan_in = w;
        }
        dims
    }
}

/// Dense layer, weights stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; out_dim * in_dim], bias: vec![0.0; out_dim] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().copied());
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// All trainable parameters of backbone and head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    arch: Architecture,
    layers: Vec<Dense>,
}

/// Result of a forward pass, including what backward needs.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub feature: FeatureVector,
    pub distribution: ClassDistribution,
    pub logits: Vec<f64>,
    /// Input of every layer: `x`, then each post-ReLU hidden activation.
    layer_inputs: Vec<Vec<f64>>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Dense>,
}

impl ModelState {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(out, fan_in)| {
                let mut layer = Dense::zeros(out, fan_in);
                let limit = (6.0 / (fan_in + out) as f64).sqrt();
                for w in &mut layer.weights {
                    *w = rng.random_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Self { arch, layers }
    }

    pub fn zeros(arch: Architecture) -> Self {
        let layers = arch.layer_dims().into_iter().map(|(o, i)| Dense::zeros(o, i)).collect();
        Self { arch, layers }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat view of every parameter, layer by layer, weights before biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn gradients(&self) -> Gradients {
        Gradients { layers: self.layers.iter().map(|l| Dense::zeros(l.out_dim, l.in_dim)).collect() }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardOutput> {
        if x.len() != self.arch.input_dim {
            return Err(Error::LengthMismatch { expected: self.arch.input_dim, actual: x.len() });
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        layer_inputs.push(x.to_vec());
        let mut buf = Vec::new();
        let (head, backbone) = self.layers.split_last().expect("at least one layer");
        for layer in backbone {
            layer.apply(layer_inputs.last().expect("non-empty"), &mut buf);
            let act: Vec<f64> = buf.iter().map(|v| v.max(0.0)).collect();
            layer_inputs.push(act);
        }
        let mut logits = Vec::new();
        head.apply(layer_inputs.last().expect("non-empty"), &mut logits);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        let distribution = ClassDistribution::from_vec_unchecked(softmax_unchecked(&logits, 1.0));
        let feature = FeatureVector::from_vec_unchecked(layer_inputs.last().expect("non-empty").clone());
        Ok(ForwardOutput { feature, distribution, logits, layer_inputs })
    }

    /// Accumulates the gradient of a loss given its gradient with respect to
    /// the logits and, optionally, the feature vector.
    pub fn backward_and_accumulate(
        &self,
        cache: &ForwardOutput,
        d_logits: &[f64],
        d_feature: Option<&[f64]>,
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.layer_inputs.len() != self.layers.len()
            || cache.layer_inputs[0].len() != self.arch.input_dim
            || grads.layers.len() != self.layers.len()
        {
            return param_err("forward cache or gradient buffer does not match this model");
        }
        if d_logits.len() != self.arch.classes {
            return Err(Error::LengthMismatch { expected: self.arch.classes, actual: d_logits.len() });
        }
        let mut upstream = d_logits.to_vec();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let input = &cache.layer_inputs[idx];
            let g = &mut grads.layers[idx];
            for (o, &d) in upstream.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if idx == 0 {
                break;
            }
            let mut down = vec![0.0; layer.in_dim];
            for (o, &d) in upstream.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (dv, &w) in down.iter_mut().zip(row) {
                    *dv += d * w;
                }
            }
            if idx == self.layers.len() - 1 {
                if let Some(df) = d_feature {
                    if df.len() != down.len() {
                        return Err(Error::LengthMismatch { expected: down.len(), actual: df.len() });
                    }
                    for (dv, f) in down.iter_mut().zip(df) {
                        *dv += f;
                    }
                }
            }
            // ReLU mask: the stored activation is positive exactly where the
            // pre-activation was.
            for (dv, &a) in down.iter_mut().zip(input) {
                if a <= 0.0 {
                    *dv = 0.0;
                }
            }
            upstream = down;
        }
        Ok(())
    }

    /// `θ ← θ − lr·g`. Refuses non-finite gradients and leaves `self` untouched.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return param_err(format!("learning rate must be non-negative, got {lr}"));
        }
        if grads.layers.len() != self.layers.len() {
            return param_err("gradient shape does not match model");
        }
        if let Some(bad) = grads.params().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {bad}")));
        }
        for (p, g) in self.params_mut().zip(grads.params()) {
            *p -= lr * g;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{MODEL_MAGIC}")?;
        let hidden: Vec<String> = self.arch.hidden.iter().map(|h| h.to_string()).collect();
        writeln!(out, "input {}", self.arch.input_dim)?;
        writeln!(out, "hidden {}", hidden.join(" "))?;
        writeln!(out, "classes {}", self.arch.classes)?;
        for (i, layer) in self.layers.iter().enumerate() {
            writeln!(out, "layer {i} {} {}", layer.out_dim, layer.in_dim)?;
            for row in layer.weights.chunks_exact(layer.in_dim) {
                writeln!(out, "{}", join_floats(row))?;
            }
            writeln!(out, "{}", join_floats(&layer.bias))?;
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut lines = LineReader::new(input);
        let magic = lines.next_line()?;
        if magic != MODEL_MAGIC {
            return Err(lines.error(format!("expected `{MODEL_MAGIC}`, found `{magic}`")));
        }
        let input_dim = lines.keyed_usizes("input")?;
        let hidden = lines.keyed_usizes("hidden")?;
        let classes = lines.keyed_usizes("classes")?;
        if input_dim.len() != 1 || classes.len() != 1 {
            return Err(lines.error("malformed architecture header".into()));
        }
        let arch = Architecture::new(input_dim[0], hidden, classes[0])?;
        let mut model = Self::zeros(arch);
        for i in 0..model.layers.len() {
            let header = lines.keyed_usizes("layer")?;
            let layer = &mut model.layers[i];
            if header != [i, layer.out_dim, layer.in_dim] {
                return Err(lines.error(format!("layer header {header:?} does not match architecture")));
            }
            for o in 0..layer.out_dim {
                let row = lines.floats(layer.in_dim)?;
                layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim].copy_from_slice(&row);
            }
            layer.bias = lines.floats(layer.out_dim)?;
        }
        let end = lines.next_line()?;
        if end != "end" {
            return Err(lines.error(format!("expected `end`, found `{end}`")));
        }
        Ok(model)
    }
}

impl Gradients {
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn zero(&mut self) {
        self.params_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.params_mut().for_each(|g| *g *= factor);
    }

    /// `self += other`.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.params_mut().zip(other.params()) {
            *a += b;
        }
    }
}

/// Exponential moving average of a [`ModelState`], used only to produce queue entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState(ModelState);

impl MomentumState {
    /// Starts as an exact copy.
    pub fn from_model(model: &ModelState) -> Self {
        Self(model.clone())
    }

    pub fn model(&self) -> &ModelState {
        &self.0
    }

    /// `θ_m ← λ_m·θ_m + (1 − λ_m)·θ`.
    pub fn update(&mut self, model: &ModelState, coefficient: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&coefficient) {
            return param_err(format!("momentum coefficient must lie in [0, 1], got {coefficient}"));
        }
        if model.arch != self.0.arch {
            return param_err("momentum and model architectures differ");
        }
        let keep = 1.0 - coefficient;
        for (m, p) in self.0.params_mut().zip(model.params()) {
            *m = coefficient * *m + keep * p;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        self.0.write_to(out)
    }

    pub fn read_from<R: BufRead>(input: &mut R) -> Result<Self> {
        ModelState::read_from(input).map(Self)
    }
}

pub(crate) fn join_floats(values: &[f64]) -> String {
    // `{:?}` prints the shortest representation that round-trips exactly.
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

/// Line-oriented reader for the text checkpoint formats, tracking byte offsets.
pub(crate) struct LineReader<'a, R: BufRead> {
    input: &'a mut R,
    offset: usize,
    buf: String,
}

impl<'a, R: BufRead> LineReader<'a, R> {
    pub(crate) fn new(input: &'a mut R) -> Self {
        Self { input, offset: 0, buf: String::new() }
    }

    pub(crate) fn error(&self, message: String) -> Error {
        Error::Parse { offset: self.offset, message }
    }

    pub(crate) fn next_line(&mut self) -> Result<String> {
        self.buf.clear();
        let n = self.input.read_line(&mut self.buf)?;
        if n == 0 {
            return Err(self.error("unexpected end of input".into()));
        }
        self.offset += n;
        Ok(self.buf.trim_end_matches(['\n', '\r']).to_string())
    }

    pub(crate) fn keyed_usizes(&mut self, key: &str) -> Result<Vec<usize>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.error(format!("expected `{key}` line, found `{line}`")));
        }
        parts
            .map(|p| p.parse::<usize>().map_err(|e| self.error(format!("bad integer `{p}`: {e}"))))
            .collect()
    }

    pub(crate) fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|p| p.parse::<f64>().map_err(|e| self.error(format!("bad number `{p}`: {e}"))))
            .collect::<Result<_>>()?;
        if values.len() != expected {
            return Err(self.error(format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }
}
