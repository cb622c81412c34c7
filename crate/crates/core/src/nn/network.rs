use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::params::{GradientSet, LayerParams, ModelParams, Params};
use super::{cross_entropy, Example};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Zero-padding policy for convolution and pooling windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output length `ceil(len / stride)`, zero (conv) or ignored (pool) padding split
    /// `floor(total/2)` before and the remainder after.
    Same,
    /// Windows fully inside the input only.
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    /// Single-input-channel 1-D convolution, stride 1. Output is channels-last
    /// `(length, filters)`.
    Conv1d {
        taps: usize,
        filters: usize,
        padding: Padding,
    },
    /// Per-channel max pooling over a channels-last activation.
    MaxPool1d {
        size: usize,
        stride: usize,
        padding: Padding,
    },
    Relu,
    /// Must be the final layer; training uses the fused softmax/cross-entropy gradient.
    Softmax,
}

impl LayerSpec {
    pub fn is_trainable(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. })
    }
}

/// Activation shape: `len` positions by `channels` features, stored channels-last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub len: usize,
    pub channels: usize,
}

impl Shape {
    pub fn flat(len: usize) -> Self {
        Shape { len, channels: 1 }
    }

    pub fn size(&self) -> usize {
        self.len * self.channels
    }
}

/// The architectures the simulator knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// One fully connected layer plus softmax (the introductory 4-node example).
    SingleFc,
    /// 8 conv filters of 16 taps, ReLU, max-pool, FC(168 x C), softmax.
    Cnn,
    /// FC(512 x 32), ReLU, FC(32 x C), softmax.
    TwoNn,
    /// FC(d x 4), ReLU, FC(4 x C), softmax. For tests and quick runs.
    Toy,
}

impl Architecture {
    pub fn build(self, input_dim: usize, classes: usize) -> Result<Network> {
        match self {
            Architecture::SingleFc => Network::single_fc(input_dim, classes),
            Architecture::Cnn => Network::cnn(input_dim, classes),
            Architecture::TwoNn => Network::two_nn(input_dim, classes),
            Architecture::Toy => Network::dense_stack(&[input_dim, 4, classes]),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::SingleFc => "mnist-1fc",
            Architecture::Cnn => "cnn",
            Architecture::TwoNn => "2nn",
            Architecture::Toy => "toy",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist-1fc" | "1fc" | "fc" => Ok(Architecture::SingleFc),
            "cnn" => Ok(Architecture::Cnn),
            "2nn" => Ok(Architecture::TwoNn),
            "toy" => Ok(Architecture::Toy),
            other => Err(Error::arg(format!("unknown model '{other}'"))),
        }
    }
}

/// A validated feed-forward network description. Parameters live separately
/// in [`ModelParams`], so one `Network` serves every device.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input: Shape,
    layers: Vec<LayerSpec>,
    /// `shapes[l]` is the input shape of layer `l`; `shapes[layers.len()]` the output.
    shapes: Vec<Shape>,
    /// Index into `ModelParams` for each trainable layer.
    param_slot: Vec<Option<usize>>,
}

fn window_geometry(len: usize, size: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Valid => {
            if len < size {
                (0, 0)
            } else {
                ((len - size) / stride + 1, 0)
            }
        }
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out.saturating_sub(1)) * stride + size).saturating_sub(len);
            (out, total / 2)
        }
    }
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("network needs at least one layer"));
        }
        let input = Shape::flat(input_dim);
        let mut shapes = vec![input];
        let mut param_slot = Vec::with_capacity(layers.len());
        let mut slot = 0;
        let last = layers.len() - 1;
        for (l, spec) in layers.iter().enumerate() {
            let cur = shapes[l];
            let next = match *spec {
                LayerSpec::Dense { inputs, outputs } => {
                    if inputs != cur.size() {
                        return Err(Error::shape(
                            l,
                            format!("dense expects {inputs} inputs, previous layer yields {}", cur.size()),
                        ));
                    }
                    if outputs == 0 {
                        return Err(Error::shape(l, "dense layer with zero outputs"));
                    }
                    Shape::flat(outputs)
                }
                LayerSpec::Conv1d {
                    taps,
                    filters,
                    padding,
                } => {
                    if cur.channels != 1 {
                        return Err(Error::shape(l, "conv1d takes a single input channel"));
                    }
                    if taps == 0 || filters == 0 {
                        return Err(Error::shape(l, "conv1d needs taps and filters"));
                    }
                    let (out, _) = window_geometry(cur.len, taps, 1, padding);
                    if out == 0 {
                        return Err(Error::shape(l, "conv1d kernel longer than input"));
                    }
                    Shape {
                        len: out,
                        channels: filters,
                    }
                }
                LayerSpec::MaxPool1d {
                    size,
                    stride,
                    padding,
                } => {
                    if size == 0 || stride == 0 {
                        return Err(Error::shape(l, "pool size and stride must be positive"));
                    }
                    let (out, _) = window_geometry(cur.len, size, stride, padding);
                    if out == 0 {
                        return Err(Error::shape(l, "pool window longer than input"));
                    }
                    Shape {
                        len: out,
                        channels: cur.channels,
                    }
                }
                LayerSpec::Relu => cur,
                LayerSpec::Softmax => {
                    if l != last {
                        return Err(Error::shape(l, "softmax must be the final layer"));
                    }
                    Shape::flat(cur.size())
                }
            };
            if spec.is_trainable() {
                param_slot.push(Some(slot));
                slot += 1;
            } else {
                param_slot.push(None);
            }
            shapes.push(next);
        }
        if layers[last] != LayerSpec::Softmax {
            return Err(Error::shape(last, "final layer must be softmax"));
        }
        Ok(Network {
            input,
            layers,
            shapes,
            param_slot,
        })
    }

    pub fn single_fc(input_dim: usize, classes: usize) -> Result<Self> {
        Network::dense_stack(&[input_dim, classes])
    }

    /// Dense layers of the given widths with ReLU between them and softmax on top.
    pub fn dense_stack(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::arg("dense stack needs input and output widths"));
        }
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            if i > 0 {
                layers.push(LayerSpec::Relu);
            }
            layers.push(LayerSpec::Dense {
                inputs: pair[0],
                outputs: pair[1],
            });
        }
        layers.push(LayerSpec::Softmax);
        Network::new(widths[0], layers)
    }

    /// The convolutional model: 8 filters of 16 taps (SAME), ReLU, max-pool
    /// of size = stride = 24 (VALID), FC to `classes`. On a 512-point input
    /// the pool yields 21 positions, so the FC layer is 168 x C.
    pub fn cnn(input_len: usize, classes: usize) -> Result<Self> {
        const TAPS: usize = 16;
        const FILTERS: usize = 8;
        const POOL: usize = 24;
        let (pooled, _) = window_geometry(input_len, POOL, POOL, Padding::Valid);
        Network::new(
            input_len,
            vec![
                LayerSpec::Conv1d {
                    taps: TAPS,
                    filters: FILTERS,
                    padding: Padding::Same,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool1d {
                    size: POOL,
                    stride: POOL,
                    padding: Padding::Valid,
                },
                LayerSpec::Dense {
                    inputs: pooled * FILTERS,
                    outputs: classes,
                },
                LayerSpec::Softmax,
            ],
        )
    }

    pub fn two_nn(input_dim: usize, classes: usize) -> Result<Self> {
        Network::dense_stack(&[input_dim, 32, classes])
    }

    pub fn input_dim(&self) -> usize {
        self.input.size()
    }

    pub fn output_dim(&self) -> usize {
        self.shapes[self.layers.len()].size()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Shapes `(rows, cols)` of every trainable layer, in parameter order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .filter_map(|spec| match *spec {
                LayerSpec::Dense { inputs, outputs } => Some((inputs, outputs)),
                LayerSpec::Conv1d { taps, filters, .. } => Some((taps, filters)),
                _ => None,
            })
            .collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.param_shapes().len()
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes().iter().map(|(r, c)| r * c + c).sum()
    }

    pub fn zeros(&self) -> ModelParams {
        Params::new(
            self.param_shapes()
                .into_iter()
                .map(|(r, c)| LayerParams::zeros(r, c))
                .collect(),
        )
    }

    /// Every weight and bias drawn from uniform(-0.05, 0.05). All devices of a
    /// run call this with the run seed, so they share one starting point.
    pub fn init(&self, seed: u64) -> ModelParams {
        let mut rng = seed::rng(seed, Stream::Init, &[]);
        let mut p = self.zeros();
        for v in p.values_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
        p
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        let shapes = self.param_shapes();
        if params.num_layers() != shapes.len() {
            return Err(Error::shape(
                params.num_layers().min(shapes.len()),
                format!(
                    "model has {} trainable layers, network expects {}",
                    params.num_layers(),
                    shapes.len()
                ),
            ));
        }
        for (q, (lp, &(r, c))) in params.layers().iter().zip(&shapes).enumerate() {
            if lp.rows != r || lp.cols != c || lp.weights.len() != r * c || lp.bias.len() != c {
                return Err(Error::shape(
                    q,
                    format!("parameters {}x{}, expected {r}x{c}", lp.rows, lp.cols),
                ));
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(
                0,
                format!("input length {}, expected {}", x.len(), self.input_dim()),
            ));
        }
        Ok(())
    }

    /// Class probabilities for one input.
    pub fn forward(&self, params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_input(x)?;
        let mut trace = self.trace(params, x);
        Ok(trace.acts.pop().expect("output activation"))
    }

    fn trace(&self, params: &ModelParams, x: &[f64]) -> Trace {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax: Vec<Vec<usize>> = vec![Vec::new(); self.layers.len()];
        acts.push(x.to_vec());
        for (l, spec) in self.layers.iter().enumerate() {
            let input = &acts[l];
            let in_shape = self.shapes[l];
            let out_shape = self.shapes[l + 1];
            let out = match *spec {
                LayerSpec::Dense { inputs, outputs } => {
                    let p = &params.layers()[self.param_slot[l].unwrap()];
                    let mut out = p.bias.clone();
                    for (i, &h) in input.iter().enumerate().take(inputs) {
                        if h == 0.0 {
                            continue;
                        }
                        let row = &p.weights[i * outputs..(i + 1) * outputs];
                        for (o, w) in out.iter_mut().zip(row) {
                            *o += w * h;
                        }
                    }
                    out
                }
                LayerSpec::Conv1d {
                    taps,
                    filters,
                    padding,
                } => {
                    let p = &params.layers()[self.param_slot[l].unwrap()];
                    let (_, pad) = window_geometry(in_shape.len, taps, 1, padding);
                    let mut out = vec![0.0; out_shape.size()];
                    for pos in 0..out_shape.len {
                        let dst = &mut out[pos * filters..(pos + 1) * filters];
                        dst.copy_from_slice(&p.bias);
                        for j in 0..taps {
                            let src = (pos + j) as isize - pad as isize;
                            if src < 0 || src as usize >= in_shape.len {
                                continue;
                            }
                            let xv = input[src as usize];
                            let row = &p.weights[j * filters..(j + 1) * filters];
                            for (d, w) in dst.iter_mut().zip(row) {
                                *d += w * xv;
                            }
                        }
                    }
                    out
                }
                LayerSpec::MaxPool1d {
                    size,
                    stride,
                    padding,
                } => {
                    let ch = in_shape.channels;
                    let (_, pad) = window_geometry(in_shape.len, size, stride, padding);
                    let mut out = vec![f64::NEG_INFINITY; out_shape.size()];
                    let mut idx = vec![0usize; out_shape.size()];
                    for o in 0..out_shape.len {
                        let start = (o * stride) as isize - pad as isize;
                        for s in start..start + size as isize {
                            if s < 0 || s as usize >= in_shape.len {
                                continue;
                            }
                            let s = s as usize;
                            for c in 0..ch {
                                let v = input[s * ch + c];
                                if v > out[o * ch + c] {
                                    out[o * ch + c] = v;
                                    idx[o * ch + c] = s * ch + c;
                                }
                            }
                        }
                    }
                    argmax[l] = idx;
                    out
                }
                LayerSpec::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::Softmax => softmax(input),
            };
            acts.push(out);
        }
        Trace { acts, argmax }
    }

    /// Mean cross-entropy over `batch` and its gradient with respect to every
    /// trainable tensor.
    pub fn backward(&self, params: &ModelParams, batch: &[&Example]) -> Result<(f64, GradientSet)> {
        if batch.is_empty() {
            return Err(Error::arg("backward needs a non-empty batch"));
        }
        self.check_params(params)?;
        let classes = self.output_dim();
        let mut grad = self.zeros();
        let mut loss = 0.0;
        for ex in batch {
            self.check_input(&ex.x)?;
            if ex.y >= classes {
                return Err(Error::arg(format!("label {} outside {classes} classes", ex.y)));
            }
            let trace = self.trace(params, &ex.x);
            let probs = trace.acts.last().unwrap();
            loss += cross_entropy(probs, ex.y);
            self.accumulate(params, &trace, ex.y, &mut grad);
        }
        let n = batch.len() as f64;
        grad.scale(1.0 / n);
        Ok((loss / n, grad))
    }

    fn accumulate(&self, params: &ModelParams, trace: &Trace, label: usize, grad: &mut GradientSet) {
        let last = self.layers.len() - 1;
        // Fused softmax + cross-entropy: dL/dlogits = p - onehot(y).
        let mut delta = trace.acts[last + 1].clone();
        delta[label] -= 1.0;
        for l in (0..last).rev() {
            let input = &trace.acts[l];
            let in_shape = self.shapes[l];
            let out_shape = self.shapes[l + 1];
            let need_input_grad = l > 0;
            delta = match self.layers[l] {
                LayerSpec::Dense { inputs, outputs } => {
                    let slot = self.param_slot[l].unwrap();
                    let p = &params.layers()[slot];
                    let g = &mut grad.layers_mut()[slot];
                    for (b, d) in g.bias.iter_mut().zip(&delta) {
                        *b += d;
                    }
                    let mut dx = if need_input_grad { vec![0.0; inputs] } else { Vec::new() };
                    for i in 0..inputs {
                        let h = input[i];
                        let row = i * outputs..(i + 1) * outputs;
                        if h != 0.0 {
                            for (gw, d) in g.weights[row.clone()].iter_mut().zip(&delta) {
                                *gw += h * d;
                            }
                        }
                        if need_input_grad {
                            dx[i] = p.weights[row].iter().zip(&delta).map(|(w, d)| w * d).sum();
                        }
                    }
                    dx
                }
                LayerSpec::Conv1d {
                    taps,
                    filters,
                    padding,
                } => {
                    let slot = self.param_slot[l].unwrap();
                    let p = &params.layers()[slot];
                    let g = &mut grad.layers_mut()[slot];
                    let (_, pad) = window_geometry(in_shape.len, taps, 1, padding);
                    let mut dx = if need_input_grad { vec![0.0; in_shape.len] } else { Vec::new() };
                    for pos in 0..out_shape.len {
                        let d = &delta[pos * filters..(pos + 1) * filters];
                        for (b, dv) in g.bias.iter_mut().zip(d) {
                            *b += dv;
                        }
                        for j in 0..taps {
                            let src = (pos + j) as isize - pad as isize;
                            if src < 0 || src as usize >= in_shape.len {
                                continue;
                            }
                            let src = src as usize;
                            let xv = input[src];
                            let row = j * filters..(j + 1) * filters;
                            for (gw, dv) in g.weights[row.clone()].iter_mut().zip(d) {
                                *gw += xv * dv;
                            }
                            if need_input_grad {
                                dx[src] += p.weights[row].iter().zip(d).map(|(w, dv)| w * dv).sum::<f64>();
                            }
                        }
                    }
                    dx
                }
                LayerSpec::MaxPool1d { .. } => {
                    let mut dx = vec![0.0; in_shape.size()];
                    for (o, &src) in trace.argmax[l].iter().enumerate() {
                        dx[src] += delta[o];
                    }
                    dx
                }
                LayerSpec::Relu => delta
                    .iter()
                    .zip(input)
                    .map(|(d, &x)| if x > 0.0 { *d } else { 0.0 })
                    .collect(),
                LayerSpec::Softmax => unreachable!("softmax is validated to be last"),
            };
        }
    }

    /// Mean cross-entropy and accuracy of `params` over `examples`.
    pub fn evaluate(&self, params: &ModelParams, examples: &[Example]) -> Result<(f64, f64)> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_params(params)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for ex in examples {
            self.check_input(&ex.x)?;
            let trace = self.trace(params, &ex.x);
            let probs = trace.acts.last().unwrap();
            loss += cross_entropy(probs, ex.y);
            if argmax(probs) == ex.y {
                correct += 1;
            }
        }
        let n = examples.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }
}

struct Trace {
    acts: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameter_counts() {
        assert_eq!(Network::cnn(512, 8).unwrap().parameter_count(), 1488);
        assert_eq!(Network::two_nn(512, 8).unwrap().parameter_count(), 16680);
        assert_eq!(Network::single_fc(784, 10).unwrap().parameter_count(), 7850);
    }

    #[test]
    fn cnn_shapes() {
        let net = Network::cnn(512, 8).unwrap();
        assert_eq!(net.param_shapes(), vec![(16, 8), (168, 8)]);
        assert_eq!(net.output_dim(), 8);
    }

    #[test]
    fn zero_model_is_uniform() {
        let net = Network::cnn(512, 8).unwrap();
        let x: Vec<f64> = (0..512).map(|i| (i as f64).sin()).collect();
        let p = net.forward(&net.zeros(), &x).unwrap();
        for v in p {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_fc_picks_hot_index() {
        let net = Network::single_fc(784, 10).unwrap();
        let mut params = net.zeros();
        for c in 0..10 {
            params.layers_mut()[0].weights[c * 10 + c] = 1.0;
        }
        let mut x = vec![0.0; 784];
        x[3] = 1.0;
        assert_eq!(argmax(&net.forward(&params, &x).unwrap()), 3);
    }

    #[test]
    fn input_length_checked() {
        let net = Network::two_nn(512, 8).unwrap();
        let err = net.forward(&net.zeros(), &[0.0; 10]).unwrap_err();
        assert!(matches!(err, Error::Shape { layer: 0, .. }));
    }

    #[test]
    fn bad_compositions_rejected() {
        assert!(Network::new(4, vec![LayerSpec::Dense { inputs: 5, outputs: 2 }, LayerSpec::Softmax]).is_err());
        assert!(Network::new(4, vec![LayerSpec::Softmax, LayerSpec::Relu]).is_err());
        assert!(Network::new(4, vec![LayerSpec::Dense { inputs: 4, outputs: 2 }]).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let net = Network::dense_stack(&[6, 4, 3]).unwrap();
        assert!(net.backward(&net.zeros(), &[]).is_err());
    }

    #[test]
    fn same_padding_geometry_matches_tf() {
        // 16 taps: 15 padding cells, 7 before and 8 after.
        assert_eq!(window_geometry(512, 16, 1, Padding::Same), (512, 7));
        assert_eq!(window_geometry(512, 24, 24, Padding::Valid), (21, 0));
        assert_eq!(window_geometry(512, 5, 5, Padding::Same), (103, 1));
    }
}
