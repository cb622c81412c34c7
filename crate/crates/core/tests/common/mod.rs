//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use flsim::nn::{Example, LayerSpec, ModelParams, Network, Padding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_params(net: &Network, rng: &mut ChaCha8Rng, scale: f64) -> ModelParams {
    let mut p = net.zeros();
    for v in p.values_mut() {
        *v = rng.random_range(-scale..scale);
    }
    p
}

pub fn random_examples(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Vec<Example> {
    (0..n)
        .map(|_| Example { x: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(), y: rng.random_range(0..classes) })
        .collect()
}

fn out_len(len: usize, size: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => len.div_ceil(stride),
        Padding::Valid => (len - size) / stride + 1,
    }
}

fn pad_before(len: usize, size: usize, stride: usize, padding: Padding) -> isize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => {
            let out = len.div_ceil(stride);
            (((out - 1) * stride + size).saturating_sub(len) / 2) as isize
        }
    }
}

/// Straightforward forward pass written directly from the layer definitions.
/// Activations are kept as `[position][channel]`.
pub fn naive_forward(layers: &[LayerSpec], params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let mut act: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let mut slot = 0;
    for spec in layers {
        act = match *spec {
            LayerSpec::Dense { inputs, outputs } => {
                let flat: Vec<f64> = act.iter().flatten().copied().collect();
                assert_eq!(flat.len(), inputs);
                let p = &params.layers()[slot];
                slot += 1;
                (0..outputs)
                    .map(|o| vec![p.bias[o] + (0..inputs).map(|i| p.weights[i * outputs + o] * flat[i]).sum::<f64>()])
                    .collect()
            }
            LayerSpec::Conv1d { taps, filters, padding } => {
                let p = &params.layers()[slot];
                slot += 1;
                let len = act.len();
                let pad = pad_before(len, taps, 1, padding);
                (0..out_len(len, taps, 1, padding))
                    .map(|pos| {
                        (0..filters)
                            .map(|f| {
                                let mut s = p.bias[f];
                                for j in 0..taps {
                                    let src = pos as isize + j as isize - pad;
                                    if src >= 0 && (src as usize) < len {
                                        s += p.weights[j * filters + f] * act[src as usize][0];
                                    }
                                }
                                s
                            })
                            .collect()
                    })
                    .collect()
            }
            LayerSpec::MaxPool1d { size, stride, padding } => {
                let len = act.len();
                let pad = pad_before(len, size, stride, padding);
                (0..out_len(len, size, stride, padding))
                    .map(|o| {
                        (0..act[0].len())
                            .map(|c| {
                                let start = (o * stride) as isize - pad;
                                (start..start + size as isize)
                                    .filter(|&s| s >= 0 && (s as usize) < len)
                                    .map(|s| act[s as usize][c])
                                    .fold(f64::NEG_INFINITY, f64::max)
                            })
                            .collect()
                    })
                    .collect()
            }
            LayerSpec::Relu => act.iter().map(|row| row.iter().map(|v| v.max(0.0)).collect()).collect(),
            LayerSpec::Softmax => {
                let flat: Vec<f64> = act.iter().flatten().copied().collect();
                let m = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = flat.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                e.iter().map(|v| vec![v / z]).collect()
            }
        };
    }
    act.into_iter().flatten().collect()
}

/// Mean cross-entropy computed from the naive forward pass.
pub fn naive_loss(layers: &[LayerSpec], params: &ModelParams, batch: &[Example]) -> f64 {
    batch
        .iter()
        .map(|e| -naive_forward(layers, params, &e.x)[e.y].max(1e-12).ln())
        .sum::<f64>()
        / batch.len() as f64
}

/// A random small network touching the requested layer kinds. Returns the
/// network, its input length and class count.
pub fn random_net(rng: &mut ChaCha8Rng, conv: bool, pool: bool, hidden: bool) -> (Network, usize, usize) {
    let classes = rng.random_range(2..5);
    let input = rng.random_range(6..13);
    let mut layers = Vec::new();
    let mut len = input;
    let mut channels = 1;
    let pick = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { Padding::Same } else { Padding::Valid };
    if conv {
        let taps = rng.random_range(1..5);
        let filters = rng.random_range(1..4);
        let padding = pick(rng);
        layers.push(LayerSpec::Conv1d { taps, filters, padding });
        layers.push(LayerSpec::Relu);
        len = out_len(len, taps, 1, padding);
        channels = filters;
    }
    if pool {
        let size = rng.random_range(1..4).min(len);
        let stride = rng.random_range(1..4);
        let padding = pick(rng);
        layers.push(LayerSpec::MaxPool1d { size, stride, padding });
        len = out_len(len, size, stride, padding);
    }
    let mut width = len * channels;
    if hidden {
        let h = rng.random_range(2..6);
        layers.push(LayerSpec::Dense { inputs: width, outputs: h });
        layers.push(LayerSpec::Relu);
        width = h;
    }
    layers.push(LayerSpec::Dense { inputs: width, outputs: classes });
    layers.push(LayerSpec::Softmax);
    (Network::new(input, layers).unwrap(), input, classes)
}

/// Largest relative error between the analytic gradient and central finite
/// differences of the naive loss, over every trainable entry.
pub fn gradient_check(net: &Network, params: &ModelParams, batch: &[Example], step: f64) -> f64 {
    let refs: Vec<&Example> = batch.iter().collect();
    let (_, grad) = net.backward(params, &refs).unwrap();
    let mut worst = 0.0f64;
    for q in 0..params.layers().len() {
        let n_w = params.layers()[q].weights.len();
        let n_b = params.layers()[q].bias.len();
        for idx in 0..n_w + n_b {
            let probe = |delta: f64| {
                let mut p = params.clone();
                let lp = &mut p.layers_mut()[q];
                if idx < n_w {
                    lp.weights[idx] += delta;
                } else {
                    lp.bias[idx - n_w] += delta;
                }
                naive_loss(net.layers(), &p, batch)
            };
            let fd = (probe(step) - probe(-step)) / (2.0 * step);
            let g = &grad.layers()[q];
            let an = if idx < n_w { g.weights[idx] } else { g.bias[idx - n_w] };
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}
