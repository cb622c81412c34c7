//! Minimal feed-forward networks (dense, 1-D conv, max-pool, ReLU, softmax)
//! with hand-written backpropagation in `f64`.

mod checkpoint;
mod network;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use network::{argmax, softmax, Architecture, LayerSpec, Network, Padding, Shape};
pub use params::{
    max_pairwise_distance, momentum_step, sgd_step, GradientSet, LayerParams, ModelParams, Params,
};

/// Probabilities below this are clamped before taking the log, so a
/// confidently wrong prediction yields a large finite loss instead of `inf`.
pub const LOG_FLOOR: f64 = 1e-12;

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: usize,
}

/// `-ln(probs[y])`, with `probs[y]` floored at [`LOG_FLOOR`].
pub fn cross_entropy(probs: &[f64], y: usize) -> f64 {
    -probs[y].max(LOG_FLOOR).ln()
}

/// Mean cross-entropy over a batch of `(probs, label)` pairs.
pub fn mean_cross_entropy<'a>(batch: impl IntoIterator<Item = (&'a [f64], usize)>) -> f64 {
    let mut n = 0usize;
    let mut total = 0.0;
    for (p, y) in batch {
        total += cross_entropy(p, y);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}
