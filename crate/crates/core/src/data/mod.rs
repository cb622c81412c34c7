//! Datasets, on-disk formats, synthetic generators and device partitioning.

mod idx;
mod native;
mod partition;
mod synth;

pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use native::{load_native, read_native, save_native, write_native, DATASET_MAGIC, DATASET_VERSION};
pub use partition::{minibatches, partition, probe_batch, NodeClasses, PartitionSpec};
pub use synth::{synth_digits, synth_radar, SynthOptions};

use crate::error::{Error, Result};
use crate::nn::Example;

/// A labelled example pool with uniform feature length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    feature_dim: usize,
    class_count: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, feature_dim: usize, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::arg("class count must be positive"));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.x.len() != feature_dim {
                return Err(Error::arg(format!(
                    "example {i} has {} features, expected {feature_dim}",
                    ex.x.len()
                )));
            }
            if ex.y >= class_count {
                return Err(Error::arg(format!(
                    "example {i} has label {} outside {class_count} classes",
                    ex.y
                )));
            }
        }
        Ok(Dataset {
            examples,
            feature_dim,
            class_count,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for ex in &self.examples {
            h[ex.y] += 1;
        }
        h
    }

    /// The first `n` examples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        Dataset {
            examples: self.examples[..n.min(self.len())].to_vec(),
            feature_dim: self.feature_dim,
            class_count: self.class_count,
        }
    }

    /// Splits off the examples at positions `>= at`.
    pub fn split_at(&self, at: usize) -> (Dataset, Dataset) {
        let at = at.min(self.len());
        let make = |ex: &[Example]| Dataset {
            examples: ex.to_vec(),
            feature_dim: self.feature_dim,
            class_count: self.class_count,
        };
        (make(&self.examples[..at]), make(&self.examples[at..]))
    }
}

/// The local example set of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub owner: usize,
    /// Positions of the examples in the parent dataset.
    pub indices: Vec<usize>,
    pub examples: Vec<Example>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn refs(&self) -> Vec<&Example> {
        self.examples.iter().collect()
    }

    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.examples.iter().map(|e| e.y).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}
