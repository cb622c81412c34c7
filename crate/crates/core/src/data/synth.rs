//! Synthetic stand-ins for the radar range spectra and the MNIST digits, so
//! every experiment runs without external downloads.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Example;
use crate::seed::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub classes: usize,
    pub dim: usize,
    /// Standard deviation of the additive Gaussian noise. For radar spectra it
    /// also scales a spurious clutter peak; for digits it also scales how much
    /// of a second class prototype bleeds into each example.
    pub noise: f64,
    /// Seeds the class structure (digit prototypes). Training and validation
    /// sets must share it; the per-call seed only drives sampling.
    pub family_seed: u64,
    /// Overall multiplier on radar features.
    pub gain: f64,
}

impl SynthOptions {
    /// 8 classes of 512-bin spectra.
    pub fn radar() -> Self {
        SynthOptions {
            classes: 8,
            dim: 512,
            noise: 0.3,
            family_seed: 0,
            gain: 3.0,
        }
    }

    /// 10 classes of 28x28 images.
    pub fn digits() -> Self {
        SynthOptions {
            classes: 10,
            dim: 784,
            noise: 0.3,
            family_seed: 0,
            gain: 1.0,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_family(mut self, family_seed: u64) -> Self {
        self.family_seed = family_seed;
        self
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }
}

fn balanced_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn validate(n: usize, opts: &SynthOptions) -> Result<()> {
    if opts.classes == 0 || opts.dim < opts.classes {
        return Err(Error::arg("need at least one feature per class"));
    }
    if n < opts.classes {
        return Err(Error::arg(format!(
            "need at least {} examples for {} classes, got {n}",
            opts.classes, opts.classes
        )));
    }
    if opts.noise.is_nan() || opts.noise < 0.0 {
        return Err(Error::arg("noise must be non-negative"));
    }
    if !(opts.gain > 0.0 && opts.gain.is_finite()) {
        return Err(Error::arg("gain must be positive"));
    }
    Ok(())
}

/// Range-spectrum-like vectors. The `dim` bins are split into `classes`
/// contiguous bands and class `c` places a Gaussian echo peak inside band `c`,
/// on top of a decaying clutter floor shared by every class. Noise adds white
/// Gaussian noise and a spurious peak at a random bin. Labels are balanced to
/// within one example. Features are rounded to `f32`.
pub fn synth_radar(seed: u64, n: usize, opts: &SynthOptions) -> Result<Dataset> {
    validate(n, opts)?;
    let mut rng = seed::rng(seed, Stream::Synth, &[0x5ad, n as u64]);
    let labels = balanced_labels(&mut rng, n, opts.classes);
    let band = opts.dim / opts.classes;
    let margin = (band / 4).min(4) as f64;
    const WIDTH: f64 = 2.0;
    let floor: Vec<f64> = (0..opts.dim)
        .map(|j| 0.3 * (-(j as f64) / 80.0).exp())
        .collect();
    let mut examples = Vec::with_capacity(n);
    for y in labels {
        let lo = (y * band) as f64;
        let span = (band as f64 - 1.0 - 2.0 * margin).max(0.0);
        let center = lo + margin + rng.random::<f64>() * span;
        let amp = rng.random_range(0.6..1.0);
        let clutter_at = rng.random_range(0..opts.dim) as f64;
        let clutter_amp = 2.0 * opts.noise * rng.random::<f64>();
        let mut x = Vec::with_capacity(opts.dim);
        for (j, base) in floor.iter().enumerate() {
            let jf = j as f64;
            let echo = amp * (-0.5 * ((jf - center) / WIDTH).powi(2)).exp();
            let clutter = clutter_amp * (-0.5 * ((jf - clutter_at) / WIDTH).powi(2)).exp();
            let v = base + echo + clutter + opts.noise * normal(&mut rng);
            x.push((opts.gain * v) as f32 as f64);
        }
        examples.push(Example { x, y });
    }
    Dataset::new(examples, opts.dim, opts.classes)
}

fn digit_prototypes(opts: &SynthOptions) -> Vec<Vec<f64>> {
    let side = (opts.dim as f64).sqrt().round() as usize;
    let side = if side * side == opts.dim { side } else { 0 };
    let mut rng = seed::rng(opts.family_seed, Stream::Synth, &[0xd1617]);
    (0..opts.classes)
        .map(|_| {
            let mut p = vec![0.0; opts.dim];
            // A few soft strokes per class.
            for _ in 0..4 {
                if side > 0 {
                    let (cx, cy) = (rng.random_range(6.0..22.0), rng.random_range(6.0..22.0));
                    let (sx, sy) = (rng.random_range(1.5..4.5), rng.random_range(1.5..4.5));
                    for r in 0..side {
                        for c in 0..side {
                            let dx = (c as f64 - cx) / sx;
                            let dy = (r as f64 - cy) / sy;
                            p[r * side + c] += (-0.5 * (dx * dx + dy * dy)).exp();
                        }
                    }
                } else {
                    let center = rng.random_range(0.0..opts.dim as f64);
                    let w = rng.random_range(2.0..8.0);
                    for (j, v) in p.iter_mut().enumerate() {
                        *v += (-0.5 * ((j as f64 - center) / w).powi(2)).exp();
                    }
                }
            }
            let max = p.iter().copied().fold(0.0, f64::max).max(1e-12);
            p.iter_mut().for_each(|v| *v = (*v / max).min(1.0));
            p
        })
        .collect()
}

/// Digit-like images: each class has a fixed prototype made of soft blobs
/// (drawn from `opts.family_seed`); an example is its class prototype with a
/// random intensity, a random admixture of another class prototype, and
/// additive noise, clipped to `[0, 1]`. Labels are balanced to within one.
pub fn synth_digits(seed: u64, n: usize, opts: &SynthOptions) -> Result<Dataset> {
    validate(n, opts)?;
    let protos = digit_prototypes(opts);
    let mut rng = seed::rng(seed, Stream::Synth, &[0xd1, n as u64]);
    let labels = balanced_labels(&mut rng, n, opts.classes);
    let mut examples = Vec::with_capacity(n);
    for y in labels {
        let other = (y + rng.random_range(1..opts.classes.max(2))) % opts.classes;
        let mix = if opts.classes > 1 { opts.noise * rng.random::<f64>() } else { 0.0 };
        let gain = rng.random_range(0.7..1.3);
        let x = protos[y]
            .iter()
            .zip(&protos[other])
            .map(|(a, b)| {
                let v = gain * ((1.0 - mix) * a + mix * b) + opts.noise * normal(&mut rng);
                v.clamp(0.0, 1.0) as f32 as f64
            })
            .collect();
        examples.push(Example { x, y });
    }
    Dataset::new(examples, opts.dim, opts.classes)
}
