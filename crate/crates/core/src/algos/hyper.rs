use std::fmt;
use std::str::FromStr;

use super::QuantBits;
use crate::error::{Error, Result};

/// Which parameter vector a gradient-exchange device publishes each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SharePoint {
    /// The model after the local pass, as in model-only consensus.
    #[default]
    Model,
    /// The consensus aggregate computed before the gradient and local steps.
    Aggregate,
}

impl fmt::Display for SharePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SharePoint::Model => "model",
            SharePoint::Aggregate => "aggregate",
        })
    }
}

impl FromStr for SharePoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "model" => Ok(SharePoint::Model),
            "aggregate" => Ok(SharePoint::Aggregate),
            other => Err(Error::Argument(format!("share point must be 'model' or 'aggregate', got '{other}'"))),
        }
    }
}

/// Per-round hyperparameters shared by all devices.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Consensus step size `eps`.
    pub eps: f64,
    /// Local SGD step size.
    pub mu: f64,
    /// Step size of the first local step in gradient-exchange rounds. `None`
    /// falls back to `mu`.
    pub beta_self: Option<f64>,
    /// Rates applied to neighbor gradients: the first entry to hidden layers,
    /// the last entry to the output layer.
    pub beta: Vec<f64>,
    /// MEWMA forgetting factor for stored neighbor gradients, in `(0, 1]`.
    pub mewma: f64,
    /// Heavy-ball decay; `None` disables momentum.
    pub momentum: Option<f64>,
    /// Exchange the look-ahead point instead of the aggregate.
    pub nesterov: bool,
    pub batch_size: usize,
    /// Rounds run with the synchronous four-stage exchange.
    pub warmup_rounds: usize,
    /// Quantize exchanged gradients before use. `None` leaves them exact.
    pub quantize: Option<QuantBits>,
    pub share: SharePoint,
}

impl Default for HyperParams {
    fn default() -> Self {
        Preset::One.hyper()
    }
}

/// The three gradient-exchange settings used for the radar experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    One,
    Two,
    Three,
}

impl Preset {
    pub fn hyper(self) -> HyperParams {
        let (eps, beta, mewma) = match self {
            Preset::One => (1.0, 0.15, 0.99),
            Preset::Two => (0.5, 0.1, 0.99),
            Preset::Three => (0.5, 0.1, 0.95),
        };
        HyperParams {
            eps,
            mu: 0.025,
            beta_self: Some(0.025),
            beta: vec![beta, beta],
            mewma,
            momentum: None,
            nesterov: false,
            batch_size: 5,
            warmup_rounds: 3,
            quantize: None,
            share: SharePoint::Model,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        finite_nonneg("mu", self.mu)?;
        if let Some(b) = self.beta_self {
            finite_nonneg("beta_self", b)?;
        }
        if self.beta.is_empty() {
            return Err(Error::Config("at least one gradient rate is required".into()));
        }
        for &b in &self.beta {
            finite_nonneg("gradient rate", b)?;
        }
        if !(self.mewma > 0.0 && self.mewma <= 1.0) {
            return Err(Error::Config(format!("MEWMA factor must lie in (0,1], got {}", self.mewma)));
        }
        if let Some(rho) = self.momentum {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Config(format!("momentum decay must lie in [0,1), got {rho}")));
            }
        }
        if self.nesterov && self.momentum.is_none() {
            return Err(Error::Config("nesterov requires a momentum decay".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }

    /// Neighbor-gradient rates resolved for a model with `layers` trainable layers.
    pub fn layer_rates(&self, layers: usize) -> Vec<f64> {
        let first = self.beta.first().copied().unwrap_or(0.0);
        let last = self.beta.last().copied().unwrap_or(0.0);
        (0..layers).map(|q| if q + 1 == layers { last } else { first }).collect()
    }

    pub fn self_step(&self) -> f64 {
        self.beta_self.unwrap_or(self.mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [Preset::One, Preset::Two, Preset::Three] {
            c.hyper().validate().unwrap();
        }
        assert_eq!(Preset::Three.hyper().mewma, 0.95);
    }

    #[test]
    fn hidden_and_output_rates() {
        let mut h = HyperParams::default();
        h.beta = vec![0.1, 0.2];
        assert_eq!(h.layer_rates(1), vec![0.2]);
        assert_eq!(h.layer_rates(2), vec![0.1, 0.2]);
        assert_eq!(h.layer_rates(3), vec![0.1, 0.1, 0.2]);
    }

    #[test]
    fn bad_values_rejected() {
        let base = HyperParams::default();
        let cases: Vec<Box<dyn Fn(&mut HyperParams)>> = vec![
            Box::new(|h| h.eps = 0.0),
            Box::new(|h| h.mu = -1.0),
            Box::new(|h| h.mewma = 0.0),
            Box::new(|h| h.momentum = Some(1.0)),
            Box::new(|h| h.nesterov = true),
            Box::new(|h| h.batch_size = 0),
            Box::new(|h| h.beta.clear()),
        ];
        for f in cases {
            let mut h = base.clone();
            f(&mut h);
            assert!(h.validate().is_err(), "{h:?}");
        }
    }
}
