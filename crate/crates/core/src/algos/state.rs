use std::collections::BTreeMap;

use super::HyperParams;
use crate::data::{minibatches, Shard};
use crate::error::Result;
use crate::nn::{GradientSet, ModelParams, Network};

/// Everything a device carries from one round to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    /// Rounds completed so far.
    pub round: usize,
    /// Local model after the last round.
    pub model: ModelParams,
    /// Consensus aggregate computed in the last round.
    pub aggregate: ModelParams,
    /// MEWMA of the gradients this device computed for each neighbor's aggregate.
    pub mewma: BTreeMap<usize, GradientSet>,
    /// Heavy-ball velocity, present when momentum is enabled.
    pub velocity: Option<GradientSet>,
}

impl NodeState {
    pub fn new(id: usize, model: ModelParams, hyper: &HyperParams) -> Self {
        let velocity = hyper.momentum.map(|_| ModelParams::zeros_like(&model));
        NodeState {
            id,
            round: 0,
            aggregate: model.clone(),
            model,
            mewma: BTreeMap::new(),
            velocity,
        }
    }

    /// The message this device sends before it has run any round.
    pub fn initial_message(&self, gradient_exchange: bool) -> ExchangeMsg {
        let payload = if gradient_exchange {
            Payload::Gradients {
                aggregate: self.model.clone(),
                gradients: BTreeMap::new(),
                lookahead: false,
            }
        } else {
            Payload::Model(self.model.clone())
        };
        ExchangeMsg { sender: self.id, round: self.round, payload }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Model-only exchange.
    Model(ModelParams),
    /// The sender's aggregate (or look-ahead point) plus, per neighbor, the
    /// gradient the sender computed on that neighbor's last aggregate.
    Gradients {
        aggregate: ModelParams,
        gradients: BTreeMap<usize, GradientSet>,
        lookahead: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeMsg {
    pub sender: usize,
    /// Rounds the sender had completed when it produced the message.
    pub round: usize,
    pub payload: Payload,
}

impl ExchangeMsg {
    /// The parameter vector shared with neighbors.
    pub fn shared_point(&self) -> &ModelParams {
        match &self.payload {
            Payload::Model(m) => m,
            Payload::Gradients { aggregate, .. } => aggregate,
        }
    }

    /// The gradient the sender computed for device `k`, if any.
    pub fn gradient_for(&self, k: usize) -> Option<&GradientSet> {
        match &self.payload {
            Payload::Model(_) => None,
            Payload::Gradients { gradients, .. } => gradients.get(&k),
        }
    }

    /// Number of parameter tensors of model size carried by the message.
    pub fn tensor_count(&self) -> usize {
        match &self.payload {
            Payload::Model(_) => 1,
            Payload::Gradients { gradients, .. } => 1 + gradients.len(),
        }
    }
}

/// Per-node inputs for one round.
#[derive(Debug, Clone, Copy)]
pub struct RoundCtx<'a> {
    pub network: &'a Network,
    pub hyper: &'a HyperParams,
    /// `(neighbor, alpha)` pairs for this node.
    pub neighbors: &'a [(usize, f64)],
    pub shard: &'a Shard,
    pub seed: u64,
    pub round: usize,
}

impl RoundCtx<'_> {
    pub(crate) fn message_from<'m>(&self, inbox: &[&'m ExchangeMsg], i: usize) -> Option<&'m ExchangeMsg> {
        inbox.iter().find(|m| m.sender == i).copied()
    }
}

/// One pass of mini-batch SGD over `shard` starting from `start`. With
/// `momentum = Some((decay, v))` each step is `v <- decay*v - step*g`,
/// `W <- W + v`, and `v` is updated in place.
#[allow(clippy::too_many_arguments)]
pub fn local_update(
    network: &Network,
    start: ModelParams,
    shard: &Shard,
    batch_size: usize,
    step: f64,
    seed: u64,
    epoch: usize,
    mut momentum: Option<(f64, &mut GradientSet)>,
) -> Result<ModelParams> {
    let mut w = start;
    for batch in minibatches(shard, batch_size, seed, epoch)? {
        let (_, g) = network.backward(&w, &batch)?;
        match momentum.as_mut() {
            Some((decay, v)) => {
                v.scale(*decay);
                v.axpy(-step, &g)?;
                w.axpy(1.0, v)?;
            }
            None => w.axpy(-step, &g)?,
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition, synth_digits, PartitionSpec, SynthOptions};
    use crate::nn::sgd_step;

    #[test]
    fn local_pass_matches_manual_steps() {
        let data = synth_digits(3, 40, &SynthOptions::digits()).unwrap();
        let shards = partition(&data, 2, &PartitionSpec::iid(), 1).unwrap();
        let net = Network::single_fc(784, 10).unwrap();
        let w0 = net.init(4);
        let got = local_update(&net, w0.clone(), &shards[0], 5, 0.1, 7, 2, None).unwrap();
        let mut want = w0;
        for b in minibatches(&shards[0], 5, 7, 2).unwrap() {
            let (_, g) = net.backward(&want, &b).unwrap();
            want = sgd_step(&want, &g, 0.1).unwrap();
        }
        assert_eq!(got, want);
    }

    #[test]
    fn zero_decay_momentum_equals_sgd() {
        let data = synth_digits(3, 40, &SynthOptions::digits()).unwrap();
        let shards = partition(&data, 2, &PartitionSpec::iid(), 1).unwrap();
        let net = Network::single_fc(784, 10).unwrap();
        let w0 = net.init(4);
        let mut v = ModelParams::zeros_like(&w0);
        let a = local_update(&net, w0.clone(), &shards[1], 4, 0.05, 1, 0, Some((0.0, &mut v))).unwrap();
        let b = local_update(&net, w0, &shards[1], 4, 0.05, 1, 0, None).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
        assert!(v.norm() > 0.0);
    }
}
