use super::quantize::{quantize_params, QuantBits};
use super::state::{local_update, ExchangeMsg, NodeState, Payload, RoundCtx};
use crate::data::Shard;
use crate::error::{Error, Result};
use crate::nn::{Example, GradientSet, ModelParams, Network};

/// Gradient of the mean loss over the whole shard.
pub fn shard_gradient(network: &Network, w: &ModelParams, shard: &Shard) -> Result<GradientSet> {
    Ok(network.backward(w, &shard.refs())?.1)
}

/// One server round of federated averaging:
/// `W - mu_s / n * sum_k (E_k / E) P[grad L_k(W)]` over the `n` participants,
/// where `total_examples` is `E` summed over all devices.
pub fn fa_round(
    network: &Network,
    w: &ModelParams,
    participants: &[&Shard],
    total_examples: usize,
    mu_s: f64,
    quantize: Option<QuantBits>,
) -> Result<ModelParams> {
    if participants.is_empty() {
        return Err(Error::arg("federated averaging needs at least one participant"));
    }
    if total_examples == 0 {
        return Err(Error::EmptyDataset);
    }
    let n = participants.len() as f64;
    let mut out = w.clone();
    for shard in participants {
        let g = shard_gradient(network, w, shard)?;
        let g = match quantize {
            Some(bits) => quantize_params(&g, bits),
            None => g,
        };
        let weight = shard.len() as f64 / total_examples as f64;
        out.axpy(-mu_s * weight / n, &g)?;
    }
    Ok(out)
}

/// One full-gradient step on the pooled data.
pub fn centralized_step(network: &Network, w: &ModelParams, pooled: &[&Example], mu_s: f64) -> Result<ModelParams> {
    if pooled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (_, g) = network.backward(w, pooled)?;
    let mut out = w.clone();
    out.axpy(-mu_s, &g)?;
    Ok(out)
}

/// One mini-batch SGD epoch over the pooled data.
pub fn centralized_epoch(
    network: &Network,
    w: &ModelParams,
    pooled: &Shard,
    batch_size: usize,
    mu: f64,
    seed: u64,
    epoch: usize,
) -> Result<ModelParams> {
    local_update(network, w.clone(), pooled, batch_size, mu, seed, epoch, None)
}

/// A local pass with no communication.
pub fn isolated_round(state: &NodeState, ctx: &RoundCtx<'_>) -> Result<(NodeState, ExchangeMsg)> {
    let mut next = state.clone();
    let momentum = match (ctx.hyper.momentum, next.velocity.as_mut()) {
        (Some(d), Some(v)) => Some((d, v)),
        _ => None,
    };
    let w = local_update(
        ctx.network,
        state.model.clone(),
        ctx.shard,
        ctx.hyper.batch_size,
        ctx.hyper.mu,
        ctx.seed,
        ctx.round,
        momentum,
    )?;
    if !w.is_finite() {
        return Err(Error::Divergence { node: state.id, round: ctx.round });
    }
    next.aggregate = state.model.clone();
    next.model = w.clone();
    next.round = state.round + 1;
    Ok((next, ExchangeMsg { sender: state.id, round: state.round + 1, payload: Payload::Model(w) }))
}
