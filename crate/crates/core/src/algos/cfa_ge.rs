use std::collections::BTreeMap;

use super::quantize::quantize_params;
use super::state::{local_update, ExchangeMsg, NodeState, Payload, RoundCtx};
use super::{consensus_aggregate, HyperParams, SharePoint};
use crate::data::{probe_batch, Shard};
use crate::error::{Error, Result};
use crate::nn::{GradientSet, ModelParams, Network};
use crate::topology::MixingWeights;

/// Snapshot of every device at the start of a synchronous round.
#[derive(Debug, Clone, Copy)]
pub struct SyncView<'a> {
    pub models: &'a [ModelParams],
    pub shards: &'a [Shard],
    pub weights: &'a MixingWeights,
}

/// `rho * fresh + (1 - rho) * prev`.
pub fn mewma_update(prev: &GradientSet, fresh: &GradientSet, rho: f64) -> Result<GradientSet> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::arg(format!("MEWMA factor must lie in (0,1], got {rho}")));
    }
    let mut out = prev.clone();
    out.scale(1.0 - rho);
    out.axpy(rho, fresh)?;
    Ok(out)
}

/// `decay * prev - sum_i rates (.) g_i`.
pub fn momentum_velocity(prev: &GradientSet, grads: &[&GradientSet], rates: &[f64], decay: f64) -> Result<GradientSet> {
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::arg(format!("momentum decay must lie in [0,1), got {decay}")));
    }
    let neg: Vec<f64> = rates.iter().map(|r| -r).collect();
    let mut v = prev.clone();
    v.scale(decay);
    for g in grads {
        v.axpy_layerwise(&neg, g)?;
    }
    Ok(v)
}

fn project(g: &GradientSet, hyper: &HyperParams) -> GradientSet {
    match hyper.quantize {
        Some(bits) => quantize_params(g, bits),
        None => g.clone(),
    }
}

fn gradient_at(network: &Network, point: &ModelParams, shard: &Shard, ctx: &RoundCtx<'_>, peer: usize) -> Result<GradientSet> {
    let batch = probe_batch(shard, ctx.hyper.batch_size, ctx.seed, ctx.round, peer)?;
    Ok(network.backward(point, &batch)?.1)
}

fn aggregate_of(view: &SyncView<'_>, j: usize, eps: f64) -> Result<ModelParams> {
    let received: Vec<(f64, &ModelParams)> = view
        .weights
        .row(j)
        .iter()
        .map(|&(i, a)| (a, &view.models[i]))
        .collect();
    consensus_aggregate(&view.models[j], &received, eps)
}

/// Applies the neighbor gradients to `psi` (plain or heavy-ball), runs the
/// local pass, and returns the new model.
fn descend(
    next: &mut NodeState,
    psi: &ModelParams,
    grads: &[GradientSet],
    ctx: &RoundCtx<'_>,
) -> Result<ModelParams> {
    let hyper = ctx.hyper;
    let rates = hyper.layer_rates(psi.num_layers());
    let refs: Vec<&GradientSet> = grads.iter().collect();
    let mut start = psi.clone();
    match (hyper.momentum, next.velocity.as_mut()) {
        (Some(decay), Some(v)) => {
            *v = momentum_velocity(v, &refs, &rates, decay)?;
            start.axpy(1.0, v)?;
        }
        _ => {
            let neg: Vec<f64> = rates.iter().map(|r| -r).collect();
            for g in &refs {
                start.axpy_layerwise(&neg, g)?;
            }
        }
    }
    let momentum = match (hyper.momentum, next.velocity.as_mut()) {
        (Some(d), Some(v)) => Some((d, v)),
        _ => None,
    };
    let w = local_update(
        ctx.network,
        start,
        ctx.shard,
        hyper.batch_size,
        hyper.self_step(),
        ctx.seed,
        ctx.round,
        momentum,
    )?;
    if !w.is_finite() {
        return Err(Error::Divergence { node: next.id, round: ctx.round });
    }
    Ok(w)
}

fn outgoing(next: &NodeState, prev_velocity: Option<&GradientSet>, hyper: &HyperParams) -> Result<ExchangeMsg> {
    let (base, velocity) = match hyper.share {
        SharePoint::Model => (&next.model, next.velocity.as_ref()),
        SharePoint::Aggregate => (&next.aggregate, prev_velocity),
    };
    let (aggregate, lookahead) = match (hyper.nesterov, hyper.momentum, velocity) {
        (true, Some(d), Some(v)) => {
            let mut look = base.clone();
            look.axpy(d, v)?;
            (look, true)
        }
        _ => (base.clone(), false),
    };
    Ok(ExchangeMsg {
        sender: next.id,
        round: next.round,
        payload: Payload::Gradients { aggregate, gradients: next.mewma.clone(), lookahead },
    })
}

/// Synchronous gradient-exchange round used during warm-up. Every quantity
/// comes from the same snapshot: the node aggregates its neighbors' models,
/// each neighbor evaluates a gradient of its own loss at that aggregate on
/// one batch, the node applies them, then runs its local pass. The node also
/// evaluates its own loss at each neighbor's aggregate to seed the MEWMA store
/// that it ships for the first asynchronous round.
pub fn cfa_ge_round_4stage(state: &NodeState, view: &SyncView<'_>, ctx: &RoundCtx<'_>) -> Result<(NodeState, ExchangeMsg)> {
    let k = state.id;
    let hyper = ctx.hyper;
    if view.models.len() != view.shards.len() || k >= view.models.len() {
        return Err(Error::arg("snapshot does not cover the node"));
    }
    let psi = aggregate_of(view, k, hyper.eps)?;
    let mut grads = Vec::with_capacity(ctx.neighbors.len());
    for &(i, _) in ctx.neighbors {
        let g = gradient_at(ctx.network, &psi, &view.shards[i], ctx, k)?;
        grads.push(project(&g, hyper));
    }

    let mut next = state.clone();
    let prev_velocity = state.velocity.clone();
    let w = descend(&mut next, &psi, &grads, ctx)?;

    let mut store = BTreeMap::new();
    for &(i, _) in ctx.neighbors {
        let psi_i = aggregate_of(view, i, hyper.eps)?;
        let fresh = gradient_at(ctx.network, &psi_i, ctx.shard, ctx, i)?;
        let prev = state
            .mewma
            .get(&i)
            .cloned()
            .unwrap_or_else(|| GradientSet::zeros_like(&fresh));
        store.insert(i, mewma_update(&prev, &fresh, hyper.mewma)?);
    }

    next.model = w;
    next.aggregate = psi.clone();
    next.mewma = store;
    next.round = state.round + 1;
    let msg = outgoing(&next, prev_velocity.as_ref(), hyper)?;
    Ok((next, msg))
}

/// Asynchronous gradient-exchange round. Uses only the previous round's
/// messages: the received points are combined into this node's aggregate,
/// the node refreshes the MEWMA of its own gradient at each received point,
/// applies the gradients neighbors computed for it, and runs its local pass.
/// A missing message drops that neighbor's terms for the round. What the node
/// publishes is set by [`HyperParams::share`].
pub fn cfa_ge_round_2stage(state: &NodeState, inbox: &[&ExchangeMsg], ctx: &RoundCtx<'_>) -> Result<(NodeState, ExchangeMsg)> {
    let k = state.id;
    let hyper = ctx.hyper;
    let msgs: Vec<(f64, &ExchangeMsg)> = ctx
        .neighbors
        .iter()
        .filter_map(|&(i, a)| ctx.message_from(inbox, i).map(|m| (a, m)))
        .collect();
    let received: Vec<(f64, &ModelParams)> = msgs.iter().map(|&(a, m)| (a, m.shared_point())).collect();
    let psi = consensus_aggregate(&state.model, &received, hyper.eps)?;

    // Keep exactly one MEWMA slot per current neighbor.
    let mut store: BTreeMap<usize, GradientSet> = BTreeMap::new();
    for &(i, _) in ctx.neighbors {
        let slot = state
            .mewma
            .get(&i)
            .cloned()
            .unwrap_or_else(|| GradientSet::zeros_like(&state.model));
        store.insert(i, slot);
    }
    for &(_, m) in &msgs {
        let fresh = gradient_at(ctx.network, m.shared_point(), ctx.shard, ctx, m.sender)?;
        let slot = store.get_mut(&m.sender).expect("neighbor slot");
        *slot = mewma_update(slot, &fresh, hyper.mewma)?;
    }

    let grads: Vec<GradientSet> = msgs
        .iter()
        .filter_map(|&(_, m)| m.gradient_for(k))
        .map(|g| project(g, hyper))
        .collect();

    let mut next = state.clone();
    let prev_velocity = state.velocity.clone();
    let w = descend(&mut next, &psi, &grads, ctx)?;
    next.model = w;
    next.aggregate = psi.clone();
    next.mewma = store;
    next.round = state.round + 1;
    let msg = outgoing(&next, prev_velocity.as_ref(), hyper)?;
    Ok((next, msg))
}
