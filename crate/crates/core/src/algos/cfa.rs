use super::state::{local_update, ExchangeMsg, NodeState, Payload, RoundCtx};
use super::consensus_aggregate;
use crate::error::{Error, Result};
use crate::nn::ModelParams;

/// One round of model-only consensus followed by a local SGD pass.
///
/// The inbox holds the neighbors' messages from the previous round; a
/// neighbor without a message contributes nothing this round.
pub fn cfa_round(state: &NodeState, inbox: &[&ExchangeMsg], ctx: &RoundCtx<'_>) -> Result<(NodeState, ExchangeMsg)> {
    let received: Vec<(f64, &ModelParams)> = ctx
        .neighbors
        .iter()
        .filter_map(|&(i, alpha)| ctx.message_from(inbox, i).map(|m| (alpha, m.shared_point())))
        .collect();
    let psi = consensus_aggregate(&state.model, &received, ctx.hyper.eps)?;

    let mut next = state.clone();
    let decay = ctx.hyper.momentum;
    let momentum = match (decay, next.velocity.as_mut()) {
        (Some(d), Some(v)) => Some((d, v)),
        _ => None,
    };
    let prev_velocity = state.velocity.clone();
    let w = local_update(
        ctx.network,
        psi.clone(),
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
    let shared = match (ctx.hyper.nesterov, decay, prev_velocity) {
        (true, Some(d), Some(v)) => {
            let mut look = w.clone();
            look.axpy(d, &v)?;
            look
        }
        _ => w.clone(),
    };
    next.model = w;
    next.aggregate = psi;
    next.round = state.round + 1;
    let msg = ExchangeMsg { sender: state.id, round: next.round, payload: Payload::Model(shared) };
    Ok((next, msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::HyperParams;
    use crate::data::{partition, synth_digits, PartitionSpec, SynthOptions};
    use crate::nn::Network;

    #[test]
    fn zero_step_is_pure_consensus() {
        let data = synth_digits(3, 60, &SynthOptions::digits()).unwrap();
        let shards = partition(&data, 3, &PartitionSpec::iid(), 1).unwrap();
        let net = Network::single_fc(784, 10).unwrap();
        let hyper = HyperParams { eps: 0.5, mu: 0.0, ..HyperParams::default() };
        let states: Vec<NodeState> = (0..3).map(|k| NodeState::new(k, net.init(k as u64), &hyper)).collect();
        let msgs: Vec<ExchangeMsg> = states.iter().map(|s| s.initial_message(false)).collect();
        let inbox: Vec<&ExchangeMsg> = msgs.iter().collect();
        let nbrs = [(1, 0.5), (2, 0.5)];
        let ctx = RoundCtx { network: &net, hyper: &hyper, neighbors: &nbrs, shard: &shards[0], seed: 1, round: 0 };
        let (next, msg) = cfa_round(&states[0], &inbox, &ctx).unwrap();
        let want = consensus_aggregate(&states[0].model, &[(0.5, &states[1].model), (0.5, &states[2].model)], 0.5).unwrap();
        assert_eq!(next.model, want);
        assert_eq!(msg.shared_point(), &want);
        assert_eq!(next.round, 1);

        // Dropping neighbor 2's message drops its term.
        let (partial, _) = cfa_round(&states[0], &inbox[..2], &ctx).unwrap();
        let want = consensus_aggregate(&states[0].model, &[(0.5, &states[1].model)], 0.5).unwrap();
        assert_eq!(partial.model, want);
    }
}
