use crate::error::{Error, Result};
use crate::nn::ModelParams;

/// `psi = W + eps * sum_i alpha_i (M_i - W)` over the received models.
/// Neighbors whose message is missing are simply absent from `received`.
pub fn consensus_aggregate(own: &ModelParams, received: &[(f64, &ModelParams)], eps: f64) -> Result<ModelParams> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::arg(format!("eps must be > 0, got {eps}")));
    }
    let mut psi = own.clone();
    for &(alpha, m) in received {
        own.check_congruent(m)?;
        let c = eps * alpha;
        for ((p, &w), &v) in psi.values_mut().zip(own.values()).zip(m.values()) {
            *p += c * (v - w);
        }
    }
    Ok(psi)
}
