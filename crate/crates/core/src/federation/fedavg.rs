//! Dataset-size-weighted parameter averaging.

use crate::approximator::ApproximatorParams;
use crate::error::{check_dim, Error, Result};

/// `p_k = |D_k| / Σ_j |D_j|`.
pub fn fedavg_weights(sizes: &[usize]) -> Result<Vec<f64>> {
    let total: usize = sizes.iter().sum();
    if sizes.is_empty() || total == 0 {
        return Err(Error::InvalidArgument("FedAvg needs at least one non-empty dataset".into()));
    }
    Ok(sizes.iter().map(|n| *n as f64 / total as f64).collect())
}

/// `Σ_k p_k x_k`, accumulated as `x_0 + Σ_k p_k (x_k - x_0)` so identical
/// uploads average to a bitwise copy.
pub fn fedavg_aggregate(params: &[&ApproximatorParams], sizes: &[usize]) -> Result<ApproximatorParams> {
    check_dim("FedAvg dataset sizes", params.len(), sizes.len())?;
    let weights = fedavg_weights(sizes)?;
    let base = params[0];
    if let Some(k) = params.iter().position(|p| !p.same_shape(base)) {
        return Err(Error::Shape(format!("upload {k} does not match the first upload's layers")));
    }
    let mut out = base.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        let x0 = base.values()[i];
        let shift: f64 = params.iter().zip(&weights).map(|(p, w)| w * (p.values()[i] - x0)).sum();
        *v = x0 + shift;
    }
    Ok(out)
}
