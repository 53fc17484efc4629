//! Spatial feature transform and semantic region-adaptive normalization on
//! `(N, C, H, W)` activation tensors.

use ndarray::{Array4, Axis, Zip};

use crate::error::{Error, Result};

pub type ActivationTensor = Array4<f64>;

pub const DEFAULT_EPS: f64 = 1e-5;

fn check(t: &ActivationTensor, what: &str) -> Result<()> {
    if t.shape().iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("{what} has a zero dimension {:?}", t.shape())));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite values")));
    }
    Ok(())
}

fn same_shape(a: &ActivationTensor, b: &ActivationTensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "{what} shape {:?} differs from {:?}",
            b.shape(),
            a.shape()
        )));
    }
    Ok(())
}

/// `gamma ⊙ f + beta`, element-wise.
pub fn sft_apply(
    f: &ActivationTensor,
    gamma: &ActivationTensor,
    beta: &ActivationTensor,
) -> Result<ActivationTensor> {
    check(f, "feature map")?;
    same_shape(f, gamma, "gamma")?;
    same_shape(f, beta, "beta")?;
    check(gamma, "gamma")?;
    check(beta, "beta")?;
    Ok(Zip::from(f)
        .and(gamma)
        .and(beta)
        .map_collect(|&f, &g, &b| g * f + b))
}

/// Per-channel mean and population standard deviation over `(N, H, W)`.
/// The variance is computed as `E[z²] − μ²` and floored at zero.
pub fn channel_stats(z: &ActivationTensor) -> Result<(Vec<f64>, Vec<f64>)> {
    check(z, "activation")?;
    let mut mu = Vec::with_capacity(z.shape()[1]);
    let mut sigma = Vec::with_capacity(z.shape()[1]);
    for lane in z.axis_iter(Axis(1)) {
        let n = lane.len() as f64;
        let mean = lane.sum() / n;
        let mean_sq = lane.iter().map(|v| v * v).sum::<f64>() / n;
        mu.push(mean);
        sigma.push((mean_sq - mean * mean).max(0.0).sqrt());
    }
    Ok((mu, sigma))
}

/// `x · (z − μ_c) / (σ_c + eps) + y` with batch statistics of `z`.
pub fn sean_apply(
    z: &ActivationTensor,
    x: &ActivationTensor,
    y: &ActivationTensor,
    eps: f64,
) -> Result<ActivationTensor> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    same_shape(z, x, "scale map")?;
    same_shape(z, y, "shift map")?;
    check(x, "scale map")?;
    check(y, "shift map")?;
    let (mu, sigma) = channel_stats(z)?;
    let mut out = z.clone();
    for (c, mut lane) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (m, d) = (mu[c], sigma[c] + eps);
        lane.mapv_inplace(|v| (v - m) / d);
    }
    Zip::from(&mut out)
        .and(x)
        .and(y)
        .for_each(|o, &x, &y| *o = x * *o + y);
    Ok(out)
}
