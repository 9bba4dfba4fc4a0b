//! The grouper: a bidirectional recurrent encoder to a Gaussian latent, a recurrent decoder
//! with a per-segment feature head and a mixture-density head, and the pairwise affinity
//! classifier on top of the features.
//!
//! The tape-level builders live in [`network`] and [`losses`]; the functions here evaluate
//! them on plain values.

pub mod losses;
pub mod network;
mod params;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Array, Tape};
use crate::error::{Error, Result};
use crate::stroke::{AffinityMatrix, Sketch};

pub use losses::{
    loss_full, loss_global, loss_global_with, loss_kl, loss_local, loss_recon, GlobalLoss,
    LossBreakdown, LossNoise, MdnParams, ReconLoss, Triplet,
};
pub use params::{param_shapes, GrouperParams, HyperParams, ParamVars, PARAM_NAMES};

/// Per-segment features and per-step mixture parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderOutput {
    /// `[N, feat_dim]`
    pub features: Array,
    pub mdn: MdnParams,
}

/// Latent mean and standard deviation of a sketch.
pub fn encode(
    sketch: &Sketch,
    params: &GrouperParams,
    hyper: &HyperParams,
) -> Result<(Array, Array)> {
    let mut tape = Tape::new();
    let p = ParamVars::constants(&mut tape, params);
    let enc = network::encode(&mut tape, &p, hyper, &sketch.to_array())?;
    Ok((tape.value(enc.mu).clone(), tape.value(enc.sigma).clone()))
}

/// `z = μ + σ ⊙ ε` with standard normal `ε`.
pub fn sample_latent<R: Rng + ?Sized>(mu: &Array, sigma: &Array, rng: &mut R) -> Result<Array> {
    if mu.shape() != sigma.shape() {
        return Err(Error::Contract("mu and sigma differ in shape".into()));
    }
    if sigma.data().iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let data = mu
        .data()
        .iter()
        .zip(sigma.data())
        .map(|(&m, &s)| {
            let e: f64 = StandardNormal.sample(&mut *rng);
            m + s * e
        })
        .collect();
    Ok(Array::vector(data))
}

pub fn decode(
    sketch: &Sketch,
    z: &Array,
    params: &GrouperParams,
    hyper: &HyperParams,
) -> Result<DecoderOutput> {
    if z.shape() != [hyper.latent_dim] {
        return Err(Error::Contract(format!(
            "latent has shape {:?}, expected [{}]",
            z.shape(),
            hyper.latent_dim
        )));
    }
    let mut tape = Tape::new();
    let p = ParamVars::constants(&mut tape, params);
    let zv = tape.constant(z.clone());
    let dec = network::decode(&mut tape, &p, hyper, &sketch.to_array(), zv)?;
    let v = |x| tape.value(x).clone();
    let mdn = MdnParams {
        pi: v(dec.mdn.log_pi).map(f64::exp),
        mu_x: v(dec.mdn.mu_x),
        mu_y: v(dec.mdn.mu_y),
        sigma_x: v(dec.mdn.log_sigma_x).map(f64::exp),
        sigma_y: v(dec.mdn.log_sigma_y).map(f64::exp),
        rho: v(dec.mdn.rho),
        pen_logits: v(dec.mdn.pen_logits),
    };
    Ok(DecoderOutput {
        features: v(dec.features),
        mdn,
    })
}

/// Raw classifier output on every ordered pair, diagonal included, as `[N, N]`.
pub fn affinity_scores(features: &Array, params: &GrouperParams) -> Result<Array> {
    if features.shape().len() != 2 || features.shape()[1] != params.tensors()[12].shape()[1] {
        return Err(Error::Contract(format!(
            "features of shape {:?} do not fit the affinity classifier",
            features.shape()
        )));
    }
    let mut tape = Tape::new();
    let p = ParamVars::constants(&mut tape, params);
    let f = tape.constant(features.clone());
    let g = network::affinity(&mut tape, &p, f)?;
    Ok(tape.value(g).clone())
}

/// Predicted affinity with the diagonal set to exactly 1.
pub fn predict_affinity(features: &Array, params: &GrouperParams) -> Result<AffinityMatrix> {
    let scores = affinity_scores(features, params)?;
    let n = scores.shape()[0];
    AffinityMatrix::predicted(n, scores.into_data())
}

#[cfg(test)]
mod tests;
