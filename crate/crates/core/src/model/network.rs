//! Forward graph of the grouper, recorded on a [`Tape`].

use crate::autodiff::{Array, Tape, Var};
use crate::error::Result;

use super::params::{HyperParams, ParamVars};

/// Mixture-density parameters for every step, in log space where that is what the
/// likelihood consumes. All `[N, M]` except `pen_logits` (`[N, 2]`).
#[derive(Clone, Copy, Debug)]
pub struct MdnVars {
    pub log_pi: Var,
    pub mu_x: Var,
    pub mu_y: Var,
    pub log_sigma_x: Var,
    pub log_sigma_y: Var,
    pub rho: Var,
    pub pen_logits: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub mu: Var,
    /// Log-variance `σ̂`; `σ = exp(σ̂ / 2)`.
    pub log_var: Var,
    pub sigma: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    /// `[N, feat_dim]`
    pub features: Var,
    pub mdn: MdnVars,
}

/// One gated recurrent step. Gate layout in `w`/`b`: input, forget, candidate, output.
fn lstm_step(
    tape: &mut Tape,
    (w, b): (Var, Var),
    input: &[Var],
    h: Var,
    c: Var,
    hidden: usize,
) -> Result<(Var, Var)> {
    let mut parts = input.to_vec();
    parts.push(h);
    let x = tape.concat(&parts)?;
    let gates = tape.affine(x, w, b)?;
    let i = tape.slice(gates, 0, hidden)?;
    let f = tape.slice(gates, hidden, hidden)?;
    let g = tape.slice(gates, 2 * hidden, hidden)?;
    let o = tape.slice(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

fn step_inputs(tape: &mut Tape, input: &Array) -> Vec<Var> {
    (0..input.outer_len())
        .map(|r| tape.constant(Array::vector(input.row(r).to_vec())))
        .collect()
}

/// Bidirectional recurrent pass over `input` (`[N, 3]`), projected to `(μ, σ̂)`.
pub fn encode(
    tape: &mut Tape,
    p: &ParamVars,
    hyper: &HyperParams,
    input: &Array,
) -> Result<EncoderVars> {
    let e = hyper.enc_hidden;
    let steps = step_inputs(tape, input);
    let zero = tape.constant(Array::zeros(&[e]));
    let (mut hf, mut cf) = (zero, zero);
    for &x in &steps {
        (hf, cf) = lstm_step(tape, p.enc_fw, &[x], hf, cf, e)?;
    }
    let (mut hb, mut cb) = (zero, zero);
    for &x in steps.iter().rev() {
        (hb, cb) = lstm_step(tape, p.enc_bw, &[x], hb, cb, e)?;
    }
    let both = tape.concat(&[hf, hb])?;
    let proj = tape.affine(both, p.latent.0, p.latent.1)?;
    let l = hyper.latent_dim;
    let mu = tape.slice(proj, 0, l)?;
    let log_var = tape.slice(proj, l, l)?;
    let half = tape.scale(log_var, 0.5);
    let sigma = tape.exp(half);
    Ok(EncoderVars { mu, log_var, sigma })
}

/// `z = μ + σ ⊙ ε` with `ε` supplied as a constant.
pub fn reparameterize(tape: &mut Tape, mu: Var, sigma: Var, eps: &Array) -> Result<Var> {
    let e = tape.constant(eps.clone());
    let noise = tape.mul(sigma, e)?;
    tape.add(mu, noise)
}

/// Teacher-forced decoder conditioned on `z`: per-segment features and per-step mixture parameters.
pub fn decode(
    tape: &mut Tape,
    p: &ParamVars,
    hyper: &HyperParams,
    input: &Array,
    z: Var,
) -> Result<DecoderVars> {
    let d = hyper.dec_hidden;
    let n = input.outer_len();
    let init = tape.affine(z, p.init.0, p.init.1)?;
    let init = tape.tanh(init);
    let mut h = tape.slice(init, 0, d)?;
    let mut c = tape.slice(init, d, d)?;
    let steps = step_inputs(tape, input);
    let mut before = Vec::with_capacity(n);
    let mut after = Vec::with_capacity(n);
    for &x in &steps {
        before.push(h);
        let inputs: &[Var] = if hyper.z_every_step { &[x, z] } else { &[x] };
        (h, c) = lstm_step(tape, p.dec, inputs, h, c, d)?;
        after.push(h);
    }
    let after = tape.concat(&after)?;
    let after = tape.reshape(after, &[n, d])?;
    let features = tape.affine(after, p.feat.0, p.feat.1)?;

    let before = tape.concat(&before)?;
    let before = tape.reshape(before, &[n, d])?;
    let raw = tape.affine(before, p.mdn.0, p.mdn.1)?;
    let m = hyper.mixtures;
    let logits = tape.slice(raw, 0, m)?;
    let log_pi = log_softmax(tape, logits)?;
    let mu_x = tape.slice(raw, m, m)?;
    let mu_y = tape.slice(raw, 2 * m, m)?;
    let log_sigma_x = tape.slice(raw, 3 * m, m)?;
    let log_sigma_y = tape.slice(raw, 4 * m, m)?;
    let rho = tape.slice(raw, 5 * m, m)?;
    let rho = tape.tanh(rho);
    let pen_logits = tape.slice(raw, 6 * m, 2)?;
    Ok(DecoderVars {
        features,
        mdn: MdnVars {
            log_pi,
            mu_x,
            mu_y,
            log_sigma_x,
            log_sigma_y,
            rho,
            pen_logits,
        },
    })
}

/// Broadcast a `[N]` vector to `[N, m]` by repeating each entry along the new last axis.
pub(crate) fn repeat_cols(tape: &mut Tape, v: Var, m: usize) -> Result<Var> {
    let n = tape.value(v).len();
    let col = tape.reshape(v, &[n, 1])?;
    let ones = tape.constant(Array::full(&[m, 1], 1.0));
    let zeros = tape.constant(Array::zeros(&[m]));
    tape.affine(col, ones, zeros)
}

/// Row maxima of a `[N, m]` node as a constant of the same shape.
pub(crate) fn row_max_const(tape: &mut Tape, x: Var) -> Var {
    let xv = tape.value(x);
    let m = xv.last_dim();
    let mut data = Vec::with_capacity(xv.len());
    for r in xv.data().chunks(m) {
        let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        data.extend(std::iter::repeat_n(mx, m));
    }
    let shape = xv.shape().to_vec();
    tape.constant(Array::new(&shape, data).expect("same element count"))
}

/// `log Σ exp` over the last axis of `[N, m]`, shifted by the row max.
pub(crate) fn log_sum_exp(tape: &mut Tape, x: Var) -> Result<Var> {
    let shift = row_max_const(tape, x);
    let shifted = tape.sub(x, shift)?;
    let e = tape.exp(shifted);
    let s = tape.sum_last(e)?;
    let ls = tape.log(s)?;
    let shift_col = tape.slice(shift, 0, 1)?;
    let n = tape.value(shift_col).len();
    let shift_col = tape.reshape(shift_col, &[n])?;
    tape.add(ls, shift_col)
}

pub(crate) fn log_softmax(tape: &mut Tape, x: Var) -> Result<Var> {
    let m = tape.value(x).last_dim();
    let lse = log_sum_exp(tape, x)?;
    let lse = repeat_cols(tape, lse, m)?;
    tape.sub(x, lse)
}

/// Pairwise affinity `Ĝ_ij = sigmoid(w · |f_i − f_j| + b)` as an `[N, N]` node.
///
/// The diagonal is left as the classifier's output on a zero difference vector.
pub fn affinity(tape: &mut Tape, p: &ParamVars, features: Var) -> Result<Var> {
    let n = tape.value(features).outer_len();
    let rows: Vec<usize> = (0..n * n).map(|k| k / n).collect();
    let cols: Vec<usize> = (0..n * n).map(|k| k % n).collect();
    let fi = tape.gather_rows(features, &rows)?;
    let fj = tape.gather_rows(features, &cols)?;
    let diff = tape.sub(fi, fj)?;
    let diff = tape.abs(diff);
    let logits = tape.affine(diff, p.affinity.0, p.affinity.1)?;
    let probs = tape.sigmoid(logits);
    tape.reshape(probs, &[n, n])
}
