//! Grouping and generative losses, on the tape and as plain-value wrappers.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};
use crate::stroke::{AffinityMatrix, GroupLabels, Sketch};

use super::network::{self, log_sum_exp, MdnVars};
use super::params::{GrouperParams, HyperParams, ParamVars};

const CLAMP: f64 = 1e-7;
/// Floor on `1 − ρ²` so a saturated correlation cannot produce `log 0`.
const MIN_ONE_MINUS_RHO2: f64 = 1e-6;

/// Anchor, positive, negative.
pub type Triplet = (usize, usize, usize);

/// Number of triplets with a same-group positive and a different-group negative.
pub fn count_valid_triplets(labels: &GroupLabels) -> usize {
    let n = labels.len();
    let sizes = group_sizes(labels);
    labels
        .as_slice()
        .iter()
        .map(|g| {
            let s = sizes[g];
            (s - 1) * (n - s)
        })
        .sum()
}

fn group_sizes(labels: &GroupLabels) -> std::collections::HashMap<usize, usize> {
    let mut sizes = std::collections::HashMap::new();
    for &g in labels.as_slice() {
        *sizes.entry(g).or_insert(0) += 1;
    }
    sizes
}

/// Every valid triplet in lexicographic order.
pub fn all_triplets(labels: &GroupLabels) -> Vec<Triplet> {
    let l = labels.as_slice();
    let n = l.len();
    let mut out = Vec::new();
    for a in 0..n {
        for p in (0..n).filter(|&p| p != a && l[p] == l[a]) {
            for neg in (0..n).filter(|&k| l[k] != l[a]) {
                out.push((a, p, neg));
            }
        }
    }
    out
}

/// Draw `min(target, valid)` triplets.
///
/// When every valid triplet would be drawn (or `exhaustive` is set) they are enumerated
/// instead; otherwise each draw is uniform over valid triplets, with replacement.
pub fn sample_triplets<R: Rng + ?Sized>(
    labels: &GroupLabels,
    target: usize,
    exhaustive: bool,
    rng: &mut R,
) -> Vec<Triplet> {
    let valid = count_valid_triplets(labels);
    if valid == 0 {
        return Vec::new();
    }
    if exhaustive || target >= valid {
        return all_triplets(labels);
    }
    let l = labels.as_slice();
    let n = l.len();
    let sizes = group_sizes(labels);
    let weights: Vec<usize> = l.iter().map(|g| (sizes[g] - 1) * (n - sizes[g])).collect();
    let mut out = Vec::with_capacity(target);
    for _ in 0..target {
        let mut r = rng.random_range(0..valid);
        let a = weights
            .iter()
            .position(|&w| {
                if r < w {
                    true
                } else {
                    r -= w;
                    false
                }
            })
            .expect("weights sum to valid");
        let same: Vec<usize> = (0..n).filter(|&k| k != a && l[k] == l[a]).collect();
        let other: Vec<usize> = (0..n).filter(|&k| l[k] != l[a]).collect();
        let p = same[rng.random_range(0..same.len())];
        let neg = other[rng.random_range(0..other.len())];
        out.push((a, p, neg));
    }
    out
}

/// Randomness consumed by one evaluation of the full objective, drawn up front so the
/// loss is a deterministic function of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LossNoise {
    pub eps: Array,
    pub triplets: Vec<Triplet>,
}

impl LossNoise {
    pub fn draw<R: Rng + ?Sized>(hyper: &HyperParams, labels: &GroupLabels, rng: &mut R) -> Self {
        let eps = (0..hyper.latent_dim)
            .map(|_| StandardNormal.sample(&mut *rng))
            .collect();
        let target = hyper.triplets_per_sketch.unwrap_or(4 * labels.len());
        let triplets = sample_triplets(labels, target, hyper.exhaustive_triplets, rng);
        LossNoise {
            eps: Array::vector(eps),
            triplets,
        }
    }
}

fn check_square(tape: &Tape, g_hat: Var, n: usize) -> Result<()> {
    if tape.value(g_hat).shape() != [n, n] {
        return Err(Error::Contract(format!(
            "predicted affinity has shape {:?}, ground truth is {n}x{n}",
            tape.value(g_hat).shape()
        )));
    }
    Ok(())
}

/// Summed binary cross-entropy over all `N²` entries, with `Ĝ` clamped away from 0 and 1.
pub fn local_loss_var(tape: &mut Tape, g_hat: Var, truth: &AffinityMatrix) -> Result<Var> {
    check_square(tape, g_hat, truth.n())?;
    let t = tape.constant(truth.to_array());
    let one_minus_t = tape.constant(truth.to_array().map(|x| 1.0 - x));
    let lo = tape.max_const(g_hat, CLAMP);
    let g = tape.min_const(lo, 1.0 - CLAMP);
    let log_g = tape.log(g)?;
    let neg = tape.scale(g, -1.0);
    let one_minus_g = tape.add_const(neg, 1.0);
    let log_1g = tape.log(one_minus_g)?;
    let a = tape.mul(t, log_g)?;
    let b = tape.mul(one_minus_t, log_1g)?;
    let s = tape.add(a, b)?;
    let s = tape.sum(s);
    Ok(tape.scale(s, -1.0))
}

/// Mean triplet hinge over l2-normalized rows of `Ĝ`. `None` when `triplets` is empty.
pub fn global_loss_var(
    tape: &mut Tape,
    g_hat: Var,
    triplets: &[Triplet],
    margin: f64,
) -> Result<Option<Var>> {
    if triplets.is_empty() {
        return Ok(None);
    }
    let rows = tape.l2_normalize(g_hat)?;
    let a: Vec<usize> = triplets.iter().map(|t| t.0).collect();
    let p: Vec<usize> = triplets.iter().map(|t| t.1).collect();
    let n: Vec<usize> = triplets.iter().map(|t| t.2).collect();
    let ra = tape.gather_rows(rows, &a)?;
    let rp = tape.gather_rows(rows, &p)?;
    let rn = tape.gather_rows(rows, &n)?;
    let dp = tape.sub(ra, rp)?;
    let dp = tape.square(dp);
    let dp = tape.sum_last(dp)?;
    let dn = tape.sub(ra, rn)?;
    let dn = tape.square(dn);
    let dn = tape.sum_last(dn)?;
    let diff = tape.sub(dp, dn)?;
    let shifted = tape.add_const(diff, margin);
    let hinge = tape.max_const(shifted, 0.0);
    Ok(Some(tape.mean(hinge)))
}

/// Reconstruction terms for teacher-forced targets `input` (`[N, 3]`): `(offset, pen)`,
/// each averaged over steps.
pub fn recon_loss_vars(tape: &mut Tape, mdn: &MdnVars, input: &Array) -> Result<(Var, Var)> {
    let n = input.outer_len();
    let m = tape.value(mdn.mu_x).last_dim();
    let target = |col: usize| {
        let data = (0..n)
            .flat_map(|i| std::iter::repeat_n(input.get2(i, col), m))
            .collect();
        Array::new(&[n, m], data)
    };
    let tx = tape.constant(target(0)?);
    let ty = tape.constant(target(1)?);

    let inv_sx = tape.scale(mdn.log_sigma_x, -1.0);
    let inv_sx = tape.exp(inv_sx);
    let inv_sy = tape.scale(mdn.log_sigma_y, -1.0);
    let inv_sy = tape.exp(inv_sy);
    let ddx = tape.sub(tx, mdn.mu_x)?;
    let nx = tape.mul(ddx, inv_sx)?;
    let ddy = tape.sub(ty, mdn.mu_y)?;
    let ny = tape.mul(ddy, inv_sy)?;

    let r2 = tape.square(mdn.rho);
    let r2 = tape.scale(r2, -1.0);
    let one_minus_r2 = tape.add_const(r2, 1.0);
    let one_minus_r2 = tape.max_const(one_minus_r2, MIN_ONE_MINUS_RHO2);
    let log_1r2 = tape.log(one_minus_r2)?;
    let inv_1r2 = tape.scale(log_1r2, -1.0);
    let inv_1r2 = tape.exp(inv_1r2);

    let nx2 = tape.square(nx);
    let ny2 = tape.square(ny);
    let cross = tape.mul(nx, ny)?;
    let cross = tape.mul(cross, mdn.rho)?;
    let cross = tape.scale(cross, -2.0);
    let z = tape.add(nx2, ny2)?;
    let z = tape.add(z, cross)?;
    let quad = tape.mul(z, inv_1r2)?;
    let quad = tape.scale(quad, -0.5);

    // log N = −ln 2π − ln σx − ln σy − ½ ln(1−ρ²) − Z / (2(1−ρ²))
    let half_log = tape.scale(log_1r2, -0.5);
    let mut log_n = tape.sub(quad, mdn.log_sigma_x)?;
    log_n = tape.sub(log_n, mdn.log_sigma_y)?;
    log_n = tape.add(log_n, half_log)?;
    log_n = tape.add_const(log_n, -(2.0 * PI).ln());

    let joint = tape.add(log_n, mdn.log_pi)?;
    let ll = log_sum_exp(tape, joint)?;
    let offset = tape.mean(ll);
    let offset = tape.scale(offset, -1.0);

    let onehot = (0..n)
        .flat_map(|i| {
            let up = input.get2(i, 2) > 0.5;
            [if up { 0.0 } else { 1.0 }, if up { 1.0 } else { 0.0 }]
        })
        .collect();
    let onehot = tape.constant(Array::new(&[n, 2], onehot)?);
    let lse = log_sum_exp(tape, mdn.pen_logits)?;
    let chosen = tape.mul(mdn.pen_logits, onehot)?;
    let chosen = tape.sum_last(chosen)?;
    let ce = tape.sub(lse, chosen)?;
    let pen = tape.mean(ce);
    Ok((offset, pen))
}

/// `KL(N(μ, σ²) ‖ N(0, I)) = −½ Σ (1 + σ̂ − μ² − exp σ̂)` with `σ̂ = 2 ln σ`.
pub fn kl_loss_var(tape: &mut Tape, mu: Var, log_var: Var) -> Result<Var> {
    let mu2 = tape.square(mu);
    let var = tape.exp(log_var);
    let t = tape.sub(log_var, mu2)?;
    let t = tape.sub(t, var)?;
    let t = tape.add_const(t, 1.0);
    let s = tape.sum(t);
    Ok(tape.scale(s, -0.5))
}

/// Tape handles of every loss term of one sketch.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub local: Var,
    /// `None` when the sketch has no valid triplet.
    pub global: Option<Var>,
    pub recon: Var,
    pub kl: Var,
}

/// Unweighted per-term values of the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub local: f64,
    pub global: f64,
    /// Offset plus pen reconstruction terms.
    pub recon: f64,
    pub kl: f64,
    /// Set when no valid triplet existed and the global term was taken as 0.
    pub global_degenerate: bool,
}

impl LossBreakdown {
    pub fn weighted(&self, hyper: &HyperParams) -> f64 {
        hyper.lambda_a * self.local
            + hyper.lambda_g * self.global
            + hyper.lambda_r * (self.recon + self.kl)
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("L_A", self.local),
            ("L_G", self.global),
            ("L_R", self.recon),
            ("L_KL", self.kl),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// Records `λa L_A + λg L_G + λr (L_R + L_KL)` for one sketch. The sketch is used as given.
pub fn full_loss_vars(
    tape: &mut Tape,
    p: &ParamVars,
    hyper: &HyperParams,
    sketch: &Sketch,
    labels: &GroupLabels,
    noise: &LossNoise,
) -> Result<LossVars> {
    labels.check_len(sketch.len())?;
    let input = sketch.to_array();
    let enc = network::encode(tape, p, hyper, &input)?;
    let z = network::reparameterize(tape, enc.mu, enc.sigma, &noise.eps)?;
    let dec = network::decode(tape, p, hyper, &input, z)?;
    let g_hat = network::affinity(tape, p, dec.features)?;
    let truth = AffinityMatrix::from_labels(labels);
    let local = local_loss_var(tape, g_hat, &truth)?;
    let global = global_loss_var(tape, g_hat, &noise.triplets, hyper.margin)?;
    let (offset, pen) = recon_loss_vars(tape, &dec.mdn, &input)?;
    let recon = tape.add(offset, pen)?;
    let kl = kl_loss_var(tape, enc.mu, enc.log_var)?;

    let gen = tape.add(recon, kl)?;
    let mut total = tape.scale(gen, hyper.lambda_r);
    let wa = tape.scale(local, hyper.lambda_a);
    total = tape.add(total, wa)?;
    if let Some(g) = global {
        let wg = tape.scale(g, hyper.lambda_g);
        total = tape.add(total, wg)?;
    }
    Ok(LossVars {
        total,
        local,
        global,
        recon,
        kl,
    })
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            local: tape.value(self.local).item(),
            global: self.global.map_or(0.0, |g| tape.value(g).item()),
            recon: tape.value(self.recon).item(),
            kl: tape.value(self.kl).item(),
            global_degenerate: self.global.is_none(),
        }
    }
}

/// Per-step mixture parameters as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct MdnParams {
    /// `[N, M]`, rows sum to 1.
    pub pi: Array,
    pub mu_x: Array,
    pub mu_y: Array,
    /// `[N, M]`, positive.
    pub sigma_x: Array,
    pub sigma_y: Array,
    /// `[N, M]`, in `(−1, 1)`.
    pub rho: Array,
    /// `[N, 2]`: pen down, pen up.
    pub pen_logits: Array,
}

impl MdnParams {
    fn to_vars(&self, tape: &mut Tape) -> Result<MdnVars> {
        let log = |a: &Array, what: &str| -> Result<Array> {
            if a.data().iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Domain(format!("{what} must be positive")));
            }
            Ok(a.map(f64::ln))
        };
        Ok(MdnVars {
            log_pi: tape.constant(log(&self.pi, "mixture weight")?),
            mu_x: tape.constant(self.mu_x.clone()),
            mu_y: tape.constant(self.mu_y.clone()),
            log_sigma_x: tape.constant(log(&self.sigma_x, "sigma_x")?),
            log_sigma_y: tape.constant(log(&self.sigma_y, "sigma_y")?),
            rho: tape.constant(self.rho.clone()),
            pen_logits: tape.constant(self.pen_logits.clone()),
        })
    }
}

fn g_hat_const(tape: &mut Tape, g_hat: &Array) -> Result<Var> {
    if g_hat.shape().len() != 2 {
        return Err(Error::Contract(format!(
            "affinity must be a matrix, got {:?}",
            g_hat.shape()
        )));
    }
    Ok(tape.constant(g_hat.clone()))
}

/// Local grouping loss of a predicted matrix against ground truth.
pub fn loss_local(g_hat: &Array, truth: &AffinityMatrix) -> Result<f64> {
    let mut tape = Tape::new();
    let g = g_hat_const(&mut tape, g_hat)?;
    let l = local_loss_var(&mut tape, g, truth)?;
    Ok(tape.value(l).item())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalLoss {
    pub value: f64,
    pub triplets_used: usize,
    /// No valid triplet existed; `value` is 0.
    pub degenerate: bool,
}

/// Global grouping loss with triplets drawn per `hyper`.
pub fn loss_global<R: Rng + ?Sized>(
    g_hat: &Array,
    labels: &GroupLabels,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<GlobalLoss> {
    let target = hyper.triplets_per_sketch.unwrap_or(4 * labels.len());
    let triplets = sample_triplets(labels, target, hyper.exhaustive_triplets, rng);
    loss_global_with(g_hat, labels, &triplets, hyper.margin)
}

/// Global grouping loss over a given triplet list.
pub fn loss_global_with(
    g_hat: &Array,
    labels: &GroupLabels,
    triplets: &[Triplet],
    margin: f64,
) -> Result<GlobalLoss> {
    let n = labels.len();
    if g_hat.shape() != [n, n] {
        return Err(Error::Contract(format!(
            "affinity shape {:?} does not match {n} labels",
            g_hat.shape()
        )));
    }
    if !(margin > 0.0) {
        return Err(Error::Contract(format!(
            "margin must be positive, got {margin}"
        )));
    }
    let mut tape = Tape::new();
    let g = g_hat_const(&mut tape, g_hat)?;
    match global_loss_var(&mut tape, g, triplets, margin)? {
        Some(v) => Ok(GlobalLoss {
            value: tape.value(v).item(),
            triplets_used: triplets.len(),
            degenerate: false,
        }),
        None => {
            log::warn!("no valid triplet; global loss taken as 0");
            Ok(GlobalLoss {
                value: 0.0,
                triplets_used: 0,
                degenerate: true,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconLoss {
    pub total: f64,
    pub offset: f64,
    pub pen: f64,
}

pub fn loss_recon(mdn: &MdnParams, sketch: &Sketch) -> Result<ReconLoss> {
    let n = sketch.len();
    if mdn.pi.shape().first() != Some(&n) || mdn.pen_logits.shape() != [n, 2] {
        return Err(Error::Contract(format!(
            "mixture parameters cover {:?} steps, sketch has {n}",
            mdn.pi.shape()
        )));
    }
    let mut tape = Tape::new();
    let vars = mdn.to_vars(&mut tape)?;
    let (offset, pen) = recon_loss_vars(&mut tape, &vars, &sketch.to_array())?;
    let (offset, pen) = (tape.value(offset).item(), tape.value(pen).item());
    Ok(ReconLoss {
        total: offset + pen,
        offset,
        pen,
    })
}

pub fn loss_kl(mu: &Array, sigma: &Array) -> Result<f64> {
    if mu.shape() != sigma.shape() {
        return Err(Error::Contract("mu and sigma differ in shape".into()));
    }
    if sigma.data().iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let mut tape = Tape::new();
    let m = tape.constant(mu.clone());
    let lv = tape.constant(sigma.map(|s| 2.0 * s.ln()));
    let kl = kl_loss_var(&mut tape, m, lv)?;
    Ok(tape.value(kl).item())
}

/// Full objective of one sketch with latent noise and triplets drawn from `rng`.
pub fn loss_full<R: Rng + ?Sized>(
    sketch: &Sketch,
    labels: &GroupLabels,
    params: &GrouperParams,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<(f64, LossBreakdown)> {
    let noise = LossNoise::draw(hyper, labels, rng);
    let mut tape = Tape::new();
    let p = ParamVars::constants(&mut tape, params);
    let vars = full_loss_vars(&mut tape, &p, hyper, sketch, labels, &noise)?;
    Ok((tape.value(vars.total).item(), vars.breakdown(&tape)))
}
