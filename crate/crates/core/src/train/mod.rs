//! Mini-batch training with Adam, exponential learning-rate decay and checkpointing.

mod adam;
mod checkpoint;

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Array, Tape};
use crate::error::{Error, Result};
use crate::model::losses::{full_loss_vars, LossBreakdown, LossNoise};
use crate::model::{GrouperParams, HyperParams, ParamVars};
use crate::par::Execution;
use crate::stroke::{augment, normalize, AugmentParams, GroupLabels, Sketch};

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    FORMAT_VERSION,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Per-iteration learning-rate factor: `lr_t = lr0 · decay^t`.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iters: u64,
    pub batch: usize,
    pub seed: u64,
    /// Emit a checkpoint every this many iterations; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// L2 penalty on parameters, folded into Adam's gradient. Off by default.
    pub weight_decay: f64,
    /// Window of the moving-average loss reported to the log.
    pub log_every: u64,
    /// Fresh augmentation of every sampled sketch; `None` trains on the data as given.
    pub augment: Option<AugmentParams>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.0003,
            decay: 0.9999,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
            iters: 2000,
            batch: 16,
            seed: 0,
            checkpoint_every: 500,
            clip_norm: Some(1.0),
            weight_decay: 0.0,
            log_every: 100,
            augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm must be positive, got {c}"));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr0 * self.decay.powi(step as i32)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// Parameters plus optimizer state being trained.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: GrouperParams,
    pub optimizer: AdamState,
}

impl TrainState {
    pub fn new(params: GrouperParams) -> Self {
        let optimizer = AdamState::new(params.tensors());
        TrainState { params, optimizer }
    }
}

/// Result of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Mean objective over the batch, before the update.
    pub loss: f64,
    /// Batch-mean of each unweighted term.
    pub breakdown: LossBreakdown,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Loss and parameter gradients of one sketch under fixed noise.
pub fn sketch_gradient(
    params: &GrouperParams,
    hyper: &HyperParams,
    sketch: &Sketch,
    labels: &GroupLabels,
    noise: &LossNoise,
) -> Result<(f64, LossBreakdown, Vec<Array>)> {
    let mut tape = Tape::new();
    let p = ParamVars::register(&mut tape, params);
    let vars = full_loss_vars(&mut tape, &p, hyper, sketch, labels, noise)?;
    let total = tape.value(vars.total).item();
    let breakdown = vars.breakdown(&tape);
    if let Some(term) = breakdown.non_finite_term() {
        return Err(Error::NonFinite { term });
    }
    if !total.is_finite() {
        return Err(Error::NonFinite { term: "L_F" });
    }
    tape.backward(vars.total)?;
    let grads = p
        .to_vec()
        .into_iter()
        .map(|v| {
            tape.grad(v)
                .cloned()
                .expect("parameter leaves receive gradients")
        })
        .collect();
    Ok((total, breakdown, grads))
}

/// One Adam step on the mean objective of `batch`.
///
/// Noise is drawn from `rng` sequentially in batch order; per-sketch gradients may be
/// computed in parallel and are summed in batch order, so the result does not depend on
/// `exec`.
pub fn train_step(
    batch: &[(Sketch, GroupLabels)],
    state: &mut TrainState,
    hyper: &HyperParams,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    exec: Execution,
) -> Result<StepOutcome> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let noises: Vec<LossNoise> = batch
        .iter()
        .map(|(_, l)| LossNoise::draw(hyper, l, rng))
        .collect();
    let jobs: Vec<usize> = (0..batch.len()).collect();
    let params = &state.params;
    let results = exec.try_map(&jobs, |&i| {
        sketch_gradient(params, hyper, &batch[i].0, &batch[i].1, &noises[i])
    })?;

    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut mean = LossBreakdown::default();
    let mut grads: Vec<Array> = params
        .tensors()
        .iter()
        .map(|t| Array::zeros(t.shape()))
        .collect();
    for (total, b, g) in &results {
        loss += total;
        mean.local += b.local;
        mean.global += b.global;
        mean.recon += b.recon;
        mean.kl += b.kl;
        mean.global_degenerate |= b.global_degenerate;
        grads
            .iter_mut()
            .zip(g)
            .for_each(|(acc, x)| acc.add_assign(x));
    }
    loss *= scale;
    mean.local *= scale;
    mean.global *= scale;
    mean.recon *= scale;
    mean.kl *= scale;
    grads.iter_mut().for_each(|g| g.scale_assign(scale));

    let grad_norm = match config.clip_norm {
        Some(c) => clip_global_norm(&mut grads, c),
        None => grads.iter().map(Array::sq_norm).sum::<f64>().sqrt(),
    };
    let lr = config.lr_at(state.optimizer.step);
    state
        .optimizer
        .update(state.params.tensors_mut(), &grads, lr, &config.adam());
    if !state.params.all_finite() {
        return Err(Error::NonFinite {
            term: "parameters after update",
        });
    }
    Ok(StepOutcome {
        loss,
        breakdown: mean,
        lr,
        grad_norm,
    })
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    /// 1-based iteration number.
    pub step: u64,
    pub loss: f64,
    pub breakdown: LossBreakdown,
    pub lr: f64,
    /// Mean loss over the last `log_every` steps.
    pub moving_average: f64,
}

impl LogRow {
    /// `step loss L_A L_G L_R L_KL lr`
    pub fn to_line(&self) -> String {
        let b = &self.breakdown;
        format!(
            "{} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e}",
            self.step, self.loss, b.local, b.global, b.recon, b.kl, self.lr
        )
    }
}

/// Progress notifications from [`fit_with`].
pub enum FitEvent<'a> {
    Step(&'a LogRow),
    /// Periodic snapshot; not emitted for the final state, which `fit_with` returns.
    Checkpoint(&'a Checkpoint),
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

pub fn fit(
    dataset: &[(Sketch, GroupLabels)],
    hyper: &HyperParams,
    config: &TrainConfig,
    exec: Execution,
) -> Result<FitOutcome> {
    fit_with(dataset, hyper, config, exec, |_| Ok(()))
}

/// Train from a seeded initialization. Sketches are normalized before use.
pub fn fit_with(
    dataset: &[(Sketch, GroupLabels)],
    hyper: &HyperParams,
    config: &TrainConfig,
    exec: Execution,
    mut on_event: impl FnMut(FitEvent<'_>) -> Result<()>,
) -> Result<FitOutcome> {
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    hyper.validate()?;
    config.validate()?;
    let data: Vec<(Sketch, GroupLabels)> = dataset
        .iter()
        .enumerate()
        .map(|(i, (s, l))| {
            l.check_len(s.len()).map_err(|e| Error::at_record(i, e))?;
            if s.len() > hyper.max_segments {
                return Err(Error::at_record(
                    i,
                    Error::Length {
                        len: s.len(),
                        max: hyper.max_segments,
                    },
                ));
            }
            Ok((normalize(s).map_err(|e| Error::at_record(i, e))?, l.clone()))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = TrainState::new(GrouperParams::init(hyper, &mut rng)?);
    let snapshot = |state: &TrainState| Checkpoint {
        params: state.params.clone(),
        hyper: hyper.clone(),
        optimizer: state.optimizer.clone(),
        config: config.clone(),
    };

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut window: VecDeque<f64> = VecDeque::new();
    let mut log = Vec::with_capacity(config.iters as usize);
    for step in 1..=config.iters {
        let mut batch = Vec::with_capacity(config.batch);
        while batch.len() < config.batch {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let (s, l) = &data[order[cursor]];
            cursor += 1;
            batch.push(match config.augment {
                Some(a) => augment(s, l, a, &mut rng)?,
                None => (s.clone(), l.clone()),
            });
        }
        let out = train_step(&batch, &mut state, hyper, config, &mut rng, exec)?;
        window.push_back(out.loss);
        if window.len() as u64 > config.log_every.max(1) {
            window.pop_front();
        }
        let row = LogRow {
            step,
            loss: out.loss,
            breakdown: out.breakdown,
            lr: out.lr,
            moving_average: window.iter().sum::<f64>() / window.len() as f64,
        };
        if config.log_every > 0 && step % config.log_every == 0 {
            log::info!(
                "step {step}: moving-average loss {:.4} (lr {:.3e})",
                row.moving_average,
                row.lr
            );
        }
        on_event(FitEvent::Step(&row))?;
        log.push(row);
        if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step < config.iters
        {
            on_event(FitEvent::Checkpoint(&snapshot(&state)))?;
        }
    }
    Ok(FitOutcome {
        checkpoint: snapshot(&state),
        log,
    })
}
