//! `key = value` configuration files for `train`.
//!
//! Blank lines and lines starting with `#` are ignored. Values given on the command
//! line win over the file, and the file wins over built-in defaults.

use std::path::Path;
use std::str::FromStr;

use sketchgroup::model::HyperParams;
use sketchgroup::stroke::AugmentParams;
use sketchgroup::train::TrainConfig;

use crate::error::{CliError, CliResult};

pub const KEYS: &[&str] = &[
    "lr0",
    "decay",
    "beta1",
    "beta2",
    "epsilon",
    "iters",
    "batch",
    "seed",
    "checkpoint_every",
    "clip_norm",
    "weight_decay",
    "log_every",
    "augment",
    "removal_prob",
    "distort_scale",
    "enc_hidden",
    "dec_hidden",
    "latent_dim",
    "feat_dim",
    "mixtures",
    "margin",
    "lambda_a",
    "lambda_g",
    "lambda_r",
    "triplets",
    "exhaustive_triplets",
    "z_every_step",
    "max_segments",
];

/// Ordered `(key, value)` pairs.
pub fn parse(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key = value",
                i + 1
            )));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(CliError::Usage(format!(
                "config line {}: unknown key '{k}'",
                i + 1
            )));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse(&text)
}

fn value<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("invalid value '{v}' for {key}")))
}

fn flag(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "invalid value '{v}' for {key}, expected true or false"
        ))),
    }
}

/// Apply one setting on top of `hyper` and `config`.
pub fn apply(hyper: &mut HyperParams, config: &mut TrainConfig, key: &str, v: &str) -> CliResult {
    let aug = |c: &mut TrainConfig| {
        c.augment
            .get_or_insert_with(AugmentParams::default)
            .to_owned()
    };
    match key {
        "lr0" => config.lr0 = value(key, v)?,
        "decay" => config.decay = value(key, v)?,
        "beta1" => config.beta1 = value(key, v)?,
        "beta2" => config.beta2 = value(key, v)?,
        "epsilon" => config.epsilon = value(key, v)?,
        "iters" => config.iters = value(key, v)?,
        "batch" => config.batch = value(key, v)?,
        "seed" => config.seed = value(key, v)?,
        "checkpoint_every" => config.checkpoint_every = value(key, v)?,
        "clip_norm" => {
            config.clip_norm = if v == "none" {
                None
            } else {
                Some(value(key, v)?)
            }
        }
        "weight_decay" => config.weight_decay = value(key, v)?,
        "log_every" => config.log_every = value(key, v)?,
        "augment" => {
            config.augment = if flag(key, v)? {
                Some(aug(config))
            } else {
                None
            };
        }
        "removal_prob" => {
            let mut a = aug(config);
            a.removal_prob = value(key, v)?;
            config.augment = Some(a);
        }
        "distort_scale" => {
            let mut a = aug(config);
            a.distort_scale = value(key, v)?;
            config.augment = Some(a);
        }
        "enc_hidden" => hyper.enc_hidden = value(key, v)?,
        "dec_hidden" => hyper.dec_hidden = value(key, v)?,
        "latent_dim" => hyper.latent_dim = value(key, v)?,
        "feat_dim" => hyper.feat_dim = value(key, v)?,
        "mixtures" => hyper.mixtures = value(key, v)?,
        "margin" => hyper.margin = value(key, v)?,
        "lambda_a" => hyper.lambda_a = value(key, v)?,
        "lambda_g" => hyper.lambda_g = value(key, v)?,
        "lambda_r" => hyper.lambda_r = value(key, v)?,
        "triplets" => {
            hyper.triplets_per_sketch = if v == "auto" {
                None
            } else {
                Some(value(key, v)?)
            }
        }
        "exhaustive_triplets" => hyper.exhaustive_triplets = flag(key, v)?,
        "z_every_step" => hyper.z_every_step = flag(key, v)?,
        "max_segments" => hyper.max_segments = value(key, v)?,
        _ => return Err(CliError::Usage(format!("unknown setting '{key}'"))),
    }
    Ok(())
}
