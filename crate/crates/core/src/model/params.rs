use rand::Rng;

use crate::autodiff::{Array, Tape, Var};
use crate::error::{Error, Result};

/// Architecture and loss configuration of the grouper.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Hidden size of each encoder direction.
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub latent_dim: usize,
    /// Per-segment feature size; 128 unless deliberately overridden.
    pub feat_dim: usize,
    /// Bivariate Gaussian components in the reconstruction head.
    pub mixtures: usize,
    /// Triplet margin Δ.
    pub margin: f64,
    pub lambda_a: f64,
    pub lambda_g: f64,
    pub lambda_r: f64,
    /// Triplets sampled per sketch; `None` means `4 N`. Always capped at the number of valid triplets.
    pub triplets_per_sketch: Option<usize>,
    /// Use every valid triplet instead of sampling.
    pub exhaustive_triplets: bool,
    /// Feed `z` to the decoder at every step, not just through its initial state.
    pub z_every_step: bool,
    pub max_segments: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            enc_hidden: 64,
            dec_hidden: 128,
            latent_dim: 32,
            feat_dim: 128,
            mixtures: 5,
            margin: 1.0,
            lambda_a: 0.6,
            lambda_g: 1.0,
            lambda_r: 0.5,
            triplets_per_sketch: None,
            exhaustive_triplets: false,
            z_every_step: true,
            max_segments: crate::stroke::DEFAULT_MAX_SEGMENTS,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("latent_dim", self.latent_dim),
            ("feat_dim", self.feat_dim),
            ("mixtures", self.mixtures),
            ("max_segments", self.max_segments),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        for (name, w) in [
            ("lambda_a", self.lambda_a),
            ("lambda_g", self.lambda_g),
            ("lambda_r", self.lambda_r),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn dec_input(&self) -> usize {
        3 + if self.z_every_step {
            self.latent_dim
        } else {
            0
        }
    }

    pub(crate) fn mdn_outputs(&self) -> usize {
        6 * self.mixtures + 2
    }
}

/// Names of the learnable tensors, in storage and checkpoint order.
pub const PARAM_NAMES: [&str; 16] = [
    "enc_fw.w",
    "enc_fw.b",
    "enc_bw.w",
    "enc_bw.b",
    "latent.w",
    "latent.b",
    "init.w",
    "init.b",
    "dec.w",
    "dec.b",
    "feat.w",
    "feat.b",
    "affinity.w",
    "affinity.b",
    "mdn.w",
    "mdn.b",
];

/// Shapes of the learnable tensors for `hyper`, matching [`PARAM_NAMES`].
pub fn param_shapes(hyper: &HyperParams) -> [Vec<usize>; 16] {
    let (e, d, l, f) = (
        hyper.enc_hidden,
        hyper.dec_hidden,
        hyper.latent_dim,
        hyper.feat_dim,
    );
    let m = hyper.mdn_outputs();
    [
        vec![4 * e, 3 + e],
        vec![4 * e],
        vec![4 * e, 3 + e],
        vec![4 * e],
        vec![2 * l, 2 * e],
        vec![2 * l],
        vec![2 * d, l],
        vec![2 * d],
        vec![4 * d, hyper.dec_input() + d],
        vec![4 * d],
        vec![f, d],
        vec![f],
        vec![1, f],
        vec![1],
        vec![m, d],
        vec![m],
    ]
}

/// All learnable weights of the grouper, stored in [`PARAM_NAMES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GrouperParams {
    tensors: Vec<Array>,
}

impl GrouperParams {
    /// Uniform `±1/√fan_in` weights, zero biases except LSTM forget gates (1.0).
    pub fn init<R: Rng + ?Sized>(hyper: &HyperParams, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let shapes = param_shapes(hyper);
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, shape) in PARAM_NAMES.iter().zip(shapes.iter()) {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".w") {
                let bound = 1.0 / (shape[1] as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            } else if matches!(*name, "enc_fw.b" | "enc_bw.b" | "dec.b") {
                // gate order is input, forget, candidate, output
                let h = n / 4;
                (0..n)
                    .map(|k| if (h..2 * h).contains(&k) { 1.0 } else { 0.0 })
                    .collect()
            } else {
                vec![0.0; n]
            };
            tensors.push(Array::new(shape, data)?);
        }
        Ok(GrouperParams { tensors })
    }

    pub fn zeros(hyper: &HyperParams) -> Result<Self> {
        hyper.validate()?;
        Ok(GrouperParams {
            tensors: param_shapes(hyper)
                .iter()
                .map(|s| Array::zeros(s))
                .collect(),
        })
    }

    pub fn from_tensors(hyper: &HyperParams, tensors: Vec<Array>) -> Result<Self> {
        let shapes = param_shapes(hyper);
        if tensors.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, s), name) in tensors.iter().zip(shapes.iter()).zip(PARAM_NAMES) {
            if t.shape() != s.as_slice() {
                return Err(Error::Shape(format!(
                    "{name}: expected shape {s:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(GrouperParams { tensors })
    }

    pub fn tensors(&self) -> &[Array] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Array> {
        self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Array::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Array::all_finite)
    }
}

/// Tape handles of the parameter leaves.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub enc_fw: (Var, Var),
    pub enc_bw: (Var, Var),
    pub latent: (Var, Var),
    pub init: (Var, Var),
    pub dec: (Var, Var),
    pub feat: (Var, Var),
    pub affinity: (Var, Var),
    pub mdn: (Var, Var),
}

impl ParamVars {
    /// Register every tensor as a differentiable leaf.
    pub fn register(tape: &mut Tape, params: &GrouperParams) -> Self {
        let vars: Vec<Var> = params
            .tensors
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect();
        Self::from_slice(&vars)
    }

    /// Register every tensor as a constant (no gradients).
    pub fn constants(tape: &mut Tape, params: &GrouperParams) -> Self {
        let vars: Vec<Var> = params
            .tensors
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        Self::from_slice(&vars)
    }

    /// Reassemble from leaves listed in [`PARAM_NAMES`] order.
    pub fn from_slice(v: &[Var]) -> Self {
        assert_eq!(v.len(), PARAM_NAMES.len(), "one var per parameter tensor");
        ParamVars {
            enc_fw: (v[0], v[1]),
            enc_bw: (v[2], v[3]),
            latent: (v[4], v[5]),
            init: (v[6], v[7]),
            dec: (v[8], v[9]),
            feat: (v[10], v[11]),
            affinity: (v[12], v[13]),
            mdn: (v[14], v[15]),
        }
    }

    pub fn to_vec(&self) -> Vec<Var> {
        [
            self.enc_fw,
            self.enc_bw,
            self.latent,
            self.init,
            self.dec,
            self.feat,
            self.affinity,
            self.mdn,
        ]
        .iter()
        .flat_map(|&(w, b)| [w, b])
        .collect()
    }
}
