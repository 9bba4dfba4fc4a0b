use crate::autodiff::Array;

/// First and second moment estimates plus the number of updates applied so far.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array>,
    pub v: Vec<Array>,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient; 0 disables it.
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(shapes: &[Array]) -> Self {
        AdamState {
            m: shapes.iter().map(|a| Array::zeros(a.shape())).collect(),
            v: shapes.iter().map(|a| Array::zeros(a.shape())).collect(),
            step: 0,
        }
    }

    /// One bias-corrected update of `params` in place with learning rate `lr`.
    pub fn update(&mut self, params: &mut [Array], grads: &[Array], lr: f64, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            for k in 0..pd.len() {
                let grad = gd[k] + cfg.weight_decay * pd[k];
                let mk = &mut m.data_mut()[k];
                *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * grad;
                let mhat = *mk / c1;
                let vk = &mut v.data_mut()[k];
                *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * grad * grad;
                let vhat = *vk / c2;
                pd[k] -= lr * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Rescale `grads` so their joint Euclidean norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Array], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Array::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_assign(s));
    }
    norm
}
