use super::{Array, Tape, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of `|g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|)`.
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// Coordinates where some probe crossed a kink of `abs` or `max_const`.
    pub coordinates_skipped: usize,
    /// (parameter index, flat offset) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// Reverse-mode and finite-difference values at `worst`.
    pub worst_values: (f64, f64),
}

/// Which coordinates of each parameter to probe.
#[derive(Debug, Clone, Copy)]
pub enum Coverage {
    All,
    /// Every `stride`-th coordinate of each parameter, starting at `offset`.
    Strided {
        stride: usize,
        offset: usize,
    },
}

/// Check the reverse-mode gradient of `f` at `params` against central finite differences.
///
/// Uses the fourth-order five-point stencil at offsets `±eps, ±2 eps`.
///
/// `f` builds a scalar on the supplied tape from the parameter leaves. It must be
/// deterministic; two evaluations at the base point that disagree bit-wise are an
/// oracle error.
pub fn grad_check<F>(f: F, params: &[Array], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with(f, params, eps, Coverage::All)
}

pub fn grad_check_with<F>(
    f: F,
    params: &[Array],
    eps: f64,
    coverage: Coverage,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("eps must be positive, got {eps}")));
    }
    let eval = |ps: &[Array]| -> Result<(f64, u64)> {
        let mut tape = Tape::with_kink_tracking();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return Err(Error::Contract("grad_check needs a scalar function".into()));
        }
        Ok((tape.value(out).item(), tape.kink_signature().unwrap_or(0)))
    };

    let mut tape = Tape::with_kink_tracking();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let base = tape.value(out).item();
    let base_sig = tape.kink_signature().unwrap_or(0);
    tape.backward(out)?;
    let analytic: Vec<Array> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Array::zeros(tape.value(v).shape()))
        })
        .collect();
    drop(tape);

    let (again, _) = eval(params)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::Oracle(format!(
            "function is not deterministic: {base} then {again}"
        )));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: 0,
        coordinates_skipped: 0,
        worst: None,
        worst_values: (0.0, 0.0),
    };
    let mut probe = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let coords: Box<dyn Iterator<Item = usize>> = match coverage {
            Coverage::All => Box::new(0..p.len()),
            Coverage::Strided { stride, offset } => {
                Box::new((offset % stride.max(1)..p.len()).step_by(stride.max(1)))
            }
        };
        for k in coords {
            let x0 = p.data()[k];
            let mut f_at = |x: f64| {
                probe[pi].data_mut()[k] = x;
                eval(&probe)
            };
            let (p1, s1) = f_at(x0 + eps)?;
            let (m1, s2) = f_at(x0 - eps)?;
            let (p2, s3) = f_at(x0 + 2.0 * eps)?;
            let (m2, s4) = f_at(x0 - 2.0 * eps)?;
            probe[pi].data_mut()[k] = x0;
            if [s1, s2, s3, s4].iter().any(|&s| s != base_sig) {
                report.coordinates_skipped += 1;
                continue;
            }
            let fd = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let ad = analytic[pi].data()[k];
            let rel = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8);
            report.coordinates_checked += 1;
            if report.worst.is_none() || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((pi, k));
                report.worst_values = (ad, fd);
            }
        }
    }
    Ok(report)
}
