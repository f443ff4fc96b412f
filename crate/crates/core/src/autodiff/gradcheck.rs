use super::{Tensor, Trace, Var};
use crate::error::Result;

/// Gradients below this magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, 1e-3)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, flat index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares reverse-mode gradients of a scalar function of `inputs` with
/// central differences of step `h`. `build` must be deterministic.
pub fn gradient_check<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Trace, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tr = Trace::new();
        let vars: Vec<Var> = values.iter().map(|v| tr.constant(v.clone())).collect();
        let out = build(&mut tr, &vars)?;
        Ok(tr.scalar(out))
    };

    let mut tr = Trace::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tr.param(v.clone())).collect();
    let loss = build(&mut tr, &vars)?;
    let grads = tr.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, &inputs[k]);
        for idx in 0..inputs[k].len() {
            let orig = inputs[k].as_slice_memory_order().expect("contiguous")[idx];
            work[k].as_slice_memory_order_mut().expect("contiguous")[idx] = orig + h;
            let up = eval(&work)?;
            work[k].as_slice_memory_order_mut().expect("contiguous")[idx] = orig - h;
            let down = eval(&work)?;
            work[k].as_slice_memory_order_mut().expect("contiguous")[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_slice_memory_order().expect("contiguous")[idx];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: err,
                    worst: (k, idx),
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
