use serde::Serialize;

use super::tape::{Primitive, Tape, Var};
use super::tensor::Tensor;
use super::KernelError;

/// Denominator floor of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-8;

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    /// Max relative error per input tensor, in input order.
    pub per_input: Vec<f64>,
    pub value: f64,
}

/// Relative error with a `max(|a|, |n|, 1e-8)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Checks every coordinate of every input of a scalar computation.
pub fn grad_check<F, E>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport, E>
where
    F: for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Result<Var, E>,
    E: From<KernelError>,
{
    grad_check_with_fault(f, inputs, eps, None)
}

/// [`grad_check`] with an optional sign flip injected into one backward rule.
pub fn grad_check_with_fault<F, E>(
    f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    fault: Option<Primitive>,
) -> Result<GradCheckReport, E>
where
    F: for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Result<Var, E>,
    E: From<KernelError>,
{
    let mut tape = Tape::new();
    if let Some(p) = fault {
        tape.inject_fault(p);
    }
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(KernelError::NonScalar {
            shape: value.shape().to_vec(),
        }
        .into());
    }
    let value = value.data()[0];
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64, E> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(t.scalar(o))
    };

    let mut work = inputs.to_vec();
    let mut per_input = Vec::with_capacity(inputs.len());
    let mut max_abs = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let mut worst = 0.0f64;
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[j];
            worst = worst.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        per_input.push(worst);
    }
    Ok(GradCheckReport {
        max_relative_error: per_input.iter().copied().fold(0.0, f64::max),
        max_abs_error: max_abs,
        per_input,
        value,
    })
}
