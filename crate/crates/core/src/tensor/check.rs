use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the tape gradient of the scalar function `f` at `x` against
/// central finite differences with step `eps`; returns the largest
/// component-wise relative error.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)
}

/// Multi-input form of [`grad_check`]: every component of every input is
/// probed.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    check_finite(tape.value(loss).item(), "at the base point")?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(Tensor::into_data)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let mut probe = inputs.to_vec();
    let mut worst = 0.0f64;
    for which in 0..inputs.len() {
        for j in 0..inputs[which].numel() {
            let orig = inputs[which].data()[j];
            probe[which].data_mut()[j] = orig + eps;
            let plus = eval(&f, &probe)?;
            probe[which].data_mut()[j] = orig - eps;
            let minus = eval(&f, &probe)?;
            probe[which].data_mut()[j] = orig;
            check_finite(plus, "at a probe point")?;
            check_finite(minus, "at a probe point")?;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[which][j], numeric));
        }
    }
    Ok(worst)
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

fn check_finite(v: f64, at: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("function value {v} is not finite {at}")))
    }
}
