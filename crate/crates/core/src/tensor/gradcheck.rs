use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
const SCALE_FLOOR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, 1e-4)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

/// Compares reverse-mode gradients of the scalar `f(params)` against central
/// differences with step `h`. Returns the worst relative error over every
/// parameter entry.
pub fn gradcheck<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        match tape.value(out).data() {
            [x] => Ok(*x),
            _ => Err(Error::Shape {
                op: "gradcheck",
                detail: "function must return a scalar".into(),
            }),
        }
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe = params.to_vec();
    for (p, &var) in vars.iter().enumerate() {
        let analytic = grads
            .get(var)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; params[p].numel()]);
        for i in 0..params[p].numel() {
            let x0 = params[p].data()[i];
            probe[p].data_mut()[i] = x0 + h;
            let up = eval(&probe)?;
            probe[p].data_mut()[i] = x0 - h;
            let down = eval(&probe)?;
            probe[p].data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    Ok(worst)
}
