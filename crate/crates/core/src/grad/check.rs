//! Central finite-difference checks of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Analytic and numeric gradients of one scalar function, flattened over
/// all inputs in order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub value: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, or 0 when both
    /// vanish.
    pub fn rel_error(&self) -> f64 {
        relative_error(&self.analytic, &self.numeric)
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Compares reverse-mode gradients of `f` at `inputs` with central
/// differences of step `h`. `f` receives one leaf per input and must
/// return a scalar.
pub fn check_gradient(inputs: &[Tensor], h: f64, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<GradCheck> {
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = f(&mut tape, &leaves)?;
        Ok(tape.value(root).item())
    };
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&mut tape, &leaves)?;
    if !tape.value(root).is_scalar() {
        return Err(Error::NotScalar(tape.shape(root).to_vec()));
    }
    let value = tape.value(root).item();
    let grads = tape.backward(root)?;
    let mut analytic = Vec::new();
    for (&leaf, input) in leaves.iter().zip(inputs) {
        match grads.raw(leaf) {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat(0.0).take(input.len())),
        }
    }
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = inputs.to_vec();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let x = inputs[i].values()[k];
            probe[i].values_mut()[k] = x + h;
            let up = eval(&probe)?;
            probe[i].values_mut()[k] = x - h;
            let down = eval(&probe)?;
            probe[i].values_mut()[k] = x;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    Ok(GradCheck { value, analytic, numeric })
}
