//! Finite-difference verification of reverse-mode gradients.

use super::{Tape, TensorData, TensorError, Var};
use crate::scalar::Scalar;

/// Outcome of a gradient check: the worst relative disagreement between the
/// tape gradient and central differences, and where it occurred.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub components: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Checks `f`'s gradient with respect to a single input tensor.
///
/// `f` must be deterministic and scalar-valued. Each component of `x` is
/// probed with central differences at step `eps`; the relative error is
/// `|a - n| / max(1, |a|, |n|)`. A NaN at any probe point is reported as a
/// failure carrying the probe coordinates.
pub fn grad_check<S, F>(f: F, x: &TensorData<S>, eps: f64) -> Result<GradReport, TensorError>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, Var) -> Result<Var, TensorError>,
{
    grad_check_many(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(x),
        eps,
    )
}

/// Checks `f`'s gradient with respect to every tensor in `xs` jointly.
///
/// One reverse sweep supplies all analytic gradients; the numeric side loops
/// over every component of every input.
pub fn grad_check_many<S, F>(f: F, xs: &[TensorData<S>], eps: f64) -> Result<GradReport, TensorError>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[Var]) -> Result<Var, TensorError>,
{
    assert!(eps > 0.0, "grad_check requires eps > 0");

    let eval = |probe: &[TensorData<S>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|t| tape.input(t, false)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0].as_f64())
    };

    // Analytic gradients from one reverse sweep.
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|t| tape.input(t, true)).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).numel() != 1 {
        return Err(TensorError::NonScalarLoss {
            shape: tape.value(out).shape().to_vec(),
        });
    }
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .enumerate()
        .map(|(i, &v)| match tape.grad(v) {
            Some(g) => g.iter().map(|s| s.as_f64()).collect(),
            None => vec![0.0; xs[i].numel()],
        })
        .collect();

    let mut probe: Vec<TensorData<S>> = xs.to_vec();
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_index: 0,
        components: 0,
    };
    let mut flat_index = 0;
    #[allow(clippy::needless_range_loop)]
    for (ti, x) in xs.iter().enumerate() {
        for ci in 0..x.numel() {
            let orig = x.data()[ci];
            probe[ti].data_mut()[ci] = orig + S::of_f64(eps);
            let plus = eval(&probe)?;
            probe[ti].data_mut()[ci] = orig - S::of_f64(eps);
            let minus = eval(&probe)?;
            probe[ti].data_mut()[ci] = orig;

            if plus.is_nan() || minus.is_nan() {
                return Err(TensorError::NanProbe {
                    index: flat_index,
                    probe: orig.as_f64(),
                });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let e = rel_err(analytic[ti][ci], numeric);
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst_index = flat_index;
            }
            report.components += 1;
            flat_index += 1;
        }
    }
    Ok(report)
}
