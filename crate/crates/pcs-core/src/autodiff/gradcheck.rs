//! Central finite-difference verification of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, row, col) of the worst entry
    pub worst_entry: (usize, usize, usize),
    pub entries_checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }

    /// Turns a failing report into an error, for use in suites.
    pub fn into_result(self) -> Result<GradCheckReport> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::GradCheckFailed {
                max_rel_err: self.max_rel_err,
                tol: self.tol,
            })
        }
    }
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` against central
/// finite differences on every entry of every input.
///
/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<(f64, Vec<Option<Tensor>>)> {
        let mut graph = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| graph.param(t.clone())).collect();
        let out = f(&mut graph, &vars)?;
        let value = graph.value(out).scalar()?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "grad_check forward pass".into(),
            });
        }
        let grads = graph.backward(out)?;
        let collected = vars
            .iter()
            .map(|&v| grads.get(v).cloned())
            .collect::<Vec<_>>();
        Ok((value, collected))
    };

    let (_, analytic) = eval(inputs)?;

    let forward_only = |tensors: &[Tensor]| -> Result<f64> {
        let mut graph = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| graph.constant(t.clone())).collect();
        let out = f(&mut graph, &vars)?;
        let value = graph.value(out).scalar()?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "grad_check forward pass".into(),
            });
        }
        Ok(value)
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut worst_entry = (0, 0, 0);
    let mut entries_checked = 0usize;

    for (ti, input) in inputs.iter().enumerate() {
        let cols = input.cols();
        for e in 0..input.len() {
            let original = input.data()[e];
            work[ti].data_mut()[e] = original + step;
            let plus = forward_only(&work)?;
            work[ti].data_mut()[e] = original - step;
            let minus = forward_only(&work)?;
            work[ti].data_mut()[e] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic_entry = analytic[ti]
                .as_ref()
                .map(|g| g.data()[e])
                .unwrap_or(0.0);
            let denom = analytic_entry.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic_entry - numeric).abs() / denom;
            entries_checked += 1;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_entry = (ti, e / cols, e % cols);
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst_entry,
        entries_checked,
        tol,
    })
}
