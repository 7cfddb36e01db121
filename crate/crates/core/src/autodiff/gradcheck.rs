//! Central-difference gradient oracle.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default perturbation for [`grad_check`].
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index and flat coordinate of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Maximum over all coordinates of
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
///
/// `f` receives a fresh graph with one leaf per entry of `params` and must
/// return a scalar node.
pub fn grad_check<F>(params: &[Tensor], epsilon: f64, f: F) -> Result<f64>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var>,
{
    grad_check_report(params, epsilon, f).map(|r| r.max_relative_error)
}

pub fn grad_check_report<F>(params: &[Tensor], epsilon: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("grad_check epsilon must be positive"));
    }
    let analytic: Vec<Tensor> = {
        let mut g = Graph::checked();
        let vars: Vec<Var> = params.iter().map(|p| g.variable(p.clone())).collect();
        let loss = f(&mut g, &vars)?;
        let grads = g.backward(loss)?;
        vars.iter().map(|&v| grads.get_or_zeros(v)).collect()
    };

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::checked();
        let vars: Vec<Var> = values.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out)
            .item()
            .ok_or_else(|| Error::NotScalar(g.value(out).shape().to_vec()))
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (p, grad) in analytic.iter().enumerate() {
        for j in 0..params[p].len() {
            let original = params[p].data()[j];
            work[p].data_mut()[j] = original + epsilon;
            let plus = eval(&work)?;
            work[p].data_mut()[j] = original - epsilon;
            let minus = eval(&work)?;
            work[p].data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[j];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((p, j));
            }
        }
    }
    Ok(report)
}
