//! Central finite-difference gradient checking.

use crate::{NeuralError, ParamSet, Tensor};

/// Worst disagreement found by [`check_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// Relative error with an absolute floor so that near-zero gradients do not
/// blow up the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` gradients against central differences of `loss`
/// with step `h` for every scalar in `params`.
pub fn check_params<F>(params: &ParamSet, analytic: &[Tensor], h: f64, mut loss: F) -> Result<GradCheckReport, NeuralError>
where
    F: FnMut(&ParamSet) -> Result<f64, NeuralError>,
{
    params.check_like(analytic, "gradcheck")?;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for id in params.ids() {
        for i in 0..params.get(id).len() {
            let orig = params.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = loss(&work)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = loss(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[id.0].data()[i], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = format!("{}[{i}]", params.name(id));
            }
        }
    }
    Ok(report)
}
