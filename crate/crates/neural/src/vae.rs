//! Gaussian latent, likelihood heads and the ELBO objective.

use crate::{NeuralError, Tape, Tensor, Var};

pub const LOG_SIGMA_MIN: f64 = -8.0;
pub const LOG_SIGMA_MAX: f64 = 8.0;
/// Floor added to the softplus link of the exponential rate.
pub const RATE_FLOOR: f64 = 1e-6;

/// Diagonal Gaussian posterior recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GaussianParams {
    pub mu: Var,
    pub log_sigma: Var,
}

impl GaussianParams {
    /// Clamps `log_sigma` into `[-8, 8]` before it is used anywhere.
    pub fn new(tape: &mut Tape, mu: Var, log_sigma: Var) -> Result<Self, NeuralError> {
        let (a, b) = (tape.value(mu).len(), tape.value(log_sigma).len());
        if a != b {
            return Err(NeuralError::ShapeMismatch {
                op: "gaussian",
                expected: vec![a],
                got: vec![b],
            });
        }
        let log_sigma = tape.clamp(log_sigma, LOG_SIGMA_MIN, LOG_SIGMA_MAX)?;
        Ok(Self { mu, log_sigma })
    }
}

/// `z = mu + exp(log_sigma) * eps`.
pub fn reparameterize(tape: &mut Tape, g: &GaussianParams, eps: &Tensor) -> Result<Var, NeuralError> {
    let n = tape.value(g.mu).len();
    if eps.len() != n {
        return Err(NeuralError::ShapeMismatch {
            op: "reparameterize",
            expected: vec![n],
            got: eps.shape().to_vec(),
        });
    }
    let e = tape.input(eps.clone());
    let sigma = tape.exp(g.log_sigma)?;
    let noise = tape.mul(sigma, e)?;
    tape.add(g.mu, noise)
}

/// Value-level reparameterization for callers without a tape.
pub fn reparameterize_values(mu: &[f64], log_sigma: &[f64], eps: &[f64]) -> Result<Vec<f64>, NeuralError> {
    if mu.len() != log_sigma.len() || mu.len() != eps.len() {
        return Err(NeuralError::ShapeMismatch {
            op: "reparameterize",
            expected: vec![mu.len()],
            got: vec![log_sigma.len(), eps.len()],
        });
    }
    Ok(mu
        .iter()
        .zip(log_sigma)
        .zip(eps)
        .map(|((m, ls), e)| m + ls.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX).exp() * e)
        .collect())
}

/// `KL(N(mu, sigma^2) || N(0, I))` summed over dimensions.
pub fn kl_to_standard_normal(tape: &mut Tape, g: &GaussianParams) -> Result<Var, NeuralError> {
    let mu2 = tape.square(g.mu)?;
    let two_ls = tape.scale(g.log_sigma, 2.0)?;
    let var = tape.exp(two_ls)?;
    let a = tape.add(mu2, var)?;
    let b = tape.sub(a, two_ls)?;
    let c = tape.add_scalar(b, -1.0)?;
    let s = tape.sum(c)?;
    tape.scale(s, 0.5)
}

pub fn kl_to_standard_normal_values(mu: &[f64], log_sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(log_sigma)
        .map(|(m, ls)| {
            let ls = ls.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
            0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls)
        })
        .sum()
}

/// Positive exponential rate from an unconstrained pre-activation.
pub fn rate_link(x: f64) -> f64 {
    let sp = if x > 30.0 { x } else { x.exp().ln_1p() };
    sp + RATE_FLOOR
}

/// `lambda * d - ln(lambda)`.
pub fn exponential_nll_value(rate: f64, d: f64) -> f64 {
    rate * d - rate.ln()
}

/// Exponential negative log-likelihood of `d` with the rate produced by the
/// softplus link applied to the scalar `raw`.
pub fn exponential_nll(tape: &mut Tape, raw: Var, d: f64) -> Result<Var, NeuralError> {
    let sp = tape.softplus(raw)?;
    let rate = tape.add_scalar(sp, RATE_FLOOR)?;
    let rd = tape.scale(rate, d)?;
    let ln = tape.ln(rate)?;
    tape.sub(rd, ln)
}

/// Loss with its per-term values.
#[derive(Debug, Clone, Copy)]
pub struct Elbo {
    pub loss: Var,
    pub duration_nll: f64,
    pub location_nll: f64,
    pub kl: f64,
}

impl Elbo {
    pub fn total(&self) -> f64 {
        self.duration_nll + self.location_nll + self.kl
    }
}

/// Negative ELBO: summed duration and location NLL terms plus the KL term.
pub fn elbo_loss(tape: &mut Tape, duration_nll: &[Var], location_nll: &[Var], g: &GaussianParams) -> Result<Elbo, NeuralError> {
    let kl = kl_to_standard_normal(tape, g)?;
    let mut parts = Vec::with_capacity(duration_nll.len() + location_nll.len() + 1);
    let mut dur = 0.0;
    for &v in duration_nll {
        dur += tape.value(v).data()[0];
        parts.push(v);
    }
    let mut loc = 0.0;
    for &v in location_nll {
        loc += tape.value(v).data()[0];
        parts.push(v);
    }
    parts.push(kl);
    let stacked = tape.concat(&parts)?;
    let loss = tape.sum(stacked)?;
    let kl_v = tape.value(kl).data()[0];
    let total = tape.value(loss).data()[0];
    if !dur.is_finite() || !loc.is_finite() || !kl_v.is_finite() || !total.is_finite() {
        return Err(NeuralError::NonFinite("elbo"));
    }
    Ok(Elbo {
        loss,
        duration_nll: dur,
        location_nll: loc,
        kl: kl_v,
    })
}
