//! Divergences between real and generated trajectory sets.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::{BehaviorError, TrajectorySequence, TrajectoryStep};
use crate::rng;
use crate::scenario::{CellToken, GeoGrid};

/// Upper edges of the stay-duration bins, seconds; the last bin is open.
pub const STAY_BIN_EDGES_S: [f64; 4] = [60.0, 300.0, 900.0, 3600.0];
/// Pseudo-count added to every histogram bin.
pub const SMOOTHING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationReport {
    pub kl_location: f64,
    pub kl_stay_duration: f64,
    pub js_location: f64,
}

fn smoothed(x: &[f64], eps: f64) -> Vec<f64> {
    let total: f64 = x.iter().map(|v| v + eps).sum();
    x.iter().map(|v| (v + eps) / total).collect()
}

/// `KL(p || q)` in nats after adding `eps` to every bin and normalizing.
pub fn kl_divergence(p: &[f64], q: &[f64], eps: f64) -> f64 {
    assert_eq!(p.len(), q.len(), "histograms differ in length");
    let (p, q) = (smoothed(p, eps), smoothed(q, eps));
    p.iter()
        .zip(&q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Jensen-Shannon divergence in nats, bounded by ln 2.
pub fn js_divergence(p: &[f64], q: &[f64], eps: f64) -> f64 {
    assert_eq!(p.len(), q.len(), "histograms differ in length");
    let (p, q) = (smoothed(p, eps), smoothed(q, eps));
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    let half = |x: &[f64]| -> f64 { x.iter().zip(&m).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum() };
    (0.5 * half(&p) + 0.5 * half(&q)).clamp(0.0, std::f64::consts::LN_2)
}

pub fn location_histogram(seqs: &[TrajectorySequence], grid: &GeoGrid) -> Result<Vec<f64>, BehaviorError> {
    let mut h = vec![0.0; grid.cell_count()];
    for st in seqs.iter().flat_map(|s| &s.steps) {
        if !grid.is_valid_token(st.token) {
            return Err(BehaviorError::Invalid(format!("token {} outside the grid", st.token.0)));
        }
        h[st.token.0] += 1.0;
    }
    Ok(h)
}

pub fn stay_histogram(seqs: &[TrajectorySequence]) -> Vec<f64> {
    let mut h = vec![0.0; STAY_BIN_EDGES_S.len() + 1];
    for st in seqs.iter().flat_map(|s| &s.steps) {
        let b = STAY_BIN_EDGES_S.iter().position(|e| st.stay_s < *e).unwrap_or(STAY_BIN_EDGES_S.len());
        h[b] += 1.0;
    }
    h
}

pub fn evaluate_generation(real: &[TrajectorySequence], generated: &[TrajectorySequence], grid: &GeoGrid) -> Result<GenerationReport, BehaviorError> {
    let empty = |s: &[TrajectorySequence]| s.iter().all(|x| x.steps.is_empty());
    if empty(real) || empty(generated) {
        return Err(BehaviorError::EmptyInput);
    }
    let (lr, lg) = (location_histogram(real, grid)?, location_histogram(generated, grid)?);
    let (sr, sg) = (stay_histogram(real), stay_histogram(generated));
    Ok(GenerationReport {
        kl_location: kl_divergence(&lr, &lg, SMOOTHING),
        kl_stay_duration: kl_divergence(&sr, &sg, SMOOTHING),
        js_location: js_divergence(&lr, &lg, SMOOTHING),
    })
}

/// Baseline: uniform start cell, then a uniformly chosen 8-neighbour (or
/// staying put at the border) per step, with exponential stays of mean
/// `mean_stay_s`.
pub fn random_walk(grid: &GeoGrid, n_users: usize, steps: usize, mean_stay_s: f64, seed: u64) -> Vec<TrajectorySequence> {
    let (cols, rows) = (grid.cols() as i64, grid.rows() as i64);
    let stay = Exp::new(1.0 / mean_stay_s).expect("positive mean stay");
    (0..n_users)
        .map(|u| {
            let mut r = rng::stream(seed, "random-walk", &[u as u64]);
            let mut c = r.random_range(0..cols);
            let mut rw = r.random_range(0..rows);
            let mut t = 0.0;
            let mut out = Vec::with_capacity(steps);
            for _ in 0..steps {
                let s: f64 = stay.sample(&mut r).max(1.0);
                out.push(TrajectoryStep::new(CellToken((rw * cols + c) as usize), t, s));
                t += s;
                let (dc, dr) = loop {
                    let d = (r.random_range(-1..=1i64), r.random_range(-1..=1i64));
                    if d != (0, 0) {
                        break d;
                    }
                };
                c = (c + dc).clamp(0, cols - 1);
                rw = (rw + dr).clamp(0, rows - 1);
            }
            TrajectorySequence {
                user_id: u as u64,
                steps: out,
            }
        })
        .collect()
}
