//! Pluggable large-scale path-loss providers.

use std::fmt::Debug;
use std::sync::Arc;

use netsim_neural::{adam_step, AdamState, Mlp, NeuralError, ParamSet, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Urban-micro style LOS model, dB.
pub fn path_loss_los(d3d_m: f64, fc_ghz: f64) -> f64 {
    32.4 + 21.0 * d3d_m.max(1.0).log10() + 20.0 * fc_ghz.log10()
}

/// NLOS model before the LOS lower bound is applied, dB.
pub fn path_loss_nlos_raw(d3d_m: f64, fc_ghz: f64) -> f64 {
    22.4 + 35.3 * d3d_m.max(1.0).log10() + 21.3 * fc_ghz.log10()
}

/// Empirical path loss; NLOS never drops below LOS at the same distance.
pub fn path_loss(d3d_m: f64, fc_ghz: f64, los: bool) -> f64 {
    let l = path_loss_los(d3d_m, fc_ghz);
    if los {
        l
    } else {
        path_loss_nlos_raw(d3d_m, fc_ghz).max(l)
    }
}

pub trait PathLossModel: Debug + Send + Sync {
    fn path_loss_db(&self, d3d_m: f64, fc_ghz: f64, los: bool) -> f64;
    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Empirical;

impl PathLossModel for Empirical {
    fn path_loss_db(&self, d3d_m: f64, fc_ghz: f64, los: bool) -> f64 {
        path_loss(d3d_m, fc_ghz, los)
    }

    fn name(&self) -> &'static str {
        "empirical"
    }
}

pub fn empirical() -> Arc<dyn PathLossModel> {
    Arc::new(Empirical)
}

/// Training options for [`LearnedPathLoss`].
#[derive(Debug, Clone)]
pub struct LearnedConfig {
    pub samples: usize,
    pub noise_db: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub d_range_m: (f64, f64),
    pub fc_range_ghz: (f64, f64),
}

impl Default for LearnedConfig {
    fn default() -> Self {
        Self {
            samples: 600,
            noise_db: 1.0,
            hidden: 16,
            epochs: 400,
            lr: 0.01,
            d_range_m: (10.0, 5000.0),
            fc_range_ghz: (0.7, 6.0),
        }
    }
}

/// MLP regression of path loss on `(log10 d, log10 fc, los)`, trained on
/// noisy samples of the empirical model.
#[derive(Debug, Clone)]
pub struct LearnedPathLoss {
    mlp: Mlp,
    params: ParamSet,
}

const PL_SCALE: f64 = 100.0;

fn features(d: f64, fc: f64, los: bool) -> Vec<f64> {
    vec![(d.max(1.0).log10() - 2.5) / 1.0, fc.log10() * 2.0, if los { 1.0 } else { -1.0 }]
}

impl LearnedPathLoss {
    pub fn fit(cfg: &LearnedConfig, seed: u64) -> Result<Self, NeuralError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, cfg.noise_db.max(1e-12)).expect("positive std");
        let (ld0, ld1) = (cfg.d_range_m.0.log10(), cfg.d_range_m.1.log10());
        let data: Vec<(Vec<f64>, f64)> = (0..cfg.samples)
            .map(|_| {
                let d = 10f64.powf(rng.random_range(ld0..ld1));
                let fc = rng.random_range(cfg.fc_range_ghz.0..cfg.fc_range_ghz.1);
                let los = rng.random_bool(0.5);
                let y = path_loss(d, fc, los) + noise.sample(&mut rng);
                (features(d, fc, los), y / PL_SCALE)
            })
            .collect();
        let mut params = ParamSet::new();
        let mlp = Mlp::new(&mut params, "pl", &[3, cfg.hidden, cfg.hidden, 1], &mut rng);
        let mut adam = AdamState::new(&params);
        for _ in 0..cfg.epochs {
            let mut grads = params.zeros_like();
            for (x, y) in &data {
                let mut tape = Tape::with_params(&params);
                let p = tape.bind_all();
                let xv = tape.input(Tensor::vector(x.clone()));
                let out = mlp.forward(&mut tape, &p, xv)?;
                let target = tape.input(Tensor::scalar(*y));
                let diff = tape.sub(out, target)?;
                let sq = tape.square(diff)?;
                let g = tape.backward(sq)?;
                for (acc, gi) in grads.iter_mut().zip(tape.param_grads(&g)) {
                    for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += b / data.len() as f64;
                    }
                }
            }
            adam_step(&mut params, &grads, &mut adam, cfg.lr)?;
        }
        Ok(Self { mlp, params })
    }

    pub fn predict(&self, d3d_m: f64, fc_ghz: f64, los: bool) -> f64 {
        let mut tape = Tape::with_params(&self.params);
        let p = tape.bind_all();
        let x = tape.input(Tensor::vector(features(d3d_m, fc_ghz, los)));
        let y = self.mlp.forward(&mut tape, &p, x).expect("feature width is fixed");
        tape.value(y).data()[0] * PL_SCALE
    }
}

impl PathLossModel for LearnedPathLoss {
    fn path_loss_db(&self, d3d_m: f64, fc_ghz: f64, los: bool) -> f64 {
        // path loss below free space at 1 m is not physical
        self.predict(d3d_m, fc_ghz, los).max(path_loss_los(1.0, fc_ghz))
    }

    fn name(&self) -> &'static str {
        "learned"
    }
}
