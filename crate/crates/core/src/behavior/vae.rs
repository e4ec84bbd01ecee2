//! Sequence VAE over grid-cell visits.
//!
//! Encoder: a gated recurrent cell reads `[loc emb, hour emb, user emb,
//! ln(1 + stay_h)]` per visit; two MLPs map the last state to the Gaussian
//! posterior. Decoder: `h0 = tanh(W z + b)`, then per visit a gated cell
//! reads `[prev loc emb, hour emb, ln(1 + prev stay_h)]` and emits location
//! logits plus an exponential stay rate conditioned on the chosen location.
//! Stays are modelled in hours.

use std::io::{Read, Write};
use std::path::Path;

use netsim_neural::{
    adam_step, elbo_loss, exponential_nll, reparameterize, standard_normal, AdamState, Checkpoint, Elbo, GatedCell, GaussianParams, Linear, Mlp,
    NeuralError, ParamId, ParamSet, Tape, Tensor, Var,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{hour_of_day, BehaviorError, TrajectorySequence, TrajectoryStep};
use crate::exec::Exec;
use crate::rng::{self, SimRng};
use crate::scenario::CellToken;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    /// Number of location tokens (grid cells).
    pub vocab: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub loc_embed: usize,
    pub hour_embed: usize,
    pub user_buckets: usize,
    pub user_embed: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Longer sequences are truncated for training.
    pub max_steps: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            vocab: 0,
            latent_dim: 8,
            hidden_dim: 32,
            loc_embed: 16,
            hour_embed: 4,
            user_buckets: 8,
            user_embed: 4,
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            max_steps: 32,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), BehaviorError> {
        let dims = [
            ("vocab", self.vocab),
            ("latent_dim", self.latent_dim),
            ("hidden_dim", self.hidden_dim),
            ("loc_embed", self.loc_embed),
            ("hour_embed", self.hour_embed),
            ("user_buckets", self.user_buckets),
            ("user_embed", self.user_embed),
            ("batch_size", self.batch_size),
            ("max_steps", self.max_steps),
        ];
        if let Some((n, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(BehaviorError::Invalid(format!("vae.{n} must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(BehaviorError::Invalid("vae.lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryVae {
    pub cfg: VaeConfig,
    pub params: ParamSet,
    emb_loc: ParamId,
    emb_hour: ParamId,
    emb_user: ParamId,
    enc: GatedCell,
    enc_mu: Mlp,
    enc_ls: Mlp,
    dec_init: Linear,
    dec: GatedCell,
    out_loc: Linear,
    out_rate: Mlp,
}

/// Model input for one visit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub token: usize,
    pub hour: usize,
    pub stay_h: f64,
}

fn user_bucket(user_id: u64, buckets: usize) -> usize {
    (rng::mix64(user_id) % buckets as u64) as usize
}

impl TrajectoryVae {
    pub fn new(cfg: VaeConfig, seed: u64) -> Result<Self, BehaviorError> {
        cfg.validate()?;
        let mut r = SimRng::seed_from_u64(rng::derive(seed, &[rng::label("vae-init")]));
        let mut p = ParamSet::new();
        let (h, l) = (cfg.hidden_dim, cfg.latent_dim);
        // the extra location row is the start-of-sequence token
        let emb_loc = p.push_uniform("emb.loc", &[cfg.vocab + 1, cfg.loc_embed], &mut r);
        let emb_hour = p.push_uniform("emb.hour", &[24, cfg.hour_embed], &mut r);
        let emb_user = p.push_uniform("emb.user", &[cfg.user_buckets, cfg.user_embed], &mut r);
        let enc_in = cfg.loc_embed + cfg.hour_embed + cfg.user_embed + 1;
        let enc = GatedCell::new(&mut p, "enc", enc_in, h, &mut r);
        let enc_mu = Mlp::new(&mut p, "enc.mu", &[h, h, l], &mut r);
        let enc_ls = Mlp::new(&mut p, "enc.ls", &[h, h, l], &mut r);
        let dec_init = Linear::new(&mut p, "dec.init", l, h, &mut r);
        let dec = GatedCell::new(&mut p, "dec", cfg.loc_embed + cfg.hour_embed + 1, h, &mut r);
        let out_loc = Linear::new(&mut p, "out.loc", h, cfg.vocab, &mut r);
        let out_rate = Mlp::new(&mut p, "out.rate", &[h + cfg.loc_embed, h, 1], &mut r);
        Ok(Self {
            cfg,
            params: p,
            emb_loc,
            emb_hour,
            emb_user,
            enc,
            enc_mu,
            enc_ls,
            dec_init,
            dec,
            out_loc,
            out_rate,
        })
    }

    pub fn inputs(&self, seq: &TrajectorySequence) -> Result<Vec<StepInput>, BehaviorError> {
        seq.steps
            .iter()
            .take(self.cfg.max_steps)
            .map(|s| {
                if s.token.0 >= self.cfg.vocab {
                    return Err(BehaviorError::Invalid(format!(
                        "token {} outside vocabulary of {}",
                        s.token.0, self.cfg.vocab
                    )));
                }
                if !(s.stay_s > 0.0 && s.stay_s.is_finite()) {
                    return Err(BehaviorError::Invalid(format!("stay {} is not positive", s.stay_s)));
                }
                Ok(StepInput {
                    token: s.token.0,
                    hour: s.hour as usize,
                    stay_h: s.stay_s / 3600.0,
                })
            })
            .collect()
    }

    /// Negative ELBO of one sequence on `tape`, with the latent noise `eps`.
    pub fn sequence_loss(&self, tape: &mut Tape, p: &[Var], steps: &[StepInput], user_id: u64, eps: &Tensor) -> Result<Elbo, NeuralError> {
        if steps.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let user = tape.row(p[self.emb_user.0], user_bucket(user_id, self.cfg.user_buckets))?;
        let mut xs = Vec::with_capacity(steps.len());
        for s in steps {
            let l = tape.row(p[self.emb_loc.0], s.token)?;
            let hr = tape.row(p[self.emb_hour.0], s.hour)?;
            let d = tape.input(Tensor::scalar(s.stay_h.ln_1p()));
            xs.push(tape.concat(&[l, hr, user, d])?);
        }
        let hs = self.enc.forward(tape, p, &xs, None)?;
        let last = *hs.last().expect("non-empty sequence");
        let mu = self.enc_mu.forward(tape, p, last)?;
        let ls = self.enc_ls.forward(tape, p, last)?;
        let g = GaussianParams::new(tape, mu, ls)?;
        let z = reparameterize(tape, &g, eps)?;

        let init = self.dec_init.forward(tape, p, z)?;
        let mut h = tape.tanh(init)?;
        let mut dur = Vec::with_capacity(steps.len());
        let mut loc = Vec::with_capacity(steps.len());
        let mut prev_tok = self.cfg.vocab;
        let mut prev_stay = 0.0;
        for s in steps {
            let pl = tape.row(p[self.emb_loc.0], prev_tok)?;
            let hr = tape.row(p[self.emb_hour.0], s.hour)?;
            let d = tape.input(Tensor::scalar(f64::ln_1p(prev_stay)));
            let x = tape.concat(&[pl, hr, d])?;
            h = self.dec.step(tape, p, x, h)?;
            let logits = self.out_loc.forward(tape, p, h)?;
            loc.push(tape.softmax_nll(logits, s.token)?);
            let cur = tape.row(p[self.emb_loc.0], s.token)?;
            let rin = tape.concat(&[h, cur])?;
            let raw = self.out_rate.forward(tape, p, rin)?;
            dur.push(exponential_nll(tape, raw, s.stay_h)?);
            prev_tok = s.token;
            prev_stay = s.stay_h;
        }
        elbo_loss(tape, &dur, &loc, &g)
    }

    /// Loss and parameter gradients of one sequence.
    pub fn loss_and_grads(&self, seq: &TrajectorySequence, eps: &Tensor) -> Result<(f64, Vec<Tensor>), BehaviorError> {
        let steps = self.inputs(seq)?;
        let mut tape = Tape::with_params(&self.params);
        let p = tape.bind_all();
        let elbo = self.sequence_loss(&mut tape, &p, &steps, seq.user_id, eps)?;
        let g = tape.backward(elbo.loss)?;
        Ok((elbo.total(), tape.param_grads(&g)))
    }

    /// Loss value only.
    pub fn loss(&self, seq: &TrajectorySequence, eps: &Tensor) -> Result<f64, BehaviorError> {
        self.loss_with(&self.params, seq, eps)
    }

    /// Loss value with substitute weights of the same architecture.
    pub fn loss_with(&self, params: &ParamSet, seq: &TrajectorySequence, eps: &Tensor) -> Result<f64, BehaviorError> {
        let steps = self.inputs(seq)?;
        let mut tape = Tape::with_params(params);
        let p = tape.bind_all();
        Ok(self.sequence_loss(&mut tape, &p, &steps, seq.user_id, eps)?.total())
    }

    fn meta(&self) -> String {
        toml::to_string(&self.cfg).expect("config is serializable")
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint {
            seed,
            meta: self.meta(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, BehaviorError> {
        let cfg: VaeConfig = toml::from_str(&ck.meta).map_err(|e| BehaviorError::InvalidCheckpoint(format!("metadata: {}", e.message())))?;
        let mut m = Self::new(cfg, 0).map_err(|e| BehaviorError::InvalidCheckpoint(e.to_string()))?;
        m.params
            .check_like(ck.params.tensors(), "checkpoint")
            .map_err(|e| BehaviorError::InvalidCheckpoint(e.to_string()))?;
        if m.params.names() != ck.params.names() {
            return Err(BehaviorError::InvalidCheckpoint("parameter names differ from the architecture".into()));
        }
        if ck.params.tensors().iter().any(|t| !t.is_finite()) {
            return Err(BehaviorError::InvalidCheckpoint("non-finite weights".into()));
        }
        m.params = ck.params.clone();
        Ok(m)
    }

    pub fn write_to<W: Write>(&self, w: W, seed: u64) -> Result<(), BehaviorError> {
        Ok(self.to_checkpoint(seed).write_to(w)?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, BehaviorError> {
        let ck = Checkpoint::read_from(r).map_err(|e| BehaviorError::InvalidCheckpoint(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64) -> Result<(), BehaviorError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f, seed)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BehaviorError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn eps_for(seed: u64, epoch: usize, idx: usize, dim: usize) -> Tensor {
    let mut r = rng::stream(seed, "vae-eps", &[epoch as u64, idx as u64]);
    standard_normal(&mut r, dim)
}

/// Trains on `seqs` with minibatch Adam; gradients of a batch are computed in
/// parallel and summed in batch order. Returns the model and the mean
/// per-sequence loss of every epoch.
pub fn train_trajectory_vae(seqs: &[TrajectorySequence], cfg: &VaeConfig, seed: u64, exec: Exec) -> Result<(TrajectoryVae, Vec<f64>), BehaviorError> {
    let usable: Vec<&TrajectorySequence> = seqs.iter().filter(|s| !s.steps.is_empty()).collect();
    if usable.len() < 2 {
        return Err(BehaviorError::TooFewSequences { need: 2, got: usable.len() });
    }
    let mut model = TrajectoryVae::new(cfg.clone(), seed)?;
    for s in &usable {
        model.inputs(s)?;
    }
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut shuffle = rng::stream(seed, "vae-shuffle", &[]);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let m = &model;
            let results = exec.map(batch, |&i| m.loss_and_grads(usable[i], &eps_for(seed, epoch, i, cfg.latent_dim)));
            let mut grads = model.params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (loss, g) = r.map_err(|e| match e {
                    BehaviorError::Neural(NeuralError::NonFinite(_)) => BehaviorError::Diverged(epoch),
                    other => other,
                })?;
                total += loss;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += b * scale;
                    }
                }
            }
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(BehaviorError::Diverged(epoch));
            }
            adam_step(&mut model.params, &grads, &mut adam, cfg.lr)?;
        }
        let mean = total / usable.len() as f64;
        if !mean.is_finite() {
            return Err(BehaviorError::Diverged(epoch));
        }
        trace.push(mean);
    }
    Ok((model, trace))
}

/// Online generation options.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_users: usize,
    pub steps: usize,
    pub seed: u64,
    /// Seconds after midnight of the first arrival.
    pub time_of_day_start_s: f64,
    /// Ids are assigned from here upwards.
    pub first_user_id: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_users: 0,
            steps: 8,
            seed: 0,
            time_of_day_start_s: 0.0,
            first_user_id: 0,
        }
    }
}

fn sample_categorical(r: &mut SimRng, probs: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples `z ~ N(0, I)` per user and decodes autoregressively. Each user
/// draws from its own stream, so users can be generated in parallel.
pub fn generate_trajectories(model: &TrajectoryVae, cfg: &GenConfig, exec: Exec) -> Result<Vec<TrajectorySequence>, BehaviorError> {
    let ids: Vec<usize> = (0..cfg.n_users).collect();
    exec.map(&ids, |&u| generate_one(model, cfg, u)).into_iter().collect()
}

fn generate_one(model: &TrajectoryVae, cfg: &GenConfig, u: usize) -> Result<TrajectorySequence, BehaviorError> {
    let c = &model.cfg;
    let mut r = rng::stream(cfg.seed, "vae-gen", &[u as u64]);
    let mut tape = Tape::with_params(&model.params);
    let p = tape.bind_all();
    let z = tape.input(standard_normal(&mut r, c.latent_dim));
    let init = model.dec_init.forward(&mut tape, &p, z)?;
    let mut h = tape.tanh(init)?;
    let mut prev_tok = c.vocab;
    let mut prev_stay_h = 0.0;
    let mut t = cfg.time_of_day_start_s;
    let mut steps = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let hour = hour_of_day(t) as usize;
        let pl = tape.row(p[model.emb_loc.0], prev_tok)?;
        let hr = tape.row(p[model.emb_hour.0], hour)?;
        let d = tape.input(Tensor::scalar(f64::ln_1p(prev_stay_h)));
        let x = tape.concat(&[pl, hr, d])?;
        h = model.dec.step(&mut tape, &p, x, h)?;
        let logits = model.out_loc.forward(&mut tape, &p, h)?;
        let probs = netsim_neural::softmax(tape.value(logits).data());
        let tok = sample_categorical(&mut r, &probs);
        let cur = tape.row(p[model.emb_loc.0], tok)?;
        let rin = tape.concat(&[h, cur])?;
        let raw = model.out_rate.forward(&mut tape, &p, rin)?;
        let rate = netsim_neural::vae::rate_link(tape.value(raw).data()[0]);
        // inverse-CDF draw; 1 - U lies in (0, 1]
        let u01: f64 = r.random();
        let stay_h = -(1.0 - u01).ln() / rate;
        let stay_s = (stay_h * 3600.0).max(super::preprocess::MIN_STAY_S);
        steps.push(TrajectoryStep::new(CellToken(tok), t, stay_s));
        t += stay_s;
        prev_tok = tok;
        prev_stay_h = stay_s / 3600.0;
    }
    Ok(TrajectorySequence {
        user_id: cfg.first_user_id + u as u64,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(tokens: &[usize], n: usize) -> Vec<TrajectorySequence> {
        (0..n)
            .map(|u| {
                let mut t = 0.0;
                let steps = tokens
                    .iter()
                    .map(|&k| {
                        let s = TrajectoryStep::new(CellToken(k), t, 3600.0);
                        t += 3600.0;
                        s
                    })
                    .collect();
                TrajectorySequence { user_id: u as u64, steps }
            })
            .collect()
    }

    fn small_cfg(vocab: usize) -> VaeConfig {
        VaeConfig {
            vocab,
            latent_dim: 2,
            hidden_dim: 6,
            loc_embed: 3,
            hour_embed: 2,
            user_buckets: 2,
            user_embed: 2,
            epochs: 3,
            batch_size: 4,
            lr: 1e-2,
            max_steps: 16,
        }
    }

    #[test]
    fn too_few_sequences() {
        let s = toy(&[0, 1], 1);
        assert!(matches!(
            train_trajectory_vae(&s, &small_cfg(2), 1, Exec::Sequential),
            Err(BehaviorError::TooFewSequences { .. })
        ));
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let s = toy(&[0, 1, 0, 1], 6);
        let (a, ta) = train_trajectory_vae(&s, &small_cfg(2), 5, Exec::Sequential).unwrap();
        let (b, tb) = train_trajectory_vae(&s, &small_cfg(2), 5, Exec::Parallel).unwrap();
        assert_eq!(ta, tb);
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_to(&mut ba, 5).unwrap();
        b.write_to(&mut bb, 5).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = TrajectoryVae::new(small_cfg(4), 9).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf, 9).unwrap();
        let back = TrajectoryVae::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(TrajectoryVae::read_from(&buf[..10]), Err(BehaviorError::InvalidCheckpoint(_))));
    }

    #[test]
    fn generation_shape() {
        let m = TrajectoryVae::new(small_cfg(5), 1).unwrap();
        let cfg = GenConfig {
            n_users: 0,
            ..GenConfig::default()
        };
        assert!(generate_trajectories(&m, &cfg, Exec::Sequential).unwrap().is_empty());
        let cfg = GenConfig {
            n_users: 5,
            steps: 10,
            seed: 3,
            ..GenConfig::default()
        };
        let g = generate_trajectories(&m, &cfg, Exec::Sequential).unwrap();
        assert_eq!(g.len(), 5);
        for s in &g {
            assert_eq!(s.steps.len(), 10);
            assert!(s.steps.iter().all(|st| st.token.0 < 5 && st.stay_s > 0.0));
        }
        assert_eq!(g, generate_trajectories(&m, &cfg, Exec::Parallel).unwrap());
    }
}
