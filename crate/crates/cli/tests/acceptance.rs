//! Acceptance suite: one PASS/FAIL line per headline criterion, with its
//! runtime. Exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::process::Command;
use std::time::Instant;

use netsim_core::behavior::synth::{blob_packets, commute_corpus, commute_grid, split_by_day, CommuteConfig, DEFAULT_BLOBS};
use netsim_core::behavior::{
    build_preference_vectors, cluster_app_actions, evaluate_generation, generate_trajectories, random_walk, train_trajectory_vae, BehaviorError,
    GenConfig, TrajectorySequence, TrajectoryStep, TrajectoryVae, VaeConfig,
};
use netsim_core::exec::Exec;
use netsim_core::optimize::{cross_entropy, hill_climb, ActionSpec, CemConfig, Env, EnvConfig};
use netsim_core::orchestrator::{apply_config, SimConfig, TickPayload};
use netsim_core::presets;
use netsim_core::radio::antenna::{antenna_gain, AnglePair};
use netsim_core::radio::{small_scale, LinkKey};
use netsim_core::rng;
use netsim_core::scenario::{parse_scenario_str, BeamConfig, CellToken, RewardWeights, Scenario, H_BEAMWIDTHS, V_BEAMWIDTHS};
use netsim_neural::gradcheck::{check_params, GradCheckReport};
use netsim_neural::vae::{elbo_loss, exponential_nll, kl_to_standard_normal};
use netsim_neural::{reparameterize, standard_normal, GatedCell, GaussianParams, Linear, Mlp, NeuralError, ParamSet, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t0: Instant, limit_s: f64) -> Result<f64, String> {
    let s = t0.elapsed().as_secs_f64();
    check(s < limit_s, || format!("took {s:.1} s, limit {limit_s} s"))?;
    Ok(s)
}

// ---------------------------------------------------------------- antenna

fn at(az: f64, el: f64) -> AnglePair {
    AnglePair {
        azimuth_deg: az,
        elevation_deg: el,
    }
}

fn antenna_pattern() -> Outcome {
    let t0 = Instant::now();
    for &h in &H_BEAMWIDTHS {
        for &v in &V_BEAMWIDTHS {
            let b = BeamConfig::new(0, h, v);
            let g = b.g_max_dbi;
            check(antenna_gain(&b, at(0.0, 0.0)) == g, || format!("boresight {h}/{v}"))?;
            check(antenna_gain(&b, at(h / 2.0, 0.0)) == g - 3.0, || format!("half-beamwidth azimuth {h}"))?;
            check(antenna_gain(&b, at(-h / 2.0, 0.0)) == g - 3.0, || {
                format!("negative half-beamwidth azimuth {h}")
            })?;
            check(antenna_gain(&b, at(0.0, v / 2.0)) == g - 3.0, || format!("half-beamwidth elevation {v}"))?;
        }
    }
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let b = BeamConfig::new(0, H_BEAMWIDTHS[r.random_range(0..6)], V_BEAMWIDTHS[r.random_range(0..3)]);
        let (az, el) = (r.random_range(-180.0..180.0), r.random_range(-90.0..90.0));
        let g = antenna_gain(&b, at(az, el));
        check((g - antenna_gain(&b, at(-az, el))).abs() < 1e-9, || format!("azimuth symmetry at {az}"))?;
        check((g - antenna_gain(&b, at(az, -el))).abs() < 1e-9, || format!("elevation symmetry at {el}"))?;
        check(g >= b.g_max_dbi - 30.0 - 1e-9 && g <= b.g_max_dbi + 1e-9, || {
            format!("{g} outside [g_max - 30, g_max]")
        })?;
    }
    check(antenna_gain(&BeamConfig::new(0, 65.0, 12.0), at(170.0, 80.0)) == 17.0 - 30.0, || {
        "floor not reached".into()
    })?;
    let s = within(t0, 1.0)?;
    Ok(format!("36 exact points, 1000 random angles, {s:.3} s"))
}

// ------------------------------------------------------------------- SINR

fn random_scenario(seed: u64, full_buffer: bool, mobility: &str) -> Scenario {
    let mut r = rng::stream(seed, "acceptance-scenario", &[]);
    let n_sites = r.random_range(1..=5);
    let n_users = r.random_range(1..=20);
    let mut text = format!(
        "seed = {seed}\n[grid]\norigin = [0.0, 0.0]\nwidth_m = 1000.0\nheight_m = 1000.0\nresolution_m = 20.0\n\
         [population]\nn_users = {n_users}\nmobility = \"{mobility}\"\nfull_buffer = {full_buffer}\nsession_rate_per_s = 0.02\nsession_duration_s = 30.0\n"
    );
    let mut any = false;
    for s in 0..n_sites {
        write!(
            text,
            "[[site]]\nsite_id = {}\nposition = [{:.1}, {:.1}]\nantenna_height_m = 25.0\nmechanical_azimuth_deg = {:.1}\n\
             mechanical_downtilt_deg = 0.0\ntx_power_dbm = 43.0\ncarrier_ghz = 3.5\nbandwidth_mhz = 20.0\nn_prb = 50\n",
            s + 1,
            r.random_range(0.0..1000.0),
            r.random_range(0.0..1000.0),
            r.random_range(0.0..360.0)
        )
        .unwrap();
        for b in 0..r.random_range(1..=3) {
            let active = r.random_bool(0.8);
            any |= active;
            write!(
                text,
                "[[site.beam]]\nbeam_id = {b}\nh_beamwidth_deg = {}\nv_beamwidth_deg = {}\nazimuth_offset_deg = {:.1}\ntilt_deg = {:.1}\nactive = {active}\n",
                H_BEAMWIDTHS[r.random_range(0..6)],
                V_BEAMWIDTHS[r.random_range(0..3)],
                r.random_range(-60.0..60.0),
                r.random_range(-2.0..15.0)
            )
            .unwrap();
        }
    }
    if !any {
        text = text.replacen("active = false", "active = true", 1);
    }
    parse_scenario_str(&text).unwrap()
}

/// Serving beam and SINR recomputed in the linear domain from the recorded
/// link budgets and fading coefficients.
fn oracle_sinr(scn: &Scenario, p: &TickPayload, user: usize) -> (usize, f64) {
    let n = p.positions.len();
    let mut best: Option<(usize, f64, (u32, u32))> = None;
    let mut rx = Vec::new();
    for (bi, b) in p.beams.iter().enumerate() {
        let site = &scn.sites[b.site];
        let beam = &site.beams[b.beam];
        let lb = &p.budgets[bi * n + user];
        let per_re_dbm = site.tx_power_dbm - 10.0 * (12.0 * site.n_prb as f64).log10();
        let rsrp = per_re_dbm - (lb.path_loss_db + lb.shadow_db - lb.antenna_gain_dbi);
        let h = p.fading[bi * n + user];
        rx.push((beam.active, 10f64.powf(rsrp / 10.0) * (h.re * h.re + h.im * h.im)));
        if beam.active {
            let key = (site.site_id, beam.beam_id);
            best = match best {
                Some((_, r0, k0)) if r0 > rsrp || (r0 == rsrp && k0 < key) => best,
                _ => Some((bi, rsrp, key)),
            };
        }
    }
    let serving = best.expect("an active beam").0;
    let noise_mw = 10f64.powf((-174.0 + 10.0 * 15000f64.log10() + scn.sim.noise_figure_db) / 10.0);
    let interference: f64 = rx
        .iter()
        .enumerate()
        .filter(|(b, (a, _))| *a && *b != serving)
        .map(|(_, (_, mw))| mw)
        .sum();
    (serving, 10.0 * (rx[serving].1 / (interference + noise_mw)).log10())
}

fn sinr_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut links = 0;
    for seed in 0..100 {
        let mut c = SimConfig::new(random_scenario(9000 + seed, true, "walk"), 3, seed);
        c.record = true;
        let (_, payloads) = apply_config(&c, Exec::Sequential)
            .map_err(|e| e.to_string())?
            .run()
            .map_err(|e| e.to_string())?;
        for p in &payloads {
            for l in &p.links {
                let (serving, sinr) = oracle_sinr(&c.scenario, p, l.user);
                check(serving == l.serving, || {
                    format!("scenario {seed}: serving beam differs for user {}", l.user)
                })?;
                worst = worst.max((sinr - l.sinr_db).abs());
                links += 1;
            }
        }
    }
    check(worst < 1e-9, || format!("max |dSINR| = {worst:e} dB"))?;
    let s = within(t0, 30.0)?;
    Ok(format!("100 scenarios, {links} links, max |dSINR| = {worst:.1e} dB, {s:.2} s"))
}

// -------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-5;
/// The VAE loss is O(10), so at 1e-5 cancellation noise alone reaches 1e-4
/// relative on its smallest gradients.
const VAE_FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-4;

type LossFn<'a> = Box<dyn Fn(&ParamSet) -> Result<(f64, Vec<Tensor>), NeuralError> + 'a>;

fn gradcheck(ps: &ParamSet, f: LossFn<'_>) -> Result<GradCheckReport, String> {
    let (_, grads) = f(ps).map_err(|e| e.to_string())?;
    check_params(ps, &grads, FD_STEP, |q| f(q).map(|r| r.0)).map_err(|e| e.to_string())
}

fn finish(tape: &Tape, l: netsim_neural::Var) -> Result<(f64, Vec<Tensor>), NeuralError> {
    let g = tape.backward(l)?;
    Ok((tape.value(l).data()[0], tape.param_grads(&g)))
}

fn widen(ps: &mut ParamSet, by: f64) {
    for t in ps.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= by);
    }
}

fn layer_gradients() -> Result<Vec<(&'static str, GradCheckReport)>, String> {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let x = Tensor::vector(vec![0.4, -1.1, 0.7, 1.9, -0.3]);
    let mut out = Vec::new();

    let mut ps = ParamSet::new();
    let lin = Linear::new(&mut ps, "l", 5, 4, &mut r);
    widen(&mut ps, 4.0);
    let f: LossFn = Box::new(|q| {
        let mut t = Tape::with_params(q);
        let p = t.bind_all();
        let xv = t.input(x.clone());
        let y = lin.forward(&mut t, &p, xv)?;
        let y = t.tanh(y)?;
        let y = t.square(y)?;
        let l = t.sum(y)?;
        finish(&t, l)
    });
    out.push(("linear", gradcheck(&ps, f)?));

    let mut ps = ParamSet::new();
    let mlp = Mlp::new(&mut ps, "m", &[5, 7, 6, 3], &mut r);
    widen(&mut ps, 6.0);
    let f: LossFn = Box::new(|q| {
        let mut t = Tape::with_params(q);
        let p = t.bind_all();
        let xv = t.input(x.clone());
        let y = mlp.forward(&mut t, &p, xv)?;
        let y = t.square(y)?;
        let l = t.sum(y)?;
        finish(&t, l)
    });
    out.push(("mlp", gradcheck(&ps, f)?));

    let mut ps = ParamSet::new();
    let cell = GatedCell::new(&mut ps, "g", 5, 4, &mut r);
    widen(&mut ps, 6.0);
    let seq = [
        x.clone(),
        Tensor::vector(vec![-0.2, 0.5, 1.3, -0.8, 0.1]),
        Tensor::vector(vec![1.0, 0.0, -1.0, 0.5, 0.5]),
    ];
    let f: LossFn = Box::new(|q| {
        let mut t = Tape::with_params(q);
        let p = t.bind_all();
        let xs: Vec<_> = seq.iter().map(|s| t.input(s.clone())).collect();
        let hs = cell.forward(&mut t, &p, &xs, None)?;
        let cat = t.concat(&hs)?;
        let y = t.square(cat)?;
        let l = t.sum(y)?;
        finish(&t, l)
    });
    out.push(("gated recurrent cell", gradcheck(&ps, f)?));

    let mut ps = ParamSet::new();
    ps.push(
        "table",
        Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).map_err(|e| e.to_string())?,
    );
    ps.push("w", Tensor::vector(vec![0.9, -1.4, 0.3]));
    let f: LossFn = Box::new(|q| {
        let mut t = Tape::with_params(q);
        let p = t.bind_all();
        let a = t.row(p[0], 2)?;
        let b = t.row(p[0], 0)?;
        let s = t.add(a, b)?;
        let logits = t.mul(s, p[1])?;
        let l = t.softmax_nll(logits, 1)?;
        finish(&t, l)
    });
    out.push(("embedding + softmax head", gradcheck(&ps, f)?));

    let eps = standard_normal(&mut r, 4);
    let mut ps = ParamSet::new();
    ps.push("mu", Tensor::vector(vec![0.3, -1.2, 0.8, 0.05]));
    ps.push("log_sigma", Tensor::vector(vec![-0.4, 0.6, 0.1, -1.0]));
    ps.push("w", Tensor::vector(vec![1.1, -0.7, 0.2, 0.9]));
    let f: LossFn = Box::new(|q| {
        let mut t = Tape::with_params(q);
        let p = t.bind_all();
        let g = GaussianParams::new(&mut t, p[0], p[1])?;
        let z = reparameterize(&mut t, &g, &eps)?;
        let zw = t.mul(z, p[2])?;
        let raw = t.sum(zw)?;
        let dur = exponential_nll(&mut t, raw, 1.7)?;
        let loc = t.softmax_nll(zw, 3)?;
        let kl = kl_to_standard_normal(&mut t, &g)?;
        let e = elbo_loss(&mut t, &[dur], &[loc], &g)?;
        let l = t.add(e.loss, kl)?;
        finish(&t, l)
    });
    out.push(("gaussian latent + duration head + ELBO", gradcheck(&ps, f)?));
    Ok(out)
}

fn vae_gradients() -> Result<GradCheckReport, String> {
    let cfg = VaeConfig {
        vocab: commute_grid().cell_count(),
        ..VaeConfig::default()
    };
    let m = TrajectoryVae::new(cfg.clone(), 23).map_err(|e| e.to_string())?;
    let seq = TrajectorySequence {
        user_id: 41,
        steps: vec![
            TrajectoryStep::new(CellToken(12), 7.5 * 3600.0, 2700.0),
            TrajectoryStep::new(CellToken(87), 8.25 * 3600.0, 5400.0),
        ],
    };
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let eps = standard_normal(&mut r, cfg.latent_dim);
    let (_, grads) = m.loss_and_grads(&seq, &eps).map_err(|e| e.to_string())?;
    check_params(&m.params, &grads, VAE_FD_STEP, |q| {
        m.loss_with(q, &seq, &eps).map_err(|e| match e {
            BehaviorError::Neural(n) => n,
            other => panic!("{other}"),
        })
    })
    .map_err(|e| e.to_string())
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let mut reports = layer_gradients()?;
    reports.push(("full 2-step VAE loss", vae_gradients()?));
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (name, rep) in &reports {
        check(rep.max_rel_error < FD_TOL, || {
            format!("{name}: rel error {:.2e} at {}", rep.max_rel_error, rep.worst_param)
        })?;
        worst = worst.max(rep.max_rel_error);
        checked += rep.checked;
    }
    let s = within(t0, 60.0)?;
    Ok(format!(
        "{} checks, {checked} scalars, max rel error {worst:.1e}, {s:.1} s",
        reports.len()
    ))
}

// ---------------------------------------------------------------- VAE KL

fn generative_quality() -> Outcome {
    let t0 = Instant::now();
    let ccfg = CommuteConfig::default();
    let grid = commute_grid();
    let (train, held) = split_by_day(&commute_corpus(&ccfg), ccfg.train_days);
    let real: Vec<_> = held.into_iter().filter(|s| !s.steps.is_empty()).collect();
    let cfg = VaeConfig {
        vocab: grid.cell_count(),
        epochs: 5,
        lr: 5e-3,
        ..VaeConfig::default()
    };
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let (model, _) = train_trajectory_vae(&train, &cfg, seed, Exec::default()).map_err(|e| e.to_string())?;
        let gen_cfg = GenConfig {
            n_users: real.len(),
            steps: 4,
            seed,
            ..GenConfig::default()
        };
        let generated = generate_trajectories(&model, &gen_cfg, Exec::default()).map_err(|e| e.to_string())?;
        let walk = random_walk(&grid, real.len(), 4, 3600.0, rng::derive(seed, &[rng::label("walk")]));
        let m = evaluate_generation(&real, &generated, &grid).map_err(|e| e.to_string())?;
        let w = evaluate_generation(&real, &walk, &grid).map_err(|e| e.to_string())?;
        ratios.push(m.kl_location / w.kl_location);
        check(m.kl_location <= 0.5 * w.kl_location, || {
            format!("seed {seed}: kl_location {:.4} > 0.5 x random walk {:.4}", m.kl_location, w.kl_location)
        })?;
    }
    let s = within(t0, 300.0)?;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok(format!("5/5 seeds, model/walk kl_location = [{}], {s:.1} s", shown.join(", ")))
}

// ----------------------------------------------------------- optimization

fn optimization() -> Outcome {
    let t0 = Instant::now();
    let mut worst = f64::INFINITY;
    for seed in 0..10u64 {
        let mut env = Env::new(presets::off_boresight(), EnvConfig::default(), Exec::Sequential);
        env.reset(RewardWeights::COVERAGE, seed).map_err(|e| e.to_string())?;
        let base = env.baseline().map_err(|e| e.to_string())?.clone();
        let hc = hill_climb(&env, 200, seed).map_err(|e| e.to_string())?;
        let ce = cross_entropy(&env, &CemConfig::for_budget(200, seed), Exec::default()).map_err(|e| e.to_string())?;
        for (name, r) in [("hill-climb", &hc), ("cross-entropy", &ce)] {
            check(r.progress.len() <= 200, || {
                format!("{name} seed {seed}: {} evaluations", r.progress.len())
            })?;
            check(r.best_reward >= 0.5, || format!("{name} seed {seed}: reward {:.3}", r.best_reward))?;
            let k = &r.best_kpis;
            check(
                k.coverage_pct > base.coverage_pct && k.avg_rsrp_dbm > base.avg_rsrp_dbm && k.dl_mbps > base.dl_mbps,
                || format!("{name} seed {seed}: KPIs {k:?} do not all improve on {base:?}"),
            )?;
            worst = worst.min(r.best_reward);
        }
    }
    let s = within(t0, 300.0)?;
    Ok(format!("10/10 seeds for both, lowest reward {worst:.3}, {s:.1} s"))
}

// ------------------------------------------------------------ determinism

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = Command::new(env!("CARGO_BIN_EXE_netsim"))
            .args(["simulate", "--scenario", "preset:reference", "--ticks", "30", "--seed", "5", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        check(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        let files: Vec<Vec<u8>> = ["kpi.csv", "summary.csv"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap_or_default())
            .collect();
        outputs.push(files);
    }
    check(outputs[0] == outputs[1], || "simulate outputs differ between runs".into())?;
    check(!outputs[0][0].is_empty(), || "empty kpi.csv".into())?;

    let mut env = Env::new(presets::reference(), EnvConfig::default(), Exec::Sequential);
    env.reset(RewardWeights::default(), 5).map_err(|e| e.to_string())?;
    let noop = ActionSpec::noop(env.configs().map_err(|e| e.to_string())?);
    for i in 0..3 {
        let t = env.step(&noop).map_err(|e| e.to_string())?;
        check(t.reward == 0.0, || format!("no-op step {i} reward {}", t.reward))?;
    }
    Ok(format!(
        "simulate byte-identical ({} + {} bytes), 3 no-op steps with reward 0",
        outputs[0][0].len(),
        outputs[0][1].len()
    ))
}

// ----------------------------------------------------------- conservation

fn conservation() -> Outcome {
    let mut ticks = 0;
    let mut seed = 0;
    while ticks < 10_000 {
        let mobility = if seed % 2 == 0 { "walk" } else { "static" };
        let mut c = SimConfig::new(random_scenario(20_000 + seed, seed % 3 == 0, mobility), 500, seed);
        c.record = true;
        let (_, payloads) = apply_config(&c, Exec::default())
            .map_err(|e| e.to_string())?
            .run()
            .map_err(|e| e.to_string())?;
        for p in &payloads {
            let mut per_beam: HashMap<usize, (u32, u32)> = HashMap::new();
            for l in &p.links {
                let e = per_beam.entry(l.serving).or_default();
                e.0 += p.prb_dl[l.user];
                e.1 += p.prb_ul[l.user];
            }
            for (b, (d, u)) in per_beam {
                let cap = c.scenario.sites[p.beams[b].site].n_prb;
                check(d <= cap && u <= cap, || format!("scenario {seed} tick {}: {d}/{u} PRBs > {cap}", p.tick))?;
            }
            ticks += 1;
        }
        seed += 1;
    }

    let link = LinkKey { site: 3, beam: 1, user: 8 };
    let n = 100_000u64;
    let mean = (0..n).map(|t| small_scale(99, link, t, false, 10.0).norm_sqr()).sum::<f64>() / n as f64;
    check((0.99..=1.01).contains(&mean), || format!("Rayleigh |h|^2 mean {mean}"))?;

    let packets = blob_packets(&["mail", "video", "game"], 30, 6, &DEFAULT_BLOBS, 5);
    let mut worst: f64 = 0.0;
    for pref in build_preference_vectors(&packets).map_err(|e| e.to_string())? {
        worst = worst.max((pref.app_probs.iter().sum::<f64>() - 1.0).abs());
    }
    let clusters = cluster_app_actions(&packets, 3, 2..=8, 5).map_err(|e| e.to_string())?;
    for app in &clusters.apps {
        worst = worst.max((app.clusters.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs());
    }
    check(worst < 1e-9, || format!("normalization error {worst:e}"))?;
    Ok(format!(
        "{ticks} ticks within n_prb, Rayleigh mean {mean:.4}, max |sum - 1| = {worst:.1e}"
    ))
}

// ------------------------------------------------------------ performance

fn tick_budget() -> Outcome {
    let c = SimConfig::new(presets::reference(), 30, 1);
    let mut e = apply_config(&c, Exec::Sequential).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let t = Instant::now();
        e.step_tick().map_err(|e| e.to_string())?;
        worst = worst.max(t.elapsed().as_secs_f64());
    }
    check(worst < 0.1, || format!("slowest tick {:.1} ms", worst * 1e3))?;
    Ok(format!("slowest of 30 single-thread ticks {:.2} ms", worst * 1e3))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("antenna pattern", antenna_pattern),
        ("SINR oracle equivalence", sinr_oracle),
        ("gradient checks", gradient_checks),
        ("generative quality", generative_quality),
        ("optimization improvement", optimization),
        ("determinism", determinism),
        ("conservation and normalization", conservation),
        ("tick performance", tick_budget),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let s = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<32} {s:>7.2} s  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<32} {s:>7.2} s  {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
