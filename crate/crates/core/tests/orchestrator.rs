use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use netsim_core::exec::Exec;
use netsim_core::net::{aggregate_kpis, link_states};
use netsim_core::orchestrator::{apply_config, run_episode, schedule_all, summarize, Episode, SimConfig, World};
use netsim_core::presets;
use netsim_core::radio::{empirical, ChannelMatrix};
use netsim_core::rng;
use netsim_core::scenario::{parse_scenario_str, Scenario};
use rand::Rng;

fn site_block(id: u64, x: f64, y: f64, az: f64, beams: &[(f64, f64, f64, f64, bool)]) -> String {
    let mut s = format!(
        "[[site]]\nsite_id = {id}\nposition = [{x:.1}, {y:.1}]\nantenna_height_m = 25.0\nmechanical_azimuth_deg = {az:.1}\n\
         mechanical_downtilt_deg = 0.0\ntx_power_dbm = 43.0\ncarrier_ghz = 3.5\nbandwidth_mhz = 20.0\nn_prb = 50\n"
    );
    for (i, (h, v, off, tilt, active)) in beams.iter().enumerate() {
        write!(
            s,
            "[[site.beam]]\nbeam_id = {i}\nh_beamwidth_deg = {h}\nv_beamwidth_deg = {v}\nazimuth_offset_deg = {off:.1}\ntilt_deg = {tilt:.1}\nactive = {active}\n"
        )
        .unwrap();
    }
    s
}

/// Random world: up to 5 sites, up to 20 users, random beams, at least one
/// of them active.
fn random_scenario(seed: u64, full_buffer: bool, mobility: &str) -> Scenario {
    let mut r = rng::stream(seed, "test-scenario", &[]);
    let n_sites = r.random_range(1..=5);
    let n_users = r.random_range(1..=20);
    let mut text = format!(
        "seed = {seed}\n[grid]\norigin = [0.0, 0.0]\nwidth_m = 1000.0\nheight_m = 1000.0\nresolution_m = 20.0\n\
         [population]\nn_users = {n_users}\nmobility = \"{mobility}\"\nfull_buffer = {full_buffer}\nsession_rate_per_s = 0.02\nsession_duration_s = 30.0\n"
    );
    let mut any = false;
    for s in 0..n_sites {
        let nb = r.random_range(1..=3);
        let beams: Vec<_> = (0..nb)
            .map(|_| {
                let active = r.random_bool(0.8);
                any |= active;
                (
                    [15.0, 30.0, 45.0, 65.0, 90.0, 110.0][r.random_range(0..6)],
                    [6.0, 12.0, 25.0][r.random_range(0..3)],
                    r.random_range(-60.0..60.0),
                    r.random_range(-2.0..15.0),
                    active,
                )
            })
            .collect();
        text += &site_block(
            s as u64 + 1,
            r.random_range(0.0..1000.0),
            r.random_range(0.0..1000.0),
            r.random_range(0.0..360.0),
            &beams,
        );
    }
    if !any {
        text = text.replacen("active = false", "active = true", 1);
    }
    parse_scenario_str(&text).unwrap()
}

fn one_static_user() -> Scenario {
    let mut s = random_scenario(1, true, "static");
    s.population.n_users = 1;
    s.sites.truncate(1);
    for b in &mut s.sites[0].beams {
        b.active = true;
    }
    s
}

#[test]
fn static_user_positions_repeat() {
    let mut c = SimConfig::new(one_static_user(), 6, 2);
    c.record = true;
    let (res, payloads) = apply_config(&c, Exec::Sequential).unwrap().run().unwrap();
    assert_eq!(res.reports.len(), 6);
    assert!(payloads.windows(2).all(|w| w[0].positions == w[1].positions));
}

#[test]
fn idle_users_get_nothing() {
    let mut idle_ticks = 0;
    for seed in 0..6 {
        let mut c = SimConfig::new(random_scenario(seed, false, "walk"), 120, seed);
        c.record = true;
        let (_, payloads) = apply_config(&c, Exec::Sequential).unwrap().run().unwrap();
        for p in &payloads {
            for (u, &(dl, ul)) in p.demand.iter().enumerate() {
                if dl == 0.0 {
                    idle_ticks += 1;
                    assert_eq!(p.dl_bps[u], 0.0);
                    assert_eq!(p.prb_dl[u], 0);
                }
                if ul == 0.0 {
                    assert_eq!(p.ul_bps[u], 0.0);
                }
            }
        }
    }
    assert!(idle_ticks > 0);
}

/// Rebuilds each tick from its recorded payloads only.
#[test]
fn replay_from_payloads_is_bit_exact() {
    for seed in 0..5 {
        let mut c = SimConfig::new(random_scenario(100 + seed, seed % 2 == 0, "walk"), 15, seed);
        c.record = true;
        let (res, payloads) = apply_config(&c, Exec::Sequential).unwrap().run().unwrap();
        let scn = &c.scenario;
        for (p, rep) in payloads.iter().zip(&res.reports) {
            let coeff = p
                .budgets
                .iter()
                .zip(&p.fading)
                .map(|(b, h)| h * 10f64.powf(-b.coupling_loss_db / 20.0))
                .collect();
            let m = ChannelMatrix {
                beams: p.beams.clone(),
                n_users: p.positions.len(),
                budgets: p.budgets.clone(),
                fading: p.fading.clone(),
                coeff,
            };
            let links = link_states(scn, &m, Exec::Sequential).unwrap();
            assert_eq!(links, p.links);
            let (pd, pu, rd, ru) = schedule_all(scn, &p.beams, &links, &p.demand, &p.avg_dl_bps, &p.avg_ul_bps, p.tick, Exec::Sequential);
            assert_eq!((&pd, &pu), (&p.prb_dl, &p.prb_ul));
            assert_eq!((&rd, &ru), (&p.dl_bps, &p.ul_bps));
            let again = aggregate_kpis(scn, p.tick, &links, p.positions.len(), &rd, &ru);
            assert_eq!(&again, rep);
            assert_eq!(&p.report, rep);
        }
    }
}

#[test]
fn deterministic_across_runs_and_exec_modes() {
    let c = SimConfig::new(random_scenario(7, false, "walk"), 20, 5);
    let a = run_episode(&c, Exec::Sequential).unwrap();
    let b = run_episode(&c, Exec::Sequential).unwrap();
    let p = run_episode(&c, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, p);
    let other = run_episode(&SimConfig { seed: 6, ..c }, Exec::Sequential).unwrap();
    assert_ne!(a.reports, other.reports);
}

#[test]
fn summary_is_hand_averaged() {
    let c = SimConfig::new(random_scenario(9, true, "walk"), 10, 1);
    let r = run_episode(&c, Exec::Sequential).unwrap();
    assert_eq!(r.reports.len(), 10);
    assert!(!r.empty);
    let mut cov = 0.0;
    let mut dl = 0.0;
    let mut rsrp = Vec::new();
    for k in &r.reports {
        cov += k.grid.coverage_pct;
        dl += k.grid.dl_mbps;
        rsrp.extend(k.grid.avg_rsrp_dbm);
    }
    assert!((r.summary.coverage_pct - cov / 10.0).abs() < 1e-12);
    assert!((r.summary.dl_mbps - dl / 10.0).abs() < 1e-12);
    let m = rsrp.iter().sum::<f64>() / rsrp.len() as f64;
    assert!((r.summary.avg_rsrp_dbm.unwrap() - m).abs() < 1e-9);
    assert_eq!(summarize(&r.reports, r.final_positions.len()), r.summary);
}

/// PRBs handed out per serving beam never exceed the site's budget.
#[test]
fn prb_conservation_fuzz() {
    let mut ticks = 0;
    let mut seed = 0;
    while ticks < 10_000 {
        let full = seed % 3 == 0;
        let mobility = if seed % 2 == 0 { "walk" } else { "static" };
        let scn = random_scenario(1000 + seed, full, mobility);
        let mut c = SimConfig::new(scn, 500, seed);
        c.record = true;
        let (_, payloads) = apply_config(&c, Exec::Parallel).unwrap().run().unwrap();
        for p in &payloads {
            let mut per_beam: HashMap<usize, (u32, u32)> = HashMap::new();
            for l in &p.links {
                let e = per_beam.entry(l.serving).or_default();
                e.0 += p.prb_dl[l.user];
                e.1 += p.prb_ul[l.user];
            }
            for (b, (d, u)) in per_beam {
                let cap = c.scenario.sites[p.beams[b].site].n_prb;
                assert!(d <= cap && u <= cap, "tick {} beam {b}: {d}/{u} > {cap}", p.tick);
            }
            ticks += 1;
        }
        seed += 1;
    }
}

/// Straight-line linear-domain SINR from the recorded budgets and fading.
fn oracle_sinr(scn: &Scenario, p: &netsim_core::orchestrator::TickPayload, user: usize) -> (usize, f64) {
    let n = p.positions.len();
    let mut best = None;
    let mut rx = Vec::new();
    for (bi, b) in p.beams.iter().enumerate() {
        let site = &scn.sites[b.site];
        let beam = &site.beams[b.beam];
        let lb = &p.budgets[bi * n + user];
        let per_re_dbm = site.tx_power_dbm - 10.0 * (12.0 * site.n_prb as f64).log10();
        let rsrp = per_re_dbm - (lb.path_loss_db + lb.shadow_db - lb.antenna_gain_dbi);
        let h = p.fading[bi * n + user];
        let mw = 10f64.powf(rsrp / 10.0) * (h.re * h.re + h.im * h.im);
        rx.push((beam.active, mw));
        if beam.active {
            let key = (site.site_id, beam.beam_id);
            best = match best {
                Some((_, r0, k0)) if r0 > rsrp || (r0 == rsrp && k0 < key) => best,
                _ => Some((bi, rsrp, key)),
            };
        }
    }
    let (serving, _, _) = best.unwrap();
    let noise_mw = 10f64.powf((-174.0 + 10.0 * 15000f64.log10() + scn.sim.noise_figure_db) / 10.0);
    let interference: f64 = rx
        .iter()
        .enumerate()
        .filter(|(b, (a, _))| *a && *b != serving)
        .map(|(_, (_, mw))| mw)
        .sum();
    (serving, 10.0 * (rx[serving].1 / (interference + noise_mw)).log10())
}

#[test]
fn sinr_matches_independent_oracle() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut c = SimConfig::new(random_scenario(5000 + seed, true, "walk"), 3, seed);
        c.record = true;
        let (_, payloads) = apply_config(&c, Exec::Sequential).unwrap().run().unwrap();
        for p in &payloads {
            for l in &p.links {
                let (serving, sinr) = oracle_sinr(&c.scenario, p, l.user);
                assert_eq!(serving, l.serving);
                worst = worst.max((sinr - l.sinr_db).abs());
            }
        }
    }
    assert!(worst < 1e-9, "max |dSINR| = {worst:e} dB");
    assert!(t0.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn shared_world_matches_fresh_world() {
    let scn = random_scenario(77, false, "walk");
    let c = SimConfig::new(scn.clone(), 12, 4);
    let fresh = run_episode(&c, Exec::Sequential).unwrap();
    let world = Arc::new(World::build_with(&scn, 4, c.horizon_s(), empirical(), Exec::Sequential).unwrap());
    let shared = Episode::new(scn, world, 12, false, Exec::Sequential).run().unwrap().0;
    assert_eq!(fresh, shared);
}

#[test]
fn reference_tick_within_budget() {
    let c = SimConfig::new(presets::reference(), 30, 1);
    let mut e = apply_config(&c, Exec::Sequential).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let t = Instant::now();
        e.step_tick().unwrap();
        worst = worst.max(t.elapsed().as_secs_f64());
    }
    assert!(worst < 0.1, "slowest tick {worst:.4} s");
}
