use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use netsim_core::behavior::ingest::{read_sessions, read_waypoints};

fn netsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsim")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = netsim(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn help_lists_every_command() {
    let text = ok(&["--help"]);
    for c in ["generate", "simulate", "optimize", "train-mobility", "eval-gen", "serve"] {
        assert!(text.contains(c), "{c} missing from --help");
    }
    for c in ["generate", "simulate", "optimize", "train-mobility", "eval-gen", "serve"] {
        let t = ok(&[c, "--help"]);
        assert!(t.contains("--out") || t.contains("--port"));
    }
}

#[test]
fn simulate_is_deterministic_and_summarizes() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "simulate",
            "--scenario",
            "preset:reference",
            "--ticks",
            "10",
            "--seed",
            "3",
            "--out",
            p(out),
        ]);
    }
    for f in ["kpi.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let ticks = rows(&a.join("kpi.csv"));
    assert_eq!(ticks.len(), 10);
    let summary = &rows(&a.join("summary.csv"))[0];
    for col in [2, 3, 4, 5, 6] {
        let mean = ticks.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / 10.0;
        let s: f64 = summary[col].parse().unwrap();
        assert!((s - mean).abs() < 1e-9 * (1.0 + mean.abs()), "column {col}: {s} vs {mean}");
    }

    let c = d.path().join("c");
    ok(&["simulate", "--scenario", "preset:reference", "--ticks", "2", "--out", p(&c), "--per-cell"]);
    assert_eq!(rows(&c.join("kpi.csv")).len(), 2 * 4);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("x");
    let o = netsim(&["simulate", "--scenario", "/no/such/scenario.toml", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/scenario.toml"));
    let o = netsim(&["optimize", "--scenario", "preset:off-boresight", "--algo", "annealing", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = netsim(&["optimize", "--scenario", "preset:off-boresight", "--weights", "1,2", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = netsim(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = d.path().join("bad.toml");
    fs::write(
        &bad,
        "[[override]]\nsite_id = 1\n[override.beam]\nbeam_id = 9\nh_beamwidth_deg = 65.0\nv_beamwidth_deg = 12.0\n",
    )
    .unwrap();
    let o = netsim(&["simulate", "--scenario", "preset:off-boresight", "--overrides", p(&bad), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beam 9"));
}

#[test]
fn optimize_budget_one_and_closed_loop_replay() {
    let d = tempfile::tempdir().unwrap();
    let one = d.path().join("one");
    ok(&[
        "optimize",
        "--scenario",
        "preset:off-boresight",
        "--budget",
        "1",
        "--seed",
        "2",
        "--out",
        p(&one),
    ]);
    assert_eq!(rows(&one.join("progress.csv")).len(), 1);

    for algo in ["hill", "cem"] {
        let out = d.path().join(algo);
        ok(&[
            "optimize",
            "--scenario",
            "preset:off-boresight",
            "--algo",
            algo,
            "--budget",
            "40",
            "--seed",
            "2",
            "--out",
            p(&out),
        ]);
        let progress = rows(&out.join("progress.csv"));
        let best = progress
            .iter()
            .max_by(|a, b| {
                a[1].parse::<f64>()
                    .unwrap()
                    .total_cmp(&b[1].parse::<f64>().unwrap())
                    .then(b[0].len().cmp(&a[0].len()))
            })
            .unwrap();
        let best = progress.iter().find(|r| r[1] == best[1]).unwrap();
        assert!(best[1].parse::<f64>().unwrap() > 0.0);
        let replay = d.path().join(format!("{algo}-replay"));
        ok(&[
            "simulate",
            "--scenario",
            "preset:off-boresight",
            "--overrides",
            p(&out.join("best_overrides.toml")),
            "--ticks",
            "60",
            "--seed",
            "2",
            "--out",
            p(&replay),
        ]);
        let s = &rows(&replay.join("summary.csv"))[0];
        assert_eq!(&s[2..7], &best[2..7], "{algo}: replayed KPIs differ from the best evaluation");
    }
}

fn grid_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("town.toml");
    fs::write(
        &path,
        r#"seed = 4
[grid]
origin = [0.0, 0.0]
width_m = 1000.0
height_m = 1000.0
resolution_m = 100.0
ref_lat = 28.68
ref_lon = 115.86
[population]
n_users = 5
[[site]]
site_id = 1
position = [500.0, 500.0]
antenna_height_m = 25.0
mechanical_azimuth_deg = 0.0
mechanical_downtilt_deg = 0.0
tx_power_dbm = 46.0
carrier_ghz = 3.5
bandwidth_mhz = 20.0
n_prb = 100
[[site.beam]]
beam_id = 0
h_beamwidth_deg = 65.0
v_beamwidth_deg = 12.0
"#,
    )
    .unwrap();
    path
}

#[test]
fn train_generate_and_evaluate() {
    let d = tempfile::tempdir().unwrap();
    let scn = grid_scenario(d.path());
    let model_dir = d.path().join("model");
    let missing = d.path().join("nope.ckpt");
    let o = netsim(&[
        "generate",
        "--scenario",
        p(&scn),
        "--model",
        p(&missing),
        "--out",
        p(&d.path().join("g0")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(p(&missing)));

    ok(&["train-mobility", "--synthetic", "--epochs", "1", "--seed", "1", "--out", p(&model_dir)]);
    let ckpt = model_dir.join("model.ckpt");
    assert!(ckpt.exists());
    assert_eq!(rows(&model_dir.join("loss.csv")).len(), 1);

    let g = d.path().join("g");
    ok(&["generate", "--scenario", p(&scn), "--model", p(&ckpt), "--steps", "3", "--out", p(&g)]);
    let wps = read_waypoints(fs::File::open(g.join("waypoints.csv")).unwrap()).unwrap();
    let sessions = read_sessions(fs::File::open(g.join("sessions.csv")).unwrap()).unwrap();
    assert!(!wps.is_empty());
    assert!(wps.iter().all(|w| w.user_id < 5 && (0.0..=1000.0).contains(&w.position.x)));
    assert!(sessions.iter().all(|s| s.user_id < 5));

    let g0 = d.path().join("g-empty");
    ok(&["generate", "--scenario", p(&scn), "--model", p(&ckpt), "--n-users", "0", "--out", p(&g0)]);
    assert_eq!(fs::read_to_string(g0.join("waypoints.csv")).unwrap(), "user_id,t_s,x_m,y_m\n");
    assert_eq!(
        fs::read_to_string(g0.join("sessions.csv")).unwrap(),
        "user_id,app_index,action_cluster,start_s,duration_s,dl_bps,ul_bps\n"
    );

    let report = ok(&["eval-gen", "--synthetic", "--model", p(&ckpt), "--n-users", "200", "--seed", "1"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v["model"]["kl_location"].as_f64().unwrap() >= 0.0);
    assert!(v["random_walk"]["kl_location"].as_f64().unwrap() > 0.0);

    let small = d.path().join("small.toml");
    fs::write(
        &small,
        fs::read_to_string(&scn).unwrap().replace("resolution_m = 100.0", "resolution_m = 50.0"),
    )
    .unwrap();
    let o = netsim(&["generate", "--scenario", p(&small), "--model", p(&ckpt), "--out", p(&g0)]);
    assert_eq!(o.status.code(), Some(2));
}
