//! Pipeline stages behind each `netsim` subcommand. Every command returns
//! the text it prints; files go under `--out`.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use netsim_core::behavior::ingest::{write_sessions, write_waypoints, Waypoint};
use netsim_core::behavior::synth::{commute_corpus, commute_grid, split_by_day, CommuteConfig};
use netsim_core::behavior::traffic::default_clusters;
use netsim_core::behavior::{
    evaluate_generation, generate_traffic, generate_trajectories, ingest_mobility_csv, postprocess_trajectories, preprocess, random_walk,
    train_trajectory_vae, BehaviorError, GenConfig, GenerationReport, PostConfig, PreferenceVector, Projection, TrafficConfig, TrajectorySequence,
    TrajectoryVae, VaeConfig,
};
use netsim_core::exec::Exec;
use netsim_core::net::{write_kpi_csv, write_summary_row, KpiRow, KPI_CSV_HEADER};
use netsim_core::optimize::{cross_entropy, hill_climb, write_progress_csv, CemConfig, Env, EnvConfig, OptError};
use netsim_core::orchestrator::{run_episode, SimConfig, SimError};
use netsim_core::presets;
use netsim_core::rng;
use netsim_core::scenario::{parse_scenario, GeoGrid, OverrideFile, RewardWeights, Scenario};

use crate::CliError;

/// Scenario file path, or `preset:<name>` for a shipped one.
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    if let Some(name) = arg.strip_prefix("preset:") {
        return presets::by_name(name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?} (try reference, off-boresight)")));
    }
    if !Path::new(arg).exists() {
        return Err(CliError::Config(format!("scenario file not found: {arg}")));
    }
    parse_scenario(arg).map_err(|e| CliError::Config(format!("{arg}: {e}")))
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

fn kpi_line(k: &KpiRow) -> String {
    format!(
        "coverage {:.3}%  rsrp {} dBm  sinr {} dB  dl {:.3} Mbps  ul {:.3} Mbps",
        k.coverage_pct,
        fmt_opt(k.avg_rsrp_dbm),
        fmt_opt(k.avg_sinr_db),
        k.dl_mbps,
        k.ul_mbps
    )
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file, or preset:<name>.
    #[arg(long)]
    pub scenario: String,
    /// Override file with [[override]] beam replacements.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Episode length in KPI ticks.
    #[arg(long, default_value_t = 60)]
    pub ticks: u64,
    /// Defaults to the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for kpi.csv and summary.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one row per site and tick.
    #[arg(long)]
    pub per_cell: bool,
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::UnknownBeam { .. } | SimError::InvalidOverride(_) | SimError::Scenario(_) => CliError::Config(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<String, CliError> {
    let scenario = load_scenario(&a.scenario)?;
    let overrides = match &a.overrides {
        Some(p) if !p.exists() => return Err(CliError::Config(format!("override file not found: {}", p.display()))),
        Some(p) => {
            OverrideFile::load(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                .overrides
        }
        None => Vec::new(),
    };
    let seed = a.seed.unwrap_or(scenario.seed);
    let c1 = SimConfig {
        overrides,
        ..SimConfig::new(scenario, a.ticks, seed)
    };
    let res = run_episode(&c1, Exec::default()).map_err(sim_error)?;
    create_out(&a.out)?;
    let kpi = a.out.join("kpi.csv");
    write_kpi_csv(create(&kpi)?, &res.reports, a.per_cell).map_err(io_err(&kpi))?;
    let summary = a.out.join("summary.csv");
    let mut w = create(&summary)?;
    let written = (|| -> std::io::Result<()> {
        use std::io::Write;
        writeln!(w, "{KPI_CSV_HEADER}")?;
        if !res.empty {
            write_summary_row(&mut w, &res.summary)?;
        }
        w.flush()
    })();
    written.map_err(io_err(&summary))?;
    Ok(if res.empty {
        format!("0 ticks simulated (seed {seed}); summary is empty\n")
    } else {
        format!("{} ticks, seed {seed}: {}\n", res.reports.len(), kpi_line(&res.summary))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    /// Greedy coordinate search.
    Hill,
    /// Cross-entropy method.
    Cem,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    /// Scenario TOML file, or preset:<name>.
    #[arg(long)]
    pub scenario: String,
    /// Reward weights coverage,rsrp,sinr,dl,ul; defaults to the scenario's.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, value_enum, default_value_t = Algo::Hill)]
    pub algo: Algo,
    /// Environment evaluations allowed.
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    /// Episode seed; defaults to the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ticks per evaluation window.
    #[arg(long, default_value_t = 60)]
    pub window: u64,
    /// Output directory for best_overrides.toml and progress.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_weights(s: &str) -> Result<RewardWeights, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--weights {s:?}: {e}")))?;
    let arr: [f64; 5] = parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("--weights needs five comma-separated numbers, got {s:?}")))?;
    let w = RewardWeights::from_array(arr);
    w.normalized().map_err(|e| CliError::Usage(format!("--weights: {e}")))?;
    Ok(w)
}

fn opt_error(e: OptError) -> CliError {
    match e {
        OptError::InvalidParams(_) | OptError::InvalidAction(_) | OptError::Scenario(_) => CliError::Usage(e.to_string()),
        OptError::Sim(s) => sim_error(s),
        _ => CliError::Runtime(e.to_string()),
    }
}

pub fn optimize(a: &OptimizeArgs) -> Result<String, CliError> {
    let scenario = load_scenario(&a.scenario)?;
    let weights = match &a.weights {
        Some(s) => parse_weights(s)?,
        None => scenario.reward,
    };
    if a.budget == 0 {
        return Err(CliError::Usage("--budget must be at least 1".into()));
    }
    if a.algo == Algo::Cem && a.budget < 4 {
        return Err(CliError::Usage("--algo cem needs --budget of at least 4".into()));
    }
    if a.window == 0 {
        return Err(CliError::Usage("--window must be at least 1".into()));
    }
    let seed = a.seed.unwrap_or(scenario.seed);
    let cfg = EnvConfig {
        window_ticks: a.window,
        ..EnvConfig::default()
    };
    let mut env = Env::new(scenario, cfg, Exec::default());
    env.reset(weights, seed).map_err(opt_error)?;
    let res = match a.algo {
        Algo::Hill => hill_climb(&env, a.budget, seed),
        Algo::Cem => cross_entropy(&env, &CemConfig::for_budget(a.budget, seed), Exec::default()),
    }
    .map_err(opt_error)?;
    create_out(&a.out)?;
    let progress = a.out.join("progress.csv");
    write_progress_csv(create(&progress)?, &res.progress).map_err(io_err(&progress))?;
    let best = a.out.join("best_overrides.toml");
    let file = OverrideFile {
        overrides: env.overrides(&res.best_configs),
    };
    fs::write(&best, file.to_toml_string()).map_err(io_err(&best))?;
    let baseline = env.baseline().map_err(opt_error)?;
    let mut s = String::new();
    writeln!(s, "{} evaluations, best reward {:.6}", res.progress.len(), res.best_reward).unwrap();
    writeln!(s, "baseline: {}", kpi_line(baseline)).unwrap();
    writeln!(s, "best:     {}", kpi_line(&res.best_kpis)).unwrap();
    Ok(s)
}

/// Where training or reference trajectories come from.
#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Use the built-in two-mode commute corpus.
    #[arg(long, conflicts_with = "mobility_csv")]
    pub synthetic: bool,
    /// Mobility CSV (user_id,timestamp_s,lat,lon,alt_m).
    #[arg(long, requires = "scenario")]
    pub mobility_csv: Option<PathBuf>,
    /// Scenario whose geo-referenced grid the CSV is projected onto.
    #[arg(long)]
    pub scenario: Option<String>,
}

fn behavior_error(e: BehaviorError) -> CliError {
    match e {
        BehaviorError::Io(_) | BehaviorError::Diverged(_) | BehaviorError::Neural(_) => CliError::Runtime(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

/// Synthetic corpus split into (train, held-out) days, or every day of a
/// CSV as both.
fn corpus(a: &CorpusArgs) -> Result<(GeoGrid, Vec<TrajectorySequence>, Vec<TrajectorySequence>), CliError> {
    if let Some(csv) = &a.mobility_csv {
        let scn = load_scenario(a.scenario.as_deref().unwrap_or_default())?;
        if !csv.exists() {
            return Err(CliError::Config(format!("mobility CSV not found: {}", csv.display())));
        }
        let proj = Projection::for_grid(&scn.grid).map_err(behavior_error)?;
        let fixes = ingest_mobility_csv(csv, &proj).map_err(behavior_error)?;
        let seqs = preprocess(&fixes, &scn.grid).map_err(behavior_error)?;
        return Ok((scn.grid, seqs.clone(), seqs));
    }
    if a.synthetic {
        let cfg = CommuteConfig::default();
        let (train, held) = split_by_day(&commute_corpus(&cfg), cfg.train_days);
        return Ok((commute_grid(), train, held));
    }
    Err(CliError::Usage("give --synthetic or --mobility-csv with --scenario".into()))
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for model.ckpt and loss.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train_mobility(a: &TrainArgs) -> Result<String, CliError> {
    let (grid, train, _) = corpus(&a.corpus)?;
    let cfg = VaeConfig {
        vocab: grid.cell_count(),
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch,
        ..VaeConfig::default()
    };
    cfg.validate().map_err(behavior_error)?;
    let (model, trace) = train_trajectory_vae(&train, &cfg, a.seed, Exec::default()).map_err(behavior_error)?;
    create_out(&a.out)?;
    let ckpt = a.out.join("model.ckpt");
    model.save(&ckpt, a.seed).map_err(behavior_error)?;
    let loss = a.out.join("loss.csv");
    let mut text = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        writeln!(text, "{i},{l}").unwrap();
    }
    fs::write(&loss, text).map_err(io_err(&loss))?;
    Ok(format!(
        "trained on {} sequences for {} epochs; final loss {:.6}; wrote {}\n",
        train.len(),
        trace.len(),
        trace.last().copied().unwrap_or(f64::NAN),
        ckpt.display()
    ))
}

fn load_model(path: &Path, grid: &GeoGrid) -> Result<TrajectoryVae, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("checkpoint not found: {}", path.display())));
    }
    let m = TrajectoryVae::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if m.cfg.vocab != grid.cell_count() {
        return Err(CliError::Config(format!(
            "{}: model has {} locations, grid has {} cells",
            path.display(),
            m.cfg.vocab,
            grid.cell_count()
        )));
    }
    Ok(m)
}

fn report_json(r: &GenerationReport) -> serde_json::Value {
    serde_json::json!({"kl_location": r.kl_location, "kl_stay_duration": r.kl_stay_duration, "js_location": r.js_location})
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Checkpoint written by train-mobility.
    #[arg(long)]
    pub model: PathBuf,
    /// Generated users; defaults to the number of reference sequences.
    #[arg(long)]
    pub n_users: Option<usize>,
    /// Visits per generated user; defaults to the mean reference length.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Mean stay of the random-walk baseline, seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub walk_stay_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional directory for report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval_gen(a: &EvalArgs) -> Result<String, CliError> {
    let (grid, _, held) = corpus(&a.corpus)?;
    let model = load_model(&a.model, &grid)?;
    let real: Vec<TrajectorySequence> = held.into_iter().filter(|s| !s.steps.is_empty()).collect();
    if real.is_empty() {
        return Err(CliError::Config("no reference trajectories".into()));
    }
    let mean_len = real.iter().map(|s| s.steps.len()).sum::<usize>() as f64 / real.len() as f64;
    let n = a.n_users.unwrap_or(real.len());
    let steps = a.steps.unwrap_or((mean_len.round() as usize).max(1));
    let gen = generate_trajectories(
        &model,
        &GenConfig {
            n_users: n,
            steps,
            seed: a.seed,
            ..GenConfig::default()
        },
        Exec::default(),
    )
    .map_err(behavior_error)?;
    let walk = random_walk(&grid, n, steps, a.walk_stay_s, rng::derive(a.seed, &[rng::label("walk")]));
    let m = evaluate_generation(&real, &gen, &grid).map_err(behavior_error)?;
    let w = evaluate_generation(&real, &walk, &grid).map_err(behavior_error)?;
    let json = serde_json::json!({"model": report_json(&m), "random_walk": report_json(&w), "n_users": n, "steps": steps});
    let text = serde_json::to_string_pretty(&json).expect("json value serializes") + "\n";
    if let Some(dir) = &a.out {
        create_out(dir)?;
        let p = dir.join("report.json");
        fs::write(&p, &text).map_err(io_err(&p))?;
    }
    Ok(text)
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Scenario providing the grid, roads and population settings.
    #[arg(long)]
    pub scenario: String,
    /// Checkpoint written by train-mobility.
    #[arg(long)]
    pub model: PathBuf,
    /// Defaults to the scenario population size.
    #[arg(long)]
    pub n_users: Option<usize>,
    /// Visits per user.
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// Session horizon, seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub horizon_s: f64,
    /// Defaults to the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mobility CSV to score the generated trajectories against.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Output directory for waypoints.csv and sessions.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn generate(a: &GenerateArgs) -> Result<String, CliError> {
    let scn = load_scenario(&a.scenario)?;
    let model = load_model(&a.model, &scn.grid)?;
    if !(a.horizon_s.is_finite() && a.horizon_s >= 0.0) {
        return Err(CliError::Usage("--horizon-s must be a non-negative number".into()));
    }
    let seed = a.seed.unwrap_or(scn.seed);
    let n = a.n_users.unwrap_or(scn.population.n_users);
    let exec = Exec::default();
    let seqs = generate_trajectories(
        &model,
        &GenConfig {
            n_users: n,
            steps: a.steps,
            seed,
            ..GenConfig::default()
        },
        exec,
    )
    .map_err(behavior_error)?;
    let post = PostConfig {
        walk_speed_mps: scn.population.walk_speed_mps,
        ..PostConfig::default()
    };
    let tracks = postprocess_trajectories(&seqs, &scn.grid, scn.roads.as_ref(), &post, exec).map_err(behavior_error)?;
    let points: Vec<Waypoint> = tracks.iter().flat_map(|t| t.waypoints()).collect();
    let prefs: Vec<PreferenceVector> = (0..n as u64)
        .map(|u| PreferenceVector {
            user_id: u,
            app_probs: vec![1.0],
        })
        .collect();
    let traffic = TrafficConfig {
        horizon_s: a.horizon_s,
        session_rate_per_s: scn.population.session_rate_per_s,
        seed: rng::derive(seed, &[rng::label("traffic")]),
        ..TrafficConfig::default()
    };
    let sessions = generate_traffic(&default_clusters(&scn.population), &prefs, &traffic, exec).map_err(behavior_error)?;

    create_out(&a.out)?;
    let wp = a.out.join("waypoints.csv");
    write_waypoints(create(&wp)?, &points).map_err(behavior_error)?;
    let sp = a.out.join("sessions.csv");
    write_sessions(create(&sp)?, &sessions).map_err(behavior_error)?;
    let mut s = format!("{n} users, {} waypoints, {} sessions\n", points.len(), sessions.len());
    if let Some(real) = &a.real {
        if !real.exists() {
            return Err(CliError::Config(format!("mobility CSV not found: {}", real.display())));
        }
        let proj = Projection::for_grid(&scn.grid).map_err(behavior_error)?;
        let fixes = ingest_mobility_csv(real, &proj).map_err(behavior_error)?;
        let real = preprocess(&fixes, &scn.grid).map_err(behavior_error)?;
        let r = evaluate_generation(&real, &seqs, &scn.grid).map_err(behavior_error)?;
        s += &(serde_json::to_string(&report_json(&r)).expect("json value serializes") + "\n");
    }
    Ok(s)
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Scenario TOML file, or preset:<name>.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port; the bound address is printed on start.
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    /// Ticks per step window.
    #[arg(long, default_value_t = 60)]
    pub window: u64,
    /// Steps per episode.
    #[arg(long, default_value_t = 60)]
    pub max_steps: usize,
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let scn = load_scenario(&a.scenario)?;
    if a.window == 0 || a.max_steps == 0 {
        return Err(CliError::Usage("--window and --max-steps must be at least 1".into()));
    }
    let listener = TcpListener::bind((a.host.as_str(), a.port)).map_err(|e| CliError::Runtime(format!("bind {}:{}: {e}", a.host, a.port)))?;
    let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("listening on {addr}");
    let cfg = EnvConfig {
        window_ticks: a.window,
        max_steps: a.max_steps,
    };
    crate::server::serve(listener, scn, cfg).map_err(|e| CliError::Runtime(e.to_string()))
}
