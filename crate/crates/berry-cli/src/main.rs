//! `berry`: train policies, sweep voltages, and render reports from one
//! config file.
//!
//! Every subcommand accepts `--config <file>` plus flag overrides; flags
//! win. Seed precedence: `--seed`, then the config file, then the
//! `BERRY_SIM_SEED` environment variable, then 0. Each run writes an
//! effective-config snapshot next to its outputs, so any result can be
//! regenerated from the snapshot alone.
//!
//! Exit codes: 0 success, 2 user or config error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use berry_core::checkpoint;
use berry_core::config::RunConfig;
use berry_core::env::GridWorld;
use berry_core::error::{Error, Result};
use berry_core::eval::{self, FaultPattern, QofReport, RowDelta};
use berry_core::faults::{layout_for, FaultMap, MemoryLayout, VoltageCurve};
use berry_core::qnet::QNetwork;
use berry_core::rl::{berry_train, EnvProvider, TrainMode};

#[derive(Parser)]
#[command(name = "berry", version, about = "Error-aware RL under low-voltage SRAM bit errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write a checkpoint, a training log, and an
    /// effective-config snapshot.
    Train(TrainArgs),
    /// Evaluate a checkpoint across a voltage grid and write CSV + JSON
    /// quality-of-flight reports.
    Sweep(SweepArgs),
    /// Render delta tables from quality-of-flight reports.
    Report(ReportArgs),
    /// Sample or inspect persistent fault-map files.
    Faultmap(FaultmapArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training mode: classical, berry_offline, or berry_ondevice.
    #[arg(long)]
    mode: Option<TrainMode>,
    /// Training-time bit-error rate for the error-aware modes.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u32>,
    /// Environment-step budget.
    #[arg(long)]
    max_env_steps: Option<u64>,
    /// Learning rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// Hidden layer widths, comma separated (e.g. 64,64).
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Navigation map file; generated from [env] and the seed when absent.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Profiled fault-map file (required by berry_ondevice).
    #[arg(long)]
    fault_map: Option<PathBuf>,
    /// Checkpoint output path; defaults under the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint to evaluate; defaults under the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Voltage grid, comma separated; the curve's knots when absent.
    #[arg(long, value_delimiter = ',')]
    voltages: Option<Vec<f64>>,
    /// Fault maps per voltage.
    #[arg(long)]
    maps: Option<u32>,
    /// Episodes per fault map.
    #[arg(long)]
    episodes: Option<u32>,
    /// Fault pattern: random, column_aligned, or profiled.
    #[arg(long)]
    pattern: Option<String>,
    /// Column concentration for the column_aligned pattern.
    #[arg(long)]
    concentration: Option<f64>,
    /// Fault-map file for the profiled pattern.
    #[arg(long)]
    profiled_map: Option<PathBuf>,
    /// Also inject faults into hidden-layer activations.
    #[arg(long)]
    activation_faults: bool,
    /// Worker threads for per-map parallelism; 0 uses the rayon default.
    #[arg(long)]
    jobs: Option<usize>,
    /// Platform preset name (crazyflie or tello).
    #[arg(long)]
    platform: Option<String>,
    /// Platform parameter file; mutually exclusive with --platform.
    #[arg(long)]
    platform_file: Option<PathBuf>,
    /// Voltage curve CSV; the bundled curve when absent.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Navigation map file; generated from [env] and the seed when absent.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files. One file: deltas against its own 1 V row.
    /// Several: row-wise deltas of each against the first.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Directory for the delta CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FaultmapArgs {
    #[command(subcommand)]
    command: FaultmapCommand,
}

#[derive(Subcommand)]
enum FaultmapCommand {
    /// Sample a fault map and write it to a file.
    Sample(FaultmapSampleArgs),
    /// Print layout, rate, and column statistics of a fault-map file.
    Inspect(FaultmapInspectArgs),
}

#[derive(Args)]
struct FaultmapSampleArgs {
    /// Bit-error rate to sample at.
    #[arg(long)]
    p: f64,
    /// Derive the memory layout from this checkpoint's network.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Memory size in 8-bit codes; alternative to --checkpoint.
    #[arg(long)]
    codes: Option<usize>,
    /// Bits per memory row.
    #[arg(long, default_value_t = 64)]
    cols: usize,
    /// P(stuck value = 1).
    #[arg(long, default_value_t = 0.5)]
    stuck_bias: f64,
    /// Fault pattern: random or column_aligned.
    #[arg(long, default_value = "random")]
    pattern: String,
    /// Column concentration for the column_aligned pattern.
    #[arg(long, default_value_t = 4.0)]
    concentration: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FaultmapInspectArgs {
    file: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
        Command::Faultmap(a) => match a.command {
            FaultmapCommand::Sample(s) => cmd_faultmap_sample(s),
            FaultmapCommand::Inspect(i) => cmd_faultmap_inspect(i),
        },
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::read_file(p),
        None => Ok(RunConfig::default()),
    }
}

/// Seed precedence: flag, config file (when one was given), environment,
/// then 0 via the config default.
fn resolve_seed(flag: Option<u64>, config_given: bool, cfg: &RunConfig) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if config_given {
        return Ok(cfg.seed);
    }
    match std::env::var("BERRY_SIM_SEED") {
        Ok(v) => v.parse().map_err(|_| {
            Error::Usage(format!("BERRY_SIM_SEED {v:?} is not an unsigned integer"))
        }),
        Err(_) => Ok(cfg.seed),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// The world every command works on: the configured map file, or a map
/// generated from `[env]` and the global seed.
fn load_world(cfg: &RunConfig) -> Result<GridWorld> {
    match &cfg.io.map_file {
        Some(path) => GridWorld::read_map_file(path, &cfg.env),
        None => GridWorld::generate(&cfg.env, cfg.seed),
    }
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.io
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.io.output_dir().join("checkpoint.bqnc"))
}

fn load_curve(cfg: &RunConfig) -> Result<VoltageCurve> {
    match &cfg.io.curve_file {
        Some(path) => VoltageCurve::from_csv_file(path),
        None => Ok(VoltageCurve::bundled().clone()),
    }
}

/// The memory layout a freshly initialized network of this config's
/// architecture would occupy; used to cross-check profiled map files.
fn expected_layout(cfg: &RunConfig, world: &GridWorld) -> Result<MemoryLayout> {
    let mut arch = Vec::with_capacity(cfg.train.hidden.len() + 2);
    arch.push(world.observation_dim());
    arch.extend_from_slice(&cfg.train.hidden);
    arch.push(world.action_set.len());
    let probe = QNetwork::init(&arch, 0)?;
    layout_for(&probe, cfg.train.berr.bias_mode, cfg.train.berr.cols)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    cfg.seed = resolve_seed(a.seed, a.config.is_some(), &cfg)?;
    if let Some(m) = a.mode {
        cfg.train.mode = m;
    }
    if let Some(p) = a.p {
        cfg.train.p = p;
    }
    if let Some(n) = a.episodes {
        cfg.train.episodes = n;
    }
    if let Some(t) = a.max_env_steps {
        cfg.train.max_env_steps = t;
    }
    if let Some(al) = a.alpha {
        cfg.train.alpha = al;
    }
    if let Some(h) = a.hidden {
        cfg.train.hidden = h;
    }
    if let Some(p) = a.map {
        cfg.io.map_file = Some(p);
    }
    if let Some(p) = a.fault_map {
        cfg.io.fault_map = Some(p);
    }
    if let Some(p) = a.checkpoint {
        cfg.io.checkpoint = Some(p);
    }
    if let Some(d) = a.out {
        cfg.io.output_dir = Some(d);
    }
    cfg.validate()?;

    let out_dir = cfg.io.output_dir();
    ensure_dir(&out_dir)?;
    let world = load_world(&cfg)?;

    let fixed_map = if cfg.train.mode == TrainMode::BerryOndevice {
        let path = cfg.io.fault_map.as_ref().ok_or_else(|| {
            Error::Usage("berry_ondevice training requires --fault-map or io.fault_map".into())
        })?;
        let (layout, map) = FaultMap::read_file(path)?;
        let expect = expected_layout(&cfg, &world)?;
        if layout != expect {
            return Err(Error::Integrity(format!(
                "fault map layout {}×{} does not match the {}×{} layout of this architecture",
                layout.rows, layout.cols, expect.rows, expect.cols
            )));
        }
        Some(map)
    } else {
        None
    };

    let out = berry_train(
        &EnvProvider::Fixed(&world),
        &cfg.train,
        cfg.seed,
        fixed_map.as_ref(),
    )?;

    let ckpt = checkpoint_path(&cfg);
    if let Some(parent) = ckpt.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    checkpoint::write(&out.net, out.learn_steps, &ckpt)?;
    let log_path = out_dir.join("train_log.csv");
    out.log.write_csv(&log_path)?;
    let snapshot = out_dir.join("train_config.toml");
    cfg.write_file(&snapshot)?;

    let goals = out
        .log
        .rows
        .iter()
        .filter(|r| r.outcome == berry_core::env::TerminalKind::Goal)
        .count();
    println!(
        "trained {} for {} env steps ({} learning iterations, {} episodes, {} reached the goal)",
        cfg.train.mode.label(),
        out.env_steps,
        out.learn_steps,
        out.episodes_run,
        goals
    );
    println!("checkpoint: {}", ckpt.display());
    println!("log:        {}", log_path.display());
    println!("config:     {}", snapshot.display());
    Ok(())
}

fn parse_pattern(
    name: &str,
    concentration: Option<f64>,
    profiled_map: Option<PathBuf>,
) -> Result<FaultPattern> {
    match name {
        "random" => Ok(FaultPattern::Random),
        "column_aligned" => Ok(FaultPattern::ColumnAligned {
            concentration: concentration.unwrap_or(4.0),
        }),
        "profiled" => {
            let path = profiled_map.ok_or_else(|| {
                Error::Usage("the profiled pattern needs --profiled-map <file>".into())
            })?;
            Ok(FaultPattern::Profiled { path })
        }
        other => Err(Error::Usage(format!(
            "unknown fault pattern {other:?} (random, column_aligned, profiled)"
        ))),
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    cfg.seed = resolve_seed(a.seed, a.config.is_some(), &cfg)?;
    if let Some(p) = a.checkpoint {
        cfg.io.checkpoint = Some(p);
    }
    if let Some(vs) = a.voltages {
        cfg.campaign.voltages = Some(vs);
    }
    if let Some(m) = a.maps {
        cfg.campaign.maps_per_voltage = m;
    }
    if let Some(e) = a.episodes {
        cfg.campaign.episodes_per_map = e;
    }
    if let Some(name) = &a.pattern {
        cfg.campaign.pattern = parse_pattern(name, a.concentration, a.profiled_map.clone())?;
    } else if let Some(c) = a.concentration {
        if let FaultPattern::ColumnAligned { concentration } = &mut cfg.campaign.pattern {
            *concentration = c;
        }
    }
    if a.activation_faults {
        cfg.campaign.activation_faults = true;
    }
    if let Some(j) = a.jobs {
        cfg.campaign.jobs = j;
    }
    if let Some(name) = a.platform {
        cfg.platform.preset = Some(name);
        cfg.platform.file = None;
    }
    if let Some(path) = a.platform_file {
        cfg.platform.file = Some(path);
        cfg.platform.preset = None;
    }
    if let Some(p) = a.curve {
        cfg.io.curve_file = Some(p);
    }
    if let Some(p) = a.map {
        cfg.io.map_file = Some(p);
    }
    if let Some(d) = a.out {
        cfg.io.output_dir = Some(d);
    }
    cfg.validate()?;

    let out_dir = cfg.io.output_dir();
    ensure_dir(&out_dir)?;
    let curve = load_curve(&cfg)?;
    let platform = cfg.platform.resolve()?;
    // The snapshot must pin its inputs, so the resolved checkpoint path
    // goes back into the config before it is written out.
    let ckpt = checkpoint_path(&cfg);
    cfg.io.checkpoint = Some(ckpt.clone());
    let (net, _) = checkpoint::read(&ckpt)?;
    let world = load_world(&cfg)?;

    let campaign = cfg.campaign_config(&curve);
    let report = eval::run_campaign(&net, std::slice::from_ref(&world), &platform, &curve, &campaign)?;

    let hash = &report.meta.config_hash;
    let csv_path = out_dir.join(format!("qof_{hash}.csv"));
    let json_path = out_dir.join(format!("qof_{hash}.json"));
    let snapshot = out_dir.join(format!("sweep_config_{hash}.toml"));
    report.write_csv(&csv_path)?;
    report.write_json(&json_path)?;
    cfg.write_file(&snapshot)?;

    print!("{}", render_report(&report));
    println!("csv:    {}", csv_path.display());
    println!("json:   {}", json_path.display());
    println!("config: {}", snapshot.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let out_dir = a.out.unwrap_or_else(|| PathBuf::from("out"));
    ensure_dir(&out_dir)?;
    let reports = a
        .reports
        .iter()
        .map(|p| QofReport::read_json(p))
        .collect::<Result<Vec<_>>>()?;

    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "report".into())
    };

    if reports.len() == 1 {
        let deltas = eval::reference_deltas(&reports[0])?;
        println!("{} vs its 1 V reference row:", stem(&a.reports[0]));
        print!("{}", render_deltas(&deltas));
        let path = out_dir.join(format!("deltas_{}.csv", stem(&a.reports[0])));
        write_deltas_csv(&deltas, &path)?;
        println!("csv: {}", path.display());
    } else {
        for (path, report) in a.reports[1..].iter().zip(&reports[1..]) {
            let deltas = eval::compare_reports(&reports[0], report)?;
            println!("{} vs baseline {}:", stem(path), stem(&a.reports[0]));
            print!("{}", render_deltas(&deltas));
            let out = out_dir.join(format!("deltas_{}_vs_{}.csv", stem(path), stem(&a.reports[0])));
            write_deltas_csv(&deltas, &out)?;
            println!("csv: {}", out.display());
        }
    }
    Ok(())
}

fn render_report(r: &QofReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "campaign {} on {} ({} maps × {} episodes per voltage)\n",
        r.meta.config_hash, r.meta.platform, r.meta.maps_per_voltage, r.meta.episodes_per_map
    ));
    out.push_str(
        "v_norm        ber  e_scale  success          dist_m  time_s  energy_j  missions\n",
    );
    for row in &r.rows {
        out.push_str(&format!(
            "{:6.3}  {:9.2e}  {:7.3}  {:7.3} ±{:5.3}  {:6.2}  {:6.2}  {:8.2}  {:8.2}\n",
            row.v_norm,
            row.p,
            row.energy_scale,
            row.success_rate,
            row.success_stderr,
            row.flight_distance_m,
            row.flight_time_s,
            row.flight_energy_j,
            row.missions
        ));
    }
    out
}

fn render_deltas(deltas: &[RowDelta]) -> String {
    let mut out = String::from("v_norm  flight_energy%  missions%  success_pp\n");
    for d in deltas {
        out.push_str(&format!(
            "{:6.3}  {:+14.2}  {:+9.2}  {:+10.2}\n",
            d.v_norm, d.flight_energy_pct, d.missions_pct, d.success_rate_pp
        ));
    }
    out
}

fn write_deltas_csv(deltas: &[RowDelta], path: &Path) -> Result<()> {
    let mut text = String::from("v_norm,flight_energy_pct,missions_pct,success_rate_pp\n");
    for d in deltas {
        text.push_str(&format!(
            "{},{},{},{}\n",
            d.v_norm, d.flight_energy_pct, d.missions_pct, d.success_rate_pp
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_faultmap_sample(a: FaultmapSampleArgs) -> Result<()> {
    let layout = match (&a.checkpoint, a.codes) {
        (Some(_), Some(_)) => {
            return Err(Error::Usage(
                "--checkpoint and --codes are mutually exclusive".into(),
            ))
        }
        (Some(path), None) => {
            let (net, _) = checkpoint::read(path)?;
            let berr = berry_core::faults::BerrConfig {
                cols: a.cols,
                ..Default::default()
            };
            layout_for(&net, berr.bias_mode, berr.cols)?
        }
        (None, Some(codes)) => MemoryLayout::for_codes(codes, a.cols)?,
        (None, None) => {
            return Err(Error::Usage(
                "the memory layout needs --checkpoint <file> or --codes <count>".into(),
            ))
        }
    };
    let seed = match a.seed {
        Some(s) => s,
        None => resolve_seed(None, false, &RunConfig::default())?,
    };
    let map = match a.pattern.as_str() {
        "random" => FaultMap::sample_biased(&layout, a.p, a.stuck_bias, seed)?,
        "column_aligned" => {
            FaultMap::column_aligned(&layout, a.p, a.stuck_bias, a.concentration, seed)?
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown fault pattern {other:?} (random, column_aligned)"
            )))
        }
    };
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    map.write_file(&layout, &a.out)?;
    println!(
        "sampled {} faults over {} bits (rate {:.3e}) into {}",
        map.len(),
        layout.total_bits(),
        map.len() as f64 / layout.total_bits() as f64,
        a.out.display()
    );
    Ok(())
}

fn cmd_faultmap_inspect(a: FaultmapInspectArgs) -> Result<()> {
    let (layout, map) = FaultMap::read_file(&a.file)?;
    let total = layout.total_bits();
    println!("layout:      {} rows × {} cols = {} bits", layout.rows, layout.cols, total);
    println!("faults:      {}", map.len());
    println!("rate:        {:.6e}", map.len() as f64 / total as f64);
    let ones = map.entries().iter().filter(|e| e.stuck_one).count();
    let bias = if map.is_empty() {
        0.0
    } else {
        ones as f64 / map.len() as f64
    };
    println!("stuck-at-1:  {ones} ({bias:.3})");

    let mut counts = vec![0usize; layout.cols];
    for e in map.entries() {
        counts[layout.column_of(e.addr)] += 1;
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    println!("columns hit: {occupied} of {}", layout.cols);
    let mut line = String::new();
    for (col, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(&format!("{col}:{c}"));
        if line.len() > 72 {
            println!("  {line}");
            line.clear();
        }
    }
    if !line.is_empty() {
        println!("  {line}");
    }
    Ok(())
}
