//! Fault-map evaluation campaigns.
//!
//! A campaign sweeps a voltage grid: at each voltage it samples M fault
//! maps at that voltage's bit-error rate, corrupts the frozen policy once
//! per map, rolls out greedy episodes, and folds the aggregated success
//! rate and flight distance through the platform chain into one report
//! row per voltage.
//!
//! Determinism: map seeds are derived from (campaign seed, voltage index,
//! map index); per-map evaluations are independent and run in parallel,
//! with aggregation reducing in map-index order, so reports are
//! byte-identical across reruns and thread counts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::env::{Episode, GridWorld, TerminalKind};
use crate::error::{Error, Result};
use crate::faults::{
    berr_with_map, forward_with_activation_faults, layout_for, ActivationFaults, BerrConfig,
    FaultMap, MemoryLayout, VoltageCurve,
};
use crate::qnet::QNetwork;
use crate::rl::greedy_action;
use crate::rng::{derive_seed, derive_seed2};
use crate::sysmodel::UavPlatform;

/// How each evaluated fault map is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultPattern {
    /// Independent uniformly placed cell faults at the voltage's rate.
    Random,
    /// Faults concentrated in a few memory columns (correlated failure).
    ColumnAligned { concentration: f64 },
    /// One measured map from a profiled-chip file, reused at every
    /// voltage and map index.
    Profiled { path: PathBuf },
}

impl Default for FaultPattern {
    fn default() -> Self {
        FaultPattern::Random
    }
}

/// Campaign parameters (policy, worlds, platform, and curve are passed
/// separately as loaded objects).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    /// Voltage grid; reported in descending order.
    pub voltages: Vec<f64>,
    pub maps_per_voltage: u32,
    pub episodes_per_map: u32,
    pub pattern: FaultPattern,
    /// Also inject faults into hidden-layer activations during rollouts.
    pub activation_faults: bool,
    pub seed: u64,
    pub berr: BerrConfig,
    /// Worker threads for per-map parallelism; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            voltages: VoltageCurve::bundled().voltages(),
            maps_per_voltage: 50,
            episodes_per_map: 20,
            pattern: FaultPattern::Random,
            activation_faults: false,
            seed: 0,
            berr: BerrConfig::default(),
            jobs: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.voltages.is_empty() {
            return Err(Error::Config("campaign voltage grid is empty".into()));
        }
        for &v in &self.voltages {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("voltage {v} must be positive")));
            }
        }
        let mut sorted = self.voltages.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate voltage in campaign grid".into()));
        }
        if self.maps_per_voltage == 0 || self.episodes_per_map == 0 {
            return Err(Error::Config(
                "maps per voltage and episodes per map must be positive".into(),
            ));
        }
        if let FaultPattern::ColumnAligned { concentration } = self.pattern {
            if !(concentration.is_finite() && concentration >= 1.0) {
                return Err(Error::Config(format!(
                    "column concentration {concentration} must be ≥ 1"
                )));
            }
        }
        Ok(())
    }
}

/// Summary of one greedy episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub outcome: TerminalKind,
    pub path_m: f64,
    pub ret: f64,
}

/// One greedy (ε = 0) rollout of a policy on a world, optionally with
/// activation faults (`episode` disambiguates their per-call streams).
pub fn greedy_episode(
    net: &QNetwork,
    world: &GridWorld,
    activation: Option<(&ActivationFaults, u32)>,
) -> Result<EpisodeSummary> {
    let mut ep = Episode::new(world);
    let mut obs = ep.reset();
    let mut ret = 0.0;
    let mut step: u32 = 0;
    loop {
        let q = match activation {
            None => net.forward(obs.as_slice())?,
            Some((af, episode)) => {
                let call_tag = ((episode as u64) << 32) | step as u64;
                forward_with_activation_faults(net, obs.as_slice(), af, call_tag)?
            }
        };
        let out = ep.step(greedy_action(&q))?;
        ret += out.reward;
        obs = out.obs;
        step += 1;
        if out.done {
            return Ok(EpisodeSummary {
                outcome: out.terminal,
                path_m: ep.path_length_m(),
                ret,
            });
        }
    }
}

/// Aggregated result of evaluating one fault map.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MapEval {
    pub episodes: u64,
    pub successes: u64,
    pub collisions: u64,
    pub timeouts: u64,
    /// Sum of path lengths over successful episodes, meters.
    pub success_distance_sum_m: f64,
}

impl MapEval {
    pub fn success_fraction(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }
}

/// Evaluates one fault map: corrupt the policy once (the map persists
/// across the whole evaluation), then run `episodes` greedy rollouts,
/// episode e on worlds[e mod worlds.len()].
pub fn evaluate_policy(
    net: &QNetwork,
    layout: &MemoryLayout,
    map: &FaultMap,
    berr: &BerrConfig,
    worlds: &[GridWorld],
    episodes: u32,
    activation: Option<&ActivationFaults>,
) -> Result<MapEval> {
    if worlds.is_empty() {
        return Err(Error::Usage("evaluation needs at least one world".into()));
    }
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let corrupted = berr_with_map(net, layout, map, berr)?;
    let mut acc = MapEval::default();
    for e in 0..episodes {
        let world = &worlds[e as usize % worlds.len()];
        let summary = greedy_episode(&corrupted, world, activation.map(|af| (af, e)))?;
        acc.episodes += 1;
        match summary.outcome {
            TerminalKind::Goal => {
                acc.successes += 1;
                acc.success_distance_sum_m += summary.path_m;
            }
            TerminalKind::Collision => acc.collisions += 1,
            TerminalKind::Timeout => acc.timeouts += 1,
            TerminalKind::None => unreachable!("episode ended without a terminal"),
        }
    }
    Ok(acc)
}

/// One report row: fault statistics and mission metrics at a voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QofRow {
    pub v_norm: f64,
    /// Bit-error rate at this voltage (probability, not percent).
    pub p: f64,
    pub energy_scale: f64,
    pub success_rate: f64,
    pub success_stderr: f64,
    pub flight_distance_m: f64,
    pub flight_time_s: f64,
    pub flight_energy_j: f64,
    pub missions: f64,
}

/// Report provenance; no timestamps, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub version: String,
    pub campaign_seed: u64,
    pub net_seed: u64,
    pub platform: String,
    pub maps_per_voltage: u32,
    pub episodes_per_map: u32,
    pub world_count: usize,
}

/// A finished campaign: one row per voltage, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QofReport {
    pub meta: ReportMeta,
    pub rows: Vec<QofRow>,
}

impl QofReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "v_norm,p,energy_scale,success_rate,success_stderr,flight_distance_m,flight_time_s,flight_energy_j,missions\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{},{},{},{},{},{},{}",
                r.v_norm,
                r.p,
                r.energy_scale,
                r.success_rate,
                r.success_stderr,
                r.flight_distance_m,
                r.flight_time_s,
                r.flight_energy_j,
                r.missions
            )
            .unwrap();
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<QofReport> {
        serde_json::from_str(text)
            .map_err(|e| Error::Integrity(format!("malformed report JSON: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<QofReport> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// FNV-1a 64-bit accumulator for config fingerprints.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Fnv1a {
        Fnv1a(0xcbf29ce484222325)
    }

    pub fn write(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
        self
    }

    pub fn finish_hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

/// Fingerprint of everything that determines a campaign's output.
fn campaign_hash(
    net: &QNetwork,
    worlds: &[GridWorld],
    platform: &UavPlatform,
    curve: &VoltageCurve,
    cfg: &CampaignConfig,
) -> String {
    let mut h = Fnv1a::new();
    h.write(&checkpoint::to_bytes(net, 0));
    for w in worlds {
        h.write(w.to_map_text().as_bytes());
    }
    h.write(platform.serialize().as_bytes());
    h.write(curve.to_csv_string().as_bytes());
    h.write(
        serde_json::to_string(cfg)
            .expect("campaign config serializes")
            .as_bytes(),
    );
    h.finish_hex()
}

/// Runs a campaign and also returns the per-map evaluations per voltage
/// (outer index follows the report rows).
pub fn run_campaign_detailed(
    net: &QNetwork,
    worlds: &[GridWorld],
    platform: &UavPlatform,
    curve: &VoltageCurve,
    cfg: &CampaignConfig,
) -> Result<(QofReport, Vec<Vec<MapEval>>)> {
    cfg.validate()?;
    platform.validate()?;
    if worlds.is_empty() {
        return Err(Error::Usage("campaign needs at least one world".into()));
    }
    for w in worlds {
        if w.observation_dim() != net.input_dim() || w.action_set.len() != net.output_dim() {
            return Err(Error::Integrity(format!(
                "checkpoint expects {}→{} but the world produces {}→{}",
                net.input_dim(),
                net.output_dim(),
                w.observation_dim(),
                w.action_set.len()
            )));
        }
    }
    let layout = layout_for(net, cfg.berr.bias_mode, cfg.berr.cols)?;
    let profiled = match &cfg.pattern {
        FaultPattern::Profiled { path } => {
            let (file_layout, map) = FaultMap::read_file(path)?;
            if file_layout != layout {
                return Err(Error::Integrity(format!(
                    "profiled map layout {}×{} does not match the checkpoint's {}×{}",
                    file_layout.rows, file_layout.cols, layout.rows, layout.cols
                )));
            }
            Some(map)
        }
        _ => None,
    };

    let mut voltages = cfg.voltages.clone();
    voltages.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // reference distance: the clean (fault-free) quantized policy's mean
    // successful path, falling back to the first world's shortest path
    let clean = evaluate_policy(
        net,
        &layout,
        &FaultMap::empty(crate::faults::FaultSource::Synthetic),
        &cfg.berr,
        worlds,
        cfg.episodes_per_map,
        None,
    )?;
    let reference_distance = if clean.successes > 0 {
        clean.success_distance_sum_m / clean.successes as f64
    } else {
        worlds[0].bfs_len as f64 * worlds[0].cell_size_m
    };

    let run = || -> Result<(Vec<QofRow>, Vec<Vec<MapEval>>)> {
        let mut rows = Vec::with_capacity(voltages.len());
        let mut details = Vec::with_capacity(voltages.len());
        for (v_idx, &v) in voltages.iter().enumerate() {
            let ber = curve.ber_at(v)?;
            let energy_scale = curve.energy_scale_at(v)?;
            let evals: Vec<MapEval> = (0..cfg.maps_per_voltage)
                .into_par_iter()
                .map(|m_idx| -> Result<MapEval> {
                    let map_seed = derive_seed2(cfg.seed, v_idx as u64, m_idx as u64);
                    let map = match (&cfg.pattern, &profiled) {
                        (FaultPattern::Random, _) => {
                            FaultMap::sample_biased(&layout, ber, cfg.berr.stuck_bias, map_seed)?
                        }
                        (FaultPattern::ColumnAligned { concentration }, _) => FaultMap::column_aligned(
                            &layout,
                            ber,
                            cfg.berr.stuck_bias,
                            *concentration,
                            map_seed,
                        )?,
                        (FaultPattern::Profiled { .. }, Some(map)) => map.clone(),
                        (FaultPattern::Profiled { .. }, None) => unreachable!("profiled map preloaded"),
                    };
                    let af = ActivationFaults {
                        p: ber,
                        seed: derive_seed(map_seed, 0x5eed),
                        semantics: cfg.berr.semantics,
                        cols: cfg.berr.cols,
                    };
                    evaluate_policy(
                        net,
                        &layout,
                        &map,
                        &cfg.berr,
                        worlds,
                        cfg.episodes_per_map,
                        cfg.activation_faults.then_some(&af),
                    )
                })
                .collect::<Result<Vec<MapEval>>>()?;

            let episodes_total: u64 = evals.iter().map(|e| e.episodes).sum();
            let successes_total: u64 = evals.iter().map(|e| e.successes).sum();
            let sr = successes_total as f64 / episodes_total as f64;
            let distance = if successes_total > 0 {
                evals.iter().map(|e| e.success_distance_sum_m).sum::<f64>() / successes_total as f64
            } else {
                reference_distance
            };
            // sample standard deviation of the per-episode indicator,
            // over √N: √(SR(1−SR)/(N−1))
            let stderr = if episodes_total > 1 {
                (sr * (1.0 - sr) / (episodes_total - 1) as f64).sqrt()
            } else {
                0.0
            };
            let q = platform.quality_of_flight(curve, v, sr, distance)?;
            rows.push(QofRow {
                v_norm: v,
                p: ber,
                energy_scale,
                success_rate: sr,
                success_stderr: stderr,
                flight_distance_m: distance,
                flight_time_s: q.flight_time_s,
                flight_energy_j: q.flight_energy_j,
                missions: q.missions,
            });
            details.push(evals);
        }
        Ok((rows, details))
    };

    let (rows, details) = if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot build a {}-thread pool: {e}", cfg.jobs)))?
            .install(run)?
    } else {
        run()?
    };

    let report = QofReport {
        meta: ReportMeta {
            config_hash: campaign_hash(net, worlds, platform, curve, cfg),
            version: env!("CARGO_PKG_VERSION").to_string(),
            campaign_seed: cfg.seed,
            net_seed: net.seed,
            platform: platform.name.clone(),
            maps_per_voltage: cfg.maps_per_voltage,
            episodes_per_map: cfg.episodes_per_map,
            world_count: worlds.len(),
        },
        rows,
    };
    Ok((report, details))
}

/// Runs a campaign; see [`run_campaign_detailed`] for the per-map data.
pub fn run_campaign(
    net: &QNetwork,
    worlds: &[GridWorld],
    platform: &UavPlatform,
    curve: &VoltageCurve,
    cfg: &CampaignConfig,
) -> Result<QofReport> {
    run_campaign_detailed(net, worlds, platform, curve, cfg).map(|(report, _)| report)
}

/// Signed per-voltage deltas between two report rows (negative flight
/// energy = savings, matching the published sign convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowDelta {
    pub v_norm: f64,
    pub flight_energy_pct: f64,
    pub missions_pct: f64,
    pub success_rate_pp: f64,
}

fn row_delta(baseline: &QofRow, row: &QofRow) -> Result<RowDelta> {
    if baseline.flight_energy_j <= 0.0 || baseline.missions < 0.0 {
        return Err(Error::Usage("baseline row has no positive flight energy".into()));
    }
    let missions_pct = if baseline.missions > 0.0 {
        (row.missions - baseline.missions) / baseline.missions * 100.0
    } else {
        0.0
    };
    Ok(RowDelta {
        v_norm: row.v_norm,
        flight_energy_pct: (row.flight_energy_j - baseline.flight_energy_j)
            / baseline.flight_energy_j
            * 100.0,
        missions_pct,
        success_rate_pp: (row.success_rate - baseline.success_rate) * 100.0,
    })
}

/// Row-wise deltas of report `b` against report `a` on the same voltage
/// grid (`a` is the baseline).
pub fn compare_reports(a: &QofReport, b: &QofReport) -> Result<Vec<RowDelta>> {
    if a.rows.len() != b.rows.len()
        || a.rows
            .iter()
            .zip(&b.rows)
            .any(|(ra, rb)| (ra.v_norm - rb.v_norm).abs() > 1e-12)
    {
        return Err(Error::Usage(
            "reports cover different voltage grids and cannot be compared row-wise".into(),
        ));
    }
    a.rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| row_delta(ra, rb))
        .collect()
}

/// Deltas of every row in one report against its own 1.0-voltage
/// reference row.
pub fn reference_deltas(report: &QofReport) -> Result<Vec<RowDelta>> {
    let reference = report
        .rows
        .iter()
        .find(|r| (r.v_norm - 1.0).abs() < 1e-12)
        .ok_or_else(|| {
            Error::Usage("report has no 1.0-voltage reference row to compare against".into())
        })?;
    report.rows.iter().map(|r| row_delta(reference, r)).collect()
}
