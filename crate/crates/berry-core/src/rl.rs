//! Dual-pass DQN training under quantized-weight bit errors.
//!
//! Each learning iteration runs a clean pass (TD targets and gradient at
//! the full-precision weights θ) and, in the error-aware modes, a
//! perturbed pass: corrupt θ and the target weights θ⁻ through the
//! quantize→fault→dequantize operator, compute targets and gradient at
//! the corrupted copies, and apply that gradient straight through to θ.
//! The update is θ ← θ − α(Δ + Δ̃).
//!
//! Modes: `classical` skips the perturbed pass (Δ̃ = 0); `berry_offline`
//! samples fresh, independent fault maps for θ and θ⁻ every iteration;
//! `berry_ondevice` reuses one fixed profiled map for both.
//!
//! Determinism contract (per run seed): the network init, exploration,
//! replay sampling, and fault sampling streams are derived with distinct
//! tags, and each consumes draws in a fixed documented order, so a rerun
//! with the same seed and config reproduces the weights bit for bit.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Episode, GridWorld, TerminalKind};
use crate::error::{Error, Result};
use crate::faults::{berr_with_map, berr_with_map_tracked, layout_for, BerrConfig, FaultMap};
use crate::qnet::{td_gradient, QNetwork, TdSample};
use crate::rng::{derive_seed, derive_seed2, SimRng};

// Stream tags for deriving the per-purpose RNG seeds from the run seed.
const TAG_NET: u64 = 1;
const TAG_POLICY: u64 = 2;
const TAG_REPLAY: u64 = 3;
const TAG_FAULTS: u64 = 4;

/// One stored environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: usize,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; once full, new pushes overwrite the
/// oldest transition.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<ReplayBuffer> {
        if capacity == 0 {
            return Err(Error::Usage("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            data: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            next: 0,
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform sample of `batch` indices, with replacement.
    pub fn sample_indices(&self, rng: &mut SimRng, batch: usize) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::Usage("sampling from an empty replay buffer".into()));
        }
        Ok((0..batch).map(|_| rng.gen_index(self.data.len())).collect())
    }
}

/// Training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Classical,
    BerryOffline,
    BerryOndevice,
}

impl TrainMode {
    pub fn label(&self) -> &'static str {
        match self {
            TrainMode::Classical => "classical",
            TrainMode::BerryOffline => "berry_offline",
            TrainMode::BerryOndevice => "berry_ondevice",
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<TrainMode> {
        match s {
            "classical" => Ok(TrainMode::Classical),
            "berry_offline" => Ok(TrainMode::BerryOffline),
            "berry_ondevice" => Ok(TrainMode::BerryOndevice),
            other => Err(Error::Usage(format!(
                "unknown training mode {other:?} (classical, berry_offline, berry_ondevice)"
            ))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Training-time bit-error rate for the error-aware modes.
    pub p: f64,
    pub episodes: u32,
    /// Total environment-step budget; training stops at the first episode
    /// boundary at or past it. Also the denominator of the ε schedule.
    pub max_env_steps: u64,
    pub batch: usize,
    pub gamma: f64,
    pub alpha: f64,
    /// Learning iterations between target-network refreshes.
    pub target_period: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of `max_env_steps` over which ε anneals linearly.
    pub eps_fraction: f64,
    pub buffer_capacity: usize,
    /// Minimum buffer fill before learning iterations begin.
    pub learn_start: usize,
    /// Hidden-layer widths; input and output widths come from the
    /// environment.
    pub hidden: Vec<usize>,
    /// Project TD targets onto the feasible return interval of the
    /// training worlds. Bootstrapped maxima otherwise drift upward
    /// without bound (the drift compounds when the perturbed pass adds
    /// fault noise to the target network), so this stays on by default.
    pub clamp_targets: bool,
    /// Global L2 gradient-norm ceiling per pass; 0 disables clipping.
    /// The squared TD loss is summed over the batch, so early targets on
    /// the ±(goal, collision) reward scale produce update spikes that a
    /// fixed step size cannot survive.
    pub grad_clip: f64,
    /// Start each training episode from a uniformly drawn free cell
    /// instead of the map start. Evaluation always uses the map start;
    /// this only spreads training data over the whole map, which sparse
    /// obstacle-heavy maps need to propagate the goal reward at all.
    pub exploring_starts: bool,
    /// Zero perturbed-pass gradient components at coordinates the fault
    /// map actually changed. The backward convention treats quantization
    /// as identity either way; a changed code is constant in the
    /// parameter, so its component is noise that crowds out the
    /// compensation signal under gradient clipping.
    pub mask_stuck_grads: bool,
    /// Hard ceiling on |weight| after each update; 0 disables. Bounding
    /// the weights bounds the per-layer quantization scale and with it
    /// the worst-case damage of a single bit fault, which otherwise grows
    /// with the largest weight the run happens to produce.
    pub weight_clamp: f64,
    pub berr: BerrConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Classical,
            p: 0.005,
            episodes: 300,
            max_env_steps: 60_000,
            batch: 32,
            gamma: 0.99,
            alpha: 3e-5,
            target_period: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.5,
            buffer_capacity: 50_000,
            learn_start: 500,
            hidden: vec![64, 64],
            clamp_targets: true,
            grad_clip: 10.0,
            exploring_starts: false,
            mask_stuck_grads: true,
            weight_clamp: 0.0,
            berr: BerrConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.p) {
            return fail(format!("bit-error rate {} outside [0, 1]", self.p));
        }
        if self.episodes == 0 {
            return fail("episode count must be positive".into());
        }
        if self.max_env_steps == 0 {
            return fail("environment-step budget must be positive".into());
        }
        if self.batch == 0 {
            return fail("batch size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("discount {} outside [0, 1]", self.gamma));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return fail(format!("learning rate must be positive, got {}", self.alpha));
        }
        if self.target_period == 0 {
            return fail("target refresh period must be positive".into());
        }
        for (name, v) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction <= 1.0) {
            return fail(format!("eps_fraction {} outside (0, 1]", self.eps_fraction));
        }
        if self.buffer_capacity < self.batch {
            return fail(format!(
                "replay capacity {} smaller than batch {}",
                self.buffer_capacity, self.batch
            ));
        }
        if self.learn_start == 0 {
            return fail("learn_start must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return fail(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return fail(format!(
                "gradient-norm ceiling must be finite and ≥ 0, got {}",
                self.grad_clip
            ));
        }
        if !(self.weight_clamp.is_finite() && self.weight_clamp >= 0.0) {
            return fail(format!(
                "weight ceiling must be finite and ≥ 0, got {}",
                self.weight_clamp
            ));
        }
        Ok(())
    }
}

/// Where training episodes get their maps.
#[derive(Debug, Clone)]
pub enum EnvProvider<'a> {
    /// Every episode on one shared map.
    Fixed(&'a GridWorld),
    /// A fresh map per episode, seeded by derive(base_seed, episode).
    Generated { config: EnvConfig, base_seed: u64 },
}

impl EnvProvider<'_> {
    /// The map for a (1-based) episode index.
    pub fn world_for_episode(&self, episode: u32) -> Result<Cow<'_, GridWorld>> {
        match self {
            EnvProvider::Fixed(w) => Ok(Cow::Borrowed(w)),
            EnvProvider::Generated { config, base_seed } => Ok(Cow::Owned(GridWorld::generate(
                config,
                derive_seed(*base_seed, episode as u64),
            )?)),
        }
    }
}

/// ε at a given environment-step count: linear from `eps_start` to
/// `eps_end` over `eps_fraction × max_env_steps` steps, then flat.
pub fn epsilon_at(cfg: &TrainConfig, env_steps: u64) -> f64 {
    let horizon = (cfg.eps_fraction * cfg.max_env_steps as f64).max(1.0);
    let t = env_steps as f64 / horizon;
    if t >= 1.0 {
        return cfg.eps_end;
    }
    cfg.eps_start + t * (cfg.eps_end - cfg.eps_start)
}

/// Greedy action: argmax over Q values, ties to the lowest index.
pub fn greedy_action(q_values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in q_values.iter().enumerate().skip(1) {
        if v > q_values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy action selection: with probability ε a uniform action, else
/// the greedy one.
pub fn select_action(q_values: &[f32], epsilon: f64, rng: &mut SimRng) -> usize {
    if rng.gen_bool(epsilon) {
        rng.gen_index(q_values.len())
    } else {
        greedy_action(q_values)
    }
}

/// TD(0) targets y_j = r_j + γ·max_a Q(s′_j, a; target) for the sampled
/// transitions; the bootstrap term is suppressed on terminal transitions.
pub fn td_targets(
    target_net: &QNetwork,
    replay: &ReplayBuffer,
    indices: &[usize],
    gamma: f64,
) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let t = replay.get(i);
        let y = if t.done {
            t.reward as f64
        } else {
            let q_next = target_net.forward(&t.next_state)?;
            t.reward as f64 + gamma * q_next[greedy_action(&q_next)] as f64
        };
        out.push(y as f32);
    }
    Ok(out)
}

/// Projects TD targets onto a feasible return interval (see
/// [`crate::env::GridWorld::return_bounds`]).
pub fn project_targets(targets: &mut [f32], lo: f64, hi: f64) {
    for y in targets {
        *y = (*y).clamp(lo as f32, hi as f32);
    }
}

/// One per-episode summary row of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    /// Cumulative environment steps at episode end.
    pub step: u64,
    /// 1-based episode index.
    pub episode: u32,
    /// Undiscounted return.
    pub ret: f64,
    pub outcome: TerminalKind,
    /// Mean clean-pass loss over the episode's learning iterations, if any.
    pub loss_clean: Option<f64>,
    /// Mean perturbed-pass loss; always absent in classical mode.
    pub loss_perturbed: Option<f64>,
    /// ε in effect at episode end.
    pub epsilon: f64,
}

/// Per-episode training log, serialized as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<EpisodeRow>,
}

impl TrainLog {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("step,episode,return,outcome,loss_clean,loss_perturbed,epsilon\n");
        for r in &self.rows {
            let fmt_opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                r.episode,
                r.ret,
                r.outcome.label(),
                fmt_opt(&r.loss_clean),
                fmt_opt(&r.loss_perturbed),
                r.epsilon
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub net: QNetwork,
    pub log: TrainLog,
    pub env_steps: u64,
    pub learn_steps: u64,
    pub episodes_run: u32,
}

/// Runs the training loop.
///
/// `fixed_map` is the profiled fault map for `berry_ondevice` (required
/// there, rejected as a usage error when missing) and ignored otherwise.
///
/// Draw order: with `exploring_starts`, each episode first draws its
/// start cell on the policy stream. Then per environment step: one
/// ε-greedy decision on the policy stream and, once the buffer has
/// reached `learn_start`, one learning iteration consuming `batch` draws
/// on the replay stream plus, in `berry_offline`, two fresh fault maps
/// seeded by derive(fault_seed, iteration, 0) for θ and (…, 1) for θ⁻.
pub fn berry_train(
    provider: &EnvProvider,
    cfg: &TrainConfig,
    seed: u64,
    fixed_map: Option<&FaultMap>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if cfg.mode == TrainMode::BerryOndevice && fixed_map.is_none() {
        return Err(Error::Usage(
            "berry_ondevice training requires a profiled fault map".into(),
        ));
    }

    let probe = provider.world_for_episode(1)?;
    let mut arch = Vec::with_capacity(cfg.hidden.len() + 2);
    arch.push(probe.observation_dim());
    arch.extend_from_slice(&cfg.hidden);
    arch.push(probe.action_set.len());
    let (mut ret_lo, mut ret_hi) = probe.return_bounds();
    drop(probe);

    let mut net = QNetwork::init(&arch, derive_seed(seed, TAG_NET))?;
    let mut target = net.clone();
    let layout = layout_for(&net, cfg.berr.bias_mode, cfg.berr.cols)?;
    if let Some(map) = fixed_map {
        map.validate_for(&layout)?;
    }
    let mut policy_rng = SimRng::new(derive_seed(seed, TAG_POLICY));
    let mut replay_rng = SimRng::new(derive_seed(seed, TAG_REPLAY));
    let fault_seed = derive_seed(seed, TAG_FAULTS);
    let mut replay = ReplayBuffer::new(cfg.buffer_capacity)?;

    let mut log = TrainLog::default();
    let mut env_steps: u64 = 0;
    let mut learn_steps: u64 = 0;
    let mut episodes_run = 0;

    for episode in 1..=cfg.episodes {
        if env_steps >= cfg.max_env_steps {
            break;
        }
        let world = provider.world_for_episode(episode)?;
        let (world_lo, world_hi) = world.return_bounds();
        ret_lo = ret_lo.min(world_lo);
        ret_hi = ret_hi.max(world_hi);
        let mut ep = if cfg.exploring_starts {
            let free = world.free_cells();
            Episode::with_start(&world, free[policy_rng.gen_index(free.len())])?
        } else {
            Episode::new(&world)
        };
        let mut obs = world.observation(ep.pos());
        let mut ret = 0.0;
        let mut loss_clean_sum = 0.0;
        let mut loss_pert_sum = 0.0;
        let mut iter_count = 0u64;

        loop {
            let epsilon = epsilon_at(cfg, env_steps);
            let q = net.forward(obs.as_slice())?;
            let action = select_action(&q, epsilon, &mut policy_rng);
            let out = ep.step(action)?;
            // The step cap is an artificial horizon, not part of the MDP:
            // bootstrap through timeouts, suppress it only on real
            // terminals.
            let absorbing = matches!(
                out.terminal,
                TerminalKind::Goal | TerminalKind::Collision
            );
            replay.push(Transition {
                state: std::mem::take(&mut obs.features),
                action,
                reward: out.reward as f32,
                next_state: out.obs.features.clone(),
                done: absorbing,
            });
            obs = out.obs;
            env_steps += 1;
            ret += out.reward;

            if replay.len() >= cfg.learn_start {
                let indices = replay.sample_indices(&mut replay_rng, cfg.batch)?;

                let mut targets = td_targets(&target, &replay, &indices, cfg.gamma)?;
                if cfg.clamp_targets {
                    project_targets(&mut targets, ret_lo, ret_hi);
                }
                let batch: Vec<TdSample> = indices
                    .iter()
                    .zip(&targets)
                    .map(|(&i, &y)| TdSample {
                        state: &replay.get(i).state,
                        action: replay.get(i).action,
                        target: y,
                    })
                    .collect();
                let (loss_clean, mut g_clean) = td_gradient(&net, &batch)?;
                if cfg.grad_clip > 0.0 {
                    g_clean.clip_global_norm(cfg.grad_clip);
                }

                let perturbed = match cfg.mode {
                    TrainMode::Classical => None,
                    TrainMode::BerryOffline => {
                        let m_online =
                            FaultMap::sample_biased(&layout, cfg.p, cfg.berr.stuck_bias, derive_seed2(fault_seed, learn_steps, 0))?;
                        let m_target =
                            FaultMap::sample_biased(&layout, cfg.p, cfg.berr.stuck_bias, derive_seed2(fault_seed, learn_steps, 1))?;
                        Some((
                            berr_with_map_tracked(&net, &layout, &m_online, &cfg.berr)?,
                            berr_with_map(&target, &layout, &m_target, &cfg.berr)?,
                        ))
                    }
                    TrainMode::BerryOndevice => {
                        let map = fixed_map.unwrap();
                        Some((
                            berr_with_map_tracked(&net, &layout, map, &cfg.berr)?,
                            berr_with_map(&target, &layout, map, &cfg.berr)?,
                        ))
                    }
                };

                let g_perturbed = match &perturbed {
                    None => None,
                    Some(((net_tilde, touched), target_tilde)) => {
                        let mut targets_tilde =
                            td_targets(target_tilde, &replay, &indices, cfg.gamma)?;
                        if cfg.clamp_targets {
                            project_targets(&mut targets_tilde, ret_lo, ret_hi);
                        }
                        let batch_tilde: Vec<TdSample> = indices
                            .iter()
                            .zip(&targets_tilde)
                            .map(|(&i, &y)| TdSample {
                                state: &replay.get(i).state,
                                action: replay.get(i).action,
                                target: y,
                            })
                            .collect();
                        let (loss_pert, mut g) = td_gradient(net_tilde, &batch_tilde)?;
                        if cfg.mask_stuck_grads {
                            // A corrupted code no longer responds to its
                            // parameter; those components are noise and
                            // would eat the clip budget.
                            for (gl, tl) in g.layers.iter_mut().zip(&touched.layers) {
                                for (d, &hit) in gl.d_weights.iter_mut().zip(&tl.weights) {
                                    if hit {
                                        *d = 0.0;
                                    }
                                }
                                for (d, &hit) in gl.d_biases.iter_mut().zip(&tl.biases) {
                                    if hit {
                                        *d = 0.0;
                                    }
                                }
                            }
                        }
                        if cfg.grad_clip > 0.0 {
                            g.clip_global_norm(cfg.grad_clip);
                        }
                        loss_pert_sum += loss_pert;
                        Some(g)
                    }
                };

                net.apply_update_mut(&g_clean, g_perturbed.as_ref(), cfg.alpha as f32)?;
                if cfg.weight_clamp > 0.0 {
                    net.clamp_weights(cfg.weight_clamp as f32);
                }
                if !net.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite weights after learning iteration {learn_steps}"
                    )));
                }
                loss_clean_sum += loss_clean;
                iter_count += 1;
                learn_steps += 1;
                if learn_steps % cfg.target_period == 0 {
                    target = net.clone();
                }
            }

            if out.done {
                log.rows.push(EpisodeRow {
                    step: env_steps,
                    episode,
                    ret,
                    outcome: out.terminal,
                    loss_clean: (iter_count > 0).then(|| loss_clean_sum / iter_count as f64),
                    loss_perturbed: (iter_count > 0 && cfg.mode != TrainMode::Classical)
                        .then(|| loss_pert_sum / iter_count as f64),
                    epsilon: epsilon_at(cfg, env_steps),
                });
                break;
            }
        }
        episodes_run = episode;
    }

    Ok(TrainOutput {
        net,
        log,
        env_steps,
        learn_steps,
        episodes_run,
    })
}
