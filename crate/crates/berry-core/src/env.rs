//! Deterministic 2D obstacle-navigation environment.
//!
//! Start→goal navigation on a grid with collision termination. The agent
//! sees a local occupancy patch plus goal direction and distance; actions
//! are small displacements. Multi-cell moves sweep the discrete line to
//! the landing cell so walls cannot be tunneled through.
//!
//! Coordinates: x is the column, y is the row, (0, 0) is the top-left
//! cell; y grows downward. A `GridWorld` map is immutable; `Episode` is
//! the mutable cursor (position, step count) — one per concurrent
//! rollout, maps shared read-only.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

/// Obstacle density tiers (fraction of cells), or a custom fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Density {
    Named(NamedDensity),
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedDensity {
    Sparse,
    Medium,
    Dense,
}

impl Density {
    pub fn fraction(&self) -> f64 {
        match self {
            Density::Named(NamedDensity::Sparse) => 0.08,
            Density::Named(NamedDensity::Medium) => 0.15,
            Density::Named(NamedDensity::Dense) => 0.25,
            Density::Fraction(f) => *f,
        }
    }
}

impl Default for Density {
    fn default() -> Self {
        Density::Named(NamedDensity::Medium)
    }
}

/// Reward constants; all four are configuration, none is baked in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub goal: f64,
    pub collision: f64,
    pub step: f64,
    /// Potential-based shaping weight λ on the per-step decrease of the
    /// goal distance (in cell units).
    pub shaping_lambda: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            goal: 100.0,
            collision: -100.0,
            step: -1.0,
            shaping_lambda: 1.0,
        }
    }
}

/// Action-space variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActionSet {
    /// Displacements (dx, dy) ∈ {−2..2}², row-major over dy then dx:
    /// index = (dy+2)·5 + (dx+2); index 12 is the null move.
    #[default]
    Grid25,
    /// Eight unit moves, clockwise from north (y decreasing):
    /// N, NE, E, SE, S, SW, W, NW.
    Compass8,
}

const COMPASS8: [(i32, i32); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

impl ActionSet {
    pub fn len(&self) -> usize {
        match self {
            ActionSet::Grid25 => 25,
            ActionSet::Compass8 => 8,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Action index → displacement. Errors on an out-of-range index.
    pub fn displacement(&self, action: usize) -> Result<(i32, i32)> {
        if action >= self.len() {
            return Err(Error::Usage(format!(
                "action {action} out of range for {} actions",
                self.len()
            )));
        }
        Ok(match self {
            ActionSet::Grid25 => ((action % 5) as i32 - 2, (action / 5) as i32 - 2),
            ActionSet::Compass8 => COMPASS8[action],
        })
    }
}

/// Environment construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    /// Meters per cell; converts grid distances to flight distances.
    pub cell_size_m: f64,
    pub density: Density,
    /// Occupancy patch side length (odd).
    pub patch_k: usize,
    /// Episode cap; 0 means 4 × BFS shortest path.
    pub max_steps: u32,
    /// Start/goal cells; defaults near opposite corners.
    pub start: Option<(usize, usize)>,
    pub goal: Option<(usize, usize)>,
    /// Waypoint capture radius in cell units: landing within this Euclidean
    /// distance of the goal cell completes the mission. 0 requires the exact
    /// cell.
    pub goal_radius: f64,
    pub action_set: ActionSet,
    pub rewards: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            width: 20,
            height: 20,
            cell_size_m: 0.5,
            density: Density::default(),
            patch_k: 5,
            max_steps: 0,
            start: None,
            goal: None,
            goal_radius: 0.0,
            action_set: ActionSet::default(),
            rewards: RewardConfig::default(),
        }
    }
}

/// Immutable navigation map. Invariants: start ≠ goal, neither is an
/// obstacle, and a 4-connected collision-free path start→goal exists.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    obstacles: Vec<bool>,
    pub start: (i32, i32),
    pub goal: (i32, i32),
    pub goal_radius: f64,
    pub max_steps: u32,
    pub patch_k: usize,
    pub action_set: ActionSet,
    pub rewards: RewardConfig,
    /// 4-connected shortest path length in unit moves (cached at
    /// construction).
    pub bfs_len: u32,
}

impl GridWorld {
    /// Generates a world by rejection sampling: obstacles placed i.i.d. at
    /// the density fraction (start/goal kept clear) until BFS confirms
    /// solvability; at most 100 attempts. Deterministic per (config, seed).
    pub fn generate(cfg: &EnvConfig, seed: u64) -> Result<GridWorld> {
        validate_config(cfg)?;
        let frac = cfg.density.fraction();
        if !(0.0..=0.9).contains(&frac) {
            return Err(Error::Config(format!("obstacle density {frac} outside [0, 0.9]")));
        }
        let (start, goal) = start_goal(cfg)?;
        for attempt in 0..100u64 {
            let mut rng = SimRng::new(derive_seed(seed, attempt));
            let mut obstacles = vec![false; cfg.width * cfg.height];
            for (i, cell) in obstacles.iter_mut().enumerate() {
                let pos = ((i % cfg.width) as i32, (i / cfg.width) as i32);
                if pos == start || pos == goal {
                    continue;
                }
                *cell = rng.gen_bool(frac);
            }
            if let Some(world) = Self::finish(cfg, obstacles, start, goal)? {
                return Ok(world);
            }
        }
        Err(Error::Generation(format!(
            "no solvable {}×{} map at density {frac} within 100 attempts",
            cfg.width, cfg.height
        )))
    }

    /// Builds the world if solvable, computing the step cap.
    fn finish(
        cfg: &EnvConfig,
        obstacles: Vec<bool>,
        start: (i32, i32),
        goal: (i32, i32),
    ) -> Result<Option<GridWorld>> {
        if euclid(start, goal) <= cfg.goal_radius {
            return Err(Error::Config(format!(
                "goal radius {} already covers the start cell",
                cfg.goal_radius
            )));
        }
        let mut world = GridWorld {
            width: cfg.width,
            height: cfg.height,
            cell_size_m: cfg.cell_size_m,
            obstacles,
            start,
            goal,
            goal_radius: cfg.goal_radius,
            max_steps: 0,
            patch_k: cfg.patch_k,
            action_set: cfg.action_set,
            rewards: cfg.rewards,
            bfs_len: 0,
        };
        match world.bfs_shortest() {
            None => Ok(None),
            Some(len) => {
                world.bfs_len = len;
                world.max_steps = if cfg.max_steps > 0 { cfg.max_steps } else { 4 * len };
                Ok(Some(world))
            }
        }
    }

    /// Loads from the text map format: `.` free, `#` obstacle, `S` start,
    /// `G` goal, one row per line. Grid-independent parameters (cell size,
    /// patch, rewards, action set, step cap) come from the config.
    pub fn from_map_text(text: &str, cfg: &EnvConfig) -> Result<GridWorld> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::Integrity("empty map file".into()));
        }
        let width = lines[0].chars().count();
        let height = lines.len();
        let mut obstacles = vec![false; width * height];
        let mut start = None;
        let mut goal = None;
        for (y, line) in lines.iter().enumerate() {
            let row: Vec<char> = line.chars().collect();
            if row.len() != width {
                return Err(Error::Integrity(format!(
                    "map row {} has {} cells, expected {width}",
                    y + 1,
                    row.len()
                )));
            }
            for (x, c) in row.iter().enumerate() {
                match c {
                    '.' => {}
                    '#' => obstacles[y * width + x] = true,
                    'S' => {
                        if start.replace((x as i32, y as i32)).is_some() {
                            return Err(Error::Integrity("map has more than one start cell".into()));
                        }
                    }
                    'G' => {
                        if goal.replace((x as i32, y as i32)).is_some() {
                            return Err(Error::Integrity("map has more than one goal cell".into()));
                        }
                    }
                    other => {
                        return Err(Error::Integrity(format!(
                            "map row {} has invalid cell {other:?}",
                            y + 1
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::Integrity("map has no start cell (S)".into()))?;
        let goal = goal.ok_or_else(|| Error::Integrity("map has no goal cell (G)".into()))?;
        let mut grid_cfg = cfg.clone();
        grid_cfg.width = width;
        grid_cfg.height = height;
        validate_config(&grid_cfg)?;
        Self::finish(&grid_cfg, obstacles, start, goal)?
            .ok_or_else(|| Error::Integrity("map has no collision-free start→goal path".into()))
    }

    pub fn read_map_file(path: &Path, cfg: &EnvConfig) -> Result<GridWorld> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_map_text(&text, cfg)
    }

    pub fn to_map_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = if (x, y) == self.start {
                    'S'
                } else if (x, y) == self.goal {
                    'G'
                } else if self.is_obstacle(x, y) {
                    '#'
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_map_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_map_text()).map_err(|e| Error::io(path, e))
    }

    /// Out-of-bounds counts as an obstacle.
    pub fn is_obstacle(&self, x: i32, y: i32) -> bool {
        if x < 0 || y < 0 || x >= self.width as i32 || y >= self.height as i32 {
            return true;
        }
        self.obstacles[y as usize * self.width + x as usize]
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| o).count()
    }

    /// 4-connected shortest path start→goal over free cells, in unit
    /// moves.
    pub fn bfs_shortest(&self) -> Option<u32> {
        let mut dist = vec![u32::MAX; self.width * self.height];
        let mut queue = std::collections::VecDeque::new();
        let idx = |x: i32, y: i32| y as usize * self.width + x as usize;
        dist[idx(self.start.0, self.start.1)] = 0;
        queue.push_back(self.start);
        while let Some((x, y)) = queue.pop_front() {
            let d = dist[idx(x, y)];
            if (x, y) == self.goal {
                return Some(d);
            }
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                if !self.is_obstacle(nx, ny) && dist[idx(nx, ny)] == u32::MAX {
                    dist[idx(nx, ny)] = d + 1;
                    queue.push_back((nx, ny));
                }
            }
        }
        None
    }

    /// Map diagonal in cell units (distance normalizer).
    pub fn diagonal(&self) -> f64 {
        let w = (self.width - 1) as f64;
        let h = (self.height - 1) as f64;
        (w * w + h * h).sqrt()
    }

    /// Bounds on any achievable episode return from any state: terminal
    /// bonus extremes, plus per-step reward over at most `max_steps`,
    /// plus the largest possible shaping swing (λ × diagonal, in cell
    /// units, matching the shaping term itself). True action values
    /// always lie inside, so TD targets can be projected into this
    /// interval without bias.
    pub fn return_bounds(&self) -> (f64, f64) {
        let r = &self.rewards;
        let swing = r.shaping_lambda.abs() * self.diagonal();
        let steps = self.max_steps as f64;
        let best_terminal = r.goal.max(r.collision).max(0.0);
        let worst_terminal = r.goal.min(r.collision).min(0.0);
        let lo = worst_terminal + steps * r.step.min(0.0) - swing;
        let hi = best_terminal + steps * r.step.max(0.0) + swing;
        (lo, hi)
    }

    /// Non-obstacle cells other than the goal; exploring-starts training
    /// draws episode origins from this set. Never empty (the start cell
    /// qualifies).
    pub fn free_cells(&self) -> Vec<(i32, i32)> {
        let mut cells = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                if !self.is_obstacle(x, y) && (x, y) != self.goal {
                    cells.push((x, y));
                }
            }
        }
        cells
    }

    /// Observation at a position: k×k occupancy patch (out-of-bounds = 1),
    /// goal-direction unit vector, goal distance / map diagonal.
    pub fn observation(&self, pos: (i32, i32)) -> Observation {
        let r = (self.patch_k / 2) as i32;
        let mut features = Vec::with_capacity(self.patch_k * self.patch_k + 3);
        for dy in -r..=r {
            for dx in -r..=r {
                features.push(if self.is_obstacle(pos.0 + dx, pos.1 + dy) {
                    1.0
                } else {
                    0.0
                });
            }
        }
        let gx = (self.goal.0 - pos.0) as f64;
        let gy = (self.goal.1 - pos.1) as f64;
        let norm = (gx * gx + gy * gy).sqrt();
        if norm > 0.0 {
            features.push((gx / norm) as f32);
            features.push((gy / norm) as f32);
        } else {
            features.push(0.0);
            features.push(0.0);
        }
        features.push((norm / self.diagonal()) as f32);
        Observation { features }
    }

    /// Feature-vector length produced by [`GridWorld::observation`].
    pub fn observation_dim(&self) -> usize {
        self.patch_k * self.patch_k + 3
    }
}

fn validate_config(cfg: &EnvConfig) -> Result<()> {
    if cfg.width < 5 || cfg.height < 5 {
        return Err(Error::Config(format!(
            "map must be at least 5×5, got {}×{}",
            cfg.width, cfg.height
        )));
    }
    if cfg.patch_k == 0 || cfg.patch_k % 2 == 0 {
        return Err(Error::Config(format!("patch side must be odd, got {}", cfg.patch_k)));
    }
    if !(cfg.cell_size_m.is_finite() && cfg.cell_size_m > 0.0) {
        return Err(Error::Config(format!("cell size must be positive, got {}", cfg.cell_size_m)));
    }
    if !(cfg.goal_radius.is_finite() && cfg.goal_radius >= 0.0) {
        return Err(Error::Config(format!(
            "goal radius must be finite and non-negative, got {}",
            cfg.goal_radius
        )));
    }
    Ok(())
}

fn start_goal(cfg: &EnvConfig) -> Result<((i32, i32), (i32, i32))> {
    let pick = |opt: &Option<(usize, usize)>, default: (usize, usize), what: &str| -> Result<(i32, i32)> {
        let (x, y) = opt.unwrap_or(default);
        if x >= cfg.width || y >= cfg.height {
            return Err(Error::Config(format!(
                "{what} ({x}, {y}) outside the {}×{} map",
                cfg.width, cfg.height
            )));
        }
        Ok((x as i32, y as i32))
    };
    let start = pick(&cfg.start, (1, 1), "start")?;
    let goal = pick(&cfg.goal, (cfg.width - 2, cfg.height - 2), "goal")?;
    if start == goal {
        return Err(Error::Config("start and goal coincide".into()));
    }
    Ok((start, goal))
}

/// Agent input: occupancy patch + goal direction + normalized distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f32>,
}

impl Observation {
    pub fn as_slice(&self) -> &[f32] {
        &self.features
    }

    pub fn goal_distance(&self) -> f32 {
        *self.features.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalKind {
    None,
    Goal,
    Collision,
    Timeout,
}

impl TerminalKind {
    pub fn label(&self) -> &'static str {
        match self {
            TerminalKind::None => "none",
            TerminalKind::Goal => "goal",
            TerminalKind::Collision => "collision",
            TerminalKind::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub terminal: TerminalKind,
    /// cell_size × √(dx² + dy²) of the executed move, meters.
    pub path_delta_m: f64,
}

/// Mutable episode cursor over a shared map.
#[derive(Debug, Clone)]
pub struct Episode<'w> {
    world: &'w GridWorld,
    pos: (i32, i32),
    steps: u32,
    done: bool,
    path_m: f64,
}

impl<'w> Episode<'w> {
    pub fn new(world: &'w GridWorld) -> Episode<'w> {
        Episode {
            world,
            pos: world.start,
            steps: 0,
            done: false,
            path_m: 0.0,
        }
    }

    /// Episode originating at an arbitrary free non-goal cell instead of
    /// the map start.
    pub fn with_start(world: &'w GridWorld, start: (i32, i32)) -> Result<Episode<'w>> {
        if world.is_obstacle(start.0, start.1) || start == world.goal {
            return Err(Error::Usage(format!(
                "episode start {start:?} is not a free non-goal cell"
            )));
        }
        Ok(Episode {
            world,
            pos: start,
            steps: 0,
            done: false,
            path_m: 0.0,
        })
    }

    /// Agent back at start, counters zeroed. Idempotent.
    pub fn reset(&mut self) -> Observation {
        self.pos = self.world.start;
        self.steps = 0;
        self.done = false;
        self.path_m = 0.0;
        self.world.observation(self.pos)
    }

    pub fn pos(&self) -> (i32, i32) {
        self.pos
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Total path length walked so far, meters.
    pub fn path_length_m(&self) -> f64 {
        self.path_m
    }

    /// Executes one action. Collision (swept or landing) terminates with
    /// the agent left in place; landing within the goal radius terminates
    /// with the goal bonus; exceeding the step cap times out.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage("step on a finished episode".into()));
        }
        let (dx, dy) = self.world.action_set.displacement(action)?;
        let from = self.pos;
        let to = (from.0 + dx, from.1 + dy);
        let rewards = &self.world.rewards;

        self.steps += 1;
        let path_delta_m = self.world.cell_size_m * ((dx * dx + dy * dy) as f64).sqrt();
        self.path_m += path_delta_m;

        let collided = self.sweep_hits_obstacle(from, (dx, dy));
        let landed = if collided { from } else { to };

        let d_prev = euclid(from, self.world.goal);
        let d_now = euclid(landed, self.world.goal);
        let mut reward = rewards.step + rewards.shaping_lambda * (d_prev - d_now);

        let terminal = if collided {
            reward += rewards.collision;
            TerminalKind::Collision
        } else if d_now <= self.world.goal_radius {
            reward += rewards.goal;
            TerminalKind::Goal
        } else if self.steps >= self.world.max_steps {
            TerminalKind::Timeout
        } else {
            TerminalKind::None
        };

        self.pos = landed;
        self.done = terminal != TerminalKind::None;

        Ok(StepOutcome {
            obs: self.world.observation(self.pos),
            reward,
            done: self.done,
            terminal,
            path_delta_m,
        })
    }

    /// Swept-cell collision: walk the discrete line from the origin to the
    /// displacement in n = max(|dx|, |dy|) steps, rounding intermediate
    /// coordinates half away from zero; any obstacle or out-of-bounds cell
    /// on the way (landing included) is a hit.
    fn sweep_hits_obstacle(&self, from: (i32, i32), (dx, dy): (i32, i32)) -> bool {
        let n = dx.abs().max(dy.abs());
        for i in 1..=n {
            let t = i as f64 / n as f64;
            let x = from.0 + (dx as f64 * t).round() as i32;
            let y = from.1 + (dy as f64 * t).round() as i32;
            if self.world.is_obstacle(x, y) {
                return true;
            }
        }
        false
    }
}

fn euclid(a: (i32, i32), b: (i32, i32)) -> f64 {
    let dx = (a.0 - b.0) as f64;
    let dy = (a.1 - b.1) as f64;
    (dx * dx + dy * dy).sqrt()
}
