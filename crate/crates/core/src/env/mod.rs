//! The shape-optimisation environment.
//!
//! An agent edits column heights through a coarse control grid that is
//! bilinearly upsampled to the full design. Every step re-runs the wind
//! tunnel and rewards changes in the metrics relative to the unmodified design.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppo::{Environment, Transition};
use crate::voxel::{
    apply_height_delta, heightmap_sum, synth_heightmap, voxelise, HeightMap, Shape, VoxelGrid, VoxelMask,
};
use crate::windtunnel::{run_simulation, SimResult, TunnelConfig};

/// Which reward terms are active. Each mode adds terms to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectiveMode {
    #[serde(rename = "ke")]
    Ke,
    #[serde(rename = "ke_df")]
    KeDf,
    #[serde(rename = "ke_df_vcc")]
    KeDfVcc,
}

impl ObjectiveMode {
    pub const ALL: [ObjectiveMode; 3] = [ObjectiveMode::Ke, ObjectiveMode::KeDf, ObjectiveMode::KeDfVcc];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveMode::Ke => "ke",
            ObjectiveMode::KeDf => "ke_df",
            ObjectiveMode::KeDfVcc => "ke_df_vcc",
        }
    }
}

impl std::fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ObjectiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::config(
                "mode",
                format!("unknown objective `{s}`; expected ke, ke_df or ke_df_vcc"),
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w_ke: f64,
    pub w_df: f64,
    pub w_vcc: f64,
    /// Penalty on relative change of the heightmap sum.
    pub w_h: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_ke: 1.0,
            w_df: 1.0,
            w_vcc: 1.0,
            w_h: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_ke", self.w_ke), ("w_df", self.w_df), ("w_vcc", self.w_vcc)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("env.weights.{name}"),
                    format!("{v} must be finite and non-negative"),
                ));
            }
        }
        if !(self.w_h > 0.0 && self.w_h.is_finite()) {
            return Err(Error::config(
                "env.weights.w_h",
                format!("{} must be finite and positive", self.w_h),
            ));
        }
        Ok(())
    }
}

/// Where the starting design comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSource {
    Synth {
        shape: Shape,
        width: usize,
        length: usize,
        amplitude: f64,
    },
    /// A PGM heightmap, voxelised with the design's `h_max` and `voxel_size`.
    Heightmap { path: PathBuf },
    /// A voxel grid CSV, used as is.
    Grid { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub source: DesignSource,
    pub h_max: u32,
    /// Edge length of one voxel in metres.
    pub voxel_size: f64,
    /// Frozen half-open rectangles `[x0, y0, x1, y1]`.
    pub frozen: Vec<[usize; 4]>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            source: DesignSource::Synth {
                shape: Shape::Wedge,
                width: 128,
                length: 64,
                amplitude: 0.8,
            },
            h_max: 32,
            voxel_size: 0.05,
            frozen: Vec::new(),
        }
    }
}

impl DesignConfig {
    /// Builds the starting grid and its mask, reading files if needed.
    pub fn load(&self) -> Result<(VoxelGrid, VoxelMask)> {
        let grid = match &self.source {
            DesignSource::Synth {
                shape,
                width,
                length,
                amplitude,
            } => voxelise(
                &synth_heightmap(*shape, *width, *length, *amplitude)?,
                self.h_max,
                self.voxel_size,
            )?,
            DesignSource::Heightmap { path } => voxelise(
                &HeightMap::from_pgm(&std::fs::read(path)?)?,
                self.h_max,
                self.voxel_size,
            )?,
            DesignSource::Grid { path } => VoxelGrid::from_csv(&std::fs::read_to_string(path)?)?,
        };
        let mut mask = VoxelMask::open(grid.width(), grid.length());
        for &[x0, y0, x1, y1] in &self.frozen {
            mask.freeze_rect(x0, y0, x1, y1);
        }
        Ok((grid, mask))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub design: DesignConfig,
    pub mode: ObjectiveMode,
    pub weights: RewardWeights,
    /// Control grid `[K_x, K_y]`; the action has `K_x * K_y` components.
    pub control_grid: [usize; 2],
    /// Observation pooling `[P_x, P_y]`.
    pub pooling: [usize; 2],
    /// Largest height change per step, in voxels.
    pub max_delta: f64,
    pub episode_length: usize,
    /// Number of simulation seeds averaged into the baseline.
    pub baseline_seeds: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            design: DesignConfig::default(),
            mode: ObjectiveMode::KeDfVcc,
            weights: RewardWeights::default(),
            control_grid: [8, 8],
            pooling: [16, 16],
            max_delta: 2.0,
            episode_length: 16,
            baseline_seeds: 3,
        }
    }
}

impl EnvConfig {
    /// Checks the settings that do not depend on the loaded grid.
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.control_grid.contains(&0) {
            return Err(Error::config("env.control_grid", "dimensions must be at least 1"));
        }
        if self.pooling.contains(&0) {
            return Err(Error::config("env.pooling", "dimensions must be at least 1"));
        }
        if !(self.max_delta >= 1.0 && self.max_delta.is_finite()) {
            return Err(Error::config(
                "env.max_delta",
                format!("{} must be at least 1", self.max_delta),
            ));
        }
        if self.episode_length == 0 {
            return Err(Error::config("env.episode_length", "must be at least 1"));
        }
        if self.baseline_seeds == 0 {
            return Err(Error::config("env.baseline_seeds", "must be at least 1"));
        }
        if self.design.h_max == 0 {
            return Err(Error::config("env.design.h_max", "must be at least 1"));
        }
        if !(self.design.voxel_size > 0.0 && self.design.voxel_size.is_finite()) {
            return Err(Error::config("env.design.voxel_size", "must be positive"));
        }
        Ok(())
    }

    fn validate_against(&self, grid: &VoxelGrid) -> Result<()> {
        let dims = [grid.width(), grid.length()];
        if self.control_grid[0] > dims[0] || self.control_grid[1] > dims[1] {
            return Err(Error::config(
                "env.control_grid",
                format!("{:?} exceeds the {}x{} grid", self.control_grid, dims[0], dims[1]),
            ));
        }
        if self.pooling[0] > dims[0] || self.pooling[1] > dims[1] {
            return Err(Error::config(
                "env.pooling",
                format!("{:?} exceeds the {}x{} grid", self.pooling, dims[0], dims[1]),
            ));
        }
        Ok(())
    }
}

/// Scalar metrics of the unmodified design, averaged over several seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    /// `[drag_force, kinetic_energy, collision_count, heightmap_sum]`
    pub metrics: [f64; 4],
}

impl Baseline {
    /// Runs the tunnel on `grid` with seeds `tunnel.seed + k` for `k < seeds`.
    pub fn measure(grid: &VoxelGrid, tunnel: &TunnelConfig, seeds: u32) -> Result<Self> {
        let mut metrics = [0.0; 4];
        for k in 0..seeds {
            let cfg = TunnelConfig {
                seed: tunnel.seed.wrapping_add(u64::from(k)),
                ..tunnel.clone()
            };
            let result = run_simulation(grid, &cfg)?;
            for (m, v) in metrics.iter_mut().zip(result.metrics()) {
                *m += v;
            }
        }
        metrics.iter_mut().for_each(|m| *m /= f64::from(seeds));
        Ok(Self { metrics })
    }
}

/// Relative change of `value` against a positive `base`; zero when the base
/// cannot be divided by.
fn relative(value: f64, base: f64) -> f64 {
    if base > 0.0 {
        (value - base) / base
    } else {
        0.0
    }
}

/// Reward of `metrics` against `baseline`, both ordered
/// `[drag_force, kinetic_energy, collision_count, heightmap_sum]`.
///
/// Higher kinetic energy raises the reward; drag and collisions lower it when
/// their mode is active. Any change of the heightmap sum is penalised. Terms
/// whose baseline is not positive are skipped.
pub fn reward(metrics: [f64; 4], baseline: [f64; 4], mode: ObjectiveMode, weights: &RewardWeights) -> f64 {
    let [df, ke, c, hs] = metrics;
    let [df0, ke0, c0, hs0] = baseline;
    let mut r = weights.w_ke * relative(ke, ke0);
    if mode >= ObjectiveMode::KeDf {
        r -= weights.w_df * relative(df, df0);
    }
    if mode == ObjectiveMode::KeDfVcc {
        r -= weights.w_vcc * relative(c, c0);
    }
    r - weights.w_h * relative(hs, hs0).abs()
}

/// Bilinear resampling of a `kx x ky` field onto `width x length`, with the
/// corner samples aligned.
pub fn upsample_bilinear(field: &[f64], kx: usize, ky: usize, width: usize, length: usize) -> Result<Vec<f64>> {
    if field.len() != kx * ky || kx == 0 || ky == 0 {
        return Err(Error::mismatch(format!("{kx}x{ky} field"), field.len()));
    }
    let coord = |i: usize, n: usize, k: usize| -> (usize, usize, f64) {
        if k == 1 || n == 1 {
            return (0, 0, 0.0);
        }
        let u = i as f64 * (k - 1) as f64 / (n - 1) as f64;
        let lo = (u.floor() as usize).min(k - 2);
        (lo, lo + 1, u - lo as f64)
    };
    let mut out = Vec::with_capacity(width * length);
    for y in 0..length {
        let (y0, y1, ty) = coord(y, length, ky);
        for x in 0..width {
            let (x0, x1, tx) = coord(x, width, kx);
            let at = |xi: usize, yi: usize| field[yi * kx + xi];
            let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
            let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    Ok(out)
}

/// Mean of each cell of a `px x py` partition of the grid, divided by `h_max`.
pub fn pool_heights(grid: &VoxelGrid, px: usize, py: usize) -> Vec<f64> {
    let (w, l) = (grid.width(), grid.length());
    let scale = f64::from(grid.max_height());
    let mut out = Vec::with_capacity(px * py);
    for j in 0..py {
        let (y0, y1) = (j * l / py, (j + 1) * l / py);
        for i in 0..px {
            let (x0, x1) = (i * w / px, (i + 1) * w / px);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += f64::from(grid.height(x, y));
                }
            }
            out.push(sum / ((x1 - x0) * (y1 - y0)) as f64 / scale);
        }
    }
    out
}

/// One environment instance. Owns its design, RNG stream and latest result.
#[derive(Debug, Clone)]
pub struct WindTunnelEnv {
    config: EnvConfig,
    tunnel: TunnelConfig,
    original: VoxelGrid,
    mask: VoxelMask,
    grid: VoxelGrid,
    baseline: Option<Baseline>,
    latest: [f64; 4],
    last_result: Option<SimResult>,
    steps: usize,
    rng: ChaCha8Rng,
}

impl WindTunnelEnv {
    /// Loads the design named in `config.design`.
    pub fn new(config: EnvConfig, tunnel: TunnelConfig) -> Result<Self> {
        let (grid, mask) = config.design.load()?;
        Self::with_design(config, tunnel, grid, mask)
    }

    pub fn with_design(config: EnvConfig, tunnel: TunnelConfig, grid: VoxelGrid, mask: VoxelMask) -> Result<Self> {
        config.validate()?;
        tunnel.validate()?;
        config.validate_against(&grid)?;
        if mask.width() != grid.width() || mask.length() != grid.length() {
            return Err(Error::mismatch(
                format!("{}x{} mask", grid.width(), grid.length()),
                format!("{}x{} mask", mask.width(), mask.length()),
            ));
        }
        let rng = ChaCha8Rng::seed_from_u64(tunnel.seed);
        Ok(Self {
            config,
            tunnel,
            original: grid.clone(),
            mask,
            grid,
            baseline: None,
            latest: [0.0; 4],
            last_result: None,
            steps: 0,
            rng,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn tunnel(&self) -> &TunnelConfig {
        &self.tunnel
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn original(&self) -> &VoxelGrid {
        &self.original
    }

    pub fn mask(&self) -> &VoxelMask {
        &self.mask
    }

    pub fn baseline(&self) -> Option<&Baseline> {
        self.baseline.as_ref()
    }

    /// The most recent simulation of an edited design, if any.
    pub fn last_result(&self) -> Option<&SimResult> {
        self.last_result.as_ref()
    }

    pub fn action_dim(&self) -> usize {
        self.config.control_grid[0] * self.config.control_grid[1]
    }

    pub fn observation_dim(&self) -> usize {
        self.config.pooling[0] * self.config.pooling[1] + 4
    }

    /// Restores the original design. The baseline is measured on first use.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        self.grid = self.original.clone();
        self.steps = 0;
        let baseline = match self.baseline {
            Some(b) => b,
            None => {
                let b = Baseline::measure(&self.original, &self.tunnel, self.config.baseline_seeds)?;
                self.baseline = Some(b);
                b
            }
        };
        self.latest = baseline.metrics;
        self.last_result = None;
        Ok(self.observe())
    }

    /// Pooled heights over `h_max`, then the latest metrics over the baseline.
    pub fn observe(&self) -> Vec<f64> {
        let [px, py] = self.config.pooling;
        let mut obs = pool_heights(&self.grid, px, py);
        let base = self.baseline.map_or([0.0; 4], |b| b.metrics);
        obs.extend(
            self.latest
                .iter()
                .zip(base)
                .map(|(&v, b)| if b > 0.0 { v / b } else { 1.0 }),
        );
        obs
    }

    /// Per-column height changes, in voxels, that `action` would request.
    pub fn deltas(&self, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.action_dim() {
            return Err(Error::mismatch(
                format!("{} action components", self.action_dim()),
                action.len(),
            ));
        }
        let clamped: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        let [kx, ky] = self.config.control_grid;
        let mut field = upsample_bilinear(&clamped, kx, ky, self.grid.width(), self.grid.length())?;
        field.iter_mut().for_each(|d| *d *= self.config.max_delta);
        Ok(field)
    }

    /// Applies `action`, re-runs the tunnel and returns the transition.
    pub fn act(&mut self, action: &[f64]) -> Result<Transition> {
        let baseline = match self.baseline {
            Some(b) => b,
            None => return Err(Error::Zero("act called before reset")),
        };
        let deltas = self.deltas(action)?;
        self.grid = apply_height_delta(&self.grid, &deltas, &self.mask)?;
        let cfg = TunnelConfig {
            seed: self.rng.random(),
            ..self.tunnel.clone()
        };
        let result = run_simulation(&self.grid, &cfg)?;
        self.latest = result.metrics();
        self.last_result = Some(result);
        self.steps += 1;
        Ok(Transition {
            observation: self.observe(),
            reward: reward(self.latest, baseline.metrics, self.config.mode, &self.config.weights),
            done: self.steps >= self.config.episode_length,
            metrics: self.latest,
        })
    }

    /// Sum of the current column heights.
    pub fn heightmap_sum(&self) -> u64 {
        heightmap_sum(&self.grid)
    }
}

impl Environment for WindTunnelEnv {
    fn observation_dim(&self) -> usize {
        WindTunnelEnv::observation_dim(self)
    }

    fn action_dim(&self) -> usize {
        WindTunnelEnv::action_dim(self)
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        WindTunnelEnv::reset(self)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        self.act(action)
    }
}

#[cfg(test)]
mod tests;
