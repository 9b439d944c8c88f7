//! Command implementations behind the `voxwind` binary.
//!
//! Each command returns a [`CliError`] whose [`CliError::exit_code`] follows a
//! fixed taxonomy: 2 for unparseable inputs, 3 for invalid configuration,
//! 4 for training failures, 5 for missing report inputs and 1 for other I/O.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use voxwind::env::{EnvConfig, ObjectiveMode, WindTunnelEnv};
use voxwind::nn::Checkpoint;
use voxwind::ppo::{evaluate_greedy, train, Agent, PpoConfig, TRACE_HEADER};
use voxwind::report::{build_comparison_table, export_heatmap_delta, rows_from_metrics};
use voxwind::voxel::{heightmap_sum, voxelise, HeightMap, VoxelGrid};
use voxwind::windtunnel::{run_simulation, SimResult, TunnelConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    MissingInput(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Parse(_) => 2,
            CliError::Config(_) => 3,
            CliError::Training(_) => 4,
            CliError::MissingInput(_) => 5,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Maps a library error to the exit-code class it belongs to.
fn classify(context: &str, err: voxwind::Error) -> CliError {
    use voxwind::Error as E;
    match err {
        E::Parse { .. } | E::Json(_) => CliError::Parse(format!("{context}: {err}")),
        E::InvalidConfig { .. } | E::GridTooLarge { .. } => CliError::Config(format!("{context}: {err}")),
        E::Io(source) => CliError::Io {
            context: context.to_string(),
            source,
        },
        other => CliError::Training(format!("{context}: {other}")),
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        context: format!("reading {}", path.display()),
        source,
    })
}

fn read_text(path: &Path) -> CliResult<String> {
    String::from_utf8(read(path)?).map_err(|_| CliError::Parse(format!("{} is not UTF-8 text", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            context: format!("creating {}", dir.display()),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

/// Everything a run needs, read from one JSON document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces both `tunnel.seed` and `ppo.seed`.
    pub seed: Option<u64>,
    /// Used when a command is not given `--out`.
    pub output_dir: Option<PathBuf>,
    pub tunnel: TunnelConfig,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
}

impl RunConfig {
    /// Reads `path`, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = read_text(p)?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies the seed override and checks every section.
    pub fn resolve(mut self, seed_override: Option<u64>) -> CliResult<Self> {
        if let Some(seed) = seed_override {
            self.seed = Some(seed);
        }
        if let Some(seed) = self.seed {
            self.tunnel.seed = seed;
            self.ppo.seed = seed;
        }
        let check = |r: voxwind::Result<()>| r.map_err(|e| classify("config", e));
        check(self.tunnel.validate())?;
        check(self.env.validate())?;
        check(self.ppo.validate())?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serialisable") + "\n"
    }

    fn out_dir(&self, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        flag.or_else(|| self.output_dir.clone())
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "voxwind", version, about = "Voxel wind-tunnel shape optimisation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a PGM heightmap into a voxel grid CSV.
    Voxelize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "h-max")]
        h_max: u32,
        #[arg(long = "voxel-size")]
        voxel_size: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the wind tunnel on a grid.
    Simulate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train an agent and write before/after measurements.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Objective: ke, ke_df or ke_df_vcc. Defaults to the config's `env.mode`.
        #[arg(long)]
        mode: Option<ObjectiveMode>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a checkpoint's mean policy for one episode.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a comparison table from before/after simulation results.
    Report {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Design name for the `car` column.
        #[arg(long, default_value = "design")]
        car: String,
    },
}

/// Caps the rayon pool at `VOXWIND_THREADS` workers when that variable is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("VOXWIND_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("VOXWIND_THREADS must be a positive integer, got `{value}`")))?;
    // A pool may already exist when commands run in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Runs one command, returning the lines it reports on stdout.
pub fn run(cli: Cli) -> CliResult<Vec<String>> {
    configure_threads()?;
    match cli.command {
        Command::Voxelize {
            input,
            h_max,
            voxel_size,
            out,
        } => cmd_voxelize(&input, h_max, voxel_size, &out),
        Command::Simulate {
            grid,
            config,
            out,
            seed,
        } => {
            let config = RunConfig::load(config.as_deref())?.resolve(seed)?;
            let out = config.out_dir(out)?;
            cmd_simulate(&grid, &config, &out)
        }
        Command::Train {
            config,
            mode,
            out,
            seed,
        } => {
            let mut config = RunConfig::load(config.as_deref())?;
            if let Some(mode) = mode {
                config.env.mode = mode;
            }
            let config = config.resolve(seed)?;
            let out = config.out_dir(out)?;
            cmd_train(&config, &out)
        }
        Command::Evaluate {
            checkpoint,
            config,
            out,
            seed,
        } => {
            let config = RunConfig::load(config.as_deref())?.resolve(seed)?;
            let out = config.out_dir(out)?;
            cmd_evaluate(&checkpoint, &config, &out)
        }
        Command::Report {
            before,
            after,
            out,
            car,
        } => cmd_report(&before, &after, &out, &car),
    }
}

pub fn cmd_voxelize(input: &Path, h_max: u32, voxel_size: f64, out: &Path) -> CliResult<Vec<String>> {
    let bytes = read(input)?;
    let hm = HeightMap::from_pgm(&bytes).map_err(|e| CliError::Parse(format!("{}: {e}", input.display())))?;
    let grid = voxelise(&hm, h_max, voxel_size).map_err(|e| classify("voxelize", e))?;
    write(out, grid.to_csv())?;
    Ok(vec![
        format!(
            "grid {}x{}, h_max {}, voxel size {}",
            grid.width(),
            grid.length(),
            grid.max_height(),
            grid.voxel_size()
        ),
        format!("H_s = {}", heightmap_sum(&grid)),
    ])
}

fn load_grid(path: &Path) -> CliResult<VoxelGrid> {
    VoxelGrid::from_csv(&read_text(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Writes a result, its heatmap, the grid it was measured on and the config.
fn write_measurement(dir: &Path, grid: &VoxelGrid, result: &SimResult, config: &RunConfig) -> CliResult<()> {
    write(&dir.join("sim_result.csv"), result.to_csv())?;
    write(&dir.join("heatmap.csv"), result.heatmap.to_csv())?;
    write(&dir.join("heatmap.pgm"), result.heatmap.to_pgm())?;
    write(&dir.join("grid.csv"), grid.to_csv())?;
    write(&dir.join("config.json"), config.to_json())
}

fn summary(label: &str, result: &SimResult) -> String {
    format!(
        "{label}: drag {:.4} N, kinetic energy {:.4} J, collisions {:.4}, H_s {}",
        result.drag_force, result.kinetic_energy, result.collision_count, result.heightmap_sum
    )
}

pub fn cmd_simulate(grid_path: &Path, config: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let grid = load_grid(grid_path)?;
    let result = run_simulation(&grid, &config.tunnel).map_err(|e| classify("simulate", e))?;
    write_measurement(out, &grid, &result, config)?;
    Ok(vec![summary("result", &result)])
}

fn make_env(config: &RunConfig) -> CliResult<WindTunnelEnv> {
    WindTunnelEnv::new(config.env.clone(), config.tunnel.clone()).map_err(|e| classify("environment", e))
}

/// Greedy episode from the original design; returns the final grid and its
/// measurement under the run's tunnel seed.
fn optimise(env: &mut WindTunnelEnv, agent: &Agent, config: &RunConfig) -> CliResult<(VoxelGrid, SimResult)> {
    evaluate_greedy(env, agent, config.env.episode_length).map_err(|e| classify("evaluation", e))?;
    let grid = env.grid().clone();
    let result = run_simulation(&grid, &config.tunnel).map_err(|e| classify("evaluation", e))?;
    Ok((grid, result))
}

fn write_pair(dir: &Path, before: &SimResult, after: &SimResult) -> CliResult<()> {
    let pair = export_heatmap_delta(&before.heatmap, &after.heatmap).map_err(|e| classify("heatmaps", e))?;
    write(&dir.join("heatmap_pair_before.pgm"), pair.before_pgm)?;
    write(&dir.join("heatmap_pair_after.pgm"), pair.after_pgm)
}

/// Output layout:
///
/// ```text
/// out/before/                 original design measured once
/// out/after/<mode>/           optimised design, trace.csv, checkpoints/
/// ```
///
/// Training each mode into the same `out` yields a directory pair that
/// `report` accepts directly.
pub fn cmd_train(config: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let mode = config.env.mode;
    let before_dir = out.join("before");
    let after_dir = out.join("after").join(mode.as_str());

    let mut env = make_env(config)?;
    let before = run_simulation(env.original(), &config.tunnel).map_err(|e| classify("baseline", e))?;
    write_measurement(&before_dir, env.original(), &before, config)?;

    let ckpt_dir = after_dir.join("checkpoints");
    let mut io_error = None;
    let trained = train(&mut env, &config.ppo, |ckpt| {
        let path = ckpt_dir.join(format!("ckpt_{:06}.json", ckpt.env_steps));
        if let Err(e) = write(&path, ckpt.to_json()) {
            io_error = Some(e);
            return Err(voxwind::Error::Zero("checkpoint could not be written"));
        }
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    let trained = trained.map_err(|e| match e {
        voxwind::Error::InvalidConfig { .. } => classify("training", e),
        other => CliError::Training(format!("training failed: {other}")),
    })?;

    let mut trace = format!("{TRACE_HEADER}\n");
    for row in &trained.trace {
        trace.push_str(&row.to_csv_line());
        trace.push('\n');
    }
    write(&after_dir.join("trace.csv"), trace)?;
    write(&after_dir.join("checkpoint.json"), trained.checkpoint.to_json())?;

    // A fresh environment makes the result match `evaluate` on the saved checkpoint.
    let (grid, after) = optimise(&mut make_env(config)?, &trained.agent, config)?;
    write_measurement(&after_dir, &grid, &after, config)?;
    write_pair(&after_dir, &before, &after)?;

    Ok(vec![
        format!(
            "trained {} steps in mode {mode}, {} updates",
            trained.checkpoint.env_steps,
            trained.updates.len()
        ),
        summary("before", &before),
        summary("after", &after),
    ])
}

pub fn cmd_evaluate(checkpoint: &Path, config: &RunConfig, out: &Path) -> CliResult<Vec<String>> {
    let ckpt = Checkpoint::from_json(&read_text(checkpoint)?)
        .map_err(|e| CliError::Parse(format!("{}: {e}", checkpoint.display())))?;
    let mut env = make_env(config)?;
    if ckpt.policy.mean.input_dim() != env.observation_dim() || ckpt.policy.action_dim() != env.action_dim() {
        return Err(CliError::Config(format!(
            "checkpoint expects {} observations and {} actions, the environment has {} and {}",
            ckpt.policy.mean.input_dim(),
            ckpt.policy.action_dim(),
            env.observation_dim(),
            env.action_dim()
        )));
    }
    let agent = Agent {
        policy: ckpt.policy,
        value: ckpt.value,
        policy_optimizer: ckpt.policy_optimizer,
        value_optimizer: ckpt.value_optimizer,
    };
    let before = run_simulation(env.original(), &config.tunnel).map_err(|e| classify("baseline", e))?;
    let (grid, after) = optimise(&mut env, &agent, config)?;
    write_measurement(out, &grid, &after, config)?;
    write_pair(out, &before, &after)?;
    Ok(vec![summary("before", &before), summary("after", &after)])
}

fn read_metrics(dir: &Path) -> CliResult<[f64; 4]> {
    let path = dir.join("sim_result.csv");
    if !path.is_file() {
        return Err(CliError::MissingInput(format!("missing {}", path.display())));
    }
    SimResult::metrics_from_csv(&read_text(&path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// `after` holds either one `sim_result.csv`, used for every objective, or one
/// subdirectory per objective named `ke`, `ke_df` and `ke_df_vcc`.
pub fn cmd_report(before: &Path, after: &Path, out: &Path, car: &str) -> CliResult<Vec<String>> {
    if !after.is_dir() {
        return Err(CliError::MissingInput(format!("missing directory {}", after.display())));
    }
    let original = read_metrics(before)?;
    let optimised = if after.join("sim_result.csv").is_file() {
        [read_metrics(after)?; 3]
    } else {
        [
            read_metrics(&after.join(ObjectiveMode::Ke.as_str()))?,
            read_metrics(&after.join(ObjectiveMode::KeDf.as_str()))?,
            read_metrics(&after.join(ObjectiveMode::KeDfVcc.as_str()))?,
        ]
    };
    let table = build_comparison_table(&rows_from_metrics(car, original, optimised))
        .map_err(|e| CliError::Config(format!("report: {e}")))?;
    write(out, &table)?;
    Ok(table.lines().map(str::to_string).collect())
}
