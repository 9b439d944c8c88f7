//! Particle-burst wind tunnel.
//!
//! Bursts of spherical particles are fired from the inlet plane `x = 0` along
//! +x at a voxel grid centred in the tunnel's floor. Particles travel in
//! straight lines (no gravity, no particle-particle interaction) until they
//! strike a voxel, where the normal velocity component is reflected and scaled
//! by the restitution coefficient. The aggregate metrics are:
//!
//! * drag force: `½ρv²C_dA` per impact at the impact speed, `A = πr²`,
//!   summed per burst and averaged over bursts;
//! * kinetic energy: mean `½mv²` per particle at exit (or at `max_steps`);
//! * collision count: total impacts divided by `burst_count * base_cycle_count`;
//! * heightmap sum of the grid.

mod contact;
mod heatmap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::{heightmap_sum, VoxelGrid};
pub use contact::{sphere_voxel_contact, Contact};
pub(crate) use heatmap::normalised_pgm;
pub use heatmap::Heatmap;

const MPH_TO_MPS: f64 = 0.44704;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunnelConfig {
    /// Free-stream speed in mph, within `[10, 120]`.
    pub air_speed: f64,
    /// Particles per burst.
    pub particle_count: usize,
    /// Bursts per simulation run.
    pub burst_count: u32,
    pub base_cycle_count: u32,
    /// Integration step in seconds.
    pub dt: f64,
    /// Step budget per burst.
    pub max_steps: u32,
    /// kg/m³
    pub fluid_density: f64,
    /// kg
    pub particle_mass: f64,
    /// m
    pub particle_radius: f64,
    pub drag_coefficient: f64,
    pub restitution: f64,
    /// Tunnel extent `(x, y, z)` in metres.
    pub domain_size: [f64; 3],
    pub seed: u64,
}

impl Default for TunnelConfig {
    fn default() -> Self {
        Self {
            air_speed: 60.0,
            particle_count: 512,
            burst_count: 4,
            base_cycle_count: 10,
            dt: 1.0 / 120.0,
            max_steps: 240,
            fluid_density: 1.225,
            particle_mass: 0.01,
            particle_radius: 0.05,
            drag_coefficient: 0.47,
            restitution: 0.5,
            domain_size: [9.6, 3.2, 2.4],
            seed: 0,
        }
    }
}

impl TunnelConfig {
    /// Checks every field, naming failures as `tunnel.<field>`.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    format!("tunnel.{name}"),
                    format!("{v} must be positive and finite"),
                ))
            }
        };
        if !(10.0..=120.0).contains(&self.air_speed) {
            return Err(Error::config(
                "tunnel.air_speed",
                format!("{} mph outside the supported range 10-120", self.air_speed),
            ));
        }
        if self.burst_count == 0 {
            return Err(Error::config("tunnel.burst_count", "must be at least 1"));
        }
        if self.base_cycle_count == 0 {
            return Err(Error::config("tunnel.base_cycle_count", "must be at least 1"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("tunnel.max_steps", "must be at least 1"));
        }
        positive("dt", self.dt)?;
        positive("fluid_density", self.fluid_density)?;
        positive("particle_mass", self.particle_mass)?;
        positive("particle_radius", self.particle_radius)?;
        positive("drag_coefficient", self.drag_coefficient)?;
        for (k, &d) in self.domain_size.iter().enumerate() {
            positive(&format!("domain_size[{k}]"), d)?;
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::config(
                "tunnel.restitution",
                format!("{} outside [0, 1]", self.restitution),
            ));
        }
        Ok(())
    }

    pub fn cross_section(&self) -> f64 {
        std::f64::consts::PI * self.particle_radius * self.particle_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub alive: bool,
}

impl Particle {
    pub fn speed(&self) -> f64 {
        norm(self.velocity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub particle: usize,
    pub column: (usize, usize),
    /// Speed immediately before the impact, m/s.
    pub impact_speed: f64,
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub drag_force: f64,
    pub kinetic_energy: f64,
    pub collision_count: f64,
    pub heightmap_sum: f64,
    pub heatmap: Heatmap,
}

pub const SIM_RESULT_HEADER: &str = "drag_force,kinetic_energy,collision_count,heightmap_sum";

impl SimResult {
    /// Single-row CSV with a header line.
    pub fn to_csv(&self) -> String {
        format!(
            "{SIM_RESULT_HEADER}\n{},{},{},{}\n",
            self.drag_force, self.kinetic_energy, self.collision_count, self.heightmap_sum
        )
    }

    /// Parses the four scalar metrics written by [`SimResult::to_csv`].
    pub fn metrics_from_csv(text: &str) -> Result<[f64; 4]> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SIM_RESULT_HEADER) {
            return Err(Error::parse(0, format!("expected header `{SIM_RESULT_HEADER}`")));
        }
        let offset = SIM_RESULT_HEADER.len() + 1;
        let row = lines.next().ok_or_else(|| Error::parse(offset, "missing metric row"))?;
        let values: Vec<f64> = row
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(offset, "invalid metric value"))?;
        <[f64; 4]>::try_from(values).map_err(|_| Error::parse(offset, "expected 4 metrics"))
    }

    pub fn metrics(&self) -> [f64; 4] {
        [
            self.drag_force,
            self.kinetic_energy,
            self.collision_count,
            self.heightmap_sum,
        ]
    }
}

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPH_TO_MPS
}

/// `½ ρ v² C_d A`
pub fn drag_force(density: f64, speed: f64, drag_coefficient: f64, area: f64) -> f64 {
    0.5 * density * speed * speed * drag_coefficient * area
}

/// `½ m v²`
pub fn kinetic_energy(mass: f64, speed: f64) -> f64 {
    0.5 * mass * speed * speed
}

/// Total impacts normalised by `bursts * base_cycles`.
pub fn collision_count_metric(per_particle: &[u64], bursts: u32, base_cycles: u32) -> f64 {
    let total: u64 = per_particle.iter().sum();
    total as f64 / (f64::from(bursts) * f64::from(base_cycles))
}

/// Spawns one burst on the inlet plane, jittered uniformly over the cross-section.
pub fn spawn_burst(config: &TunnelConfig, rng: &mut impl Rng) -> Vec<Particle> {
    let speed = mph_to_mps(config.air_speed);
    let [_, dy, dz] = config.domain_size;
    (0..config.particle_count)
        .map(|_| {
            let y = rng.random::<f64>() * dy;
            let z = rng.random::<f64>() * dz;
            Particle {
                position: [0.0, y, z],
                velocity: [speed, 0.0, 0.0],
                alive: true,
            }
        })
        .collect()
}

/// A voxel grid placed in the tunnel: centred in x and y, resting on `z = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Placement<'a> {
    pub grid: &'a VoxelGrid,
    pub origin: [f64; 3],
}

impl<'a> Placement<'a> {
    pub fn centred(grid: &'a VoxelGrid, config: &TunnelConfig) -> Result<Self> {
        let extent = grid.extent();
        let domain = config.domain_size;
        if (0..3).any(|k| extent[k] > domain[k]) {
            return Err(Error::GridTooLarge {
                grid_m: extent,
                domain_m: domain,
            });
        }
        Ok(Self {
            grid,
            origin: [(domain[0] - extent[0]) / 2.0, (domain[1] - extent[1]) / 2.0, 0.0],
        })
    }
}

/// What happened during one call to [`step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub events: Vec<CollisionEvent>,
    /// `(particle index, kinetic energy)` for each particle that left the domain.
    pub exits: Vec<(usize, f64)>,
}

struct ParticleOutcome {
    impacts: Vec<(Contact, f64)>,
    exit_energy: Option<f64>,
}

/// Advances every live particle by `config.dt`.
///
/// Each step is split into substeps short enough (half the smaller of the
/// particle radius and voxel edge) that a particle cannot pass through a voxel
/// between contact checks. Particles are integrated in parallel; events and
/// heatmap tallies are merged in particle-index order.
pub fn step(
    particles: &mut [Particle],
    placement: &Placement<'_>,
    config: &TunnelConfig,
    heatmap: &mut Heatmap,
) -> StepReport {
    let outcomes: Vec<Option<ParticleOutcome>> = particles
        .par_iter_mut()
        .map(|p| p.alive.then(|| advance(p, placement, config)))
        .collect();

    let mut report = StepReport::default();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let Some(outcome) = outcome else { continue };
        for (contact, impact_speed) in outcome.impacts {
            let [x, y, _] = contact.voxel;
            heatmap.increment(x, y);
            report.events.push(CollisionEvent {
                particle: i,
                column: (x, y),
                impact_speed,
                normal: contact.normal,
            });
        }
        if let Some(energy) = outcome.exit_energy {
            report.exits.push((i, energy));
        }
    }
    report
}

fn advance(p: &mut Particle, placement: &Placement<'_>, config: &TunnelConfig) -> ParticleOutcome {
    let mut outcome = ParticleOutcome {
        impacts: Vec::new(),
        exit_energy: None,
    };
    let max_travel = 0.5 * config.particle_radius.min(placement.grid.voxel_size());
    let travel = p.speed() * config.dt;
    let substeps = ((travel / max_travel).ceil() as usize).max(1);
    let h = config.dt / substeps as f64;
    let e = config.restitution;

    for _ in 0..substeps {
        // No body forces act on the particles, so the semi-implicit Euler
        // velocity update is the identity and only the position moves.
        for k in 0..3 {
            p.position[k] += p.velocity[k] * h;
        }
        if let Some(c) = sphere_voxel_contact(p.position, config.particle_radius, placement.grid, placement.origin) {
            let vn = dot(p.velocity, c.normal);
            if vn < 0.0 {
                outcome.impacts.push((c, p.speed()));
                for k in 0..3 {
                    p.velocity[k] -= (1.0 + e) * vn * c.normal[k];
                }
            }
            for k in 0..3 {
                p.position[k] += c.separation * c.normal[k];
            }
        }
        let outside = (0..3).any(|k| p.position[k] < 0.0 || p.position[k] > config.domain_size[k]);
        if outside {
            p.alive = false;
            outcome.exit_energy = Some(kinetic_energy(config.particle_mass, p.speed()));
            break;
        }
    }
    outcome
}

/// Runs `burst_count` bursts against `grid` and aggregates the metrics.
pub fn run_simulation(grid: &VoxelGrid, config: &TunnelConfig) -> Result<SimResult> {
    config.validate()?;
    let placement = Placement::centred(grid, config)?;
    let mut heatmap = Heatmap::new(grid.width(), grid.length());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let area = config.cross_section();

    let mut drag_total = 0.0;
    let mut energy_total = 0.0;
    let mut per_particle_hits = Vec::new();

    for _ in 0..config.burst_count {
        let mut particles = spawn_burst(config, &mut rng);
        let mut hits = vec![0u64; particles.len()];
        let mut burst_drag = 0.0;
        for _ in 0..config.max_steps {
            if !particles.iter().any(|p| p.alive) {
                break;
            }
            let report = step(&mut particles, &placement, config, &mut heatmap);
            for ev in &report.events {
                hits[ev.particle] += 1;
                burst_drag += drag_force(config.fluid_density, ev.impact_speed, config.drag_coefficient, area);
            }
            for &(_, energy) in &report.exits {
                energy_total += energy;
            }
        }
        for p in particles.iter().filter(|p| p.alive) {
            energy_total += kinetic_energy(config.particle_mass, p.speed());
        }
        drag_total += burst_drag;
        per_particle_hits.extend(hits);
    }

    let bursts = f64::from(config.burst_count);
    let spawned = config.particle_count as f64 * bursts;
    Ok(SimResult {
        drag_force: drag_total / bursts,
        kinetic_energy: if spawned > 0.0 { energy_total / spawned } else { 0.0 },
        collision_count: collision_count_metric(&per_particle_hits, config.burst_count, config.base_cycle_count),
        heightmap_sum: heightmap_sum(grid) as f64,
        heatmap,
    })
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
