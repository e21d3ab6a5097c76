//! Global-best particle swarm with regrouping.
//!
//! The swarm moves with inertia and cognitive/social pulls, velocities clamped
//! to a fraction of the current search box. When every particle has collapsed
//! to within `ε·‖range(Ω⁰)‖` of the global best, the swarm is re-seeded in a
//! smaller box around the global best whose width per dimension is
//! `min(range_j(Ω⁰), ρ·max_i |x_ij − g_j|)`, with `ρ = 6/(5ε)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::SearchBox;
use crate::error::{Error, Result};

/// Relative floor on regrouped box widths, so a fully collapsed swarm still
/// gets a non-degenerate box.
pub const MIN_REGROUP_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPsoConfig {
    pub swarm_size: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    /// Velocity limit as a fraction of the current box range.
    pub clamp_fraction: f64,
    /// Normalized swarm radius below which the swarm regroups.
    pub stagnation_threshold: f64,
    pub max_iterations: usize,
    pub bounds: SearchBox,
    pub seed: u64,
}

impl RegPsoConfig {
    pub fn new(bounds: SearchBox, max_iterations: usize, seed: u64) -> Self {
        RegPsoConfig {
            swarm_size: 20,
            inertia: 0.71633,
            c1: 1.4962,
            c2: 1.4962,
            clamp_fraction: 0.15,
            stagnation_threshold: 1.1e-4,
            max_iterations,
            bounds,
            seed,
        }
    }

    /// `ρ = 6/(5ε)`.
    pub fn regroup_factor(&self) -> f64 {
        6.0 / (5.0 * self.stagnation_threshold)
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::InvalidParameter(
                "swarm needs at least 2 particles".into(),
            ));
        }
        if !(self.clamp_fraction > 0.0 && self.clamp_fraction <= 1.0) {
            return Err(Error::InvalidParameter(
                "clamp_fraction must lie in (0, 1]".into(),
            ));
        }
        if !(self.stagnation_threshold > 0.0) {
            return Err(Error::InvalidParameter(
                "stagnation_threshold must be positive".into(),
            ));
        }
        for (name, v) in [("inertia", self.inertia), ("c1", self.c1), ("c2", self.c2)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SwarmState {
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub personal_best: Vec<Vec<f64>>,
    pub personal_best_value: Vec<f64>,
    pub global_best: Vec<f64>,
    pub global_best_value: f64,
    /// Current box `Ω^r`; equals the configured bounds until the first regroup.
    pub search_box: SearchBox,
    pub regroups: usize,
    pub iteration: usize,
    pub evaluations: usize,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoRun {
    pub best_point: Vec<f64>,
    pub best_fitness: f64,
    pub iterations_used: usize,
    /// Global best value, one entry for the initial swarm and one per iteration.
    pub history: Vec<f64>,
    pub regroups: usize,
    pub evaluations: usize,
}

fn evaluate<F>(points: &[Vec<f64>], objective: &F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    points
        .par_iter()
        .map(|x| {
            let f = objective(x);
            if f.is_nan() {
                f64::INFINITY
            } else {
                f
            }
        })
        .collect()
}

impl SwarmState {
    fn velocity_limits(&self, clamp_fraction: f64) -> Vec<f64> {
        self.search_box
            .ranges()
            .iter()
            .map(|r| clamp_fraction * r)
            .collect()
    }

    /// Lowers the global best to the best personal best, keeping the incumbent
    /// on ties and scanning particles in index order.
    fn refresh_global_best(&mut self) {
        for (p, &v) in self.personal_best.iter().zip(&self.personal_best_value) {
            if v < self.global_best_value {
                self.global_best_value = v;
                self.global_best = p.clone();
            }
        }
    }
}

/// Clamps each component to `[−limit_j, limit_j]`.
pub fn clamp_velocity(v: &mut [f64], limits: &[f64]) {
    for (vj, &lim) in v.iter_mut().zip(limits) {
        *vj = vj.clamp(-lim, lim);
    }
}

/// Uniform positions in the configured box, velocities uniform within the
/// clamp, all positions evaluated.
pub fn swarm_init<F>(config: &RegPsoConfig, objective: &F) -> SwarmState
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bounds = &config.bounds;
    let positions: Vec<Vec<f64>> = (0..config.swarm_size)
        .map(|_| bounds.sample(&mut rng))
        .collect();
    let limits: Vec<f64> = bounds
        .ranges()
        .iter()
        .map(|r| config.clamp_fraction * r)
        .collect();
    let velocities = (0..config.swarm_size)
        .map(|_| limits.iter().map(|&l| rng.gen_range(-l..=l)).collect())
        .collect();
    let values = evaluate(&positions, objective);
    let mut state = SwarmState {
        personal_best: positions.clone(),
        personal_best_value: values,
        global_best: positions[0].clone(),
        global_best_value: f64::INFINITY,
        evaluations: positions.len(),
        positions,
        velocities,
        search_box: bounds.clone(),
        regroups: 0,
        iteration: 0,
        rng,
    };
    state.refresh_global_best();
    state
}

/// One velocity/position update followed by evaluation and best bookkeeping.
///
/// Positions leaving the configured box are clipped back onto it and the
/// velocity component on that dimension is set to zero.
pub fn pso_step<F>(mut state: SwarmState, config: &RegPsoConfig, objective: &F) -> SwarmState
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let limits = state.velocity_limits(config.clamp_fraction);
    let outer = &config.bounds;
    for i in 0..state.positions.len() {
        for j in 0..outer.dim() {
            let phi1: f64 = state.rng.gen();
            let phi2: f64 = state.rng.gen();
            let x = state.positions[i][j];
            let v = config.inertia * state.velocities[i][j]
                + config.c1 * phi1 * (state.personal_best[i][j] - x)
                + config.c2 * phi2 * (state.global_best[j] - x);
            let v = v.clamp(-limits[j], limits[j]);
            let moved = x + v;
            let clipped = moved.clamp(outer.lower()[j], outer.upper()[j]);
            state.positions[i][j] = clipped;
            state.velocities[i][j] = if clipped == moved { v } else { 0.0 };
        }
    }
    let values = evaluate(&state.positions, objective);
    state.evaluations += values.len();
    for (i, f) in values.into_iter().enumerate() {
        if f < state.personal_best_value[i] {
            state.personal_best_value[i] = f;
            state.personal_best[i] = state.positions[i].clone();
        }
    }
    state.refresh_global_best();
    state.iteration += 1;
    state
}

/// Largest distance of a particle from the global best, and that distance
/// relative to the range-vector norm of the configured (original) box.
pub fn swarm_radius(state: &SwarmState, config: &RegPsoConfig) -> (f64, f64) {
    let delta = state
        .positions
        .iter()
        .map(|x| {
            x.iter()
                .zip(&state.global_best)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let diameter = config
        .bounds
        .ranges()
        .iter()
        .map(|r| r * r)
        .sum::<f64>()
        .sqrt();
    (delta, delta / diameter)
}

/// Re-seeds the swarm in a shrunken box around the global best.
pub fn regroup(mut state: SwarmState, config: &RegPsoConfig) -> SwarmState {
    let outer = &config.bounds;
    let rho = config.regroup_factor();
    let g = &state.global_best;
    let mut lower = Vec::with_capacity(outer.dim());
    let mut upper = Vec::with_capacity(outer.dim());
    for j in 0..outer.dim() {
        let spread = state
            .positions
            .iter()
            .map(|x| (x[j] - g[j]).abs())
            .fold(0.0, f64::max);
        let full = outer.range(j);
        let width = (rho * spread).min(full).max(MIN_REGROUP_WIDTH * full);
        lower.push((g[j] - 0.5 * width).max(outer.lower()[j]));
        upper.push((g[j] + 0.5 * width).min(outer.upper()[j]));
    }
    state.search_box = SearchBox::from_parts_unchecked(lower, upper);
    let limits = state.velocity_limits(config.clamp_fraction);
    for i in 0..state.positions.len() {
        state.positions[i] = state.search_box.sample(&mut state.rng);
        clamp_velocity(&mut state.velocities[i], &limits);
    }
    state.regroups += 1;
    state
}

/// Minimizes `objective` over the configured box for `max_iterations` steps,
/// regrouping whenever the normalized swarm radius falls below the threshold.
pub fn regpso_minimize<F>(objective: F, config: &RegPsoConfig) -> Result<PsoRun>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let mut state = swarm_init(config, &objective);
    let mut history = vec![state.global_best_value];
    while state.iteration < config.max_iterations {
        state = pso_step(state, config, &objective);
        history.push(state.global_best_value);
        let (_, radius) = swarm_radius(&state, config);
        if radius < config.stagnation_threshold {
            state = regroup(state, config);
        }
    }
    Ok(PsoRun {
        best_point: state.global_best,
        best_fitness: state.global_best_value,
        iterations_used: state.iteration,
        history,
        regroups: state.regroups,
        evaluations: state.evaluations,
    })
}
