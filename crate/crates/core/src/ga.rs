//! Real-coded genetic algorithm with elitism.
//!
//! Each generation keeps the `elite_count` best individuals unchanged and fills
//! the rest of the population with children. A child starts as a copy of a
//! rank-roulette parent; with probability `crossover_ratio` it is replaced by an
//! arithmetic blend `λ·p₁ + (1 − λ)·p₂`, `λ ~ U[−0.25, 1.25]`, and with
//! probability `mutation_ratio` it receives Gaussian noise with a standard
//! deviation of 10% of each dimension's range. Children are clipped to the box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::SearchBox;
use crate::error::{Error, Result};

const BLEND_LOW: f64 = -0.25;
const BLEND_HIGH: f64 = 1.25;
const MUTATION_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub elite_count: usize,
    pub crossover_ratio: f64,
    pub mutation_ratio: f64,
    pub max_generations: usize,
    pub bounds: SearchBox,
    pub seed: u64,
}

impl GaConfig {
    /// Population of 20 with two elites, crossover 0.8 and mutation 0.2.
    pub fn new(bounds: SearchBox, max_generations: usize, seed: u64) -> Self {
        GaConfig {
            population_size: 20,
            elite_count: 2,
            crossover_ratio: 0.8,
            mutation_ratio: 0.2,
            max_generations,
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 || self.elite_count >= self.population_size {
            return Err(Error::InvalidParameter(format!(
                "need 2 <= population ({}) and elites ({}) < population",
                self.population_size, self.elite_count
            )));
        }
        for (name, v) in [
            ("crossover_ratio", self.crossover_ratio),
            ("mutation_ratio", self.mutation_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Population sorted best-first, with the RNG that drives it.
#[derive(Debug, Clone)]
pub struct GaState {
    pub population: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
    pub generation: usize,
    pub evaluations: usize,
    pub best_point: Vec<f64>,
    pub best_fitness: f64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaRun {
    pub best_point: Vec<f64>,
    pub best_fitness: f64,
    pub generations_used: usize,
    /// Best fitness so far, one entry for the initial population and one per generation.
    pub history: Vec<f64>,
    pub stopped_early: bool,
    pub evaluations: usize,
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

fn evaluate<F>(points: &[Vec<f64>], fitness: &F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    points.par_iter().map(|x| sanitize(fitness(x))).collect()
}

impl GaState {
    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.population.len()).collect();
        order.sort_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]).then(a.cmp(&b)));
        self.population = order.iter().map(|&i| self.population[i].clone()).collect();
        self.fitness = order.iter().map(|&i| self.fitness[i]).collect();
        if self.fitness[0] < self.best_fitness {
            self.best_fitness = self.fitness[0];
            self.best_point = self.population[0].clone();
        }
    }

    /// Rank-proportional roulette: the individual of rank `r` (0 = best) has
    /// weight `size − r`.
    fn select(&mut self) -> usize {
        let n = self.population.len();
        let total = n * (n + 1) / 2;
        let mut ticket = self.rng.gen_range(0..total);
        for r in 0..n {
            let w = n - r;
            if ticket < w {
                return r;
            }
            ticket -= w;
        }
        n - 1
    }
}

/// Random initial population, evaluated and sorted.
pub fn ga_init<F>(config: &GaConfig, fitness: &F) -> GaState
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let population: Vec<Vec<f64>> = (0..config.population_size)
        .map(|_| config.bounds.sample(&mut rng))
        .collect();
    let fitness_values = evaluate(&population, fitness);
    let mut state = GaState {
        evaluations: population.len(),
        best_point: population[0].clone(),
        best_fitness: f64::INFINITY,
        population,
        fitness: fitness_values,
        generation: 0,
        rng,
    };
    state.sort();
    state
}

/// Advances one generation. Elites are carried over with their cached fitness.
pub fn ga_step<F>(mut state: GaState, config: &GaConfig, fitness: &F) -> GaState
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let bounds = &config.bounds;
    let noise: Vec<Normal<f64>> = bounds
        .ranges()
        .iter()
        .map(|r| Normal::new(0.0, MUTATION_SCALE * r).expect("positive range"))
        .collect();
    let n_children = config.population_size - config.elite_count;
    let mut children = Vec::with_capacity(n_children);
    for _ in 0..n_children {
        let i = state.select();
        let mut child = state.population[i].clone();
        if state.rng.gen::<f64>() < config.crossover_ratio {
            let j = state.select();
            let lambda = state.rng.gen_range(BLEND_LOW..BLEND_HIGH);
            for (c, other) in child.iter_mut().zip(&state.population[j]) {
                *c = lambda * *c + (1.0 - lambda) * other;
            }
        }
        if state.rng.gen::<f64>() < config.mutation_ratio {
            for (c, dist) in child.iter_mut().zip(&noise) {
                *c += dist.sample(&mut state.rng);
            }
        }
        bounds.clip(&mut child);
        children.push(child);
    }
    let child_fitness = evaluate(&children, fitness);
    state.evaluations += children.len();

    state.population.truncate(config.elite_count);
    state.fitness.truncate(config.elite_count);
    state.population.extend(children);
    state.fitness.extend(child_fitness);
    state.generation += 1;
    state.sort();
    state
}

/// Minimizes `fitness` over the configured box.
///
/// Stops once `early_stop(best_fitness)` holds (checked after the initial
/// population and after every generation) or after `max_generations`.
pub fn ga_minimize<F, S>(fitness: F, config: &GaConfig, early_stop: S) -> Result<GaRun>
where
    F: Fn(&[f64]) -> f64 + Sync,
    S: Fn(f64) -> bool,
{
    config.validate()?;
    let mut state = ga_init(config, &fitness);
    let mut history = vec![state.best_fitness];
    let mut stopped_early = early_stop(state.best_fitness);
    while !stopped_early && state.generation < config.max_generations {
        state = ga_step(state, config, &fitness);
        history.push(state.best_fitness);
        stopped_early = early_stop(state.best_fitness);
    }
    Ok(GaRun {
        best_point: state.best_point,
        best_fitness: state.best_fitness,
        generations_used: state.generation,
        history,
        stopped_early,
        evaluations: state.evaluations,
    })
}
