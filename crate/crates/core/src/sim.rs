//! Monte Carlo simulation of the sampled loop with Bernoulli measurement loss,
//! and the time-weighted absolute tracking error `J = Σ_{k=1}^{N} k·|r − y(k)|`.
//!
//! The controller applies `u(k) = −K(x̄(k) − x_ref)` with `x_ref = (r, 0, …, 0)`,
//! where `x̄` is the last state it received. Each step the new measurement is
//! delivered with probability `p_tx`; on a loss `x̄` keeps its previous value.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::plant::DiscretePlant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStep {
    pub k: usize,
    pub x: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    /// Whether the measurement of `x(k)` was lost.
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    /// Steps `k = 0..=N`.
    pub steps: Vec<SimStep>,
    pub sample_time: f64,
    pub ref_amplitude: f64,
}

impl SimTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    /// `max_k ‖x(k)‖₂`.
    pub fn max_state_norm(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Stacked states `(x(k), x̄(k))`.
    pub fn stacked(&self, k: usize) -> Vec<f64> {
        let s = &self.steps[k];
        s.x.iter().chain(&s.x_bar).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    /// Sample standard deviation; zero for a single realization.
    pub std_dev: f64,
    pub per_realization: Vec<f64>,
    pub realizations: usize,
}

impl CostEstimate {
    pub fn from_samples(per_realization: Vec<f64>) -> Self {
        let (mean, std_dev) = mean_std(&per_realization);
        CostEstimate {
            mean,
            std_dev,
            realizations: per_realization.len(),
            per_realization,
        }
    }
}

/// Mean and sample standard deviation (zero below two samples).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn check_inputs(d: &DiscretePlant, k: &Matrix, x0: &[f64]) -> Result<()> {
    let n = d.states();
    if k.shape() != (d.inputs(), n) {
        return Err(Error::DimensionMismatch(format!(
            "gain must be {}x{n}, got {}x{}",
            d.inputs(),
            k.rows(),
            k.cols()
        )));
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state of length {} for a {n}-state plant",
            x0.len()
        )));
    }
    Ok(())
}

fn check_probability(p_tx: f64) -> Result<()> {
    if p_tx > 0.0 && p_tx <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "delivery probability must lie in (0, 1], got {p_tx}"
        )))
    }
}

fn reference_state(n: usize, ref_amplitude: f64) -> Vec<f64> {
    let mut r = vec![0.0; n];
    r[0] = ref_amplitude;
    r
}

fn control(k: &Matrix, x_bar: &[f64], x_ref: &[f64]) -> Vec<f64> {
    let err: Vec<f64> = x_bar.iter().zip(x_ref).map(|(a, b)| a - b).collect();
    k.mul_vec(&err).into_iter().map(|v| -v).collect()
}

fn propagate(d: &DiscretePlant, x: &[f64], u: &[f64]) -> Vec<f64> {
    let gx = d.g.mul_vec(x);
    let hu = d.h.mul_vec(u);
    gx.iter().zip(&hu).map(|(a, b)| a + b).collect()
}

/// Runs the loop from `x0` with a prescribed loss pattern: `drops[k]` is the
/// fate of the measurement of `x(k+1)`, so the horizon is `drops.len()`.
/// `x̄(0) = x(0)`.
pub fn simulate_with_drops(
    d: &DiscretePlant,
    k: &Matrix,
    ref_amplitude: f64,
    x0: &[f64],
    drops: &[bool],
) -> Result<SimTrace> {
    check_inputs(d, k, x0)?;
    let x_ref = reference_state(d.states(), ref_amplitude);
    let mut x = x0.to_vec();
    let mut x_bar = x0.to_vec();
    let mut dropped = false;
    let mut steps = Vec::with_capacity(drops.len() + 1);
    for step in 0..=drops.len() {
        let u = control(k, &x_bar, &x_ref);
        let y = d.c.mul_vec(&x);
        let next = propagate(d, &x, &u);
        steps.push(SimStep {
            k: step,
            x: std::mem::replace(&mut x, next),
            x_bar: x_bar.clone(),
            u,
            y,
            dropped,
        });
        if step < drops.len() {
            dropped = drops[step];
            if !dropped {
                x_bar = x.clone();
            }
        }
    }
    Ok(SimTrace {
        steps,
        sample_time: d.sample_time,
        ref_amplitude,
    })
}

/// Loss pattern of one realization: `N` independent draws, each a loss with
/// probability `1 − p_tx`.
pub fn draw_drops(p_tx: f64, horizon: usize, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..horizon).map(|_| rng.gen::<f64>() >= p_tx).collect()
}

/// One realization from rest, `x(0) = 0`.
pub fn simulate_once(
    d: &DiscretePlant,
    k: &Matrix,
    p_tx: f64,
    ref_amplitude: f64,
    horizon: usize,
    seed: u64,
) -> Result<SimTrace> {
    check_probability(p_tx)?;
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let x0 = vec![0.0; d.states()];
    simulate_with_drops(d, k, ref_amplitude, &x0, &draw_drops(p_tx, horizon, seed))
}

/// `Σ_{k=1}^{N} k·|r − y₁(k)|` on the first output.
pub fn itae_cost(trace: &SimTrace) -> f64 {
    trace
        .steps
        .iter()
        .skip(1)
        .map(|s| s.k as f64 * (trace.ref_amplitude - s.y[0]).abs())
        .sum()
}

/// Per-realization seeds derived from a base seed.
pub fn realization_seeds(seed_base: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_base);
    (0..count).map(|_| rng.gen()).collect()
}

/// Expected cost over the realizations `seeds`, evaluated concurrently and
/// reported in seed order.
pub fn expected_itae_with_seeds(
    d: &DiscretePlant,
    k: &Matrix,
    p_tx: f64,
    ref_amplitude: f64,
    horizon: usize,
    seeds: &[u64],
) -> Result<CostEstimate> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one realization".into(),
        ));
    }
    let costs = seeds
        .par_iter()
        .map(|&s| simulate_once(d, k, p_tx, ref_amplitude, horizon, s).map(|t| itae_cost(&t)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CostEstimate::from_samples(costs))
}

/// Expected cost over `realizations` runs seeded from `seed_base`.
pub fn expected_itae(
    d: &DiscretePlant,
    k: &Matrix,
    p_tx: f64,
    ref_amplitude: f64,
    horizon: usize,
    realizations: usize,
    seed_base: u64,
) -> Result<CostEstimate> {
    let seeds = realization_seeds(seed_base, realizations);
    expected_itae_with_seeds(d, k, p_tx, ref_amplitude, horizon, &seeds)
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// Writes `k, t, x1..xn, xbar1..xbarn, u, y, dropped` (inputs and outputs get an
/// index suffix when there is more than one).
pub fn write_trace_csv<W: Write>(trace: &SimTrace, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let first = &trace.steps[0];
    let n = first.x.len();
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xbar{i}")));
    header.extend(indexed("u", first.u.len()));
    header.extend(indexed("y", first.y.len()));
    header.push("dropped".into());
    w.write_record(&header)?;
    for s in &trace.steps {
        let mut row = vec![
            s.k.to_string(),
            (s.k as f64 * trace.sample_time).to_string(),
        ];
        for v in s.x.iter().chain(&s.x_bar).chain(&s.u).chain(&s.y) {
            row.push(v.to_string());
        }
        row.push(u8::from(s.dropped).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
