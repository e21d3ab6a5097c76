//! Weight synthesis: an outer optimizer searches log10 LQR weights; each
//! candidate goes through the Riccati gain, stability certification and the
//! expected tracking cost, with a flat penalty for anything not certified.
//!
//! All candidates of one run share the same loss realizations, so the
//! objective is deterministic within a run.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bmi_stab::{certify_gain, CertifyOptions};
use crate::bounds::SearchBox;
use crate::error::{Error, Result};
use crate::ga::{ga_minimize, GaConfig};
use crate::linalg::Matrix;
use crate::lmi::{verify_certificate, LmiOptions, StabilityCertificate};
use crate::lqr::{solve_dare, LqrWeights};
use crate::plant::{closed_loop_phi, discretize_zoh, ContinuousPlant, DiscretePlant};
use crate::regpso::{regpso_minimize, RegPsoConfig};
use crate::sim::{expected_itae_with_seeds, mean_std, realization_seeds, CostEstimate};

const STREAM_REALIZATIONS: u64 = 1;
const STREAM_OUTER: u64 = 2;
const STREAM_CERTIFY: u64 = 3;
const STREAM_REPORT: u64 = 4;

/// Independent seed for one purpose (`stream`) of a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.gen()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Regpso,
    Ga,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Regpso => "regpso",
            Arm::Ga => "ga",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regpso" => Ok(Arm::Regpso),
            "ga" => Ok(Arm::Ga),
            _ => Err(Error::InvalidParameter(format!(
                "unknown optimizer {s:?}, expected regpso or ga"
            ))),
        }
    }
}

/// Plant given either in continuous time (sampled with zero-order hold) or
/// already discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    Continuous { a: Matrix, b: Matrix, c: Matrix },
    Discrete { g: Matrix, h: Matrix, c: Matrix },
}

impl Default for PlantSpec {
    fn default() -> Self {
        let p = ContinuousPlant::servo_example();
        PlantSpec::Continuous {
            a: p.a,
            b: p.b,
            c: p.c,
        }
    }
}

impl PlantSpec {
    pub fn discretize(&self, sample_time: f64) -> Result<DiscretePlant> {
        match self {
            PlantSpec::Continuous { a, b, c } => {
                let p = ContinuousPlant::new(a.clone(), b.clone(), c.clone())?;
                discretize_zoh(&p, sample_time)
            }
            PlantSpec::Discrete { g, h, c } => {
                DiscretePlant::new(g.clone(), h.clone(), c.clone(), sample_time)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegPsoSettings {
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub clamp_fraction: f64,
    pub stagnation_threshold: f64,
}

impl Default for RegPsoSettings {
    fn default() -> Self {
        let d = RegPsoConfig::new(SearchBox::uniform(1, 0.0, 1.0).expect("unit box"), 18, 0);
        RegPsoSettings {
            swarm_size: d.swarm_size,
            max_iterations: d.max_iterations,
            inertia: d.inertia,
            c1: d.c1,
            c2: d.c2,
            clamp_fraction: d.clamp_fraction,
            stagnation_threshold: d.stagnation_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSettings {
    pub population_size: usize,
    pub elite_count: usize,
    pub crossover_ratio: f64,
    pub mutation_ratio: f64,
    pub max_generations: usize,
}

impl Default for GaSettings {
    fn default() -> Self {
        let d = GaConfig::new(SearchBox::uniform(1, 0.0, 1.0).expect("unit box"), 20, 0);
        GaSettings {
            population_size: d.population_size,
            elite_count: d.elite_count,
            crossover_ratio: d.crossover_ratio,
            mutation_ratio: d.mutation_ratio,
            max_generations: d.max_generations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySettings {
    pub max_generations: usize,
    pub lmi_budget: usize,
    pub refine: bool,
}

impl Default for CertifySettings {
    fn default() -> Self {
        CertifySettings {
            max_generations: crate::bmi_stab::DEFAULT_GENERATIONS,
            lmi_budget: LmiOptions::default().budget,
            refine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub horizon: usize,
    /// Realizations per candidate during the search.
    pub realizations: usize,
    /// Realizations for the final report.
    pub report_realizations: usize,
    pub ref_amplitude: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            horizon: 100,
            realizations: 20,
            report_realizations: 200,
            ref_amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub plant: PlantSpec,
    pub sample_time: f64,
    pub p_tx: f64,
    /// log10 intervals for `(q1..qn, r)`; `[−2, 2]` in every dimension when absent.
    pub weight_bounds: Option<Vec<[f64; 2]>>,
    pub outer: Arm,
    pub regpso: RegPsoSettings,
    pub ga: GaSettings,
    pub certify: CertifySettings,
    pub sim: SimSettings,
    pub penalty_value: f64,
    pub master_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            plant: PlantSpec::default(),
            sample_time: 0.3,
            p_tx: 0.7,
            weight_bounds: None,
            outer: Arm::Regpso,
            regpso: RegPsoSettings::default(),
            ga: GaSettings::default(),
            certify: CertifySettings::default(),
            sim: SimSettings::default(),
            penalty_value: 1e6,
            master_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn discrete_plant(&self) -> Result<DiscretePlant> {
        self.plant.discretize(self.sample_time)
    }

    pub fn search_box(&self, states: usize) -> Result<SearchBox> {
        match &self.weight_bounds {
            None => SearchBox::uniform(states + 1, -2.0, 2.0),
            Some(b) if b.len() != states + 1 => Err(Error::DimensionMismatch(format!(
                "{} weight intervals for {} state weights and one input weight",
                b.len(),
                states
            ))),
            Some(b) => {
                SearchBox::from_intervals(&b.iter().map(|i| (i[0], i[1])).collect::<Vec<_>>())
            }
        }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        let mut opts = CertifyOptions::new(
            self.certify.max_generations,
            derive_seed(self.master_seed, STREAM_CERTIFY),
        );
        opts.lmi = LmiOptions::with_budget(self.certify.lmi_budget);
        opts.refine = self.certify.refine;
        opts
    }

    pub fn regpso_config(&self, bounds: SearchBox) -> RegPsoConfig {
        let s = &self.regpso;
        let mut c = RegPsoConfig::new(
            bounds,
            s.max_iterations,
            derive_seed(self.master_seed, STREAM_OUTER),
        );
        c.swarm_size = s.swarm_size;
        c.inertia = s.inertia;
        c.c1 = s.c1;
        c.c2 = s.c2;
        c.clamp_fraction = s.clamp_fraction;
        c.stagnation_threshold = s.stagnation_threshold;
        c
    }

    pub fn ga_config(&self, bounds: SearchBox) -> GaConfig {
        let s = &self.ga;
        let mut c = GaConfig::new(
            bounds,
            s.max_generations,
            derive_seed(self.master_seed, STREAM_OUTER),
        );
        c.population_size = s.population_size;
        c.elite_count = s.elite_count;
        c.crossover_ratio = s.crossover_ratio;
        c.mutation_ratio = s.mutation_ratio;
        c
    }

    /// Realizations shared by every candidate of the run.
    pub fn search_seeds(&self) -> Vec<u64> {
        realization_seeds(
            derive_seed(self.master_seed, STREAM_REALIZATIONS),
            self.sim.realizations,
        )
    }

    pub fn report_seeds(&self) -> Vec<u64> {
        realization_seeds(
            derive_seed(self.master_seed, STREAM_REPORT),
            self.sim.report_realizations,
        )
    }

    /// Checks everything that can be checked without running the search.
    pub fn validate(&self) -> Result<DiscretePlant> {
        let d = self.discrete_plant()?;
        if !(self.p_tx > 0.0 && self.p_tx < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p_tx must lie in (0, 1), got {}",
                self.p_tx
            )));
        }
        let bounds = self.search_box(d.states())?;
        let budgets = [
            ("regpso.max_iterations", self.regpso.max_iterations),
            ("ga.max_generations", self.ga.max_generations),
            ("certify.max_generations", self.certify.max_generations),
            ("certify.lmi_budget", self.certify.lmi_budget),
            ("sim.horizon", self.sim.horizon),
            ("sim.realizations", self.sim.realizations),
            ("sim.report_realizations", self.sim.report_realizations),
        ];
        for (name, v) in budgets {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.penalty_value.is_finite() && self.penalty_value > 0.0) {
            return Err(Error::InvalidParameter(
                "penalty_value must be positive".into(),
            ));
        }
        if !self.sim.ref_amplitude.is_finite() {
            return Err(Error::InvalidParameter(
                "ref_amplitude must be finite".into(),
            ));
        }
        self.regpso_config(bounds.clone()).validate()?;
        self.ga_config(bounds).validate()?;
        Ok(d)
    }
}

/// `(q1..qn, r)` from log10 coordinates.
pub fn weights_from_log(x: &[f64]) -> Result<LqrWeights> {
    let (q, r) = x.split_at(x.len() - 1);
    LqrWeights::new(q.iter().map(|v| 10f64.powf(*v)).collect(), 10f64.powf(r[0]))
}

/// Gain, certificate and cost of one weight candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub weights: LqrWeights,
    pub k: Option<Matrix>,
    pub certificate: Option<StabilityCertificate>,
    pub cost: Option<CostEstimate>,
    /// Mean cost when certified, otherwise the penalty.
    pub value: f64,
}

fn assess(
    w: &LqrWeights,
    d: &DiscretePlant,
    cfg: &SynthConfig,
    opts: &CertifyOptions,
    seeds: &[u64],
) -> Candidate {
    let mut cand = Candidate {
        weights: w.clone(),
        k: None,
        certificate: None,
        cost: None,
        value: cfg.penalty_value,
    };
    let Ok(design) = solve_dare(d, w) else {
        return cand;
    };
    cand.k = Some(design.k.clone());
    let Ok(stab) = certify_gain(d, &design.k, cfg.p_tx, opts) else {
        return cand;
    };
    cand.certificate = stab.certificate;
    if !stab.certified {
        return cand;
    }
    let s = &cfg.sim;
    if let Ok(cost) =
        expected_itae_with_seeds(d, &design.k, cfg.p_tx, s.ref_amplitude, s.horizon, seeds)
    {
        if cost.mean.is_finite() && cost.mean < cfg.penalty_value {
            cand.value = cost.mean;
        }
        cand.cost = Some(cost);
    }
    cand
}

/// Objective value of `w`: the mean cost over `seeds` for a certified gain,
/// the penalty for anything else.
pub fn evaluate_weights(w: &LqrWeights, cfg: &SynthConfig, seeds: &[u64]) -> f64 {
    match cfg.discrete_plant() {
        Ok(d) => assess(w, &d, cfg, &cfg.certify_options(), seeds).value,
        Err(_) => cfg.penalty_value,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub arm: Arm,
    pub master_seed: u64,
    pub weights: LqrWeights,
    pub k: Matrix,
    pub certificate: StabilityCertificate,
    /// Cost at report fidelity.
    pub expected_cost: CostEstimate,
    /// Best objective value seen by the optimizer.
    pub search_cost: f64,
    /// Best objective value after the initial population and each iteration.
    pub convergence: Vec<f64>,
    pub evaluations: usize,
    pub wall_time: f64,
}

struct OuterRun {
    best_point: Vec<f64>,
    best_value: f64,
    history: Vec<f64>,
    evaluations: usize,
}

/// Runs the configured optimizer and reports the best design.
pub fn synthesize(cfg: &SynthConfig) -> Result<SynthesisResult> {
    let start = Instant::now();
    let d = cfg.validate()?;
    let bounds = cfg.search_box(d.states())?;
    let opts = cfg.certify_options();
    let seeds = cfg.search_seeds();
    let objective = |x: &[f64]| match weights_from_log(x) {
        Ok(w) => assess(&w, &d, cfg, &opts, &seeds).value,
        Err(_) => cfg.penalty_value,
    };
    let run = match cfg.outer {
        Arm::Regpso => {
            let r = regpso_minimize(objective, &cfg.regpso_config(bounds))?;
            OuterRun {
                best_point: r.best_point,
                best_value: r.best_fitness,
                history: r.history,
                evaluations: r.evaluations,
            }
        }
        Arm::Ga => {
            let r = ga_minimize(objective, &cfg.ga_config(bounds), |_| false)?;
            OuterRun {
                best_point: r.best_point,
                best_value: r.best_fitness,
                history: r.history,
                evaluations: r.evaluations,
            }
        }
    };
    if !(run.best_value < cfg.penalty_value) {
        return Err(Error::NoCertifiedDesign(format!(
            "{} evaluations, best point {:?} (log10 weights)",
            run.evaluations, run.best_point
        )));
    }

    let weights = weights_from_log(&run.best_point)?;
    let best = assess(&weights, &d, cfg, &opts, &seeds);
    let (Some(k), Some(cert)) = (best.k, best.certificate) else {
        return Err(Error::NoCertifiedDesign(
            "best candidate did not reproduce".into(),
        ));
    };
    let cl = closed_loop_phi(&d, &k, cfg.p_tx)?;
    let certificate = verify_certificate(&cl, cert.a1, cert.a2, &cert.p, cert.tol_lmi)?;
    if !certificate.is_valid() {
        return Err(Error::NoCertifiedDesign(
            "certificate failed re-verification".into(),
        ));
    }
    let s = &cfg.sim;
    let expected_cost = expected_itae_with_seeds(
        &d,
        &k,
        cfg.p_tx,
        s.ref_amplitude,
        s.horizon,
        &cfg.report_seeds(),
    )?;
    Ok(SynthesisResult {
        arm: cfg.outer,
        master_seed: cfg.master_seed,
        weights,
        k,
        certificate,
        expected_cost,
        search_cost: run.best_value,
        convergence: run.history,
        evaluations: run.evaluations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub arm: Arm,
    pub run: usize,
    pub master_seed: u64,
    /// Best objective value of the run, or the penalty for a failed run.
    pub cost: f64,
    pub result: Option<SynthesisResult>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStatistics {
    pub arm: Arm,
    pub mean: f64,
    pub std_dev: f64,
    pub best: f64,
    pub worst: f64,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub stats: Vec<ArmStatistics>,
    pub runs: Vec<RunOutcome>,
}

/// Master seed of run `index`; identical for every arm so the arms see the
/// same realizations.
pub fn run_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, 1000 + index as u64)
}

/// Repeats [`synthesize`] `n_runs` times per arm.
pub fn run_statistics(cfg: &SynthConfig, arms: &[Arm], n_runs: usize) -> Result<Comparison> {
    run_statistics_with(cfg, arms, n_runs, synthesize)
}

/// Same as [`run_statistics`] with a custom single-run driver.
pub fn run_statistics_with<F>(
    cfg: &SynthConfig,
    arms: &[Arm],
    n_runs: usize,
    runner: F,
) -> Result<Comparison>
where
    F: Fn(&SynthConfig) -> Result<SynthesisResult> + Sync,
{
    if n_runs < 2 {
        return Err(Error::InvalidParameter(
            "need at least two runs per arm".into(),
        ));
    }
    cfg.validate()?;
    let jobs: Vec<(Arm, usize)> = arms
        .iter()
        .flat_map(|&a| (0..n_runs).map(move |i| (a, i)))
        .collect();
    let runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(arm, run)| {
            let mut c = cfg.clone();
            c.outer = arm;
            c.master_seed = run_seed(cfg.master_seed, run);
            let (cost, result, failure) = match runner(&c) {
                Ok(r) => (r.search_cost, Some(r), None),
                Err(e) => (cfg.penalty_value, None, Some(e.to_string())),
            };
            RunOutcome {
                arm,
                run,
                master_seed: c.master_seed,
                cost,
                result,
                failure,
            }
        })
        .collect();
    let stats = arms
        .iter()
        .map(|&arm| {
            let mine: Vec<&RunOutcome> = runs.iter().filter(|r| r.arm == arm).collect();
            let costs: Vec<f64> = mine.iter().map(|r| r.cost).collect();
            let (mean, std_dev) = mean_std(&costs);
            ArmStatistics {
                arm,
                mean,
                std_dev,
                best: costs.iter().copied().fold(f64::INFINITY, f64::min),
                worst: costs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                runs: costs.len(),
                failures: mine.iter().filter(|r| r.failure.is_some()).count(),
            }
        })
        .collect();
    Ok(Comparison { stats, runs })
}
