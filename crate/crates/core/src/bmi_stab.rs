//! Stability certification of a feedback gain under packet loss.
//!
//! The decay scalars `(a1, a2)` are searched by the genetic algorithm; for each
//! pair the Lyapunov inequalities become linear in `P` and go to the LMI search.
//! A pair is accepted once `P` is found and `a1^p · a2^(1−p) > 1`.

use serde::{Deserialize, Serialize};

use crate::bounds::SearchBox;
use crate::error::Result;
use crate::ga::{ga_minimize, GaConfig};
use crate::linalg::Matrix;
use crate::lmi::{
    decay_product, search_lyapunov, verify_certificate, LmiOptions, StabilityCertificate,
};
use crate::plant::{closed_loop_phi, DiscretePlant, SwitchedClosedLoop};

pub const A1_BOUNDS: (f64, f64) = (1.0 + 1e-6, 1.5);
pub const A2_BOUNDS: (f64, f64) = (0.5, 1.0);
pub const DEFAULT_GENERATIONS: usize = 50;

/// Search box for `(a1, a2)`.
pub fn decay_box() -> SearchBox {
    SearchBox::from_intervals(&[A1_BOUNDS, A2_BOUNDS]).expect("static bounds are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub ga: GaConfig,
    pub lmi: LmiOptions,
    /// Keep improving the decay product after the first accepted pair.
    pub refine: bool,
}

impl CertifyOptions {
    pub fn new(max_generations: usize, seed: u64) -> Self {
        CertifyOptions {
            ga: GaConfig::new(decay_box(), max_generations, seed),
            lmi: LmiOptions::default(),
            refine: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityResult {
    pub certified: bool,
    pub certificate: Option<StabilityCertificate>,
    pub generations_used: usize,
    pub evaluations: usize,
}

/// `1 − a1^p a2^(1−p)` when a Lyapunov matrix exists at `(a1, a2)`, otherwise
/// `1 + degree of infeasibility`. Negative values mean a stability proof.
pub fn bmi_fitness(a1: f64, a2: f64, cl: &SwitchedClosedLoop, lmi: &LmiOptions) -> f64 {
    let search = search_lyapunov(cl, a1, a2, lmi);
    if search.p.is_some() {
        1.0 - decay_product(a1, a2, cl.p_tx)
    } else {
        1.0 + search.degree_of_infeasibility
    }
}

/// Certifies `k` on the switched closed loop of `d` at delivery probability `p_tx`.
pub fn certify_gain(
    d: &DiscretePlant,
    k: &Matrix,
    p_tx: f64,
    opts: &CertifyOptions,
) -> Result<StabilityResult> {
    let cl = closed_loop_phi(d, k, p_tx)?;
    certify_loop(&cl, opts)
}

/// Same as [`certify_gain`] for an already assembled closed loop.
pub fn certify_loop(cl: &SwitchedClosedLoop, opts: &CertifyOptions) -> Result<StabilityResult> {
    let fitness = |x: &[f64]| bmi_fitness(x[0], x[1], cl, &opts.lmi);
    let run = if opts.refine {
        ga_minimize(fitness, &opts.ga, |_| false)?
    } else {
        ga_minimize(fitness, &opts.ga, |f| f < 0.0)?
    };
    let mut result = StabilityResult {
        certified: false,
        certificate: None,
        generations_used: run.generations_used,
        evaluations: run.evaluations,
    };
    if run.best_fitness < 0.0 {
        let (a1, a2) = (run.best_point[0], run.best_point[1]);
        if let Some(p) = search_lyapunov(cl, a1, a2, &opts.lmi).p {
            let cert = verify_certificate(cl, a1, a2, &p, opts.lmi.tol_lmi)?;
            result.certified = cert.is_valid();
            result.certificate = Some(cert);
        }
    }
    Ok(result)
}
