//! Discrete-time LQR through the algebraic Riccati equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, solve_spd, spectral_radius_estimate, Matrix};
use crate::plant::DiscretePlant;

pub const DARE_MAX_ITERATIONS: usize = 10_000;
pub const DARE_STEP_TOL: f64 = 1e-12;
pub const DARE_RESIDUAL_TOL: f64 = 1e-9;

/// Diagonal state weights and a scalar control weight (`R = r·I`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    pub q_diag: Vec<f64>,
    pub r_value: f64,
}

impl LqrWeights {
    pub fn new(q_diag: Vec<f64>, r_value: f64) -> Result<Self> {
        if q_diag.is_empty() || q_diag.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(Error::InvalidParameter(
                "state weights must be finite and non-negative".into(),
            ));
        }
        if !q_diag.iter().any(|&q| q > 0.0) {
            return Err(Error::InvalidParameter(
                "at least one state weight must be positive".into(),
            ));
        }
        if !(r_value > 0.0) || !r_value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "control weight must be positive, got {r_value}"
            )));
        }
        Ok(LqrWeights { q_diag, r_value })
    }

    pub fn q(&self) -> Matrix {
        Matrix::from_diag(&self.q_diag)
    }

    pub fn r(&self, inputs: usize) -> Matrix {
        Matrix::identity(inputs).scale(self.r_value)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqrDesign {
    pub weights: LqrWeights,
    /// Stabilizing Riccati solution.
    pub p: Matrix,
    pub k: Matrix,
    /// Estimate of `ρ(G − HK)`.
    pub nominal_spectral_radius: f64,
    pub iterations: usize,
    /// `‖P − Ric(P)‖_F` at the returned solution.
    pub residual: f64,
}

/// One application of the Riccati map
/// `Q + GᵀPG − GᵀPH (R + HᵀPH)⁻¹ HᵀPG`, re-symmetrized.
pub fn riccati_map(p: &Matrix, d: &DiscretePlant, w: &LqrWeights) -> Result<Matrix> {
    let gt = d.g.transpose();
    let pg = p * &d.g;
    let pg_t_h = &gt * &(p * &d.h);
    let s = (&w.r(d.inputs()) + &(&d.h.transpose() * &(p * &d.h))).symmetrize();
    let x = solve_spd(&s, &(&d.h.transpose() * &pg))?;
    let next = &(&w.q() + &(&gt * &pg)) - &(&pg_t_h * &x);
    Ok(next.symmetrize())
}

/// Solves the DARE by fixed-point iteration from `P₀ = Q`.
pub fn solve_dare(d: &DiscretePlant, w: &LqrWeights) -> Result<LqrDesign> {
    let n = d.states();
    if w.q_diag.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} state weights for a {n}-state plant",
            w.q_diag.len()
        )));
    }
    let mut p = w.q();
    let mut last_step = f64::INFINITY;
    let mut converged_at = None;
    for it in 1..=DARE_MAX_ITERATIONS {
        let next = riccati_map(&p, d, w).map_err(|_| Error::DareNotConverged {
            iterations: it,
            residual: last_step,
        })?;
        last_step = (&next - &p).norm_fro();
        p = next;
        if !p.is_finite() {
            break;
        }
        if last_step <= DARE_STEP_TOL * (1.0 + p.norm_fro()) {
            converged_at = Some(it);
            break;
        }
    }
    let Some(iterations) = converged_at else {
        return Err(Error::DareNotConverged {
            iterations: DARE_MAX_ITERATIONS,
            residual: last_step,
        });
    };

    let residual = (&p - &riccati_map(&p, d, w)?).norm_fro();
    if residual > DARE_RESIDUAL_TOL * (1.0 + p.norm_fro()) || min_eigenvalue(&p)? < -1e-10 {
        return Err(Error::DareNotConverged {
            iterations,
            residual,
        });
    }
    let k = lqr_gain(&p, d, w)?;
    let rho = spectral_radius_estimate(&(&d.g - &(&d.h * &k)))?;
    if !(rho < 1.0) {
        return Err(Error::UnstableClosedLoop(rho));
    }
    Ok(LqrDesign {
        weights: w.clone(),
        p,
        k,
        nominal_spectral_radius: rho,
        iterations,
        residual,
    })
}

/// `K = (R + HᵀPH)⁻¹ HᵀPG`.
pub fn lqr_gain(p: &Matrix, d: &DiscretePlant, w: &LqrWeights) -> Result<Matrix> {
    let n = d.states();
    if p.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Riccati solution must be {n}x{n}"
        )));
    }
    let ht = d.h.transpose();
    let s = (&w.r(d.inputs()) + &(&ht * &(p * &d.h))).symmetrize();
    solve_spd(&s, &(&ht * &(p * &d.g)))
}

/// Optimal infinite-horizon cost `½ x₀ᵀ P x₀`.
pub fn nominal_cost(p: &Matrix, x0: &[f64]) -> Result<f64> {
    if !p.is_square() || p.rows() != x0.len() {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} against a {}x{} matrix",
            x0.len(),
            p.rows(),
            p.cols()
        )));
    }
    Ok(0.5 * p.quad_form(x0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{discretize_zoh, ContinuousPlant};

    fn servo() -> DiscretePlant {
        discretize_zoh(&ContinuousPlant::servo_example(), 0.3).unwrap()
    }

    #[test]
    fn zero_transition_collapses_to_q() {
        let d = DiscretePlant::new(
            Matrix::zeros(2, 2),
            Matrix::column(&[0.3, 1.0]),
            Matrix::row(&[1.0, 0.0]),
            0.1,
        )
        .unwrap();
        let w = LqrWeights::new(vec![2.0, 5.0], 0.7).unwrap();
        let p = riccati_map(&w.q(), &d, &w).unwrap();
        assert_eq!(p, w.q());
        // G = 0 is already stable, K = 0.
        let design = solve_dare(&d, &w).unwrap();
        assert_eq!(design.p, w.q());
        assert_eq!(design.k.max_abs(), 0.0);
    }

    #[test]
    fn gain_degenerate_cases() {
        let d = servo();
        let w = LqrWeights::new(vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(
            lqr_gain(&Matrix::zeros(2, 2), &d, &w).unwrap().max_abs(),
            0.0
        );
        let mut no_input = d.clone();
        no_input.h = Matrix::zeros(2, 1);
        assert_eq!(
            lqr_gain(&Matrix::identity(2), &no_input, &w)
                .unwrap()
                .max_abs(),
            0.0
        );
    }

    // Frozen values from an independent DARE solver (SciPy's Schur-based
    // solve_discrete_are) on the same ZOH model.
    #[test]
    fn servo_gains_match_reference_solver() {
        let d = servo();
        let cases = [
            (vec![0.29495, 1.37137], 0.25781, [1.003356, 4.091434]),
            (vec![11.87689, 14.33702], 10.58286, [0.999914, 3.731858]),
        ];
        for (q, r, want) in cases {
            let design = solve_dare(&d, &LqrWeights::new(q, r).unwrap()).unwrap();
            for (got, want) in design.k.as_slice().iter().zip(want) {
                assert!((got - want).abs() < 2e-6, "{got} vs {want}");
            }
            assert!(design.nominal_spectral_radius < 1.0);
        }
    }

    #[test]
    fn nominal_cost_examples() {
        assert_eq!(
            nominal_cost(&Matrix::identity(2), &[0.0, 0.0]).unwrap(),
            0.0
        );
        assert_eq!(
            nominal_cost(&Matrix::identity(2), &[3.0, 4.0]).unwrap(),
            12.5
        );
        assert!(nominal_cost(&Matrix::identity(2), &[1.0]).is_err());
    }

    #[test]
    fn weight_validation() {
        assert!(LqrWeights::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(LqrWeights::new(vec![-1.0, 1.0], 1.0).is_err());
        assert!(LqrWeights::new(vec![1.0], 0.0).is_err());
        assert!(LqrWeights::new(vec![0.0, 1.0], 1.0).is_ok());
    }

    #[test]
    fn wrong_weight_length() {
        let w = LqrWeights::new(vec![1.0], 1.0).unwrap();
        assert!(matches!(
            solve_dare(&servo(), &w),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
