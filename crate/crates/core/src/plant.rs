//! Continuous and sampled LTI plants, zero-order-hold discretization, and the
//! two-mode closed loop seen through a lossy sensor link.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm, Matrix};

/// `ẋ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousPlant {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl ContinuousPlant {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        check_dims(&a, &b, &c)?;
        Ok(ContinuousPlant { a, b, c })
    }

    /// Integrator in series with a first-order lag:
    /// `ẋ₁ = x₂`, `ẋ₂ = −0.1 x₂ + 0.1 u`, `y = x₁`.
    pub fn servo_example() -> Self {
        ContinuousPlant {
            a: Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, -0.1]]).expect("static"),
            b: Matrix::column(&[0.0, 0.1]),
            c: Matrix::row(&[1.0, 0.0]),
        }
    }

    pub fn states(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }
}

/// `x(k+1) = G x(k) + H u(k)`, `y(k) = C x(k)`, sampled every `sample_time` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePlant {
    pub g: Matrix,
    pub h: Matrix,
    pub c: Matrix,
    pub sample_time: f64,
}

impl DiscretePlant {
    pub fn new(g: Matrix, h: Matrix, c: Matrix, sample_time: f64) -> Result<Self> {
        check_dims(&g, &h, &c)?;
        check_sample_time(sample_time)?;
        Ok(DiscretePlant {
            g,
            h,
            c,
            sample_time,
        })
    }

    pub fn states(&self) -> usize {
        self.g.rows()
    }

    pub fn inputs(&self) -> usize {
        self.h.cols()
    }

    pub fn outputs(&self) -> usize {
        self.c.rows()
    }
}

fn check_dims(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "input matrix has {} rows, state dimension is {n}",
            b.rows()
        )));
    }
    if c.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "output matrix has {} columns, state dimension is {n}",
            c.cols()
        )));
    }
    Ok(())
}

fn check_sample_time(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "sample time must be positive, got {h}"
        )))
    }
}

/// Zero-order-hold discretization.
///
/// `G` and `H` are read off the exponential of the augmented generator
/// `[[A, B], [0, 0]]·h`, which stays valid when `A` is singular.
pub fn discretize_zoh(plant: &ContinuousPlant, h: f64) -> Result<DiscretePlant> {
    check_sample_time(h)?;
    let n = plant.states();
    let m = plant.inputs();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.set_block(0, 0, &plant.a);
    aug.set_block(0, n, &plant.b);
    let e = expm(&aug, h)?;
    Ok(DiscretePlant {
        g: e.block(0, 0, n, n),
        h: e.block(0, n, n, m),
        c: plant.c.clone(),
        sample_time: h,
    })
}

/// The closed loop in its two network modes.
///
/// The stacked state is `(x, x̄)`, the plant state and the state last received by
/// the controller. `phi1` applies when the measurement arrives, `phi2` when it
/// is lost and the controller keeps its previous copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedClosedLoop {
    pub phi1: Matrix,
    pub phi2: Matrix,
    /// Probability that a measurement is delivered.
    pub p_tx: f64,
}

impl SwitchedClosedLoop {
    /// Builds a loop directly from its mode matrices.
    pub fn from_modes(phi1: Matrix, phi2: Matrix, p_tx: f64) -> Result<Self> {
        check_probability(p_tx)?;
        if !phi1.is_square() || phi1.shape() != phi2.shape() {
            return Err(Error::DimensionMismatch(
                "mode matrices must be square and of equal size".into(),
            ));
        }
        Ok(SwitchedClosedLoop { phi1, phi2, p_tx })
    }

    pub fn dim(&self) -> usize {
        self.phi1.rows()
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "transmission probability must lie in (0, 1), got {p}"
        )))
    }
}

/// `Φ1 = [[G, −HK], [G, −HK]]` and `Φ2 = [[G, −HK], [0, I]]`.
pub fn closed_loop_phi(d: &DiscretePlant, k: &Matrix, p_tx: f64) -> Result<SwitchedClosedLoop> {
    check_probability(p_tx)?;
    let n = d.states();
    if k.shape() != (d.inputs(), n) {
        return Err(Error::DimensionMismatch(format!(
            "gain must be {}x{n}, got {}x{}",
            d.inputs(),
            k.rows(),
            k.cols()
        )));
    }
    let neg_hk = -&(&d.h * k);
    let phi1 = Matrix::from_blocks(&d.g, &neg_hk, &d.g, &neg_hk)?;
    let phi2 = Matrix::from_blocks(&d.g, &neg_hk, &Matrix::zeros(n, n), &Matrix::identity(n))?;
    Ok(SwitchedClosedLoop { phi1, phi2, p_tx })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrator_bank() {
        let p = ContinuousPlant::new(
            Matrix::zeros(2, 2),
            Matrix::identity(2),
            Matrix::identity(2),
        )
        .unwrap();
        let d = discretize_zoh(&p, 1.0).unwrap();
        assert!((&d.g - &Matrix::identity(2)).max_abs() < 1e-15);
        assert!((&d.h - &Matrix::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn scalar_lag_at_ln2() {
        let p = ContinuousPlant::new(
            Matrix::from_diag(&[-1.0]),
            Matrix::from_diag(&[1.0]),
            Matrix::from_diag(&[1.0]),
        )
        .unwrap();
        let d = discretize_zoh(&p, std::f64::consts::LN_2).unwrap();
        assert!((d.g[(0, 0)] - 0.5).abs() < 1e-9);
        assert!((d.h[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_positive_sample_time() {
        let p = ContinuousPlant::servo_example();
        assert!(discretize_zoh(&p, 0.0).is_err());
        assert!(discretize_zoh(&p, -0.3).is_err());
    }

    #[test]
    fn zero_gain_modes() {
        let d = DiscretePlant::new(
            Matrix::identity(1),
            Matrix::identity(1),
            Matrix::identity(1),
            1.0,
        )
        .unwrap();
        let cl = closed_loop_phi(&d, &Matrix::zeros(1, 1), 0.5).unwrap();
        assert_eq!(cl.phi1.as_slice(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(cl.phi2.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn mode_structure_for_servo_gain() {
        let d = discretize_zoh(&ContinuousPlant::servo_example(), 0.3).unwrap();
        let k = Matrix::row(&[1.00337, 4.09011]);
        let cl = closed_loop_phi(&d, &k, 0.7).unwrap();
        let neg_hk = -&(&d.h * &k);
        assert_eq!(cl.phi1.block(0, 0, 2, 2), d.g);
        assert_eq!(cl.phi1.block(0, 2, 2, 2), neg_hk);
        assert_eq!(cl.phi1.block(0, 0, 2, 4), cl.phi1.block(2, 0, 2, 4));
        assert_eq!(cl.phi2.block(2, 0, 2, 2), Matrix::zeros(2, 2));
        assert_eq!(cl.phi2.block(2, 2, 2, 2), Matrix::identity(2));
    }

    #[test]
    fn closed_loop_validation() {
        let d = discretize_zoh(&ContinuousPlant::servo_example(), 0.3).unwrap();
        assert!(closed_loop_phi(&d, &Matrix::row(&[1.0]), 0.7).is_err());
        assert!(closed_loop_phi(&d, &Matrix::row(&[1.0, 1.0]), 1.0).is_err());
        assert!(closed_loop_phi(&d, &Matrix::row(&[1.0, 1.0]), 0.0).is_err());
    }
}
