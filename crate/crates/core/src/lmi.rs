//! Lyapunov inequalities of the two-mode closed loop for fixed decay scalars.
//!
//! For given `(a1, a2)` the conditions
//!
//! ```text
//! P ⪰ μ I,   a1⁻² P − Φ1ᵀ P Φ1 ⪰ 0,   a2⁻² P − Φ2ᵀ P Φ2 ⪰ 0
//! ```
//! are linear in `P`. [`verify_certificate`] checks them exactly from
//! eigenvalues; [`search_lyapunov`] looks for such a `P` with a small
//! log-barrier interior-point method that maximizes the common margin `t` of
//! both mode inequalities over `P ⪰ μI` with `trace(P) = dim`. A positive `t`
//! is a witness; a negative optimum measures how far the instance is from
//! feasible. Only the verifier decides validity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Matrix, SYMMETRY_TOL};
use crate::plant::SwitchedClosedLoop;

/// Positivity floor on `P`, relative to `trace(P)/dim`.
pub const POSITIVITY_FLOOR: f64 = 1e-6;
/// Default tolerance on the two mode margins for computed certificates.
pub const DEFAULT_TOL_LMI: f64 = 1e-8;

/// A candidate `(a1, a2, P)` together with its exactly evaluated margins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub a1: f64,
    pub a2: f64,
    pub p_tx: f64,
    /// Lyapunov matrix of `V(x, x̄) = (x, x̄)ᵀ P (x, x̄)`.
    pub p: Matrix,
    /// `λmin(P) − POSITIVITY_FLOOR·trace(P)/dim`.
    pub margin_p: f64,
    /// `λmin(a1⁻² P − Φ1ᵀ P Φ1)`.
    pub margin1: f64,
    /// `λmin(a2⁻² P − Φ2ᵀ P Φ2)`.
    pub margin2: f64,
    /// `a1^p_tx · a2^(1 − p_tx)`.
    pub decay_product: f64,
    pub tol_lmi: f64,
}

impl StabilityCertificate {
    /// The three matrix inequalities hold.
    pub fn lmis_hold(&self) -> bool {
        self.margin_p >= 0.0 && self.margin1 >= -self.tol_lmi && self.margin2 >= -self.tol_lmi
    }

    /// Matrix inequalities hold and the average decay exceeds one.
    pub fn is_valid(&self) -> bool {
        self.lmis_hold() && self.decay_product > 1.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        crate::linalg::sym_eig(&self.p)
            .map(|e| e.eigenvalues)
            .unwrap_or_default()
    }
}

/// `a1^p · a2^(1−p)`.
pub fn decay_product(a1: f64, a2: f64, p_tx: f64) -> f64 {
    a1.powf(p_tx) * a2.powf(1.0 - p_tx)
}

/// Tolerance for matrices printed to four decimals: `1e-2·‖P‖₂`.
pub fn rounded_print_tolerance(p: &Matrix) -> f64 {
    1e-2 * p.norm_2()
}

fn stein_residual(p: &Matrix, phi: &Matrix, a: f64) -> Matrix {
    let lhs = p.scale(a.powi(-2));
    let rhs = &(&phi.transpose() * p) * phi;
    (&lhs - &rhs).symmetrize()
}

/// Evaluates every margin of `(a1, a2, P)` on the given closed loop.
pub fn verify_certificate(
    cl: &SwitchedClosedLoop,
    a1: f64,
    a2: f64,
    p: &Matrix,
    tol_lmi: f64,
) -> Result<StabilityCertificate> {
    let dim = cl.dim();
    if p.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov matrix must be {dim}x{dim}, got {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    let asym = p.relative_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "decay scalars must be positive, got ({a1}, {a2})"
        )));
    }
    let p = p.symmetrize();
    let floor = POSITIVITY_FLOOR * p.trace() / dim as f64;
    Ok(StabilityCertificate {
        a1,
        a2,
        p_tx: cl.p_tx,
        margin_p: min_eigenvalue(&p)? - floor,
        margin1: min_eigenvalue(&stein_residual(&p, &cl.phi1, a1))?,
        margin2: min_eigenvalue(&stein_residual(&p, &cl.phi2, a2))?,
        decay_product: decay_product(a1, a2, cl.p_tx),
        tol_lmi,
        p,
    })
}

/// Exact worst violation `φ(P)` of the three inequalities (≤ 0 when they hold).
pub fn max_violation(cl: &SwitchedClosedLoop, a1: f64, a2: f64, p: &Matrix) -> Result<f64> {
    let c = verify_certificate(cl, a1, a2, p, 0.0)?;
    Ok(-(c.margin_p.min(c.margin1).min(c.margin2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiOptions {
    /// Total Newton steps allowed for one search.
    pub budget: usize,
    pub tol_lmi: f64,
    /// Once an instance is known to be infeasible the search continues until the
    /// optimal margin is bracketed to this relative accuracy.
    pub infeasibility_rel_tol: f64,
}

impl Default for LmiOptions {
    fn default() -> Self {
        LmiOptions {
            budget: 300,
            tol_lmi: DEFAULT_TOL_LMI,
            infeasibility_rel_tol: 1e-3,
        }
    }
}

impl LmiOptions {
    pub fn with_budget(budget: usize) -> Self {
        LmiOptions {
            budget,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmiSearch {
    /// A verified Lyapunov matrix, normalized to `trace(P) = dim`.
    pub p: Option<Matrix>,
    /// Best `max(0, φ(P))` reached; zero when `p` is present.
    pub degree_of_infeasibility: f64,
    pub newton_steps: usize,
}

/// Searches for `P` satisfying both mode inequalities at `(a1, a2)`.
///
/// Returns a matrix only after [`verify_certificate`] accepts it; `None` means
/// nothing was found within the budget and is not a proof of infeasibility.
pub fn find_feasible_p(cl: &SwitchedClosedLoop, a1: f64, a2: f64, budget: usize) -> Option<Matrix> {
    search_lyapunov(cl, a1, a2, &LmiOptions::with_budget(budget)).p
}

/// Smallest worst-case violation found by the search; zero when feasible.
pub fn degree_of_infeasibility(cl: &SwitchedClosedLoop, a1: f64, a2: f64, budget: usize) -> f64 {
    search_lyapunov(cl, a1, a2, &LmiOptions::with_budget(budget)).degree_of_infeasibility
}

pub fn search_lyapunov(cl: &SwitchedClosedLoop, a1: f64, a2: f64, opts: &LmiOptions) -> LmiSearch {
    if !(a1 > 0.0 && a2 > 0.0) || !a1.is_finite() || !a2.is_finite() {
        return LmiSearch {
            p: None,
            degree_of_infeasibility: f64::INFINITY,
            newton_steps: 0,
        };
    }
    let mut problem = BarrierProblem::new(cl, a1, a2);
    problem.run(cl, a1, a2, opts)
}

/// `F_i(z) = C_i + Σ_k z_k A_ik`, with `z = (y, t)` and `P(y) = I + Σ y_k B_k`
/// over a trace-free symmetric basis. The two mode inequalities are shifted by
/// `−t I`; the positivity floor on `P` is kept as a hard constraint so the
/// optimal margin is monotone in the decay scalars.
struct BarrierProblem {
    dim: usize,
    nvars: usize,
    /// Trace-free symmetric basis, flattened row-major.
    basis: Vec<Vec<f64>>,
    constant: [Vec<f64>; 3],
    coeffs: [Vec<Vec<f64>>; 3],
    ws: Workspace,
}

struct Workspace {
    f: Vec<f64>,
    chol: Vec<f64>,
    finv: Vec<f64>,
    w: Vec<Vec<f64>>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl BarrierProblem {
    fn new(cl: &SwitchedClosedLoop, a1: f64, a2: f64) -> Self {
        let dim = cl.dim();
        let mut basis_mats = Vec::new();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let mut b = Matrix::zeros(dim, dim);
                b[(i, j)] = 1.0;
                b[(j, i)] = 1.0;
                basis_mats.push(b);
            }
        }
        for i in 0..dim - 1 {
            let mut b = Matrix::zeros(dim, dim);
            b[(i, i)] = 1.0;
            b[(dim - 1, dim - 1)] = -1.0;
            basis_mats.push(b);
        }
        let nvars = basis_mats.len() + 1;
        let ops = |s: &Matrix| -> [Matrix; 3] {
            [
                stein_residual(s, &cl.phi1, a1),
                stein_residual(s, &cl.phi2, a2),
                s.clone(),
            ]
        };
        let eye = Matrix::identity(dim);
        let [c1, c2, c3] = ops(&eye);
        let c3 = &c3 - &eye.scale(POSITIVITY_FLOOR);
        let constant = [c1, c2, c3].map(|m| m.as_slice().to_vec());
        let mut coeffs: [Vec<Vec<f64>>; 3] = Default::default();
        for b in &basis_mats {
            for (dst, m) in coeffs.iter_mut().zip(ops(b)) {
                dst.push(m.as_slice().to_vec());
            }
        }
        // the margin variable relaxes only the two mode inequalities; P ⪰ μI stays hard
        let neg_eye = eye.scale(-1.0).as_slice().to_vec();
        coeffs[0].push(neg_eye.clone());
        coeffs[1].push(neg_eye);
        coeffs[2].push(vec![0.0; dim * dim]);
        let sq = dim * dim;
        BarrierProblem {
            dim,
            nvars,
            basis: basis_mats.iter().map(|b| b.as_slice().to_vec()).collect(),
            constant,
            coeffs,
            ws: Workspace {
                f: vec![0.0; sq],
                chol: vec![0.0; sq],
                finv: vec![0.0; sq],
                w: vec![vec![0.0; sq]; nvars],
                grad: vec![0.0; nvars],
                hess: vec![0.0; nvars * nvars],
            },
        }
    }

    fn lyapunov_matrix(&self, z: &[f64]) -> Matrix {
        let n = self.dim;
        let mut p = Matrix::identity(n).as_slice().to_vec();
        for (b, &y) in self.basis.iter().zip(z) {
            for (pv, bv) in p.iter_mut().zip(b) {
                *pv += y * bv;
            }
        }
        Matrix::from_vec_unchecked(n, n, p)
    }

    fn assemble(&mut self, which: usize, z: &[f64]) {
        let f = &mut self.ws.f;
        f.copy_from_slice(&self.constant[which]);
        for (a, &zk) in self.coeffs[which].iter().zip(z) {
            if zk == 0.0 {
                continue;
            }
            for (fv, av) in f.iter_mut().zip(a) {
                *fv += zk * av;
            }
        }
    }

    /// `−Σ log det F_i(z)`, or `None` outside the domain.
    fn barrier(&mut self, z: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for which in 0..3 {
            self.assemble(which, z);
            self.ws.chol.copy_from_slice(&self.ws.f);
            total -= chol_logdet(self.dim, &mut self.ws.chol)?;
        }
        Some(total)
    }

    /// Fills gradient and Hessian of the barrier term; returns its value.
    fn derivatives(&mut self, z: &[f64]) -> Option<f64> {
        let n = self.dim;
        let nv = self.nvars;
        self.ws.grad.iter_mut().for_each(|g| *g = 0.0);
        self.ws.hess.iter_mut().for_each(|h| *h = 0.0);
        let mut value = 0.0;
        for which in 0..3 {
            self.assemble(which, z);
            self.ws.chol.copy_from_slice(&self.ws.f);
            value -= chol_logdet(n, &mut self.ws.chol)?;
            chol_inverse(n, &self.ws.chol, &mut self.ws.finv);
            for k in 0..nv {
                let a = &self.coeffs[which][k];
                let w = &mut self.ws.w[k];
                matmul_into(n, &self.ws.finv, a, w);
                let tr: f64 = (0..n).map(|i| w[i * n + i]).sum();
                self.ws.grad[k] -= tr;
            }
            for k in 0..nv {
                for l in k..nv {
                    let (wk, wl) = (&self.ws.w[k], &self.ws.w[l]);
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += wk[i * n + j] * wl[j * n + i];
                        }
                    }
                    self.ws.hess[k * nv + l] += s;
                    if l != k {
                        self.ws.hess[l * nv + k] += s;
                    }
                }
            }
        }
        Some(value)
    }

    fn run(&mut self, cl: &SwitchedClosedLoop, a1: f64, a2: f64, opts: &LmiOptions) -> LmiSearch {
        let nv = self.nvars;
        let t_index = nv - 1;
        let barrier_degree = 3.0 * self.dim as f64;

        let mut z = vec![0.0; nv];
        let start_margin = self.constant[..2]
            .iter()
            .map(|c| {
                min_eigenvalue(&Matrix::from_vec_unchecked(self.dim, self.dim, c.clone()))
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .fold(f64::INFINITY, f64::min);
        z[t_index] = start_margin - 1.0;

        let mut tau = 1.0;
        let mut steps = 0;
        let mut dz = vec![0.0; nv];
        let mut trial = vec![0.0; nv];
        let mut hess_mat = Matrix::zeros(nv, nv);

        'outer: loop {
            // centering
            loop {
                if steps >= opts.budget {
                    break 'outer;
                }
                steps += 1;
                let Some(bar) = self.derivatives(&z) else {
                    break 'outer;
                };
                let f0 = -tau * z[t_index] + bar;
                self.ws.grad[t_index] -= tau;
                for (dst, &h) in hess_mat.as_mut_slice().iter_mut().zip(&self.ws.hess) {
                    *dst = h;
                }
                let rhs = Matrix::column(&self.ws.grad.iter().map(|g| -g).collect::<Vec<_>>());
                let step = match crate::linalg::solve_spd(&hess_mat, &rhs) {
                    Ok(s) => s,
                    Err(_) => {
                        for i in 0..nv {
                            hess_mat[(i, i)] += 1e-10 * (1.0 + hess_mat[(i, i)].abs());
                        }
                        match crate::linalg::solve_spd(&hess_mat, &rhs) {
                            Ok(s) => s,
                            Err(_) => break 'outer,
                        }
                    }
                };
                dz.copy_from_slice(step.as_slice());
                let slope: f64 = self.ws.grad.iter().zip(&dz).map(|(g, d)| g * d).sum();
                if -slope / 2.0 <= 1e-9 {
                    break;
                }
                let mut s = 1.0;
                let mut accepted = false;
                for _ in 0..60 {
                    for i in 0..nv {
                        trial[i] = z[i] + s * dz[i];
                    }
                    if let Some(b) = self.barrier(&trial) {
                        if -tau * trial[t_index] + b <= f0 + 0.25 * s * slope {
                            accepted = true;
                            break;
                        }
                    }
                    s *= 0.5;
                }
                if !accepted {
                    break;
                }
                z.copy_from_slice(&trial);
                if z[t_index] > 0.0 {
                    if let Some(p) = self.accept(cl, a1, a2, &z, opts.tol_lmi) {
                        return LmiSearch {
                            p: Some(p),
                            degree_of_infeasibility: 0.0,
                            newton_steps: steps,
                        };
                    }
                }
            }

            let t = z[t_index];
            let gap = barrier_degree / tau;
            if t + gap < 0.0 && gap <= opts.infeasibility_rel_tol * t.abs() {
                break;
            }
            if gap < 1e-13 {
                break;
            }
            tau *= 20.0;
        }

        let p = self.lyapunov_matrix(&z);
        let degree = max_violation(cl, a1, a2, &p)
            .map(|v| v.max(0.0))
            .unwrap_or(f64::INFINITY);
        LmiSearch {
            p: None,
            degree_of_infeasibility: degree,
            newton_steps: steps,
        }
    }

    fn accept(
        &self,
        cl: &SwitchedClosedLoop,
        a1: f64,
        a2: f64,
        z: &[f64],
        tol: f64,
    ) -> Option<Matrix> {
        let p = self.lyapunov_matrix(z);
        let cert = verify_certificate(cl, a1, a2, &p, tol).ok()?;
        cert.lmis_hold().then_some(cert.p)
    }
}

/// In-place Cholesky of a row-major SPD matrix; returns `log det` or `None`.
fn chol_logdet(n: usize, a: &mut [f64]) -> Option<f64> {
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        a[j * n + j] = djj;
        logdet += 2.0 * djj.ln();
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / djj;
        }
    }
    Some(logdet)
}

/// Inverse from a Cholesky factor stored in the lower triangle of `l`.
fn chol_inverse(n: usize, l: &[f64], out: &mut [f64]) {
    for col in 0..n {
        // forward: L y = e_col
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i * n + k] * out[k * n + col];
            }
            out[i * n + col] = s / l[i * n + i];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = out[i * n + col];
            for k in (i + 1)..n {
                s -= l[k * n + i] * out[k * n + col];
            }
            out[i * n + col] = s / l[i * n + i];
        }
    }
}

fn matmul_into(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
}
