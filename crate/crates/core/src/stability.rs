//! Stochastic stability of periodic jump linear systems.
//!
//! Two independent routes are provided. The spectral route forms the
//! period-composed second-moment operator
//! `T = T_{N-1} ⋯ T_0`, `T_k = Σ_i α_i A_{k,i} ⊗ A_{k,i}`, and compares its
//! spectral radius with one. The Lyapunov route constructs periodic
//! `P_k ≻ 0` with `Σ_i α_i A_{k,i}ᵀ P_{k+1} A_{k,i} − P_k ≺ 0` by summing
//! the adjoint operator series, without looking at the spectrum.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::JumpLinearSystem;

/// Half-width of the band around `rho = 1` reported as inconclusive.
pub const RHO_TOL: f64 = 1e-9;

/// Above this operator size the spectral radius is found by cone power iteration.
pub const DENSE_LIMIT: usize = 4096;

const POWER_MAX_ITER: usize = 20_000;
const DOUBLING_CAP: usize = 64;
const DIVERGENCE: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    BoundaryInconclusive,
}

impl Verdict {
    pub fn from_rho(rho: f64) -> Self {
        if rho < 1.0 - RHO_TOL {
            Verdict::Stable
        } else if rho > 1.0 + RHO_TOL {
            Verdict::Unstable
        } else {
            Verdict::BoundaryInconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub verdict: Verdict,
    pub stable: bool,
    /// Spectral radius of the period-composed second-moment operator.
    pub rho: f64,
    pub witnesses: Option<Vec<DMatrix<f64>>>,
}

pub fn phase_operator(sys: &JumpLinearSystem, k: usize) -> DMatrix<f64> {
    let n = sys.n();
    let mut t = DMatrix::zeros(n * n, n * n);
    for (i, &p) in sys.probs().iter().enumerate() {
        if p > 0.0 {
            let a = sys.a(k, i);
            t += a.kronecker(a) * p;
        }
    }
    t
}

/// `T = T_{N-1} ⋯ T_0`, acting on `vec(E[x xᵀ])` over one period.
pub fn second_moment_operator(sys: &JumpLinearSystem) -> DMatrix<f64> {
    let n = sys.n();
    let mut t = DMatrix::identity(n * n, n * n);
    for k in 0..sys.period() {
        t = phase_operator(sys, k) * t;
    }
    t
}

pub fn second_moment_radius(sys: &JumpLinearSystem) -> Result<f64> {
    let t = second_moment_operator(sys);
    if !linalg::all_finite(&t) {
        return Ok(f64::INFINITY);
    }
    if t.nrows() <= DENSE_LIMIT {
        linalg::spectral_radius(&t)
            .map_err(|e| Error::Numerical(format!("second-moment spectrum: {e}")))
    } else {
        Ok(cone_power_radius(sys))
    }
}

/// The operator maps the PSD cone into itself, so iterating it from `I`
/// converges in direction to its Perron eigenvector.
fn cone_power_radius(sys: &JumpLinearSystem) -> f64 {
    let n = sys.n();
    let mut x = DMatrix::<f64>::identity(n, n);
    let mut est = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let mut y = x.clone();
        for k in 0..sys.period() {
            let mut next = DMatrix::zeros(n, n);
            for (i, &p) in sys.probs().iter().enumerate() {
                let a = sys.a(k, i);
                next += a * &y * a.transpose() * p;
            }
            y = next;
        }
        let nrm = y.trace();
        if nrm == 0.0 {
            return 0.0;
        }
        let new_est = nrm / x.trace();
        x = y / nrm;
        if (new_est - est).abs() <= 1e-13 * new_est {
            return new_est;
        }
        est = new_est;
    }
    est
}

/// Spectral certificate; witnesses are not attached.
pub fn is_stochastically_stable(sys: &JumpLinearSystem) -> Result<StabilityCertificate> {
    let rho = second_moment_radius(sys)?;
    let verdict = Verdict::from_rho(rho);
    Ok(StabilityCertificate { verdict, stable: verdict == Verdict::Stable, rho, witnesses: None })
}

/// Spectral certificate with Lyapunov witnesses attached when stable.
pub fn certify(sys: &JumpLinearSystem) -> Result<StabilityCertificate> {
    let mut cert = is_stochastically_stable(sys)?;
    if cert.stable {
        match solve_coupled_lyapunov(sys) {
            Ok(LyapunovOutcome::Feasible(p)) => cert.witnesses = Some(p),
            Ok(LyapunovOutcome::Infeasible) => {
                log::warn!("spectral route stable (rho = {}) but Lyapunov series diverged", cert.rho)
            }
            Err(e) => log::warn!("no Lyapunov witness: {e}"),
        }
    }
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovOutcome {
    Feasible(Vec<DMatrix<f64>>),
    Infeasible,
}

impl LyapunovOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LyapunovOutcome::Feasible(_))
    }
}

/// `L_k(P) = Σ_i α_i A_{k,i}ᵀ P A_{k,i}`.
pub fn adjoint_phase(sys: &JumpLinearSystem, k: usize, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sys.n();
    let mut out = DMatrix::zeros(n, n);
    for (i, &prob) in sys.probs().iter().enumerate() {
        if prob > 0.0 {
            let a = sys.a(k, i);
            out += a.transpose() * p * a * prob;
        }
    }
    out
}

/// Finds periodic witnesses with `P_k − L_k(P_{k+1}) = I`.
///
/// Unrolling the period gives `P_0 = c + Φ(P_0)` with `Φ = L_0 ⋯ L_{N-1}`.
/// Up to [`DENSE_LIMIT`] unknowns this is solved directly, and a solution
/// that is not positive definite means `ρ ≥ 1`. Larger systems sum the
/// Neumann series `Σ_t Φ^t c` by repeated squaring.
pub fn solve_coupled_lyapunov(sys: &JumpLinearSystem) -> Result<LyapunovOutcome> {
    let n = sys.n();
    let period = sys.period();
    let eye = DMatrix::<f64>::identity(n, n);

    // c = I + L_0(I + L_1(I + ⋯ L_{N-2}(I)))
    let mut c = eye.clone();
    for k in (0..period.saturating_sub(1)).rev() {
        c = &eye + adjoint_phase(sys, k, &c);
    }
    // Φ in vec form is Tᵀ.
    let phi = second_moment_operator(sys).transpose();
    let p0 = if n * n <= DENSE_LIMIT {
        let lhs = DMatrix::<f64>::identity(n * n, n * n) - &phi;
        let Some(sol) = lhs.lu().solve(&linalg::vec(&c)) else {
            let rho = second_moment_radius(sys).unwrap_or(f64::NAN);
            return Err(Error::Boundary { rho, context: "I − Φ is singular".into() });
        };
        let p0 = linalg::symmetrize(&linalg::unvec(&sol, n));
        if !linalg::all_finite(&p0) || !linalg::is_positive_definite(&p0) {
            return Ok(LyapunovOutcome::Infeasible);
        }
        p0
    } else {
        match neumann_sum(phi, linalg::vec(&c), sys)? {
            Some(sum) => linalg::symmetrize(&linalg::unvec(&sum, n)),
            None => return Ok(LyapunovOutcome::Infeasible),
        }
    };

    let mut ps = vec![DMatrix::zeros(n, n); period];
    ps[0] = p0;
    let mut next = ps[0].clone();
    for k in (1..period).rev() {
        ps[k] = linalg::symmetrize(&(&eye + adjoint_phase(sys, k, &next)));
        next = ps[k].clone();
    }
    let scale = ps.iter().map(|p| p.trace()).fold(0.0, f64::max);
    for p in ps.iter_mut() {
        *p /= scale;
    }
    let check = check_witnesses(sys, &ps)?;
    if !check.valid {
        let rho = second_moment_radius(sys).unwrap_or(f64::NAN);
        return Err(Error::Boundary {
            rho,
            context: format!("witness check failed (worst margin {:e})", check.worst_relative_margin),
        });
    }
    Ok(LyapunovOutcome::Feasible(ps))
}

fn neumann_sum(mut power: DMatrix<f64>, mut sum: DVector<f64>, sys: &JumpLinearSystem) -> Result<Option<DVector<f64>>> {
    let mut converged = false;
    for _ in 0..DOUBLING_CAP {
        let tail = &power * &sum;
        sum += &tail;
        power = &power * &power;
        let pn = power.norm();
        if !pn.is_finite() || pn > DIVERGENCE || !sum.iter().all(|v| v.is_finite()) || sum.norm() > DIVERGENCE {
            return Ok(None);
        }
        if pn < 1e-16 && tail.norm() <= 1e-15 * sum.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        let rho = second_moment_radius(sys).unwrap_or(f64::NAN);
        return Err(Error::Boundary { rho, context: "Lyapunov series did not settle".into() });
    }
    Ok(Some(sum))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessCheck {
    pub valid: bool,
    pub all_positive_definite: bool,
    /// `max_k λ_max(L_k(P_{k+1}) − P_k) / tr(P_k)`; valid witnesses are negative.
    pub worst_relative_margin: f64,
}

/// Re-substitutes witnesses into the coupled inequalities. Valid when every
/// `P_k ≻ 0` and each left side has largest eigenvalue below `−1e−10 tr(P_k)`.
pub fn check_witnesses(sys: &JumpLinearSystem, ps: &[DMatrix<f64>]) -> Result<WitnessCheck> {
    let period = sys.period();
    if ps.len() != period || ps.iter().any(|p| p.shape() != (sys.n(), sys.n())) {
        return Err(Error::Dimension(format!("expected {period} witnesses of size {}", sys.n())));
    }
    let mut all_pd = true;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..period {
        let p = &ps[k];
        all_pd &= linalg::is_positive_definite(p);
        let lhs = adjoint_phase(sys, k, &ps[(k + 1) % period]) - p;
        let (_, hi) = linalg::sym_eig_range(&lhs);
        worst = worst.max(hi / p.trace());
    }
    Ok(WitnessCheck { valid: all_pd && worst < -1e-10, all_positive_definite: all_pd, worst_relative_margin: worst })
}
