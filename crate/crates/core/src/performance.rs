//! l²-induced norm of a stochastically stable jump system.
//!
//! `verify_norm_bound` runs the γ-parameterized bounded-real recursion
//!
//! ```text
//! P_k = H_xx + H_xw (γ²I − H_ww)⁻¹ H_xwᵀ,
//! H_xx = E[AᵀPA + CᵀC], H_xw = E[AᵀPB + CᵀD], H_ww = E[BᵀPB + DᵀD]
//! ```
//!
//! backward over whole periods from `P = 0`. The expectation is taken
//! before the worst-case disturbance is chosen, since `w_k` may not depend
//! on the mode drawn at time `k`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::JumpLinearSystem;
use crate::sim::{self, SplitMix64};
use crate::stability::{self, Verdict};

pub const NORM_TOL: f64 = 1e-10;
pub const NORM_CAP: usize = 10_000;
pub const NORM_DIVERGENCE: f64 = 1e14;
pub const BISECTION_RTOL: f64 = 1e-4;
pub const MC_TRAJECTORIES: usize = 64;
pub const MC_HORIZON: usize = 512;
const MC_SEED: u64 = 0x6e6f_726d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormStatus {
    Feasible,
    Infeasible,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormCertificate {
    pub gamma: f64,
    pub feasible: bool,
    pub status: NormStatus,
    #[serde(skip)]
    pub witnesses: Option<Vec<DMatrix<f64>>>,
    pub periods: usize,
}

impl NormCertificate {
    fn new(gamma: f64, status: NormStatus, witnesses: Option<Vec<DMatrix<f64>>>, periods: usize) -> Self {
        Self { gamma, feasible: status == NormStatus::Feasible, status, witnesses, periods }
    }
}

fn require_stable(sys: &JumpLinearSystem) -> Result<()> {
    if sys.n() == 0 {
        return Ok(());
    }
    let rho = stability::second_moment_radius(sys)?;
    match Verdict::from_rho(rho) {
        Verdict::Stable => Ok(()),
        Verdict::Unstable => Err(Error::Unstable { rho }),
        Verdict::BoundaryInconclusive => {
            Err(Error::Boundary { rho, context: "norm of a system on the stability boundary".into() })
        }
    }
}

/// Decides `‖G‖ < γ`. A system that is not stochastically stable is
/// rejected before the recursion starts.
pub fn verify_norm_bound(sys: &JumpLinearSystem, gamma: f64) -> Result<NormCertificate> {
    require_stable(sys)?;
    verify_prechecked(sys, gamma)
}

fn static_gain(sys: &JumpLinearSystem, k: usize) -> DMatrix<f64> {
    let mw = sys.input_dim();
    let mut hww = DMatrix::<f64>::zeros(mw, mw);
    for (mode, &p) in sys.probs().iter().enumerate() {
        let d = sys.d(k, mode);
        hww += d.transpose() * d * p;
    }
    hww
}

fn verify_prechecked(sys: &JumpLinearSystem, gamma: f64) -> Result<NormCertificate> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("γ = {gamma} must be positive and finite")));
    }
    let g2 = gamma * gamma;
    let n = sys.n();
    let mw = sys.input_dim();
    let period = sys.period();
    if n == 0 {
        for k in 0..period {
            let (lo, _) = linalg::sym_eig_range(&(DMatrix::<f64>::identity(mw, mw) * g2 - static_gain(sys, k)));
            if mw > 0 && lo <= 0.0 {
                return Ok(NormCertificate::new(gamma, NormStatus::Infeasible, None, 0));
            }
        }
        return Ok(NormCertificate::new(gamma, NormStatus::Feasible, Some(vec![]), 0));
    }
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut ps = vec![DMatrix::<f64>::zeros(n, n); period];
    let mut anchor = p.clone();
    let eye = DMatrix::<f64>::identity(mw, mw);
    for it in 0..NORM_CAP {
        for k in (0..period).rev() {
            let mut hxx = DMatrix::<f64>::zeros(n, n);
            let mut hxw = DMatrix::<f64>::zeros(n, mw);
            let mut hww = DMatrix::<f64>::zeros(mw, mw);
            for (mode, &prob) in sys.probs().iter().enumerate() {
                if prob == 0.0 {
                    continue;
                }
                let (a, b, c, d) = (sys.a(k, mode), sys.b(k, mode), sys.c(k, mode), sys.d(k, mode));
                let pa = &p * a;
                let pb = &p * b;
                hxx += (a.transpose() * &pa + c.transpose() * c) * prob;
                hxw += (a.transpose() * &pb + c.transpose() * d) * prob;
                hww += (b.transpose() * &pb + d.transpose() * d) * prob;
            }
            let m = linalg::symmetrize(&(&eye * g2 - hww));
            let Some(chol) = m.clone().cholesky() else {
                return Ok(NormCertificate::new(gamma, NormStatus::Infeasible, None, it + 1));
            };
            p = linalg::symmetrize(&(hxx + &hxw * chol.solve(&hxw.transpose())));
            ps[k] = p.clone();
        }
        let size = linalg::max_abs(&p);
        if !size.is_finite() || size > NORM_DIVERGENCE {
            return Ok(NormCertificate::new(gamma, NormStatus::Infeasible, None, it + 1));
        }
        if linalg::max_abs(&(&p - &anchor)) <= NORM_TOL * size.max(f64::MIN_POSITIVE) {
            return Ok(NormCertificate::new(gamma, NormStatus::Feasible, Some(ps), it + 1));
        }
        anchor = p.clone();
    }
    Ok(NormCertificate::new(gamma, NormStatus::Inconclusive, None, NORM_CAP))
}

/// Empirical `sqrt(E Σ|z|² / E Σ|w|²)` under unit white noise from `x₀ = 0`.
pub fn monte_carlo_gain(sys: &JumpLinearSystem, trajectories: usize, horizon: usize, seed: u64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..trajectories {
        let mut modes = SplitMix64::new(sim::trial_seed(seed, t as u64, sim::STREAM_LOSS));
        let mut noise = SplitMix64::new(sim::trial_seed(seed, t as u64, sim::STREAM_DISTURBANCE));
        let mut x = DVector::<f64>::zeros(sys.n());
        for k in 0..horizon {
            let mode = sim::draw_mode(&mut modes, sys.probs());
            let w = DVector::from_fn(sys.input_dim(), |_, _| noise.next_gaussian());
            let z = sys.c(k, mode) * &x + sys.d(k, mode) * &w;
            num += z.norm_squared();
            den += w.norm_squared();
            x = sys.a(k, mode) * &x + sys.b(k, mode) * &w;
            if x.amax() > sim::DIVERGENCE {
                break;
            }
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Smallest γ (to relative `tol`) accepted by [`verify_norm_bound`].
/// Inconclusive levels count as infeasible.
pub fn min_norm(sys: &JumpLinearSystem, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain("bisection tolerance must be positive".into()));
    }
    require_stable(sys)?;
    if sys.input_dim() == 0 || sys.output_dim() == 0 {
        return Ok(0.0);
    }
    let feasible = |g: f64| verify_prechecked(sys, g).map(|c| c.feasible);
    let mut lo = 0.5 * monte_carlo_gain(sys, MC_TRAJECTORIES, MC_HORIZON, MC_SEED);
    if !(lo > 0.0) {
        lo = 1e-3;
    }
    let mut shrink = 0;
    while feasible(lo)? {
        lo *= 0.5;
        shrink += 1;
        if shrink > 1100 {
            return Ok(0.0);
        }
    }
    let mut hi = (2.0 * lo).max(1.0);
    let mut doublings = 0;
    while !feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::UnboundedNorm { last_gamma: hi });
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    log::debug!("min_norm bracket [{lo}, {hi}]");
    Ok(hi)
}

/// Deterministic single-mode system `x⁺ = Ax + Bw`, `z = Cx + Dw`.
pub fn lti_system(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<JumpLinearSystem> {
    JumpLinearSystem::new(vec![1.0], vec![vec![a]], vec![vec![b]], vec![vec![c]], vec![vec![d]])
}

/// `F(zI − A − BF)⁻¹B` as a jump system, for comparison with the
/// unstable-eigenvalue product.
pub fn feedback_sensitivity(a: &DMatrix<f64>, b: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<JumpLinearSystem> {
    lti_system(a + b * f, b.clone(), f.clone(), DMatrix::zeros(f.nrows(), b.ncols()))
}
