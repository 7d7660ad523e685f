//! Gain design, controller/decoder types and closed-loop assembly.
//!
//! Two design routes are provided. The lifting route handles periodic-vector
//! patterns: the plant is lifted over the transmission stride and the
//! modified Riccati condition is solved there, which is exact at the
//! critical bound. The periodic jump Riccati route (`weighted`) solves the
//! expected-cost recursion of the 2-mode loss model directly on the
//! N-periodic plant; it accepts any pattern and an actuator decoder.

use nalgebra::DMatrix;

use crate::bounds;
use crate::decoder::{self, DecoderStability};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, JumpLinearSystem, Link, LtiPlant, SwitchSchedule, MODES};
use crate::stability;

pub const RICCATI_TOL: f64 = 1e-11;
pub const RICCATI_CAP: usize = 100_000;
/// State weight of the small-cost Riccati equation used by the lifting route.
pub const RICCATI_Q: f64 = 1e-7;
/// Relative distance to the threshold below which feasibility is undecided.
pub const BOUNDARY_BAND: f64 = 1e-6;
pub const MU_DELTA: f64 = 1e-6;
/// Regularisation added to the weights of the periodic jump Riccati route.
pub const JUMP_REG: f64 = 1e-9;
/// Value-iteration norm beyond which the periodic route is declared divergent.
pub const JUMP_DIVERGENCE: f64 = 1e14;

/// A witness `P ≻ 0` and gain `F` for the loss-gated state feedback
/// `x⁺ = (A + θ B F) x`, `Prob{θ = 0} = alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackDesign {
    pub p: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub alpha: f64,
    /// `-λmax` of `α AᵀPA + (1−α)(A+BF)ᵀP(A+BF) − P`.
    pub margin: f64,
    /// Scale that puts `μP` just inside `α BᵀμPB < 1`.
    pub mu: f64,
}

/// Left side of the gated Lyapunov inequality.
pub fn gated_lyapunov_lhs(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    alpha: f64,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let acl = a + b * f;
    linalg::symmetrize(&(a.transpose() * p * a * alpha + acl.transpose() * p * &acl * (1.0 - alpha) - p))
}

/// Both inequalities of the modified Riccati condition.
pub fn satisfies_modified_riccati(a: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64, p: &DMatrix<f64>) -> bool {
    let m = b.ncols();
    let bpb = b.transpose() * p * b;
    let r = DMatrix::<f64>::identity(m, m) / (1.0 - alpha);
    let Ok(inv) = linalg::inverse(&(&r + &bpb)) else {
        return false;
    };
    let lhs = linalg::symmetrize(&(a.transpose() * p * a - p - a.transpose() * p * b * inv * b.transpose() * p * a));
    let (_, hi) = linalg::sym_eig_range(&lhs);
    let (_, bpb_hi) = linalg::sym_eig_range(&bpb);
    hi < 0.0 && alpha * bpb_hi < 1.0 && linalg::is_positive_definite(p)
}

/// `μ = (1 − δ) / (α λmax(BᵀPB))`, or 1 when `alpha = 0`.
pub fn mu_rescale(b: &DMatrix<f64>, alpha: f64, p: &DMatrix<f64>) -> f64 {
    if alpha == 0.0 {
        return 1.0;
    }
    let (_, hi) = linalg::sym_eig_range(&(b.transpose() * p * b));
    (1.0 - MU_DELTA) / (alpha * hi)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("loss probability {alpha} outside [0, 1)")));
    }
    Ok(())
}

/// Stabilizing gain for `x⁺ = (A + θ B F) x` with `Prob{θ = 0} = alpha`.
///
/// Solves `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + qI` with `R = I/(1−α)` by
/// fixed-point iteration from `P = I`; the design is feasible when
/// `α λmax(BᵀPB) < 1`, and then `F = −(BᵀPB)⁻¹BᵀPA`.
pub fn riccati_state_feedback(a: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64) -> Result<FeedbackDesign> {
    check_alpha(alpha)?;
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || m == 0 {
        return Err(Error::Dimension(format!("A is {}x{}, B is {}x{}", n, a.ncols(), b.nrows(), m)));
    }
    if linalg::rank(&linalg::controllability_matrix(a, b)) < n {
        return Err(Error::Degenerate("(A, B) is not controllable".into()));
    }
    let bound = bounds::critical_alpha_state(a)?.value;
    let r = DMatrix::<f64>::identity(m, m) / (1.0 - alpha);
    let q = DMatrix::<f64>::identity(n, n) * RICCATI_Q;
    let at = a.transpose();
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    for it in 0..RICCATI_CAP {
        let pb = &p * b;
        let gain = linalg::inverse(&(&r + b.transpose() * &pb))?;
        let next = linalg::symmetrize(&(&at * &p * a - &at * &pb * gain * pb.transpose() * a + &q));
        if !linalg::all_finite(&next) {
            return Err(Error::Numerical("Riccati iteration overflowed".into()));
        }
        let delta = linalg::max_abs(&(&next - &p));
        p = next;
        if delta <= RICCATI_TOL * linalg::max_abs(&p) {
            log::debug!("Riccati iteration converged after {} steps", it + 1);
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Boundary {
            rho: alpha / bound,
            context: format!("Riccati iteration did not settle in {RICCATI_CAP} steps"),
        });
    }
    let bpb = b.transpose() * &p * b;
    let (_, bpb_hi) = linalg::sym_eig_range(&bpb);
    let crit = alpha * bpb_hi;
    if (crit - 1.0).abs() <= BOUNDARY_BAND {
        return Err(Error::Boundary { rho: crit, context: "α·λmax(BᵀPB) at the threshold".into() });
    }
    if crit > 1.0 {
        return Err(Error::Infeasible { alpha, bound });
    }
    let f = -(linalg::inverse(&bpb).map_err(|_| Error::Degenerate("BᵀPB is singular".into()))?
        * b.transpose()
        * &p
        * a);
    let (_, hi) = linalg::sym_eig_range(&gated_lyapunov_lhs(a, b, &f, alpha, &p));
    let mut margin = -hi;
    if margin <= 1e-10 * linalg::max_abs(&p) {
        // The Riccati solution keeps only about q of slack; near the bound
        // that is lost against ‖P‖. Certify F with the Lyapunov solution.
        let gated = JumpLinearSystem::autonomous(vec![alpha, 1.0 - alpha], vec![vec![a.clone(), a + b * &f]])?;
        let witness = match stability::solve_coupled_lyapunov(&gated) {
            Ok(stability::LyapunovOutcome::Feasible(ps)) => ps.into_iter().next(),
            _ => None,
        };
        let Some(x) = witness else {
            return Err(Error::Boundary {
                rho: crit,
                context: format!("gated Lyapunov margin {margin:e} too small to certify"),
            });
        };
        margin = -linalg::sym_eig_range(&gated_lyapunov_lhs(a, b, &f, alpha, &x)).1;
        if margin <= 1e-10 * linalg::max_abs(&x) {
            return Err(Error::Boundary { rho: crit, context: format!("gated Lyapunov margin {margin:e}") });
        }
        p = x;
    }
    let mu = mu_rescale(b, alpha, &p);
    Ok(FeedbackDesign { p, f, alpha, margin, mu })
}

fn require_periodic_vector(schedule: &SwitchSchedule) -> Result<(usize, usize)> {
    let pattern = schedule.pattern();
    if !pattern.is_periodic_vector() {
        return Err(Error::PatternForm(format!("{:?}", pattern.entries())));
    }
    if schedule.dim() != 1 && pattern.entries().iter().any(|&e| e != 1 && e != 0) {
        return Err(Error::PatternForm("periodic vectors address a single channel".into()));
    }
    Ok((pattern.period(), pattern.transmissions()))
}

/// Constant observer gain `L` (n×1) for a periodic-vector sensor pattern.
///
/// The dual pair `((Aᵀ)^Ñ, (Aᵀ)^{Ñ−1}(S₁C)ᵀ)`, `Ñ = N/N₁`, is designed by
/// [`riccati_state_feedback`] and the gain transposed.
pub fn design_observer_gain(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    alpha1: f64,
    sensor: &SwitchSchedule,
) -> Result<(DMatrix<f64>, FeedbackDesign)> {
    let (period, count) = require_periodic_vector(sensor)?;
    let stride = period / count;
    let at = a.transpose();
    let cy = sensor.at(0) * c;
    let a_l = linalg::mat_pow(&at, stride);
    let b_l = linalg::mat_pow(&at, stride - 1) * cy.transpose();
    let design = riccati_state_feedback(&a_l, &b_l, alpha1).map_err(|e| match e {
        Error::Infeasible { alpha, .. } => Error::Infeasible {
            alpha,
            bound: bounds::critical_alpha_periodic(a, period, count, true).map(|b| b.value).unwrap_or(f64::NAN),
        },
        other => other,
    })?;
    Ok((design.f.transpose(), design))
}

/// Constant state-feedback gain for a periodic-vector actuator pattern,
/// designed on the lifted pair `(A^Ñ, A^{Ñ−1} B S₂)`.
pub fn design_state_feedback_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    alpha2: f64,
    actuator: &SwitchSchedule,
) -> Result<(DMatrix<f64>, FeedbackDesign)> {
    let (period, count) = require_periodic_vector(actuator)?;
    let stride = period / count;
    let b_l = linalg::mat_pow(a, stride - 1) * b * actuator.at(0);
    let a_l = linalg::mat_pow(a, stride);
    let design = riccati_state_feedback(&a_l, &b_l, alpha2).map_err(|e| match e {
        Error::Infeasible { alpha, .. } => Error::Infeasible {
            alpha,
            bound: bounds::critical_alpha_periodic(a, period, count, true).map(|b| b.value).unwrap_or(f64::NAN),
        },
        other => other,
    })?;
    Ok((design.f.clone(), design))
}

/// One mode of a phase of the expected-cost recursion: probability and
/// `(Ā, B̄, C̄, D̄)` of `x⁺ = Āx + B̄u`, `z = C̄x + D̄u`.
#[derive(Debug, Clone)]
struct LqMode {
    prob: f64,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

fn lq_step(p: &DMatrix<f64>, modes: &[LqMode]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = modes[0].a.nrows();
    let m = modes[0].b.ncols();
    let mut hxx = DMatrix::<f64>::identity(n, n) * JUMP_REG;
    let mut hxu = DMatrix::<f64>::zeros(n, m);
    let mut huu = DMatrix::<f64>::identity(m, m) * JUMP_REG;
    for md in modes.iter().filter(|md| md.prob > 0.0) {
        let pa = p * &md.a;
        let pb = p * &md.b;
        hxx += (md.c.transpose() * &md.c + md.a.transpose() * &pa) * md.prob;
        hxu += (md.a.transpose() * &pb + md.c.transpose() * &md.d) * md.prob;
        huu += (md.d.transpose() * &md.d + md.b.transpose() * &pb) * md.prob;
    }
    let f = -(linalg::inverse(&linalg::symmetrize(&huu))? * hxu.transpose());
    let next = linalg::symmetrize(&(hxx + &hxu * &f));
    Ok((next, f))
}

/// Result of the periodic jump Riccati value iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpRiccati {
    /// Cost-to-go (or error covariance) and gain per phase.
    Converged { p: Vec<DMatrix<f64>>, gains: Vec<DMatrix<f64>>, periods: usize },
    Diverged { periods: usize },
    CapReached,
}

/// Value iteration over whole periods; `forward` runs phases `0..N`
/// (filter recursions), otherwise `N−1..0` (cost-to-go).
fn solve_periodic_lq(phases: &[Vec<LqMode>], forward: bool) -> Result<JumpRiccati> {
    let period = phases.len();
    let n = phases[0][0].a.nrows();
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut ps = vec![DMatrix::<f64>::zeros(n, n); period];
    let mut gains = vec![DMatrix::<f64>::zeros(phases[0][0].b.ncols(), n); period];
    let order: Vec<usize> = if forward { (0..period).collect() } else { (0..period).rev().collect() };
    let mut anchor = p.clone();
    for it in 0..RICCATI_CAP {
        for &k in &order {
            let (next, f) = lq_step(&p, &phases[k])?;
            gains[k] = f;
            p = next;
            // Forward recursions report the covariance that the phase-k gain acts on.
            ps[if forward { (k + 1) % period } else { k }] = p.clone();
        }
        let size = linalg::max_abs(&p);
        if !size.is_finite() || size > JUMP_DIVERGENCE {
            return Ok(JumpRiccati::Diverged { periods: it + 1 });
        }
        if linalg::max_abs(&(&p - &anchor)) <= RICCATI_TOL * size {
            return Ok(JumpRiccati::Converged { p: ps, gains, periods: it + 1 });
        }
        anchor = p.clone();
    }
    Ok(JumpRiccati::CapReached)
}

/// Decoder state dimension, or 0.
fn nd_of(decoder: Option<&Decoder>) -> usize {
    decoder.map_or(0, Decoder::nd)
}

/// Applied input `u = G x̄ + H û` over `x̄ = [x; η]` at phase `k`.
fn applied_input_map(
    plant: &LtiPlant,
    s2: &DMatrix<f64>,
    theta2: f64,
    decoder: Option<&Decoder>,
    k: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = plant.n();
    let m2 = plant.m2();
    let nd = nd_of(decoder);
    let h = s2 * theta2;
    let mut g = DMatrix::<f64>::zeros(m2, n + nd);
    if let Some(dec) = decoder {
        let (_, _, c_d) = dec.at(k);
        let hold = DMatrix::<f64>::identity(m2, m2) - &h * s2.transpose();
        g.view_mut((0, n), (m2, nd)).copy_from(&(hold * c_d));
    }
    (g, h)
}

fn state_feedback_phases(plant: &LtiPlant, actuator: &Link, decoder: Option<&Decoder>) -> Vec<Vec<LqMode>> {
    let n = plant.n();
    let nd = nd_of(decoder);
    let alpha = actuator.loss.alpha();
    (0..actuator.schedule.period())
        .map(|k| {
            let s2 = actuator.schedule.at(k);
            let mut a_open = DMatrix::<f64>::zeros(n + nd, n + nd);
            a_open.view_mut((0, 0), (n, n)).copy_from(plant.a());
            let mut b_stack = DMatrix::<f64>::zeros(n + nd, plant.m2());
            b_stack.view_mut((0, 0), (n, plant.m2())).copy_from(plant.b());
            if let Some(dec) = decoder {
                let (a_d, b_d, _) = dec.at(k);
                a_open.view_mut((n, n), (nd, nd)).copy_from(a_d);
                b_stack.view_mut((n, 0), (nd, plant.m2())).copy_from(b_d);
            }
            [(alpha, 0.0), (1.0 - alpha, 1.0)]
                .into_iter()
                .map(|(prob, theta)| {
                    let (g, h) = applied_input_map(plant, s2, theta, decoder, k);
                    let (c, d) = match plant.generalized() {
                        Some(gb) => {
                            let mut c1 = DMatrix::<f64>::zeros(gb.c1.nrows(), n + nd);
                            c1.view_mut((0, 0), (gb.c1.nrows(), n)).copy_from(&gb.c1);
                            (c1 + &gb.d12 * &g, &gb.d12 * &h)
                        }
                        None => {
                            let mut c = DMatrix::<f64>::zeros(n + plant.m2(), n + nd);
                            c.view_mut((0, 0), (n, n)).fill_with_identity();
                            c.view_mut((n, 0), (plant.m2(), n + nd)).copy_from(&g);
                            let mut d = DMatrix::<f64>::zeros(n + plant.m2(), 1);
                            d.view_mut((n, 0), (plant.m2(), 1)).copy_from(&h);
                            (c, d)
                        }
                    };
                    LqMode { prob, a: &a_open + &b_stack * &g, b: &b_stack * &h, c, d }
                })
                .collect()
        })
        .collect()
}

fn observer_phases(plant: &LtiPlant, sensor: &Link) -> Vec<Vec<LqMode>> {
    let n = plant.n();
    let alpha = sensor.loss.alpha();
    let at = plant.a().transpose();
    (0..sensor.schedule.period())
        .map(|k| {
            let cy = sensor.schedule.at(k) * plant.c();
            let (b1t, d21t) = match plant.generalized() {
                Some(gb) => (gb.b1.transpose(), (sensor.schedule.at(k) * &gb.d21).transpose()),
                None => (DMatrix::<f64>::identity(n, n), DMatrix::<f64>::zeros(n, 1)),
            };
            [(alpha, 0.0), (1.0 - alpha, 1.0)]
                .into_iter()
                .map(|(prob, theta)| LqMode {
                    prob,
                    a: at.clone(),
                    b: cy.transpose() * theta,
                    c: b1t.clone(),
                    d: &d21t * theta,
                })
                .collect()
        })
        .collect()
}

/// Periodic state-feedback gains `F_k` over `[x; η]` from the expected-cost
/// Riccati recursion of the loss-gated plant.
pub fn weighted_state_feedback(
    plant: &LtiPlant,
    actuator: &Link,
    decoder: Option<&Decoder>,
) -> Result<JumpRiccati> {
    if let Some(dec) = decoder {
        check_decoder_dims(dec, plant.m2(), actuator.schedule.period())?;
    }
    solve_periodic_lq(&state_feedback_phases(plant, actuator, decoder), false)
}

/// Periodic observer gains `L_k` (gains are returned already transposed to n×1).
pub fn weighted_observer(plant: &LtiPlant, sensor: &Link) -> Result<JumpRiccati> {
    Ok(match solve_periodic_lq(&observer_phases(plant, sensor), true)? {
        JumpRiccati::Converged { p, gains, periods } => JumpRiccati::Converged {
            p,
            gains: gains.iter().map(DMatrix::transpose).collect(),
            periods,
        },
        other => other,
    })
}

/// N-periodic decoder `η⁺ = A_D η + B_D u`, `ζ = C_D η`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    a_d: Vec<DMatrix<f64>>,
    b_d: Vec<DMatrix<f64>>,
    c_d: Vec<DMatrix<f64>>,
}

impl Decoder {
    pub fn new(a_d: Vec<DMatrix<f64>>, b_d: Vec<DMatrix<f64>>, c_d: Vec<DMatrix<f64>>) -> Result<Self> {
        let period = a_d.len();
        if period == 0 || b_d.len() != period || c_d.len() != period {
            return Err(Error::Dimension("decoder needs the same nonzero period for A_D, B_D, C_D".into()));
        }
        let nd = a_d[0].nrows();
        let m = b_d[0].ncols();
        for k in 0..period {
            if a_d[k].shape() != (nd, nd) || b_d[k].shape() != (nd, m) || c_d[k].shape() != (m, nd) {
                return Err(Error::Dimension(format!("decoder phase {k} has inconsistent shapes")));
            }
        }
        Ok(Self { a_d, b_d, c_d })
    }
    pub fn period(&self) -> usize {
        self.a_d.len()
    }
    pub fn nd(&self) -> usize {
        self.a_d[0].nrows()
    }
    pub fn m(&self) -> usize {
        self.b_d[0].ncols()
    }
    pub fn at(&self, k: usize) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        let k = k % self.period();
        (&self.a_d[k], &self.b_d[k], &self.c_d[k])
    }
}

fn check_decoder_dims(dec: &Decoder, m2: usize, period: usize) -> Result<()> {
    if dec.m() != m2 {
        return Err(Error::Dimension(format!("decoder drives {} inputs, plant has {m2}", dec.m())));
    }
    if dec.period() != period {
        return Err(Error::PeriodMismatch(period, dec.period()));
    }
    Ok(())
}

/// Observer-based controller
/// `ξ⁺ = Aξ + Bu + L_{k,θ₂}(θ₁S₁Cξ − ŷ)`, `û = F_{k,θ₁} [ξ; η]`.
///
/// `f[k][i]` is used when `θ₁ = i`, `l[k][j]` when `θ₂ = j`. Columns of `F`
/// beyond the plant order act on the decoder state.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    f: Vec<[DMatrix<f64>; 2]>,
    l: Vec<[DMatrix<f64>; 2]>,
}

impl Controller {
    pub fn new(f: Vec<[DMatrix<f64>; 2]>, l: Vec<[DMatrix<f64>; 2]>) -> Result<Self> {
        let period = f.len();
        if period == 0 || l.len() != period {
            return Err(Error::Dimension("controller gain arrays must share a nonzero period".into()));
        }
        let fw = f[0][0].shape();
        let lw = l[0][0].shape();
        if fw.0 != 1 || lw.1 != 1 {
            return Err(Error::Dimension("F must be 1×n and L must be n×1".into()));
        }
        for k in 0..period {
            for i in 0..2 {
                if f[k][i].shape() != fw || l[k][i].shape() != lw {
                    return Err(Error::Dimension(format!("gain shapes differ at phase {k}, mode {i}")));
                }
            }
        }
        if fw.1 < lw.0 {
            return Err(Error::Dimension("F is narrower than the observer state".into()));
        }
        Ok(Self { f, l })
    }
    pub fn period(&self) -> usize {
        self.f.len()
    }
    /// Observer state dimension.
    pub fn n(&self) -> usize {
        self.l[0][0].nrows()
    }
    /// Number of decoder-state columns in `F`.
    pub fn decoder_columns(&self) -> usize {
        self.f[0][0].ncols() - self.n()
    }
    pub fn f(&self, k: usize, theta1: usize) -> &DMatrix<f64> {
        &self.f[k % self.period()][theta1]
    }
    pub fn l(&self, k: usize, theta2: usize) -> &DMatrix<f64> {
        &self.l[k % self.period()][theta2]
    }
    pub fn f_gains(&self) -> &[[DMatrix<f64>; 2]] {
        &self.f
    }
    pub fn l_gains(&self) -> &[[DMatrix<f64>; 2]] {
        &self.l
    }
}

/// Controller with mode-independent per-phase gains.
pub fn build_observer_controller(f: &[DMatrix<f64>], l: &[DMatrix<f64>]) -> Result<Controller> {
    if f.len() != l.len() {
        return Err(Error::PeriodMismatch(f.len(), l.len()));
    }
    Controller::new(
        f.iter().map(|g| [g.clone(), g.clone()]).collect(),
        l.iter().map(|g| [g.clone(), g.clone()]).collect(),
    )
}

/// Which design route to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMethod {
    /// Lifting route when both patterns are periodic vectors and no decoder
    /// is attached, periodic jump Riccati otherwise.
    #[default]
    Auto,
    Lifting,
    Weighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub controller: Controller,
    pub method: DesignMethod,
    pub state_feedback: Option<FeedbackDesign>,
    pub observer: Option<FeedbackDesign>,
}

/// Designs both gains for the networked loop.
pub fn design_controller(
    plant: &LtiPlant,
    sensor: &Link,
    actuator: &Link,
    decoder: Option<&Decoder>,
    method: DesignMethod,
) -> Result<DesignReport> {
    model::check_link_dims(plant, sensor, actuator)?;
    let period = sensor.schedule.period();
    if actuator.schedule.period() != period {
        return Err(Error::PeriodMismatch(period, actuator.schedule.period()));
    }
    let lifting_ok = decoder.is_none()
        && plant.m2() == 1
        && sensor.schedule.pattern().is_periodic_vector()
        && actuator.schedule.pattern().is_periodic_vector();
    let method = match method {
        DesignMethod::Auto if lifting_ok => DesignMethod::Lifting,
        DesignMethod::Auto => DesignMethod::Weighted,
        DesignMethod::Lifting if !lifting_ok => {
            return Err(Error::PatternForm(
                "the lifting route needs periodic-vector patterns, one input and no decoder".into(),
            ))
        }
        m => m,
    };
    match method {
        DesignMethod::Lifting => {
            let (f, fd) = design_state_feedback_gain(plant.a(), plant.b(), actuator.loss.alpha(), &actuator.schedule)?;
            let (l, ld) = design_observer_gain(plant.a(), plant.c(), sensor.loss.alpha(), &sensor.schedule)?;
            let controller = build_observer_controller(&vec![f; period], &vec![l; period])?;
            Ok(DesignReport { controller, method, state_feedback: Some(fd), observer: Some(ld) })
        }
        _ => {
            let f = match weighted_state_feedback(plant, actuator, decoder)? {
                JumpRiccati::Converged { gains, .. } => gains,
                other => return Err(jump_failure(other, plant.a(), &actuator.schedule, actuator.loss.alpha())?),
            };
            let l = match weighted_observer(plant, sensor)? {
                JumpRiccati::Converged { gains, .. } => gains,
                other => return Err(jump_failure(other, plant.a(), &sensor.schedule, sensor.loss.alpha())?),
            };
            let controller = build_observer_controller(&f, &l)?;
            Ok(DesignReport { controller, method, state_feedback: None, observer: None })
        }
    }
}

fn jump_failure(outcome: JumpRiccati, a: &DMatrix<f64>, schedule: &SwitchSchedule, alpha: f64) -> Result<Error> {
    let bound = bounds::critical_alpha_for_pattern(a, &schedule.pattern())?.value;
    Ok(match outcome {
        JumpRiccati::Diverged { periods } => {
            log::debug!("periodic Riccati diverged after {periods} periods");
            Error::Infeasible { alpha, bound }
        }
        _ => Error::Boundary {
            rho: alpha / bound,
            context: format!("periodic Riccati did not settle in {RICCATI_CAP} periods"),
        },
    })
}

fn check_loop(plant: &LtiPlant, sensor: &Link, actuator: &Link, period: usize, n_ctrl: usize) -> Result<()> {
    model::check_link_dims(plant, sensor, actuator)?;
    if sensor.schedule.period() != period {
        return Err(Error::PeriodMismatch(period, sensor.schedule.period()));
    }
    if actuator.schedule.period() != period {
        return Err(Error::PeriodMismatch(period, actuator.schedule.period()));
    }
    if n_ctrl != plant.n() {
        return Err(Error::Dimension(format!("controller order {n_ctrl}, plant order {}", plant.n())));
    }
    Ok(())
}

/// Closed loop of the observer-based controller with state `[x; η; e]`,
/// `e = x − ξ`, over the four loss modes.
///
/// With `performance` the system is driven by `w` and emits `z`, otherwise
/// it is autonomous.
pub fn close_loop(
    plant: &LtiPlant,
    controller: &Controller,
    sensor: &Link,
    actuator: &Link,
    decoder: Option<&Decoder>,
    performance: bool,
) -> Result<JumpLinearSystem> {
    let period = controller.period();
    check_loop(plant, sensor, actuator, period, controller.n())?;
    let nd = nd_of(decoder);
    if let Some(dec) = decoder {
        check_decoder_dims(dec, plant.m2(), period)?;
    }
    if controller.decoder_columns() != 0 && controller.decoder_columns() != nd {
        return Err(Error::Dimension(format!(
            "F carries {} decoder columns, decoder order is {nd}",
            controller.decoder_columns()
        )));
    }
    let g = performance
        .then(|| {
            plant
                .generalized()
                .ok_or_else(|| Error::Invalid("performance loop requested but the plant has no generalized blocks".into()))
        })
        .transpose()?;
    let n = plant.n();
    let total = 2 * n + nd;
    let probs = model::mode_probabilities(sensor.loss.alpha(), actuator.loss.alpha()).to_vec();
    let (mut a_all, mut b_all, mut c_all, mut d_all) = (vec![], vec![], vec![], vec![]);
    for k in 0..period {
        let s1 = sensor.schedule.at(k);
        let s2 = actuator.schedule.at(k);
        let (mut ak, mut bk, mut ck, mut dk) = (vec![], vec![], vec![], vec![]);
        for &(t1, t2) in MODES.iter() {
            let (i, j) = (usize::from(t1), usize::from(t2));
            let (th1, th2) = (f64::from(t1), f64::from(t2));
            let f = controller.f(k, i);
            let l = controller.l(k, j);
            let (gmap, h) = applied_input_map(plant, s2, th2, decoder, k);
            // u = U [x; η; e]
            let mut u = DMatrix::<f64>::zeros(plant.m2(), total);
            u.view_mut((0, 0), (plant.m2(), n + nd)).copy_from(&gmap);
            let fx = f.columns(0, n).into_owned();
            let hf = &h * &fx;
            let mut ux = u.view_mut((0, 0), (plant.m2(), n));
            ux += &hf;
            let mut ue = u.view_mut((0, n + nd), (plant.m2(), n));
            ue -= &hf;
            if nd > 0 && f.ncols() > n {
                let mut ue = u.view_mut((0, n), (plant.m2(), nd));
                ue += &h * f.columns(n, nd);
            }
            let mut a = DMatrix::<f64>::zeros(total, total);
            a.view_mut((0, 0), (n, n)).copy_from(plant.a());
            a.view_mut((n + nd, n + nd), (n, n)).copy_from(&(plant.a() + l * s1 * plant.c() * th1));
            let mut ax = a.view_mut((0, 0), (n, total));
            ax += plant.b() * &u;
            if let Some(dec) = decoder {
                let (a_d, b_d, _) = dec.at(k);
                let mut ad = a.view_mut((n, n), (nd, nd));
                ad += a_d;
                let mut aeta = a.view_mut((n, 0), (nd, total));
                aeta += b_d * &u;
            }
            ak.push(a);
            match g {
                None => {
                    bk.push(DMatrix::zeros(total, 0));
                    ck.push(DMatrix::zeros(0, total));
                    dk.push(DMatrix::zeros(0, 0));
                }
                Some(gb) => {
                    let mw = gb.b1.ncols();
                    let mut b = DMatrix::<f64>::zeros(total, mw);
                    b.view_mut((0, 0), (n, mw)).copy_from(&gb.b1);
                    b.view_mut((n + nd, 0), (n, mw)).copy_from(&(&gb.b1 + l * s1 * &gb.d21 * th1));
                    let mut c = &gb.d12 * &u;
                    let mut cx = c.view_mut((0, 0), (gb.c1.nrows(), n));
                    cx += &gb.c1;
                    bk.push(b);
                    ck.push(c);
                    dk.push(gb.d11.clone());
                }
            }
        }
        a_all.push(ak);
        b_all.push(bk);
        c_all.push(ck);
        d_all.push(dk);
    }
    JumpLinearSystem::new(probs, a_all, b_all, c_all, d_all)
}

/// [`close_loop`] after screening the decoder; internally unstable
/// decoders are rejected, marginal ones pass with a warning.
pub fn attach_decoder(
    plant: &LtiPlant,
    controller: &Controller,
    decoder: &Decoder,
    sensor: &Link,
    actuator: &Link,
    performance: bool,
) -> Result<JumpLinearSystem> {
    let screen = decoder::check_internal_stability(decoder)?;
    match screen.verdict {
        DecoderStability::Unstable => {
            return Err(Error::DecoderRejected { rho: screen.rho, reason: "decoder is internally unstable".into() })
        }
        DecoderStability::Marginal => log::warn!("decoder is marginally stable (ρ = {})", screen.rho),
        DecoderStability::Strict => {}
    }
    close_loop(plant, controller, sensor, actuator, Some(decoder), performance)
}

/// `[x; η]` dynamics with `e ≡ 0`.
pub fn state_subsystem(
    plant: &LtiPlant,
    controller: &Controller,
    sensor: &Link,
    actuator: &Link,
    decoder: Option<&Decoder>,
) -> Result<JumpLinearSystem> {
    let full = close_loop(plant, controller, sensor, actuator, decoder, false)?;
    let keep = plant.n() + nd_of(decoder);
    restrict(&full, 0, keep)
}

/// Estimation-error dynamics `e⁺ = (A + θ₁ L S₁ C) e`.
pub fn error_subsystem(
    plant: &LtiPlant,
    controller: &Controller,
    sensor: &Link,
    actuator: &Link,
    decoder: Option<&Decoder>,
) -> Result<JumpLinearSystem> {
    let full = close_loop(plant, controller, sensor, actuator, decoder, false)?;
    let start = plant.n() + nd_of(decoder);
    restrict(&full, start, plant.n())
}

fn restrict(sys: &JumpLinearSystem, start: usize, len: usize) -> Result<JumpLinearSystem> {
    let a = (0..sys.period())
        .map(|k| {
            (0..sys.modes())
                .map(|m| sys.a(k, m).view((start, start), (len, len)).into_owned())
                .collect()
        })
        .collect();
    JumpLinearSystem::autonomous(sys.probs().to_vec(), a)
}

/// General periodic controller
/// `ξ⁺ = Â_{k,θ₁,θ₂} ξ + B̂_{k,θ₂} ŷ`, `û = Ĉ_{k,θ₁} ξ + D̂_k ŷ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralController {
    pub a_hat: Vec<[[DMatrix<f64>; 2]; 2]>,
    pub b_hat: Vec<[DMatrix<f64>; 2]>,
    pub c_hat: Vec<[DMatrix<f64>; 2]>,
    pub d_hat: Vec<DMatrix<f64>>,
}

impl GeneralController {
    pub fn period(&self) -> usize {
        self.a_hat.len()
    }
    pub fn order(&self) -> usize {
        self.a_hat[0][0][0].nrows()
    }

    fn validate(&self, p_in: usize) -> Result<()> {
        let period = self.period();
        if period == 0 || self.b_hat.len() != period || self.c_hat.len() != period || self.d_hat.len() != period {
            return Err(Error::Dimension("general controller arrays must share a nonzero period".into()));
        }
        let nc = self.order();
        for k in 0..period {
            for i in 0..2 {
                if self.b_hat[k][i].shape() != (nc, p_in) || self.c_hat[k][i].shape() != (1, nc) {
                    return Err(Error::Dimension(format!("general controller phase {k} has bad B̂/Ĉ shapes")));
                }
                for j in 0..2 {
                    if self.a_hat[k][i][j].shape() != (nc, nc) {
                        return Err(Error::Dimension(format!("general controller phase {k} has bad Â shape")));
                    }
                }
            }
            if self.d_hat[k].shape() != (1, p_in) {
                return Err(Error::Dimension(format!("general controller phase {k} has bad D̂ shape")));
            }
        }
        Ok(())
    }
}

/// The observer-based controller written in the general form.
pub fn to_general(plant: &LtiPlant, controller: &Controller, sensor: &Link, actuator: &Link) -> Result<GeneralController> {
    check_loop(plant, sensor, actuator, controller.period(), controller.n())?;
    if controller.decoder_columns() != 0 {
        return Err(Error::Invalid("decoder-state feedback has no general-form equivalent".into()));
    }
    let period = controller.period();
    let mut out = GeneralController { a_hat: vec![], b_hat: vec![], c_hat: vec![], d_hat: vec![] };
    for k in 0..period {
        let s1 = sensor.schedule.at(k);
        let s2 = actuator.schedule.at(k);
        let ah = |i: usize, j: usize| {
            plant.a() + plant.b() * s2 * controller.f(k, i) * j as f64 + controller.l(k, j) * s1 * plant.c() * i as f64
        };
        out.a_hat.push([[ah(0, 0), ah(0, 1)], [ah(1, 0), ah(1, 1)]]);
        out.b_hat.push([-controller.l(k, 0), -controller.l(k, 1)]);
        out.c_hat.push([controller.f(k, 0).clone(), controller.f(k, 1).clone()]);
        out.d_hat.push(DMatrix::zeros(1, 1));
    }
    Ok(out)
}

/// Closed loop of a general controller with state `[x; η; ξ]`.
pub fn close_loop_general(
    plant: &LtiPlant,
    controller: &GeneralController,
    sensor: &Link,
    actuator: &Link,
    decoder: Option<&Decoder>,
    performance: bool,
) -> Result<JumpLinearSystem> {
    let period = controller.period();
    controller.validate(1)?;
    model::check_link_dims(plant, sensor, actuator)?;
    if sensor.schedule.period() != period || actuator.schedule.period() != period {
        return Err(Error::PeriodMismatch(period, sensor.schedule.period().max(actuator.schedule.period())));
    }
    let nd = nd_of(decoder);
    if let Some(dec) = decoder {
        check_decoder_dims(dec, plant.m2(), period)?;
    }
    let g = performance
        .then(|| {
            plant
                .generalized()
                .ok_or_else(|| Error::Invalid("performance loop requested but the plant has no generalized blocks".into()))
        })
        .transpose()?;
    let n = plant.n();
    let nc = controller.order();
    let total = n + nd + nc;
    let m2 = plant.m2();
    let probs = model::mode_probabilities(sensor.loss.alpha(), actuator.loss.alpha()).to_vec();
    let (mut a_all, mut b_all, mut c_all, mut d_all) = (vec![], vec![], vec![], vec![]);
    for k in 0..period {
        let s1 = sensor.schedule.at(k);
        let s2 = actuator.schedule.at(k);
        let (mut ak, mut bk, mut ck, mut dk) = (vec![], vec![], vec![], vec![]);
        for &(t1, t2) in MODES.iter() {
            let (i, j) = (usize::from(t1), usize::from(t2));
            let (th1, th2) = (f64::from(t1), f64::from(t2));
            // ŷ = Y s + Yw w
            let mut y = DMatrix::<f64>::zeros(1, total);
            y.view_mut((0, 0), (1, n)).copy_from(&(s1 * plant.c() * th1));
            // û = Ĉ ξ + D̂ ŷ
            let mut uh = &controller.d_hat[k] * &y;
            let mut uxi = uh.view_mut((0, n + nd), (1, nc));
            uxi += &controller.c_hat[k][i];
            let (gmap, h) = applied_input_map(plant, s2, th2, decoder, k);
            let mut u = &h * &uh;
            let mut ug = u.view_mut((0, 0), (m2, n + nd));
            ug += &gmap;
            let mut a = DMatrix::<f64>::zeros(total, total);
            a.view_mut((0, 0), (n, n)).copy_from(plant.a());
            let mut ax = a.view_mut((0, 0), (n, total));
            ax += plant.b() * &u;
            if let Some(dec) = decoder {
                let (a_d, b_d, _) = dec.at(k);
                let mut ad = a.view_mut((n, n), (nd, nd));
                ad += a_d;
                let mut aeta = a.view_mut((n, 0), (nd, total));
                aeta += b_d * &u;
            }
            let mut axi = a.view_mut((n + nd, 0), (nc, total));
            axi += &controller.b_hat[k][j] * &y;
            let mut axx = a.view_mut((n + nd, n + nd), (nc, nc));
            axx += &controller.a_hat[k][i][j];
            ak.push(a);
            match g {
                None => {
                    bk.push(DMatrix::zeros(total, 0));
                    ck.push(DMatrix::zeros(0, total));
                    dk.push(DMatrix::zeros(0, 0));
                }
                Some(gb) => {
                    let yw = s1 * &gb.d21 * th1;
                    let uw = &h * &controller.d_hat[k] * &yw;
                    let mw = gb.b1.ncols();
                    let mut b = DMatrix::<f64>::zeros(total, mw);
                    b.view_mut((0, 0), (n, mw)).copy_from(&(&gb.b1 + plant.b() * &uw));
                    if let Some(dec) = decoder {
                        let (_, b_d, _) = dec.at(k);
                        b.view_mut((n, 0), (nd, mw)).copy_from(&(b_d * &uw));
                    }
                    b.view_mut((n + nd, 0), (nc, mw)).copy_from(&(&controller.b_hat[k][j] * &yw));
                    let mut c = &gb.d12 * &u;
                    let mut cx = c.view_mut((0, 0), (gb.c1.nrows(), n));
                    cx += &gb.c1;
                    bk.push(b);
                    ck.push(c);
                    dk.push(&gb.d11 + &gb.d12 * &uw);
                }
            }
        }
        a_all.push(ak);
        b_all.push(bk);
        c_all.push(ck);
        d_all.push(dk);
    }
    JumpLinearSystem::new(probs, a_all, b_all, c_all, d_all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_switch_schedule, LossChannel, Side, SwitchingPattern};
    use approx::assert_relative_eq;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_gain_is_minus_a_over_b() {
        let d = riccati_state_feedback(&s(2.0), &s(1.0), 0.2).unwrap();
        assert_relative_eq!(d.f[(0, 0)], -2.0, epsilon = 1e-12);
        assert!(d.margin > 0.0);
        let d = riccati_state_feedback(&s(2.0), &s(0.5), 0.2).unwrap();
        assert_relative_eq!(d.f[(0, 0)], -4.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_above_bound_is_infeasible() {
        match riccati_state_feedback(&s(2.0), &s(1.0), 0.3) {
            Err(Error::Infeasible { bound, .. }) => assert_relative_eq!(bound, 0.25, epsilon = 1e-15),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn lossless_design_always_feasible() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.7, 1.1]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let d = riccati_state_feedback(&a, &b, 0.0).unwrap();
        assert!(linalg::spectral_radius(&(&a + &b * &d.f)).unwrap() < 1.0);
    }

    #[test]
    fn rescaled_witness_meets_modified_riccati() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.7, 1.1]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let d = riccati_state_feedback(&a, &b, 0.15).unwrap();
        assert!(satisfies_modified_riccati(&a, &b, 0.15, &d.p));
        let scaled = &d.p * d.mu;
        assert!(satisfies_modified_riccati(&a, &b, 0.15, &scaled));
        let lhs = gated_lyapunov_lhs(&a, &b, &d.f, 0.15, &scaled);
        assert!(linalg::sym_eig_range(&lhs).1 < 0.0);
    }

    #[test]
    fn non_periodic_vector_rejected_by_lifting_route() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.7, 1.1]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let sched = build_switch_schedule(&SwitchingPattern::new(vec![1, 1, 0]).unwrap(), Side::Sensor, 1).unwrap();
        assert!(matches!(design_observer_gain(&a, &c, 0.01, &sched), Err(Error::PatternForm(_))));
    }

    #[test]
    fn zero_gains_give_silent_controller() {
        let plant = LtiPlant::new(s(0.5), s(1.0), s(1.0)).unwrap();
        let ctrl = build_observer_controller(&[s(0.0)], &[s(0.0)]).unwrap();
        let sensor = Link::new(build_switch_schedule(&SwitchingPattern::always(1).unwrap(), Side::Sensor, 1).unwrap(), LossChannel::new(0.3).unwrap());
        let act = Link::new(build_switch_schedule(&SwitchingPattern::always(1).unwrap(), Side::Actuator, 1).unwrap(), LossChannel::new(0.3).unwrap());
        let sys = close_loop(&plant, &ctrl, &sensor, &act, None, false).unwrap();
        for m in 0..4 {
            assert_eq!(sys.a(0, m)[(0, 0)], 0.5);
            assert_eq!(sys.a(0, m)[(0, 1)], 0.0);
        }
    }

    #[test]
    fn deterministic_loop_separates() {
        let plant = LtiPlant::new(s(2.0), s(1.0), s(1.0)).unwrap();
        let ctrl = build_observer_controller(&[s(-1.5)], &[s(-1.8)]).unwrap();
        let sensor = Link::new(build_switch_schedule(&SwitchingPattern::always(1).unwrap(), Side::Sensor, 1).unwrap(), LossChannel::lossless());
        let act = Link::new(build_switch_schedule(&SwitchingPattern::always(1).unwrap(), Side::Actuator, 1).unwrap(), LossChannel::lossless());
        let sys = close_loop(&plant, &ctrl, &sensor, &act, None, false).unwrap();
        let mut eig: Vec<f64> = linalg::eigenvalues(sys.a(0, 3)).unwrap().iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        assert_relative_eq!(eig[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn weighted_route_matches_scalar_threshold() {
        let plant = LtiPlant::new(s(2.0), s(1.0), s(1.0)).unwrap();
        let always = |side| build_switch_schedule(&SwitchingPattern::always(1).unwrap(), side, 1).unwrap();
        for (alpha, ok) in [(0.2, true), (0.3, false)] {
            let act = Link::new(always(Side::Actuator), LossChannel::new(alpha).unwrap());
            let out = weighted_state_feedback(&plant, &act, None).unwrap();
            assert_eq!(matches!(out, JumpRiccati::Converged { .. }), ok, "alpha {alpha}");
            let sen = Link::new(always(Side::Sensor), LossChannel::new(alpha).unwrap());
            let out = weighted_observer(&plant, &sen).unwrap();
            assert_eq!(matches!(out, JumpRiccati::Converged { .. }), ok, "alpha {alpha}");
        }
    }

    #[test]
    fn c_d_zero_decoder_matches_plain_loop() {
        let plant = LtiPlant::new(s(2.0), s(1.0), s(1.0)).unwrap();
        let always = |side| build_switch_schedule(&SwitchingPattern::always(1).unwrap(), side, 1).unwrap();
        let sensor = Link::new(always(Side::Sensor), LossChannel::new(0.1).unwrap());
        let act = Link::new(always(Side::Actuator), LossChannel::new(0.1).unwrap());
        let ctrl = build_observer_controller(&[s(-2.0)], &[s(-2.0)]).unwrap();
        let dec = Decoder::new(vec![s(0.5)], vec![s(1.0)], vec![s(0.0)]).unwrap();
        let plain = stability::second_moment_radius(&close_loop(&plant, &ctrl, &sensor, &act, None, false).unwrap()).unwrap();
        let with = stability::second_moment_radius(&attach_decoder(&plant, &ctrl, &dec, &sensor, &act, false).unwrap()).unwrap();
        // the unobserved decoder block only adds its own 0.5² mode
        assert_relative_eq!(with, plain.max(0.25), epsilon = 1e-9);
    }
}
