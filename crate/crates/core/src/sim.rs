//! Seeded Monte Carlo simulation of the networked loop.
//!
//! # Random numbers
//!
//! All draws come from SplitMix64: the state advances by
//! `0x9e3779b97f4a7c15` and each output is the state passed through
//! [`mix64`]. Uniforms take the top 53 bits, Gaussians use the cosine branch
//! of Box–Muller on two consecutive uniforms, and a channel reports a loss
//! (`θ = 0`) when its uniform is below `alpha`.
//!
//! Trial `t` of a run seeded with `s` uses, for each stream constant `c`,
//! the generator seeded with `mix64(s ^ mix64(t).wrapping_add(c))`. Losses,
//! disturbances and initial states use separate streams, so disturbance
//! values never depend on loss draws.
//!
//! # Step order
//!
//! At time `k` the simulator draws `θ₁,k` and `w_k`, forms `ŷ_k`, asks the
//! control law for `û_k`, and only then draws `θ₂,k`. The law learns
//! `θ₂,k` through [`ControlLaw::acknowledge`] after its decision.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::format::sig9;
use crate::model::{JumpLinearSystem, Link, LtiPlant};
use crate::synthesis::{Controller, Decoder};

/// Entry magnitude past which a trajectory is truncated and flagged.
pub const DIVERGENCE: f64 = 1e12;

pub const STREAM_LOSS: u64 = 0x4c4f_5353;
pub const STREAM_DISTURBANCE: u64 = 0x4449_5354;
pub const STREAM_INIT: u64 = 0x494e_4954;
pub const STREAM_PARTICLE: u64 = 0x5041_5254;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(seed: u64, trial: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(trial).wrapping_add(stream))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }
    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
    /// `true` (delivered) with probability `1 − alpha`.
    pub fn delivered(&mut self, alpha: f64) -> bool {
        self.next_f64() >= alpha
    }
}

/// Index drawn from a probability vector.
pub fn draw_mode(rng: &mut SplitMix64, probs: &[f64]) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn unit_vector(rng: &mut SplitMix64, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.next_gaussian());
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Fixed(Vec<f64>),
    UnitSphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceSpec {
    None,
    White { sigma: f64 },
    Sequence(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub initial_state: InitialState,
    pub disturbance: DisturbanceSpec,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.trials == 0 {
            return Err(Error::Invalid("simulation needs horizon >= 1 and trials >= 1".into()));
        }
        if let DisturbanceSpec::White { sigma } = self.disturbance {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Invalid(format!("disturbance σ = {sigma} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn initial(&self, n: usize, trial: u64) -> Result<DVector<f64>> {
        match &self.initial_state {
            InitialState::Fixed(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            InitialState::Fixed(v) => {
                Err(Error::Dimension(format!("initial state has {} entries, system order is {n}", v.len())))
            }
            InitialState::UnitSphere => {
                Ok(unit_vector(&mut SplitMix64::new(trial_seed(self.seed, trial, STREAM_INIT)), n))
            }
        }
    }
}

pub trait LossSource {
    /// `θ₁,k`: whether the scheduled sensor message gets through.
    fn sensor(&mut self, k: usize) -> bool;
    /// `θ₂,k`: whether the scheduled actuator message gets through.
    fn actuator(&mut self, k: usize) -> bool;
}

pub trait DisturbanceSource {
    fn next(&mut self, k: usize, dim: usize) -> DVector<f64>;
}

/// Controller side of the loop.
pub trait ControlLaw {
    /// `û_k` from what is known at time `k`: `θ₁,k`, `ŷ_k` and earlier acks.
    fn decide(&mut self, k: usize, theta1: bool, y_hat: &DVector<f64>) -> DVector<f64>;
    /// Acknowledgement of `θ₂,k`, delivered after [`ControlLaw::decide`].
    fn acknowledge(&mut self, k: usize, theta2: bool);
    /// Internal state, for recording.
    fn state(&self) -> DVector<f64> {
        DVector::zeros(0)
    }
}

pub struct BernoulliLosses {
    rng: SplitMix64,
    alpha1: f64,
    alpha2: f64,
}

impl BernoulliLosses {
    pub fn new(seed: u64, alpha1: f64, alpha2: f64) -> Self {
        Self { rng: SplitMix64::new(seed), alpha1, alpha2 }
    }
}

impl LossSource for BernoulliLosses {
    fn sensor(&mut self, _k: usize) -> bool {
        self.rng.delivered(self.alpha1)
    }
    fn actuator(&mut self, _k: usize) -> bool {
        self.rng.delivered(self.alpha2)
    }
}

pub struct WhiteNoise {
    rng: SplitMix64,
    sigma: f64,
}

impl WhiteNoise {
    pub fn new(seed: u64, sigma: f64) -> Self {
        Self { rng: SplitMix64::new(seed), sigma }
    }
}

impl DisturbanceSource for WhiteNoise {
    fn next(&mut self, _k: usize, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.sigma * self.rng.next_gaussian())
    }
}

pub struct NoDisturbance;

impl DisturbanceSource for NoDisturbance {
    fn next(&mut self, _k: usize, dim: usize) -> DVector<f64> {
        DVector::zeros(dim)
    }
}

/// Replays a fixed sequence, zero once it runs out.
pub struct SequenceDisturbance(pub Vec<Vec<f64>>);

impl DisturbanceSource for SequenceDisturbance {
    fn next(&mut self, k: usize, dim: usize) -> DVector<f64> {
        match self.0.get(k) {
            Some(v) => DVector::from_fn(dim, |i, _| v.get(i).copied().unwrap_or(0.0)),
            None => DVector::zeros(dim),
        }
    }
}

/// Plant, links and optional decoder of one networked loop.
#[derive(Debug, Clone, Copy)]
pub struct LoopSpec<'a> {
    pub plant: &'a LtiPlant,
    pub sensor: &'a Link,
    pub actuator: &'a Link,
    pub decoder: Option<&'a Decoder>,
}

impl LoopSpec<'_> {
    /// Disturbance width: `B₁`'s columns, or `n` with `w` added to the state
    /// when no generalized blocks are given.
    pub fn disturbance_dim(&self) -> usize {
        match self.plant.generalized() {
            Some(g) => g.b1.ncols(),
            None => self.plant.n(),
        }
    }

    fn measurement(&self, k: usize, theta1: bool, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        if !theta1 {
            return DVector::zeros(1);
        }
        let s1 = self.sensor.schedule.at(k);
        let mut y = self.plant.c() * x;
        if let Some(g) = self.plant.generalized() {
            y += &g.d21 * w;
        }
        s1 * y
    }

    /// `u_k = θ₂ S₂ û + (I − θ₂ S₂S₂ᵀ) C_D η`.
    pub fn applied_input(&self, k: usize, theta2: bool, u_hat: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        let s2 = self.actuator.schedule.at(k);
        let th = if theta2 { 1.0 } else { 0.0 };
        let mut u = s2 * u_hat * th;
        if let Some(dec) = self.decoder {
            let (_, _, c_d) = dec.at(k);
            let m2 = self.plant.m2();
            let hold = DMatrix::<f64>::identity(m2, m2) - s2 * s2.transpose() * th;
            u += hold * (c_d * eta);
        }
        u
    }

    fn decoder_step(&self, k: usize, eta: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self.decoder {
            Some(dec) => {
                let (a_d, b_d, _) = dec.at(k);
                a_d * eta + b_d * u
            }
            None => DVector::zeros(0),
        }
    }
}

/// The observer-based controller as a [`ControlLaw`]. It keeps its own copy
/// of the decoder so the applied input can be rebuilt from the ack.
pub struct ObserverLaw<'a> {
    spec: LoopSpec<'a>,
    controller: &'a Controller,
    xi: DVector<f64>,
    eta: DVector<f64>,
    pending: Option<(usize, bool, DVector<f64>, DVector<f64>)>,
}

impl<'a> ObserverLaw<'a> {
    pub fn new(spec: LoopSpec<'a>, controller: &'a Controller, xi0: DVector<f64>) -> Self {
        let nd = spec.decoder.map_or(0, Decoder::nd);
        Self { spec, controller, xi: xi0, eta: DVector::zeros(nd), pending: None }
    }
}

impl ControlLaw for ObserverLaw<'_> {
    fn decide(&mut self, k: usize, theta1: bool, y_hat: &DVector<f64>) -> DVector<f64> {
        let f = self.controller.f(k, usize::from(theta1));
        let n = self.xi.len();
        let mut u_hat = f.columns(0, n) * &self.xi;
        if f.ncols() > n {
            u_hat += f.columns(n, f.ncols() - n) * &self.eta;
        }
        self.pending = Some((k, theta1, y_hat.clone(), u_hat.clone()));
        u_hat
    }

    fn acknowledge(&mut self, k: usize, theta2: bool) {
        let (k0, theta1, y_hat, u_hat) = self.pending.take().expect("acknowledge without a decision");
        debug_assert_eq!(k0, k);
        let u = self.spec.applied_input(k, theta2, &u_hat, &self.eta);
        let plant = self.spec.plant;
        let mut innovation = -y_hat;
        if theta1 {
            innovation += self.spec.sensor.schedule.at(k) * plant.c() * &self.xi;
        }
        let l = self.controller.l(k, usize::from(theta2));
        self.xi = plant.a() * &self.xi + plant.b() * &u + l * innovation;
        self.eta = self.spec.decoder_step(k, &self.eta, &u);
    }

    fn state(&self) -> DVector<f64> {
        self.xi.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0 … x_T` (shorter when truncated).
    pub x: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub theta1: Vec<bool>,
    pub theta2: Vec<bool>,
    pub u_hat: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub x_sq: Vec<f64>,
    pub diverged: bool,
}

impl Trajectory {
    /// Steps with recorded draws.
    pub fn steps(&self) -> usize {
        self.theta1.len()
    }

    /// CSV with columns `k,theta1,theta2,x_sq` and optionally `x0, x1, …`.
    pub fn to_csv(&self, components: bool) -> String {
        let n = self.x.first().map_or(0, |x| x.len());
        let mut out = String::from("k,theta1,theta2,x_sq");
        if components {
            for i in 0..n {
                let _ = write!(out, ",x{i}");
            }
        }
        out.push('\n');
        for k in 0..self.steps() {
            let _ = write!(
                out,
                "{k},{},{},{}",
                u8::from(self.theta1[k]),
                u8::from(self.theta2[k]),
                sig9(self.x_sq[k])
            );
            if components {
                for v in self.x[k].iter() {
                    let _ = write!(out, ",{}", sig9(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs one trajectory of the loop.
pub fn simulate_loop(
    spec: LoopSpec<'_>,
    law: &mut dyn ControlLaw,
    losses: &mut dyn LossSource,
    disturbances: &mut dyn DisturbanceSource,
    x0: DVector<f64>,
    horizon: usize,
) -> Result<Trajectory> {
    let plant = spec.plant;
    if x0.len() != plant.n() {
        return Err(Error::Dimension(format!("initial state has {} entries, plant order is {}", x0.len(), plant.n())));
    }
    let mw = spec.disturbance_dim();
    let nd = spec.decoder.map_or(0, Decoder::nd);
    let mut tr = Trajectory {
        x: vec![x0.clone()],
        xi: vec![law.state()],
        eta: vec![DVector::zeros(nd)],
        theta1: vec![],
        theta2: vec![],
        u_hat: vec![],
        u: vec![],
        w: vec![],
        x_sq: vec![x0.norm_squared()],
        diverged: false,
    };
    let mut x = x0;
    let mut eta = DVector::<f64>::zeros(nd);
    for k in 0..horizon {
        let theta1 = losses.sensor(k);
        let w = disturbances.next(k, mw);
        let y_hat = spec.measurement(k, theta1, &x, &w);
        let u_hat = law.decide(k, theta1, &y_hat);
        let theta2 = losses.actuator(k);
        let u = spec.applied_input(k, theta2, &u_hat, &eta);
        law.acknowledge(k, theta2);
        let mut next = plant.a() * &x + plant.b() * &u;
        match plant.generalized() {
            Some(g) => next += &g.b1 * &w,
            None => next += &w,
        }
        eta = spec.decoder_step(k, &eta, &u);
        tr.theta1.push(theta1);
        tr.theta2.push(theta2);
        tr.u_hat.push(u_hat);
        tr.u.push(u);
        tr.w.push(w);
        let big = next.amax();
        x = next;
        tr.x_sq.push(x.norm_squared());
        tr.x.push(x.clone());
        tr.xi.push(law.state());
        tr.eta.push(eta.clone());
        if !big.is_finite() || big > DIVERGENCE {
            tr.diverged = true;
            break;
        }
    }
    Ok(tr)
}

/// Runs `config.trials` independent trajectories of the observer-based loop
/// on `threads` workers; the result does not depend on `threads`.
pub fn simulate(spec: LoopSpec<'_>, controller: &Controller, config: &SimConfig, threads: usize) -> Result<Vec<Trajectory>> {
    config.validate()?;
    if controller.n() != spec.plant.n() {
        return Err(Error::Dimension("controller order differs from plant order".into()));
    }
    let run = |trial: usize| -> Result<Trajectory> {
        let t = trial as u64;
        let mut losses = BernoulliLosses::new(
            trial_seed(config.seed, t, STREAM_LOSS),
            spec.sensor.loss.alpha(),
            spec.actuator.loss.alpha(),
        );
        let x0 = config.initial(spec.plant.n(), t)?;
        let mut law = ObserverLaw::new(spec, controller, DVector::zeros(spec.plant.n()));
        match &config.disturbance {
            DisturbanceSpec::None => simulate_loop(spec, &mut law, &mut losses, &mut NoDisturbance, x0, config.horizon),
            DisturbanceSpec::White { sigma } => {
                let mut d = WhiteNoise::new(trial_seed(config.seed, t, STREAM_DISTURBANCE), *sigma);
                simulate_loop(spec, &mut law, &mut losses, &mut d, x0, config.horizon)
            }
            DisturbanceSpec::Sequence(seq) => {
                simulate_loop(spec, &mut law, &mut losses, &mut SequenceDisturbance(seq.clone()), x0, config.horizon)
            }
        }
    };
    parallel_map(config.trials, threads, run).into_iter().collect()
}

/// `f(0..count)` in index order, spread over `threads` scoped workers.
pub fn parallel_map<T: Send>(count: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = threads.clamp(1, count.max(1));
    if threads == 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| scope.spawn(move || (t * chunk..((t + 1) * chunk).min(count)).map(f).collect::<Vec<T>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// States `x_0 … x_len` of an autonomous jump system under a fixed mode
/// sequence.
pub fn simulate_jump_modes(sys: &JumpLinearSystem, x0: &DVector<f64>, modes: &[usize]) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(modes.len() + 1);
    let mut x = x0.clone();
    out.push(x.clone());
    for (k, &m) in modes.iter().enumerate() {
        x = sys.a(k, m) * &x;
        out.push(x.clone());
    }
    out
}

/// Draws a mode sequence of length `horizon` for `sys`.
pub fn draw_modes(sys: &JumpLinearSystem, rng: &mut SplitMix64, horizon: usize) -> Vec<usize> {
    (0..horizon).map(|_| draw_mode(rng, sys.probs())).collect()
}

/// Result of [`mc_second_moment`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMomentEstimate {
    /// Sample mean of `|x_k|²` over trials that have not diverged yet.
    pub mean_sq: Vec<f64>,
    /// Half-width of the normal 95% interval for `mean_sq`.
    pub mean_sq_ci: Vec<f64>,
    /// Sample mean of `Σ_{j≤k} |x_j|²`.
    pub cumulative: Vec<f64>,
    pub cumulative_ci: Vec<f64>,
    pub diverged_fraction: f64,
    /// Per-period growth factor of the second moment.
    pub rho_hat: f64,
    pub rho_ci: (f64, f64),
}

impl SecondMomentEstimate {
    /// `Some(true)` when the 95% interval for `ρ̂` lies below 1,
    /// `Some(false)` when it lies above, `None` when it straddles 1.
    pub fn stable(&self) -> Option<bool> {
        if self.rho_ci.1 < 1.0 {
            Some(true)
        } else if self.rho_ci.0 > 1.0 {
            Some(false)
        } else {
            None
        }
    }
}

/// Empirical second moment of an autonomous jump system.
///
/// Plain trajectory averages give the `E|x_k|²` curve. They cannot give a
/// growth rate for mean-square unstable systems whose typical trajectory
/// decays, since the moment is then carried by rarer and rarer paths. `ρ̂`
/// is therefore estimated with a resampled population of `trials` unit
/// vectors: each step applies a random mode to every member, records the
/// mean squared gain `g_k`, resamples members in proportion to their gains
/// and renormalises. `log ρ̂` is `N` times the mean of `log g_k` over the
/// second half of the run, with a batch-means interval.
pub fn mc_second_moment(sys: &JumpLinearSystem, config: &SimConfig) -> Result<SecondMomentEstimate> {
    config.validate()?;
    let n = sys.n();
    let horizon = config.horizon;
    let trials = config.trials;
    let mut sum = vec![0.0; horizon + 1];
    let mut sum_sq = vec![0.0; horizon + 1];
    let mut alive = vec![0usize; horizon + 1];
    let mut csum = vec![0.0; horizon + 1];
    let mut csum_sq = vec![0.0; horizon + 1];
    let mut diverged = 0usize;
    for t in 0..trials {
        let mut rng = SplitMix64::new(trial_seed(config.seed, t as u64, STREAM_LOSS));
        let mut x = config.initial(n, t as u64)?;
        let mut acc = 0.0;
        for k in 0..=horizon {
            let v = x.norm_squared();
            acc += v;
            sum[k] += v;
            sum_sq[k] += v * v;
            csum[k] += acc;
            csum_sq[k] += acc * acc;
            alive[k] += 1;
            if k == horizon {
                break;
            }
            let m = draw_mode(&mut rng, sys.probs());
            x = sys.a(k, m) * &x;
            let big = x.amax();
            if !big.is_finite() || big > DIVERGENCE {
                diverged += 1;
                break;
            }
        }
    }
    let stats = |s: &[f64], s2: &[f64]| -> (Vec<f64>, Vec<f64>) {
        s.iter()
            .zip(s2)
            .zip(&alive)
            .map(|((&a, &b), &c)| {
                if c == 0 {
                    return (f64::NAN, f64::NAN);
                }
                let c = c as f64;
                let mean = a / c;
                let var = if c > 1.0 { ((b / c - mean * mean) * c / (c - 1.0)).max(0.0) } else { 0.0 };
                (mean, 1.96 * (var / c).sqrt())
            })
            .unzip()
    };
    let (mean_sq, mean_sq_ci) = stats(&sum, &sum_sq);
    let (cumulative, cumulative_ci) = stats(&csum, &csum_sq);
    let (rho_hat, rho_ci) = particle_growth(sys, trials, horizon, config.seed);
    Ok(SecondMomentEstimate {
        mean_sq,
        mean_sq_ci,
        cumulative,
        cumulative_ci,
        diverged_fraction: diverged as f64 / trials as f64,
        rho_hat,
        rho_ci,
    })
}

fn particle_growth(sys: &JumpLinearSystem, population: usize, horizon: usize, seed: u64) -> (f64, (f64, f64)) {
    let n = sys.n();
    let period = sys.period();
    if n == 0 {
        return (0.0, (0.0, 0.0));
    }
    let mut rng = SplitMix64::new(trial_seed(seed, 0, STREAM_PARTICLE));
    let mut pop: Vec<DVector<f64>> = (0..population).map(|_| unit_vector(&mut rng, n)).collect();
    let mut logs = Vec::with_capacity(horizon);
    let mut weights = vec![0.0; population];
    for k in 0..horizon {
        let mut total = 0.0;
        for (j, v) in pop.iter_mut().enumerate() {
            let m = draw_mode(&mut rng, sys.probs());
            *v = sys.a(k, m) * &*v;
            weights[j] = v.norm_squared();
            total += weights[j];
        }
        if !(total > 0.0) || !total.is_finite() {
            // every member absorbed (or overflowed): no growth information left
            return if total > 0.0 { (f64::INFINITY, (f64::INFINITY, f64::INFINITY)) } else { (0.0, (0.0, 0.0)) };
        }
        logs.push((total / population as f64).ln());
        // systematic resampling
        let step = total / population as f64;
        let offset = rng.next_f64() * step;
        let mut next = Vec::with_capacity(population);
        let mut acc = 0.0;
        let mut target = offset;
        for (j, v) in pop.iter().enumerate() {
            acc += weights[j];
            while target < acc && next.len() < population {
                next.push(v / weights[j].sqrt());
                target += step;
            }
        }
        while next.len() < population {
            let j = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            next.push(&pop[j] / weights[j].sqrt());
        }
        pop = next;
    }
    let start = (horizon / 2).div_ceil(period) * period;
    let usable = (horizon.saturating_sub(start) / period) * period;
    if usable == 0 {
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let r = (mean * period as f64).exp();
        return (r, (r, r));
    }
    let tail = &logs[start..start + usable];
    let mean = tail.iter().sum::<f64>() / usable as f64;
    let periods = usable / period;
    let batches = periods.min(20);
    let batch_len = (periods / batches) * period;
    let means: Vec<f64> = (0..batches)
        .map(|b| tail[b * batch_len..(b + 1) * batch_len].iter().sum::<f64>() / batch_len as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = if batches > 1 {
        means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64
    } else {
        0.0
    };
    let half = 1.96 * (var / batches as f64).sqrt();
    let p = period as f64;
    ((mean * p).exp(), (((mean - half) * p).exp(), ((mean + half) * p).exp()))
}
