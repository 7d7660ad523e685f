//! Plant, channel and schedule data, and assembly of the open-loop
//! networked system as a periodic jump linear system.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on the sum-to-one invariant of mode probabilities.
pub const PROB_TOL: f64 = 1e-12;

/// Blocks of the generalized plant that carry the exogenous input `w` and the
/// controlled output `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedBlocks {
    pub b1: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d21: DMatrix<f64>,
}

/// Discrete-time plant `x⁺ = A x + B u`, `y = C x`, optionally extended with
/// the disturbance/performance blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    generalized: Option<GeneralizedBlocks>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Dimension("plant state dimension must be at least 1".into()));
        }
        if !a.is_square() {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!("B is {}x{}, expected {n}xm", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension(format!("C is {}x{}, expected px{n}", c.nrows(), c.ncols())));
        }
        Ok(Self { a, b, c, generalized: None })
    }

    pub fn with_generalized(mut self, g: GeneralizedBlocks) -> Result<Self> {
        let (n, m2, p2) = (self.n(), self.m2(), self.p2());
        let m1 = g.b1.ncols();
        let p1 = g.c1.nrows();
        let checks = [
            ("B1", g.b1.shape(), (n, m1)),
            ("C1", g.c1.shape(), (p1, n)),
            ("D11", g.d11.shape(), (p1, m1)),
            ("D12", g.d12.shape(), (p1, m2)),
            ("D21", g.d21.shape(), (p2, m1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        self.generalized = Some(g);
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn generalized(&self) -> Option<&GeneralizedBlocks> {
        self.generalized.as_ref()
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m2(&self) -> usize {
        self.b.ncols()
    }
    pub fn p2(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantDiagnostics {
    pub controllability_rank: usize,
    pub observability_rank: usize,
    pub controllable: bool,
    pub observable: bool,
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
    /// At least one eigenvalue strictly outside the unit circle.
    pub unstable: bool,
}

pub fn validate_plant(plant: &LtiPlant) -> Result<PlantDiagnostics> {
    let n = plant.n();
    let ctrb = linalg::controllability_matrix(plant.a(), plant.b());
    let obsv = linalg::controllability_matrix(&plant.a().transpose(), &plant.c().transpose());
    let controllability_rank = linalg::rank(&ctrb);
    let observability_rank = linalg::rank(&obsv);
    let eigenvalues = linalg::eigenvalues(plant.a())?;
    let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(PlantDiagnostics {
        controllability_rank,
        observability_rank,
        controllable: controllability_rank == n,
        observable: observability_rank == n,
        unstable: eigenvalues.iter().any(|z| z.norm() > 1.0 + crate::bounds::UNSTABLE_TOL),
        eigenvalues,
        spectral_radius,
    })
}

/// Which side of the channel a pattern schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Sensor,
    Actuator,
}

/// Per-period transmission order: slot `r` is owned by node `entries[r]`,
/// or by nobody when the entry is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchingPattern {
    entries: Vec<usize>,
}

impl SwitchingPattern {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Invalid("switching pattern must have period N >= 1".into()));
        }
        Ok(Self { entries })
    }

    /// `[1, 1, ..., 1]` of length `period`.
    pub fn always(period: usize) -> Result<Self> {
        Self::new(vec![1; period])
    }

    /// Periodic vector with `count` equally spaced transmissions.
    pub fn periodic_vector(period: usize, count: usize) -> Result<Self> {
        if count == 0 || count > period || !period.is_multiple_of(count) {
            return Err(Error::Invalid(format!(
                "periodic vector needs 1 <= N_i <= N with N_i | N (N = {period}, N_i = {count})"
            )));
        }
        let stride = period / count;
        Self::new((0..period).map(|r| usize::from(r % stride == 0)).collect())
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }
    pub fn period(&self) -> usize {
        self.entries.len()
    }

    /// Number of slots with a scheduled transmission.
    pub fn transmissions(&self) -> usize {
        self.entries.iter().filter(|&&e| e != 0).count()
    }

    /// Slots `0, N/N_i, 2N/N_i, …` carry a 1 and every other slot is silent.
    pub fn is_periodic_vector(&self) -> bool {
        let n = self.period();
        let ni = self.transmissions();
        if ni == 0 || !n.is_multiple_of(ni) {
            return false;
        }
        let stride = n / ni;
        self.entries
            .iter()
            .enumerate()
            .all(|(r, &e)| e == usize::from(r % stride == 0))
    }

    pub fn check_range(&self, max: usize) -> Result<()> {
        for (slot, &entry) in self.entries.iter().enumerate() {
            if entry > max {
                return Err(Error::PatternRange { slot, entry, max });
            }
        }
        Ok(())
    }
}

/// Realized switch box: one selector matrix per phase of the period.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    side: Side,
    dim: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl SwitchSchedule {
    pub fn side(&self) -> Side {
        self.side
    }
    /// Number of sensors (or actuators) the pattern selects from.
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn period(&self) -> usize {
        self.matrices.len()
    }
    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }
    /// Selector for time `k`, using N-periodicity.
    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.matrices[k % self.matrices.len()]
    }
    pub fn is_active(&self, k: usize) -> bool {
        self.at(k).iter().any(|&v| v != 0.0)
    }

    /// Reads the node index back out of each selector (0 when silent).
    pub fn pattern(&self) -> SwitchingPattern {
        let entries = self
            .matrices
            .iter()
            .map(|s| {
                s.iter()
                    .position(|&v| v != 0.0)
                    .map(|pos| pos + 1)
                    .unwrap_or(0)
            })
            .collect();
        SwitchingPattern { entries }
    }
}

/// Expands a pattern into selector matrices: a `1 x q` row `e_iᵀ` on the
/// sensor side, a `q x 1` column `e_j` on the actuator side.
pub fn build_switch_schedule(pattern: &SwitchingPattern, side: Side, dim: usize) -> Result<SwitchSchedule> {
    if dim == 0 {
        return Err(Error::Dimension("switch box over zero channels".into()));
    }
    pattern.check_range(dim)?;
    let matrices = pattern
        .entries()
        .iter()
        .map(|&e| {
            let mut sel = DMatrix::zeros(1, dim);
            if e > 0 {
                sel[(0, e - 1)] = 1.0;
            }
            match side {
                Side::Sensor => sel,
                Side::Actuator => sel.transpose(),
            }
        })
        .collect();
    Ok(SwitchSchedule { side, dim, matrices })
}

/// Bernoulli loss process with `alpha = Prob{θ = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    alpha: f64,
}

impl LossChannel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Invalid(format!("loss probability {alpha} outside [0, 1)")));
        }
        Ok(Self { alpha })
    }
    pub fn lossless() -> Self {
        Self { alpha: 0.0 }
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Canonical order of the four joint loss modes.
pub const MODES: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

pub fn mode_index(theta1: bool, theta2: bool) -> usize {
    2 * usize::from(theta1) + usize::from(theta2)
}

/// Probabilities of (θ₁, θ₂) in [`MODES`] order.
pub fn mode_probabilities(alpha1: f64, alpha2: f64) -> [f64; 4] {
    [
        alpha1 * alpha2,
        alpha1 * (1.0 - alpha2),
        (1.0 - alpha1) * alpha2,
        (1.0 - alpha1) * (1.0 - alpha2),
    ]
}

/// `x⁺ = A_{k,θ} x + B_{k,θ} w`, `z = C_{k,θ} x + D_{k,θ} w` with N-periodic
/// matrices and i.i.d. modes θ. Matrices are indexed `[phase][mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLinearSystem {
    probs: Vec<f64>,
    a: Vec<Vec<DMatrix<f64>>>,
    b: Vec<Vec<DMatrix<f64>>>,
    c: Vec<Vec<DMatrix<f64>>>,
    d: Vec<Vec<DMatrix<f64>>>,
}

type Grid = Vec<Vec<DMatrix<f64>>>;

impl JumpLinearSystem {
    pub fn new(probs: Vec<f64>, a: Grid, b: Grid, c: Grid, d: Grid) -> Result<Self> {
        let m = probs.len();
        if m == 0 {
            return Err(Error::Invalid("jump system needs at least one mode".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid(format!("mode probabilities {probs:?} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Invalid(format!("mode probabilities sum to {total}")));
        }
        let period = a.len();
        if period == 0 {
            return Err(Error::Invalid("jump system needs period N >= 1".into()));
        }
        for (name, grid) in [("B", &b), ("C", &c), ("D", &d)] {
            if grid.len() != period {
                return Err(Error::Dimension(format!("{name} has {} phases, A has {period}", grid.len())));
            }
        }
        let n = a[0].first().map(|x| x.nrows()).unwrap_or(0);
        let mw = b[0].first().map(|x| x.ncols()).unwrap_or(0);
        let pz = c[0].first().map(|x| x.nrows()).unwrap_or(0);
        for k in 0..period {
            for (name, grid, shape) in [
                ("A", &a, (n, n)),
                ("B", &b, (n, mw)),
                ("C", &c, (pz, n)),
                ("D", &d, (pz, mw)),
            ] {
                if grid[k].len() != m {
                    return Err(Error::Dimension(format!(
                        "{name} phase {k} has {} modes, expected {m}",
                        grid[k].len()
                    )));
                }
                if let Some(i) = grid[k].iter().position(|x| x.shape() != shape) {
                    return Err(Error::Dimension(format!(
                        "{name}[{k}][{i}] is {:?}, expected {shape:?}",
                        grid[k][i].shape()
                    )));
                }
            }
        }
        Ok(Self { probs, a, b, c, d })
    }

    /// System without exogenous input or output.
    pub fn autonomous(probs: Vec<f64>, a: Grid) -> Result<Self> {
        let n = a.first().and_then(|p| p.first()).map(|x| x.nrows()).unwrap_or(0);
        let shape = |rows, cols| -> Grid {
            a.iter()
                .map(|phase| phase.iter().map(|_| DMatrix::zeros(rows, cols)).collect())
                .collect()
        };
        let (b, c, d) = (shape(n, 0), shape(0, n), shape(0, 0));
        Self::new(probs, a, b, c, d)
    }

    pub fn period(&self) -> usize {
        self.a.len()
    }
    pub fn modes(&self) -> usize {
        self.probs.len()
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
    pub fn n(&self) -> usize {
        self.a[0][0].nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b[0][0].ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.c[0][0].nrows()
    }
    pub fn a(&self, k: usize, mode: usize) -> &DMatrix<f64> {
        &self.a[k % self.period()][mode]
    }
    pub fn b(&self, k: usize, mode: usize) -> &DMatrix<f64> {
        &self.b[k % self.period()][mode]
    }
    pub fn c(&self, k: usize, mode: usize) -> &DMatrix<f64> {
        &self.c[k % self.period()][mode]
    }
    pub fn d(&self, k: usize, mode: usize) -> &DMatrix<f64> {
        &self.d[k % self.period()][mode]
    }

    /// Drops the input and output channels.
    pub fn state_part(&self) -> JumpLinearSystem {
        JumpLinearSystem::autonomous(self.probs.clone(), self.a.clone())
            .expect("state part of a valid system is valid")
    }

    /// Removes zero-probability modes. Certificates are unaffected because
    /// such modes carry no weight in any expectation.
    pub fn prune_zero_modes(&self) -> JumpLinearSystem {
        let keep: Vec<usize> = (0..self.modes()).filter(|&i| self.probs[i] > 0.0).collect();
        let pick = |g: &Grid| -> Grid {
            g.iter()
                .map(|phase| keep.iter().map(|&i| phase[i].clone()).collect())
                .collect()
        };
        JumpLinearSystem {
            probs: keep.iter().map(|&i| self.probs[i]).collect(),
            a: pick(&self.a),
            b: pick(&self.b),
            c: pick(&self.c),
            d: pick(&self.d),
        }
    }

    /// Applies `x ↦ T x` to every mode: `A ↦ T A T⁻¹`, `B ↦ T B`, `C ↦ C T⁻¹`.
    pub fn similarity(&self, t: &DMatrix<f64>) -> Result<JumpLinearSystem> {
        let t_inv = linalg::inverse(t)?;
        let map = |g: &Grid, f: &dyn Fn(&DMatrix<f64>) -> DMatrix<f64>| -> Grid {
            g.iter().map(|phase| phase.iter().map(f).collect()).collect()
        };
        Ok(JumpLinearSystem {
            probs: self.probs.clone(),
            a: map(&self.a, &|a| t * a * &t_inv),
            b: map(&self.b, &|b| t * b),
            c: map(&self.c, &|c| c * &t_inv),
            d: self.d.clone(),
        })
    }
}

/// Sensor or actuator link: switch box plus its loss process.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub schedule: SwitchSchedule,
    pub loss: LossChannel,
}

impl Link {
    pub fn new(schedule: SwitchSchedule, loss: LossChannel) -> Self {
        Self { schedule, loss }
    }
}

/// Open-loop networked plant over the four loss modes.
///
/// With `performance = false` the system maps `û ↦ ŷ`. With
/// `performance = true` the input is `[w; û]` and the output `[z; ŷ]`,
/// which needs the generalized blocks.
pub fn assemble_networked_plant(
    plant: &LtiPlant,
    sensor: &Link,
    actuator: &Link,
    performance: bool,
) -> Result<JumpLinearSystem> {
    let n_per = sensor.schedule.period();
    if actuator.schedule.period() != n_per {
        return Err(Error::PeriodMismatch(n_per, actuator.schedule.period()));
    }
    check_link_dims(plant, sensor, actuator)?;
    let g = if performance {
        Some(plant.generalized().ok_or_else(|| {
            Error::Invalid("performance channels requested but the plant has no generalized blocks".into())
        })?)
    } else {
        None
    };
    let probs = mode_probabilities(sensor.loss.alpha(), actuator.loss.alpha()).to_vec();
    let n = plant.n();
    let mut a = Vec::with_capacity(n_per);
    let mut b = Vec::with_capacity(n_per);
    let mut c = Vec::with_capacity(n_per);
    let mut d = Vec::with_capacity(n_per);
    for k in 0..n_per {
        let s1 = sensor.schedule.at(k);
        let s2 = actuator.schedule.at(k);
        let (mut ak, mut bk, mut ck, mut dk) = (vec![], vec![], vec![], vec![]);
        for &(t1, t2) in MODES.iter() {
            let (t1, t2) = (f64::from(t1), f64::from(t2));
            let bu = plant.b() * s2 * t2;
            let cy = s1 * plant.c() * t1;
            ak.push(plant.a().clone());
            match g {
                None => {
                    dk.push(DMatrix::zeros(cy.nrows(), bu.ncols()));
                    bk.push(bu);
                    ck.push(cy);
                }
                Some(g) => {
                    let d12 = &g.d12 * s2 * t2;
                    let d21 = s1 * &g.d21 * t1;
                    let zero = DMatrix::zeros(d21.nrows(), d12.ncols());
                    bk.push(linalg::block(&[vec![&g.b1, &bu]]));
                    ck.push(linalg::block(&[vec![&g.c1], vec![&cy]]));
                    dk.push(linalg::block(&[vec![&g.d11, &d12], vec![&d21, &zero]]));
                }
            }
        }
        debug_assert_eq!(ak[0].nrows(), n);
        a.push(ak);
        b.push(bk);
        c.push(ck);
        d.push(dk);
    }
    JumpLinearSystem::new(probs, a, b, c, d)
}

pub(crate) fn check_link_dims(plant: &LtiPlant, sensor: &Link, actuator: &Link) -> Result<()> {
    if sensor.schedule.side() != Side::Sensor || actuator.schedule.side() != Side::Actuator {
        return Err(Error::Invalid("sensor and actuator schedules swapped".into()));
    }
    if sensor.schedule.dim() != plant.p2() {
        return Err(Error::Dimension(format!(
            "sensor switch box selects among {} outputs, plant has {}",
            sensor.schedule.dim(),
            plant.p2()
        )));
    }
    if actuator.schedule.dim() != plant.m2() {
        return Err(Error::Dimension(format!(
            "actuator switch box selects among {} inputs, plant has {}",
            actuator.schedule.dim(),
            plant.m2()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_plant() -> LtiPlant {
        LtiPlant::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.7, 1.1]),
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, -2.0]),
        )
        .unwrap()
    }

    #[test]
    fn example_plant_diagnostics() {
        let d = validate_plant(&example_plant()).unwrap();
        assert!(d.controllable && d.observable && d.unstable);
        let mut moduli: Vec<f64> = d.eigenvalues.iter().map(|z| z.norm()).collect();
        moduli.sort_by(f64::total_cmp);
        assert!((moduli[0] - 1.1).abs() < 1e-12 && (moduli[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_scalar_plant_is_stable() {
        let p = LtiPlant::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let d = validate_plant(&p).unwrap();
        assert!(d.controllable && d.observable && !d.unstable);
    }

    #[test]
    fn uncontrollable_identity_pair() {
        let p = LtiPlant::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let d = validate_plant(&p).unwrap();
        assert_eq!(d.controllability_rank, 1);
        assert!(!d.controllable);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = LtiPlant::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), DMatrix::zeros(1, 2));
        assert!(matches!(err, Err(Error::Dimension(_))));
        let err = example_plant().with_generalized(GeneralizedBlocks {
            b1: DMatrix::zeros(2, 1),
            c1: DMatrix::zeros(1, 2),
            d11: DMatrix::zeros(1, 1),
            d12: DMatrix::zeros(1, 2),
            d21: DMatrix::zeros(1, 1),
        });
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn sensor_schedule_example() {
        let s = SwitchingPattern::new(vec![1, 1, 2, 0, 0]).unwrap();
        let sched = build_switch_schedule(&s, Side::Sensor, 2).unwrap();
        let m = sched.matrices();
        assert_eq!(m.len(), 5);
        assert_eq!(m[0], DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(m[1], DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(m[2], DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert_eq!(m[3], DMatrix::zeros(1, 2));
        assert_eq!(m[4], DMatrix::zeros(1, 2));
        // N-periodic access: k = 5, 6 are sensor 1, k = 7 is sensor 2.
        assert_eq!(sched.at(7), &m[2]);
        assert_eq!(sched.pattern(), s);
    }

    #[test]
    fn single_rate_and_actuator_schedules() {
        let one = build_switch_schedule(&SwitchingPattern::new(vec![1]).unwrap(), Side::Actuator, 1).unwrap();
        assert_eq!(one.matrices(), &[DMatrix::identity(1, 1)]);
        let s2 = build_switch_schedule(&SwitchingPattern::new(vec![1, 0]).unwrap(), Side::Actuator, 1).unwrap();
        assert_eq!(s2.matrices()[0][(0, 0)], 1.0);
        assert_eq!(s2.matrices()[1][(0, 0)], 0.0);
        assert!(!s2.is_active(3));
    }

    #[test]
    fn out_of_range_entry() {
        let s = SwitchingPattern::new(vec![0, 3]).unwrap();
        assert_eq!(
            build_switch_schedule(&s, Side::Sensor, 2).unwrap_err(),
            Error::PatternRange { slot: 1, entry: 3, max: 2 }
        );
    }

    #[test]
    fn periodic_vector_form() {
        assert!(SwitchingPattern::new(vec![1, 0, 0]).unwrap().is_periodic_vector());
        assert!(SwitchingPattern::new(vec![1, 1, 1]).unwrap().is_periodic_vector());
        assert!(SwitchingPattern::new(vec![1, 0, 1, 0]).unwrap().is_periodic_vector());
        assert!(!SwitchingPattern::new(vec![1, 1, 0]).unwrap().is_periodic_vector());
        assert!(!SwitchingPattern::new(vec![0, 1]).unwrap().is_periodic_vector());
        assert!(!SwitchingPattern::new(vec![1, 1, 0, 0]).unwrap().is_periodic_vector());
        assert_eq!(SwitchingPattern::periodic_vector(6, 2).unwrap().entries(), &[1, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn loss_channel_range() {
        assert!(LossChannel::new(1.0).is_err());
        assert!(LossChannel::new(-0.1).is_err());
        assert!(LossChannel::new(0.0).is_ok());
    }

    fn links(s1: &[usize], a1: f64, s2: &[usize], a2: f64, plant: &LtiPlant) -> (Link, Link) {
        let sens = build_switch_schedule(&SwitchingPattern::new(s1.to_vec()).unwrap(), Side::Sensor, plant.p2()).unwrap();
        let act = build_switch_schedule(&SwitchingPattern::new(s2.to_vec()).unwrap(), Side::Actuator, plant.m2()).unwrap();
        (Link::new(sens, LossChannel::new(a1).unwrap()), Link::new(act, LossChannel::new(a2).unwrap()))
    }

    #[test]
    fn lossless_assembly_collapses_to_mode_11() {
        let plant = example_plant();
        let (s, a) = links(&[1, 1, 1], 0.0, &[1, 1, 1], 0.0, &plant);
        let sys = assemble_networked_plant(&plant, &s, &a, false).unwrap();
        assert_eq!(sys.probs(), &[0.0, 0.0, 0.0, 1.0]);
        for k in 0..3 {
            assert_eq!(sys.a(k, 3), plant.a());
            assert_eq!(sys.b(k, 3), plant.b());
            assert_eq!(sys.c(k, 3), plant.c());
        }
        let pruned = sys.prune_zero_modes();
        assert_eq!(pruned.modes(), 1);
    }

    #[test]
    fn scalar_assembly_two_effective_modes() {
        let plant = LtiPlant::new(
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let (s, a) = links(&[1], 0.0, &[1], 0.3, &plant);
        let sys = assemble_networked_plant(&plant, &s, &a, false).unwrap().prune_zero_modes();
        assert_eq!(sys.modes(), 2);
        assert!((sys.probs()[0] - 0.3).abs() < 1e-15);
        assert_eq!(sys.b(0, 0)[(0, 0)], 0.0);
        assert_eq!(sys.b(0, 1)[(0, 0)], 1.0);
    }

    #[test]
    fn silent_phase_is_mode_independent() {
        let plant = example_plant();
        let (s, a) = links(&[1, 1], 0.2, &[1, 0], 0.4, &plant);
        let sys = assemble_networked_plant(&plant, &s, &a, false).unwrap();
        // At k = 1 the actuator is silent, so θ₂ = 0 and θ₂ = 1 agree.
        assert_eq!(sys.b(1, mode_index(true, false)), sys.b(1, mode_index(true, true)));
        assert_ne!(sys.b(0, mode_index(true, false)), sys.b(0, mode_index(true, true)));
        let total: f64 = sys.probs().iter().sum();
        assert!((total - 1.0).abs() < PROB_TOL);
    }

    #[test]
    fn performance_assembly_needs_generalized_blocks() {
        let plant = example_plant();
        let (s, a) = links(&[1], 0.1, &[1], 0.1, &plant);
        assert!(matches!(assemble_networked_plant(&plant, &s, &a, true), Err(Error::Invalid(_))));
        let (s, _) = links(&[1, 0], 0.1, &[1], 0.1, &plant);
        assert_eq!(assemble_networked_plant(&plant, &s, &a, false).unwrap_err(), Error::PeriodMismatch(2, 1));
    }
}
