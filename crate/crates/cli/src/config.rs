//! JSON problem description.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use netloss::decoder::DecoderPreset;
use netloss::model::{self, GeneralizedBlocks, Link, LossChannel, LtiPlant, Side, SwitchingPattern};
use netloss::sim::{DisturbanceSpec, InitialState, SimConfig};
use netloss::synthesis::{Decoder, DesignMethod};

use crate::CliError;

/// Row-major matrix.
pub type Rows = Vec<Vec<f64>>;

pub fn to_matrix(rows: &Rows, name: &str) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config(format!("matrix {name} has ragged rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("matrix {name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn from_matrix(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "B1", default)]
    pub b1: Option<Rows>,
    #[serde(rename = "C1", default)]
    pub c1: Option<Rows>,
    #[serde(rename = "D11", default)]
    pub d11: Option<Rows>,
    #[serde(rename = "D12", default)]
    pub d12: Option<Rows>,
    #[serde(rename = "D21", default)]
    pub d21: Option<Rows>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub alpha2: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub s1: Option<Vec<usize>>,
    pub s2: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomDecoder {
    #[serde(rename = "A_D")]
    pub a_d: Rows,
    #[serde(rename = "B_D")]
    pub b_d: Rows,
    #[serde(rename = "C_D")]
    pub c_d: Rows,
}

/// `"none" | "zoh" | "leaky" | "leaky:<β>" | {"leaky": β} | {"custom": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecoderConfig {
    Name(String),
    Leaky { leaky: f64 },
    Custom { custom: CustomDecoder },
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self::Name("none".into())
    }
}

fn default_horizon() -> usize {
    200
}
fn default_trials() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Explicit `x₀`; a random unit vector per trial when absent.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    /// Standard deviation of white disturbances; none when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Add state components to the trajectory CSV.
    #[serde(default)]
    pub components: bool,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            trials: default_trials(),
            seed: 0,
            initial_state: None,
            sigma: None,
            components: false,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Alpha1,
    Alpha2,
}

impl std::str::FromStr for Axis {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "alpha1" => Ok(Self::Alpha1),
            "alpha2" => Ok(Self::Alpha2),
            _ => Err(CliError::Config(format!("axis must be alpha1 or alpha2, got '{s}'"))),
        }
    }
}

/// `"start:stop:step"` or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Range(String),
    List(Vec<f64>),
}

fn default_tol() -> f64 {
    netloss::performance::BISECTION_RTOL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<Axis>,
    pub grid: Option<GridConfig>,
    /// Design route at each grid point; the periodic jump Riccati by default.
    #[serde(default)]
    pub method: Option<DesignMethod>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { axis: None, grid: None, method: None, tol: default_tol() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub plant: PlantConfig,
    #[serde(default)]
    pub channels: ChannelConfig,
    #[serde(default)]
    pub patterns: PatternConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
    /// Lets a marginally stable decoder (the exact hold) through the bound check.
    #[serde(default)]
    pub allow_marginal_decoder: bool,
    #[serde(default)]
    pub design: DesignMethod,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    /// Validates and builds the model objects.
    pub fn build(&self) -> Result<Problem, CliError> {
        let p = &self.plant;
        let mut plant = LtiPlant::new(to_matrix(&p.a, "A")?, to_matrix(&p.b, "B")?, to_matrix(&p.c, "C")?)?;
        let any_generalized = [&p.b1, &p.c1, &p.d11, &p.d12, &p.d21].iter().any(|m| m.is_some());
        if any_generalized {
            let need = |m: &Option<Rows>, name: &str| -> Result<DMatrix<f64>, CliError> {
                to_matrix(
                    m.as_ref().ok_or_else(|| CliError::Config(format!("generalized plant needs {name}")))?,
                    name,
                )
            };
            let b1 = need(&p.b1, "B1")?;
            let c1 = need(&p.c1, "C1")?;
            // D11 defaults to zero once the other blocks fix its shape.
            let d11 = match &p.d11 {
                Some(m) => to_matrix(m, "D11")?,
                None => DMatrix::zeros(c1.nrows(), b1.ncols()),
            };
            let blocks = GeneralizedBlocks { b1, c1, d11, d12: need(&p.d12, "D12")?, d21: need(&p.d21, "D21")? };
            plant = plant.with_generalized(blocks)?;
        }
        let diag = model::validate_plant(&plant)?;
        let s1 = SwitchingPattern::new(self.patterns.s1.clone().unwrap_or_else(|| vec![1]))?;
        let s2 = SwitchingPattern::new(self.patterns.s2.clone().unwrap_or_else(|| vec![1]))?;
        if s1.period() != s2.period() {
            return Err(CliError::Config(format!(
                "patterns s1 and s2 must share a period (got {} and {})",
                s1.period(),
                s2.period()
            )));
        }
        let sensor = Link::new(
            model::build_switch_schedule(&s1, Side::Sensor, plant.p2())?,
            LossChannel::new(self.channels.alpha1)?,
        );
        let actuator = Link::new(
            model::build_switch_schedule(&s2, Side::Actuator, plant.m2())?,
            LossChannel::new(self.channels.alpha2)?,
        );
        let decoder = self.decoder_preset()?.build(plant.m2(), s1.period())?;
        if self.sim.horizon == 0 || self.sim.trials == 0 {
            return Err(CliError::Config("sim.horizon and sim.trials must be at least 1".into()));
        }
        if let Some(x0) = &self.sim.initial_state {
            if x0.len() != plant.n() {
                return Err(CliError::Config(format!(
                    "sim.initial_state has {} entries, plant order is {}",
                    x0.len(),
                    plant.n()
                )));
            }
        }
        Ok(Problem { plant, sensor, actuator, decoder, diagnostics: diag, config: self.clone() })
    }

    pub fn decoder_preset(&self) -> Result<DecoderPreset, CliError> {
        Ok(match &self.decoder {
            DecoderConfig::Name(name) => DecoderPreset::parse(name)?,
            DecoderConfig::Leaky { leaky } => DecoderPreset::Leaky(*leaky),
            DecoderConfig::Custom { custom } => {
                let period = self.patterns.s1.as_ref().map_or(1, Vec::len);
                let a = to_matrix(&custom.a_d, "A_D")?;
                let b = to_matrix(&custom.b_d, "B_D")?;
                let c = to_matrix(&custom.c_d, "C_D")?;
                DecoderPreset::Custom(Decoder::new(vec![a; period], vec![b; period], vec![c; period])?)
            }
        })
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            horizon: self.sim.horizon,
            trials: self.sim.trials,
            seed: self.sim.seed,
            initial_state: match &self.sim.initial_state {
                Some(v) => InitialState::Fixed(v.clone()),
                None => InitialState::UnitSphere,
            },
            disturbance: match self.sim.sigma {
                Some(sigma) if sigma > 0.0 => DisturbanceSpec::White { sigma },
                _ => DisturbanceSpec::None,
            },
        }
    }
}

/// Validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub plant: LtiPlant,
    pub sensor: Link,
    pub actuator: Link,
    pub decoder: Option<Decoder>,
    pub diagnostics: model::PlantDiagnostics,
    pub config: ProblemConfig,
}

impl Problem {
    pub fn with_alphas(&self, alpha1: f64, alpha2: f64) -> Result<Problem, CliError> {
        let mut p = self.clone();
        p.sensor.loss = LossChannel::new(alpha1)?;
        p.actuator.loss = LossChannel::new(alpha2)?;
        p.config.channels = ChannelConfig { alpha1, alpha2 };
        Ok(p)
    }
}

/// Inclusive grid `start, start + step, …, ≤ stop`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let err = || CliError::Config(format!("grid must be start:stop:step, got '{spec}'"));
    if parts.len() != 3 {
        return Err(err());
    }
    let nums: Vec<f64> = parts.iter().map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| err())?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(CliError::Config(format!("empty grid '{spec}'")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}
