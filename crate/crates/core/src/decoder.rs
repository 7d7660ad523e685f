//! Actuator-side decoder presets and internal-stability screening.
//!
//! A decoder substitutes `ζ_k = C_D η_k` for the control value whenever a
//! message is lost or no transmission is scheduled, and feeds the applied
//! input back into its own state: `η⁺ = A_D η + B_D u`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::synthesis::Decoder;

/// Leak factor of the default hold: strictly stable, one part in a thousand
/// away from the exact hold.
pub const DEFAULT_LEAK: f64 = 1.0 - 1e-3;

/// Width of the band around 1 treated as marginal.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Exact zero-order hold: on loss the previous applied input is replayed.
pub fn make_zoh_decoder(m: usize, period: usize) -> Result<Decoder> {
    make_leaky_hold(m, period, 1.0)
}

/// `η⁺ = β u`, `ζ = η`: on loss the previous input scaled by `β` is applied.
pub fn make_leaky_hold(m: usize, period: usize, beta: f64) -> Result<Decoder> {
    if m == 0 || period == 0 {
        return Err(Error::Invalid("decoder needs m >= 1 and N >= 1".into()));
    }
    let eye = DMatrix::<f64>::identity(m, m);
    Decoder::new(
        vec![DMatrix::zeros(m, m); period],
        vec![&eye * beta; period],
        vec![eye; period],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderStability {
    Strict,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoderScreen {
    pub rho: f64,
    pub verdict: DecoderStability,
}

/// Spectral radius of `Π_k (A_{D,k} + B_{D,k} C_{D,k})`, i.e. the decoder
/// running on its own output when nothing arrives.
pub fn check_internal_stability(decoder: &Decoder) -> Result<DecoderScreen> {
    let nd = decoder.nd();
    let mut prod = DMatrix::<f64>::identity(nd, nd);
    for k in 0..decoder.period() {
        let (a, b, c) = decoder.at(k);
        prod = (a + b * c) * prod;
    }
    let rho = linalg::spectral_radius(&prod)?;
    let verdict = if rho < 1.0 - MARGINAL_TOL {
        DecoderStability::Strict
    } else if rho <= 1.0 + MARGINAL_TOL {
        DecoderStability::Marginal
    } else {
        DecoderStability::Unstable
    };
    Ok(DecoderScreen { rho, verdict })
}

/// Named decoder choices.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderPreset {
    None,
    Zoh,
    Leaky(f64),
    Custom(Decoder),
}

impl DecoderPreset {
    /// Parses `none`, `zoh`, `leaky` or `leaky:<beta>`.
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "none" => Ok(Self::None),
            "zoh" => Ok(Self::Zoh),
            "leaky" => Ok(Self::Leaky(DEFAULT_LEAK)),
            _ => {
                let beta = name
                    .strip_prefix("leaky:")
                    .or_else(|| name.strip_prefix("leaky(").and_then(|s| s.strip_suffix(')')))
                    .ok_or_else(|| Error::Invalid(format!("unknown decoder preset '{name}'")))?;
                let beta: f64 = beta
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad leak factor in '{name}'")))?;
                Ok(Self::Leaky(beta))
            }
        }
    }

    pub fn build(&self, m: usize, period: usize) -> Result<Option<Decoder>> {
        Ok(match self {
            Self::None => None,
            Self::Zoh => Some(make_zoh_decoder(m, period)?),
            Self::Leaky(beta) => Some(make_leaky_hold(m, period, *beta)?),
            Self::Custom(d) => Some(d.clone()),
        })
    }
}
