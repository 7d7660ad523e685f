//! Controller gains on disk.
//!
//! ```json
//! {"kind": "observer", "F": [[F_k0, F_k1], ...], "L": [[L_k0, L_k1], ...]}
//! {"kind": "general", "A_hat": [[[A_k00, A_k01], [A_k10, A_k11]], ...],
//!  "B_hat": [[B_k0, B_k1], ...], "C_hat": [[C_k0, C_k1], ...], "D_hat": [D_k, ...]}
//! ```
//!
//! Index `k` is the phase; the inner pairs are indexed by the mode bits
//! described in the library (`F` by θ₁, `L` by θ₂, `Â` by θ₁ then θ₂).

use serde::{Deserialize, Serialize};

use netloss::synthesis::{Controller, GeneralController};

use crate::config::{from_matrix, to_matrix, Rows};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GainsFile {
    Observer {
        #[serde(rename = "F")]
        f: Vec<[Rows; 2]>,
        #[serde(rename = "L")]
        l: Vec<[Rows; 2]>,
    },
    General {
        #[serde(rename = "A_hat")]
        a_hat: Vec<[[Rows; 2]; 2]>,
        #[serde(rename = "B_hat")]
        b_hat: Vec<[Rows; 2]>,
        #[serde(rename = "C_hat")]
        c_hat: Vec<[Rows; 2]>,
        #[serde(rename = "D_hat")]
        d_hat: Vec<Rows>,
    },
}

/// A controller in either form.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyController {
    Observer(Controller),
    General(GeneralController),
}

impl GainsFile {
    pub fn from_controller(c: &Controller) -> Self {
        let pair = |g: &[nalgebra::DMatrix<f64>; 2]| [from_matrix(&g[0]), from_matrix(&g[1])];
        Self::Observer {
            f: c.f_gains().iter().map(pair).collect(),
            l: c.l_gains().iter().map(pair).collect(),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad gains file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gains serialize")
    }

    pub fn build(&self) -> Result<AnyController, CliError> {
        let pair = |g: &[Rows; 2], name: &str| -> Result<[nalgebra::DMatrix<f64>; 2], CliError> {
            Ok([to_matrix(&g[0], name)?, to_matrix(&g[1], name)?])
        };
        match self {
            Self::Observer { f, l } => {
                let f = f.iter().map(|g| pair(g, "F")).collect::<Result<_, _>>()?;
                let l = l.iter().map(|g| pair(g, "L")).collect::<Result<_, _>>()?;
                Ok(AnyController::Observer(Controller::new(f, l)?))
            }
            Self::General { a_hat, b_hat, c_hat, d_hat } => Ok(AnyController::General(GeneralController {
                a_hat: a_hat
                    .iter()
                    .map(|g| Ok([pair(&g[0], "A_hat")?, pair(&g[1], "A_hat")?]))
                    .collect::<Result<_, CliError>>()?,
                b_hat: b_hat.iter().map(|g| pair(g, "B_hat")).collect::<Result<_, _>>()?,
                c_hat: c_hat.iter().map(|g| pair(g, "C_hat")).collect::<Result<_, _>>()?,
                d_hat: d_hat.iter().map(|g| to_matrix(g, "D_hat")).collect::<Result<_, _>>()?,
            })),
        }
    }
}
