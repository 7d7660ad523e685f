//! Stochastic stability certification, critical message-loss probabilities,
//! gain synthesis and Monte Carlo simulation for linear plants controlled
//! over a shared, periodically scheduled, lossy channel.
//!
//! The closed loops handled here are N-periodic linear systems whose matrices
//! switch with i.i.d. Bernoulli loss processes on the sensor and actuator
//! sides. Stability of such systems is decided by the spectral radius of the
//! period-composed second-moment operator and, independently, by coupled
//! Lyapunov inequalities.
//!
//! Module map:
//!
//! - [`model`]: plants, switching patterns, switch boxes, loss channels and
//!   the jump-linear-system container.
//! - [`lifting`]: period lifting of plants and jump systems.
//! - [`stability`]: second-moment operator, certificates, Lyapunov witnesses.
//! - [`bounds`]: closed-form critical loss probabilities.
//! - [`synthesis`]: Riccati gain design, observers, controllers, closed loops.
//! - [`decoder`]: actuator-side decoder presets and their screening.
//! - [`performance`]: l2-induced norm verification and bisection.
//! - [`sim`]: seeded simulation and second-moment estimation.

pub mod bounds;
pub mod decoder;
pub mod error;
pub mod format;
pub mod lifting;
pub mod linalg;
pub mod model;
pub mod performance;
pub mod sim;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result};
pub use model::{
    JumpLinearSystem, LossChannel, LtiPlant, Side, SwitchSchedule, SwitchingPattern,
};
pub use stability::{StabilityCertificate, Verdict};
