//! Closed-form critical loss probabilities.
//!
//! Every bound has the shape `1 / agg_{|λ_i| > 1} |λ_i|^{2N/N_i}` where the
//! aggregate is a product (single-input/single-output and state-feedback
//! cases) or a maximum (general multi-channel case), `N` is the period and
//! `N_i` the number of scheduled transmissions per period.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::decoder::{self, DecoderStability};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::SwitchingPattern;
use crate::synthesis::Decoder;

/// `|λ| > 1 + UNSTABLE_TOL` counts as unstable.
pub const UNSTABLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Product,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rigor {
    /// Necessary and sufficient.
    Exact,
    /// Same formula evaluated outside the setting where it is proved.
    Heuristic,
    /// Necessary condition only.
    NecessaryOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalBound {
    pub value: f64,
    /// `2N / N_i`.
    pub exponent: f64,
    pub unstable_moduli: Vec<f64>,
    /// Eigenvalues on the unit circle (within tolerance), excluded from the aggregate.
    pub marginal_count: usize,
    pub aggregation: Aggregation,
    pub rigor: Rigor,
    /// Set when no unstable eigenvalue exists: any loss probability below one works.
    pub stable_plant: bool,
}

impl CriticalBound {
    /// `alpha` is strictly below the bound.
    pub fn admits(&self, alpha: f64) -> bool {
        alpha < self.value
    }
}

struct Spectrum {
    unstable: Vec<f64>,
    marginal: usize,
}

fn spectrum(a: &DMatrix<f64>) -> Result<Spectrum> {
    let mut unstable = Vec::new();
    let mut marginal = 0;
    for z in linalg::eigenvalues(a)? {
        let r = z.norm();
        if r > 1.0 + UNSTABLE_TOL {
            unstable.push(r);
        } else if r >= 1.0 - UNSTABLE_TOL {
            marginal += 1;
        }
    }
    unstable.sort_by(|x, y| y.total_cmp(x));
    if marginal > 0 {
        log::warn!("{marginal} eigenvalue(s) on the unit circle excluded from the bound");
    }
    Ok(Spectrum { unstable, marginal })
}

fn evaluate(a: &DMatrix<f64>, exponent: f64, aggregation: Aggregation, rigor: Rigor) -> Result<CriticalBound> {
    let spec = spectrum(a)?;
    // Work in logs so that high exponents do not overflow.
    let log_agg = match aggregation {
        Aggregation::Product => spec.unstable.iter().map(|r| r.ln()).sum::<f64>(),
        Aggregation::Max => spec.unstable.first().map(|r| r.ln()).unwrap_or(0.0),
    };
    let value = (-exponent * log_agg).exp();
    Ok(CriticalBound {
        value,
        exponent,
        stable_plant: spec.unstable.is_empty(),
        unstable_moduli: spec.unstable,
        marginal_count: spec.marginal,
        aggregation,
        rigor,
    })
}

fn check_counts(period: usize, count: usize) -> Result<()> {
    if period == 0 || count == 0 || count > period {
        return Err(Error::Invalid(format!(
            "need 1 <= N_i <= N, got N = {period}, N_i = {count}"
        )));
    }
    Ok(())
}

/// Single-rate state feedback with actuator losses: `1 / Π |λ_i|²`.
pub fn critical_alpha_state(a: &DMatrix<f64>) -> Result<CriticalBound> {
    evaluate(a, 2.0, Aggregation::Product, Rigor::Exact)
}

/// Periodic transmission, single channel: `1 / Π |λ_i|^{2N/N_i}`.
///
/// With `strict` the count must divide the period. Without it any count is
/// accepted and the result is labeled heuristic when `N_i ∤ N`.
pub fn critical_alpha_periodic(a: &DMatrix<f64>, period: usize, count: usize, strict: bool) -> Result<CriticalBound> {
    check_counts(period, count)?;
    let divides = period.is_multiple_of(count);
    if strict && !divides {
        return Err(Error::PatternForm(format!("N_i = {count} does not divide N = {period}")));
    }
    let rigor = if divides { Rigor::Exact } else { Rigor::Heuristic };
    evaluate(a, 2.0 * period as f64 / count as f64, Aggregation::Product, rigor)
}

/// Bound for a concrete pattern. Exact for periodic vectors, heuristic otherwise.
pub fn critical_alpha_for_pattern(a: &DMatrix<f64>, pattern: &SwitchingPattern) -> Result<CriticalBound> {
    let count = pattern.transmissions();
    if count == 0 {
        return Err(Error::Invalid("pattern schedules no transmission".into()));
    }
    let mut bound = critical_alpha_periodic(a, pattern.period(), count, false)?;
    if !pattern.is_periodic_vector() {
        bound.rigor = Rigor::Heuristic;
    }
    Ok(bound)
}

/// Multi-channel bound `1 / max |λ_i|^{2N/N_i}`. Necessary only, unless the
/// caller asserts that the relevant input (or output) matrix is invertible.
pub fn critical_alpha_mimo(a: &DMatrix<f64>, period: usize, count: usize, invertible: bool) -> Result<CriticalBound> {
    check_counts(period, count)?;
    let rigor = if invertible { Rigor::Exact } else { Rigor::NecessaryOnly };
    evaluate(a, 2.0 * period as f64 / count as f64, Aggregation::Max, rigor)
}

/// Bound in the presence of an actuator-side decoder: the same as without it.
///
/// The decoder must be strictly internally stable; a marginal one (such as
/// the exact hold) is rejected unless `allow_marginal` is set.
pub fn decoder_adjusted_bound(
    a: &DMatrix<f64>,
    period: usize,
    count: usize,
    decoder: Option<&Decoder>,
    strict: bool,
    allow_marginal: bool,
) -> Result<CriticalBound> {
    if let Some(d) = decoder {
        let screen = decoder::check_internal_stability(d)?;
        match screen.verdict {
            DecoderStability::Strict => {}
            DecoderStability::Marginal if allow_marginal => {
                log::warn!("marginally stable decoder admitted by override");
            }
            DecoderStability::Marginal => {
                return Err(Error::DecoderRejected {
                    rho: screen.rho,
                    reason: "marginally stable decoder; the bound needs a strictly stable one".into(),
                })
            }
            DecoderStability::Unstable => {
                return Err(Error::DecoderRejected { rho: screen.rho, reason: "decoder is internally unstable".into() })
            }
        }
    }
    critical_alpha_periodic(a, period, count, strict)
}

/// Infimum over stabilizing `F` of the peak gain of `F (zI − A − BF)⁻¹ B`:
/// `Π_{|λ_i|>1} |λ_i|`. Refused for stable `A`, where the true infimum is 0.
pub fn min_attenuation(a: &DMatrix<f64>) -> Result<f64> {
    let spec = spectrum(a)?;
    if spec.unstable.is_empty() {
        return Err(Error::Domain("A has no eigenvalue outside the unit circle".into()));
    }
    Ok(spec.unstable.iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.7, 1.1])
    }

    #[test]
    fn state_bound_for_example() {
        let b = critical_alpha_state(&example_a()).unwrap();
        assert_relative_eq!(b.value, 1.0 / 4.84, max_relative = 1e-12);
        assert_eq!(b.rigor, Rigor::Exact);
        // Printed to three figures.
        assert_eq!(format!("{:.3}", b.value), "0.207");
    }

    #[test]
    fn stable_matrix_gives_one() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, -0.3]);
        let b = critical_alpha_state(&a).unwrap();
        assert_eq!(b.value, 1.0);
        assert!(b.stable_plant);
        assert!(b.unstable_moduli.is_empty());
    }

    #[test]
    fn scalar_state_bound_matches_brute_force() {
        // Minimise α a² + (1−α)(a+f)² over a fine grid of f: stable iff the
        // minimum is below 1. The largest stable α on a grid must sit at 0.25.
        let a = 2.0f64;
        let best = |alpha: f64| {
            (0..=40_000)
                .map(|i| -6.0 + 12.0 * i as f64 / 40_000.0)
                .map(|f| alpha * a * a + (1.0 - alpha) * (a + f).powi(2))
                .fold(f64::INFINITY, f64::min)
        };
        assert!(best(0.249) < 1.0);
        assert!(best(0.251) > 1.0);
        let b = critical_alpha_state(&DMatrix::from_element(1, 1, a)).unwrap();
        assert_relative_eq!(b.value, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn periodic_bounds_for_example() {
        let a = example_a();
        let b = critical_alpha_periodic(&a, 3, 1, true).unwrap();
        assert_relative_eq!(b.value, 2.2f64.powi(-6), max_relative = 1e-12);
        assert_eq!(format!("{:.5}", b.value), "0.00882");
        let h = critical_alpha_periodic(&a, 3, 2, false).unwrap();
        assert_eq!(h.rigor, Rigor::Heuristic);
        assert_relative_eq!(h.value, 2.2f64.powi(-3), max_relative = 1e-12);
        assert_eq!(format!("{:.4}", h.value), "0.0939");
        assert!(critical_alpha_periodic(&a, 3, 2, true).is_err());
        let d = critical_alpha_periodic(&a, 2, 1, true).unwrap();
        assert_eq!(format!("{:.4}", d.value), "0.0427");
    }

    #[test]
    fn pattern_bound_labels() {
        let a = example_a();
        let p = SwitchingPattern::new(vec![1, 1, 0, 0]).unwrap();
        let b = critical_alpha_for_pattern(&a, &p).unwrap();
        assert_eq!(b.rigor, Rigor::Heuristic);
        let p = SwitchingPattern::new(vec![1, 0, 1, 0]).unwrap();
        assert_eq!(critical_alpha_for_pattern(&a, &p).unwrap().rigor, Rigor::Exact);
    }

    #[test]
    fn full_rate_matches_state_bound() {
        let a = example_a();
        let s = critical_alpha_state(&a).unwrap().value;
        for n in 1..6 {
            assert_relative_eq!(critical_alpha_periodic(&a, n, n, true).unwrap().value, s, max_relative = 1e-14);
        }
    }

    #[test]
    fn mimo_bounds() {
        let a = example_a();
        assert_relative_eq!(critical_alpha_mimo(&a, 1, 1, false).unwrap().value, 0.25, epsilon = 1e-14);
        let b = critical_alpha_mimo(&a, 2, 1, false).unwrap();
        assert_relative_eq!(b.value, 0.0625, epsilon = 1e-14);
        assert_eq!(b.rigor, Rigor::NecessaryOnly);
        assert_eq!(critical_alpha_mimo(&a, 2, 1, true).unwrap().rigor, Rigor::Exact);
        assert_eq!(critical_alpha_mimo(&(DMatrix::identity(2, 2) * 0.5), 3, 1, false).unwrap().value, 1.0);
    }

    #[test]
    fn min_attenuation_values() {
        assert_relative_eq!(min_attenuation(&example_a()).unwrap(), 2.2, max_relative = 1e-12);
        assert_relative_eq!(min_attenuation(&DMatrix::from_element(1, 1, 2.0)).unwrap(), 2.0);
        let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.3]);
        assert_relative_eq!(min_attenuation(&a).unwrap(), 1.5, max_relative = 1e-12);
        assert!(matches!(min_attenuation(&(DMatrix::identity(2, 2) * 0.2)), Err(Error::Domain(_))));
    }

    #[test]
    fn unit_circle_eigenvalue_is_marginal() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let b = critical_alpha_state(&a).unwrap();
        assert_eq!(b.marginal_count, 1);
        assert_relative_eq!(b.value, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn invalid_counts() {
        let a = example_a();
        assert!(critical_alpha_periodic(&a, 3, 0, false).is_err());
        assert!(critical_alpha_periodic(&a, 3, 4, false).is_err());
        assert!(critical_alpha_mimo(&a, 0, 0, false).is_err());
    }
}
