//! Period lifting: an N-periodic system observed every N steps is a
//! time-invariant system on super-steps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::JumpLinearSystem;

/// Default cap on the number of composite modes `M^N`.
pub const DEFAULT_MODE_CAP: usize = 1 << 20;

/// `x̃⁺ = Ã x̃ + B̃ ũ` with `ũ` the stacked inputs of one period.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPlant {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
}

/// `Ã = A^N`, `B̃ = [A^{N-1}B, A^{N-2}B, …, B]`.
pub fn lift_lti(a: &DMatrix<f64>, b: &DMatrix<f64>, period: usize) -> Result<LiftedPlant> {
    if period == 0 {
        return Err(Error::Invalid("lifting period must be >= 1".into()));
    }
    if !a.is_square() || b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!("A {:?}, B {:?}", a.shape(), b.shape())));
    }
    let (n, m) = b.shape();
    let mut b_tilde = DMatrix::zeros(n, period * m);
    let mut blk = b.clone();
    // Rightmost block is B, moving left multiplies by A.
    for j in (0..period).rev() {
        b_tilde.view_mut((0, j * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    Ok(LiftedPlant { a_tilde: linalg::mat_pow(a, period), b_tilde })
}

/// Composite mode index of the tuple `(i_0, …, i_{N-1})`: `Σ i_r M^r`.
pub fn composite_mode_index(tuple: &[usize], modes: usize) -> usize {
    tuple.iter().rev().fold(0, |acc, &i| acc * modes + i)
}

pub fn composite_mode_tuple(mut index: usize, modes: usize, period: usize) -> Vec<usize> {
    (0..period)
        .map(|_| {
            let i = index % modes;
            index /= modes;
            i
        })
        .collect()
}

/// One-step system whose modes are N-tuples of the original modes, with
/// transition `A_{N-1,i_{N-1}} ⋯ A_{0,i_0}` and product probabilities.
/// Inputs and outputs are dropped.
pub fn lift_jump_over_period(sys: &JumpLinearSystem, cap: usize) -> Result<JumpLinearSystem> {
    let (m, period) = (sys.modes(), sys.period());
    let count = (m as u128).checked_pow(period as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::Capacity { count, cap });
    }
    let count = count as usize;
    let mut probs = Vec::with_capacity(count);
    let mut mats = Vec::with_capacity(count);
    for idx in 0..count {
        let tuple = composite_mode_tuple(idx, m, period);
        let mut p = 1.0;
        let mut prod = DMatrix::identity(sys.n(), sys.n());
        for (k, &i) in tuple.iter().enumerate() {
            p *= sys.probs()[i];
            prod = sys.a(k, i) * prod;
        }
        probs.push(p);
        mats.push(prod);
    }
    // Products of probabilities that sum to one can drift in the last bits.
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    JumpLinearSystem::autonomous(probs, vec![mats])
}

/// Stacked gain of the lifted loop for an actuator pattern whose first `n2`
/// slots transmit. Block `r < n2` is
/// `θ_r F_r (A + θ_{r-1} B F_{r-1}) ⋯ (A + θ_0 B F_0)`; later blocks are zero.
///
/// `gains[r]` is the effective `m x n` gain at slot `r` (switch box included).
pub fn lifted_feedback_map(
    gains: &[DMatrix<f64>],
    thetas: &[bool],
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    period: usize,
    n2: usize,
) -> Result<DMatrix<f64>> {
    if n2 > period {
        return Err(Error::Invalid(format!("N2 = {n2} exceeds N = {period}")));
    }
    if gains.len() != n2 || thetas.len() != n2 {
        return Err(Error::Dimension(format!(
            "expected {n2} gains and loss flags, got {} and {}",
            gains.len(),
            thetas.len()
        )));
    }
    let (n, m) = b.shape();
    if let Some(g) = gains.iter().find(|g| g.shape() != (m, n)) {
        return Err(Error::Dimension(format!("gain {:?}, expected {:?}", g.shape(), (m, n))));
    }
    let mut out = DMatrix::zeros(period * m, n);
    let mut prod = DMatrix::identity(n, n);
    for r in 0..n2 {
        let gated = if thetas[r] { gains[r].clone() } else { DMatrix::zeros(m, n) };
        out.view_mut((r * m, 0), (m, n)).copy_from(&(&gated * &prod));
        prod = (a + b * &gated) * prod;
    }
    Ok(out)
}
