#![allow(dead_code)]

use nalgebra::{Complex, DMatrix};
use netloss::model::*;
use netloss::sim::SplitMix64;

pub fn s(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn example_plant() -> LtiPlant {
    LtiPlant::new(
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.7, 1.1]),
        DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, -2.0]),
    )
    .unwrap()
    .with_generalized(GeneralizedBlocks {
        b1: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        c1: DMatrix::from_row_slice(1, 2, &[0.5, -1.0]),
        d11: DMatrix::zeros(1, 1),
        d12: s(1.0),
        d21: s(1.0),
    })
    .unwrap()
}

pub fn link(pattern: &[usize], side: Side, alpha: f64) -> Link {
    Link::new(
        build_switch_schedule(&SwitchingPattern::new(pattern.to_vec()).unwrap(), side, 1).unwrap(),
        LossChannel::new(alpha).unwrap(),
    )
}

pub fn gaussian_matrix(rng: &mut SplitMix64, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.next_gaussian())
}

pub fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

pub fn below(rng: &mut SplitMix64, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// Random probability vector of length `m` (some entries may be tiny, none zero).
pub fn random_probs(rng: &mut SplitMix64, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| 0.05 + rng.next_f64()).collect();
    let t: f64 = raw.iter().sum();
    raw.iter().map(|v| v / t).collect()
}

/// Random autonomous jump system with n ≤ max_n, M ≤ max_m, N ≤ max_p.
pub fn random_jump(rng: &mut SplitMix64, max_n: usize, max_m: usize, max_p: usize) -> JumpLinearSystem {
    let n = 1 + below(rng, max_n);
    let m = 1 + below(rng, max_m);
    let p = 1 + below(rng, max_p);
    let scale = uniform(rng, 0.2, 1.0) / (n as f64).sqrt();
    let a = (0..p).map(|_| (0..m).map(|_| gaussian_matrix(rng, n, n, scale)).collect()).collect();
    JumpLinearSystem::autonomous(random_probs(rng, m), a).unwrap()
}

/// Unstable controllable single-input pair with n ≤ 3.
pub fn random_unstable_pair(rng: &mut SplitMix64) -> (DMatrix<f64>, DMatrix<f64>) {
    loop {
        let n = 1 + below(rng, 3);
        let a = gaussian_matrix(rng, n, n, 1.2);
        let b = gaussian_matrix(rng, n, 1, 1.0);
        let eig = netloss::linalg::eigenvalues(&a).unwrap();
        let unstable = eig.iter().any(|z| z.norm() > 1.05);
        let marginal = eig.iter().any(|z| (z.norm() - 1.0).abs() < 0.05);
        let prod: f64 = eig.iter().map(|z| z.norm()).filter(|&r| r > 1.0).product();
        let ctrb = netloss::linalg::controllability_matrix(&a, &b);
        let sv = ctrb.clone().svd(false, false).singular_values;
        let well = sv.min() > 1e-3 * sv.max();
        if unstable && !marginal && well && prod < 20.0 {
            return (a, b);
        }
    }
}

/// Independent oracle for ρ(T): power iteration on the covariance
/// recursion `X ↦ Σ_i p_i A_{k,i} X A_{k,i}ᵀ` over whole periods.
pub fn covariance_growth(sys: &JumpLinearSystem, periods: usize) -> f64 {
    let n = sys.n();
    let mut x = DMatrix::<f64>::identity(n, n);
    let mut log_sum = 0.0;
    let mut last = 0.0;
    for it in 0..periods {
        for k in 0..sys.period() {
            let mut nx = DMatrix::zeros(n, n);
            for (i, &p) in sys.probs().iter().enumerate() {
                nx += sys.a(k, i) * &x * sys.a(k, i).transpose() * p;
            }
            x = nx;
        }
        let tr = x.trace();
        if tr == 0.0 {
            return 0.0;
        }
        x /= tr;
        if it >= periods / 2 {
            log_sum += tr.ln();
            last += 1.0;
        }
    }
    (log_sum / last).exp()
}

/// Peak of `|C (zI − A)⁻¹ B + D|` on the unit circle by dense sampling
/// plus golden-section refinement around the best sample.
pub fn peak_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: f64) -> f64 {
    let n = a.nrows();
    let gain = |w: f64| -> f64 {
        let z = Complex::new(w.cos(), w.sin());
        let m = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
            let v = Complex::new(-a[(i, j)], 0.0);
            if i == j { v + z } else { v }
        });
        let bc = b.map(|v| Complex::new(v, 0.0));
        let x = m.lu().solve(&bc).unwrap();
        let mut g = Complex::new(d, 0.0);
        for i in 0..n {
            g += x[(i, 0)] * c[(0, i)];
        }
        g.norm()
    };
    let samples = 20_000;
    let step = std::f64::consts::PI / samples as f64;
    let (mut best_w, mut best) = (0.0, gain(0.0));
    for i in 1..=samples {
        let w = i as f64 * step;
        let g = gain(w);
        if g > best {
            best = g;
            best_w = w;
        }
    }
    let (mut lo, mut hi) = ((best_w - step).max(0.0), (best_w + step).min(std::f64::consts::PI));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if gain(m1) < gain(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    best.max(gain(0.5 * (lo + hi)))
}
