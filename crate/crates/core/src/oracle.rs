//! Reference routines used by tests and by the acceptance suite.
//!
//! Each routine recomputes a quantity by a route that shares no code with
//! the production implementation: exhaustive enumeration, direct recursion,
//! brute-force summation or closed forms.

use crate::real::Real;
use crate::roughpath::GridRoughPath;

/// Second level between grid points by a direct double sum
/// `Σ_{i≤k<j} 𝕏_{k,k+1} + Σ_{i≤l<k<j} ΔX_l ΔX_k`.
pub fn area_double_sum<T: Real>(rp: &GridRoughPath<T>, i: usize, j: usize) -> T {
    let x = rp.x();
    let mut acc = T::zero();
    for k in i..j {
        acc += rp.xx()[k];
        for l in i..k {
            acc += (x[l + 1] - x[l]) * (x[k + 1] - x[k]);
        }
    }
    acc
}

/// `W_{t_a,t_b}` by enumerating every subset of interior grid points.
pub fn brute_force_w<T: Real>(rp: &GridRoughPath<T>, eta: T, a: usize, b: usize) -> T {
    if b <= a {
        return T::zero();
    }
    let ge = rp.gamma() - eta;
    let interior = b - a - 1;
    let mut best = T::zero();
    for mask in 0u64..(1u64 << interior) {
        let mut pts = vec![a];
        for bit in 0..interior {
            if mask & (1 << bit) != 0 {
                pts.push(a + 1 + bit);
            }
        }
        pts.push(b);
        let mut total = T::zero();
        for w in pts.windows(2) {
            let h = T::from_count(w[1] - w[0]) * rp.dt();
            let xi = rp.increment(w[0], w[1]).abs();
            let ar = area_double_sum(rp, w[0], w[1]).abs();
            total += h.powf(-eta / ge) * (xi.powf(T::one() / ge) + ar.powf(T::one() / (ge + ge)));
        }
        if total > best {
            best = total;
        }
    }
    best
}

/// Largest admissible sequence for the discrete Gronwall hypothesis, built
/// by direct recursion: `u_n = a + Σ_{k<n} b_k u_k + Σ_{k<n} c_k − slack_n`.
pub fn gronwall_recursion(a: f64, u0: f64, b: &[f64], c: &[f64], slack: &[f64]) -> Vec<f64> {
    let mut u = vec![u0];
    for n in 1..=b.len() {
        let s: f64 = (0..n).map(|k| b[k] * u[k] + c[k]).sum();
        u.push((a + s - slack[n - 1]).max(0.0));
    }
    u
}

/// `Σ_{k=1}^{K} h e^{-λk}`.
pub fn geometric_series(h: f64, lambda: f64, k: usize) -> f64 {
    (1..=k).map(|j| h * (-lambda * j as f64).exp()).sum()
}

/// Centered finite difference with relative step.
pub fn central_difference(f: impl Fn(f64) -> f64, z: f64, rel_step: f64) -> f64 {
    let h = rel_step * z.abs().max(1e-3);
    (f(z + h) - f(z - h)) / (2.0 * h)
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
