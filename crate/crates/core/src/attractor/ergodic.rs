//! Moments `K_q = E[[X]_γ^q]`, `𝕂_q = E[[𝕏]_{2γ}^q]` of the noise seminorms
//! on unit windows, by time averages along one path and by ensembles.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::roughpath::GridRoughPath;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicReport<T: Real> {
    pub k_q: T,
    pub kk_q: T,
    pub k_bold: T,
    pub q: T,
    pub n_samples: usize,
    /// Standard error of `k_bold`.
    pub std_err: T,
}

/// Largest `q` for which `n · max^{2q}` stays representable.
pub fn max_safe_q<T: Real>(max_seminorm: T, n: usize) -> T {
    if max_seminorm <= T::one() {
        return T::infinity();
    }
    (T::max_value().ln() - T::from_count(n.max(1)).ln()) / (T::lit(2.0) * max_seminorm.ln())
}

/// Moment estimate from per-window seminorm pairs `([X]_γ, [𝕏]_{2γ})`.
pub fn ergodic_moments<T: Real>(seminorms: &[(T, T)], q: T) -> Result<ErgodicReport<T>> {
    if !(q >= T::one()) {
        return invalid(format!("moment order q = {q} must be at least 1"));
    }
    let n = seminorms.len();
    if n < 2 {
        return invalid("need at least two windows");
    }
    let worst = seminorms.iter().fold(T::zero(), |m, &(a, b)| m.max(a).max(b));
    let safe = max_safe_q(worst, n);
    if q > safe {
        return Err(Error::Range(format!("q = {q} overflows the moment estimate; max safe q = {safe}")));
    }
    let nf = T::from_count(n);
    let vals: Vec<(T, T)> = seminorms.iter().map(|&(a, b)| (a.powf(q), b.powf(q))).collect();
    let k_q = vals.iter().map(|v| v.0).sum::<T>() / nf;
    let kk_q = vals.iter().map(|v| v.1).sum::<T>() / nf;
    let k_bold = k_q + kk_q;
    let var = vals.iter().map(|v| (v.0 + v.1 - k_bold).powi(2)).sum::<T>() / (nf - T::one());
    Ok(ErgodicReport { k_q, kk_q, k_bold, q, n_samples: n, std_err: (var / nf).sqrt() })
}

/// Seminorms on the consecutive unit windows of `rp`, starting at its first
/// grid point.
pub fn window_seminorms<T: Real>(rp: &GridRoughPath<T>, steps_per_unit: usize) -> Result<Vec<(T, T)>> {
    if steps_per_unit == 0 || rp.n_cells() < steps_per_unit {
        return invalid("path shorter than one unit window");
    }
    let n = rp.n_cells() / steps_per_unit;
    Ok((0..n)
        .into_par_iter()
        .map(|j| {
            let h = rp.holder_report_idx(j * steps_per_unit, (j + 1) * steps_per_unit);
            (h.seminorm_x, h.seminorm_xx)
        })
        .collect())
}

/// Time average over the unit windows of one long realization.
pub fn time_average<T: Real>(rp: &GridRoughPath<T>, steps_per_unit: usize, q: T) -> Result<ErgodicReport<T>> {
    ergodic_moments(&window_seminorms(rp, steps_per_unit)?, q)
}

/// Ensemble average over the first unit window of independent samples.
pub fn ensemble_average<T: Real>(samples: &[GridRoughPath<T>], steps_per_unit: usize, q: T) -> Result<ErgodicReport<T>> {
    let sem: Vec<(T, T)> = samples
        .par_iter()
        .map(|rp| {
            if rp.n_cells() < steps_per_unit {
                return invalid("sample shorter than one unit window");
            }
            let h = rp.holder_report_idx(0, steps_per_unit);
            Ok((h.seminorm_x, h.seminorm_xx))
        })
        .collect::<Result<_>>()?;
    ergodic_moments(&sem, q)
}

/// Both estimators and whether they agree within `k_sigma` combined
/// standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirkhoffCheck<T: Real> {
    pub time: ErgodicReport<T>,
    pub ensemble: ErgodicReport<T>,
    pub z_score: T,
    pub agree: bool,
}

pub fn birkhoff_check<T: Real>(time: ErgodicReport<T>, ensemble: ErgodicReport<T>, k_sigma: T) -> BirkhoffCheck<T> {
    let se = (time.std_err.powi(2) + ensemble.std_err.powi(2)).sqrt();
    let diff = (time.k_bold - ensemble.k_bold).abs();
    let z_score = if se > T::zero() { diff / se } else if diff == T::zero() { T::zero() } else { T::infinity() };
    BirkhoffCheck { time, ensemble, z_score, agree: z_score <= k_sigma }
}
