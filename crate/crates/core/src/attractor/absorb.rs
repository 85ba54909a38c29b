//! The absorbing radius `R(ω) = 1 + P1(ω,[−1,1]) r(ω) + P2(ω,[−1,1])` with
//! `r(ω) = sup_ε Σ_k e^{−λk} H2(θ_{−k}ω, [−ε,1−ε]) Π_{j<k}(1 + H1(θ_{−j}ω, [−ε,1−ε]))`.
//!
//! The supremum over `ε ∈ [0,1]` runs over a grid of shifts snapped to grid
//! points, and is taken of the truncated series plus its tail estimate.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::roughpath::GridRoughPath;

use super::bounds::{eval_h, eval_p_constants, ln_add, HValues};
use super::constants::BoundConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbsorbOptions {
    pub truncation_k: usize,
    pub eps_points: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        Self { truncation_k: 40, eps_points: 11 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbReport<T: Real> {
    /// `R(ω)`.
    pub radius: T,
    pub ln_radius: T,
    pub delta_bar: T,
    pub r_omega: T,
    /// Terms of the maximizing shift, `k = 1..=K`.
    pub series_terms: Vec<T>,
    /// Estimated remainder `Σ_{k>K}` of the maximizing shift.
    pub tail_bound: T,
    /// Fitted geometric ratio of the terms.
    pub decay_ratio: T,
    pub truncation_k: usize,
    pub eps_star: T,
    pub p1_val: T,
    pub p2_val: T,
    /// Filled in by the pullback estimator.
    pub accepted: Option<bool>,
}

impl<T: Real> AbsorbReport<T> {
    /// `R(ω) + δ̄`.
    pub fn ball(&self) -> T {
        self.radius + self.delta_bar
    }
}

pub(crate) fn steps_per_unit<T: Real>(rp: &GridRoughPath<T>) -> Result<usize> {
    let r = T::one() / rp.dt();
    if (r - r.round()).abs() > T::lit(1e-6) {
        return invalid(format!("dt = {} does not divide the unit interval", rp.dt()));
    }
    Ok(r.round().to_usize().unwrap_or(0))
}

fn ls_slope<T: Real>(ys: &[T]) -> T {
    let n = T::from_count(ys.len());
    let xm = (n - T::one()) / T::lit(2.0);
    let ym = ys.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (i, &y) in ys.iter().enumerate() {
        let dx = T::from_count(i) - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

struct Series<T> {
    ln_terms: Vec<T>,
    ln_total: T,
    ln_tail: T,
    ratio: T,
}

fn series<T: Real>(hs: &[HValues<T>], lambda: T) -> Result<Series<T>> {
    let mut ln_terms = Vec::with_capacity(hs.len());
    let mut acc = T::zero();
    for (i, h) in hs.iter().enumerate() {
        ln_terms.push(-lambda * T::from_count(i + 1) + h.ln_h2 + acc);
        acc += h.ln_h1.exp().ln_1p();
    }
    let half = ln_terms.len() / 2;
    let slope = ls_slope(&ln_terms[half..]);
    if !(slope < T::zero()) {
        return Err(Error::NonConvergence(format!(
            "series terms of r(omega) do not decay by k = {} (log-slope {slope})",
            ln_terms.len()
        )));
    }
    let ratio = slope.exp();
    let last = *ln_terms.last().unwrap_or(&T::neg_infinity());
    let ln_tail = last + slope - (-ratio).ln_1p();
    let ln_trunc = ln_terms.iter().fold(T::neg_infinity(), |a, &b| ln_add(a, b));
    Ok(Series { ln_total: ln_add(ln_trunc, ln_tail), ln_terms, ln_tail, ratio })
}

/// `R(ω)` with time zero at grid index `origin` of `rp`. The path must cover
/// `[−K−1, 1]` around the origin.
pub fn absorbing_radius<T: Real>(
    rp: &GridRoughPath<T>,
    k: &BoundConstants<T>,
    origin: usize,
    opts: AbsorbOptions,
) -> Result<AbsorbReport<T>> {
    k.require_positive_lambda()?;
    let spu = steps_per_unit(rp)?;
    let kk = opts.truncation_k;
    if kk < 4 || opts.eps_points < 2 {
        return invalid("need truncation_k >= 4 and at least two shifts");
    }
    if origin < (kk + 1) * spu || origin + spu > rp.n_cells() {
        return invalid(format!("path does not cover [-{}, 1] around index {origin}", kk + 1));
    }
    let offsets: Vec<usize> = (0..opts.eps_points)
        .map(|i| {
            let e = T::from_count(i * spu) / T::from_count(opts.eps_points - 1);
            e.round().to_usize().unwrap_or(0)
        })
        .collect();
    let all: Vec<Series<T>> = offsets
        .par_iter()
        .map(|&off| {
            let hs = (1..=kk)
                .map(|j| {
                    let b = origin - (j - 1) * spu - off;
                    eval_h(rp, k, b - spu, b)
                })
                .collect::<Result<Vec<_>>>()?;
            series(&hs, k.lambda)
        })
        .collect::<Result<_>>()?;
    let (best, s) = all
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.ln_total.partial_cmp(&b.1.ln_total).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least two shifts");
    let p = eval_p_constants(rp, k, origin - spu, origin + spu)?;
    let ln_radius = ln_add(ln_add(T::zero(), p.ln_p1 + s.ln_total), p.ln_p2);
    Ok(AbsorbReport {
        radius: ln_radius.exp(),
        ln_radius,
        delta_bar: k.delta_bar,
        r_omega: s.ln_total.exp(),
        series_terms: s.ln_terms.iter().map(|v| v.exp()).collect(),
        tail_bound: s.ln_tail.exp(),
        decay_ratio: s.ratio,
        truncation_k: kk,
        eps_star: T::from_count(offsets[best]) / T::from_count(spu),
        p1_val: p.p1(),
        p2_val: p.p2(),
        accepted: None,
    })
}

/// `log⁺R(θ_{−j}ω)/j` for `j = 1..=shifts`, the subexponential-growth proxy.
pub fn temperedness_proxy<T: Real>(
    rp: &GridRoughPath<T>,
    k: &BoundConstants<T>,
    origin: usize,
    shifts: usize,
    opts: AbsorbOptions,
) -> Result<Vec<T>> {
    let spu = steps_per_unit(rp)?;
    if origin < shifts * spu {
        return invalid("path too short for the requested shifts");
    }
    (1..=shifts)
        .into_par_iter()
        .map(|j| {
            let r = absorbing_radius(rp, k, origin - j * spu, opts)?;
            Ok(r.ln_radius.max(T::zero()) / T::from_count(j))
        })
        .collect()
}
