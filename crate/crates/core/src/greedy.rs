//! The control `W`, greedy times and the greedy count `N`.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::roughpath::GridRoughPath;

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPartition<T: Real> {
    pub taus: Vec<T>,
    pub count: usize,
    pub chi: T,
    pub eta: T,
    pub interval: (T, T),
}

struct Weights<T> {
    p1: T,
    p2: T,
    /// `(m dt)^{-η/(γ-η)}` indexed by cell count `m`.
    len_w: Vec<T>,
}

fn weights<T: Real>(rp: &GridRoughPath<T>, eta: T, max_len: usize) -> Result<Weights<T>> {
    let g = rp.gamma();
    if !(eta >= T::zero() && eta < g) {
        return invalid(format!("eta = {eta} must lie in [0, gamma = {g})"));
    }
    let ge = g - eta;
    let e = -eta / ge;
    let len_w = (0..=max_len)
        .map(|m| if m == 0 { T::zero() } else { (T::from_count(m) * rp.dt()).powf(e) })
        .collect();
    Ok(Weights { p1: T::one() / ge, p2: T::one() / (ge + ge), len_w })
}

/// Forward DP from grid index `a`. Calls `visit(j, W_{a,j})` for increasing `j`
/// and stops once it returns `false` or `b` is reached.
fn dp_scan<T: Real>(rp: &GridRoughPath<T>, w: &Weights<T>, a: usize, b: usize, mut visit: impl FnMut(usize, T) -> bool) {
    let x = rp.x();
    let xx = rp.xx();
    let mut dp: Vec<T> = Vec::with_capacity(b - a + 1);
    dp.push(T::zero());
    for j in a + 1..=b {
        let mut best = T::zero();
        let mut area = T::zero();
        for i in (a..j).rev() {
            // 𝕏_{i,j} = 𝕏_{i+1,j} + 𝕏_{i,i+1} + X_{i,i+1} X_{i+1,j}
            area += xx[i] + (x[i + 1] - x[i]) * (x[j] - x[i + 1]);
            let inc = x[j] - x[i];
            let cand = dp[i - a] + w.len_w[j - i] * (inc.abs().powf(w.p1) + area.abs().powf(w.p2));
            if cand > best {
                best = cand;
            }
        }
        dp.push(best);
        if !visit(j, best) {
            return;
        }
    }
}

/// `W_{t_a,t_b}` over grid indices.
pub fn control_w_idx<T: Real>(rp: &GridRoughPath<T>, eta: T, a: usize, b: usize) -> Result<T> {
    let w = weights(rp, eta, b.saturating_sub(a))?;
    let mut out = T::zero();
    dp_scan(rp, &w, a, b, |_, v| {
        out = v;
        true
    });
    Ok(out)
}

/// `W_{s,t}`: supremum over grid partitions of `[s,t]`, by dynamic programming.
pub fn control_w<T: Real>(rp: &GridRoughPath<T>, eta: T, s: T, t: T) -> Result<T> {
    let (a, b) = (rp.index_of(s)?, rp.index_of(t)?);
    if a > b {
        return invalid("control_w needs s <= t");
    }
    control_w_idx(rp, eta, a, b)
}

/// `W_{t_a, t_j}` for every `j` in `a..=b`.
pub fn control_w_profile<T: Real>(rp: &GridRoughPath<T>, eta: T, a: usize, b: usize) -> Result<Vec<T>> {
    let w = weights(rp, eta, b.saturating_sub(a))?;
    let mut out = vec![T::zero()];
    dp_scan(rp, &w, a, b, |_, v| {
        out.push(v);
        true
    });
    Ok(out)
}

/// Greedy indices on `[a, b]`.
pub fn greedy_indices<T: Real>(rp: &GridRoughPath<T>, eta: T, chi: T, a: usize, b: usize) -> Result<Vec<usize>> {
    if !(chi > T::zero()) {
        return invalid(format!("chi = {chi} must be positive"));
    }
    let w = weights(rp, eta, b.saturating_sub(a))?;
    let ge = rp.gamma() - eta;
    let mut taus = vec![a];
    let mut cur = a;
    while cur < b {
        let mut last_ok = cur;
        let mut bad: Option<T> = None;
        dp_scan(rp, &w, cur, b, |j, v| {
            let lvl = v.powf(ge);
            if lvl <= chi {
                last_ok = j;
                true
            } else {
                bad = Some(lvl);
                false
            }
        });
        if last_ok == cur {
            let value = bad.map(|v| v.as_f64()).unwrap_or(f64::NAN);
            return Err(Error::GridTooCoarse { cell: cur, value, chi: chi.as_f64() });
        }
        taus.push(last_ok);
        cur = last_ok;
    }
    if a == b {
        taus.push(b);
    }
    Ok(taus)
}

/// Greedy times of Def. "τ_{n+1} = largest grid τ with W_{τ_n,τ}^{γ−η} ≤ χ".
pub fn greedy_times<T: Real>(rp: &GridRoughPath<T>, eta: T, chi: T, s: T, t: T) -> Result<GreedyPartition<T>> {
    let (a, b) = (rp.index_of(s)?, rp.index_of(t)?);
    if a > b {
        return invalid("greedy_times needs s <= t");
    }
    let idx = greedy_indices(rp, eta, chi, a, b)?;
    Ok(GreedyPartition {
        count: idx.len() - 1,
        taus: idx.into_iter().map(|i| rp.time(i)).collect(),
        chi,
        eta,
        interval: (s, t),
    })
}

/// Number `N` of greedy steps on `[t_a, t_b]`.
pub fn count_idx<T: Real>(rp: &GridRoughPath<T>, eta: T, chi: T, a: usize, b: usize) -> Result<usize> {
    Ok(greedy_indices(rp, eta, chi, a, b)?.len() - 1)
}

pub fn count_in_window<T: Real>(rp: &GridRoughPath<T>, eta: T, chi: T, s: T, t: T) -> Result<usize> {
    Ok(greedy_times(rp, eta, chi, s, t)?.count)
}

/// Writes `interval,N,W,chi,eta` rows; the interval is printed as `s..t`.
pub fn write_greedy_csv<T: Real, W: Write>(mut w: W, rows: &[(GreedyPartition<T>, T)]) -> Result<()> {
    writeln!(w, "interval,N,W,chi,eta")?;
    for (p, wv) in rows {
        writeln!(w, "{}..{},{},{},{},{}", p.interval.0, p.interval.1, p.count, wv, p.chi, p.eta)?;
    }
    Ok(())
}
