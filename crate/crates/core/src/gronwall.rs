//! Singular Henry-Gronwall and discrete Gronwall bounds as calculators.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::real::Real;
use crate::specfun::{gamma_fn, ln_gamma};

/// A bound sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve<T: Real> {
    pub times: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> BoundCurve<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return invalid("bound curve needs equally many times and values");
        }
        if values.iter().any(|v| !(*v >= T::zero())) {
            return invalid("bound curve values must be nonnegative");
        }
        Ok(Self { times, values })
    }

    /// Samples `f` on `n + 1` equispaced points of `[0, t_end]`.
    pub fn sample(t_end: T, n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let times: Vec<T> = (0..=n).map(|i| t_end * T::from_count(i) / T::from_count(n)).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,bound")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Series of the kernel `K(s) = κ E'_{β,1}(κ s) = Σ_k a_k s^{p_k − 1}` with
/// `p_k = β(k+1)` and `a_k = κ^{p_k}/Γ(p_k)`.
struct Kernel<T> {
    beta: T,
    ln_kappa: T,
    /// Leading terms with `p_k < 3`; these are integrated exactly.
    lead: Vec<(T, T)>,
}

impl<T: Real> Kernel<T> {
    fn new(beta: T, kappa: T) -> Result<Self> {
        let mut lead = Vec::new();
        let mut k = 0usize;
        loop {
            let p = beta * T::from_count(k + 1);
            if p >= T::lit(3.0) {
                break;
            }
            lead.push((kappa.powf(p) / gamma_fn(p)?, p));
            k += 1;
        }
        Ok(Self { beta, ln_kappa: kappa.ln(), lead })
    }

    /// Kernel minus its leading terms, by direct summation of the tail.
    fn remainder(&self, s: T) -> Result<T> {
        if s == T::zero() {
            return Ok(T::zero());
        }
        let ls = s.ln();
        let mut sum = T::zero();
        let mut prev = T::neg_infinity();
        let mut k = self.lead.len();
        loop {
            let p = self.beta * T::from_count(k + 1);
            let lt = p * self.ln_kappa + (p - T::one()) * ls - ln_gamma(p)?;
            let term = lt.exp();
            sum += term;
            if lt < prev && term <= T::lit(1e-17) * sum {
                break;
            }
            prev = lt;
            k += 1;
            if k > 200_000 {
                break;
            }
        }
        Ok(sum)
    }
}

/// `∫_{lo}^{hi} s^{p-1} (hi - s)/Δ ds` and `∫ s^{p-1} (s - lo)/Δ ds`.
fn power_weights<T: Real>(p: T, lo: T, hi: T, delta: T) -> (T, T) {
    let i0 = (hi.powf(p) - lo.powf(p)) / p;
    let i1 = (hi.powf(p + T::one()) - lo.powf(p + T::one())) / (p + T::one());
    ((hi * i0 - i1) / delta, (i1 - lo * i0) / delta)
}

/// Evaluates `h(t) + κ ∫_0^t h(r) E'_{β,1}((t−r)κ) dr`, `κ = (Γ(β)M)^{1/β}`.
///
/// `h` is treated as piecewise linear. The leading, non-smooth terms of the
/// kernel series are integrated exactly against it; the smooth remainder
/// uses the trapezoid rule.
pub fn singular_gronwall<T: Real>(h: &BoundCurve<T>, m: T, beta: T) -> Result<BoundCurve<T>> {
    if !(beta > T::zero() && beta <= T::one()) {
        return invalid(format!("beta = {beta} must lie in (0, 1]"));
    }
    if !(m > T::zero()) {
        return invalid(format!("M = {m} must be positive"));
    }
    if h.values.iter().any(|v| !(*v >= T::zero())) {
        return invalid("h must be nonnegative");
    }
    let n = h.times.len() - 1;
    if n == 0 {
        return Ok(h.clone());
    }
    let delta = (h.times[n] - h.times[0]) / T::from_count(n);
    let kappa = (gamma_fn(beta)? * m).powf(T::one() / beta);
    let ker = Kernel::new(beta, kappa)?;

    // Panel weights depend only on the offset d = i - j (uniform grid).
    // Panel d covers s ∈ [(d-1)Δ, dΔ]; w_near multiplies h at s = (d-1)Δ.
    let mut w_near = vec![T::zero(); n + 1];
    let mut w_far = vec![T::zero(); n + 1];
    let rem: Vec<T> = (0..=n).map(|d| ker.remainder(T::from_count(d) * delta)).collect::<Result<_>>()?;
    for d in 1..=n {
        let lo = T::from_count(d - 1) * delta;
        let hi = T::from_count(d) * delta;
        let (mut a, mut b) = (T::zero(), T::zero());
        for &(coef, p) in &ker.lead {
            let (wl, wh) = power_weights(p, lo, hi, delta);
            a += coef * wl;
            b += coef * wh;
        }
        let half = T::lit(0.5) * delta;
        w_near[d] = a + half * rem[d - 1];
        w_far[d] = b + half * rem[d];
    }

    let v = &h.values;
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut acc = v[i];
        for j in 0..i {
            let d = i - j;
            acc += w_far[d] * v[j] + w_near[d] * v[j + 1];
        }
        out.push(acc.max(T::zero()));
    }
    BoundCurve::new(h.times.clone(), out)
}

/// Bounds `max{a,u₀} Π_{j<n}(1+b_j) + Σ_{k<n} c_k Π_{k<j<n}(1+b_j)`, `n = 0..=len`.
pub fn discrete_gronwall<T: Real>(a: T, u0: T, b: &[T], c: &[T]) -> Result<Vec<T>> {
    if b.len() != c.len() {
        return invalid("b and c must have the same length");
    }
    if !(a >= T::zero()) || !(u0 >= T::zero()) || b.iter().chain(c).any(|v| !(*v >= T::zero())) {
        return invalid("discrete Gronwall inputs must be nonnegative");
    }
    let mut out = Vec::with_capacity(b.len() + 1);
    let mut acc = a.max(u0);
    out.push(acc);
    for (bj, cj) in b.iter().zip(c) {
        acc = acc * (T::one() + *bj) + *cj;
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::gronwall_recursion;
    use crate::specfun::mittag_leffler;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_h_gives_zero() {
        let h = BoundCurve::sample(1.0, 100, |_| 0.0f64).unwrap();
        let b = singular_gronwall(&h, 2.0, 0.5).unwrap();
        assert!(b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn classical_gronwall_for_beta_one() {
        let (c, m) = (1.5f64, 1.3f64);
        let h = BoundCurve::sample(2.0, 2000, |_| c).unwrap();
        let b = singular_gronwall(&h, m, 1.0).unwrap();
        for (t, v) in b.times.iter().zip(&b.values) {
            let exact = c * (m * t).exp();
            assert!((v / exact - 1.0).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn constant_h_matches_mittag_leffler_closed_form() {
        for beta in [0.25f64, 0.5, 0.75] {
            let (c, kappa) = (0.7f64, 3.0f64);
            let m = kappa.powf(beta) / gamma_fn(beta).unwrap();
            let h = BoundCurve::sample(1.5, 1500, |_| c).unwrap();
            let b = singular_gronwall(&h, m, beta).unwrap();
            for (t, v) in b.times.iter().zip(&b.values).step_by(50) {
                let exact = c * mittag_leffler(beta, 1.0, t * kappa).unwrap();
                assert!((v / exact - 1.0).abs() < 1e-4, "beta {beta} t {t}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn halving_the_grid_changes_little() {
        for beta in [0.3, 0.6, 1.0] {
            let f = |t: f64| 1.0 + (3.0 * t).sin().powi(2) + t;
            let coarse = singular_gronwall(&BoundCurve::sample(1.0, 400, f).unwrap(), 1.0, beta).unwrap();
            let fine = singular_gronwall(&BoundCurve::sample(1.0, 800, f).unwrap(), 1.0, beta).unwrap();
            for i in 0..=400 {
                let (a, b) = (coarse.values[i], fine.values[2 * i]);
                assert!((a / b - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = BoundCurve::sample(1.0, 10, |_| 1.0f64).unwrap();
        assert!(singular_gronwall(&h, 1.0, 1.5).is_err());
        assert!(singular_gronwall(&h, 0.0, 0.5).is_err());
        assert!(BoundCurve::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(discrete_gronwall(1.0, 0.0, &[1.0], &[-1.0]).is_err());
        assert!(discrete_gronwall(1.0, 0.0, &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn discrete_trivial_cases() {
        let v = discrete_gronwall(2.0, 3.0, &[0.0; 5], &[0.0; 5]).unwrap();
        assert!(v.iter().all(|&x| x == 3.0));
        let v = discrete_gronwall(0.0, 1.0, &[1.0; 10], &[0.0; 10]).unwrap();
        for (n, x) in v.iter().enumerate() {
            assert_eq!(*x, 2f64.powi(n as i32));
        }
    }

    #[test]
    fn discrete_bound_dominates_recursions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let a = rng.random_range(0.0..2.0);
            let u0 = rng.random_range(0.0..2.0);
            let b: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
            let c: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
            let slack: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..0.5)).collect();
            let u = gronwall_recursion(a, u0, &b, &c, &slack);
            let bound = discrete_gronwall(a, u0, &b, &c).unwrap();
            for (x, y) in u.iter().zip(&bound) {
                assert!(*x <= *y * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn curve_csv() {
        let h = BoundCurve::sample(1.0, 2, |t| t).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,bound\n0,0\n0.5,0.5\n1,1\n");
    }

    proptest! {
        #[test]
        fn monotone_in_inputs(c in 0.1f64..2.0, dc in 0.0f64..1.0, m in 0.2f64..2.0, dm in 0.0f64..1.0, beta in 0.2f64..1.0) {
            let h1 = BoundCurve::sample(1.0, 100, |t| c + t).unwrap();
            let h2 = BoundCurve::sample(1.0, 100, |t| c + dc + t).unwrap();
            let b1 = singular_gronwall(&h1, m, beta).unwrap();
            let b2 = singular_gronwall(&h2, m + dm, beta).unwrap();
            for (x, y) in b1.values.iter().zip(&b2.values) {
                prop_assert!(*x <= *y * (1.0 + 1e-12));
            }
        }

        #[test]
        fn discrete_monotone(a in 0.0f64..2.0, da in 0.0f64..1.0, b in proptest::collection::vec(0.0f64..1.0, 8),
                             c in proptest::collection::vec(0.0f64..1.0, 8), bump in 0.0f64..0.5) {
            let lo = discrete_gronwall(a, 0.5, &b, &c).unwrap();
            let b2: Vec<f64> = b.iter().map(|x| x + bump).collect();
            let c2: Vec<f64> = c.iter().map(|x| x + bump).collect();
            let hi = discrete_gronwall(a + da, 0.5, &b2, &c2).unwrap();
            for (x, y) in lo.iter().zip(&hi) {
                prop_assert!(x <= y);
            }
        }
    }
}
