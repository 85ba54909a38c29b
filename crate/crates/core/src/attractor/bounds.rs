//! Solution bounds on short intervals, the a-priori estimate and the
//! one-step quantities `H1`, `H2`.

use crate::error::{invalid, Result};
use crate::greedy::count_idx;
use crate::real::Real;
use crate::roughpath::GridRoughPath;
use crate::solver::{controlled_norm, ControlledPath};
use crate::spectral::SpectralModel;

use super::constants::{poly_p, BoundConstants};

/// `ln(e^a + e^b)`.
pub fn ln_add<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    if m == T::infinity() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln(e^x − 1)` for `x > 0`.
pub fn ln_expm1<T: Real>(x: T) -> T {
    if x > T::lit(30.0) {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln((p^n − 1)/(p − 1))` given `ln p`; the limit `ln n` at `p = 1`.
pub fn ln_geometric<T: Real>(ln_p: T, n: usize) -> T {
    let nf = T::from_count(n);
    if ln_p.abs() < T::lit(1e-12) {
        return nf.ln();
    }
    if ln_p > T::zero() {
        ln_expm1(nf * ln_p) - ln_expm1(ln_p)
    } else {
        (-(nf * ln_p).exp_m1()).ln() - (-ln_p.exp_m1()).ln()
    }
}

/// `P̃`, `P1`, `P2` on one interval, with their logarithms (the values
/// themselves may overflow).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PConstants<T: Real> {
    pub n: usize,
    pub hx: T,
    pub hxx: T,
    pub n_tilde: usize,
    pub ln_p_tilde: T,
    pub ln_p1: T,
    pub ln_p2: T,
}

impl<T: Real> PConstants<T> {
    pub fn p_tilde(&self) -> T {
        self.ln_p_tilde.exp()
    }
    pub fn p1(&self) -> T {
        self.ln_p1.exp()
    }
    pub fn p2(&self) -> T {
        self.ln_p2.exp()
    }
}

/// The P-constants from their ingredients: greedy count `n`, seminorms
/// `hx = [X]_γ`, `hxx = [𝕏]_{2γ}` and `Ñ`.
pub fn p_from_parts<T: Real>(m_tilde: T, m_big: T, n: usize, hx: T, hxx: T, n_tilde: usize) -> PConstants<T> {
    let nf = T::from_count(n);
    let common = m_big.ln() + nf.ln() + hx.ln_1p();
    let ln_p_tilde = common + nf * m_tilde;
    let ln_p1 = T::from_count(n_tilde).ln() + T::from_count(n_tilde + 1) * ln_p_tilde;
    let ln_exp_ratio = ln_expm1((nf + T::one()) * m_tilde) - ln_expm1(m_tilde);
    let ln_p2 = common + T::from_count(n_tilde).ln() + ln_exp_ratio + poly_p(hx, hxx).ln() + ln_geometric(ln_p_tilde, n_tilde);
    PConstants { n, hx, hxx, n_tilde, ln_p_tilde, ln_p1, ln_p2 }
}

/// P-constants on grid indices `[a, b]` of length at most two units.
pub fn eval_p_constants<T: Real>(rp: &GridRoughPath<T>, k: &BoundConstants<T>, a: usize, b: usize) -> Result<PConstants<T>> {
    if a >= b || b > rp.n_cells() {
        return invalid(format!("bad interval [{a}, {b}]"));
    }
    let len = rp.time(b) - rp.time(a);
    if len > T::lit(2.0) + T::lit(1e-9) {
        return invalid(format!("interval length {len} exceeds 2"));
    }
    let n = count_idx(rp, k.eta, k.chi, a, b)?;
    let h = rp.holder_report_idx(a, b);
    Ok(p_from_parts(k.m_tilde, k.m_big, n, h.seminorm_x, h.seminorm_xx, k.n_tilde_for(len)))
}

/// Outcome of checking one inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck<T: Real> {
    pub lhs: T,
    pub rhs: T,
    pub ln_rhs: T,
    pub pass: bool,
}

impl<T: Real> BoundCheck<T> {
    pub fn margin(&self) -> T {
        self.rhs - self.lhs
    }

    fn from_ln(lhs: T, ln_rhs: T) -> Self {
        let pass = lhs <= T::zero() || lhs.ln() <= ln_rhs;
        Self { lhs, rhs: ln_rhs.exp(), ln_rhs, pass }
    }
}

/// `‖y, y′‖_{𝒟,[s,t]} ≤ ‖y_s‖_α P1 + P2` on grid indices `[a, b]`.
pub fn check_solution_bound<T: Real>(
    model: &SpectralModel<T>,
    path: &ControlledPath<T>,
    rp: &GridRoughPath<T>,
    k: &BoundConstants<T>,
    a: usize,
    b: usize,
) -> Result<BoundCheck<T>> {
    let p = eval_p_constants(rp, k, a, b)?;
    let lhs = controlled_norm(model, path, rp, a, b)?.total;
    let ys = model.norm(path.at(a), model.alpha());
    Ok(BoundCheck::from_ln(lhs, ln_add(ys.ln() + p.ln_p1, p.ln_p2)))
}

fn steps_per_unit<T: Real>(rp: &GridRoughPath<T>) -> Result<usize> {
    let r = T::one() / rp.dt();
    if (r - r.round()).abs() > T::lit(1e-6) {
        return invalid(format!("dt = {} does not divide the unit interval", rp.dt()));
    }
    Ok(r.round().to_usize().unwrap_or(0))
}

/// `P₃ = ρ²(1 + ‖y, y′‖_{𝒟})` on grid indices `[a, b]`.
pub fn p3<T: Real>(model: &SpectralModel<T>, path: &ControlledPath<T>, rp: &GridRoughPath<T>, a: usize, b: usize) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let rho = rp.rho_idx(a, b);
    Ok(rho * rho * (T::one() + controlled_norm(model, path, rp, a, b)?.total))
}

/// The a-priori estimate at grid index `t_idx`, with time measured from the
/// path start:
/// `‖y_t‖e^{λt} ≤ C̃_A‖y₀‖ + C̃₂e^{λt} + C̃₁C_G Σ_{l≤n} e^{λl} P₃([l, min(l+1, t)])`.
pub fn apriori_bound<T: Real>(
    model: &SpectralModel<T>,
    path: &ControlledPath<T>,
    rp: &GridRoughPath<T>,
    k: &BoundConstants<T>,
    t_idx: usize,
) -> Result<BoundCheck<T>> {
    k.require_positive_lambda()?;
    if t_idx < path.start || t_idx > path.end() {
        return invalid(format!("index {t_idx} outside the path"));
    }
    let spu = steps_per_unit(rp)?;
    let m = t_idx - path.start;
    let t = T::from_count(m) * rp.dt();
    let alpha = model.alpha();
    let lam = k.lambda;
    let mut sum = T::zero();
    let mut l = 0;
    while l * spu < m {
        let a = path.start + l * spu;
        let b = (a + spu).min(t_idx);
        sum += (lam * T::from_count(l)).exp() * p3(model, path, rp, a, b)?;
        l += 1;
    }
    let y0 = model.norm(path.at(path.start), alpha);
    let lhs = model.norm(path.at(t_idx), alpha) * (lam * t).exp();
    let rhs = k.c_tilde_a * y0 + k.c_tilde_2 * (lam * t).exp() + k.c_tilde_1 * k.c_g * sum;
    Ok(BoundCheck { lhs, rhs, ln_rhs: rhs.ln(), pass: lhs <= rhs })
}

/// `ln H1`, `ln H2` on one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValues<T: Real> {
    pub ln_h1: T,
    pub ln_h2: T,
}

impl<T: Real> HValues<T> {
    pub fn h1(&self) -> T {
        self.ln_h1.exp()
    }
    pub fn h2(&self) -> T {
        self.ln_h2.exp()
    }
}

/// `ln max{C̃_A e^λ, C̃₁C_G}`.
pub fn ln_h2_constant<T: Real>(k: &BoundConstants<T>) -> T {
    (k.c_tilde_a.ln() + k.lambda).max((k.c_tilde_1 * k.c_g).ln())
}

/// `H1 = C̃₁C_Gρ²P1` and `H2 = max{C̃_Ae^λ, C̃₁C_G}(1 + ρ²(1 + P2))` on `[a, b]`.
pub fn eval_h<T: Real>(rp: &GridRoughPath<T>, k: &BoundConstants<T>, a: usize, b: usize) -> Result<HValues<T>> {
    let p = eval_p_constants(rp, k, a, b)?;
    let rho = p.hx + p.hxx;
    let ln_h1 = if rho == T::zero() || k.c_g == T::zero() {
        T::neg_infinity()
    } else {
        (k.c_tilde_1 * k.c_g).ln() + T::lit(2.0) * rho.ln() + p.ln_p1
    };
    let inner = if rho == T::zero() {
        T::zero()
    } else {
        ln_add(T::zero(), T::lit(2.0) * rho.ln() + ln_add(T::zero(), p.ln_p2))
    };
    Ok(HValues { ln_h1, ln_h2: ln_h2_constant(k) + inner })
}

/// The chained bound at integer time `n` from the path start:
/// `‖y_n‖ ≤ C̃_A‖y₀‖e^{−λn}Π_j(1+H1_j) + Σ_k e^{−λ(n−k)}H2_k Π_{j>k}(1+H1_j)`,
/// with `H_j` evaluated on `[j, j+1]`.
pub fn chained_bound<T: Real>(
    model: &SpectralModel<T>,
    path: &ControlledPath<T>,
    rp: &GridRoughPath<T>,
    k: &BoundConstants<T>,
    n: usize,
) -> Result<BoundCheck<T>> {
    let spu = steps_per_unit(rp)?;
    if n == 0 || path.start + n * spu > path.end() {
        return invalid(format!("chained bound needs 1 <= n and [0, {n}] inside the path"));
    }
    let hs: Vec<HValues<T>> = (0..n)
        .map(|j| eval_h(rp, k, path.start + j * spu, path.start + (j + 1) * spu))
        .collect::<Result<_>>()?;
    let lam = k.lambda;
    let ln1p = |h: &HValues<T>| h.ln_h1.exp().ln_1p();
    // suffix[k] = Σ_{j ≥ k} ln(1 + H1_j)
    let mut suffix = vec![T::zero(); n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + ln1p(&hs[j]);
    }
    let y0 = model.norm(path.at(path.start), model.alpha());
    let mut ln_rhs = (k.c_tilde_a * y0).ln() - lam * T::from_count(n) + suffix[0];
    for (kk, h) in hs.iter().enumerate() {
        let term = -lam * T::from_count(n - kk) + h.ln_h2 + suffix[kk + 1];
        ln_rhs = ln_add(ln_rhs, term);
    }
    let lhs = model.norm(path.at(path.start + n * spu), model.alpha());
    Ok(BoundCheck::from_ln(lhs, ln_rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attractor::constants::{ConstantInputs, BoundConstants};
    use crate::roughpath::NoiseSpec;
    use crate::solver::solve_mild;
    use crate::spectral::{GKind, ModelConfig};
    use proptest::prelude::*;

    fn model(c_f: f64, c_g: f64, lambda_a: f64) -> SpectralModel<f64> {
        let mut cfg = ModelConfig::new(6, lambda_a, 0.5);
        cfg.c_f = c_f;
        cfg.c_g = c_g;
        cfg.g_kind = GKind::Linear;
        SpectralModel::new(cfg).unwrap()
    }

    fn constants(m: &SpectralModel<f64>) -> BoundConstants<f64> {
        let mut i = ConstantInputs::new(0.45, 0.05, 0.1);
        i.m_big = 2.0;
        BoundConstants::derive(m, &i).unwrap()
    }

    fn noise(scale: f64) -> NoiseSpec {
        NoiseSpec { hurst: 0.5, gamma: 0.45, scale, steps_per_unit: 32 }
    }

    #[test]
    fn geometric_factor_and_its_limit() {
        assert!((ln_geometric(0.0f64, 7).exp() - 7.0).abs() < 1e-12);
        let p: f64 = 1.5;
        let direct = (p.powi(4) - 1.0) / (p - 1.0);
        assert!((ln_geometric(p.ln(), 4).exp() - direct).abs() < 1e-12);
        let p: f64 = 0.5;
        let direct = (p.powi(4) - 1.0) / (p - 1.0);
        assert!((ln_geometric(p.ln(), 4).exp() - direct).abs() < 1e-12);
        assert!((ln_expm1(50.0f64) - 50.0).abs() < 1e-15);
    }

    #[test]
    fn p_constants_direct_formula() {
        let (mt, mb, n, hx, hxx, nt): (f64, f64, usize, f64, f64, usize) = (0.2, 1.3, 3, 0.4, 0.1, 2);
        let p = p_from_parts(mt, mb, n, hx, hxx, nt);
        let nf = n as f64;
        let pt = mb * nf * (1.0 + hx) * (nf * mt).exp();
        let p1 = nt as f64 * pt.powi(nt as i32 + 1);
        let p2 = mb * nt as f64 * nf * (1.0 + hx) * (((nf + 1.0) * mt).exp() - 1.0) / (mt.exp() - 1.0)
            * poly_p(hx, hxx)
            * (pt.powi(nt as i32) - 1.0)
            / (pt - 1.0);
        assert!((p.p_tilde() / pt - 1.0).abs() < 1e-12);
        assert!((p.p1() / p1 - 1.0).abs() < 1e-12);
        assert!((p.p2() / p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_h_values() {
        let m = model(0.0, 0.1, 2.0);
        let k = constants(&m);
        let rp = GridRoughPath::zero(0.0, 1.0 / 32.0, 32, 0.45).unwrap();
        let h = eval_h(&rp, &k, 0, 32).unwrap();
        assert_eq!(h.h1(), 0.0);
        assert!((h.h2() - (k.c_tilde_a * k.lambda.exp()).max(k.c_tilde_1 * k.c_g)).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_solution_bound_and_chi_monotonicity() {
        let m = model(0.0, 0.0, 2.0);
        let k = constants(&m);
        let rp = GridRoughPath::zero(0.0, 1.0 / 32.0, 32, 0.45).unwrap();
        let y0 = vec![1.0, -0.5, 0.25, 0.0, 0.1, 0.0];
        let path = solve_mild(&m, &y0, &rp, 0, 32, 1).unwrap();
        let c = check_solution_bound(&m, &path, &rp, &k, 0, 32).unwrap();
        assert!(c.pass, "{c:?}");

        let rp = noise(0.05).sample(0.0, 1, 3).unwrap();
        let mut prev = f64::INFINITY;
        for chi in [0.05, 0.08, 0.12, 0.18] {
            let kk = k.recalibrated(&m, k.m_tilde, k.m_big, k.c_i).unwrap();
            let kk = BoundConstants { chi, ..kk };
            let p = eval_p_constants(&rp, &kk, 0, 32).unwrap();
            assert!(p.ln_p1 <= prev);
            prev = p.ln_p1;
        }
    }

    #[test]
    fn pure_decay_apriori_and_chained() {
        let m = model(0.0, 0.0, 2.0);
        let k = constants(&m);
        let rp = noise(0.1).sample(0.0, 3, 11).unwrap();
        let y0 = vec![1.0, 0.5, -0.3, 0.2, 0.0, 0.1];
        let path = solve_mild(&m, &y0, &rp, 0, 96, 2).unwrap();
        for t_idx in [0, 10, 32, 50, 96] {
            let c = apriori_bound(&m, &path, &rp, &k, t_idx).unwrap();
            assert!(c.pass, "t_idx {t_idx}: {c:?}");
        }
        for n in 1..=3 {
            assert!(chained_bound(&m, &path, &rp, &k, n).unwrap().pass);
        }
    }

    #[test]
    fn chained_bound_consistent_with_apriori_on_noise() {
        let m = model(0.2, 0.05, 2.0);
        let k = constants(&m);
        let rp = noise(0.05).sample(0.0, 3, 4).unwrap();
        let y0 = vec![0.5, 0.5, -0.3, 0.2, 0.0, 0.1];
        let path = solve_mild(&m, &y0, &rp, 0, 96, 2).unwrap();
        for n in 1..=3 {
            let a = apriori_bound(&m, &path, &rp, &k, n * 32).unwrap();
            let c = chained_bound(&m, &path, &rp, &k, n).unwrap();
            assert!(a.pass && c.pass, "n {n}: {a:?} {c:?}");
            assert_eq!(a.lhs, c.lhs * (k.lambda * n as f64).exp());
        }
    }

    #[test]
    fn h_is_shift_equivariant() {
        let m = model(0.0, 0.1, 2.0);
        let k = constants(&m);
        let rp = noise(0.1).sample(0.0, 3, 8).unwrap();
        let shifted = rp.shift(1.0).unwrap();
        // θ_1 ω on [0, 1] is ω on [1, 2]; on the grid both are the same cells.
        let a = eval_h(&shifted, &k, 32, 64).unwrap();
        let b = eval_h(&rp, &k, 32, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(shifted.time(32), 0.0);
    }

    proptest! {
        #[test]
        fn h1_monotone_in_noise_size(s in 0.01f64..0.2, f in 1.01f64..2.0) {
            let m = model(0.0, 0.1, 2.0);
            let k = constants(&m);
            let rp = noise(1.0).sample(0.0, 1, 21).unwrap();
            let lo = eval_h(&rp.scaled(s), &k, 0, 32);
            let hi = eval_h(&rp.scaled(s * f), &k, 0, 32);
            if let (Ok(lo), Ok(hi)) = (lo, hi) {
                prop_assert!(lo.ln_h1 <= hi.ln_h1 + 1e-12);
                prop_assert!(lo.ln_h2 <= hi.ln_h2 + 1e-12);
            }
        }
    }
}
