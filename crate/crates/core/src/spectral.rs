//! Diagonal model of `A = Δ_D − λ_A` on `(0,1)` in the sine basis, with the
//! fractional scale `E_α`, the semigroup, and the built-in nonlinearities.
//!
//! Linear `G` is unbounded; it is admitted under the relaxed hypothesis that
//! only `DG` and `D(DG∘G)` need to be bounded.

use crate::config::KvConfig;
use crate::error::{invalid, Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GKind {
    /// `G = c_g (−Δ_D)^{σ_G}`.
    Linear,
    /// `G(u) = ∫ g(·, u(x)) dx` with a smooth bounded kernel.
    Integral,
}

impl GKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GKind::Linear => "linear",
            GKind::Integral => "integral",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig<T: Real> {
    pub n_modes: usize,
    pub lambda_a: T,
    pub alpha: T,
    pub sigma_f: T,
    pub sigma_g: T,
    pub c_f: T,
    pub c_g: T,
    pub g_kind: GKind,
    /// Size of the constant forcing in `F`; must lie in `[0, 1]` so that `‖F(0)‖ ≤ c_f`.
    pub f_forcing: T,
    /// Decay exponent `p` of the integral kernel coefficients `m^{-p}`.
    pub g_decay: T,
}

impl<T: Real> ModelConfig<T> {
    pub fn new(n_modes: usize, lambda_a: T, alpha: T) -> Self {
        Self {
            n_modes,
            lambda_a,
            alpha,
            sigma_f: T::zero(),
            sigma_g: T::zero(),
            c_f: T::zero(),
            c_g: T::zero(),
            g_kind: GKind::Linear,
            f_forcing: T::lit(0.5),
            g_decay: T::lit(2.0) * alpha + T::lit(1.5),
        }
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let alpha: T = kv.require("alpha")?;
        let mut c = Self::new(kv.get_or("n_modes", 64)?, kv.require("lambda_a")?, alpha);
        c.sigma_f = kv.get_or("sigma_f", T::zero())?;
        c.sigma_g = kv.get_or("sigma_g", T::zero())?;
        c.c_f = kv.get_or("c_f", T::zero())?;
        c.c_g = kv.get_or("c_g", T::zero())?;
        c.f_forcing = kv.get_or("f_forcing", c.f_forcing)?;
        c.g_kind = match kv.get_str("g_kind").unwrap_or("linear") {
            "linear" => GKind::Linear,
            "integral" => GKind::Integral,
            other => return Err(Error::Config(format!("g_kind: unknown value '{other}'"))),
        };
        c.g_decay = kv.get_or("g_decay", T::lit(2.0) * (c.alpha - c.sigma_g) + T::lit(1.5))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("n_modes", self.n_modes);
        kv.set("lambda_a", self.lambda_a);
        kv.set("alpha", self.alpha);
        kv.set("sigma_f", self.sigma_f);
        kv.set("sigma_g", self.sigma_g);
        kv.set("c_f", self.c_f);
        kv.set("c_g", self.c_g);
        kv.set("g_kind", self.g_kind.as_str());
        kv.set("f_forcing", self.f_forcing);
        kv.set("g_decay", self.g_decay);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_modes == 0 {
            return cfg("n_modes must be at least 1".into());
        }
        if !(self.lambda_a > T::zero()) {
            return cfg(format!("lambda_a = {} must be positive", self.lambda_a));
        }
        if !(self.sigma_f >= T::zero() && self.sigma_f < T::one()) {
            return cfg(format!("sigma_f = {} must lie in [0, 1)", self.sigma_f));
        }
        if !(self.sigma_g >= T::zero()) {
            return cfg(format!("sigma_g = {} must be nonnegative", self.sigma_g));
        }
        if !(self.c_f >= T::zero() && self.c_g >= T::zero()) {
            return cfg("c_f and c_g must be nonnegative".into());
        }
        if !(self.f_forcing >= T::zero() && self.f_forcing <= T::one()) {
            return cfg(format!("f_forcing = {} must lie in [0, 1]", self.f_forcing));
        }
        if self.g_kind == GKind::Integral {
            let need = T::lit(2.0) * (self.alpha - self.sigma_g) + T::lit(0.5);
            if !(self.g_decay > need) {
                return cfg(format!(
                    "g_decay = {} must exceed {need}, otherwise the kernel is unbounded in E_(alpha-sigma_g)",
                    self.g_decay
                ));
            }
        }
        Ok(())
    }

    /// Checks that depend on the rough-path exponent.
    pub fn validate_for_gamma(&self, gamma: T) -> Result<()> {
        if !(self.sigma_g < gamma) {
            return Err(Error::InvalidRegularity(format!("sigma_g = {} must be below gamma = {gamma}", self.sigma_g)));
        }
        if self.g_kind == GKind::Integral && self.alpha < gamma + gamma {
            return Err(Error::Config(format!(
                "integral G needs alpha >= 2 gamma = {}, got {}",
                gamma + gamma,
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState<T: Real> {
    pub coeffs: Vec<T>,
    pub alpha: T,
}

#[derive(Debug, Clone)]
struct IntegralKernel<T> {
    nodes: usize,
    /// `√2 sin(kπ x_j)`, row `j`, column `k-1`.
    basis: Vec<T>,
    /// `c_g m^{-p} cos φ_m` and `c_g m^{-p} sin φ_m`.
    wc: Vec<T>,
    ws: Vec<T>,
}

impl<T: Real> IntegralKernel<T> {
    fn new(n: usize, c_g: T, p: T) -> Self {
        let nodes = (4 * n).max(16);
        let mut basis = Vec::with_capacity(nodes * n);
        for j in 0..nodes {
            let x = (T::from_count(j) + T::lit(0.5)) / T::from_count(nodes);
            for k in 1..=n {
                basis.push(T::SQRT_2() * (T::from_count(k) * T::PI() * x).sin());
            }
        }
        let (mut wc, mut ws) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for m in 1..=n {
            let b = c_g * T::from_count(m).powf(-p);
            let phi = T::lit(0.7) * T::from_count(m);
            wc.push(b * phi.cos());
            ws.push(b * phi.sin());
        }
        Self { nodes, basis, wc, ws }
    }

    fn eval(&self, c: &[T]) -> Vec<T> {
        let n = c.len();
        (0..self.nodes)
            .map(|j| self.basis[j * n..(j + 1) * n].iter().zip(c).map(|(b, x)| *b * *x).sum())
            .collect()
    }

    /// `c_g b_m mean_j[ w_j sin(u_j + φ_m + shift) ]` for `shift = 0` (`k = 0`),
    /// `π/2` (`k = 1`), `π` (`k = 2`) and `3π/2` (`k = 3`).
    fn project(&self, u: &[T], w: Option<&[T]>, k: u8) -> Vec<T> {
        let q = T::from_count(self.nodes);
        let (mut ms, mut mc) = (T::zero(), T::zero());
        for (j, uj) in u.iter().enumerate() {
            let wj = w.map_or(T::one(), |w| w[j]);
            ms += wj * uj.sin();
            mc += wj * uj.cos();
        }
        ms /= q;
        mc /= q;
        // sin(u+φ) = sin u cos φ + cos u sin φ; shifting by π/2 rotates (ms, mc).
        let (a, b) = match k {
            0 => (ms, mc),
            1 => (mc, -ms),
            2 => (-ms, -mc),
            _ => (-mc, ms),
        };
        self.wc.iter().zip(&self.ws).map(|(wc, ws)| *wc * a + *ws * b).collect()
    }
}

/// Diagonal spectral model with eigenvalues `μ_k = k²π² + λ_A`.
#[derive(Debug, Clone)]
pub struct SpectralModel<T: Real> {
    cfg: ModelConfig<T>,
    mu: Vec<T>,
    g_linear: Vec<T>,
    f_scale: Vec<T>,
    mu_alpha: Vec<T>,
    kernel: Option<IntegralKernel<T>>,
}

impl<T: Real> SpectralModel<T> {
    pub fn new(cfg: ModelConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_modes;
        let lap: Vec<T> = (1..=n).map(|k| T::from_count(k * k) * T::PI() * T::PI()).collect();
        let mu: Vec<T> = lap.iter().map(|l| *l + cfg.lambda_a).collect();
        let g_linear = lap.iter().map(|l| cfg.c_g * l.powf(cfg.sigma_g)).collect();
        let f_scale = mu.iter().map(|m| cfg.c_f * m.powf(cfg.sigma_f - cfg.alpha)).collect();
        let mu_alpha = mu.iter().map(|m| m.powf(cfg.alpha)).collect();
        let kernel = (cfg.g_kind == GKind::Integral).then(|| IntegralKernel::new(n, cfg.c_g, cfg.g_decay));
        Ok(Self { cfg, mu, g_linear, f_scale, mu_alpha, kernel })
    }

    pub fn config(&self) -> &ModelConfig<T> {
        &self.cfg
    }

    pub fn n_modes(&self) -> usize {
        self.cfg.n_modes
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn lambda_a(&self) -> T {
        self.cfg.lambda_a
    }

    pub fn alpha(&self) -> T {
        self.cfg.alpha
    }

    pub fn c_f(&self) -> T {
        self.cfg.c_f
    }

    pub fn state(&self, coeffs: Vec<T>) -> Result<SpectralState<T>> {
        if coeffs.len() != self.n_modes() {
            return invalid(format!("state has {} modes, model has {}", coeffs.len(), self.n_modes()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("state has non-finite coefficients");
        }
        Ok(SpectralState { coeffs, alpha: self.alpha() })
    }

    /// `(Σ_k μ_k^{2a} x_k²)^{1/2}`.
    pub fn norm(&self, x: &[T], a: T) -> T {
        if a == T::zero() {
            return x.iter().map(|v| *v * *v).sum::<T>().sqrt();
        }
        if a == self.cfg.alpha {
            return x.iter().zip(&self.mu_alpha).map(|(v, m)| *v * *m * *v * *m).sum::<T>().sqrt();
        }
        x.iter().zip(&self.mu).map(|(v, m)| (*v * m.powf(a)).powi(2)).sum::<T>().sqrt()
    }

    pub fn frac_norm(&self, state: &SpectralState<T>, a: T) -> T {
        self.norm(&state.coeffs, a)
    }

    /// `‖x − z‖_a`.
    pub fn dist(&self, x: &[T], z: &[T], a: T) -> T {
        let d: Vec<T> = x.iter().zip(z).map(|(a, b)| *a - *b).collect();
        self.norm(&d, a)
    }

    pub fn semigroup_in_place(&self, t: T, x: &mut [T]) {
        for (v, m) in x.iter_mut().zip(&self.mu) {
            *v *= (-*m * t).exp();
        }
    }

    pub fn semigroup(&self, t: T, x: &[T]) -> Result<Vec<T>> {
        if !(t >= T::zero()) {
            return invalid(format!("semigroup time {t} must be nonnegative"));
        }
        let mut y = x.to_vec();
        self.semigroup_in_place(t, &mut y);
        Ok(y)
    }

    pub fn semigroup_apply(&self, t: T, state: &SpectralState<T>) -> Result<SpectralState<T>> {
        Ok(SpectralState { coeffs: self.semigroup(t, &state.coeffs)?, alpha: state.alpha })
    }

    /// `F_k(x) = c_f μ_k^{σ_F−α}(s_k + tanh(μ_k^α x_k))`, forcing `s = f_forcing·e_1`.
    pub fn apply_f(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .enumerate()
            .map(|(k, v)| {
                let s = if k == 0 { self.cfg.f_forcing } else { T::zero() };
                self.f_scale[k] * (s + (self.mu_alpha[k] * *v).tanh())
            })
            .collect()
    }

    pub fn apply_f_state(&self, state: &SpectralState<T>) -> SpectralState<T> {
        SpectralState { coeffs: self.apply_f(&state.coeffs), alpha: state.alpha - self.cfg.sigma_f }
    }

    pub fn apply_g(&self, x: &[T]) -> Vec<T> {
        match &self.kernel {
            None => x.iter().zip(&self.g_linear).map(|(v, g)| *v * *g).collect(),
            Some(k) => k.project(&k.eval(x), None, 0),
        }
    }

    pub fn apply_g_state(&self, state: &SpectralState<T>) -> SpectralState<T> {
        SpectralState { coeffs: self.apply_g(&state.coeffs), alpha: state.alpha - self.cfg.sigma_g }
    }

    /// `[DG(x)](h)`.
    pub fn dg(&self, x: &[T], h: &[T]) -> Vec<T> {
        match &self.kernel {
            None => self.apply_g(h),
            Some(k) => k.project(&k.eval(x), Some(&k.eval(h)), 1),
        }
    }

    /// `[D²G(x)](h1, h2)`.
    pub fn d2g(&self, x: &[T], h1: &[T], h2: &[T]) -> Vec<T> {
        match &self.kernel {
            None => vec![T::zero(); x.len()],
            Some(k) => {
                let w: Vec<T> = k.eval(h1).iter().zip(k.eval(h2)).map(|(a, b)| *a * b).collect();
                k.project(&k.eval(x), Some(&w), 2)
            }
        }
    }

    /// `[D³G(x)](h1, h2, h3)`.
    pub fn d3g(&self, x: &[T], h1: &[T], h2: &[T], h3: &[T]) -> Vec<T> {
        match &self.kernel {
            None => vec![T::zero(); x.len()],
            Some(k) => {
                let (a, b, c) = (k.eval(h1), k.eval(h2), k.eval(h3));
                let w: Vec<T> = (0..a.len()).map(|j| a[j] * b[j] * c[j]).collect();
                k.project(&k.eval(x), Some(&w), 3)
            }
        }
    }

    /// Gubinelli derivative of `G(y)`: `DG(y)∘G(y)`.
    pub fn dg_g(&self, x: &[T]) -> Vec<T> {
        match &self.kernel {
            None => x.iter().zip(&self.g_linear).map(|(v, g)| *v * *g * *g).collect(),
            Some(k) => {
                let u = k.eval(x);
                let g = k.project(&u, None, 0);
                k.project(&u, Some(&k.eval(&g)), 1)
            }
        }
    }

    /// `C_{−σ}(λ) = sup_{u>0} u^σ e^{−(1−λ/μ₁)u}`, the smoothing constant of
    /// `‖S_t x‖_{α+σ} ≤ C e^{−λt} t^{−σ} ‖x‖_α`.
    pub fn c_minus_sigma(&self, sigma: T, lambda: T) -> Result<T> {
        if !(lambda < self.mu[0]) {
            return invalid(format!("lambda = {lambda} must be below mu_1 = {}", self.mu[0]));
        }
        c_minus_sigma(sigma, T::one() - lambda / self.mu[0])
    }

    /// `C_G` as the largest operator norm of `G, DG, D²G, D³G` from
    /// `E_{α−ϑ}` to `E_{α−ϑ−σ_G}` over `ϑ ∈ {0, γ, 2γ}`.
    pub fn c_g_bound(&self, gamma: T) -> Result<T> {
        self.cfg.validate_for_gamma(gamma)?;
        let c = &self.cfg;
        match c.g_kind {
            GKind::Linear => Ok(c.c_g),
            GKind::Integral => {
                let mut best = T::zero();
                for theta in [T::zero(), gamma, gamma + gamma] {
                    let s = c.alpha - theta;
                    let b = (1..=c.n_modes)
                        .map(|m| (self.mu[m - 1].powf(s - c.sigma_g) * T::from_count(m).powf(-c.g_decay)).powi(2))
                        .sum::<T>()
                        .sqrt();
                    let l2 = self.mu[0].powf(-s);
                    let linf = T::SQRT_2() * self.mu.iter().map(|m| m.powf(-(s + s))).sum::<T>().sqrt();
                    let cands = [T::one(), l2, l2 * l2, l2 * l2 * linf];
                    for k in cands {
                        best = best.max(c.c_g * b * k);
                    }
                }
                Ok(best)
            }
        }
    }
}

/// `sup_{u>0} u^σ e^{−κu}` by golden-section search on the logarithm.
pub fn c_minus_sigma<T: Real>(sigma: T, kappa: T) -> Result<T> {
    if !(sigma >= T::zero()) || !(kappa > T::zero()) {
        return invalid(format!("need sigma >= 0 and kappa > 0, got {sigma}, {kappa}"));
    }
    if sigma == T::zero() {
        return Ok(T::one());
    }
    let f = |u: T| sigma * u.ln() - kappa * u;
    let (mut a, mut b) = (T::lit(1e-12), T::lit(10.0) * (sigma / kappa) + T::one());
    let r = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    Ok(f((a + b) / T::lit(2.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(kind: GKind) -> SpectralModel<f64> {
        let mut c = ModelConfig::new(16, 2.0, 0.9);
        c.sigma_f = 0.3;
        c.sigma_g = 0.1;
        c.c_f = 0.8;
        c.c_g = 0.5;
        c.g_kind = kind;
        c.g_decay = 2.0 * (c.alpha - c.sigma_g) + 1.5;
        SpectralModel::new(c).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, m: &SpectralModel<f64>, scale: f64) -> Vec<f64> {
        (0..m.n_modes()).map(|k| scale * rng.random_range(-1.0..1.0) / m.mu()[k]).collect()
    }

    #[test]
    fn norm_of_single_mode() {
        let m = model(GKind::Linear);
        let mut e = vec![0.0; 16];
        e[3] = 1.0;
        assert_eq!(m.norm(&e, 0.0), 1.0);
        assert!((m.norm(&e, 0.7) - m.mu()[3].powf(0.7)).abs() < 1e-12 * m.mu()[3].powf(0.7));
        let x = vec![3.0, 4.0];
        let m2 = SpectralModel::new(ModelConfig::new(2, 1.0, 0.5)).unwrap();
        assert_eq!(m2.norm(&x, 0.0), 5.0);
    }

    #[test]
    fn interpolation_inequality() {
        let m = model(GKind::Linear);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a1, a2, a3) = (0.1, 0.45, 1.2);
            let lhs = m.norm(&x, a2).powf(a3 - a1);
            let rhs = m.norm(&x, a1).powf(a3 - a2) * m.norm(&x, a3).powf(a2 - a1);
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn semigroup_identity_decay_and_composition() {
        let m = model(GKind::Linear);
        let x: Vec<f64> = (0..16).map(|k| 1.0 / (k + 1) as f64).collect();
        assert_eq!(m.semigroup(0.0, &x).unwrap(), x);
        assert!(m.semigroup(-1.0, &x).is_err());
        for t in [0.01, 0.1, 1.0] {
            let y = m.semigroup(t, &x).unwrap();
            assert!(m.norm(&y, 0.0) <= (-m.lambda_a() * t).exp() * m.norm(&x, 0.0));
            let z = m.semigroup(t, &m.semigroup(0.3, &x).unwrap()).unwrap();
            let w = m.semigroup(t + 0.3, &x).unwrap();
            for (a, b) in z.iter().zip(&w) {
                assert!((a - b).abs() <= 1e-11 * b.abs());
            }
        }
    }

    #[test]
    fn smoothing_constant_bounds_semigroup() {
        let m = model(GKind::Linear);
        let (sigma, lambda) = (0.5, 1.5);
        let c = m.c_minus_sigma(sigma, lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nx = m.norm(&x, m.alpha());
            for i in 1..=200 {
                let t = i as f64 / 200.0;
                let y = m.semigroup(t, &x).unwrap();
                let r = t.powf(sigma) * (lambda * t).exp() * m.norm(&y, m.alpha() + sigma) / nx;
                assert!(r <= c * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn smoothing_constant_matches_closed_form() {
        for (sigma, kappa) in [(0.5, 0.3), (0.25, 1.0), (0.9, 0.05)] {
            let exact = (sigma / kappa as f64).powf(sigma) * (-sigma as f64).exp();
            let c = c_minus_sigma(sigma, kappa).unwrap();
            assert!((c / exact - 1.0).abs() < 1e-10);
        }
        assert_eq!(c_minus_sigma(0.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn drift_is_lipschitz_with_constant_c_f() {
        let m = model(GKind::Linear);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = m.alpha();
        let sf = m.config().sigma_f;
        assert!(m.norm(&m.apply_f(&vec![0.0; 16]), a - sf) <= m.c_f());
        for _ in 0..1000 {
            let x = random_state(&mut rng, &m, 3.0);
            let z = random_state(&mut rng, &m, 3.0);
            let fx = m.apply_f(&x);
            let fz = m.apply_f(&z);
            let ratio = m.dist(&fx, &fz, a - sf) / m.dist(&x, &z, a);
            assert!(ratio <= m.c_f() * (1.0 + 1e-12));
            assert!(m.norm(&fx, a - sf) <= m.c_f() * (1.0 + m.norm(&x, a)) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_drift_config() {
        let mut c = ModelConfig::new(4, 1.0, 0.5);
        c.c_f = 0.0;
        let m = SpectralModel::new(c).unwrap();
        assert!(m.apply_f(&[1.0, 2.0, 3.0, 4.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_g_is_diagonal() {
        let m = model(GKind::Linear);
        let mut e = vec![0.0; 16];
        e[2] = 1.0;
        let g = m.apply_g(&e);
        let expected = 0.5 * (9.0 * std::f64::consts::PI.powi(2)).powf(0.1);
        assert!((g[2] - expected).abs() < 1e-14);
        assert!(g.iter().enumerate().all(|(k, v)| k == 2 || *v == 0.0));
        let x: Vec<f64> = (0..16).map(|k| (k as f64).sin()).collect();
        let gg = m.apply_g(&m.apply_g(&x));
        for (a, b) in m.dg_g(&x).iter().zip(&gg) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    fn fd_check(f: impl Fn(f64) -> Vec<f64>, exact: &[f64]) {
        let eps = 1e-5;
        let (p, q) = (f(eps), f(-eps));
        let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (i, e) in exact.iter().enumerate() {
            let fd = (p[i] - q[i]) / (2.0 * eps);
            assert!((fd - e).abs() <= 1e-5 * scale, "mode {i}: {fd} vs {e}");
        }
    }

    #[test]
    fn integral_g_derivatives_match_finite_differences() {
        let m = model(GKind::Integral);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let add = |x: &[f64], h: &[f64], s: f64| -> Vec<f64> { x.iter().zip(h).map(|(a, b)| a + s * b).collect() };
        for _ in 0..5 {
            let x = random_state(&mut rng, &m, 10.0);
            let h1 = random_state(&mut rng, &m, 10.0);
            let h2 = random_state(&mut rng, &m, 10.0);
            let h3 = random_state(&mut rng, &m, 10.0);
            fd_check(|s| m.apply_g(&add(&x, &h1, s)), &m.dg(&x, &h1));
            fd_check(|s| m.dg(&add(&x, &h2, s), &h1), &m.d2g(&x, &h1, &h2));
            fd_check(|s| m.d2g(&add(&x, &h3, s), &h1, &h2), &m.d3g(&x, &h1, &h2, &h3));
            let g = m.apply_g(&x);
            let dgg = m.dg_g(&x);
            for (a, b) in dgg.iter().zip(m.dg(&x, &g)) {
                assert_eq!(*a, b);
            }
        }
    }

    #[test]
    fn integral_g_respects_c_g_bound() {
        let m = model(GKind::Integral);
        let gamma = 0.4;
        let cg = m.c_g_bound(gamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = m.alpha();
        let sg = m.config().sigma_g;
        for theta in [0.0, gamma, 2.0 * gamma] {
            for _ in 0..200 {
                let x = random_state(&mut rng, &m, 20.0);
                let h1 = random_state(&mut rng, &m, 20.0);
                let h2 = random_state(&mut rng, &m, 20.0);
                let n1 = m.norm(&h1, a - theta);
                let n2 = m.norm(&h2, a - theta);
                assert!(m.norm(&m.apply_g(&x), a - theta - sg) <= cg);
                assert!(m.norm(&m.dg(&x, &h1), a - theta - sg) <= cg * n1);
                assert!(m.norm(&m.d2g(&x, &h1, &h2), a - theta - sg) <= cg * n1 * n2);
            }
        }
    }

    #[test]
    fn integral_g_validation() {
        let mut c = model(GKind::Integral).config().clone();
        c.g_decay = 1.0;
        assert!(matches!(SpectralModel::new(c.clone()), Err(Error::Config(_))));
        c.g_decay = 5.0;
        c.alpha = 0.5;
        let m = SpectralModel::new(c).unwrap();
        assert!(m.c_g_bound(0.4).is_err());
    }

    #[test]
    fn config_round_trip() {
        let kv = KvConfig::parse("n_modes = 8\nlambda_a = 3\nalpha = 0.8\ng_kind = integral\nc_g = 0.2\n").unwrap();
        let c: ModelConfig<f64> = ModelConfig::from_kv(&kv).unwrap();
        assert_eq!(c.g_kind, GKind::Integral);
        assert_eq!(ModelConfig::from_kv(&c.to_kv()).unwrap(), c);
        let bad = KvConfig::parse("lambda_a = -1\nalpha = 0.8\n").unwrap();
        assert!(matches!(ModelConfig::<f64>::from_kv(&bad), Err(Error::Config(_))));
        let bad = KvConfig::parse("lambda_a = 1\nalpha = 0.8\ng_kind = cubic\n").unwrap();
        assert!(matches!(ModelConfig::<f64>::from_kv(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn higher_modes_are_small_in_lower_norms() {
        let m = model(GKind::Linear);
        let beta = 0.3;
        for k in 0..16 {
            let mut e = vec![0.0; 16];
            e[k] = 1.0 / m.norm(&{
                let mut u = vec![0.0; 16];
                u[k] = 1.0;
                u
            }, m.alpha() + beta);
            assert!((m.norm(&e, m.alpha()) - m.mu()[k].powf(-beta)).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_model_runs() {
        let m = SpectralModel::<f32>::new(ModelConfig::new(4, 1.0, 0.5)).unwrap();
        let y = m.semigroup(0.1, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(y[0] < 1.0 && y[3] < y[0]);
    }

    proptest! {
        #[test]
        fn semigroup_is_monotone_in_time(t in 0.0f64..2.0, dt in 0.0f64..1.0, x in proptest::collection::vec(-5.0f64..5.0, 16)) {
            let m = model(GKind::Linear);
            let a = m.norm(&m.semigroup(t, &x).unwrap(), 0.9);
            let b = m.norm(&m.semigroup(t + dt, &x).unwrap(), 0.9);
            prop_assert!(b <= a * (1.0 + 1e-14));
        }
    }
}
