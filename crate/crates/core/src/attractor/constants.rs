//! The auditable record of every constant entering the attractor bounds.

use std::io::Write;

use crate::config::KvConfig;
use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::specfun::{certify_ml_bound, gamma_fn, mittag_leffler};
use crate::spectral::SpectralModel;

/// How a constant came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Primitive,
    Derived,
    Calibrated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Primitive => "primitive",
            Provenance::Derived => "derived",
            Provenance::Calibrated => "calibrated",
        }
    }
}

/// User-facing inputs; everything else is derived from these and the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantInputs<T: Real> {
    pub gamma: T,
    pub eta: T,
    pub chi: T,
    pub m_tilde: T,
    pub m_big: T,
    /// Constant of the rough-convolution estimate.
    pub c_i: T,
    pub delta_bar: T,
    pub z_min: T,
    pub z_max: T,
    /// Set when `m_tilde`, `m_big` and `c_i` come out of a calibration run.
    pub calibrated: bool,
}

impl<T: Real> ConstantInputs<T> {
    pub fn new(gamma: T, eta: T, chi: T) -> Self {
        Self {
            gamma,
            eta,
            chi,
            m_tilde: T::lit(0.01),
            m_big: T::one(),
            c_i: T::one(),
            delta_bar: T::lit(0.1),
            z_min: T::lit(2.0),
            z_max: T::lit(50.0),
            calibrated: false,
        }
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = Self::new(kv.require("gamma")?, kv.require("eta")?, kv.require("chi")?);
        c.m_tilde = kv.get_or("m_tilde", c.m_tilde)?;
        c.m_big = kv.get_or("m_big", c.m_big)?;
        c.c_i = kv.get_or("c_i", c.c_i)?;
        c.delta_bar = kv.get_or("delta_bar", c.delta_bar)?;
        c.z_min = kv.get_or("z_min", c.z_min)?;
        c.z_max = kv.get_or("z_max", c.z_max)?;
        c.calibrated = kv.get_or("calibrated", false)?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("gamma", self.gamma);
        kv.set("eta", self.eta);
        kv.set("chi", self.chi);
        kv.set("m_tilde", self.m_tilde);
        kv.set("m_big", self.m_big);
        kv.set("c_i", self.c_i);
        kv.set("delta_bar", self.delta_bar);
        kv.set("z_min", self.z_min);
        kv.set("z_max", self.z_max);
        kv.set("calibrated", self.calibrated);
        kv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants<T: Real> {
    pub inputs: ConstantInputs<T>,
    pub gamma: T,
    pub eta: T,
    pub chi: T,
    pub sigma_f: T,
    pub sigma_g: T,
    pub c_f: T,
    pub c_g: T,
    pub lambda_a: T,
    pub c_a: T,
    pub m_tilde: T,
    pub m_big: T,
    pub c_i: T,
    pub delta_bar: T,
    pub d_step: T,
    /// `Ñ` for a unit interval.
    pub n_tilde: usize,
    pub c_minus_sigma_f: T,
    pub big_l: T,
    pub l_tilde: T,
    pub lambda: T,
    pub t0: T,
    /// `M_{1−σ_F}`; zero when `C_F = 0` and the certificate is not needed.
    pub m_beta: T,
    pub c_1: T,
    pub c_2: T,
    pub c_tilde_1: T,
    pub c_tilde_2: T,
    pub c_tilde_a: T,
    pub ln_c_of_n: T,
    pub c_of_n: T,
    pub ln_c_const: T,
    pub c_const: T,
    pub q_moment: T,
}

/// `ln C(Ñ)` with `C(Ñ) = max{1+Ñ, 2(1+Ñ), 3·2^{4(1+Ñ)} M^{1+Ñ}}`.
pub fn ln_c_of_n<T: Real>(n_tilde: usize, m_big: T) -> T {
    let k = T::from_count(1 + n_tilde);
    let a = k.ln();
    let b = (k + k).ln();
    let c = T::lit(3.0).ln() + T::lit(4.0) * k * T::LN_2() + k * m_big.ln();
    a.max(b).max(c)
}

/// `d = (4M̃)^{−1/(1−max{σ_F, 2γ})}`.
pub fn d_step<T: Real>(m_tilde: T, sigma_f: T, gamma: T) -> T {
    let e = T::one() - sigma_f.max(gamma + gamma);
    (T::lit(4.0) * m_tilde).powf(-T::one() / e)
}

/// `⌈len/d⌉`, at least one.
pub fn n_tilde_for<T: Real>(len: T, d: T) -> usize {
    // guard against 1/d landing one ulp above an integer
    let r = (len / d * (T::one() - T::lit(1e-12))).ceil();
    r.to_usize().unwrap_or(usize::MAX).max(1)
}

/// `L`, `L̃`, `t₀`, `M_{1−σ_F}` and the factor `max{L̃, M_{1−σ_F}/2}` (the
/// factor is one when `C_F = 0`).
pub(crate) struct GronwallPart<T> {
    pub big_l: T,
    pub l_tilde: T,
    pub t0: T,
    pub m_beta: T,
    pub factor: T,
}

pub(crate) fn gronwall_part<T: Real>(
    sigma: T,
    c_minus: T,
    c_f: T,
    z_min: T,
    z_max: T,
) -> Result<GronwallPart<T>> {
    if c_f == T::zero() {
        return Ok(GronwallPart {
            big_l: T::zero(),
            l_tilde: T::one(),
            t0: T::zero(),
            m_beta: T::zero(),
            factor: T::one(),
        });
    }
    let beta = T::one() - sigma;
    let big_l = T::lit(2.0) * (c_minus * c_f * gamma_fn(beta)?).powf(T::one() / beta);
    let t0 = (z_min + z_min) / big_l;
    let l_tilde = T::lit(2.0) * mittag_leffler(beta, T::one(), z_min)? / big_l + T::one();
    let m_beta = certify_ml_bound(beta, z_min, z_max)?.m_beta;
    let half = m_beta / T::lit(2.0);
    Ok(GronwallPart { big_l, l_tilde, t0, m_beta, factor: l_tilde.max(half) })
}

impl<T: Real> BoundConstants<T> {
    pub fn derive(model: &SpectralModel<T>, inp: &ConstantInputs<T>) -> Result<Self> {
        let cfg = model.config();
        let (gamma, eta, chi) = (inp.gamma, inp.eta, inp.chi);
        let third = T::one() / T::lit(3.0);
        if !(gamma > third && gamma <= T::lit(0.5)) {
            return Err(Error::Config(format!("gamma = {gamma} must lie in (1/3, 1/2]")));
        }
        cfg.validate_for_gamma(gamma)?;
        if !(eta > cfg.sigma_g && eta < gamma) {
            return Err(Error::Config(format!("eta = {eta} must lie in (sigma_g, gamma) = ({}, {gamma})", cfg.sigma_g)));
        }
        if !(chi > T::zero() && chi < T::one()) {
            return Err(Error::Config(format!("chi = {chi} must lie in (0, 1)")));
        }
        for (name, v) in [("m_tilde", inp.m_tilde), ("m_big", inp.m_big), ("c_i", inp.c_i), ("delta_bar", inp.delta_bar)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if inp.m_tilde.exp() * chi.powf(gamma - eta) > T::lit(0.5) {
            return Err(Error::Config(format!(
                "e^m_tilde chi^(gamma-eta) = {} exceeds 1/2",
                inp.m_tilde.exp() * chi.powf(gamma - eta)
            )));
        }
        if !(cfg.lambda_a > T::zero()) {
            return Err(Error::Config(format!("lambda_a = {} must be positive", cfg.lambda_a)));
        }
        let sigma_f = cfg.sigma_f;
        let c_f = cfg.c_f;
        let c_g = model.c_g_bound(gamma)?;
        let lambda_a = cfg.lambda_a;
        let c_a = T::one();
        let d = d_step(inp.m_tilde, sigma_f, gamma);
        let n_tilde = n_tilde_for(T::one(), d);
        let c_minus_sigma_f = model.c_minus_sigma(sigma_f, lambda_a)?;
        let gp = gronwall_part(sigma_f, c_minus_sigma_f, c_f, inp.z_min, inp.z_max).map_err(|e| match e {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        })?;
        let lambda = lambda_a - gp.big_l;
        let c_1 = (inp.c_i * c_a).max(inp.c_i);
        let c_2 = if c_f == T::zero() {
            T::zero()
        } else {
            c_minus_sigma_f * c_f * lambda_a.powf(sigma_f - T::one()) * gamma_fn(T::one() - sigma_f)?
        };
        let c_tilde_1 = c_1 * lambda_a.exp() * gp.factor;
        let c_tilde_2 = if c_2 == T::zero() {
            T::zero()
        } else if lambda > T::zero() {
            c_2 * (gp.l_tilde + gp.big_l * gp.m_beta / (lambda + lambda))
        } else {
            T::infinity()
        };
        let c_tilde_a = c_a * gp.factor;
        let ln_cn = ln_c_of_n(n_tilde, inp.m_big);
        let ln_c = ln_cn + inp.m_tilde.max(c_tilde_1 * c_g).ln();
        let q_moment = T::lit(4.0) * T::from_count(1 + n_tilde) / (gamma - eta);
        Ok(Self {
            inputs: *inp,
            gamma,
            eta,
            chi,
            sigma_f,
            sigma_g: cfg.sigma_g,
            c_f,
            c_g,
            lambda_a,
            c_a,
            m_tilde: inp.m_tilde,
            m_big: inp.m_big,
            c_i: inp.c_i,
            delta_bar: inp.delta_bar,
            d_step: d,
            n_tilde,
            c_minus_sigma_f,
            big_l: gp.big_l,
            l_tilde: gp.l_tilde,
            lambda,
            t0: gp.t0,
            m_beta: gp.m_beta,
            c_1,
            c_2,
            c_tilde_1,
            c_tilde_2,
            c_tilde_a,
            ln_c_of_n: ln_cn,
            c_of_n: ln_cn.exp(),
            ln_c_const: ln_c,
            c_const: ln_c.exp(),
            q_moment,
        })
    }

    /// Loads the inputs from `kv`, derives everything, and compares any
    /// derived keys that are also present in `kv`.
    pub fn from_kv(model: &SpectralModel<T>, kv: &KvConfig) -> Result<Self> {
        let k = Self::derive(model, &ConstantInputs::from_kv(kv)?)?;
        k.cross_check(kv)?;
        Ok(k)
    }

    pub fn load(model: &SpectralModel<T>, path: &std::path::Path) -> Result<Self> {
        Self::from_kv(model, &KvConfig::load(path)?)
    }

    /// Same model, new calibration parameters.
    pub fn recalibrated(&self, model: &SpectralModel<T>, m_tilde: T, m_big: T, c_i: T) -> Result<Self> {
        let inp = ConstantInputs { m_tilde, m_big, c_i, calibrated: true, ..self.inputs };
        Self::derive(model, &inp)
    }

    /// `Ñ` for an interval of length `len`.
    pub fn n_tilde_for(&self, len: T) -> usize {
        n_tilde_for(len, self.d_step)
    }

    /// Requires `λ > 0`, the standing assumption of every absorbing-set run.
    pub fn require_positive_lambda(&self) -> Result<()> {
        if self.lambda > T::zero() {
            Ok(())
        } else {
            Err(Error::Config(format!("lambda = lambda_a - L = {} must be positive", self.lambda)))
        }
    }

    pub fn rows(&self) -> Vec<(&'static str, T, Provenance)> {
        use Provenance::*;
        let cal = if self.inputs.calibrated { Calibrated } else { Primitive };
        vec![
            ("gamma", self.gamma, Primitive),
            ("eta", self.eta, Primitive),
            ("chi", self.chi, Primitive),
            ("sigma_f", self.sigma_f, Primitive),
            ("sigma_g", self.sigma_g, Primitive),
            ("c_f", self.c_f, Primitive),
            ("c_g", self.c_g, Derived),
            ("lambda_a", self.lambda_a, Primitive),
            ("c_a", self.c_a, Primitive),
            ("m_tilde", self.m_tilde, cal),
            ("m_big", self.m_big, cal),
            ("c_i", self.c_i, cal),
            ("delta_bar", self.delta_bar, Primitive),
            ("z_min", self.inputs.z_min, Primitive),
            ("z_max", self.inputs.z_max, Primitive),
            ("d_step", self.d_step, Derived),
            ("n_tilde", T::from_count(self.n_tilde), Derived),
            ("c_minus_sigma_f", self.c_minus_sigma_f, Derived),
            ("big_l", self.big_l, Derived),
            ("l_tilde", self.l_tilde, Derived),
            ("lambda", self.lambda, Derived),
            ("t0", self.t0, Derived),
            ("m_beta", self.m_beta, Derived),
            ("c_1", self.c_1, Derived),
            ("c_2", self.c_2, Derived),
            ("c_tilde_1", self.c_tilde_1, Derived),
            ("c_tilde_2", self.c_tilde_2, Derived),
            ("c_tilde_a", self.c_tilde_a, Derived),
            ("ln_c_of_n", self.ln_c_of_n, Derived),
            ("c_of_n", self.c_of_n, Derived),
            ("ln_c_const", self.ln_c_const, Derived),
            ("c_const", self.c_const, Derived),
            ("q_moment", self.q_moment, Derived),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "name,value,provenance")?;
        for (n, v, p) in self.rows() {
            writeln!(w, "{n},{v},{}", p.as_str())?;
        }
        Ok(())
    }

    /// Inputs plus every derived value; loading this back cross-checks.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = self.inputs.to_kv();
        for (n, v, p) in self.rows() {
            if p == Provenance::Derived {
                kv.set(n, v);
            }
        }
        kv
    }

    /// Compares derived values present in `kv` to 1e-9 relative.
    pub fn cross_check(&self, kv: &KvConfig) -> Result<()> {
        let tol = T::lit(1e-9);
        for (n, v, p) in self.rows() {
            if p != Provenance::Derived {
                continue;
            }
            let Some(given) = kv.get::<T>(n)? else { continue };
            let same = (given == v) || ((given - v).abs() <= tol * v.abs().max(given.abs()));
            if !same {
                return Err(Error::Config(format!("{n}: file says {given}, recomputed {v}")));
            }
        }
        Ok(())
    }
}

/// `P(x, y) = 1 + x + y + x(x² + y)`.
pub fn poly_p<T: Real>(x: T, y: T) -> T {
    T::one() + x + y + x * (x * x + y)
}

pub(crate) fn check_beta<T: Real>(k: &BoundConstants<T>, beta: T) -> Result<()> {
    if !(beta > T::zero()) {
        return invalid(format!("beta = {beta} must be positive"));
    }
    if k.sigma_f + beta >= T::one() || k.sigma_g + beta >= k.gamma {
        return Err(Error::InvalidRegularity(format!(
            "beta = {beta} needs sigma_f + beta < 1 and sigma_g + beta < gamma (sigma_f = {}, sigma_g = {}, gamma = {})",
            k.sigma_f, k.sigma_g, k.gamma
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{GKind, ModelConfig};

    pub(crate) fn model(c_f: f64, c_g: f64, lambda_a: f64) -> SpectralModel<f64> {
        let mut cfg = ModelConfig::new(8, lambda_a, 0.5);
        cfg.c_f = c_f;
        cfg.c_g = c_g;
        cfg.g_kind = GKind::Linear;
        SpectralModel::new(cfg).unwrap()
    }

    fn inputs() -> ConstantInputs<f64> {
        ConstantInputs::new(0.45, 0.05, 0.1)
    }

    #[test]
    fn p_polynomial() {
        assert_eq!(poly_p(0.0, 0.0), 1.0);
        assert_eq!(poly_p(1.0, 1.0), 5.0);
    }

    #[test]
    fn d_and_n_tilde_at_unit_m_tilde() {
        let d = d_step(1.0f64, 0.0, 0.4);
        assert!((d - 4f64.powi(-5)).abs() < 1e-15);
        assert!((d - 9.765_625e-4).abs() < 1e-15);
        assert_eq!(n_tilde_for(1.0, d), 1024);
    }

    #[test]
    fn c_of_n_matches_direct_evaluation() {
        // Ñ = 1, M = 1: max{2, 4, 3·2^8} = 768
        assert!((ln_c_of_n(1, 1.0f64).exp() - 768.0).abs() < 1e-9);
        // tiny M: the linear terms win
        assert!((ln_c_of_n(3, 1e-6f64).exp() - 8.0).abs() < 1e-12);
        // huge Ñ stays finite in log space
        assert!(ln_c_of_n(1024, 2.0f64).is_finite());
    }

    #[test]
    fn zero_forcing_limit() {
        let k = BoundConstants::derive(&model(0.0, 0.1, 2.0), &inputs()).unwrap();
        assert_eq!(k.big_l, 0.0);
        assert_eq!(k.lambda, 2.0);
        assert_eq!(k.c_tilde_2, 0.0);
        assert_eq!(k.c_tilde_a, 1.0);
        assert!((k.c_tilde_1 - 2f64.exp()).abs() < 1e-12);
        assert_eq!(k.c_g, 0.1);
    }

    #[test]
    fn sigma_f_zero_threshold() {
        // σ_F = 0: L = 2 C_{-0} C_F, C_{-0} = 1
        let k = BoundConstants::derive(&model(0.5, 0.1, 5.0), &inputs()).unwrap();
        assert!((k.big_l - 1.0).abs() < 1e-12);
        assert!((k.lambda - 4.0).abs() < 1e-12);
        assert!((k.t0 - 4.0).abs() < 1e-12);
        assert!((k.l_tilde - (2.0 * 2f64.exp() + 1.0)).abs() < 1e-9);
        // E'_{1,1}(z)e^{-2z} = e^{-z} peaks at z_min = 2: 1.1 e^{-2} < 1/4
        assert_eq!(k.m_beta, 0.25);
        let c2 = 0.5 / 5.0;
        assert!((k.c_2 - c2).abs() < 1e-12);
        assert!((k.c_tilde_2 - c2 * (k.l_tilde + 0.25 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let m = model(0.0, 0.1, 2.0);
        let mut i = inputs();
        i.chi = 0.9;
        assert!(matches!(BoundConstants::derive(&m, &i), Err(Error::Config(_))));
        let mut i = inputs();
        i.eta = 0.5;
        assert!(matches!(BoundConstants::derive(&m, &i), Err(Error::Config(_))));
        let mut i = inputs();
        i.m_big = 0.0;
        assert!(matches!(BoundConstants::derive(&m, &i), Err(Error::Config(_))));
        let k = BoundConstants::derive(&model(20.0, 0.1, 2.0), &inputs()).unwrap();
        assert!(k.lambda < 0.0);
        assert!(matches!(k.require_positive_lambda(), Err(Error::Config(_))));
    }

    #[test]
    fn kv_round_trip_and_cross_check() {
        let m = model(0.5, 0.1, 5.0);
        let k = BoundConstants::derive(&m, &inputs()).unwrap();
        let kv = k.to_kv();
        let back = BoundConstants::from_kv(&m, &kv).unwrap();
        assert_eq!(back, k);
        let mut bad = kv.clone();
        bad.set("lambda", 3.0);
        assert!(matches!(BoundConstants::from_kv(&m, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn csv_dump_has_provenance() {
        let k = BoundConstants::derive(&model(0.0, 0.1, 2.0), &inputs()).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("name,value,provenance\n"));
        assert!(s.contains("lambda,2,derived"));
        assert!(s.contains("m_big,1,primitive"));
        let c = k.recalibrated(&model(0.0, 0.1, 2.0), 0.01, 2.0, 3.0).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("m_big,2,calibrated"));
    }
}
