//! Gamma and Mittag-Leffler functions.
//!
//! The Mittag-Leffler function uses the convention
//! `E_{β,c}(z) = Σ_k z^{βk} / Γ(βk + c)`, so that `E_{β,c}(z)` grows like `e^z`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::real::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum<T: Real>(x: T) -> T {
    let mut a = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += T::lit(c) / (x + T::from_count(i));
    }
    a
}

/// `ln Γ(z)` for `z > 0`.
pub fn ln_gamma<T: Real>(z: T) -> Result<T> {
    if !(z > T::zero()) {
        return Err(Error::Domain(format!("ln_gamma needs z > 0, got {z}")));
    }
    if z < T::lit(0.5) {
        // Γ(z)Γ(1−z) = π / sin(πz)
        let pi = T::PI();
        return Ok((pi / (pi * z).sin()).ln() - ln_gamma(T::one() - z)?);
    }
    let x = z - T::one();
    let t = x + T::lit(LANCZOS_G + 0.5);
    let half_ln_2pi = T::lit(0.918_938_533_204_672_8);
    Ok(half_ln_2pi + (x + T::lit(0.5)) * t.ln() - t + lanczos_sum(x).ln())
}

/// `Γ(z)` for `z > 0` (Lanczos, g = 7).
pub fn gamma_fn<T: Real>(z: T) -> Result<T> {
    if !(z > T::zero()) {
        return Err(Error::Domain(format!("gamma needs z > 0, got {z}")));
    }
    if z < T::lit(0.5) {
        let pi = T::PI();
        return Ok(pi / ((pi * z).sin() * gamma_fn(T::one() - z)?));
    }
    let x = z - T::one();
    let t = x + T::lit(LANCZOS_G + 0.5);
    let v = (T::TAU()).sqrt() * t.powf(x + T::lit(0.5)) * (-t).exp() * lanczos_sum(x);
    if !v.is_finite() {
        return Err(Error::Range(format!("gamma({z}) overflows")));
    }
    Ok(v)
}

/// Largest `z` for which `e^{2z}` is representable in `T`.
pub fn overflow_horizon<T: Real>() -> T {
    T::max_value().ln() / T::lit(2.0)
}

/// `Σ_{k ≥ k0} z^{βk}/Γ(βk+c)`, summed until past the peak and the next term
/// drops below `1e-16` of the partial sum.
pub fn ml_tail<T: Real>(beta: T, c: T, z: T, k0: usize) -> Result<T> {
    if !(beta > T::zero()) || !(c > T::zero()) {
        return Err(Error::Domain(format!("Mittag-Leffler needs beta, c > 0 (got {beta}, {c})")));
    }
    if z < T::zero() {
        return Err(Error::Domain(format!("Mittag-Leffler needs z >= 0, got {z}")));
    }
    if z > overflow_horizon::<T>() {
        return Err(Error::Range(format!("z = {z} beyond the overflow horizon {}", overflow_horizon::<T>())));
    }
    if z == T::zero() {
        return if k0 == 0 { Ok(T::one() / gamma_fn(c)?) } else { Ok(T::zero()) };
    }
    let lz = z.ln();
    let tol = T::lit(1e-16);
    let mut sum = T::zero();
    let mut prev = T::neg_infinity();
    let mut k = k0;
    loop {
        let arg = beta * T::from_count(k) + c;
        let lt = beta * T::from_count(k) * lz - ln_gamma(arg)?;
        let term = lt.exp();
        sum += term;
        let decreasing = lt < prev;
        prev = lt;
        if decreasing && term <= tol * sum {
            break;
        }
        k += 1;
        if k > k0 + 200_000 {
            return Err(Error::NonConvergence(format!("Mittag-Leffler series at z = {z}")));
        }
    }
    if !sum.is_finite() {
        return Err(Error::Range(format!("E({beta},{c})({z}) overflows")));
    }
    Ok(sum)
}

/// `E_{β,c}(z)`.
pub fn mittag_leffler<T: Real>(beta: T, c: T, z: T) -> Result<T> {
    ml_tail(beta, c, z, 0)
}

/// `E'_{β,1}(z) = z^{β−1} E_{β,β}(z)` for `β ∈ (0, 1]`, `z > 0`.
pub fn ml_derivative<T: Real>(beta: T, z: T) -> Result<T> {
    if !(beta > T::zero() && beta <= T::one()) {
        return Err(Error::Domain(format!("ml_derivative needs beta in (0, 1], got {beta}")));
    }
    if !(z > T::zero()) {
        return Err(Error::Domain(format!("ml_derivative needs z > 0, got {z}")));
    }
    Ok(z.powf(beta - T::one()) * mittag_leffler(beta, beta, z)?)
}

/// Certificate for `E'_{β,1}(z) ≤ M_β e^{2z}` on `[z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlBoundCertificate<T: Real> {
    pub beta: T,
    pub m_beta: T,
    pub z_min: T,
    pub z_max: T,
}

pub const CERT_GRID: usize = 1000;

/// Smallest power of two `M_β ≥ 1.1 · max E'_{β,1}(z) e^{-2z}` over a
/// 10³-point grid of `[z_min, z_max]`.
pub fn certify_ml_bound<T: Real>(beta: T, z_min: T, z_max: T) -> Result<MlBoundCertificate<T>> {
    if !(z_min > T::one() && z_min < z_max) {
        return Err(Error::InvalidInput(format!("certificate needs 1 < z_min < z_max, got [{z_min}, {z_max}]")));
    }
    let mut worst = T::zero();
    for i in 0..CERT_GRID {
        let z = z_min + (z_max - z_min) * T::from_count(i) / T::from_count(CERT_GRID - 1);
        let r = ml_derivative(beta, z)? * (-(z + z)).exp();
        worst = worst.max(r);
    }
    let target = T::lit(1.1) * worst;
    let m_beta = T::lit(2.0).powf(target.log2().ceil());
    Ok(MlBoundCertificate { beta, m_beta, z_min, z_max })
}

impl<T: Real> MlBoundCertificate<T> {
    /// Re-checks the bound at arbitrary points of the certified range.
    pub fn holds_at(&self, zs: &[T]) -> Result<bool> {
        for &z in zs {
            if z < self.z_min || z > self.z_max {
                continue;
            }
            if ml_derivative(self.beta, z)? > self.m_beta * (z + z).exp() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn write_certificates_csv<T: Real, W: Write>(mut w: W, certs: &[MlBoundCertificate<T>]) -> Result<()> {
    writeln!(w, "beta,m_beta,z_min,z_max")?;
    for c in certs {
        writeln!(w, "{},{},{},{}", c.beta, c.m_beta, c.z_min, c.z_max)?;
    }
    Ok(())
}
