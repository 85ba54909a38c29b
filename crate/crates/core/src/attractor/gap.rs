//! The spectral gap condition `λ_A − L > c(𝐊_q + 1)` and its `β`-shifted form.

use crate::error::Result;
use crate::real::Real;
use crate::spectral::SpectralModel;

use super::constants::{check_beta, gronwall_part, BoundConstants};
use super::ergodic::ErgodicReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck<T: Real> {
    /// `λ_A − L`.
    pub lhs: T,
    /// `c(𝐊_q + 1)`, possibly infinite.
    pub rhs: T,
    pub ln_c: T,
    pub k_bold: T,
    pub pass: bool,
}

impl<T: Real> GapCheck<T> {
    pub fn margin(&self) -> T {
        self.lhs - self.rhs
    }

    /// `δ = (λ − c𝐊_q − c)/2` when positive.
    pub fn delta(&self) -> Option<T> {
        self.pass.then(|| self.margin() / T::lit(2.0))
    }
}

/// Both sides from `λ_A`, `L`, `ln c` and `𝐊_q`.
pub fn gap_sides<T: Real>(lambda_a: T, big_l: T, ln_c: T, k_bold: T) -> GapCheck<T> {
    let lhs = lambda_a - big_l;
    let rhs = (ln_c + k_bold.ln_1p()).exp();
    GapCheck { lhs, rhs, ln_c, k_bold, pass: lhs > rhs }
}

pub fn check_gap_condition<T: Real>(k: &BoundConstants<T>, e: &ErgodicReport<T>) -> GapCheck<T> {
    gap_sides(k.lambda_a, k.big_l, k.ln_c_const, e.k_bold)
}

/// The condition for `E_{α+β}`-regularity of the attractor: `C_{−σ_F}` is
/// replaced by `C_{−σ_F−β}` and `c` by
/// `c_β = C(Ñ)max{M̃, C̃_{1,β}C_G}` with
/// `C̃_{1,β} = max{C_I, C_{−β}C_I}e^{λ_A}min{L̃, M_{1−σ_F−β}/2}`.
pub fn check_gap_condition_beta<T: Real>(
    model: &SpectralModel<T>,
    k: &BoundConstants<T>,
    e: &ErgodicReport<T>,
    beta: T,
) -> Result<GapCheck<T>> {
    check_beta(k, beta)?;
    let sb = k.sigma_f + beta;
    let c_minus = model.c_minus_sigma(sb, k.lambda_a)?;
    let gp = gronwall_part(sb, c_minus, k.c_f, k.inputs.z_min, k.inputs.z_max)?;
    let factor = if k.c_f == T::zero() { T::one() } else { k.l_tilde.min(gp.m_beta / T::lit(2.0)) };
    let c_beta = model.c_minus_sigma(beta, k.lambda_a)?;
    let c1b = k.c_i.max(c_beta * k.c_i) * k.lambda_a.exp() * factor;
    let ln_c = k.ln_c_of_n + k.m_tilde.max(c1b * k.c_g).ln();
    Ok(gap_sides(k.lambda_a, gp.big_l, ln_c, e.k_bold))
}
