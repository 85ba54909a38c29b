//! Fits `C_I`, `M̃` and `M` on a training ensemble, then checks the frozen
//! constants on fresh samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::greedy::count_idx;
use crate::real::Real;
use crate::roughpath::{GridRoughPath, NoiseSpec};
use crate::solver::{controlled_norm, g_path, rough_convolution, solve_mild, ControlledPath};
use crate::spectral::SpectralModel;

use super::bounds::{apriori_bound, check_solution_bound, ln_add, p_from_parts};
use super::constants::{d_step, n_tilde_for, BoundConstants, ConstantInputs};

/// A seeded initial state with coefficients `scale · U(−1,1) / k`.
pub fn initial_state<T: Real>(n_modes: usize, scale: T, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1417);
    (1..=n_modes).map(|k| scale * T::lit(rng.random_range(-1.0..1.0)) / T::from_count(k)).collect()
}

/// How training and validation samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec<T: Real> {
    pub noise: NoiseSpec,
    pub units: usize,
    pub substeps: usize,
    pub y0_scale: T,
}

impl<T: Real> SampleSpec<T> {
    pub fn run(&self, model: &SpectralModel<T>, seed: u64) -> Result<(GridRoughPath<T>, ControlledPath<T>)> {
        let rp = self.noise.sample(T::zero(), self.units, seed)?;
        let y0 = initial_state(model.n_modes(), self.y0_scale, seed);
        let path = solve_mild(model, &y0, &rp, 0, rp.n_cells(), self.substeps)?;
        Ok((rp, path))
    }
}

/// What a unit window contributes to the fit of `M`, `M̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolWindow<T: Real> {
    pub n: usize,
    pub hx: T,
    pub hxx: T,
    pub len: T,
    pub lhs: T,
    pub y_s: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData<T: Real> {
    pub windows: Vec<SolWindow<T>>,
    /// `‖∫S G(y) dX‖_α / (C_G ρ²(1 + ‖y,y′‖_𝒟))` per window with `C_G ρ > 0`.
    pub ci_ratios: Vec<T>,
}

fn window_data<T: Real>(
    model: &SpectralModel<T>,
    k0: &ConstantInputs<T>,
    c_g: T,
    rp: &GridRoughPath<T>,
    path: &ControlledPath<T>,
    spu: usize,
) -> Result<(Vec<SolWindow<T>>, Vec<T>)> {
    let gp = g_path(model, path);
    let mut wins = Vec::new();
    let mut ratios = Vec::new();
    for l in 0..rp.n_cells() / spu {
        let (a, b) = (l * spu, (l + 1) * spu);
        let h = rp.holder_report_idx(a, b);
        let norm = controlled_norm(model, path, rp, a, b)?.total;
        wins.push(SolWindow {
            n: count_idx(rp, k0.eta, k0.chi, a, b)?,
            hx: h.seminorm_x,
            hxx: h.seminorm_xx,
            len: rp.time(b) - rp.time(a),
            lhs: norm,
            y_s: model.norm(path.at(a), model.alpha()),
        });
        if c_g > T::zero() && h.rho > T::zero() {
            let conv = rough_convolution(model.mu(), &gp.y[a..b], &gp.y_prime[a..b], rp, a, b, model.config().sigma_g)?;
            let r = model.norm(&conv, model.alpha()) / (c_g * h.rho * h.rho * (T::one() + norm));
            ratios.push(r);
        }
    }
    Ok((wins, ratios))
}

/// Solves every training sample and extracts its unit windows.
pub fn collect_training<T: Real>(
    model: &SpectralModel<T>,
    k0: &ConstantInputs<T>,
    spec: &SampleSpec<T>,
    seeds: &[u64],
) -> Result<TrainingData<T>> {
    let c_g = model.c_g_bound(k0.gamma)?;
    let per: Vec<(Vec<SolWindow<T>>, Vec<T>)> = seeds
        .par_iter()
        .map(|&s| {
            let (rp, path) = spec.run(model, s)?;
            window_data(model, k0, c_g, &rp, &path, spec.noise.steps_per_unit)
        })
        .collect::<Result<_>>()?;
    let mut data = TrainingData { windows: Vec::new(), ci_ratios: Vec::new() };
    for (w, r) in per {
        data.windows.extend(w);
        data.ci_ratios.extend(r);
    }
    Ok(data)
}

fn fits<T: Real>(w: &[SolWindow<T>], m_tilde: T, ln_m: T, d: T) -> bool {
    let m = ln_m.exp();
    w.iter().all(|w| {
        let p = p_from_parts(m_tilde, m, w.n, w.hx, w.hxx, n_tilde_for(w.len, d));
        w.lhs <= T::zero() || w.lhs.ln() <= ln_add(w.y_s.ln() + p.ln_p1, p.ln_p2)
    })
}

/// Smallest `M` (to bisection precision) for which every window satisfies
/// the solution bound with the given `M̃`.
pub fn minimal_m<T: Real>(windows: &[SolWindow<T>], m_tilde: T, sigma_f: T, gamma: T) -> Result<T> {
    let d = d_step(m_tilde, sigma_f, gamma);
    let mut hi = T::zero();
    while !fits(windows, m_tilde, hi, d) {
        hi += T::lit(4.0);
        if hi > T::lit(200.0) {
            return Err(Error::NonConvergence(format!("no M fits the training windows at m_tilde = {m_tilde}")));
        }
    }
    let mut lo = T::lit(-60.0);
    if fits(windows, m_tilde, lo, d) {
        return Ok(lo.exp());
    }
    for _ in 0..100 {
        let mid = (lo + hi) / T::lit(2.0);
        if fits(windows, m_tilde, mid, d) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCandidate<T: Real> {
    pub m_tilde: T,
    pub m_big: T,
    pub ln_c: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T: Real> {
    pub constants: BoundConstants<T>,
    pub candidates: Vec<CalibrationCandidate<T>>,
    pub windows: usize,
}

/// `C_I` is the largest training ratio times `margin`; then for each
/// admissible `M̃` the minimal `M` times `margin`; the pair with the
/// smallest `c` wins.
pub fn calibrate<T: Real>(
    model: &SpectralModel<T>,
    base: &ConstantInputs<T>,
    data: &TrainingData<T>,
    m_tilde_candidates: &[T],
    margin: T,
) -> Result<Calibration<T>> {
    if data.windows.is_empty() {
        return invalid("no training windows");
    }
    let worst = data.ci_ratios.iter().copied().fold(T::zero(), T::max);
    let c_i = if worst > T::zero() { worst * margin } else { base.c_i };
    let cfg = model.config();
    let mut best: Option<BoundConstants<T>> = None;
    let mut candidates = Vec::new();
    for &mt in m_tilde_candidates {
        if !(mt > T::zero()) || mt.exp() * base.chi.powf(base.gamma - base.eta) > T::lit(0.5) {
            continue;
        }
        let m = minimal_m(&data.windows, mt, cfg.sigma_f, base.gamma)? * margin;
        let inp = ConstantInputs { m_tilde: mt, m_big: m, c_i, calibrated: true, ..*base };
        let k = BoundConstants::derive(model, &inp)?;
        candidates.push(CalibrationCandidate { m_tilde: mt, m_big: m, ln_c: k.ln_c_const });
        if best.as_ref().is_none_or(|b| k.ln_c_const < b.ln_c_const) {
            best = Some(k);
        }
    }
    let constants = best.ok_or_else(|| Error::Config("no admissible m_tilde candidate".into()))?;
    Ok(Calibration { constants, candidates, windows: data.windows.len() })
}

/// Violation counts of the frozen constants on fresh samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation<T: Real> {
    pub samples: usize,
    pub sol_checks: usize,
    pub sol_violations: usize,
    pub apriori_checks: usize,
    pub apriori_violations: usize,
    /// Largest `lhs/rhs` seen, per check kind.
    pub worst_sol: T,
    pub worst_apriori: T,
}

/// Checks the solution bound on every unit window and the a-priori bound
/// at each time of `apriori_times` (in units from the start).
pub fn validate<T: Real>(
    model: &SpectralModel<T>,
    k: &BoundConstants<T>,
    spec: &SampleSpec<T>,
    seeds: &[u64],
    apriori_times: &[T],
) -> Result<Validation<T>> {
    let spu = spec.noise.steps_per_unit;
    let per: Vec<Validation<T>> = seeds
        .par_iter()
        .map(|&s| {
            let (rp, path) = spec.run(model, s)?;
            let mut v = Validation {
                samples: 1,
                sol_checks: 0,
                sol_violations: 0,
                apriori_checks: 0,
                apriori_violations: 0,
                worst_sol: T::zero(),
                worst_apriori: T::zero(),
            };
            for l in 0..rp.n_cells() / spu {
                let c = check_solution_bound(model, &path, &rp, k, l * spu, (l + 1) * spu)?;
                v.sol_checks += 1;
                v.sol_violations += usize::from(!c.pass);
                v.worst_sol = v.worst_sol.max((c.lhs.ln() - c.ln_rhs).exp());
            }
            for &t in apriori_times {
                let idx = rp.index_of(t)?;
                let c = apriori_bound(model, &path, &rp, k, idx)?;
                v.apriori_checks += 1;
                v.apriori_violations += usize::from(!c.pass);
                v.worst_apriori = v.worst_apriori.max(c.lhs / c.rhs);
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(
        Validation {
            samples: 0,
            sol_checks: 0,
            sol_violations: 0,
            apriori_checks: 0,
            apriori_violations: 0,
            worst_sol: T::zero(),
            worst_apriori: T::zero(),
        },
        |a, b| Validation {
            samples: a.samples + b.samples,
            sol_checks: a.sol_checks + b.sol_checks,
            sol_violations: a.sol_violations + b.sol_violations,
            apriori_checks: a.apriori_checks + b.apriori_checks,
            apriori_violations: a.apriori_violations + b.apriori_violations,
            worst_sol: a.worst_sol.max(b.worst_sol),
            worst_apriori: a.worst_apriori.max(b.worst_apriori),
        },
    ))
}
