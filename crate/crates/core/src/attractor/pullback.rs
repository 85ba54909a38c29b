//! Empirical pullback attractor: a finite cloud of initial states evolved as
//! `φ(t, θ_{−t}ω, ·)` over the noise window `[−t, 0]`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::roughpath::GridRoughPath;
use crate::solver::solve_mild;
use crate::spectral::SpectralModel;

use super::absorb::steps_per_unit;

/// `sup_{x∈a} inf_{y∈b} ‖x − y‖_s`; zero for empty `a`, infinite for empty `b`.
pub fn hausdorff_semidistance<T: Real>(model: &SpectralModel<T>, a: &[Vec<T>], b: &[Vec<T>], s: T) -> T {
    a.iter()
        .map(|x| b.iter().map(|y| model.dist(x, y, s)).fold(T::infinity(), T::min))
        .fold(T::zero(), T::max)
}

pub fn diameter<T: Real>(model: &SpectralModel<T>, a: &[Vec<T>], s: T) -> T {
    let mut d = T::zero();
    for (i, x) in a.iter().enumerate() {
        for y in &a[i + 1..] {
            d = d.max(model.dist(x, y, s));
        }
    }
    d
}

/// Evolves every state of `cloud` from grid index `a` to `b`. Order is
/// preserved; failures stay in place.
pub fn evolve_cloud<T: Real>(
    model: &SpectralModel<T>,
    rp: &GridRoughPath<T>,
    a: usize,
    b: usize,
    cloud: &[Vec<T>],
    substeps: usize,
) -> Vec<Result<Vec<T>>> {
    cloud
        .par_iter()
        .map(|y0| solve_mild(model, y0, rp, a, b, substeps).map(|p| p.last().to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackRow<T: Real> {
    pub seed: u64,
    pub t: usize,
    pub diameter: T,
    /// Semidistance to the cloud of the previous `t` (the initial cloud for the first).
    pub semidistance: T,
    /// `R(ω)`, or NaN when no radius was supplied.
    pub radius: T,
    pub max_norm: T,
    /// Whether every surviving state lies in the ball of radius `R(ω) + δ̄`.
    pub accepted: bool,
    pub blowups: usize,
}

#[derive(Debug, Clone)]
pub struct PullbackRun<T: Real> {
    pub rows: Vec<PullbackRow<T>>,
    /// Evolved clouds, one per entry of `t_list`.
    pub clouds: Vec<Vec<Vec<T>>>,
    pub diagnostics: Vec<String>,
}

/// The pullback table for one noise realization with time zero at grid
/// index `origin`. `ball` is `(R(ω), δ̄)`.
#[allow(clippy::too_many_arguments)]
pub fn pullback_estimate<T: Real>(
    model: &SpectralModel<T>,
    rp: &GridRoughPath<T>,
    origin: usize,
    t_list: &[usize],
    cloud: &[Vec<T>],
    substeps: usize,
    ball: Option<(T, T)>,
    seed: u64,
) -> Result<PullbackRun<T>> {
    if cloud.is_empty() || t_list.is_empty() {
        return invalid("cloud and t_list must be nonempty");
    }
    if t_list.windows(2).any(|w| w[0] >= w[1]) || t_list[0] == 0 {
        return invalid("t_list must be positive and strictly increasing");
    }
    let spu = steps_per_unit(rp)?;
    let t_max = *t_list.last().expect("nonempty");
    if origin < t_max * spu || origin > rp.n_cells() {
        return invalid(format!("noise does not cover [-{t_max}, 0]"));
    }
    let alpha = model.alpha();
    let mut rows = Vec::with_capacity(t_list.len());
    let mut clouds = Vec::with_capacity(t_list.len());
    let mut diagnostics = Vec::new();
    let mut prev: Vec<Vec<T>> = cloud.to_vec();
    for &t in t_list {
        let results = evolve_cloud(model, rp, origin - t * spu, origin, cloud, substeps);
        let mut cur = Vec::with_capacity(cloud.len());
        let mut blowups = 0;
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(y) => cur.push(y),
                Err(e @ Error::BlowUp { .. }) => {
                    blowups += 1;
                    diagnostics.push(format!("seed {seed} t {t} state {i}: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
        let max_norm = cur.iter().map(|y| model.norm(y, alpha)).fold(T::zero(), T::max);
        let (radius, accepted) = match ball {
            Some((r, d)) => (r, blowups == 0 && max_norm <= r + d),
            None => (T::nan(), false),
        };
        rows.push(PullbackRow {
            seed,
            t,
            diameter: diameter(model, &cur, alpha),
            semidistance: hausdorff_semidistance(model, &cur, &prev, alpha),
            radius,
            max_norm,
            accepted,
            blowups,
        });
        prev = cur.clone();
        clouds.push(cur);
    }
    Ok(PullbackRun { rows, clouds, diagnostics })
}

/// `−` the least-squares slope of `ln diameter` against `t`.
pub fn decay_rate<T: Real>(rows: &[PullbackRow<T>]) -> Option<T> {
    let pts: Vec<(T, T)> = rows
        .iter()
        .filter(|r| r.diameter > T::zero())
        .map(|r| (T::from_count(r.t), r.diameter.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_count(pts.len());
    let xm = pts.iter().map(|p| p.0).sum::<T>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<T>();
    let sxx = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum::<T>();
    Some(-sxy / sxx)
}

pub fn write_report_csv<T: Real, W: Write>(mut w: W, rows: &[PullbackRow<T>]) -> Result<()> {
    writeln!(w, "seed,t,diameter,semidistance,radius,accepted")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.seed, r.t, r.diameter, r.semidistance, r.radius, r.accepted)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roughpath::NoiseSpec;
    use crate::spectral::{GKind, ModelConfig};

    fn model(c_g: f64, lambda_a: f64) -> SpectralModel<f64> {
        let mut cfg = ModelConfig::new(6, lambda_a, 0.5);
        cfg.c_g = c_g;
        cfg.g_kind = GKind::Linear;
        SpectralModel::new(cfg).unwrap()
    }

    fn cloud() -> Vec<Vec<f64>> {
        (0..5)
            .map(|i| (0..6).map(|k| ((i * 7 + k * 3) % 5) as f64 * 0.2 - 0.4).collect())
            .collect()
    }

    #[test]
    fn semidistance_basics() {
        let m = model(0.0, 1.0);
        let a = vec![vec![0.0; 6]];
        let b = cloud();
        assert_eq!(hausdorff_semidistance(&m, &a, &a, 0.5), 0.0);
        let d_ab = hausdorff_semidistance(&m, &a, &b, 0.5);
        let d_ba = hausdorff_semidistance(&m, &b, &a, 0.5);
        assert!(d_ab <= d_ba);
        assert_eq!(d_ba, b.iter().map(|y| m.norm(y, 0.5)).fold(0.0, f64::max));
        assert!(diameter(&m, &b, 0.5) <= 2.0 * d_ba + 1e-12);
    }

    #[test]
    fn pure_semigroup_contracts_at_the_exact_rate() {
        let m = model(0.0, 2.0);
        let spu = 16;
        let rp = GridRoughPath::zero(-16.0, 1.0 / spu as f64, 16 * spu, 0.45).unwrap();
        let c = cloud();
        let run = pullback_estimate(&m, &rp, 16 * spu, &[2, 4, 8, 16], &c, 1, Some((1.0, 0.1)), 0).unwrap();
        let r0 = c.iter().map(|y| m.norm(y, 0.5)).fold(0.0, f64::max);
        let zero = vec![vec![0.0; 6]];
        for (row, cl) in run.rows.iter().zip(&run.clouds) {
            let d0 = hausdorff_semidistance(&m, cl, &zero, 0.5);
            assert!(d0 <= (-m.mu()[0] * row.t as f64).exp() * r0 * (1.0 + 1e-12));
        }
        for w in run.rows.windows(2) {
            assert!(w[1].semidistance < w[0].semidistance);
        }
        let d_init = diameter(&m, &c, 0.5);
        assert!(run.rows.last().unwrap().diameter < 0.01 * d_init);
        assert!(run.rows.iter().all(|r| r.accepted));
    }

    #[test]
    fn multiplicative_noise_depends_on_seed() {
        let m = model(0.3, 0.5);
        let spec = NoiseSpec { hurst: 0.5, gamma: 0.45, scale: 0.5, steps_per_unit: 16 };
        let c = cloud();
        let a = spec.sample(-8.0f64, 8, 1).unwrap();
        let b = spec.sample(-8.0f64, 8, 2).unwrap();
        let ra = pullback_estimate(&m, &a, 128, &[2, 8], &c, 2, None, 1).unwrap();
        let rb = pullback_estimate(&m, &b, 128, &[2, 8], &c, 2, None, 2).unwrap();
        assert_ne!(ra.clouds[1][0], rb.clouds[1][0]);
        let rate = decay_rate(&ra.rows).unwrap();
        assert!(rate > 0.0);
    }

    #[test]
    fn blow_up_is_a_per_state_diagnostic() {
        let mut cfg = ModelConfig::new(2, 0.1, 0.25);
        cfg.c_g = 80.0;
        cfg.sigma_g = 0.3;
        cfg.g_kind = GKind::Linear;
        let m = SpectralModel::new(cfg).unwrap();
        let spec = NoiseSpec { hurst: 0.5, gamma: 0.45, scale: 30.0, steps_per_unit: 4 };
        let rp = spec.sample(-40.0f64, 40, 5).unwrap();
        let c = vec![vec![1.0, 1.0], vec![0.0, 0.0]];
        let run = pullback_estimate(&m, &rp, 160, &[40], &c, 1, None, 5).unwrap();
        assert_eq!(run.rows[0].blowups, 1);
        assert_eq!(run.diagnostics.len(), 1);
        assert_eq!(run.clouds[0], vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn csv_schema() {
        let m = model(0.0, 2.0);
        let rp = GridRoughPath::zero(-2.0, 0.25, 8, 0.45).unwrap();
        let run = pullback_estimate(&m, &rp, 8, &[1, 2], &cloud(), 1, None, 3).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &run.rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("seed,t,diameter,semidistance,radius,accepted\n3,1,"));
        assert_eq!(s.lines().count(), 3);
    }
}
