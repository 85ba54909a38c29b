//! Rough convolution, the exponential rough Euler scheme for mild solutions,
//! and controlled-path norms.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::roughpath::GridRoughPath;
use crate::spectral::SpectralModel;

/// A controlled path sampled on consecutive grid points of a rough path,
/// starting at grid index `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath<T: Real> {
    pub start: usize,
    pub t0: T,
    pub dt: T,
    pub gamma: T,
    /// Space index of `y`; `y′` lives in `base − γ`.
    pub base: T,
    pub y: Vec<Vec<T>>,
    pub y_prime: Vec<Vec<T>>,
}

impl<T: Real> ControlledPath<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn end(&self) -> usize {
        self.start + self.y.len() - 1
    }

    pub fn time(&self, i: usize) -> T {
        self.t0 + T::from_count(i) * self.dt
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// State at grid index `idx` of the driving rough path.
    pub fn at(&self, idx: usize) -> &[T] {
        &self.y[idx - self.start]
    }

    pub fn last(&self) -> &[T] {
        self.y.last().expect("nonempty path")
    }

    /// `R_{i,j} = y_j − y_i − y′_i X_{i,j}` for rough-path grid indices.
    pub fn remainder(&self, rp: &GridRoughPath<T>, i: usize, j: usize) -> Vec<T> {
        let xij = rp.increment(i, j);
        let (yi, yj, ypi) = (self.at(i), self.at(j), &self.y_prime[i - self.start]);
        (0..yi.len()).map(|k| yj[k] - yi[k] - ypi[k] * xij).collect()
    }
}

/// The five terms of the controlled-path norm on an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlledNorm<T: Real> {
    pub sup_y: T,
    pub sup_yp: T,
    pub hol_yp: T,
    pub rem_g: T,
    pub rem_2g: T,
    pub total: T,
}

fn weighted_norm<T: Real>(x: impl Iterator<Item = T>, w: &[T]) -> T {
    x.zip(w).map(|(v, w)| (v * *w) * (v * *w)).sum::<T>().sqrt()
}

/// Grid suprema of `‖y‖_{∞,b}`, `‖y′‖_{∞,b−γ}`, `[y′]_{γ,b−2γ}`,
/// `[R]_{γ,b−γ}` and `[R]_{2γ,b−2γ}` over grid indices `a..=b_idx`, where
/// `b` is the path's base index.
pub fn controlled_norm<T: Real>(
    model: &SpectralModel<T>,
    path: &ControlledPath<T>,
    rp: &GridRoughPath<T>,
    a: usize,
    b_idx: usize,
) -> Result<ControlledNorm<T>> {
    if a > b_idx || a < path.start || b_idx > path.end() {
        return invalid(format!("interval [{a}, {b_idx}] not covered by path [{}, {}]", path.start, path.end()));
    }
    let g = path.gamma;
    let pw = |s: T| model.mu().iter().map(|m| m.powf(s)).collect::<Vec<T>>();
    let w0 = pw(path.base);
    let w1 = pw(path.base - g);
    let w2 = pw(path.base - g - g);
    let x = rp.x();
    let mut out = ControlledNorm {
        sup_y: T::zero(),
        sup_yp: T::zero(),
        hol_yp: T::zero(),
        rem_g: T::zero(),
        rem_2g: T::zero(),
        total: T::zero(),
    };
    let hg: Vec<T> = (0..=b_idx - a).map(|m| (T::from_count(m) * rp.dt()).powf(g)).collect();
    let mut r = vec![T::zero(); model.n_modes()];
    for i in a..=b_idx {
        let yi = path.at(i);
        let ypi = &path.y_prime[i - path.start];
        out.sup_y = out.sup_y.max(weighted_norm(yi.iter().copied(), &w0));
        out.sup_yp = out.sup_yp.max(weighted_norm(ypi.iter().copied(), &w1));
        for j in i + 1..=b_idx {
            let yj = path.at(j);
            let ypj = &path.y_prime[j - path.start];
            let xij = x[j] - x[i];
            let h = hg[j - i];
            let dyp = weighted_norm(ypj.iter().zip(ypi).map(|(p, q)| *p - *q), &w2);
            out.hol_yp = out.hol_yp.max(dyp / h);
            for k in 0..r.len() {
                r[k] = yj[k] - yi[k] - ypi[k] * xij;
            }
            out.rem_g = out.rem_g.max(weighted_norm(r.iter().copied(), &w1) / h);
            out.rem_2g = out.rem_2g.max(weighted_norm(r.iter().copied(), &w2) / (h * h));
        }
    }
    out.total = out.sup_y + out.sup_yp + out.hol_yp + out.rem_g + out.rem_2g;
    Ok(out)
}

/// Time-interval form of [`controlled_norm`].
pub fn controlled_norm_on<T: Real>(
    model: &SpectralModel<T>,
    path: &ControlledPath<T>,
    rp: &GridRoughPath<T>,
    s: T,
    t: T,
) -> Result<ControlledNorm<T>> {
    controlled_norm(model, path, rp, rp.index_of(s)?, rp.index_of(t)?)
}

/// The controlled path `(G(y), DG(y)∘G(y))` in `E_{base−σ_G}`.
pub fn g_path<T: Real>(model: &SpectralModel<T>, path: &ControlledPath<T>) -> ControlledPath<T> {
    ControlledPath {
        y: path.y.iter().map(|y| model.apply_g(y)).collect(),
        y_prime: path.y.iter().map(|y| model.dg_g(y)).collect(),
        base: path.base - model.config().sigma_g,
        ..path.clone()
    }
}

/// Compensated Riemann sum `Σ_{[u,v]} e^{−r(t_b−u)}(z_u X_{u,v} + z′_u 𝕏_{u,v})`
/// over the cells between grid indices `a` and `b`, mode by mode with decay
/// rates `rates`. `z[k]` and `zp[k]` belong to grid index `a + k`.
pub fn rough_convolution<T: Real>(
    rates: &[T],
    z: &[Vec<T>],
    zp: &[Vec<T>],
    rp: &GridRoughPath<T>,
    a: usize,
    b: usize,
    beta_out: T,
) -> Result<Vec<T>> {
    let g = rp.gamma();
    if !(beta_out < T::lit(3.0) * g) {
        return invalid(format!("beta_out = {beta_out} must be below 3 gamma"));
    }
    if a > b || b > rp.n_cells() || z.len() < b - a || zp.len() < b - a {
        return invalid("rough_convolution: integrand does not cover the interval");
    }
    let mut acc = vec![T::zero(); rates.len()];
    let (x, xx) = (rp.x(), rp.xx());
    let tb = rp.time(b);
    for u in a..b {
        let dx = x[u + 1] - x[u];
        let (zu, zpu) = (&z[u - a], &zp[u - a]);
        let lag = tb - rp.time(u);
        for k in 0..rates.len() {
            acc[k] += (-rates[k] * lag).exp() * (zu[k] * dx + zpu[k] * xx[u]);
        }
    }
    Ok(acc)
}

/// Exponential rough Euler scheme for the mild equation on grid indices
/// `a..=b`. Each cell is split into `substeps` equal pieces, the increment
/// and the area being shared so that Chen's relation reproduces the cell.
pub fn solve_mild<T: Real>(
    model: &SpectralModel<T>,
    y0: &[T],
    rp: &GridRoughPath<T>,
    a: usize,
    b: usize,
    substeps: usize,
) -> Result<ControlledPath<T>> {
    if y0.len() != model.n_modes() {
        return invalid(format!("initial state has {} modes, model has {}", y0.len(), model.n_modes()));
    }
    if a > b || b > rp.n_cells() {
        return invalid(format!("solve interval [{a}, {b}] outside the rough path"));
    }
    if substeps == 0 {
        return invalid("substeps must be at least 1");
    }
    let gamma = rp.gamma();
    model.config().validate_for_gamma(gamma)?;
    let m = T::from_count(substeps);
    let h = rp.dt() / m;
    let decay: Vec<T> = model.mu().iter().map(|mu| (-*mu * h).exp()).collect();
    let (x, xx) = (rp.x(), rp.xx());
    let mut y = y0.to_vec();
    let mut ys = Vec::with_capacity(b - a + 1);
    ys.push(y.clone());
    for cell in a..b {
        let dx = x[cell + 1] - x[cell];
        let sdx = dx / m;
        let sarea = (xx[cell] - dx * dx * (m - T::one()) / (m + m)) / m;
        for _ in 0..substeps {
            let f = model.apply_f(&y);
            let gy = model.apply_g(&y);
            let dgg = model.dg_g(&y);
            for k in 0..y.len() {
                y[k] = decay[k] * (y[k] + f[k] * h + gy[k] * sdx + dgg[k] * sarea);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: rp.time(cell + 1).as_f64(),
                msg: "non-finite coefficient".into(),
            });
        }
        ys.push(y.clone());
    }
    let yp = ys.iter().map(|v| model.apply_g(v)).collect();
    Ok(ControlledPath { start: a, t0: rp.time(a), dt: rp.dt(), gamma, base: model.alpha(), y: ys, y_prime: yp })
}

/// Time-interval form of [`solve_mild`].
pub fn solve_mild_on<T: Real>(
    model: &SpectralModel<T>,
    y0: &[T],
    rp: &GridRoughPath<T>,
    s: T,
    t: T,
    substeps: usize,
) -> Result<ControlledPath<T>> {
    solve_mild(model, y0, rp, rp.index_of(s)?, rp.index_of(t)?, substeps)
}

/// Writes `t,norm_alpha,coeff_1..coeff_m` with `m = min(8, n_modes)`.
pub fn write_trajectory_csv<T: Real, W: Write>(mut w: W, model: &SpectralModel<T>, path: &ControlledPath<T>) -> Result<()> {
    let m = model.n_modes().min(8);
    let cols: Vec<String> = (1..=m).map(|k| format!("coeff_{k}")).collect();
    writeln!(w, "t,norm_alpha,{}", cols.join(","))?;
    for (i, y) in path.y.iter().enumerate() {
        let coeffs: Vec<String> = y[..m].iter().map(|c| c.to_string()).collect();
        writeln!(w, "{},{},{}", path.time(i), model.norm(y, path.base), coeffs.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ls_slope;
    use crate::roughpath::{lift_piecewise_linear, sample_fbm};
    use crate::spectral::{GKind, ModelConfig};
    use proptest::prelude::*;

    fn model(n: usize, lambda_a: f64, c_f: f64, c_g: f64, kind: GKind) -> SpectralModel<f64> {
        let mut c = ModelConfig::new(n, lambda_a, 0.9);
        c.c_f = c_f;
        c.c_g = c_g;
        c.sigma_g = if kind == GKind::Linear { 0.05 } else { 0.1 };
        c.sigma_f = 0.2;
        c.g_kind = kind;
        c.g_decay = 2.0 * (c.alpha - c.sigma_g) + 1.5;
        SpectralModel::new(c).unwrap()
    }

    fn fbm(h: f64, n: usize, seed: u64) -> GridRoughPath<f64> {
        let s = sample_fbm(h, n, seed).unwrap();
        lift_piecewise_linear(&s, 0.0, 1.0 / n as f64, 0.4).unwrap()
    }

    fn y0(n: usize) -> Vec<f64> {
        (1..=n).map(|k| 1.0 / (k * k) as f64).collect()
    }

    #[test]
    fn zero_nonlinearities_give_semigroup_decay() {
        let m = model(8, 2.0, 0.0, 0.0, GKind::Linear);
        let rp = fbm(0.45, 64, 1);
        let p = solve_mild(&m, &y0(8), &rp, 0, 64, 3).unwrap();
        for (i, y) in p.y.iter().enumerate() {
            let exact = m.semigroup(rp.time(i), &y0(8)).unwrap();
            for (a, b) in y.iter().zip(&exact) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn cocycle_is_exact_on_the_grid() {
        let m = model(8, 1.0, 0.5, 0.3, GKind::Integral);
        let rp = fbm(0.45, 128, 2);
        let full = solve_mild(&m, &y0(8), &rp, 0, 128, 2).unwrap();
        let first = solve_mild(&m, &y0(8), &rp, 0, 48, 2).unwrap();
        // Noise on [s, 1] re-zeroed and moved to start at 0.
        let s = rp.time(48);
        let shifted = rp.window(s, 1.0).unwrap().shift(s).unwrap();
        assert_eq!(shifted.t0(), 0.0);
        let second = solve_mild(&m, first.last(), &shifted, 0, 80, 2).unwrap();
        assert_eq!(full.last(), second.last());
        assert_eq!(&full.y[48..], &second.y[..]);
    }

    #[test]
    fn scalar_linear_equation_converges_to_closed_form() {
        // One mode, sigma_g = 0: G(y) = c y and μ = π² + λ_A.
        let mut c = ModelConfig::new(1, 0.5, 0.5);
        c.c_g = 0.8;
        let m = SpectralModel::new(c).unwrap();
        let mu = m.mu()[0];
        let n_fine = 4096;
        let levels = [64usize, 128, 256, 512, 1024];
        let mut err = vec![0.0; levels.len()];
        for seed in 0..16 {
            let s = sample_fbm(0.5, n_fine, seed).unwrap();
            let fine = lift_piecewise_linear(&s, 0.0, 1.0 / n_fine as f64, 0.4).unwrap();
            let exact = (-mu + 0.8 * s[n_fine]).exp();
            for (e, n) in err.iter_mut().zip(levels) {
                let rp = fine.coarsen(n_fine / n).unwrap();
                let p = solve_mild(&m, &[1.0], &rp, 0, n, 1).unwrap();
                *e += (p.last()[0] - exact).abs() / exact;
            }
        }
        let lx: Vec<f64> = levels.iter().map(|n| (1.0 / *n as f64).ln()).collect();
        let ly: Vec<f64> = err.iter().map(|e| e.ln()).collect();
        let slope = ls_slope(&lx, &ly);
        assert!(slope >= 1.5 * 0.4, "observed order {slope}");
    }

    #[test]
    fn constant_integrand_on_linear_path() {
        // z_u = c + c' X_{s,u}, z' = c', X_t = t, single flat mode.
        let n = 37;
        let samples: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let rp = lift_piecewise_linear(&samples, 0.0, 1.0 / n as f64, 0.5).unwrap();
        let (c, cp) = (1.7, -0.6);
        let (a, b) = (5, 30);
        let z: Vec<Vec<f64>> = (a..=b).map(|u| vec![c + cp * rp.increment(a, u)]).collect();
        let zp: Vec<Vec<f64>> = (a..=b).map(|_| vec![cp]).collect();
        let v = rough_convolution(&[0.0], &z, &zp, &rp, a, b, 0.5).unwrap();
        let t = rp.time(b) - rp.time(a);
        assert!((v[0] - (c * t + cp * t * t / 2.0)).abs() < 1e-14);
        let zero = rough_convolution(&[0.0], &vec![vec![0.0]; 26], &vec![vec![0.0]; 26], &rp, a, b, 0.5).unwrap();
        assert_eq!(zero[0], 0.0);
        assert!(rough_convolution(&[0.0], &z, &zp, &rp, a, b, 1.5).is_err());
    }

    #[test]
    fn convolution_self_converges_under_refinement() {
        // Integrand f(X_u) e_k with f = cos; derivative −sin(X_u) e_k.
        let n_fine = 4096;
        let rates = [1.0, 4.0, 9.0];
        let gamma = 0.4;
        let beta_out = 2.0 * gamma;
        let levels = [32usize, 64, 128, 256, 512];
        let mut diffs = vec![0.0; levels.len() - 1];
        for seed in 0..8 {
            let s = sample_fbm(0.5, n_fine, 100 + seed).unwrap();
            let fine = lift_piecewise_linear(&s, 0.0, 1.0 / n_fine as f64, gamma).unwrap();
            let vals: Vec<Vec<f64>> = levels
                .iter()
                .map(|&n| {
                    let rp = fine.coarsen(n_fine / n).unwrap();
                    let z: Vec<Vec<f64>> = rp.x().iter().map(|x| vec![x.cos(); 3]).collect();
                    let zp: Vec<Vec<f64>> = rp.x().iter().map(|x| vec![-x.sin(); 3]).collect();
                    rough_convolution(&rates, &z, &zp, &rp, 0, n, beta_out).unwrap()
                })
                .collect();
            for (d, w) in diffs.iter_mut().zip(vals.windows(2)) {
                *d += w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            }
        }
        let lx: Vec<f64> = levels[..4].iter().map(|n| (1.0 / *n as f64).ln()).collect();
        let ly: Vec<f64> = diffs.iter().map(|d| d.ln()).collect();
        let slope = ls_slope(&lx, &ly);
        assert!(slope >= 0.8 * (3.0 * gamma - beta_out), "slope {slope}");
    }

    #[test]
    fn substep_refinement_self_converges() {
        let m = model(8, 1.0, 0.5, 0.4, GKind::Integral);
        let rp = fbm(0.45, 64, 5);
        let run = |k: usize| solve_mild(&m, &y0(8), &rp, 0, 64, k).unwrap().last().to_vec();
        let (a, b, c) = (run(1), run(4), run(16));
        let d1 = m.dist(&a, &c, 0.9);
        let d2 = m.dist(&b, &c, 0.9);
        assert!(d2 < d1, "{d1} {d2}");
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        let mut c = ModelConfig::new(1, 0.1, 0.5);
        c.c_g = 1e60;
        let m = SpectralModel::new(c).unwrap();
        let rp = fbm(0.45, 64, 1);
        match solve_mild(&m, &[1.0], &rp, 0, 64, 1) {
            Err(Error::BlowUp { time, .. }) => assert!(time > 0.0 && time <= 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn controlled_norm_of_constant_path() {
        let m = model(4, 1.0, 0.0, 0.0, GKind::Linear);
        let rp = fbm(0.45, 32, 1);
        let y = vec![vec![1.0, 0.5, 0.0, 0.0]; 33];
        let p = ControlledPath { start: 0, t0: 0.0, dt: rp.dt(), gamma: 0.4, base: 0.9, y, y_prime: vec![vec![0.0; 4]; 33] };
        let n = controlled_norm(&m, &p, &rp, 0, 32).unwrap();
        assert_eq!((n.hol_yp, n.rem_g, n.rem_2g, n.sup_yp), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(n.total, n.sup_y);
        assert!((n.sup_y - m.norm(&[1.0, 0.5, 0.0, 0.0], 0.9)).abs() < 1e-12);
    }

    #[test]
    fn composition_estimate_with_calibrated_constant() {
        let m = model(8, 1.0, 0.3, 0.3, GKind::Integral);
        let ratio = |seed: u64| {
            let rp = fbm(0.45, 64, seed);
            let p = solve_mild(&m, &y0(8), &rp, 0, 64, 1).unwrap();
            let lhs = controlled_norm(&m, &g_path(&m, &p), &rp, 0, 64).unwrap().total;
            let rho = rp.rho_idx(0, 64);
            let rhs = rho * (1.0 + controlled_norm(&m, &p, &rp, 0, 64).unwrap().total);
            lhs / rhs
        };
        let k = (0..30).map(ratio).fold(0.0, f64::max) * 1.1;
        for seed in 1000..1030 {
            assert!(ratio(seed) <= k);
        }
    }

    #[test]
    fn trajectory_csv_header() {
        let m = model(12, 1.0, 0.0, 0.0, GKind::Linear);
        let rp = fbm(0.45, 8, 1);
        let p = solve_mild(&m, &y0(12), &rp, 0, 8, 1).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &m, &p).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let first = s.lines().next().unwrap();
        assert_eq!(first, "t,norm_alpha,coeff_1,coeff_2,coeff_3,coeff_4,coeff_5,coeff_6,coeff_7,coeff_8");
        assert_eq!(s.lines().count(), 10);
    }

    proptest! {
        #[test]
        fn norm_monotone_under_inclusion(seed in 0u64..200, a in 0usize..16, da in 0usize..8, b in 16usize..32, db in 0usize..8) {
            let m = model(6, 1.0, 0.4, 0.3, GKind::Linear);
            let rp = fbm(0.45, 40, seed);
            let p = solve_mild(&m, &y0(6), &rp, 0, 40, 1).unwrap();
            let inner = controlled_norm(&m, &p, &rp, a + da.min(b - a), b).unwrap();
            let outer = controlled_norm(&m, &p, &rp, a, b + db).unwrap();
            prop_assert!(inner.total <= outer.total);
            prop_assert_eq!(outer.total, outer.sup_y + outer.sup_yp + outer.hol_yp + outer.rem_g + outer.rem_2g);
        }
    }
}
