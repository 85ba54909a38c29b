//! Scalar γ-Hölder rough paths on uniform grids.
//!
//! A [`GridRoughPath`] stores the first level at every grid point and the
//! second level only on consecutive cells. The second level between any two
//! grid points is rebuilt on demand from Chen's relation.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::real::Real;

pub use crate::fbm::{sample_fbm, sample_fbm_scaled, FbmSampler};

/// Which level of the rough path a seminorm refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRoughPath<T: Real> {
    t0: T,
    dt: T,
    x: Vec<T>,
    xx: Vec<T>,
    gamma: T,
}

/// Seminorms of a path on one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderReport<T: Real> {
    pub seminorm_x: T,
    pub seminorm_xx: T,
    pub rho: T,
    pub interval: (T, T),
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    let third = T::one() / T::lit(3.0);
    if !(gamma > third && gamma <= T::lit(0.5)) {
        return invalid(format!("gamma = {gamma} must lie in (1/3, 1/2]"));
    }
    Ok(())
}

/// Canonical lift of the piecewise-linear interpolant of `samples`.
///
/// The area of each cell is `(ΔX)²/2`, the exact iterated integral of a
/// straight segment. The first value is subtracted so that `X_{t0} = 0`.
pub fn lift_piecewise_linear<T: Real>(samples: &[T], t0: T, dt: T, gamma: T) -> Result<GridRoughPath<T>> {
    if samples.len() < 2 {
        return invalid("lift needs at least 2 samples");
    }
    let base = samples[0];
    let x: Vec<T> = samples.iter().map(|&v| v - base).collect();
    let half = T::lit(0.5);
    let xx = x.windows(2).map(|w| half * (w[1] - w[0]) * (w[1] - w[0])).collect();
    GridRoughPath::new(t0, dt, x, xx, gamma)
}

impl<T: Real> GridRoughPath<T> {
    /// Builds a path from raw levels. `x` is re-zeroed at its first entry.
    pub fn new(t0: T, dt: T, x: Vec<T>, xx: Vec<T>, gamma: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return invalid(format!("dt = {dt} must be positive"));
        }
        if x.len() < 2 {
            return invalid("a rough path needs at least one cell");
        }
        if xx.len() + 1 != x.len() {
            return invalid(format!("{} first-level values need {} cells, got {}", x.len(), x.len() - 1, xx.len()));
        }
        if x.iter().chain(xx.iter()).any(|v| !v.is_finite()) || !t0.is_finite() {
            return invalid("rough path values must be finite");
        }
        check_gamma(gamma)?;
        let base = x[0];
        let x = x.into_iter().map(|v| v - base).collect();
        Ok(Self { t0, dt, x, xx, gamma })
    }

    /// The path `t ↦ 0` on `n_cells` cells.
    pub fn zero(t0: T, dt: T, n_cells: usize, gamma: T) -> Result<Self> {
        Self::new(t0, dt, vec![T::zero(); n_cells + 1], vec![T::zero(); n_cells], gamma)
    }

    pub fn t0(&self) -> T {
        self.t0
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }
    pub fn x(&self) -> &[T] {
        &self.x
    }
    pub fn xx(&self) -> &[T] {
        &self.xx
    }
    pub fn n_cells(&self) -> usize {
        self.xx.len()
    }
    pub fn time(&self, i: usize) -> T {
        self.t0 + T::from_count(i) * self.dt
    }
    pub fn t_end(&self) -> T {
        self.time(self.n_cells())
    }

    /// Same path, different Hölder exponent.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma, ..self.clone() })
    }

    /// Grid index of time `t`, or an error if `t` is off-grid or outside.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let r = (t - self.t0) / self.dt;
        let k = r.round();
        if (r - k).abs() > T::lit(1e-6) || k < T::zero() || k > T::from_count(self.n_cells()) {
            return invalid(format!("time {t} is not a grid point of [{}, {}]", self.t0, self.t_end()));
        }
        Ok(k.to_usize().unwrap_or(0))
    }

    fn span(&self, s: T, t: T) -> Result<(usize, usize)> {
        let (i, j) = (self.index_of(s)?, self.index_of(t)?);
        if i > j {
            return invalid(format!("interval [{s}, {t}] is reversed"));
        }
        Ok((i, j))
    }

    /// `X_{t_i, t_j}`.
    #[inline]
    pub fn increment(&self, i: usize, j: usize) -> T {
        self.x[j] - self.x[i]
    }

    /// `𝕏_{t_i, t_j}` for `i ≤ j`: `½X_{t_i,t_j}²` plus the summed cell
    /// deviations `𝕏_{k,k+1} − ½X_{k,k+1}²`. Chen's relation summed over the
    /// cells gives the same value; this form avoids cancellation between cells.
    pub fn area(&self, i: usize, j: usize) -> T {
        let d = self.increment(i, j);
        let mut corr = T::zero();
        for k in i..j {
            corr += self.cell_defect(k);
        }
        T::lit(0.5) * d * d + corr
    }

    #[inline]
    fn cell_defect(&self, k: usize) -> T {
        let d = self.x[k + 1] - self.x[k];
        self.xx[k] - T::lit(0.5) * d * d
    }

    /// `𝕏_{t_i, t_j}` for `j = i..=end`, in one pass.
    pub fn areas_from(&self, i: usize, end: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(end - i + 1);
        let mut corr = T::zero();
        out.push(T::zero());
        for k in i..end {
            corr += self.cell_defect(k);
            let d = self.increment(i, k + 1);
            out.push(T::lit(0.5) * d * d + corr);
        }
        out
    }

    /// Grid Hölder seminorm on index range `[i, j]`.
    pub fn holder_idx(&self, level: Level, i: usize, j: usize) -> T {
        let g = match level {
            Level::First => self.gamma,
            Level::Second => self.gamma + self.gamma,
        };
        let pow: Vec<T> = (0..=j.saturating_sub(i)).map(|m| (T::from_count(m) * self.dt).powf(g)).collect();
        let mut best = T::zero();
        for a in i..j {
            match level {
                Level::First => {
                    for b in a + 1..=j {
                        let v = self.increment(a, b).abs() / pow[b - a];
                        if v > best {
                            best = v;
                        }
                    }
                }
                Level::Second => {
                    let areas = self.areas_from(a, j);
                    for b in a + 1..=j {
                        let v = areas[b - a].abs() / pow[b - a];
                        if v > best {
                            best = v;
                        }
                    }
                }
            }
        }
        best
    }

    /// Grid-restricted `[X]_{γ,[s,t]}` or `[𝕏]_{2γ,[s,t]}`.
    pub fn holder_seminorm(&self, level: Level, s: T, t: T) -> Result<T> {
        let (i, j) = self.span(s, t)?;
        Ok(self.holder_idx(level, i, j))
    }

    pub fn holder_report(&self, s: T, t: T) -> Result<HolderReport<T>> {
        let (i, j) = self.span(s, t)?;
        Ok(self.holder_report_idx(i, j))
    }

    pub fn holder_report_idx(&self, i: usize, j: usize) -> HolderReport<T> {
        let seminorm_x = self.holder_idx(Level::First, i, j);
        let seminorm_xx = self.holder_idx(Level::Second, i, j);
        HolderReport { seminorm_x, seminorm_xx, rho: seminorm_x + seminorm_xx, interval: (self.time(i), self.time(j)) }
    }

    /// `ρ_{γ,[t_i,t_j]}`.
    pub fn rho_idx(&self, i: usize, j: usize) -> T {
        self.holder_report_idx(i, j).rho
    }

    /// Re-indexes time so that the new path at `t` is the old one at `t + r`.
    ///
    /// This is the shift `θ_r` on the sampled noise; increments and cell
    /// areas are untouched.
    pub fn shift(&self, r: T) -> Result<Self> {
        let k = r / self.dt;
        if (k - k.round()).abs() > T::lit(1e-6) {
            return invalid(format!("shift {r} is not a multiple of dt = {}", self.dt));
        }
        Ok(Self { t0: self.t0 - k.round() * self.dt, ..self.clone() })
    }

    /// Restriction to `[s, t]`, re-zeroed at `s`.
    pub fn window(&self, s: T, t: T) -> Result<Self> {
        let (i, j) = self.span(s, t)?;
        if i == j {
            return invalid("window must contain at least one cell");
        }
        Self::new(self.time(i), self.dt, self.x[i..=j].to_vec(), self.xx[i..j].to_vec(), self.gamma)
    }

    /// Keeps every `factor`-th grid point, rebuilding cell areas by Chen.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_cells().is_multiple_of(factor) {
            return invalid(format!("cannot coarsen {} cells by {factor}", self.n_cells()));
        }
        let n = self.n_cells() / factor;
        let x = (0..=n).map(|k| self.x[k * factor]).collect();
        let xx = (0..n).map(|k| self.area(k * factor, (k + 1) * factor)).collect();
        Self::new(self.t0, self.dt * T::from_count(factor), x, xx, self.gamma)
    }

    /// Multiplies the path by `c` (areas by `c²`).
    pub fn scaled(&self, c: T) -> Self {
        Self {
            x: self.x.iter().map(|&v| v * c).collect(),
            xx: self.xx.iter().map(|&v| v * c * c).collect(),
            ..self.clone()
        }
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.n_cells() == other.n_cells() && self.dt == other.dt && self.t0 == other.t0
    }

    /// Writes the `t,x,xx_cell` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,xx_cell")?;
        for k in 0..=self.n_cells() {
            if k < self.n_cells() {
                writeln!(w, "{},{},{}", self.time(k), self.x[k], self.xx[k])?;
            } else {
                writeln!(w, "{},{},", self.time(k), self.x[k])?;
            }
        }
        Ok(())
    }

    /// Reads the `t,x,xx_cell` CSV written by [`Self::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, gamma: T) -> Result<Self> {
        let mut ts = Vec::new();
        let mut x = Vec::new();
        let mut xx = Vec::new();
        let parse = |s: &str| s.trim().parse::<T>().map_err(|_| Error::InvalidInput(format!("bad number '{s}'")));
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 {
                if line.trim() != "t,x,xx_cell" {
                    return invalid(format!("unexpected header '{line}'"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return invalid(format!("line {}: expected 3 columns", n + 1));
            }
            ts.push(parse(cols[0])?);
            x.push(parse(cols[1])?);
            if !cols[2].trim().is_empty() {
                xx.push(parse(cols[2])?);
            }
        }
        if ts.len() < 2 {
            return invalid("path CSV needs at least 2 rows");
        }
        let dt = ts[1] - ts[0];
        let path = Self::new(ts[0], dt, x, xx, gamma)?;
        for (k, &t) in ts.iter().enumerate() {
            if (path.time(k) - t).abs() > T::lit(1e-9) * (T::one() + t.abs()) {
                return invalid(format!("row {k}: time {t} is not on a uniform grid"));
            }
        }
        Ok(path)
    }
}

/// Grid-restricted inhomogeneous rough-path distance `d_{γ,[s,t]}(a, b)`.
pub fn rough_metric<T: Real>(a: &GridRoughPath<T>, b: &GridRoughPath<T>, s: T, t: T) -> Result<T> {
    if !a.same_grid(b) {
        return invalid("rough_metric needs two paths on the same grid");
    }
    let (i, j) = a.span(s, t)?;
    let g = a.gamma;
    let mut first = T::zero();
    let mut second = T::zero();
    for p in i..j {
        let aa = a.areas_from(p, j);
        let ba = b.areas_from(p, j);
        for q in p + 1..=j {
            let h = T::from_count(q - p) * a.dt;
            let d1 = (a.increment(p, q) - b.increment(p, q)).abs() / h.powf(g);
            let d2 = (aa[q - p] - ba[q - p]).abs() / h.powf(g + g);
            first = first.max(d1);
            second = second.max(d2);
        }
    }
    Ok(first + second)
}

/// `ρ_{γ,[s,t]}(a) = d_{γ,[s,t]}(a, 0)`.
pub fn rho<T: Real>(a: &GridRoughPath<T>, s: T, t: T) -> Result<T> {
    let zero = GridRoughPath::zero(a.t0, a.dt, a.n_cells(), a.gamma)?;
    rough_metric(a, &zero, s, t)
}

/// Scaled fractional Brownian noise, lifted canonically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub hurst: f64,
    pub gamma: f64,
    pub scale: f64,
    pub steps_per_unit: usize,
}

impl NoiseSpec {
    /// Lifted sample on `[t0, t0 + units]` with `X_{t0} = 0`.
    pub fn sample<T: Real>(&self, t0: T, units: usize, seed: u64) -> Result<GridRoughPath<T>> {
        if self.steps_per_unit == 0 || units == 0 {
            return invalid("noise needs at least one unit and one step per unit");
        }
        let n = units * self.steps_per_unit;
        let dt = 1.0 / self.steps_per_unit as f64;
        let s: Vec<T> = sample_fbm_scaled(self.hurst, n, dt, self.scale, seed)?;
        lift_piecewise_linear(&s, t0, T::lit(dt), T::lit(self.gamma))
    }
}
