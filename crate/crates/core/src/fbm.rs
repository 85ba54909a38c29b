//! Exact Gaussian sampling of fractional Brownian motion on a uniform grid.
//!
//! Fractional Gaussian noise is drawn by circulant embedding (Davies-Harte).
//! If the embedding has a negative eigenvalue the sampler falls back to a
//! Cholesky factorisation of the increment covariance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::real::Real;

#[derive(Debug, Clone)]
enum Factor {
    /// sqrt(λ_k / 2n) for the circulant of size 2n.
    Circulant(Vec<f64>),
    /// Lower-triangular Cholesky factor, row-major.
    Cholesky(Vec<f64>),
}

/// Reusable sampler for fBm paths with fixed `H`, grid size and step.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    hurst: f64,
    n_steps: usize,
    dt: f64,
    factor: Factor,
}

fn fgn_autocov(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

impl FbmSampler {
    pub fn new(hurst: f64, n_steps: usize, dt: f64) -> Result<Self> {
        if !(hurst > 1.0 / 3.0 && hurst <= 1.0) {
            return invalid(format!("Hurst index {hurst} must lie in (1/3, 1]"));
        }
        if n_steps < 2 {
            return invalid("fBm sampling needs n_steps >= 2");
        }
        if !(dt > 0.0) {
            return invalid(format!("dt = {dt} must be positive"));
        }
        let n = n_steps;
        let m = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let k = if j <= n { j } else { m - j };
                Complex::new(fgn_autocov(hurst, k), 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut row);
        let scale = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let factor = if row.iter().all(|c| c.re >= -1e-10 * scale) {
            Factor::Circulant(row.iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect())
        } else {
            Factor::Cholesky(cholesky(hurst, n))
        };
        Ok(Self { hurst, n_steps, dt, factor })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Path values `X_{k dt}`, `k = 0..=n_steps`, with `X_0 = 0`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_steps;
        let noise: Vec<f64> = match &self.factor {
            Factor::Circulant(sq) => {
                let mut buf: Vec<Complex<f64>> = sq
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
                buf[..n].iter().map(|c| c.re).collect()
            }
            Factor::Cholesky(l) => {
                let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                (0..n).map(|i| (0..=i).map(|j| l[i * n + j] * z[j]).sum()).collect()
            }
        };
        let scale = self.dt.powf(self.hurst);
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        out.push(acc);
        for g in noise {
            acc += scale * g;
            out.push(acc);
        }
        out
    }

    /// True when circulant embedding was usable.
    pub fn is_circulant(&self) -> bool {
        matches!(self.factor, Factor::Circulant(_))
    }
}

fn cholesky(h: f64, n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = fgn_autocov(h, i - j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if i == j { s.max(0.0).sqrt() } else if l[j * n + j] > 0.0 { s / l[j * n + j] } else { 0.0 };
        }
    }
    l
}

/// fBm on `[0, 1]` with `n_steps` cells.
pub fn sample_fbm<T: Real>(hurst: f64, n_steps: usize, seed: u64) -> Result<Vec<T>> {
    sample_fbm_scaled(hurst, n_steps, 1.0 / n_steps as f64, 1.0, seed)
}

/// `scale · B^H` on a grid of `n_steps` cells of width `dt`.
pub fn sample_fbm_scaled<T: Real>(hurst: f64, n_steps: usize, dt: f64, scale: f64, seed: u64) -> Result<Vec<T>> {
    let s = FbmSampler::new(hurst, n_steps, dt)?;
    Ok(s.sample(seed).into_iter().map(|v| T::lit(scale * v)).collect())
}
