//! Synthetic Young's modulus fields on the unit square.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::discretization::Point;
use crate::error::{Error, Result};

/// Samples per axis used to normalize the symmetric field.
pub const SYMMETRIC_SAMPLES: usize = 201;

/// Unnormalized symmetric field.
pub fn symmetric_raw(x: f64, y: f64) -> f64 {
    (0.1 * (2.0 * PI * x).sin() + (10.0 * x).tanh()) * (2.0 * PI * y).sin()
}

fn symmetric_bounds() -> (f64, f64) {
    static BOUNDS: OnceLock<(f64, f64)> = OnceLock::new();
    *BOUNDS.get_or_init(|| {
        let n = SYMMETRIC_SAMPLES;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..n {
            for i in 0..n {
                let v = symmetric_raw(i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    })
}

/// Symmetric field mapped affinely so its extremes on the sample grid are 1 and 2.
pub fn symmetric_modulus(x: f64, y: f64) -> f64 {
    let (lo, hi) = symmetric_bounds();
    1.0 + (symmetric_raw(x, y) - lo) / (hi - lo)
}

/// A scalar field sampled on a uniform `n×n` grid over `[0,1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub n: usize,
    /// Row-major, `values[j * n + i]` at `(i/(n-1), j/(n-1))`.
    pub values: Vec<f64>,
}

impl GridField {
    /// Bilinear interpolation, clamped to the unit square.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let n = self.n;
        let s = (n - 1) as f64;
        let fx = (x.clamp(0.0, 1.0) * s).min(s);
        let fy = (y.clamp(0.0, 1.0) * s).min(s);
        let i = (fx.floor() as usize).min(n - 2);
        let j = (fy.floor() as usize).min(n - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = |i: usize, j: usize| self.values[j * n + i];
        (1.0 - ty) * ((1.0 - tx) * v(i, j) + tx * v(i + 1, j)) + ty * ((1.0 - tx) * v(i, j + 1) + tx * v(i + 1, j + 1))
    }
}

/// Signed FFT frequency of bin `i` on an `n`-point grid.
fn frequency(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn fft2(data: &mut [Complex<f64>], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            col[j] = data[j * n + i];
        }
        fft.process(&mut col);
        for j in 0..n {
            data[j * n + i] = col[j];
        }
    }
}

/// Gaussian random field by spectral synthesis: white noise is transformed,
/// scaled by `|k|^{-α/2}` with the mean mode removed, and transformed back.
/// The real part is rescaled affinely to `[1, 2]`.
pub fn grf_modulus(n: usize, alpha: f64, seed: u64) -> Result<GridField> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!("GRF spectral exponent must be positive, got {alpha}")));
    }
    if n < 4 {
        return Err(Error::config(format!("GRF grid must have at least 4 points per axis, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<Complex<f64>> = (0..n * n)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    fft2(&mut data, n, false);
    for j in 0..n {
        for i in 0..n {
            let (kx, ky) = (frequency(i, n), frequency(j, n));
            let k = (kx * kx + ky * ky).sqrt();
            let amp = if k == 0.0 { 0.0 } else { k.powf(-alpha / 2.0) };
            data[j * n + i] *= amp;
        }
    }
    fft2(&mut data, n, true);
    let re: Vec<f64> = data.iter().map(|c| c.re).collect();
    let lo = re.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = re.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = re.iter().map(|v| 1.0 + (v - lo) / (hi - lo)).collect();
    Ok(GridField { n, values })
}

/// Slope of a log-log fit to the radially averaged power spectrum.
pub fn spectral_slope(field: &GridField) -> f64 {
    let n = field.n;
    let mean = field.values.iter().sum::<f64>() / (n * n) as f64;
    let mut data: Vec<Complex<f64>> = field.values.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    fft2(&mut data, n, false);
    let kmax = n / 2;
    let mut power = vec![0.0; kmax + 1];
    let mut count = vec![0usize; kmax + 1];
    for j in 0..n {
        for i in 0..n {
            let k = (frequency(i, n).powi(2) + frequency(j, n).powi(2)).sqrt().round() as usize;
            if k >= 1 && k <= kmax {
                power[k] += data[j * n + i].norm_sqr();
                count[k] += 1;
            }
        }
    }
    let pts: Vec<(f64, f64)> = (2..kmax)
        .filter(|&k| count[k] > 0 && power[k] > 0.0)
        .map(|k| ((k as f64).ln(), (power[k] / count[k] as f64).ln()))
        .collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

/// Shared closure over a modulus field.
pub type ModulusFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
