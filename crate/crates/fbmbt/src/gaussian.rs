//! Two-sided fractional Brownian motion on uniform dyadic grids.
//!
//! The grid spacing is tied to the crossing-scheme level `n` through
//! `h = 2^(-n/2)`, so the outer process sampled at the walk's lattice needs no
//! interpolation. Generation draws one stationary fractional Gaussian noise
//! sequence over the whole doubled grid and cumulative-sums it with the origin
//! pinned at the center index; gluing two independent one-sided paths would get
//! the cross-side covariance wrong for `H != 1/2`.
//!
//! The default generator is circulant embedding (exact, `O(N log N)`). When the
//! embedding has eigenvalues below `-1e-10` relative it falls back to the
//! conditional (Durbin-Levinson) recursion, which is exact in `O(N^2)`.
//! Eigenvalues in `[-1e-10 * max, 0)` are clamped to zero with a logged
//! warning.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::Error;
use crate::Result;

/// Relative eigenvalue tolerance below which the circulant embedding is
/// rejected in favor of the conditional recursion.
const EMBEDDING_EIGEN_REL_TOL: f64 = 1e-10;

/// Hurst parameter, restricted to the open interval (0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && 0.0 < value && value < 1.0 {
            Ok(Hurst(value))
        } else {
            Err(Error::InvalidHurst(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Hurst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Covariance kernel of two-sided fBm: `E[X_t X_s]`.
#[inline]
pub fn covariance(hurst: Hurst, t: f64, s: f64) -> f64 {
    let two_h = 2.0 * hurst.value();
    0.5 * (s.abs().powf(two_h) + t.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Autocorrelation of unit-spacing fractional Gaussian noise at integer lag.
///
/// Evaluated via the three-term formula directly; cancellation for large
/// lags is acceptable at desk scales (`|k| <= 2^12`).
#[inline]
pub fn fgn_autocorr(hurst: Hurst, k: i64) -> f64 {
    let two_h = 2.0 * hurst.value();
    let k = k.abs() as f64;
    0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
}

/// Grid spacing `h = 2^(-n/2)` at level `n`.
#[inline]
pub fn grid_spacing(level: u32) -> f64 {
    2f64.powf(-(level as f64) / 2.0)
}

/// Normalization `2^(nH/2) = h^(-H)` that maps level-`n` increments of `X`
/// onto standard Gaussians.
#[inline]
pub fn increment_scale(hurst: Hurst, level: u32) -> f64 {
    2f64.powf(level as f64 * hurst.value() / 2.0)
}

/// Covariance between the path value at an arbitrary time and one grid-cell
/// increment: `E[X_u (X_{(j+1)h} - X_{jh})]` with `h = 2^(-n/2)`.
#[inline]
pub fn path_increment_cov(hurst: Hurst, level: u32, u: f64, j: i64) -> f64 {
    let h = grid_spacing(level);
    covariance(hurst, u, (j + 1) as f64 * h) - covariance(hurst, u, j as f64 * h)
}

/// Covariance between two grid-cell increments at level `n`:
/// `E[(X_{(k+1)h} - X_{kh})(X_{(l+1)h} - X_{lh})] = 2^(-nH) rho(k-l)`.
#[inline]
pub fn increment_cov(hurst: Hurst, level: u32, k: i64, l: i64) -> f64 {
    2f64.powf(-(level as f64) * hurst.value()) * fgn_autocorr(hurst, k - l)
}

/// Generation algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMethod {
    /// Circulant embedding, falling back to the conditional recursion when
    /// the embedding is not positive semi-definite.
    Auto,
    /// Circulant embedding only; errors if the embedding fails.
    CirculantEmbedding,
    /// Conditional (Durbin-Levinson) sequential generation.
    Conditional,
}

/// Two-sided fBm sample values on the uniform dyadic grid of level `n`.
///
/// Values are indexed by the integer `j` with `j * h` in `[-span, span]`;
/// the value at `j = 0` is exactly zero.
#[derive(Debug, Clone)]
pub struct FbmGrid {
    hurst: Hurst,
    level: u32,
    span: f64,
    half_points: i64,
    values: Vec<f64>,
}

impl FbmGrid {
    /// Generates an exact two-sided fBm sample. Deterministic given the
    /// generator state handed in.
    pub fn generate<R: Rng>(hurst: Hurst, level: u32, span: f64, rng: &mut R) -> Result<Self> {
        Self::generate_with(hurst, level, span, rng, GenMethod::Auto)
    }

    pub fn generate_with<R: Rng>(
        hurst: Hurst,
        level: u32,
        span: f64,
        rng: &mut R,
        method: GenMethod,
    ) -> Result<Self> {
        if !(span > 0.0) || !span.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "span must be positive and finite, got {span}"
            )));
        }
        let h = grid_spacing(level);
        let half_points = (span / h).floor() as i64;
        if half_points < 1 {
            return Err(Error::InvalidConfig(format!(
                "span {span} covers no grid cell at level {level} (spacing {h})"
            )));
        }
        let n_increments = 2 * half_points as usize;

        let unit_noise = match method {
            GenMethod::CirculantEmbedding => circulant_fgn(hurst, n_increments, rng)?,
            GenMethod::Conditional => conditional_fgn(hurst, n_increments, rng)?,
            GenMethod::Auto => match circulant_fgn(hurst, n_increments, rng) {
                Ok(noise) => noise,
                Err(Error::CovarianceNotPd(reason)) => {
                    log::warn!(
                        "circulant embedding rejected ({reason}); using conditional recursion"
                    );
                    conditional_fgn(hurst, n_increments, rng)?
                }
                Err(other) => return Err(other),
            },
        };

        // Scale unit-variance noise to spacing h, then integrate with the
        // origin pinned at the center grid point.
        let scale = h.powf(hurst.value());
        let mut values = Vec::with_capacity(n_increments + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for g in &unit_noise {
            acc += scale * g;
            values.push(acc);
        }
        let center = values[half_points as usize];
        for v in &mut values {
            *v -= center;
        }
        values[half_points as usize] = 0.0;

        Ok(FbmGrid {
            hurst,
            level,
            span,
            half_points,
            values,
        })
    }

    #[inline]
    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    #[inline]
    pub fn level(&self) -> u32 {
        self.level
    }

    #[inline]
    pub fn span(&self) -> f64 {
        self.span
    }

    /// Grid spacing `h = 2^(-n/2)`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        grid_spacing(self.level)
    }

    #[inline]
    pub fn min_index(&self) -> i64 {
        -self.half_points
    }

    #[inline]
    pub fn max_index(&self) -> i64 {
        self.half_points
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value `X_{jh}`.
    #[inline]
    pub fn value(&self, j: i64) -> Result<f64> {
        if j < self.min_index() || j > self.max_index() {
            return Err(Error::IndexOutOfRange {
                index: j,
                min: self.min_index(),
                max: self.max_index(),
            });
        }
        Ok(self.values[(j + self.half_points) as usize])
    }

    /// Unchecked value lookup for hot loops; callers validate the range once.
    #[inline]
    pub(crate) fn value_fast(&self, j: i64) -> f64 {
        debug_assert!(j >= self.min_index() && j <= self.max_index());
        self.values[(j + self.half_points) as usize]
    }

    /// Index of the grid point nearest to time `u`.
    #[inline]
    pub fn nearest_index(&self, u: f64) -> i64 {
        (u / self.spacing()).round() as i64
    }

    /// Value at the grid point nearest to `u` (resolution `h/2`).
    pub fn value_at(&self, u: f64) -> Result<f64> {
        self.value(self.nearest_index(u))
    }

    /// Dumps the path as CSV rows `j,t,x`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "j,t,x")?;
        let h = self.spacing();
        for j in self.min_index()..=self.max_index() {
            writeln!(w, "{},{},{}", j, j as f64 * h, self.value_fast(j))?;
        }
        Ok(())
    }
}

/// Unit-variance fGn of length `n` by circulant embedding.
fn circulant_fgn<R: Rng>(hurst: Hurst, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let half = n.next_power_of_two().max(2);
    let m = 2 * half;

    // First row of the circulant: rho(0), .., rho(half), mirrored back down.
    let mut row = vec![Complex::new(0.0, 0.0); m];
    for k in 0..=half {
        row[k].re = fgn_autocorr(hurst, k as i64);
    }
    for k in 1..half {
        row[m - k].re = row[k].re;
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let mut eigen = row;
    fft.process(&mut eigen);

    let max_eig = eigen.iter().fold(0.0f64, |a, c| a.max(c.re));
    let min_eig = eigen.iter().fold(f64::INFINITY, |a, c| a.min(c.re));
    if min_eig < -EMBEDDING_EIGEN_REL_TOL * max_eig {
        return Err(Error::CovarianceNotPd(format!(
            "embedding eigenvalue {min_eig:.3e} below -{EMBEDDING_EIGEN_REL_TOL:e} * max ({max_eig:.3e})"
        )));
    }
    if min_eig < 0.0 {
        log::warn!("clamping slightly negative embedding eigenvalue {min_eig:.3e} to zero");
    }

    // Independent complex Gaussians weighted by sqrt(eigenvalue); the real
    // part of the transform is one stationary sample with autocovariance rho.
    let mut spectrum = Vec::with_capacity(m);
    for lambda in &eigen {
        let sd = lambda.re.max(0.0).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        spectrum.push(Complex::new(sd * a, sd * b));
    }
    fft.process(&mut spectrum);

    let norm = 1.0 / (m as f64).sqrt();
    Ok(spectrum[..n].iter().map(|c| c.re * norm).collect())
}

/// Unit-variance fGn of length `n` by the Durbin-Levinson conditional
/// recursion. Exact, `O(n^2)`; used as the embedding fallback.
fn conditional_fgn<R: Rng>(hurst: Hurst, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut sample = Vec::with_capacity(n);
    let z0: f64 = rng.sample(StandardNormal);
    sample.push(z0);

    let acf: Vec<f64> = (0..n as i64).map(|k| fgn_autocorr(hurst, k)).collect();
    let mut phi: Vec<f64> = Vec::new();
    let mut prev_var = 1.0f64;

    for k in 1..n {
        let num = if k == 1 {
            acf[1]
        } else {
            acf[k] - phi.iter().enumerate().map(|(j, p)| p * acf[k - 1 - j]).sum::<f64>()
        };
        let reflection = num / prev_var;
        if !reflection.is_finite() || reflection.abs() >= 1.0 {
            return Err(Error::CovarianceNotPd(format!(
                "conditional recursion broke down at step {k} (reflection {reflection})"
            )));
        }
        let len = phi.len();
        let old = phi.clone();
        for j in 0..len {
            phi[j] = old[j] - reflection * old[len - 1 - j];
        }
        phi.push(reflection);
        prev_var *= 1.0 - reflection * reflection;
        if prev_var <= 0.0 {
            return Err(Error::CovarianceNotPd(format!(
                "conditional variance went non-positive at step {k}"
            )));
        }

        let mean: f64 = phi
            .iter()
            .enumerate()
            .map(|(j, p)| p * sample[k - 1 - j])
            .sum();
        let z: f64 = rng.sample(StandardNormal);
        sample.push(mean + prev_var.sqrt() * z);
    }
    Ok(sample)
}
