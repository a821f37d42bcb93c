//! Growth exponents, the Manhattan curve and its slope invariants,
//! estimated by regression on log-counts from pair spectra and orbit balls.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{OrbitBall, PairSpectrum, SpectrumError};

#[derive(Debug, Error)]
pub enum ManhattanError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("x = {x} outside the sampled range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("empty band at slope {lambda}")]
    EmptyBand { lambda: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Polynomial prefactor `T^-kappa` of each counting statistic, removed by
/// the log-T correction.
pub const KAPPA_CUMULATIVE: f64 = 1.0;
pub const KAPPA_BOX: f64 = 1.5;
/// Bands narrower than the ratio spread: `e^{hT} / sqrt(T)`.
pub const KAPPA_BAND: f64 = 0.5;
/// Default band half-width in units of the ratio spread.
pub const BAND_WIDTH_FACTOR: f64 = 0.5;
pub const KAPPA_ORBIT: f64 = 0.0;

/// Counting frame of an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Class,
    Orbit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    /// Regression window is `[tail_fraction * T_max, T_max]`.
    pub tail_fraction: f64,
    /// Count evaluations per window.
    pub samples: usize,
    /// Subtract the fitted `-kappa log T` prefactor.
    pub log_correction: bool,
    pub tol_floor: f64,
    pub tol_factor: f64,
    /// Curve samples share one class population instead of each using its
    /// full certified window, so finite-`T` bias is uniform across directions.
    pub equal_population: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            tail_fraction: 0.6,
            samples: 33,
            log_correction: true,
            tol_floor: 0.02,
            tol_factor: 2.0,
            equal_population: true,
        }
    }
}

impl EstimatorOptions {
    /// `max(tol_floor, tol_factor * stderr)`.
    pub fn tol(&self, stderr: f64) -> f64 {
        self.tol_floor.max(self.tol_factor * stderr)
    }

    /// Evaluation points of a count up to `t_max`.
    pub fn grid(&self, t_max: f64) -> Vec<f64> {
        let n = self.samples.max(2);
        (0..n)
            .map(|i| t_max * (self.tail_fraction + (1.0 - self.tail_fraction) * i as f64 / (n - 1) as f64))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub exponent: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub sample_count: usize,
    /// Slope of `log N` alone.
    pub raw_exponent: f64,
    /// Slope of `log N + kappa log T`.
    pub corrected_exponent: f64,
    pub kappa: f64,
    pub log_correction: bool,
    /// Poisson part of `stderr`: `1 / sqrt(n Var(s))` for the `n` counted
    /// points of the window, spread as `e^{h s}` over it.
    pub counting_stderr: f64,
    /// Slopes over the four quarters of the window.
    pub local_slopes: Vec<f64>,
    pub local_slope_monotone: bool,
}

impl GrowthEstimate {
    /// Same estimate for the counting variable scaled by `1/factor`.
    pub fn rescaled(&self, factor: f64) -> GrowthEstimate {
        GrowthEstimate {
            exponent: self.exponent * factor,
            stderr: self.stderr * factor,
            window: (self.window.0 / factor, self.window.1 / factor),
            raw_exponent: self.raw_exponent * factor,
            corrected_exponent: self.corrected_exponent * factor,
            local_slopes: self.local_slopes.iter().map(|s| s * factor).collect(),
            ..self.clone()
        }
    }
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let se = if points.len() > 2 {
        let rss: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, se)
}

/// Exponential growth rate of `N(T)` over the tail window
/// `[tail_fraction * T_max, T_max]`.
///
/// The stderr combines the regression error, half the slope difference
/// between the two halves of the window, and the Poisson counting error.
pub fn growth_exponent(
    counts: &[(f64, usize)],
    kappa: f64,
    opts: &EstimatorOptions,
) -> Result<GrowthEstimate, ManhattanError> {
    let mut counts = counts.to_vec();
    counts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if counts.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(ManhattanError::InvalidInput(
            "counts must be non-decreasing in T".into(),
        ));
    }
    let &(t_max, n_max) = counts
        .last()
        .ok_or_else(|| ManhattanError::InsufficientData("no samples".into()))?;
    if n_max < 50 {
        return Err(ManhattanError::InsufficientData(format!("N(T_max) = {n_max} < 50")));
    }
    let t_min = opts.tail_fraction * t_max;
    let window: Vec<(f64, usize)> = counts
        .into_iter()
        .filter(|&(t, n)| t >= t_min && n > 0 && t > 0.0)
        .collect();
    if window.len() < 8 {
        return Err(ManhattanError::InsufficientData(format!(
            "{} samples in window, need 8",
            window.len()
        )));
    }
    if window[0].1 == n_max {
        return Err(ManhattanError::InsufficientData(
            "counts are constant over the window".into(),
        ));
    }
    let shift = if opts.log_correction { kappa } else { 0.0 };
    let series =
        |k: f64| -> Vec<(f64, f64)> { window.iter().map(|&(t, n)| (t, (n as f64).ln() + k * t.ln())).collect() };
    let raw = least_squares(&series(0.0)).0;
    let corrected = least_squares(&series(kappa)).0;
    let pts = series(shift);
    let (slope, se) = least_squares(&pts);
    let half = pts.len() / 2;
    let drift = (least_squares(&pts[..half]).0 - least_squares(&pts[half..]).0).abs() / 2.0;
    let quarter = pts.len() / 4;
    let local_slopes: Vec<f64> = if quarter >= 2 {
        (0..4)
            .map(|q| least_squares(&pts[q * quarter..(q + 1) * quarter]).0)
            .collect()
    } else {
        Vec::new()
    };
    let counting = counting_stderr(slope, window[0].0, t_max, n_max - window[0].1);
    let increasing = local_slopes.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = local_slopes.windows(2).all(|w| w[1] <= w[0]);
    Ok(GrowthEstimate {
        exponent: slope.max(0.0),
        stderr: (se * se + drift * drift + counting * counting).sqrt(),
        window: (window[0].0, t_max),
        sample_count: window.len(),
        raw_exponent: raw,
        corrected_exponent: corrected,
        kappa,
        log_correction: opts.log_correction,
        counting_stderr: counting,
        local_slopes,
        local_slope_monotone: increasing || decreasing,
    })
}

fn counting_stderr(h: f64, t0: f64, t1: f64, n: usize) -> f64 {
    let w = t1 - t0;
    if n < 2 || w <= 0.0 {
        return f64::INFINITY;
    }
    // variance of the truncated exponential law e^{h s} on [0, w]
    let hw = h.abs() * w;
    let var = if hw < 1e-4 {
        w * w / 12.0
    } else {
        1.0 / (h * h) - w * w * (-hw).exp() / (1.0 - (-hw).exp()).powi(2)
    };
    if var <= 0.0 {
        return f64::INFINITY;
    }
    1.0 / (n as f64 * var).sqrt()
}

fn count_series(
    grid: &[f64],
    mut count: impl FnMut(f64) -> Result<usize, SpectrumError>,
) -> Result<Vec<(f64, usize)>, ManhattanError> {
    grid.iter().map(|&t| Ok((t, count(t)?))).collect()
}

/// Growth of `#{c : l1 + l2 <= T}` (class frame).
pub fn delta_pair(s: &PairSpectrum, opts: &EstimatorOptions) -> Result<GrowthEstimate, ManhattanError> {
    let series = count_series(&opts.grid(s.certified_limit(1.0, 1.0)), |t| {
        s.count_weighted(1.0, 1.0, t)
    })?;
    growth_exponent(&series, KAPPA_CUMULATIVE, opts)
}

/// Growth of `#{g : d1 + d2 <= R}` (orbit frame); the ball must carry weights `(1, 1)`.
pub fn delta_orbit(ball: &OrbitBall, opts: &EstimatorOptions) -> Result<GrowthEstimate, ManhattanError> {
    let limit = ball.certified_limit(1.0, 1.0);
    if !limit.is_finite() || limit <= 0.0 {
        return Err(ManhattanError::InvalidInput(
            "orbit ball does not certify weights (1, 1)".into(),
        ));
    }
    let series = count_series(&opts.grid(limit), |t| ball.count_weighted(1.0, 1.0, t))?;
    growth_exponent(&series, KAPPA_ORBIT, opts)
}

/// Growth of `#{c : x l1 + y l2 <= T}`.
pub fn weighted_exponent(
    s: &PairSpectrum,
    x: f64,
    y: f64,
    opts: &EstimatorOptions,
) -> Result<GrowthEstimate, ManhattanError> {
    let series = count_series(&opts.grid(s.certified_limit(x, y)), |t| s.count_weighted(x, y, t))?;
    growth_exponent(&series, KAPPA_CUMULATIVE, opts)
}

/// Growth of `#{c : l1 <= T}`: the critical exponent of the first surface.
pub fn single_exponent(s: &PairSpectrum, opts: &EstimatorOptions) -> Result<GrowthEstimate, ManhattanError> {
    weighted_exponent(s, 1.0, 0.0, opts)
}

/// Both frames of the pair exponent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaReport {
    pub class: GrowthEstimate,
    pub orbit: Option<GrowthEstimate>,
}

impl DeltaReport {
    /// Frames agree within the summed stderr.
    pub fn frames_agree(&self) -> Option<bool> {
        self.orbit
            .as_ref()
            .map(|o| (o.exponent - self.class.exponent).abs() <= o.stderr + self.class.stderr)
    }
}

// ---------------------------------------------------------------------------
// Manhattan curve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub theta: f64,
    pub r: f64,
    pub stderr: f64,
    pub x: f64,
    pub y: f64,
    pub window: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    /// Sorted by `theta`, hence by decreasing `x`.
    pub samples: Vec<CurveSample>,
}

/// 17-point Chebyshev grid in `(0.05, pi/2 - 0.05)`; its middle node is `pi/4`.
pub fn chebyshev_thetas() -> Vec<f64> {
    let (a, b, n) = (0.05, FRAC_PI_2 - 0.05, 17);
    (0..n)
        .map(|k| a + (b - a) * (1.0 - (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64).cos()) / 2.0)
        .collect()
}

/// Chebyshev grid plus the axis directions and two directions beyond each
/// axis, so that `x = 1` and `y = 1` are interior abscissae.
pub fn default_thetas() -> Vec<f64> {
    let mut t = vec![-0.1, -0.05, 0.0];
    t.extend(chebyshev_thetas());
    t.extend([FRAC_PI_2, FRAC_PI_2 + 0.05, FRAC_PI_2 + 0.1]);
    t
}

/// Samples `C_M` by homogeneity: the exponent `e` of `T -> #{x l1 + y l2 <= T}`
/// along `(x, y) = (cos t, sin t)` puts `e (cos t, sin t)` on the curve.
///
/// `spectra` are spectra of one pair enumerated with different weights; each
/// direction is counted in the spectrum certifying the most classes.
pub fn curve_sample(
    spectra: &[&PairSpectrum],
    thetas: &[f64],
    opts: &EstimatorOptions,
) -> Result<CurveEstimate, ManhattanError> {
    let first = spectra
        .first()
        .ok_or_else(|| ManhattanError::InvalidInput("no spectrum".into()))?;
    let same = |a: &PairSpectrum| {
        a.reps()
            .iter()
            .zip(first.reps())
            .all(|(x, y)| x.to_descriptor() == y.to_descriptor())
    };
    if !spectra.iter().all(|s| same(s)) {
        return Err(ManhattanError::InvalidInput("spectra of different pairs".into()));
    }
    let mut thetas = thetas.to_vec();
    thetas.sort_by(f64::total_cmp);
    // per direction: (spectrum, sorted weighted lengths, certified population)
    let plans = thetas
        .par_iter()
        .map(|&theta| {
            let (x, y) = (theta.cos(), theta.sin());
            spectra
                .iter()
                .map(|s| {
                    let limit = s.certified_limit(x, y);
                    let mut v: Vec<f64> = s.entries().iter().map(|e| x * e.l1 + y * e.l2).collect();
                    v.sort_by(f64::total_cmp);
                    let population = if limit.is_finite() {
                        v.partition_point(|&w| w <= limit)
                    } else {
                        0
                    };
                    (*s, v, population, limit)
                })
                .max_by_key(|p| p.2)
                .filter(|p| p.2 > 0)
                .ok_or_else(|| ManhattanError::InvalidInput(format!("direction {theta} is not certified")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let population = plans.iter().map(|p| p.2).min().unwrap_or(0);
    let samples = thetas
        .par_iter()
        .zip(plans.par_iter())
        .map(|(&theta, (s, sorted, _, limit))| {
            let (x, y) = (theta.cos(), theta.sin());
            let t_max = if opts.equal_population {
                sorted[population - 1]
            } else {
                *limit
            };
            let series = count_series(&opts.grid(t_max), |t| s.count_weighted(x, y, t))?;
            let g = growth_exponent(&series, KAPPA_CUMULATIVE, opts)?;
            if g.exponent <= 0.0 {
                return Err(ManhattanError::InsufficientData(format!("no growth along {theta}")));
            }
            Ok(CurveSample {
                theta,
                r: g.exponent,
                stderr: g.stderr,
                x: g.exponent * x,
                y: g.exponent * y,
                window: g.window,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CurveEstimate { samples })
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Convexity check at an interior sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub x: f64,
    /// Height of the sample above the chord of its neighbours (0 if convex).
    pub defect: f64,
    pub stderr: f64,
}

impl CurveEstimate {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.x, s.y)).collect()
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.x), hi.max(s.x))
            })
    }

    /// Euclidean distance from `p` to the sample polyline.
    pub fn distance_to(&self, p: (f64, f64)) -> f64 {
        let pts = self.points();
        match pts.len() {
            0 => f64::INFINITY,
            1 => segment_distance(p, pts[0], pts[0]),
            _ => pts
                .windows(2)
                .map(|w| segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Largest distance of a sample from the line `x + y = 1`.
    pub fn chord_deviation(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.x + s.y - 1.0).abs() / std::f64::consts::SQRT_2)
            .fold(0.0, f64::max)
    }

    /// Crossing of the polyline with the diagonal, with the stderr of the nearest sample.
    pub fn diagonal_point(&self) -> Option<(f64, f64)> {
        self.samples.windows(2).find_map(|w| {
            let (f0, f1) = (w[0].y - w[0].x, w[1].y - w[1].x);
            if f0 <= 0.0 && f1 >= 0.0 && f1 > f0 {
                let t = -f0 / (f1 - f0);
                let x = w[0].x + t * (w[1].x - w[0].x);
                let err = if t < 0.5 { w[0].stderr } else { w[1].stderr };
                Some((x, err))
            } else if f0 == 0.0 {
                Some((w[0].x, w[0].stderr))
            } else {
                None
            }
        })
    }

    /// `q(x_i) - chord(x_{i-1}, x_{i+1})` at each interior sample.
    pub fn convexity(&self) -> Vec<ConvexityCheck> {
        self.samples
            .windows(3)
            .map(|w| {
                let (a, b, c) = (&w[0], &w[1], &w[2]);
                // samples run from large x to small x; q is convex iff b lies below chord ac
                let t = (b.x - a.x) / (c.x - a.x);
                let chord = a.y + t * (c.y - a.y);
                ConvexityCheck {
                    x: b.x,
                    defect: (b.y - chord).max(0.0),
                    stderr: b.stderr,
                }
            })
            .collect()
    }
}

/// Normal slope `lambda(x) = -1 / q'(x)`, with `q'` from a quadratic fit
/// through the 5 samples nearest to `x` (3 if fewer are available).
pub fn normal_slope(curve: &CurveEstimate, x: f64) -> Result<f64, ManhattanError> {
    let (lo, hi) = curve.x_range();
    if !(x > lo && x < hi) {
        return Err(ManhattanError::OutOfRange { x, lo, hi });
    }
    let mut near: Vec<(f64, f64)> = curve.points();
    near.sort_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()));
    let k = if near.len() >= 5 { 5 } else { 3 };
    if near.len() < k {
        return Err(ManhattanError::InsufficientData("need at least 3 curve samples".into()));
    }
    let derivative = quadratic_derivative(&near[..k], x)
        .ok_or_else(|| ManhattanError::InsufficientData("degenerate local fit".into()))?;
    Ok(-1.0 / derivative)
}

/// Derivative at `x0` of the least-squares quadratic through `pts`.
fn quadratic_derivative(pts: &[(f64, f64)], x0: f64) -> Option<f64> {
    // fit y = c0 + c1 u + c2 u^2 with u = x - x0
    let mut m = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    for &(x, y) in pts {
        let u = x - x0;
        let basis = [1.0, u, u * u];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            v[i] += basis[i] * y;
        }
    }
    solve3(m, v).map(|c| c[1])
}

fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    Some(x)
}

/// Standard deviation of `l2/l1` over classes with `l1 + l2` within 1 of the
/// largest certified value.
pub fn ratio_spread(s: &PairSpectrum) -> Result<f64, ManhattanError> {
    let t = s.certified_limit(1.0, 1.0);
    let ratios: Vec<f64> = s
        .entries()
        .iter()
        .filter(|e| e.l1 + e.l2 > t - 1.0 && e.l1 + e.l2 <= t)
        .map(|e| e.ratio())
        .collect();
    if ratios.len() < 2 {
        return Err(ManhattanError::InsufficientData(
            "top shell has fewer than 2 classes".into(),
        ));
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    Ok((ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// `BAND_WIDTH_FACTOR * ratio_spread`.
pub fn default_band_width(s: &PairSpectrum) -> Result<f64, ManhattanError> {
    Ok(BAND_WIDTH_FACTOR * ratio_spread(s)?)
}

/// Upper bound for `delta(lambda, eps)` from the curve samples:
/// `min over (x, y) of max over |mu - lambda| <= eps of (x + mu y) / (1 + mu)`.
/// With `eps = 0` this is `min (x + lambda y) / (1 + lambda)`.
pub fn band_bound(curve: &CurveEstimate, lambda: f64, eps: f64) -> f64 {
    curve
        .samples
        .iter()
        .map(|p| {
            [lambda - eps, lambda + eps]
                .into_iter()
                .map(|mu| (p.x + mu * p.y) / (1.0 + mu))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Growth of the band count `#{|l2/l1 - lambda| <= eps, l1 + l2 <= T}`.
pub fn delta_slope(
    s: &PairSpectrum,
    lambda: f64,
    eps: f64,
    opts: &EstimatorOptions,
) -> Result<GrowthEstimate, ManhattanError> {
    if !(lambda > 0.0 && eps > 0.0) {
        return Err(ManhattanError::InvalidInput(format!("band lambda {lambda}, eps {eps}")));
    }
    let t_max = s.certified_limit(1.0, 1.0);
    if s.count_band(lambda, eps, t_max)? == 0 {
        return Err(ManhattanError::EmptyBand { lambda });
    }
    let series = count_series(&opts.grid(t_max), |t| s.count_band(lambda, eps, t))?;
    growth_exponent(&series, KAPPA_BAND, opts)
}

/// Step of the box-count grid.
pub const BOX_STEP: f64 = 0.25;

/// Correlation number `m(lambda)`: growth in `T` of the box counts
/// `#{l1 in [T, T+1), l2 in [lambda T, lambda T + 1)}`, accumulated over a
/// grid of step [`BOX_STEP`].
pub fn correlation(s: &PairSpectrum, lambda: f64, opts: &EstimatorOptions) -> Result<GrowthEstimate, ManhattanError> {
    let (lo, hi) = s.dilations();
    if !(lambda > lo && lambda < hi) && lo != hi {
        return Err(ManhattanError::OutOfRange { x: lambda, lo, hi });
    }
    let t_max = s.box_limit(lambda);
    if t_max <= 1.0 {
        return Err(ManhattanError::InsufficientData(format!("box limit {t_max}")));
    }
    let steps = (t_max / BOX_STEP).floor() as usize;
    let mut total = 0usize;
    let mut series = Vec::with_capacity(steps);
    for i in 1..=steps {
        let t = i as f64 * BOX_STEP;
        total += s.count_box(lambda, t)?;
        series.push((t, total));
    }
    if total == 0 {
        return Err(ManhattanError::EmptyBand { lambda });
    }
    growth_exponent(&series, KAPPA_BOX, opts)
}

/// Box count at the largest certified scale.
pub fn box_population(s: &PairSpectrum, lambda: f64) -> Result<usize, ManhattanError> {
    let t = (s.box_limit(lambda) / BOX_STEP).floor() * BOX_STEP;
    Ok(s.count_box(lambda, t)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationBounds {
    pub dil_minus: f64,
    pub dil_plus: f64,
    /// `log max(dil+, 1/dil-)`, a lower bound for the symmetrised Thurston distance.
    pub thurston_lower_bound: f64,
}

pub fn dilation_bounds(s: &PairSpectrum) -> Result<DilationBounds, ManhattanError> {
    if s.is_empty() {
        return Err(ManhattanError::InsufficientData("empty spectrum".into()));
    }
    let (dil_minus, dil_plus) = s.dilations();
    Ok(DilationBounds {
        dil_minus,
        dil_plus,
        thurston_lower_bound: dil_plus.max(1.0 / dil_minus).ln().max(0.0),
    })
}

/// Mean of `l2/l1` over classes with `l1` in `[T-1, T]`, `T` the largest certified `l1`.
pub fn stretch_estimate(s: &PairSpectrum) -> Result<f64, ManhattanError> {
    let t = s.certified_limit(1.0, 0.0);
    let ratios: Vec<f64> = s
        .entries()
        .iter()
        .filter(|e| e.l1 >= t - 1.0 && e.l1 <= t)
        .map(|e| e.ratio())
        .collect();
    if ratios.is_empty() {
        return Err(ManhattanError::InsufficientData(format!(
            "no classes with l1 in [{}, {t}]",
            t - 1.0
        )));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Slope `lambda` grid spanning the dilation range shrunk inward by 5% on each side.
pub fn lambda_grid(bounds: &DilationBounds, n: usize) -> Vec<f64> {
    let (lo, hi) = (bounds.dil_minus.ln(), bounds.dil_plus.ln());
    let pad = 0.05 * (hi - lo);
    let (a, b) = (lo + pad, hi - pad);
    if n <= 1 || b <= a {
        return vec![((a + b) / 2.0).exp()];
    }
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeReport {
    pub lambda_at: Vec<(f64, f64)>,
    /// `lambda(delta)`.
    pub maximal_slope: f64,
    /// `lambda(1)`.
    pub stretch: f64,
    pub dil_plus: f64,
    pub dil_minus: f64,
    pub thurston_lower_bound: f64,
}

/// Normal slopes at every interior sample abscissa, at `delta` and at `x = 1`.
pub fn slope_report(curve: &CurveEstimate, delta: f64, bounds: &DilationBounds) -> Result<SlopeReport, ManhattanError> {
    let (lo, hi) = curve.x_range();
    let lambda_at = curve
        .samples
        .iter()
        .filter(|s| s.x > lo && s.x < hi)
        .map(|s| Ok((s.x, normal_slope(curve, s.x)?)))
        .collect::<Result<Vec<_>, ManhattanError>>()?;
    Ok(SlopeReport {
        lambda_at,
        maximal_slope: normal_slope(curve, delta)?,
        stretch: normal_slope(curve, 1.0)?,
        dil_plus: bounds.dil_plus,
        dil_minus: bounds.dil_minus,
        thurston_lower_bound: bounds.thurston_lower_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reps::{FenchelNielsen, MarkedRepresentation};
    use crate::spectrum::{class_spectrum, class_spectrum_with, SpectrumOptions};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn opts() -> EstimatorOptions {
        EstimatorOptions::default()
    }

    fn series(f: impl Fn(f64) -> f64, t_max: f64) -> Vec<(f64, usize)> {
        (1..=(t_max * 4.0) as usize)
            .map(|i| i as f64 / 4.0)
            .map(|t| (t, f(t).floor() as usize))
            .collect()
    }

    fn curve_from(points: &[(f64, f64)]) -> CurveEstimate {
        let mut samples: Vec<CurveSample> = points
            .iter()
            .map(|&(x, y)| CurveSample {
                theta: y.atan2(x),
                r: x.hypot(y),
                stderr: 0.0,
                x,
                y,
                window: (0.0, 1.0),
            })
            .collect();
        samples.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        CurveEstimate { samples }
    }

    fn symmetric() -> &'static MarkedRepresentation {
        static R: OnceLock<MarkedRepresentation> = OnceLock::new();
        R.get_or_init(|| MarkedRepresentation::from_fenchel_nielsen(&FenchelNielsen::new([2.0; 3], [0.0; 3])).unwrap())
    }

    fn free_pair_spectra() -> &'static [PairSpectrum; 3] {
        static S: OnceLock<[PairSpectrum; 3]> = OnceLock::new();
        S.get_or_init(|| {
            let r1 = MarkedRepresentation::from_free_pair(3.0, 3.0, 4.0).unwrap();
            let r2 = MarkedRepresentation::from_free_pair(3.3, 3.7, 5.1).unwrap();
            let with = |w: (f64, f64), t: f64| {
                class_spectrum_with(
                    &r1,
                    &r2,
                    t,
                    &SpectrumOptions {
                        weights: w,
                        ..Default::default()
                    },
                )
                .unwrap()
            };
            [with((1.0, 1.0), 30.0), with((1.0, 0.0), 15.0), with((0.0, 1.0), 15.0)]
        })
    }

    #[test]
    fn pure_exponential_growth() {
        let g = growth_exponent(&series(|t| (0.5 * t).exp(), 30.0), 0.0, &opts()).unwrap();
        assert!((g.exponent - 0.5).abs() <= 0.02, "{g:?}");
        assert!(g.stderr < 0.02);
        assert_eq!(g.window.1, 30.0);
    }

    #[test]
    fn log_correction_removes_the_prefactor() {
        let s: Vec<_> = series(|t| 1e3 * (0.7 * t).exp() / t, 25.0)
            .into_iter()
            .filter(|p| p.0 >= 2.0)
            .collect();
        let g = growth_exponent(&s, KAPPA_CUMULATIVE, &opts()).unwrap();
        assert!((g.exponent - 0.7).abs() < 1e-3, "{g:?}");
        assert!(g.raw_exponent < g.corrected_exponent);
        let raw = growth_exponent(
            &s,
            KAPPA_CUMULATIVE,
            &EstimatorOptions {
                log_correction: false,
                ..opts()
            },
        )
        .unwrap();
        assert!((raw.exponent - g.raw_exponent).abs() < 1e-12);
        assert!(raw.exponent < 0.68);
    }

    #[test]
    fn counting_error_is_the_poisson_rate() {
        // for h w >> 1 the window law is nearly exponential with variance 1/h^2
        let g = growth_exponent(&series(|t| (t).exp(), 40.0), 0.0, &opts()).unwrap();
        let n = (40f64.exp() - 24f64.exp()).floor();
        let expected = 1.0 / n.sqrt();
        assert!(
            (g.counting_stderr / expected - 1.0).abs() < 1e-3,
            "{} vs {expected}",
            g.counting_stderr
        );
    }

    #[test]
    fn degenerate_series_are_rejected() {
        let constant: Vec<(f64, usize)> = (1..100).map(|i| (i as f64, 500)).collect();
        assert!(matches!(
            growth_exponent(&constant, 1.0, &opts()),
            Err(ManhattanError::InsufficientData(_))
        ));
        let small: Vec<(f64, usize)> = (1..100).map(|i| (i as f64, i / 10)).collect();
        assert!(matches!(
            growth_exponent(&small, 1.0, &opts()),
            Err(ManhattanError::InsufficientData(_))
        ));
        let decreasing: Vec<(f64, usize)> = (1..100).map(|i| (i as f64, 1000 - i)).collect();
        assert!(matches!(
            growth_exponent(&decreasing, 1.0, &opts()),
            Err(ManhattanError::InvalidInput(_))
        ));
        let sparse = vec![(10.0, 100), (20.0, 1000)];
        assert!(matches!(
            growth_exponent(&sparse, 1.0, &opts()),
            Err(ManhattanError::InsufficientData(_))
        ));
        assert!(growth_exponent(&[], 1.0, &opts()).is_err());
    }

    proptest! {
        #[test]
        fn exponent_is_homogeneous(h in 0.3f64..1.5, c in 0.5f64..3.0) {
            let base = series(|t| 10.0 * (h * t).exp(), 30.0 / h);
            let scaled: Vec<(f64, usize)> = base.iter().map(|&(t, n)| (c * t, n)).collect();
            let o = EstimatorOptions { log_correction: false, ..opts() };
            let g = growth_exponent(&base, 0.0, &o).unwrap();
            let gs = growth_exponent(&scaled, 0.0, &o).unwrap();
            prop_assert!((gs.exponent * c - g.exponent).abs() < 1e-9);
            prop_assert!((g.rescaled(1.0 / c).exponent - gs.exponent).abs() < 1e-9);
        }
    }

    #[test]
    fn theta_grids() {
        let c = chebyshev_thetas();
        assert_eq!(c.len(), 17);
        assert!((c[8] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!(c[0] > 0.05 && c[16] < FRAC_PI_2 - 0.05);
        let d = default_thetas();
        assert_eq!(d.len(), 23);
        assert!(d.contains(&0.0) && d.contains(&FRAC_PI_2));
    }

    #[test]
    fn straight_curve_invariants() {
        let pts: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 / 10.0, 1.0 - i as f64 / 10.0)).collect();
        let c = curve_from(&pts);
        assert!(c.chord_deviation() < 1e-12);
        let (x, _) = c.diagonal_point().unwrap();
        assert!((x - 0.5).abs() < 1e-12);
        assert!(c.convexity().iter().all(|k| k.defect < 1e-12));
        for x in [0.15, 0.5, 0.85] {
            assert!((normal_slope(&c, x).unwrap() - 1.0).abs() < 1e-9);
        }
        for lambda in [0.5f64, 1.0, 2.0] {
            // (x + lambda (1 - x)) / (1 + lambda) is minimised at an endpoint
            let expected = lambda.min(1.0) / (1.0 + lambda);
            assert!((band_bound(&c, lambda, 0.0) - expected).abs() < 1e-12);
            assert!(band_bound(&c, lambda, 0.1) >= band_bound(&c, lambda, 0.0));
        }
        assert!(c.distance_to((1.0, 0.0)) < 1e-12);
        assert!((c.distance_to((1.0, 1.0)) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn quadratic_curve_slopes_are_exact() {
        let pts: Vec<(f64, f64)> = (0..=20)
            .map(|i| i as f64 / 20.0)
            .map(|x| (x, (1.0 - x).powi(2)))
            .collect();
        let c = curve_from(&pts);
        for x in [0.1, 0.33, 0.5, 0.72] {
            let lambda = normal_slope(&c, x).unwrap();
            assert!((lambda - 1.0 / (2.0 * (1.0 - x))).abs() < 1e-9, "{x}: {lambda}");
        }
        assert!(matches!(normal_slope(&c, 0.0), Err(ManhattanError::OutOfRange { .. })));
        assert!(matches!(normal_slope(&c, 1.2), Err(ManhattanError::OutOfRange { .. })));
        assert!(c.convexity().iter().all(|k| k.defect < 1e-12));
    }

    #[test]
    fn concave_curve_is_flagged() {
        let pts: Vec<(f64, f64)> = (0..=10)
            .map(|i| i as f64 / 10.0)
            .map(|x| (x, (1.0 - x * x).sqrt()))
            .collect();
        let c = curve_from(&pts);
        assert!(c.convexity().iter().all(|k| k.defect > 0.0));
    }

    #[test]
    fn lambda_grid_is_log_spaced_inside_the_range() {
        let b = DilationBounds {
            dil_minus: 0.5,
            dil_plus: 2.0,
            thurston_lower_bound: 2f64.ln(),
        };
        let g = lambda_grid(&b, 9);
        assert_eq!(g.len(), 9);
        assert!((g[4] - 1.0).abs() < 1e-12);
        assert!(g[0] > 0.5 && g[8] < 2.0);
        assert!((g[0] * g[8] - 1.0).abs() < 1e-12);
        let flat = DilationBounds {
            dil_minus: 1.0,
            dil_plus: 1.0,
            thurston_lower_bound: 0.0,
        };
        assert_eq!(lambda_grid(&flat, 5), vec![1.0]);
    }

    #[test]
    fn identical_pair_curve_is_the_scaled_diagonal() {
        let s = class_spectrum(symmetric(), symmetric(), 16.0).unwrap();
        let c = curve_sample(&[&s], &chebyshev_thetas(), &opts()).unwrap();
        let r0 = c.samples[0].x + c.samples[0].y;
        for p in &c.samples {
            assert!((p.x + p.y - r0).abs() < 1e-9, "{p:?}");
        }
        for x in [0.2, 0.25, 0.3] {
            assert!((normal_slope(&c, x).unwrap() - 1.0).abs() < 1e-6);
        }
        let b = dilation_bounds(&s).unwrap();
        assert!((b.dil_minus - 1.0).abs() < 1e-9 && (b.dil_plus - 1.0).abs() < 1e-9);
        assert!(b.thurston_lower_bound < 1e-9);
        let d = delta_pair(&s, &opts()).unwrap();
        let (dx, _) = c.diagonal_point().unwrap();
        assert!((dx - d.exponent).abs() < 0.03, "{dx} vs {}", d.exponent);
    }

    #[test]
    fn distinct_free_pair_curve() {
        let [s, sx, sy] = free_pair_spectra();
        let single1 = single_exponent(sx, &opts()).unwrap();
        let thetas = default_thetas();
        let c = curve_sample(&[s, sx, sy], &thetas, &opts()).unwrap();
        assert_eq!(c.samples.len(), thetas.len());
        // endpoint of the curve at theta = 0 is the single exponent of the first surface
        let p0 = c.samples.iter().find(|p| p.theta == 0.0).unwrap();
        assert!((p0.x - single1.exponent).abs() <= opts().tol(p0.stderr + single1.stderr));
        let (lo, hi) = c.x_range();
        assert!(lo < 0.0 && hi > single1.exponent);
        let delta = delta_pair(s, &opts()).unwrap();
        let (dx, err) = c.diagonal_point().unwrap();
        assert!(
            (dx - delta.exponent).abs() <= opts().tol(err + delta.stderr),
            "{dx} vs {delta:?}"
        );
        let b = dilation_bounds(s).unwrap();
        // the second surface is longer on every class
        assert!(1.0 < b.dil_minus && b.dil_minus < b.dil_plus);
        let lambda = normal_slope(&c, delta.exponent).unwrap();
        assert!(lambda > b.dil_minus * 0.95 && lambda < b.dil_plus * 1.05);
    }

    #[test]
    fn band_and_correlation_inputs() {
        let [s, _, _] = free_pair_spectra();
        assert!(matches!(
            delta_slope(s, 1.0, 0.0, &opts()),
            Err(ManhattanError::InvalidInput(_))
        ));
        assert!(matches!(
            delta_slope(s, 100.0, 0.01, &opts()),
            Err(ManhattanError::EmptyBand { .. })
        ));
        assert!(matches!(
            correlation(s, 100.0, &opts()),
            Err(ManhattanError::OutOfRange { .. })
        ));
        let (lo, hi) = s.dilations();
        assert!(lo < hi);
        let mut ratios: Vec<f64> = s.entries().iter().map(|e| e.ratio()).collect();
        ratios.sort_by(f64::total_cmp);
        let center = ratios[ratios.len() / 2];
        let eps = default_band_width(s).unwrap();
        assert!(eps > 0.0 && eps < 1.0);
        let g = delta_slope(s, center, eps, &opts());
        assert!(g.is_ok(), "{g:?}");
        let m = correlation(s, center, &opts()).unwrap();
        assert!(m.exponent > 0.0);
        assert!(box_population(s, center).unwrap() > 0);
    }
}
