//! Inverse analysis of measured line lists and spectra: neighbour
//! differences `D_i(m_z)`, their slopes, the `λ_n` estimators, and peak
//! fitting.
//!
//! The difference series are `D(m_z) = E(m_z + 1) − E(m_z)` for the
//! transitions 8.2→8.3 (`D₁`), 8.1→8.2 (`D₂`) and 8.1→8.3 (`D₃`). With
//! `δ_n ≈ λ_n m_z²/2 + …` their slopes are `λ₂ − λ₁`, `λ₃ − λ₁` and
//! `λ₃ − λ₂`, and `λ₂ + λ₃ = −2λ₁` closes the system.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::lm::{minimize, LmOptions, Problem};
use crate::spectra::{PeakModel, PeakShape, Spectrum, TransitionLine};
use crate::spin::HalfInt;

/// A value with its one-standard-deviation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferencePoint {
    /// Lower `m_z` of the neighbouring pair.
    pub m_z: HalfInt,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSeries {
    pub n_init: usize,
    pub n_final: usize,
    pub points: Vec<DifferencePoint>,
}

impl DifferenceSeries {
    /// `1`, `2` or `3` for the 8.2→8.3, 8.1→8.2 and 8.1→8.3 series.
    pub fn which(&self) -> Option<u8> {
        match (self.n_init, self.n_final) {
            (2, 3) => Some(1),
            (1, 2) => Some(2),
            (1, 3) => Some(3),
            _ => None,
        }
    }

    pub fn m_values(&self) -> Vec<HalfInt> {
        self.points.iter().map(|p| p.m_z).collect()
    }
}

/// `D(m_z) = E(m_z + 1) − E(m_z)` over a complete `−I … +I` ladder of one
/// transition.
pub fn difference_series(lines: &[TransitionLine]) -> Result<DifferenceSeries> {
    let first = lines
        .first()
        .ok_or_else(|| Error::InvalidInput("no lines for difference series".into()))?;
    let mut pts: Vec<(HalfInt, f64, Option<f64>)> = Vec::with_capacity(lines.len());
    for l in lines {
        if (l.n_init, l.n_final) != (first.n_init, first.n_final) {
            return Err(Error::InvalidInput(format!(
                "mixed transitions 8.{}-8.{} and 8.{}-8.{}",
                first.n_init, first.n_final, l.n_init, l.n_final
            )));
        }
        let m = l
            .m_z
            .ok_or_else(|| Error::InvalidInput("difference series needs hyperfine-resolved lines".into()))?;
        pts.push((m, l.energy, l.uncertainty));
    }
    pts.sort_by_key(|p| p.0);
    if let Some(w) = pts.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidInput(format!("duplicate m_z = {}", w[0].0)));
    }
    let top = pts.last().unwrap().0;
    let complete = pts.len() >= 2
        && pts[0].0 == -top
        && pts.windows(2).all(|w| w[1].0.twice() - w[0].0.twice() == 2);
    if !complete {
        let have: Vec<String> = pts.iter().map(|p| p.0.to_string()).collect();
        return Err(Error::InvalidInput(format!(
            "m_z values [{}] are not a complete ladder −I … +I",
            have.join(", ")
        )));
    }
    let points = pts
        .windows(2)
        .map(|w| DifferencePoint {
            m_z: w[0].0,
            value: w[1].1 - w[0].1,
            sigma: match (w[0].2, w[1].2) {
                (Some(a), Some(b)) => Some(a.hypot(b)),
                _ => None,
            },
        })
        .collect();
    Ok(DifferenceSeries {
        n_init: first.n_init,
        n_final: first.n_final,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// cm⁻¹ per unit `m_z`
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
}

/// Straight line through the series, weighted by the point uncertainties
/// when every point has one. Errors come from the regression covariance
/// scaled by the residual variance, so a perfect line has zero error.
pub fn fit_slope(series: &DifferenceSeries) -> Result<SlopeFit> {
    let n = series.points.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("slope fit needs at least 3 points, got {n}")));
    }
    let weighted = series.points.iter().all(|p| p.sigma.is_some_and(|s| s > 0.0));
    let mut ata = Matrix2::zeros();
    let mut aty = Vector2::zeros();
    for p in &series.points {
        let w = if weighted { p.sigma.unwrap().powi(-2) } else { 1.0 };
        let row = Vector2::new(1.0, p.m_z.value());
        ata += row * row.transpose() * w;
        aty += row * p.value * w;
    }
    let inv = ata
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("degenerate abscissae in slope fit".into()))?;
    let c = inv * aty;
    let chi2: f64 = series
        .points
        .iter()
        .map(|p| {
            let w = if weighted { p.sigma.unwrap().powi(-2) } else { 1.0 };
            w * (p.value - c[0] - c[1] * p.m_z.value()).powi(2)
        })
        .sum();
    let cov = inv * (chi2 / (n - 2) as f64);
    Ok(SlopeFit {
        slope: c[1],
        intercept: c[0],
        slope_err: cov[(1, 1)].max(0.0).sqrt(),
        intercept_err: cov[(0, 0)].max(0.0).sqrt(),
    })
}

fn same_grid(a: &DifferenceSeries, b: &DifferenceSeries) -> Result<()> {
    if a.m_values() != b.m_values() {
        return Err(Error::InvalidInput(format!(
            "difference series 8.{}-8.{} and 8.{}-8.{} use different m_z grids",
            a.n_init, a.n_final, b.n_init, b.n_final
        )));
    }
    Ok(())
}

/// `λ₁ = −(slope(D₂) + slope(D₃))/4`.
pub fn extract_lambda1(d2: &DifferenceSeries, d3: &DifferenceSeries) -> Result<Estimate> {
    same_grid(d2, d3)?;
    let (s2, s3) = (fit_slope(d2)?, fit_slope(d3)?);
    Ok(Estimate {
        value: -(s2.slope + s3.slope) / 4.0,
        error: s2.slope_err.hypot(s3.slope_err) / 4.0,
    })
}

/// `λ₂ = (slope(D₂) + slope(D₃) − 2 slope(D₁))/4` and
/// `λ₃ = (slope(D₂) + slope(D₃) + 2 slope(D₁))/4`.
pub fn extract_lambda23(
    d1: &DifferenceSeries,
    d2: &DifferenceSeries,
    d3: &DifferenceSeries,
) -> Result<(Estimate, Estimate)> {
    same_grid(d1, d2)?;
    same_grid(d2, d3)?;
    let (s1, s2, s3) = (fit_slope(d1)?, fit_slope(d2)?, fit_slope(d3)?);
    let base = s2.slope + s3.slope;
    let error = (s2.slope_err.powi(2) + s3.slope_err.powi(2) + 4.0 * s1.slope_err.powi(2)).sqrt() / 4.0;
    Ok((
        Estimate {
            value: (base - 2.0 * s1.slope) / 4.0,
            error,
        },
        Estimate {
            value: (base + 2.0 * s1.slope) / 4.0,
            error,
        },
    ))
}

/// Everything derived from the three hyperfine-resolved transition families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaAnalysis {
    /// `D₁`, `D₂`, `D₃`.
    pub series: [DifferenceSeries; 3],
    pub slopes: [SlopeFit; 3],
    /// `s_i = −slope(D_i)`, the sign in which published slopes are quoted.
    pub s: [Estimate; 3],
    pub lambda1: Estimate,
    pub lambda2: Estimate,
    pub lambda3: Estimate,
}

/// Splits `lines` into the 8.2→8.3, 8.1→8.2 and 8.1→8.3 families (other
/// rows are ignored) and runs the full extraction.
pub fn analyze_lines(lines: &[TransitionLine]) -> Result<LambdaAnalysis> {
    let family = |a: usize, b: usize| -> Result<DifferenceSeries> {
        let rows: Vec<TransitionLine> = lines
            .iter()
            .filter(|l| (l.n_init, l.n_final) == (a, b) && l.m_z.is_some())
            .copied()
            .collect();
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!("no hyperfine-resolved 8.{a}-8.{b} lines")));
        }
        difference_series(&rows)
    };
    let series = [family(2, 3)?, family(1, 2)?, family(1, 3)?];
    let slopes = [fit_slope(&series[0])?, fit_slope(&series[1])?, fit_slope(&series[2])?];
    let s = slopes.map(|f| Estimate {
        value: -f.slope,
        error: f.slope_err,
    });
    let lambda1 = extract_lambda1(&series[1], &series[2])?;
    let (lambda2, lambda3) = extract_lambda23(&series[0], &series[1], &series[2])?;
    Ok(LambdaAnalysis {
        series,
        slopes,
        s,
        lambda1,
        lambda2,
        lambda3,
    })
}

/// Best-fit peaks with one-sigma errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// Ascending in center.
    pub peaks: Vec<PeakModel>,
    pub errors: Vec<PeakErrors>,
    pub shared_fwhm: bool,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakErrors {
    pub center: f64,
    pub amplitude: f64,
    pub fwhm: f64,
}

fn smooth3(y: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(y.len() - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Full width at half maximum around index `k`, linearly interpolated.
fn half_width(x: &[f64], y: &[f64], k: usize) -> f64 {
    let half = 0.5 * y[k];
    let mut l = k;
    while l > 0 && y[l] > half {
        l -= 1;
    }
    let mut r = k;
    while r + 1 < y.len() && y[r] > half {
        r += 1;
    }
    let cross = |a: usize, b: usize| {
        if (y[b] - y[a]).abs() < f64::MIN_POSITIVE {
            x[a]
        } else {
            x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a])
        }
    };
    let left = if y[l] <= half { cross(l, l + 1) } else { x[l] };
    let right = if y[r] <= half { cross(r, r - 1) } else { x[r] };
    right - left
}

/// Starting peaks: the `n` highest local maxima of the 3-point smoothed
/// spectrum. When there are fewer maxima than peaks, shoulders are added at
/// the strongest maxima of the negative second difference that are at least
/// half a width away from the peaks already placed. The width is the
/// half-maximum width of the tallest peak.
pub fn initial_peaks(spectrum: &Spectrum, n_peaks: usize, shape: PeakShape) -> Result<Vec<PeakModel>> {
    let x = spectrum.grid();
    let y = spectrum.absorbance();
    if x.len() < 5 {
        return Err(Error::InvalidInput("spectrum too short for peak fitting".into()));
    }
    let s = smooth3(y);
    let local_maxima = |v: &[f64]| -> Vec<usize> {
        let mut idx: Vec<usize> = (1..v.len() - 1).filter(|&k| v[k] > v[k - 1] && v[k] >= v[k + 1]).collect();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        idx
    };
    let mut chosen = local_maxima(&s);
    chosen.truncate(n_peaks);
    let tallest = *chosen
        .first()
        .ok_or_else(|| Error::InvalidInput("spectrum has no local maximum".into()))?;
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let span = x[x.len() - 1] - x[0];
    let fwhm = half_width(x, y, tallest).clamp(step, span);

    if chosen.len() < n_peaks {
        let mut curvature = vec![0.0; s.len()];
        for k in 1..s.len() - 1 {
            curvature[k] = 2.0 * s[k] - s[k - 1] - s[k + 1];
        }
        let curvature = smooth3(&curvature);
        for k in local_maxima(&curvature) {
            if chosen.len() == n_peaks {
                break;
            }
            if curvature[k] > 0.0 && chosen.iter().all(|&c| (x[c] - x[k]).abs() > 0.5 * fwhm) {
                chosen.push(k);
            }
        }
    }
    let mut peaks = chosen
        .iter()
        .map(|&k| PeakModel::new(shape, x[k], fwhm, y[k]))
        .collect::<Result<Vec<_>>>()?;
    // Unresolved blends: split the tallest peak symmetrically.
    while peaks.len() < n_peaks {
        let top = peaks[0];
        let offset = 0.25 * fwhm / (n_peaks - peaks.len()) as f64;
        let lo = (top.center - offset).max(x[0]);
        let hi = (top.center + offset).min(x[x.len() - 1]);
        peaks[0] = PeakModel::new(shape, lo, fwhm, 0.5 * top.amplitude)?;
        peaks.push(PeakModel::new(shape, hi, fwhm, 0.5 * top.amplitude)?);
    }
    Ok(peaks)
}

/// Nonlinear least-squares fit of `n_peaks` profiles to `spectrum`, optionally
/// with one shared width. Errors are scaled by the residual variance.
pub fn fit_peaks(
    spectrum: &Spectrum,
    n_peaks: usize,
    shape: PeakShape,
    shared_fwhm: bool,
    opts: &LmOptions,
) -> Result<PeakFit> {
    if n_peaks == 0 {
        return Err(Error::InvalidInput("n_peaks must be at least 1".into()));
    }
    let init = initial_peaks(spectrum, n_peaks, shape)?;
    let x = spectrum.grid().to_vec();
    let y = spectrum.absorbance().to_vec();
    let (lo, hi) = (x[0], x[x.len() - 1]);
    let step = (hi - lo) / (x.len() - 1) as f64;
    let span = hi - lo;
    let y_max = y.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let mut names = Vec::new();
    let mut x0 = Vec::new();
    let (mut lower, mut upper, mut scales) = (Vec::new(), Vec::new(), Vec::new());
    for (k, p) in init.iter().enumerate() {
        names.extend([format!("center{k}"), format!("amplitude{k}")]);
        x0.extend([p.center, p.amplitude]);
        lower.extend([lo, 0.0]);
        upper.extend([hi, f64::INFINITY]);
        scales.extend([span, y_max]);
        if !shared_fwhm {
            names.push(format!("fwhm{k}"));
            x0.push(p.fwhm);
            lower.push(step);
            upper.push(span);
            scales.push(p.fwhm);
        }
    }
    if shared_fwhm {
        names.push("fwhm".into());
        x0.push(init[0].fwhm);
        lower.push(step);
        upper.push(span);
        scales.push(init[0].fwhm);
    }
    let per = if shared_fwhm { 2 } else { 3 };
    let unpack = move |v: &[f64]| -> Vec<PeakModel> {
        (0..n_peaks)
            .map(|k| PeakModel {
                shape,
                center: v[per * k],
                amplitude: v[per * k + 1],
                fwhm: if shared_fwhm { v[v.len() - 1] } else { v[per * k + 2] },
            })
            .collect()
    };
    let (xr, yr) = (x.clone(), y.clone());
    let problem = Problem::new(names, move |v: &[f64]| {
        let peaks = unpack(v);
        Ok(xr
            .iter()
            .zip(&yr)
            .map(|(&xi, &yi)| yi - peaks.iter().map(|p| p.value(xi)).sum::<f64>())
            .collect())
    })
    .with_scales(scales)
    .with_bounds(lower, upper);
    let out = minimize(&problem, &x0, opts)?;

    let dof = x.len().saturating_sub(out.x.len());
    let scale = if dof > 0 { out.chi2 / dof as f64 } else { 0.0 };
    let cov: DMatrix<f64> = out.normal_inverse * scale;
    let err = |i: usize| cov[(i, i)].max(0.0).sqrt();
    let mut pairs: Vec<(PeakModel, PeakErrors)> = unpack(&out.x)
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let fwhm_idx = if shared_fwhm { out.x.len() - 1 } else { per * k + 2 };
            (
                p,
                PeakErrors {
                    center: err(per * k),
                    amplitude: err(per * k + 1),
                    fwhm: err(fwhm_idx),
                },
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.center.total_cmp(&b.0.center));
    Ok(PeakFit {
        peaks: pairs.iter().map(|p| p.0).collect(),
        errors: pairs.iter().map(|p| p.1).collect(),
        shared_fwhm,
        chi2: out.chi2,
        dof,
        iterations: out.iterations,
    })
}
