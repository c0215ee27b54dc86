//! Transition lines between hyperfine levels and synthetic absorbance
//! spectra.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::angular::{build_jminus, build_jplus, build_jz};
use crate::error::{Error, Result};
use crate::hamiltonian::{matrix_element, HfLabel, HfLevels};
use crate::spin::HalfInt;

/// Boltzmann constant in cm⁻¹/K.
pub const K_B: f64 = 0.695035;

/// `FWHM / σ` of a Gaussian.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// One absorption line, measured or synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionLine {
    pub n_init: usize,
    pub n_final: usize,
    /// Conserved nuclear projection; `None` for a hyperfine-averaged line.
    pub m_z: Option<HalfInt>,
    /// cm⁻¹
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
}

impl TransitionLine {
    pub fn new(n_init: usize, n_final: usize, m_z: Option<HalfInt>, energy: f64) -> Self {
        TransitionLine {
            n_init,
            n_final,
            m_z,
            energy,
            uncertainty: None,
            intensity: None,
        }
    }

    pub fn with_uncertainty(mut self, sigma: f64) -> Self {
        self.uncertainty = Some(sigma);
        self
    }
}

/// Lines `8.n_init → 8.n_final` with `m_z` conserved, one per `m_z`,
/// ascending in `m_z`.
///
/// A line and its time-reversed copy `(σ, m_z) → (−σ, −m_z)` have the same
/// energy, so only the `σ = +1` member of a doublet is used; a doublet to
/// doublet line keeps `σ`.
pub fn transition_lines(hf: &HfLevels, n_init: usize, n_final: usize) -> Result<Vec<TransitionLine>> {
    hf.cf().level(n_init)?;
    hf.cf().level(n_final)?;
    hf.cf()
        .system()
        .mz_values()
        .into_iter()
        .map(|m| {
            let e0 = hf.get(n_init, 1, m)?.energy;
            let e1 = hf.get(n_final, 1, m)?.energy;
            Ok(TransitionLine::new(n_init, n_final, Some(m), e1 - e0))
        })
        .collect()
}

/// Merges lines of the same transition whose energies agree within `tol`
/// (e.g. `±m_z` pairs between two singlets). The merged line keeps the
/// smallest `|m_z|` label with the positive sign, and summed intensities.
pub fn fold_degenerate(lines: &[TransitionLine], tol: f64) -> Vec<TransitionLine> {
    let mut out: Vec<TransitionLine> = Vec::new();
    for line in lines {
        match out.iter_mut().find(|o| {
            o.n_init == line.n_init && o.n_final == line.n_final && (o.energy - line.energy).abs() <= tol
        }) {
            Some(o) => {
                if let (Some(a), Some(b)) = (o.m_z, line.m_z) {
                    o.m_z = Some(a.abs().min(b.abs()));
                }
                o.intensity = match (o.intensity, line.intensity) {
                    (Some(a), Some(b)) => Some(a + b),
                    (a, b) => a.or(b),
                };
            }
            None => out.push(*line),
        }
    }
    for o in &mut out {
        o.m_z = o.m_z.map(|m| m.abs());
    }
    out
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("temperature must be positive, got {t} K")));
    }
    Ok(())
}

/// Normalized thermal occupation of every hyperfine state.
pub fn boltzmann_weights(hf: &HfLevels, temperature: f64) -> Result<BTreeMap<HfLabel, f64>> {
    check_temperature(temperature)?;
    let e_min = hf.levels().iter().map(|l| l.energy).fold(f64::INFINITY, f64::min);
    let raw: Vec<(HfLabel, f64)> = hf
        .levels()
        .iter()
        .map(|l| (l.label(), (-(l.energy - e_min) / (K_B * temperature)).exp()))
        .collect();
    let z: f64 = raw.iter().map(|(_, w)| w).sum();
    Ok(raw.into_iter().map(|(l, w)| (l, w / z)).collect())
}

/// Thermal population of each crystal-field level (index `n − 1`), summed
/// over its hyperfine states.
pub fn level_populations(hf: &HfLevels, temperature: f64) -> Result<Vec<f64>> {
    let w = boltzmann_weights(hf, temperature)?;
    let mut pop = vec![0.0; hf.cf().len()];
    for (label, p) in w {
        pop[label.n - 1] += p;
    }
    Ok(pop)
}

/// Electronic factor multiplying the thermal weight of a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityModel {
    /// Every line has unit matrix element.
    #[default]
    Unit,
    /// `|⟨f|J_z|i⟩|²`
    Longitudinal,
    /// `|⟨f|J₊|i⟩|² + |⟨f|J₋|i⟩|²`
    Transverse,
}

/// Fills `intensity` of lines produced by [`transition_lines`] with the
/// initial-state population times the chosen matrix-element factor.
/// Both Kramers members of the initial state are counted.
pub fn line_intensities(
    lines: &[TransitionLine],
    hf: &HfLevels,
    temperature: f64,
    model: IntensityModel,
) -> Result<Vec<TransitionLine>> {
    let w = boltzmann_weights(hf, temperature)?;
    let sys = hf.cf().system();
    let jz = build_jz(sys.j)?.into_matrix();
    let jp = build_jplus(sys.j)?.into_matrix();
    let jm = build_jminus(sys.j)?.into_matrix();
    lines
        .iter()
        .map(|line| {
            let m = line
                .m_z
                .ok_or_else(|| Error::InvalidInput("intensities need hyperfine-resolved lines".into()))?;
            let init = hf.cf().state(line.n_init, 1)?;
            let fin = hf.cf().state(line.n_final, 1)?;
            let factor = match model {
                IntensityModel::Unit => 1.0,
                IntensityModel::Longitudinal => matrix_element(&fin.vector, &jz, &init.vector).norm_sqr(),
                IntensityModel::Transverse => {
                    matrix_element(&fin.vector, &jp, &init.vector).norm_sqr()
                        + matrix_element(&fin.vector, &jm, &init.vector).norm_sqr()
                }
            };
            let label = HfLabel::new(line.n_init, 1, m);
            let doublet = hf.cf().level(line.n_init)?.is_doublet();
            let mut pop = w.get(&label).copied().unwrap_or(0.0);
            if doublet {
                pop += w.get(&label.kramers_partner(true)).copied().unwrap_or(0.0);
            }
            Ok(TransitionLine {
                intensity: Some(pop * factor),
                ..*line
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakShape {
    #[default]
    Gaussian,
    Lorentzian,
}

/// A single line profile; `amplitude` is the peak height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    pub shape: PeakShape,
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
}

impl PeakModel {
    pub fn new(shape: PeakShape, center: f64, fwhm: f64, amplitude: f64) -> Result<Self> {
        if !(fwhm > 0.0 && fwhm.is_finite()) {
            return Err(Error::InvalidInput(format!("FWHM must be positive, got {fwhm}")));
        }
        if !center.is_finite() || !amplitude.is_finite() {
            return Err(Error::InvalidInput("non-finite peak parameter".into()));
        }
        Ok(PeakModel {
            shape,
            center,
            fwhm,
            amplitude,
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        let d = x - self.center;
        match self.shape {
            PeakShape::Gaussian => {
                let s = self.fwhm / GAUSSIAN_FWHM_PER_SIGMA;
                self.amplitude * (-0.5 * d * d / (s * s)).exp()
            }
            PeakShape::Lorentzian => {
                let g = 0.5 * self.fwhm;
                self.amplitude * g * g / (d * d + g * g)
            }
        }
    }

    /// Integral over the whole real line.
    pub fn area(&self) -> f64 {
        match self.shape {
            PeakShape::Gaussian => self.amplitude * self.fwhm * 0.5 * (PI / LN_2).sqrt(),
            PeakShape::Lorentzian => self.amplitude * 0.5 * PI * self.fwhm,
        }
    }
}

/// Satellite line from Ho ions with one ⁶Li neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsotopeConfig {
    pub enabled: bool,
    /// cm⁻¹, added to the main line position.
    pub splitting: f64,
    /// Satellite height over main-line height.
    pub satellite_ratio: f64,
}

impl Default for IsotopeConfig {
    fn default() -> Self {
        IsotopeConfig {
            enabled: false,
            splitting: 0.0098,
            satellite_ratio: 0.33,
        }
    }
}

impl IsotopeConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.splitting.is_finite() || !(self.satellite_ratio >= 0.0 && self.satellite_ratio.is_finite()) {
            return Err(Error::InvalidInput("isotope splitting must be finite and ratio ≥ 0".into()));
        }
        Ok(())
    }
}

/// Profile applied to every synthesized line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineShape {
    pub shape: PeakShape,
    pub fwhm: f64,
}

/// Absorbance `log₁₀(I₀/I)` sampled on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    grid: Vec<f64>,
    absorbance: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: Vec<f64>, absorbance: Vec<f64>) -> Result<Self> {
        if grid.len() != absorbance.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: absorbance.len(),
            });
        }
        check_grid(&grid)?;
        Ok(Spectrum { grid, absorbance })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn absorbance(&self) -> &[f64] {
        &self.absorbance
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Trapezoidal integral.
    pub fn integrate(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.absorbance.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty wavenumber grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be finite and strictly ascending".into()));
    }
    Ok(())
}

/// `n` equally spaced points from `start` to `stop` inclusive.
pub fn uniform_grid(start: f64, stop: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(stop > start) {
        return Err(Error::InvalidInput(format!("bad grid [{start}, {stop}] with {n} points")));
    }
    let step = (stop - start) / (n - 1) as f64;
    Ok((0..n).map(|k| start + step * k as f64).collect())
}

/// Peaks for `lines` (height = intensity, or 1), each followed by its
/// isotope satellite when enabled.
pub fn line_peaks(lines: &[TransitionLine], shape: &LineShape, iso: &IsotopeConfig) -> Result<Vec<PeakModel>> {
    iso.validate()?;
    let mut peaks = Vec::with_capacity(lines.len() * 2);
    for line in lines {
        let height = line.intensity.unwrap_or(1.0);
        if height < 0.0 {
            return Err(Error::InvalidInput(format!("negative intensity {height}")));
        }
        peaks.push(PeakModel::new(shape.shape, line.energy, shape.fwhm, height)?);
        if iso.enabled {
            peaks.push(PeakModel::new(
                shape.shape,
                line.energy + iso.splitting,
                shape.fwhm,
                height * iso.satellite_ratio,
            )?);
        }
    }
    Ok(peaks)
}

/// Sum of peak profiles on `grid`.
pub fn render(peaks: &[PeakModel], grid: &[f64]) -> Result<Spectrum> {
    check_grid(grid)?;
    let absorbance = grid.iter().map(|&x| peaks.iter().map(|p| p.value(x)).sum()).collect();
    Ok(Spectrum {
        grid: grid.to_vec(),
        absorbance,
    })
}

/// Absorbance spectrum of `lines` on `grid`.
pub fn synthesize(lines: &[TransitionLine], shape: &LineShape, iso: &IsotopeConfig, grid: &[f64]) -> Result<Spectrum> {
    if !(shape.fwhm > 0.0 && shape.fwhm.is_finite()) {
        return Err(Error::InvalidInput(format!("FWHM must be positive, got {}", shape.fwhm)));
    }
    render(&line_peaks(lines, shape, iso)?, grid)
}
