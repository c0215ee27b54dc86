//! The work behind each subcommand, returning text ready to write.

use cfhf_core::analysis::{analyze_lines, LambdaAnalysis};
use cfhf_core::fitting::{
    fit_b, fit_cf_aj, fit_refractive, predict_lines_exact, predict_lines_first_order, FitResult,
    TransitionDataset,
};
use cfhf_core::perturbation::delta_full;
use cfhf_core::spectra::{fold_degenerate, line_intensities, synthesize, transition_lines, uniform_grid, Spectrum};
use cfhf_core::{build_cf_hamiltonian, classify_levels, diagonalize, hf_levels_exact, CfLevels, HalfInt, Irrep};
use serde::Serialize;

use crate::config::{parse_transition, RunConfig};
use crate::error::{CliError, Result};
use crate::format::{num, Format};

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn unsupported(cmd: &str, fmt: Format) -> CliError {
    CliError::Usage(format!("{cmd} does not support --format {fmt}"))
}

fn cf_levels(cfg: &RunConfig) -> Result<CfLevels> {
    let sys = cfg.system()?;
    let h = build_cf_hamiltonian(&cfg.crystal_field, &sys)?;
    Ok(classify_levels(&diagonalize(&h)?, &sys)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: String,
    pub energy_cm1: f64,
    pub irrep: Irrep,
    pub degeneracy: usize,
    /// `⟨J_z⟩` of the `σ = +1` state; zero for singlets.
    pub jz: f64,
    /// `g_J ⟨J_z⟩` in Bohr magnetons.
    pub moment_mu_b: f64,
}

pub fn levels(cfg: &RunConfig) -> Result<Vec<LevelRow>> {
    Ok(cf_levels(cfg)?
        .levels()
        .iter()
        .map(|l| LevelRow {
            level: format!("8.{}", l.index),
            energy_cm1: l.energy,
            irrep: l.irrep,
            degeneracy: l.degeneracy,
            jz: l.jz_expect,
            moment_mu_b: l.magnetic_moment(cfg.spin.g_j),
        })
        .collect())
}

pub fn render_levels(rows: &[LevelRow], fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => Ok(json(&rows)),
        Format::Csv => {
            let mut out = String::from("level,energy_cm1,irrep,degeneracy,jz,moment_mu_b\n");
            for r in rows {
                out += &format!(
                    "{},{},{},{},{},{}\n",
                    r.level,
                    num(r.energy_cm1),
                    r.irrep,
                    r.degeneracy,
                    num(r.jz),
                    num(r.moment_mu_b)
                );
            }
            Ok(out)
        }
        Format::Text => Err(unsupported("levels", fmt)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HfRow {
    pub m_z: HalfInt,
    /// Exact diagonalization.
    pub energy_cm1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbative_cm1: Option<f64>,
}

/// Lines of one transition on the `σ = +1` branch. Lines between two
/// singlets are degenerate in `±m_z` and come out merged, labelled `|m_z|`.
pub fn hf_lines(cfg: &RunConfig, transition: &str, perturbative: bool) -> Result<Vec<HfRow>> {
    let (i, f) = parse_transition(transition).map_err(CliError::Usage)?;
    let sys = cfg.system()?;
    let hf = hf_levels_exact(&cfg.crystal_field, &cfg.hyperfine, &sys)?;
    let mut lines = transition_lines(&hf, i, f)?;
    if !hf.cf().level(i)?.is_doublet() && !hf.cf().level(f)?.is_doublet() {
        lines = fold_degenerate(&lines, 1e-9);
    }
    let levels = hf.cf();
    lines
        .iter()
        .map(|l| {
            let m = l.m_z.expect("resolved line");
            let perturbative_cm1 = if perturbative {
                let e = |n: usize| -> Result<f64> {
                    Ok(levels.level(n)?.energy + delta_full(n, 1, m, levels, &cfg.hyperfine)?)
                };
                Some(e(f)? - e(i)?)
            } else {
                None
            };
            Ok(HfRow {
                m_z: m,
                energy_cm1: l.energy,
                perturbative_cm1,
            })
        })
        .collect()
}

pub fn render_hf(rows: &[HfRow], fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => Ok(json(&rows)),
        Format::Csv => {
            let pert = rows.iter().any(|r| r.perturbative_cm1.is_some());
            let mut out = String::from("m_z,energy_cm1");
            if pert {
                out += ",perturbative_cm1,difference_cm1";
            }
            out.push('\n');
            for r in rows {
                out += &format!("{},{}", r.m_z, num(r.energy_cm1));
                if let Some(p) = r.perturbative_cm1 {
                    out += &format!(",{},{}", num(p), num(r.energy_cm1 - p));
                }
                out.push('\n');
            }
            Ok(out)
        }
        Format::Text => Err(unsupported("hf", fmt)),
    }
}

pub fn analyze(data: &TransitionDataset) -> Result<LambdaAnalysis> {
    let resolved: Vec<_> = data.rows.iter().filter(|r| r.m_z.is_some()).copied().collect();
    Ok(analyze_lines(&resolved)?)
}

pub fn render_analysis(a: &LambdaAnalysis, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => Ok(json(a)),
        Format::Text => {
            let mut out = String::new();
            for (k, (series, slope)) in a.series.iter().zip(&a.slopes).enumerate() {
                out += &format!("D{} (8.{}-8.{})\n", k + 1, series.n_init, series.n_final);
                out += "  m_z      D_cm1\n";
                for p in &series.points {
                    out += &format!("  {:<6}   {}\n", p.m_z.to_string(), num(p.value));
                }
                out += &format!("  slope    {} ± {}\n", num(slope.slope), num(slope.slope_err));
            }
            out += "\n";
            for (k, s) in a.s.iter().enumerate() {
                out += &format!("s{}       {} ± {}\n", k + 1, num(s.value), num(s.error));
            }
            for (name, e) in [("lambda1", a.lambda1), ("lambda2", a.lambda2), ("lambda3", a.lambda3)] {
                out += &format!("{name}  {} ± {}\n", num(e.value), num(e.error));
            }
            Ok(out)
        }
        Format::Csv => Err(unsupported("analyze", fmt)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    CfAj,
    B,
    RefIndex,
}

impl std::str::FromStr for FitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cf-aj" | "cf_aj" => Ok(FitMode::CfAj),
            "b" => Ok(FitMode::B),
            "refindex" => Ok(FitMode::RefIndex),
            _ => Err(format!("unknown fit mode {s:?} (cf-aj, b or refindex)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub observation: String,
    pub observed: f64,
    pub predicted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub mode: String,
    #[serde(flatten)]
    pub result: FitResult,
    pub reduced_chi2: f64,
    pub table: Vec<ResidualRow>,
}

fn residual_table(data: &TransitionDataset, residuals: &[f64]) -> Vec<ResidualRow> {
    let labels = data
        .rows
        .iter()
        .map(|r| {
            let t = format!("8.{}-8.{}", r.n_init, r.n_final);
            let label = match r.m_z {
                Some(m) => format!("{t} m_z={m}"),
                None => t,
            };
            (label, r.energy)
        })
        .chain(data.moments.iter().map(|m| (format!("jz:8.{}", m.level), m.jz)));
    labels
        .zip(residuals)
        .map(|((observation, observed), &residual)| ResidualRow {
            observation,
            observed,
            predicted: observed - residual,
            residual,
        })
        .collect()
}

pub fn fit_dataset(cfg: &RunConfig, data: &TransitionDataset, mode: FitMode) -> Result<FitReport> {
    let sys = cfg.system()?;
    let opts = &cfg.fit.options;
    let (name, result) = match mode {
        FitMode::CfAj => {
            let mask = cfg.fit.fixed_mask().map_err(CliError::Usage)?;
            let fit = fit_cf_aj(data, &cfg.crystal_field, cfg.hyperfine.a_j, mask, &sys, opts)?;
            ("cf-aj", fit)
        }
        FitMode::B => {
            let fit = fit_b(data, &cfg.crystal_field, cfg.hyperfine.a_j, cfg.fit.initial_b, &sys, opts)?;
            ("b", fit)
        }
        FitMode::RefIndex => return Err(CliError::Usage("refindex fits take a refractive-index dataset".into())),
    };
    Ok(FitReport {
        mode: name.into(),
        reduced_chi2: result.reduced_chi2(),
        table: residual_table(data, &result.residuals),
        result,
    })
}

pub fn fit_index(cfg: &RunConfig, points: &[(f64, f64)]) -> Result<FitReport> {
    let result = fit_refractive(points, &cfg.fit.refractive, &cfg.fit.options)?;
    let table = points
        .iter()
        .zip(&result.residuals)
        .map(|(&(nu, n), &residual)| ResidualRow {
            observation: format!("n({nu})"),
            observed: n,
            predicted: n - residual,
            residual,
        })
        .collect();
    Ok(FitReport {
        mode: "refindex".into(),
        reduced_chi2: result.reduced_chi2(),
        table,
        result,
    })
}

pub fn render_fit(r: &FitReport, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => Ok(json(r)),
        Format::Csv => {
            let mut out = String::from("name,value,error\n");
            for ((n, v), e) in r.result.names.iter().zip(&r.result.params).zip(&r.result.param_errors) {
                out += &format!("{n},{},{}\n", num(*v), num(*e));
            }
            Ok(out)
        }
        Format::Text => Err(unsupported("fit", fmt)),
    }
}

/// First-order predictions for a dataset at the config parameters.
pub fn predict_first_order(cfg: &RunConfig, data: &TransitionDataset) -> Result<Vec<f64>> {
    Ok(predict_lines_first_order(
        &cfg.crystal_field,
        cfg.hyperfine.a_j,
        &data.rows,
        &cfg.system()?,
    )?)
}

/// Exact predictions for a dataset at the config parameters.
pub fn predict_exact(cfg: &RunConfig, data: &TransitionDataset) -> Result<Vec<f64>> {
    let hf = hf_levels_exact(&cfg.crystal_field, &cfg.hyperfine, &cfg.system()?)?;
    Ok(predict_lines_exact(&hf, &data.rows)?)
}

/// Thermally weighted absorbance of the configured transitions.
pub fn synth(cfg: &RunConfig) -> Result<Spectrum> {
    let s = &cfg.spectrum;
    let hf = hf_levels_exact(&cfg.crystal_field, &cfg.hyperfine, &cfg.system()?)?;
    let mut lines = Vec::new();
    for t in &s.transitions {
        let (i, f) = parse_transition(t).map_err(CliError::Usage)?;
        lines.extend(line_intensities(&transition_lines(&hf, i, f)?, &hf, cfg.temperature, s.intensity)?);
    }
    let grid = uniform_grid(s.start, s.stop, s.points)?;
    Ok(synthesize(&lines, &s.line_shape(), &cfg.isotope, &grid)?)
}

pub fn render_spectrum(s: &Spectrum, fmt: Format) -> Result<String> {
    match fmt {
        Format::Json => Ok(json(s)),
        Format::Csv => {
            let mut out = String::from("wavenumber_cm1,absorbance\n");
            for (x, y) in s.grid().iter().zip(s.absorbance()) {
                out += &format!("{},{}\n", num(*x), num(*y));
            }
            Ok(out)
        }
        Format::Text => Err(unsupported("synth", fmt)),
    }
}
