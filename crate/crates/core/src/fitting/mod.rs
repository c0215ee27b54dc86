//! Weighted least-squares fits of crystal-field and hyperfine constants to
//! transition energies, and of the refractive-index pole model.

pub mod lm;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    build_cf_hamiltonian, classify_levels, diagonalize, hf_levels_exact, CfLevels, CfParameters, HfLevels,
    HyperfineConstants,
};
use crate::spectra::TransitionLine;
use crate::spin::SpinSystem;
use lm::{minimize, LmOptions, LmOutcome, Problem};

/// Pseudo-observation of `⟨8.n^+|J_z|8.n^+⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstraint {
    pub level: usize,
    pub jz: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub source: Option<String>,
    /// K
    pub temperature: Option<f64>,
    /// Holmium concentration, fraction of Y sites.
    pub doping: Option<f64>,
}

/// Measured lines plus optional moment constraints. A row with `m_z = None`
/// is a hyperfine-averaged crystal-field energy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub rows: Vec<TransitionLine>,
    #[serde(default)]
    pub moments: Vec<MomentConstraint>,
    #[serde(default)]
    pub metadata: DatasetMetadata,
}

impl TransitionDataset {
    pub fn new(rows: Vec<TransitionLine>) -> Self {
        TransitionDataset {
            rows,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len() + self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct `(n_init, n_final)` pairs in first-seen order.
    pub fn transitions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !out.contains(&(r.n_init, r.n_final)) {
                out.push((r.n_init, r.n_final));
            }
        }
        out
    }

    /// Row uncertainties followed by moment uncertainties.
    fn sigmas(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for (k, r) in self.rows.iter().enumerate() {
            match r.uncertainty {
                Some(s) if s > 0.0 && s.is_finite() => out.push(s),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "row {} (8.{}-8.{}) needs a positive uncertainty",
                        k + 1,
                        r.n_init,
                        r.n_final
                    )))
                }
            }
        }
        for m in &self.moments {
            if !(m.sigma > 0.0 && m.sigma.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "moment constraint on 8.{} needs a positive uncertainty",
                    m.level
                )));
            }
            out.push(m.sigma);
        }
        Ok(out)
    }

    /// Copy with rows and moments in a fixed order, plus the permutation
    /// mapping canonical positions back to the caller's order. Fitting the
    /// canonical copy makes results independent of row order.
    fn canonical(&self) -> (TransitionDataset, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        let key = |r: &TransitionLine| (r.n_init, r.n_final, r.m_z.map(|m| m.twice()));
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&self.rows[a], &self.rows[b]);
            key(ra)
                .cmp(&key(rb))
                .then(ra.energy.total_cmp(&rb.energy))
                .then(ra.uncertainty.unwrap_or(0.0).total_cmp(&rb.uncertainty.unwrap_or(0.0)))
        });
        let mut midx: Vec<usize> = (0..self.moments.len()).collect();
        midx.sort_by(|&a, &b| {
            let (ma, mb) = (&self.moments[a], &self.moments[b]);
            ma.level.cmp(&mb.level).then(ma.jz.total_cmp(&mb.jz)).then(ma.sigma.total_cmp(&mb.sigma))
        });
        let data = TransitionDataset {
            rows: idx.iter().map(|&k| self.rows[k]).collect(),
            moments: midx.iter().map(|&k| self.moments[k]).collect(),
            metadata: self.metadata.clone(),
        };
        let n = self.rows.len();
        idx.extend(midx.into_iter().map(|k| n + k));
        (data, idx)
    }

    fn observed(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.energy)
            .chain(self.moments.iter().map(|m| m.jz))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub param_errors: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    /// `observed − predicted`, one per row (moment rows last).
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// True when the covariance was multiplied by `χ²/dof` because the data
    /// carry no uncertainties of their own.
    pub covariance_scaled: bool,
}

impl FitResult {
    fn from_outcome(names: Vec<String>, out: &LmOutcome, residuals: Vec<f64>, scaled: bool) -> Self {
        let dof = residuals.len().saturating_sub(out.x.len());
        let factor = if scaled && dof > 0 { out.chi2 / dof as f64 } else { 1.0 };
        let cov: DMatrix<f64> = &out.normal_inverse * factor;
        let cov = (&cov + cov.transpose()) * 0.5;
        let n = out.x.len();
        FitResult {
            names,
            params: out.x.clone(),
            covariance: (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect(),
            param_errors: (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
            chi2: out.chi2,
            dof,
            residuals,
            iterations: out.iterations,
            covariance_scaled: scaled,
        }
    }

    // `order[k]` is the caller's position of canonical row `k`.
    fn reorder(mut self, order: &[usize]) -> Self {
        let mut res = vec![0.0; self.residuals.len()];
        for (k, &dst) in order.iter().enumerate() {
            res[dst] = self.residuals[k];
        }
        self.residuals = res;
        self
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.index(name).map(|k| self.params[k])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|k| self.param_errors[k])
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }
}

fn cf_levels(p: &CfParameters, sys: &SpinSystem) -> Result<CfLevels> {
    classify_levels(&diagonalize(&build_cf_hamiltonian(p, sys)?)?, sys)
}

fn plus_jz(levels: &CfLevels, n: usize) -> Result<f64> {
    let level = levels.level(n)?;
    Ok(if level.is_doublet() { level.jz_expect } else { 0.0 })
}

fn predict_first_order(levels: &CfLevels, a_j: f64, rows: &[TransitionLine]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let e = levels.level(r.n_final)?.energy - levels.level(r.n_init)?.energy;
            Ok(match r.m_z {
                Some(m) => e + a_j * (plus_jz(levels, r.n_final)? - plus_jz(levels, r.n_init)?) * m.value(),
                // The linear shift averages to zero over the ladder.
                None => e,
            })
        })
        .collect()
}

/// Crystal-field transition energy plus the first-order shift
/// `A_J (⟨J_z⟩_final − ⟨J_z⟩_init) m_z` on the `σ = +1` branch.
pub fn predict_lines_first_order(
    p: &CfParameters,
    a_j: f64,
    rows: &[TransitionLine],
    sys: &SpinSystem,
) -> Result<Vec<f64>> {
    p.validate()?;
    predict_first_order(&cf_levels(p, sys)?, a_j, rows)
}

/// Transition energies from the full electron-nuclear spectrum; averaged
/// rows take the mean over `m_z`.
pub fn predict_lines_exact(hf: &HfLevels, rows: &[TransitionLine]) -> Result<Vec<f64>> {
    let mzs = hf.cf().system().mz_values();
    let line = |r: &TransitionLine, m| -> Result<f64> { Ok(hf.get(r.n_final, 1, m)?.energy - hf.get(r.n_init, 1, m)?.energy) };
    rows.iter()
        .map(|r| {
            hf.cf().level(r.n_init)?;
            hf.cf().level(r.n_final)?;
            match r.m_z {
                Some(m) => line(r, m),
                None => {
                    let sum = mzs.iter().map(|&m| line(r, m)).sum::<Result<f64>>()?;
                    Ok(sum / mzs.len() as f64)
                }
            }
        })
        .collect()
}

/// Names of the fit vector: the seven crystal-field parameters then `a_j`.
pub const CF_AJ_NAMES: [&str; 8] = ["b20", "b40", "b44", "b4m4", "b60", "b64", "b6m4", "a_j"];

/// `true` = held fixed. `B_4^{-4}` is fixed by default.
pub const DEFAULT_FIXED: [bool; 8] = [false, false, false, true, false, false, false, false];

// Finite-difference floor for parameters that start at zero.
const CF_AJ_SCALES: [f64; 8] = [1e-2, 1e-4, 1e-3, 1e-4, 1e-7, 1e-5, 1e-5, 1e-3];

/// Simultaneous fit of the crystal-field parameters and `A_J` with the
/// first-order hyperfine model. The covariance is `(JᵀWJ)⁻¹` without
/// rescaling.
pub fn fit_cf_aj(
    data: &TransitionDataset,
    initial: &CfParameters,
    a_j: f64,
    fixed: [bool; 8],
    sys: &SpinSystem,
    opts: &LmOptions,
) -> Result<FitResult> {
    data.sigmas()?;
    let (canon, order) = data.canonical();
    fit_cf_aj_ordered(&canon, initial, a_j, fixed, sys, opts).map(|f| f.reorder(&order))
}

fn fit_cf_aj_ordered(
    data: &TransitionDataset,
    initial: &CfParameters,
    a_j: f64,
    fixed: [bool; 8],
    sys: &SpinSystem,
    opts: &LmOptions,
) -> Result<FitResult> {
    initial.validate()?;
    let sigmas = data.sigmas()?;
    let observed = data.observed();
    let mut start = [0.0; 8];
    start[..7].copy_from_slice(&initial.to_array());
    start[7] = a_j;
    let free: Vec<usize> = (0..8).filter(|&k| !fixed[k]).collect();
    if free.is_empty() {
        return Err(Error::InvalidInput("all parameters are fixed".into()));
    }
    if data.len() <= free.len() {
        return Err(Error::InvalidInput(format!(
            "{} observations cannot determine {} free parameters",
            data.len(),
            free.len()
        )));
    }

    let full = |x: &[f64]| -> [f64; 8] {
        let mut v = start;
        for (k, &i) in free.iter().enumerate() {
            v[i] = x[k];
        }
        v
    };
    let predict = |v: [f64; 8]| -> Result<Vec<f64>> {
        let p = CfParameters::from_array(v[..7].try_into().expect("seven parameters"));
        let levels = cf_levels(&p, sys)?;
        let mut out = predict_first_order(&levels, v[7], &data.rows)?;
        for m in &data.moments {
            out.push(plus_jz(&levels, m.level)?);
        }
        Ok(out)
    };
    let names: Vec<String> = free.iter().map(|&i| CF_AJ_NAMES[i].to_string()).collect();
    let x0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
    let scales: Vec<f64> = free.iter().map(|&i| CF_AJ_SCALES[i]).collect();
    let problem = Problem::new(names.clone(), |x: &[f64]| {
        let pred = predict(full(x)).map_err(|e| Error::Infeasible(e.to_string()))?;
        Ok(weighted(&observed, &pred, &sigmas))
    })
    .with_scales(scales);
    let out = minimize(&problem, &x0, opts)?;
    let pred = predict(full(&out.x))?;
    Ok(FitResult::from_outcome(names, &out, raw(&observed, &pred), false))
}

/// One-parameter fit of the quadrupole constant with the crystal field and
/// `A_J` held fixed, predicting every line from the full electron-nuclear
/// spectrum.
pub fn fit_b(
    data: &TransitionDataset,
    p: &CfParameters,
    a_j: f64,
    initial_b: f64,
    sys: &SpinSystem,
    opts: &LmOptions,
) -> Result<FitResult> {
    data.sigmas()?;
    let (canon, order) = data.canonical();
    fit_b_ordered(&canon, p, a_j, initial_b, sys, opts).map(|f| f.reorder(&order))
}

fn fit_b_ordered(
    data: &TransitionDataset,
    p: &CfParameters,
    a_j: f64,
    initial_b: f64,
    sys: &SpinSystem,
    opts: &LmOptions,
) -> Result<FitResult> {
    p.validate()?;
    if !data.moments.is_empty() {
        return Err(Error::InvalidInput("moment constraints do not depend on B".into()));
    }
    let sigmas = data.sigmas()?;
    let observed = data.observed();
    if data.len() < 2 {
        return Err(Error::InvalidInput("need at least two lines to fit B".into()));
    }
    let predict = |b: f64| -> Result<Vec<f64>> {
        let hf = hf_levels_exact(p, &HyperfineConstants::new(a_j, b), sys)?;
        predict_lines_exact(&hf, &data.rows)
    };
    let names = vec!["b_quad".to_string()];
    let problem = Problem::new(names.clone(), |x: &[f64]| {
        let pred = predict(x[0]).map_err(|e| Error::Infeasible(e.to_string()))?;
        Ok(weighted(&observed, &pred, &sigmas))
    })
    .with_scales(vec![1e-2]);
    let out = minimize(&problem, &[initial_b], opts)?;
    let pred = predict(out.x[0])?;
    Ok(FitResult::from_outcome(names, &out, raw(&observed, &pred), false))
}

fn weighted(obs: &[f64], pred: &[f64], sigma: &[f64]) -> Vec<f64> {
    obs.iter().zip(pred).zip(sigma).map(|((o, p), s)| (o - p) / s).collect()
}

fn raw(obs: &[f64], pred: &[f64]) -> Vec<f64> {
    obs.iter().zip(pred).map(|(o, p)| o - p).collect()
}

/// `n(ν̃) = a/(ν̃ − ν̃₀) + c`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefractiveModel {
    /// cm⁻¹
    pub a: f64,
    /// cm⁻¹
    pub nu0: f64,
    pub c: f64,
}

impl RefractiveModel {
    pub const NAMES: [&'static str; 3] = ["a", "nu0", "c"];

    pub fn new(a: f64, nu0: f64, c: f64) -> Self {
        RefractiveModel { a, nu0, c }
    }

    pub fn eval(&self, nu: f64) -> f64 {
        self.a / (nu - self.nu0) + self.c
    }

    pub fn from_fit(fit: &FitResult) -> Self {
        RefractiveModel::new(fit.params[0], fit.params[1], fit.params[2])
    }
}

/// Unweighted fit of the pole model to `(ν̃, n)` points. A trial pole inside
/// the data range is rejected. Errors are scaled by the residual variance.
pub fn fit_refractive(points: &[(f64, f64)], initial: &RefractiveModel, opts: &LmOptions) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::InvalidInput("need at least four (wavenumber, n) points".into()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput("non-finite refractive-index point".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if (lo..=hi).contains(&initial.nu0) {
        return Err(Error::InvalidInput(format!(
            "initial pole {} lies inside the data range [{lo}, {hi}]",
            initial.nu0
        )));
    }
    let names: Vec<String> = RefractiveModel::NAMES.iter().map(|s| s.to_string()).collect();
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let m = RefractiveModel::new(x[0], x[1], x[2]);
        if (lo..=hi).contains(&m.nu0) {
            return Err(Error::Infeasible(format!("pole {} inside the data range", m.nu0)));
        }
        Ok(points.iter().map(|&(nu, n)| n - m.eval(nu)).collect())
    };
    let problem = Problem::new(names.clone(), residuals).with_scales(vec![1.0, 1.0, 1.0]);
    let x0 = [initial.a, initial.nu0, initial.c];
    let out = minimize(&problem, &x0, opts)?;
    let res = out.residuals.clone();
    Ok(FitResult::from_outcome(names, &out, res, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::transition_lines;
    use crate::spin::HalfInt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sys() -> SpinSystem {
        SpinSystem::holmium()
    }

    fn truth() -> CfParameters {
        CfParameters {
            b6m4: 1e-3,
            ..CfParameters::lihof4()
        }
    }

    // Ladder rows for the three lowest transitions plus averaged energies
    // of every level and the two moments used as constraints.
    fn synthetic(p: &CfParameters, a_j: f64) -> TransitionDataset {
        let levels = cf_levels(p, &sys()).unwrap();
        let mut rows = Vec::new();
        for ((i, f), s) in [((1, 2), 0.01), ((1, 3), 0.001), ((2, 3), 0.003)] {
            for m in sys().mz_values() {
                rows.push(TransitionLine::new(i, f, Some(m), 0.0).with_uncertainty(s));
            }
        }
        for n in 4..=13 {
            rows.push(TransitionLine::new(1, n, None, 0.0).with_uncertainty(0.5));
        }
        let pred = predict_first_order(&levels, a_j, &rows).unwrap();
        for (r, e) in rows.iter_mut().zip(pred) {
            r.energy = e;
        }
        let moments = [1, 6]
            .iter()
            .map(|&n| MomentConstraint {
                level: n,
                jz: plus_jz(&levels, n).unwrap(),
                sigma: 0.05,
            })
            .collect();
        TransitionDataset {
            rows,
            moments,
            metadata: DatasetMetadata::default(),
        }
    }

    fn with_noise(data: &TransitionDataset, seed: u64) -> TransitionDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = data.clone();
        for r in &mut out.rows {
            r.energy += Normal::new(0.0, r.uncertainty.unwrap()).unwrap().sample(&mut rng);
        }
        for m in &mut out.moments {
            m.jz += Normal::new(0.0, m.sigma).unwrap().sample(&mut rng);
        }
        out
    }

    fn perturbed(p: &CfParameters) -> CfParameters {
        CfParameters::from_array(p.to_array().map(|b| b * 1.05))
    }

    fn free_truth() -> Vec<f64> {
        let t = truth().to_array();
        vec![t[0], t[1], t[2], t[4], t[5], t[6], 0.02703]
    }

    #[test]
    fn first_order_ladder() {
        let rows: Vec<_> = sys()
            .mz_values()
            .into_iter()
            .map(|m| TransitionLine::new(1, 2, Some(m), 0.0))
            .collect();
        let e = predict_lines_first_order(&CfParameters::lihof4(), 0.02703, &rows, &sys()).unwrap();
        assert!((e[0] - 7.35).abs() < 0.01, "{}", e[0]);
        for w in e.windows(2) {
            assert!((w[0] - w[1] - 0.02703 * 5.40).abs() < 0.002);
        }
        let flat = predict_lines_first_order(&CfParameters::lihof4(), 0.0, &rows, &sys()).unwrap();
        assert!(flat.iter().all(|v| (v - flat[0]).abs() < 1e-12));
    }

    #[test]
    fn singlet_rows_ignore_m() {
        let rows: Vec<_> = sys()
            .mz_values()
            .into_iter()
            .map(|m| TransitionLine::new(2, 3, Some(m), 0.0))
            .collect();
        let e = predict_lines_first_order(&CfParameters::lihof4(), 0.02703, &rows, &sys()).unwrap();
        assert!(e.iter().all(|v| (v - e[0]).abs() < 1e-12));
    }

    #[test]
    fn unknown_level_rejected() {
        let rows = [TransitionLine::new(1, 14, None, 0.0)];
        assert_eq!(
            predict_lines_first_order(&CfParameters::lihof4(), 0.02, &rows, &sys()),
            Err(Error::LevelOutOfRange(14))
        );
    }

    #[test]
    fn exact_averaged_rows_are_ladder_means() {
        let hf = hf_levels_exact(&CfParameters::lihof4(), &HyperfineConstants::holmium(), &sys()).unwrap();
        let lines = transition_lines(&hf, 1, 3).unwrap();
        let mean = lines.iter().map(|l| l.energy).sum::<f64>() / 8.0;
        let e = predict_lines_exact(&hf, &[TransitionLine::new(1, 3, None, 0.0)]).unwrap();
        assert!((e[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn noiseless_round_trip() {
        let data = synthetic(&truth(), 0.02703);
        let fit = fit_cf_aj(&data, &perturbed(&truth()), 0.02703 * 1.05, DEFAULT_FIXED, &sys(), &LmOptions::default())
            .unwrap();
        for (got, want) in fit.params.iter().zip(free_truth()) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
        assert_eq!(fit.names, ["b20", "b40", "b44", "b60", "b64", "b6m4", "a_j"]);
        assert_eq!(fit.dof, data.len() - 7);
    }

    #[test]
    fn noisy_round_trip() {
        let data = with_noise(&synthetic(&truth(), 0.02703), 7);
        let fit = fit_cf_aj(&data, &perturbed(&truth()), 0.02703 * 1.05, DEFAULT_FIXED, &sys(), &LmOptions::default())
            .unwrap();
        for ((got, err), want) in fit.params.iter().zip(&fit.param_errors).zip(free_truth()) {
            assert!((got - want).abs() < 3.0 * err, "{got} ± {err} vs {want}");
        }
        let r = fit.reduced_chi2();
        assert!((0.3..=3.0).contains(&r), "{r}");
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let data = with_noise(&synthetic(&truth(), 0.02703), 3);
        let fit = fit_cf_aj(&data, &truth(), 0.02703, DEFAULT_FIXED, &sys(), &LmOptions::default()).unwrap();
        let sig = data.sigmas().unwrap();
        let r: Vec<f64> = fit.residuals.iter().zip(&sig).map(|(v, s)| v / s).collect();
        let problem = Problem::new(fit.names.clone(), |x: &[f64]| {
            let mut v = truth().to_array().to_vec();
            v.remove(3);
            let p = CfParameters::from_array([x[0], x[1], x[2], 0.0, x[3], x[4], x[5]]);
            let pred = predict_first_order(&cf_levels(&p, &sys())?, x[6], &data.rows)?;
            let mut pred = pred;
            let levels = cf_levels(&p, &sys())?;
            for m in &data.moments {
                pred.push(plus_jz(&levels, m.level)?);
            }
            Ok(weighted(&data.observed(), &pred, &sig))
        })
        .with_scales(vec![1e-2, 1e-4, 1e-3, 1e-7, 1e-5, 1e-5, 1e-3]);
        let jac = lm::numerical_jacobian(&problem, &fit.params, 1e-6, r.len()).unwrap();
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..fit.params.len() {
            let col = jac.column(k);
            let g: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum();
            assert!(g.abs() < 1e-6 * col.norm() * norm_r.max(1.0), "{}: {g}", fit.names[k]);
        }
    }

    #[test]
    fn row_order_irrelevant() {
        let data = with_noise(&synthetic(&truth(), 0.02703), 11);
        let mut rev = data.clone();
        rev.rows.reverse();
        rev.moments.reverse();
        let a = fit_cf_aj(&data, &perturbed(&truth()), 0.027, DEFAULT_FIXED, &sys(), &LmOptions::default()).unwrap();
        let b = fit_cf_aj(&rev, &perturbed(&truth()), 0.027, DEFAULT_FIXED, &sys(), &LmOptions::default()).unwrap();
        for (x, y) in a.params.iter().zip(&b.params) {
            assert!(((x - y) / x).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn covariance_matches_scatter() {
        let clean = synthetic(&truth(), 0.02703);
        let fits: Vec<FitResult> = (0..100)
            .map(|seed| {
                fit_cf_aj(&with_noise(&clean, 1000 + seed), &truth(), 0.02703, DEFAULT_FIXED, &sys(), &LmOptions::default())
                    .unwrap()
            })
            .collect();
        for k in 0..fits[0].params.len() {
            let mean = fits.iter().map(|f| f.params[k]).sum::<f64>() / 100.0;
            let var = fits.iter().map(|f| (f.params[k] - mean).powi(2)).sum::<f64>() / 99.0;
            let ratio = var.sqrt() / fits[0].param_errors[k];
            assert!((1.0 / 1.5..1.5).contains(&ratio), "{}: {ratio}", fits[0].names[k]);
        }
    }

    #[test]
    fn symmetric_b6m4_is_singular() {
        let data = synthetic(&CfParameters::lihof4(), 0.02703);
        let err = fit_cf_aj(&data, &CfParameters::lihof4(), 0.02703, DEFAULT_FIXED, &sys(), &LmOptions::default())
            .unwrap_err();
        match err {
            Error::SingularNormalMatrix { direction } => assert!(direction.contains("b6m4"), "{direction}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_uncertainty_rejected() {
        let mut data = synthetic(&truth(), 0.02703);
        data.rows[4].uncertainty = None;
        let err = fit_cf_aj(&data, &truth(), 0.027, DEFAULT_FIXED, &sys(), &LmOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(ref m) if m.contains("row 5")), "{err}");
    }

    fn b_data(b: f64) -> TransitionDataset {
        let hf = hf_levels_exact(&CfParameters::lihof4(), &HyperfineConstants::new(0.02703, b), &sys()).unwrap();
        let mut rows = Vec::new();
        for ((i, f), s) in [((1, 2), 0.01), ((1, 3), 0.001), ((2, 3), 0.003)] {
            rows.extend(transition_lines(&hf, i, f).unwrap().into_iter().map(|l| l.with_uncertainty(s)));
        }
        TransitionDataset::new(rows)
    }

    #[test]
    fn b_round_trip() {
        let fit = fit_b(&b_data(0.059), &CfParameters::lihof4(), 0.02703, 0.0, &sys(), &LmOptions::default()).unwrap();
        assert!((fit.params[0] - 0.059).abs() < 1e-3, "{}", fit.params[0]);
        assert!(fit.chi2 < 1e-12);
    }

    #[test]
    fn zero_b_consistent_with_zero() {
        let data = with_noise(&b_data(0.0), 5);
        let fit = fit_b(&data, &CfParameters::lihof4(), 0.02703, 0.04, &sys(), &LmOptions::default()).unwrap();
        assert!(fit.params[0].abs() < 3.0 * fit.param_errors[0], "{} ± {}", fit.params[0], fit.param_errors[0]);
    }

    #[test]
    fn kramers_labelling_does_not_matter() {
        let hf = hf_levels_exact(&CfParameters::lihof4(), &HyperfineConstants::holmium(), &sys()).unwrap();
        for (i, f) in [(1, 2), (1, 3), (2, 3), (1, 6)] {
            for m in sys().mz_values() {
                let s_i = if hf.cf().level(i).unwrap().is_doublet() { -1 } else { 1 };
                let s_f = if hf.cf().level(f).unwrap().is_doublet() { -1 } else { 1 };
                let plus = hf.get(f, 1, m).unwrap().energy - hf.get(i, 1, m).unwrap().energy;
                let minus = hf.get(f, s_f, -m).unwrap().energy - hf.get(i, s_i, -m).unwrap().energy;
                assert!((plus - minus).abs() < 1e-6, "8.{i}-8.{f} {m}");
            }
        }
    }

    fn grid_points(m: &RefractiveModel) -> Vec<(f64, f64)> {
        (0..=60).map(|k| 10.0 + k as f64).map(|nu| (nu, m.eval(nu))).collect()
    }

    #[test]
    fn refractive_round_trip() {
        for truth in [RefractiveModel::new(-11.1, 110.0, 2.62), RefractiveModel::new(-13.5, 115.0, 2.62)] {
            let start = RefractiveModel::new(truth.a * 0.8, truth.nu0 * 1.1, truth.c * 0.95);
            let fit = fit_refractive(&grid_points(&truth), &start, &LmOptions::default()).unwrap();
            let got = RefractiveModel::from_fit(&fit);
            for (g, w) in [(got.a, truth.a), (got.nu0, truth.nu0), (got.c, truth.c)] {
                assert!(((g - w) / w).abs() < 1e-6, "{g} vs {w}");
            }
            assert!(fit.covariance_scaled);
        }
    }

    #[test]
    fn refractive_noisy() {
        let truth = RefractiveModel::new(-13.5, 115.0, 2.62);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let pts: Vec<_> = grid_points(&truth)
            .into_iter()
            .map(|(x, y)| (x, y + noise.sample(&mut rng)))
            .collect();
        let fit = fit_refractive(&pts, &RefractiveModel::new(-10.0, 105.0, 2.5), &LmOptions::default()).unwrap();
        for (k, w) in [truth.a, truth.nu0, truth.c].into_iter().enumerate() {
            assert!((fit.params[k] - w).abs() < 3.0 * fit.param_errors[k], "{}", fit.names[k]);
        }
    }

    #[test]
    fn pole_inside_range_rejected() {
        let pts = grid_points(&RefractiveModel::new(-11.1, 110.0, 2.62));
        assert!(matches!(
            fit_refractive(&pts, &RefractiveModel::new(-11.1, 40.0, 2.62), &LmOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn constant_index_leaves_pole_undetermined() {
        let pts: Vec<_> = (0..=60).map(|k| (10.0 + k as f64, 2.62)).collect();
        let err = fit_refractive(&pts, &RefractiveModel::new(-1.0, 110.0, 2.5), &LmOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularNormalMatrix { .. }), "{err}");
    }

    #[test]
    fn half_int_rows_serialize() {
        let data = TransitionDataset::new(vec![TransitionLine::new(1, 2, Some(HalfInt::from_twice(-7)), 7.33)]);
        assert!(!data.is_empty());
        assert_eq!(data.transitions(), vec![(1, 2)]);
    }
}
