//! Damped Gauss-Newton (Levenberg-Marquardt) on weighted residuals with
//! central-difference Jacobians and box bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers χ² by less than this fraction.
    pub rel_chi2_tol: f64,
    /// Stop once `‖δx‖ < step_tol · (‖x‖ + step_tol)`.
    pub step_tol: f64,
    pub initial_damping: f64,
    /// Relative central-difference step.
    pub jacobian_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            rel_chi2_tol: 1e-12,
            step_tol: 1e-10,
            initial_damping: 1e-3,
            jacobian_step: 1e-6,
        }
    }
}

const MAX_DAMPING: f64 = 1e16;
const SINGULAR_RCOND: f64 = 1e-13;

/// A least-squares problem in `x`: `residuals(x)` returns the weighted
/// residuals `(y − f(x))/σ`. Returning [`Error::Infeasible`] rejects the
/// trial point instead of aborting the fit.
pub struct Problem<'a> {
    pub names: Vec<String>,
    pub residuals: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>,
    /// Typical magnitude per parameter; sets the finite-difference step for
    /// parameters near zero.
    pub scales: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(names: Vec<String>, residuals: impl Fn(&[f64]) -> Result<Vec<f64>> + 'a) -> Self {
        let n = names.len();
        Problem {
            names,
            residuals: Box::new(residuals),
            scales: vec![1.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scales = scales;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    fn project(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    fn validate(&self, x0: &[f64]) -> Result<()> {
        let n = self.names.len();
        for len in [x0.len(), self.scales.len(), self.lower.len(), self.upper.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        if n == 0 {
            return Err(Error::InvalidInput("no free parameters".into()));
        }
        for k in 0..n {
            if !(self.lower[k] <= x0[k] && x0[k] <= self.upper[k]) || !x0[k].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "start value {} of {} outside bounds [{}, {}]",
                    x0[k], self.names[k], self.lower[k], self.upper[k]
                )));
            }
        }
        Ok(())
    }
}

/// Result of a converged minimization.
#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// Weighted residuals at `x`.
    pub residuals: Vec<f64>,
    pub chi2: f64,
    pub jacobian: DMatrix<f64>,
    /// `(JᵀJ)⁻¹` at `x`.
    pub normal_inverse: DMatrix<f64>,
    pub iterations: usize,
    /// χ² after every accepted step, starting with the initial value.
    pub chi2_history: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn evaluate(p: &Problem, x: &[f64]) -> Result<Vec<f64>> {
    let r = (p.residuals)(x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Infeasible("non-finite residual".into()));
    }
    Ok(r)
}

/// Central differences, one-sided where a bound is in the way.
pub fn numerical_jacobian(p: &Problem, x: &[f64], rel_step: f64, m: usize) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let h = rel_step * x[k].abs().max(p.scales[k]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] = (x[k] + h).min(p.upper[k]);
        xm[k] = (x[k] - h).max(p.lower[k]);
        let width = xp[k] - xm[k];
        if width <= 0.0 {
            continue;
        }
        let rp = evaluate(p, &xp)?;
        let rm = evaluate(p, &xm)?;
        if rp.len() != m || rm.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: rp.len().min(rm.len()),
            });
        }
        for i in 0..m {
            jac[(i, k)] = (rp[i] - rm[i]) / width;
        }
    }
    Ok(jac)
}

/// Inverse of `JᵀJ`, or the direction along which it is singular.
pub fn normal_inverse(jac: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let n = jac.ncols();
    let normal = jac.transpose() * jac;
    // equilibrate so parameters of very different magnitude compare fairly
    let d: Vec<f64> = (0..n).map(|k| normal[(k, k)].sqrt()).collect();
    if let Some(k) = d.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::SingularNormalMatrix {
            direction: names[k].clone(),
        });
    }
    let scaled = DMatrix::from_fn(n, n, |r, c| normal[(r, c)] / (d[r] * d[c]));
    let eig = SymmetricEigen::new(scaled);
    let (kmin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("n > 0");
    let emax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if emin <= SINGULAR_RCOND * emax {
        let v = eig.eigenvectors.column(kmin);
        return Err(Error::SingularNormalMatrix {
            direction: describe_direction(v.as_slice(), names),
        });
    }
    let inv_scaled = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e))
        * eig.eigenvectors.transpose();
    let mut inv = DMatrix::from_fn(n, n, |r, c| inv_scaled[(r, c)] / (d[r] * d[c]));
    inv = (&inv + inv.transpose()) * 0.5;
    Ok(inv)
}

fn describe_direction(v: &[f64], names: &[String]) -> String {
    let mut parts: Vec<(f64, &str)> = v.iter().copied().zip(names.iter().map(String::as_str)).collect();
    parts.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    if parts[0].0.abs() > 0.95 {
        return parts[0].1.to_string();
    }
    let sign = if parts[0].0 < 0.0 { -1.0 } else { 1.0 };
    parts
        .iter()
        .filter(|(c, _)| c.abs() > 0.05)
        .map(|(c, name)| format!("{:+.3}*{name}", sign * c))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Minimizes `Σ residuals(x)²` from `x0`.
pub fn minimize(p: &Problem, x0: &[f64], opts: &LmOptions) -> Result<LmOutcome> {
    p.validate(x0)?;
    let mut x = x0.to_vec();
    let mut r = evaluate(p, &x).map_err(|e| match e {
        Error::Infeasible(msg) => Error::InvalidInput(format!("initial point infeasible: {msg}")),
        other => other,
    })?;
    let m = r.len();
    if m < x.len() {
        return Err(Error::InvalidInput(format!(
            "{} residuals cannot determine {} parameters",
            m,
            x.len()
        )));
    }
    let mut chi2 = sum_sq(&r);
    let mut history = vec![chi2];
    let mut mu = opts.initial_damping;
    let mut iterations = 0;

    'outer: loop {
        if chi2 == 0.0 {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::IterationLimit { iterations });
        }
        iterations += 1;
        let jac = numerical_jacobian(p, &x, opts.jacobian_step, m)?;
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        let diag_max = normal.diagonal().iter().copied().fold(0.0, f64::max);
        let floor = (diag_max * 1e-15).max(f64::MIN_POSITIVE);

        loop {
            let mut a = normal.clone();
            for k in 0..x.len() {
                a[(k, k)] += mu * normal[(k, k)].max(floor);
            }
            // J is d(residual)/dx, so the Gauss-Newton step is −(JᵀJ)⁻¹Jᵀr
            let step = match a.clone().cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    mu *= 10.0;
                    if mu > MAX_DAMPING {
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            p.project(&mut trial);
            let dx: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let xnorm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dx < opts.step_tol * (xnorm + opts.step_tol) {
                break 'outer;
            }
            let candidate = match evaluate(p, &trial) {
                Ok(rt) => Some(rt),
                Err(Error::Infeasible(_)) => None,
                Err(e) => return Err(e),
            };
            match candidate {
                Some(rt) if sum_sq(&rt) < chi2 => {
                    let new_chi2 = sum_sq(&rt);
                    let rel = (chi2 - new_chi2) / chi2;
                    x = trial;
                    r = rt;
                    chi2 = new_chi2;
                    history.push(chi2);
                    mu = (mu / 10.0).max(1e-15);
                    if rel < opts.rel_chi2_tol {
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    mu *= 10.0;
                    if mu > MAX_DAMPING {
                        break 'outer;
                    }
                }
            }
        }
    }

    let jacobian = numerical_jacobian(p, &x, opts.jacobian_step, m)?;
    let normal_inverse = normal_inverse(&jacobian, &p.names)?;
    Ok(LmOutcome {
        x,
        residuals: r,
        chi2,
        jacobian,
        normal_inverse,
        iterations,
        chi2_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rosenbrock() {
        let p = Problem::new(names(&["x", "y"]), |v: &[f64]| Ok(vec![10.0 * (v[1] - v[0] * v[0]), 1.0 - v[0]]));
        let out = minimize(&p, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8);
        for w in out.chi2_history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn linear_covariance() {
        // y = a + b t with unit weights: covariance is (XᵀX)⁻¹
        let t = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.1, 4.9, 7.2];
        let p = Problem::new(names(&["a", "b"]), move |v: &[f64]| {
            Ok(t.iter().zip(&y).map(|(t, y)| y - v[0] - v[1] * t).collect())
        });
        let out = minimize(&p, &[0.0, 0.0], &LmOptions::default()).unwrap();
        let x = DMatrix::from_fn(4, 2, |r, c| if c == 0 { 1.0 } else { t[r] });
        let expect = (x.transpose() * x).try_inverse().unwrap();
        assert!((out.normal_inverse - expect).abs().max() < 1e-8);
    }

    #[test]
    fn bounds_respected() {
        let p = Problem::new(names(&["x"]), |v: &[f64]| Ok(vec![v[0] - 5.0, 0.1 * (v[0] - 5.0)]))
            .with_bounds(vec![0.0], vec![2.0]);
        let out = minimize(&p, &[1.0], &LmOptions::default()).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_direction_named() {
        let p = Problem::new(names(&["a", "b"]), |v: &[f64]| Ok(vec![v[0] - 1.0, 2.0 * (v[0] - 1.0)]));
        match minimize(&p, &[0.0, 0.0], &LmOptions::default()) {
            Err(Error::SingularNormalMatrix { direction }) => assert_eq!(direction, "b"),
            other => panic!("{other:?}"),
        }
        let p = Problem::new(names(&["a", "b"]), |v: &[f64]| Ok(vec![v[0] + v[1] - 1.0, v[0] + v[1] + 1.0]));
        match minimize(&p, &[0.0, 0.0], &LmOptions::default()) {
            Err(Error::SingularNormalMatrix { direction }) => {
                assert!(direction.contains('a') && direction.contains('b'), "{direction}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iteration_cap() {
        let p = Problem::new(names(&["x", "y"]), |v: &[f64]| Ok(vec![10.0 * (v[1] - v[0] * v[0]), 1.0 - v[0]]));
        let opts = LmOptions {
            max_iterations: 2,
            ..Default::default()
        };
        assert_eq!(minimize(&p, &[-1.2, 1.0], &opts).unwrap_err(), Error::IterationLimit { iterations: 2 });
    }

    #[test]
    fn infeasible_steps_rejected() {
        // the undamped first step overshoots into the refused region
        let p = Problem::new(names(&["x"]), |v: &[f64]| {
            if v[0] > 2.5 {
                Err(Error::Infeasible("pole".into()))
            } else {
                Ok(vec![v[0].exp() - 2f64.exp()])
            }
        });
        let out = minimize(&p, &[0.0], &LmOptions::default()).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-9);
    }
}
