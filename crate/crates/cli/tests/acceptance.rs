//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cfhf_cli::commands;
use cfhf_cli::dataset::read_dataset;
use cfhf_core::analysis::fit_peaks;
use cfhf_core::fitting::lm::LmOptions;
use cfhf_core::fitting::{
    fit_b, fit_cf_aj, fit_refractive, predict_lines_first_order, MomentConstraint, RefractiveModel,
    TransitionDataset, DEFAULT_FIXED,
};
use cfhf_core::hamiltonian::full_spectrum;
use cfhf_core::perturbation::{lambda_from_exact, lambda_from_model, max_discrepancy};
use cfhf_core::spectra::{synthesize, uniform_grid, IsotopeConfig, LineShape, PeakShape, TransitionLine};
use cfhf_core::{
    build_cf_hamiltonian, classify_levels, diagonalize, CfLevels, CfParameters, HyperfineConstants, Irrep, SpinSystem,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

const A_J: f64 = 0.02703;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn sys() -> SpinSystem {
    SpinSystem::holmium()
}

fn cf_levels(p: &CfParameters) -> CfLevels {
    let h = build_cf_hamiltonian(p, &sys()).expect("hamiltonian");
    classify_levels(&diagonalize(&h).expect("eigensystem"), &sys()).expect("classification")
}

fn measured() -> TransitionDataset {
    read_dataset(&fixtures().join("hf_transitions.csv")).expect("bundled dataset")
}

fn column(data: &TransitionDataset, i: usize, f: usize) -> Vec<f64> {
    data.rows
        .iter()
        .filter(|r| (r.n_init, r.n_final) == (i, f))
        .map(|r| r.energy)
        .collect()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(runtime: Duration, limit: f64) -> Result<(), String> {
    if runtime.as_secs_f64() < limit {
        Ok(())
    } else {
        Err(format!("runtime {:.2} s exceeds {limit} s", runtime.as_secs_f64()))
    }
}

fn published_levels() -> Vec<(f64, String, Option<f64>)> {
    let text = std::fs::read_to_string(fixtures().join("lihof4_levels.csv")).expect("level fixture");
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[1].parse().unwrap(), c[2].to_string(), c[3].parse().ok())
        })
        .collect()
}

fn levels_match() -> Outcome {
    let t = Instant::now();
    let levels = cf_levels(&CfParameters::lihof4());
    let runtime = t.elapsed();
    let want = published_levels();
    if levels.len() != want.len() {
        return Err(format!("{} levels, expected {}", levels.len(), want.len()));
    }
    let mut worst_low: f64 = 0.0;
    let mut worst_high: f64 = 0.0;
    let mut worst_jz: f64 = 0.0;
    for (l, (e, irrep, jz)) in levels.levels().iter().zip(&want) {
        let d = (l.energy - e).abs();
        if *e < 100.0 {
            worst_low = worst_low.max(d);
        } else {
            worst_high = worst_high.max(d);
        }
        if l.irrep.to_string() != *irrep {
            return Err(format!("8.{} is {}, expected {irrep}", l.index, l.irrep));
        }
        if let Some(jz) = jz {
            worst_jz = worst_jz.max((l.jz_expect - jz).abs());
        }
    }
    within(runtime, 1.0)?;
    check(
        worst_low < 1.0 && worst_high < 5.0 && worst_jz < 0.10,
        format!("max |ΔE| {worst_low:.3} (<100 cm⁻¹), {worst_high:.3} (above); max |Δ⟨J_z⟩| {worst_jz:.4}"),
    )
}

fn first_order_spacing() -> Outcome {
    let jz = cf_levels(&CfParameters::lihof4()).level(1).unwrap().jz_expect;
    let spacing = A_J * jz;
    let e = column(&measured(), 1, 2);
    let mean_nn = e.windows(2).map(|w| (w[0] - w[1]).abs()).sum::<f64>() / (e.len() - 1) as f64;
    check(
        (spacing - 0.146).abs() < 0.001 && (spacing - mean_nn).abs() < 0.003,
        format!("A_J⟨J_z⟩ = {spacing:.5}; measured mean spacing {mean_nn:.5}"),
    )
}

fn centroids() -> Outcome {
    let data = measured();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let (c2, c3) = (mean(column(&data, 1, 2)), mean(column(&data, 1, 3)));
    check(
        (c2 - 6.84).abs() < 0.02 && (c3 - 23.31).abs() < 0.02,
        format!("8.1-8.2 centroid {c2:.4}, 8.1-8.3 centroid {c3:.4}"),
    )
}

fn model_lambdas() -> Outcome {
    let hf = HyperfineConstants::new(A_J, 0.04);
    let pert = lambda_from_model(&cf_levels(&CfParameters::lihof4()), &hf)
        .map_err(|e| e.to_string())?
        .as_array();
    let exact = lambda_from_exact(&CfParameters::lihof4(), &hf, &sys())
        .map_err(|e| e.to_string())?
        .as_array();
    let published: [f64; 3] = [0.0024, -0.0040, 0.0017];
    let mut ok = true;
    for k in 0..3 {
        ok &= pert[k].signum() == published[k].signum();
        ok &= ((pert[k] - published[k]) / published[k]).abs() < 0.25;
        ok &= ((pert[k] - exact[k]) / exact[k]).abs() < 0.05;
    }
    check(
        ok,
        format!(
            "perturbative ({:.5}, {:.5}, {:.5}); exact ({:.5}, {:.5}, {:.5})",
            pert[0], pert[1], pert[2], exact[0], exact[1], exact[2]
        ),
    )
}

fn data_lambdas() -> Outcome {
    let a = commands::analyze(&measured()).map_err(|e| e.to_string())?;
    let (l1, s2, s3) = (a.lambda1.value, a.s[1].value.abs(), a.s[2].value.abs());
    let (l2, l3) = (a.lambda2.value, a.lambda3.value);
    let magnitude = |v: f64| (1e-4..1e-2).contains(&v.abs());
    check(
        (1.6e-3..=2.4e-3).contains(&l1)
            && (6.2e-3..=9.0e-3).contains(&s2)
            && (3e-4..=9e-4).contains(&s3)
            && l2 < 0.0
            && l3 > 0.0
            && magnitude(l2)
            && magnitude(l3),
        format!("λ1 {l1:.3e}, |s2| {s2:.3e}, |s3| {s3:.3e}, λ2 {l2:.3e}, λ3 {l3:.3e}"),
    )
}

fn third_order_scaling() -> Outcome {
    let t = Instant::now();
    let mut d = Vec::new();
    for alpha in [1.0, 0.5, 0.1] {
        let hf = HyperfineConstants::new(A_J * alpha, 0.0);
        d.push(max_discrepancy(&CfParameters::lihof4(), &hf, &sys(), 3).map_err(|e| e.to_string())?);
    }
    within(t.elapsed(), 5.0)?;
    let r_half = d[1] / (d[0] * 0.125);
    let r_tenth = d[2] / (d[0] * 1e-3);
    let band = |r: f64| (1.0 / 3.0..=3.0).contains(&r);
    check(
        band(r_half) && band(r_tenth) && d[2] < 1e-4,
        format!(
            "max |pert − exact| {:.3e} / {:.3e} / {:.3e}; α³ ratios {r_half:.3}, {r_tenth:.3}",
            d[0], d[1], d[2]
        ),
    )
}

fn kramers() -> Outcome {
    let e = full_spectrum(&CfParameters::lihof4(), &HyperfineConstants::new(A_J, 0.04), &sys())
        .map_err(|e| e.to_string())?;
    let worst = e.chunks(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    check(
        e.len() == 136 && worst < 1e-9,
        format!("{} eigenvalues, max pair splitting {worst:.2e}", e.len()),
    )
}

fn selection_rules() -> Outcome {
    let levels = cf_levels(&CfParameters::lihof4());
    let defect = levels.selection_rule_defect().map_err(|e| e.to_string())?;
    let gamma = |n: usize| levels.level(n).unwrap().irrep;
    check(
        defect < 1e-10 && gamma(1) == Irrep::Gamma34,
        format!("max forbidden |⟨f|J_z,J±|i⟩| {defect:.2e}"),
    )
}

fn fit_truth() -> CfParameters {
    // b6m4 enters the energies only quadratically at zero, so the round trip
    // starts from a small nonzero value.
    CfParameters {
        b6m4: 1e-3,
        ..CfParameters::lihof4()
    }
}

fn synthetic_dataset(p: &CfParameters) -> TransitionDataset {
    let mut rows = Vec::new();
    for (i, f, s) in [(1, 2, 0.01), (1, 3, 0.001), (2, 3, 0.003)] {
        for m in sys().mz_values() {
            rows.push(TransitionLine::new(i, f, Some(m), 0.0).with_uncertainty(s));
        }
    }
    for n in 4..=13 {
        rows.push(TransitionLine::new(1, n, None, 0.0).with_uncertainty(0.5));
    }
    let e = predict_lines_first_order(p, A_J, &rows, &sys()).unwrap();
    for (r, v) in rows.iter_mut().zip(e) {
        r.energy = v;
    }
    let levels = cf_levels(p);
    let moments = [1, 6]
        .map(|n| MomentConstraint {
            level: n,
            jz: levels.level(n).unwrap().jz_expect,
            sigma: 0.05,
        })
        .to_vec();
    TransitionDataset {
        rows,
        moments,
        ..Default::default()
    }
}

fn free_truth(p: &CfParameters) -> [f64; 7] {
    [p.b20, p.b40, p.b44, p.b60, p.b64, p.b6m4, A_J]
}

fn fit_round_trips() -> Outcome {
    let t = Instant::now();
    let opts = LmOptions::default();
    let truth = fit_truth();
    let clean = synthetic_dataset(&truth);
    let start = CfParameters::from_array(truth.to_array().map(|b| b * 1.05));
    let want = free_truth(&truth);

    let a = fit_cf_aj(&clean, &start, A_J * 1.05, DEFAULT_FIXED, &sys(), &opts).map_err(|e| format!("(a) {e}"))?;
    let worst_rel = a
        .params
        .iter()
        .zip(want)
        .map(|(g, w)| ((g - w) / w).abs())
        .fold(0.0, f64::max);

    let mut noisy = clean.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for r in &mut noisy.rows {
        r.energy += Normal::new(0.0, r.uncertainty.unwrap()).unwrap().sample(&mut rng);
    }
    for m in &mut noisy.moments {
        m.jz += Normal::new(0.0, m.sigma).unwrap().sample(&mut rng);
    }
    let b = fit_cf_aj(&noisy, &start, A_J * 1.05, DEFAULT_FIXED, &sys(), &opts).map_err(|e| format!("(b) {e}"))?;
    let worst_pull = b
        .params
        .iter()
        .zip(&b.param_errors)
        .zip(want)
        .map(|((g, e), w)| (g - w).abs() / e)
        .fold(0.0, f64::max);
    let red = b.reduced_chi2();

    let c = fit_b(&measured(), &CfParameters::lihof4(), A_J, 0.0, &sys(), &opts).map_err(|e| format!("(c) {e}"))?;
    let b_quad = c.params[0];

    within(t.elapsed(), 60.0)?;
    check(
        worst_rel < 1e-6 && worst_pull < 3.0 && (0.3..=3.0).contains(&red) && (0.02..=0.06).contains(&b_quad),
        format!(
            "(a) max rel err {worst_rel:.1e}; (b) max pull {worst_pull:.2}σ, χ²/dof {red:.2}; (c) B = {b_quad:.4} ± {:.4}",
            c.param_errors[0]
        ),
    )
}

fn isotope_doublet() -> Outcome {
    let line = TransitionLine::new(1, 3, None, 23.527);
    let iso = IsotopeConfig {
        enabled: true,
        splitting: 0.0098,
        satellite_ratio: 0.33,
    };
    let shape = LineShape {
        shape: PeakShape::Gaussian,
        fwhm: 0.0090,
    };
    let grid = uniform_grid(23.49, 23.57, 801).unwrap();
    let spectrum = synthesize(&[line], &shape, &iso, &grid).map_err(|e| e.to_string())?;
    let fit = fit_peaks(&spectrum, 2, PeakShape::Gaussian, true, &LmOptions::default()).map_err(|e| e.to_string())?;
    let split = fit.peaks[1].center - fit.peaks[0].center;
    let fwhm = fit.peaks[0].fwhm;
    check(
        (split - 0.0098).abs() < 4e-4 && (fwhm - 0.0090).abs() < 2e-4,
        format!("splitting {split:.5}, FWHM {fwhm:.5}"),
    )
}

fn refractive() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for truth in [RefractiveModel::new(-11.1, 110.0, 2.62), RefractiveModel::new(-13.5, 115.0, 2.62)] {
        let points: Vec<(f64, f64)> = (0..=60).map(|k| 10.0 + k as f64).map(|nu| (nu, truth.eval(nu))).collect();
        let start = RefractiveModel::new(-10.0, 120.0, 2.5);
        let fit = fit_refractive(&points, &start, &LmOptions::default()).map_err(|e| e.to_string())?;
        let got = RefractiveModel::from_fit(&fit);
        let worst = [(got.a, truth.a), (got.nu0, truth.nu0), (got.c, truth.c)]
            .iter()
            .map(|(g, w)| ((g - w) / w).abs())
            .fold(0.0, f64::max);
        ok &= worst < 1e-6;
        details.push(format!("({}, {}, {}): max rel err {worst:.1e}", truth.a, truth.nu0, truth.c));
    }
    check(ok, details.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("crystal-field levels", levels_match),
        ("first-order hyperfine spacing", first_order_spacing),
        ("transition centroids", centroids),
        ("lambda from the model", model_lambdas),
        ("lambda from data", data_lambdas),
        ("perturbation vs exact, third order", third_order_scaling),
        ("Kramers degeneracy", kramers),
        ("selection rules", selection_rules),
        ("fit round trips", fit_round_trips),
        ("isotope doublet fit", isotope_doublet),
        ("refractive-index round trip", refractive),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2} s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
