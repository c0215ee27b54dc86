//! Crystal-field and electron-nuclear Hamiltonians, their diagonalization and
//! the S4 classification of the resulting states.

mod hyperfine;
mod levels;

pub use hyperfine::{full_spectrum, hf_levels_exact, hf_levels_with, HfLabel, HfLevel, HfLevels};
pub use levels::{classify_levels, CfLevel, CfLevels, CfState, Irrep, DEGENERACY_TOL};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::angular::{build_identity, build_jminus, build_jplus, build_jz, build_stevens, CMatrix, OperatorMatrix, C64};
use crate::error::{Error, Result};
use crate::spin::SpinSystem;

/// Crystal-field parameters `B_k^q` in cm⁻¹ multiplying the Stevens
/// operators `O_k^q`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfParameters {
    pub b20: f64,
    pub b40: f64,
    pub b44: f64,
    #[serde(default)]
    pub b4m4: f64,
    pub b60: f64,
    pub b64: f64,
    pub b6m4: f64,
}

impl CfParameters {
    pub const NAMES: [&'static str; 7] = ["b20", "b40", "b44", "b4m4", "b60", "b64", "b6m4"];

    /// Refined LiYF₄:Ho³⁺ parameters. `B_4^{-4}` is fixed to zero, which
    /// removes the rotational freedom about the c axis.
    pub fn lihof4() -> Self {
        CfParameters {
            b20: -2.66e-1,
            b40: 1.68e-3,
            b44: 2.81e-2,
            b4m4: 0.0,
            b60: 5.74e-6,
            b64: 5.60e-4,
            b6m4: 0.0,
        }
    }

    pub fn zero() -> Self {
        CfParameters::default()
    }

    /// `((k, q), B_k^q)` in the order of [`CfParameters::NAMES`].
    pub fn terms(&self) -> [((u32, i32), f64); 7] {
        [
            ((2, 0), self.b20),
            ((4, 0), self.b40),
            ((4, 4), self.b44),
            ((4, -4), self.b4m4),
            ((6, 0), self.b60),
            ((6, 4), self.b64),
            ((6, -4), self.b6m4),
        ]
    }

    pub fn to_array(&self) -> [f64; 7] {
        self.terms().map(|(_, b)| b)
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        CfParameters {
            b20: v[0],
            b40: v[1],
            b44: v[2],
            b4m4: v[3],
            b60: v[4],
            b64: v[5],
            b6m4: v[6],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|b| b.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("non-finite crystal-field parameter".into()))
        }
    }
}

/// Dipolar (`A_J`) and quadrupolar (`B`) hyperfine constants, cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperfineConstants {
    pub a_j: f64,
    pub b_quad: f64,
}

impl HyperfineConstants {
    pub fn new(a_j: f64, b_quad: f64) -> Self {
        HyperfineConstants { a_j, b_quad }
    }

    /// ¹⁶⁵Ho in LiYF₄: `A_J = 0.02703`, `B = 0.04` cm⁻¹.
    pub fn holmium() -> Self {
        HyperfineConstants {
            a_j: 0.02703,
            b_quad: 0.04,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a_j == 0.0 && self.b_quad == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.a_j.is_finite() && self.b_quad.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput("non-finite hyperfine constant".into()))
        }
    }
}

/// `Σ B_k^q O_k^q` on the `2J+1` electronic states.
pub fn build_cf_hamiltonian(p: &CfParameters, sys: &SpinSystem) -> Result<OperatorMatrix> {
    p.validate()?;
    let mut h = build_identity(sys.j)?.scale(0.0);
    for ((k, q), b) in p.terms() {
        if b != 0.0 {
            h = h.add(&build_stevens(k, q, sys.j)?.scale(b))?;
        }
    }
    Ok(h)
}

/// Quadrupolar prefactor `B / [2I(2I−1)J(2J−1)]`; zero when `B = 0`.
pub(crate) fn quadrupole_prefactor(b_quad: f64, sys: &SpinSystem) -> Result<f64> {
    if b_quad == 0.0 {
        return Ok(0.0);
    }
    let (i, j) = (sys.i.value(), sys.j.value());
    let den = 2.0 * i * (2.0 * i - 1.0) * j * (2.0 * j - 1.0);
    if den == 0.0 {
        return Err(Error::InvalidInput(format!(
            "quadrupolar coupling needs I, J >= 1 (got I = {}, J = {})",
            sys.i, sys.j
        )));
    }
    Ok(b_quad / den)
}

/// Electron-nuclear coupling on the `(2J+1)(2I+1)` product space:
///
/// `A_J J·I + B/[2I(2I−1)J(2J−1)] · (3(J·I)² + (3/2) J·I − I(I+1)J(J+1))`
///
/// with `J·I = J_z I_z + (J₊I₋ + J₋I₊)/2`.
pub fn build_hf_hamiltonian(hf: &HyperfineConstants, sys: &SpinSystem) -> Result<OperatorMatrix> {
    hf.validate()?;
    let jz = build_jz(sys.j)?;
    let jp = build_jplus(sys.j)?;
    let jm = build_jminus(sys.j)?;
    let iz = build_jz(sys.i)?;
    let ip = build_jplus(sys.i)?;
    let im = build_jminus(sys.i)?;
    let ladder = jp.kron(&im)?.add(&jm.kron(&ip)?)?.scale(0.5);
    let j_dot_i = jz.kron(&iz)?.add(&ladder)?;

    let mut h = j_dot_i.scale(hf.a_j);
    let quad = quadrupole_prefactor(hf.b_quad, sys)?;
    if quad != 0.0 {
        let sq = j_dot_i.compose(&j_dot_i)?;
        let id = build_identity(sys.j)?.kron(&build_identity(sys.i)?)?;
        let q = sq
            .scale(3.0)
            .add(&j_dot_i.scale(1.5))?
            .sub(&id.scale(sys.ii1() * sys.jj1()))?;
        h = h.add(&q.scale(quad))?;
    }
    Ok(h)
}

/// `H_CF ⊗ 1 + H_HF`.
pub fn build_electronuclear_hamiltonian(
    p: &CfParameters,
    hf: &HyperfineConstants,
    sys: &SpinSystem,
) -> Result<OperatorMatrix> {
    let cf = build_cf_hamiltonian(p, sys)?;
    cf.kron(&build_identity(sys.i)?)?.add(&build_hf_hamiltonian(hf, sys)?)
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors as
/// matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    pub fn vector(&self, k: usize) -> DVector<C64> {
        self.vectors.column(k).into_owned()
    }
}

const HERMITIAN_TOL: f64 = 1e-10;

/// Hermitian eigendecomposition. Output is deterministic: eigenvalues are
/// sorted ascending and each eigenvector is rotated so that its first
/// largest-magnitude component is real and positive.
pub fn diagonalize(h: &OperatorMatrix) -> Result<Eigensystem> {
    let scale = h.matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
    let deviation = h.hermiticity_defect();
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation });
    }
    eigh(h.matrix())
}

pub(crate) fn eigh(m: &CMatrix) -> Result<Eigensystem> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Eigensystem {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    // symmetrize so round-off asymmetry never reaches the solver
    let sym = (m + m.adjoint()) * C64::from(0.5);
    let eig = sym.try_symmetric_eigen(f64::EPSILON, 100_000).ok_or(Error::EigenConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut v);
        vectors.set_column(dst, &v);
    }
    Ok(Eigensystem { values, vectors })
}

/// Rotates `v` so its first (near-)largest component is real positive.
pub(crate) fn fix_phase(v: &mut DVector<C64>) {
    let biggest = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if biggest == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() >= biggest * (1.0 - 1e-8)).copied().unwrap_or_default();
    let phase = pivot.conj() / pivot.norm();
    v.iter_mut().for_each(|z| *z *= phase);
}

/// `⟨a|O|b⟩`
pub(crate) fn matrix_element(a: &DVector<C64>, op: &CMatrix, b: &DVector<C64>) -> C64 {
    a.dotc(&(op * b))
}
