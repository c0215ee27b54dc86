//! Second-order hyperfine corrections of the crystal-field levels and the
//! `λ_n` coefficients of their `m_z²` terms.
//!
//! All matrix elements come from the classified crystal-field eigenvectors.
//! The doublet and singlet forms group the general sum by the irrep of the
//! intermediate level; each ladder term carries the nuclear factor of the
//! operator that actually connects the two states, `I(I+1) − m(m+1)` for
//! `J₋` and `I(I+1) − m(m−1)` for `J₊`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::angular::{build_jminus, build_jplus, build_jz, CMatrix};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    hf_levels_exact, matrix_element, quadrupole_prefactor, CfLevel, CfLevels, CfParameters, HyperfineConstants,
    Irrep, DEGENERACY_TOL,
};
use crate::spin::{HalfInt, SpinSystem};

/// `λ_n`, twice the `m_z²` coefficient of the corrections of level `8.n`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LambdaCoefficients {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl LambdaCoefficients {
    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        LambdaCoefficients {
            lambda1: v[0],
            lambda2: v[1],
            lambda3: v[2],
        }
    }
}

/// Squared matrix elements between every pair of crystal-field states.
struct Elements<'a> {
    levels: &'a CfLevels,
    /// `(level index, σ)` per flattened state.
    owner: Vec<(usize, i8)>,
    jz: DMatrix<f64>,
    /// `|⟨a|J₊|b⟩|²`; `|⟨a|J₋|b⟩|² = jp[(b, a)]`.
    jp: DMatrix<f64>,
    jm: DMatrix<f64>,
    quad: Vec<f64>,
    jz_diag: Vec<f64>,
}

impl<'a> Elements<'a> {
    fn new(levels: &'a CfLevels) -> Result<Self> {
        let sys = levels.system();
        let jz_op = build_jz(sys.j)?.into_matrix();
        let jp_op = build_jplus(sys.j)?.into_matrix();
        let jm_op = build_jminus(sys.j)?.into_matrix();
        let x = sys.jj1();
        let q_op = &jz_op * &jz_op * nalgebra::Complex::from(3.0) - CMatrix::identity(jz_op.nrows(), jz_op.nrows()) * nalgebra::Complex::from(x);

        let states: Vec<_> = levels.all_states().collect();
        let n = states.len();
        let sq = |op: &CMatrix| DMatrix::from_fn(n, n, |a, b| matrix_element(&states[a].1.vector, op, &states[b].1.vector).norm_sqr());
        Ok(Elements {
            levels,
            owner: states.iter().map(|(l, s)| (*l, s.sigma)).collect(),
            jz: sq(&jz_op),
            jp: sq(&jp_op),
            jm: sq(&jm_op),
            quad: states.iter().map(|(_, s)| matrix_element(&s.vector, &q_op, &s.vector).re).collect(),
            jz_diag: states.iter().map(|(_, s)| s.jz).collect(),
        })
    }

    fn position(&self, n: usize, sigma: i8) -> Result<usize> {
        let level = self.levels.level(n)?;
        if level.irrep == Irrep::Mixed {
            return Err(Error::WrongLevelKind {
                level: n,
                reason: "accidentally degenerate level; non-degenerate perturbation theory does not apply".into(),
            });
        }
        let sigma = if level.is_doublet() { sigma } else { 1 };
        if sigma != 1 && sigma != -1 {
            return Err(Error::InvalidInput(format!("σ must be ±1, got {sigma}")));
        }
        self.owner
            .iter()
            .position(|&o| o == (n, sigma))
            .ok_or_else(|| Error::WrongLevelKind {
                level: n,
                reason: format!("no σ = {sigma:+} member"),
            })
    }

    fn gap(&self, n: usize, j: usize) -> Result<f64> {
        let de = self.levels.level(n)?.energy - self.levels.level(j)?.energy;
        if de.abs() < DEGENERACY_TOL {
            return Err(Error::ZeroDenominator(n, j));
        }
        Ok(de)
    }

    /// Second-order coupling of state `a` to state `b` of another level,
    /// `ΔE · δ` without the `A_J²` factor.
    fn pair_weight(&self, a: usize, b: usize, m: f64, ii: f64) -> f64 {
        self.jz[(b, a)] * m * m
            + 0.25 * self.jm[(b, a)] * (ii - m * (m + 1.0))
            + 0.25 * self.jp[(b, a)] * (ii - m * (m - 1.0))
    }

    fn first_order(&self, a: usize, m: f64, hf: &HyperfineConstants) -> Result<f64> {
        let sys = self.levels.system();
        let ii = sys.ii1();
        let b_term = quadrupole_prefactor(hf.b_quad, sys)? * 0.5 * self.quad[a] * (3.0 * m * m - ii);
        Ok(hf.a_j * self.jz_diag[a] * m + b_term)
    }

    /// General second-order sum over all states of levels `j ∈ others`.
    fn second_order(&self, a: usize, m: f64, a_j: f64, others: impl Fn(usize) -> bool) -> Result<f64> {
        let n = self.owner[a].0;
        let ii = self.levels.system().ii1();
        let mut sum = 0.0;
        for (b, &(j, _)) in self.owner.iter().enumerate() {
            if j == n || !others(j) {
                continue;
            }
            sum += a_j * a_j * self.pair_weight(a, b, m, ii) / self.gap(n, j)?;
        }
        Ok(sum)
    }
}

fn check_mz(sys: &SpinSystem, m_z: HalfInt) -> Result<()> {
    if m_z.abs() > sys.i || (m_z.twice() - sys.i.twice()) % 2 != 0 {
        return Err(Error::InvalidInput(format!("m_z = {m_z} is not a projection of I = {}", sys.i)));
    }
    Ok(())
}

/// General second-order correction `δ_{8.n^σ, m_z}` of any level, summing
/// over every other crystal-field level. `sigma` is ignored for singlets.
pub fn delta_full(n: usize, sigma: i8, m_z: HalfInt, levels: &CfLevels, hf: &HyperfineConstants) -> Result<f64> {
    delta_truncated(n, sigma, m_z, levels, hf, usize::MAX)
}

/// [`delta_full`] with the intermediate sum restricted to levels `8.j`,
/// `j ≤ max_level`.
pub fn delta_truncated(
    n: usize,
    sigma: i8,
    m_z: HalfInt,
    levels: &CfLevels,
    hf: &HyperfineConstants,
    max_level: usize,
) -> Result<f64> {
    hf.validate()?;
    check_mz(levels.system(), m_z)?;
    let el = Elements::new(levels)?;
    let a = el.position(n, sigma)?;
    let m = m_z.value();
    Ok(el.first_order(a, m, hf)? + el.second_order(a, m, hf.a_j, |j| j <= max_level)?)
}

/// Ground-doublet correction grouped by intermediate irrep: first order in
/// `A_J` and `B`, plus repulsion from the Γ1, Γ2 and other Γ34 levels.
/// The `σ = −1` branch is obtained as `δ_{8.1⁻, m} = δ_{8.1⁺, −m}`.
pub fn delta_doublet(m_z: HalfInt, sigma: i8, levels: &CfLevels, hf: &HyperfineConstants) -> Result<f64> {
    hf.validate()?;
    check_mz(levels.system(), m_z)?;
    let ground = levels.level(1)?;
    if !ground.is_doublet() {
        return Err(Error::WrongLevelKind {
            level: 1,
            reason: "ground level is not a Kramers doublet".into(),
        });
    }
    let m = match sigma {
        1 => m_z.value(),
        -1 => -m_z.value(),
        _ => return Err(Error::InvalidInput(format!("σ must be ±1, got {sigma}"))),
    };
    let el = Elements::new(levels)?;
    let a = el.position(1, 1)?;
    let by_irrep = |irrep: Irrep| move |j: usize| levels.level(j).map(|l| l.irrep == irrep).unwrap_or(false);
    Ok(el.first_order(a, m, hf)?
        + el.second_order(a, m, hf.a_j, by_irrep(Irrep::Gamma1))?
        + el.second_order(a, m, hf.a_j, by_irrep(Irrep::Gamma2))?
        + el.second_order(a, m, hf.a_j, by_irrep(Irrep::Gamma34))?)
}

/// Singlet correction: repulsion from the other singlets of the same irrep
/// through `J_z`, from the doublets through `J₊` and `J₋` (the two members
/// together give `A_J²/(2ΔE) |⟨J₊⟩|² (I(I+1) − m_z²)`), and first order in
/// `B`. No first-order `A_J` term.
pub fn delta_singlet(n: usize, m_z: HalfInt, levels: &CfLevels, hf: &HyperfineConstants) -> Result<f64> {
    hf.validate()?;
    check_mz(levels.system(), m_z)?;
    let level = levels.level(n)?;
    if !level.is_singlet() {
        return Err(Error::WrongLevelKind {
            level: n,
            reason: format!("{} is not a singlet", level.irrep),
        });
    }
    let el = Elements::new(levels)?;
    let a = el.position(n, 1)?;
    let m = m_z.value();
    let same = level.irrep;
    let of = |irrep: Irrep| move |j: usize| levels.level(j).map(|l| l.irrep == irrep).unwrap_or(false);
    let other_singlet = if same == Irrep::Gamma1 { Irrep::Gamma2 } else { Irrep::Gamma1 };
    Ok(el.first_order(a, m, hf)?
        + el.second_order(a, m, hf.a_j, of(same))?
        + el.second_order(a, m, hf.a_j, of(Irrep::Gamma34))?
        + el.second_order(a, m, hf.a_j, of(other_singlet))?)
}

/// `K_{i,j}(m_z)` of the three-level model (`i, j ∈ {1, 2, 3}`).
///
/// `K_{1,1}` is the first-order doublet shift, `K_{1,i}` the ladder
/// repulsion of `8.1⁺` by singlet `8.i`, `K_{2,3}` the `J_z` repulsion of the
/// two singlets, and `K_{i,j} = −K_{j,i}` otherwise. The ladder term keeps
/// whichever of `J₊`/`J₋` connects the states, each with its own nuclear
/// factor.
pub fn k_correction(i: usize, j: usize, m_z: HalfInt, levels: &CfLevels, a_j: f64) -> Result<f64> {
    check_mz(levels.system(), m_z)?;
    if !(1..=3).contains(&i) || !(1..=3).contains(&j) {
        return Err(Error::LevelOutOfRange(i.max(j)));
    }
    check_three_level(levels)?;
    let el = Elements::new(levels)?;
    let ii = levels.system().ii1();
    let m = m_z.value();
    match (i, j) {
        (1, 1) => Ok(a_j * el.jz_diag[el.position(1, 1)?] * m),
        (1, k) => {
            let a = el.position(1, 1)?;
            let b = el.position(k, 1)?;
            let ladder = 0.25 * el.jm[(b, a)] * (ii - m * (m + 1.0)) + 0.25 * el.jp[(b, a)] * (ii - m * (m - 1.0));
            Ok(a_j * a_j * ladder / el.gap(1, k)?)
        }
        (2, 3) => {
            let a = el.position(2, 1)?;
            let b = el.position(3, 1)?;
            Ok(a_j * a_j * el.jz[(b, a)] * m * m / el.gap(2, 3)?)
        }
        (a, b) if a == b => Err(Error::InvalidInput(format!("K_{{{a},{a}}} is only defined for the doublet"))),
        (a, b) => Ok(-k_correction(b, a, m_z, levels, a_j)?),
    }
}

fn check_three_level(levels: &CfLevels) -> Result<()> {
    let kinds: Vec<&CfLevel> = (1..=3).map(|n| levels.level(n)).collect::<Result<_>>()?;
    if !kinds[0].is_doublet() || !kinds[1].is_singlet() || !kinds[2].is_singlet() {
        return Err(Error::WrongLevelKind {
            level: 1,
            reason: "three-level model needs a doublet ground level followed by two singlets".into(),
        });
    }
    Ok(())
}

/// Three-level corrections assembled from [`k_correction`], `B = 0`.
///
/// A singlet couples to both members of the ground doublet, which carry
/// opposite `m_z` dependence; the pair contributes `K_{n,1}(m) + K_{n,1}(−m)`,
/// whose `m_z²` coefficient equals that of `2 K_{n,1}(m)`.
pub fn restricted_delta(n: usize, m_z: HalfInt, levels: &CfLevels, a_j: f64) -> Result<f64> {
    let k = |i, j, m| k_correction(i, j, m, levels, a_j);
    match n {
        1 => Ok(k(1, 1, m_z)? + k(1, 2, m_z)? + k(1, 3, m_z)?),
        2 => Ok(k(2, 3, m_z)? + k(2, 1, m_z)? + k(2, 1, -m_z)?),
        3 => Ok(k(3, 2, m_z)? + k(3, 1, m_z)? + k(3, 1, -m_z)?),
        _ => Err(Error::LevelOutOfRange(n)),
    }
}

/// Least-squares `y ≈ c0 + c1 x + c2 x²`.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<[f64; 3]> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidInput("quadratic regression needs at least 3 points".into()));
    }
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&x, &y) in xs.iter().zip(ys) {
        let row = Vector3::new(1.0, x, x * x);
        ata += row * row.transpose();
        aty += row * y;
    }
    let c = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::InvalidInput("quadratic regression needs 3 distinct abscissae".into()))?;
    Ok([c[0], c[1], c[2]])
}

fn lambda_of(f: impl Fn(HalfInt) -> Result<f64>, sys: &SpinSystem) -> Result<f64> {
    let ms = sys.mz_values();
    let xs: Vec<f64> = ms.iter().map(|m| m.value()).collect();
    let ys: Vec<f64> = ms.iter().map(|&m| f(m)).collect::<Result<_>>()?;
    Ok(2.0 * quadratic_fit(&xs, &ys)?[2])
}

/// `λ_{1,2,3}` from [`delta_full`] by quadratic regression over all `m_z`
/// (the `σ = +1` branch for the doublet).
pub fn lambda_from_model(levels: &CfLevels, hf: &HyperfineConstants) -> Result<LambdaCoefficients> {
    let sys = levels.system();
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = lambda_of(|m| delta_full(k + 1, 1, m, levels, hf), sys)?;
    }
    Ok(LambdaCoefficients::from_array(out))
}

/// `λ_{1,2,3}` of the three-level model ([`restricted_delta`]).
pub fn lambda_restricted(levels: &CfLevels, a_j: f64) -> Result<LambdaCoefficients> {
    let sys = levels.system();
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = lambda_of(|m| restricted_delta(k + 1, m, levels, a_j), sys)?;
    }
    Ok(LambdaCoefficients::from_array(out))
}

/// `λ_{1,2,3}` from exact electron-nuclear diagonalization, by the same
/// regression applied to the labelled eigenvalues.
pub fn lambda_from_exact(p: &CfParameters, hf: &HyperfineConstants, sys: &SpinSystem) -> Result<LambdaCoefficients> {
    let exact = hf_levels_exact(p, hf, sys)?;
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = lambda_of(|m| Ok(exact.get(k + 1, 1, m)?.correction), sys)?;
    }
    Ok(LambdaCoefficients::from_array(out))
}

/// Largest `|δ_pert − δ_exact|` over levels `1..=max_level`, both branches
/// and all `m_z`.
pub fn max_discrepancy(p: &CfParameters, hf: &HyperfineConstants, sys: &SpinSystem, max_level: usize) -> Result<f64> {
    let exact = hf_levels_exact(p, hf, sys)?;
    let cf = exact.cf();
    let mut worst = 0.0f64;
    for l in exact.levels().iter().filter(|l| l.n <= max_level) {
        let pert = delta_full(l.n, l.sigma, l.m_z, cf, hf)?;
        worst = worst.max((pert - l.correction).abs());
    }
    Ok(worst)
}

/// `δ_{8.n^σ, m_z}` for every `m_z`, ascending.
pub fn delta_ladder(n: usize, sigma: i8, levels: &CfLevels, hf: &HyperfineConstants) -> Result<DVector<f64>> {
    let ms = levels.system().mz_values();
    let v: Vec<f64> = ms.iter().map(|&m| delta_full(n, sigma, m, levels, hf)).collect::<Result<_>>()?;
    Ok(DVector::from_vec(v))
}
