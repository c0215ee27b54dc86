use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{eigh, fix_phase, matrix_element, Eigensystem};
use crate::angular::{build_jplus, build_jz, CMatrix, C64};
use crate::error::{Error, Result};
use crate::spin::{HalfInt, SpinSystem};

/// Eigenvalues closer than this (cm⁻¹) form one crystal-field level.
pub const DEGENERACY_TOL: f64 = 1e-6;

const SECTOR_LEAK_TOL: f64 = 1e-8;

/// S4 character of a crystal-field level. `Γ3` and `Γ4` are time-reversal
/// partners and always appear together, so they share one label and are told
/// apart by `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Irrep {
    #[serde(rename = "Γ1")]
    Gamma1,
    #[serde(rename = "Γ2")]
    Gamma2,
    #[serde(rename = "Γ34")]
    Gamma34,
    /// Accidental degeneracy spanning several sectors, e.g. a vanishing
    /// crystal field.
    #[serde(rename = "mixed")]
    Mixed,
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Irrep::Gamma1 => "Γ1",
            Irrep::Gamma2 => "Γ2",
            Irrep::Gamma34 => "Γ34",
            Irrep::Mixed => "mixed",
        })
    }
}

/// One electronic eigenstate with definite `M mod 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfState {
    pub sigma: i8,
    /// `M mod 4` of the support, in `0..4`.
    pub sector: u8,
    pub jz: f64,
    pub vector: DVector<C64>,
}

impl CfState {
    /// Full S4 label. Sector 3 is `Γ3` and sector 1 is `Γ4`, the assignment
    /// under which `J₊` connects Γ3→Γ1, Γ2→Γ3, Γ4→Γ2 and Γ1→Γ4.
    pub fn gamma(&self) -> &'static str {
        match self.sector {
            0 => "Γ1",
            1 => "Γ4",
            2 => "Γ2",
            _ => "Γ3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfLevel {
    /// 1-based position in ascending energy (`8.n`).
    pub index: usize,
    /// cm⁻¹ above the ground level.
    pub energy: f64,
    pub irrep: Irrep,
    pub degeneracy: usize,
    /// `⟨J_z⟩` of the `σ = +1` member; zero for singlets.
    pub jz_expect: f64,
    /// `σ = +1` first.
    pub states: Vec<CfState>,
}

impl CfLevel {
    pub fn is_doublet(&self) -> bool {
        self.irrep == Irrep::Gamma34
    }

    pub fn is_singlet(&self) -> bool {
        matches!(self.irrep, Irrep::Gamma1 | Irrep::Gamma2)
    }

    pub fn state(&self, sigma: i8) -> Option<&CfState> {
        self.states.iter().find(|s| s.sigma == sigma)
    }

    /// `g_J ⟨J_z⟩` in Bohr magnetons.
    pub fn magnetic_moment(&self, g_j: f64) -> f64 {
        g_j * self.jz_expect
    }
}

/// Classified crystal-field spectrum of one ion.
#[derive(Debug, Clone, PartialEq)]
pub struct CfLevels {
    system: SpinSystem,
    ground_offset: f64,
    plus_sector: u8,
    levels: Vec<CfLevel>,
}

impl CfLevels {
    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    /// Absolute eigenvalue of the ground level; all level energies are
    /// reported relative to it.
    pub fn ground_offset(&self) -> f64 {
        self.ground_offset
    }

    /// `M mod 4` sector of the `σ = +1` branch.
    pub fn plus_sector(&self) -> u8 {
        self.plus_sector
    }

    pub fn levels(&self) -> &[CfLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `8.n`, 1-based.
    pub fn level(&self, n: usize) -> Result<&CfLevel> {
        n.checked_sub(1)
            .and_then(|k| self.levels.get(k))
            .ok_or(Error::LevelOutOfRange(n))
    }

    /// State `|8.n^σ⟩`; singlets only answer to `σ = +1`.
    pub fn state(&self, n: usize, sigma: i8) -> Result<&CfState> {
        let level = self.level(n)?;
        level.state(sigma).ok_or_else(|| Error::WrongLevelKind {
            level: n,
            reason: format!("no σ = {sigma:+} member"),
        })
    }

    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub(crate) fn all_states(&self) -> impl Iterator<Item = (usize, &CfState)> {
        self.levels.iter().flat_map(|l| l.states.iter().map(move |s| (l.index, s)))
    }

    /// Largest `|⟨a|J_z|b⟩|` or `|⟨a|J₊|b⟩|` over state pairs the S4
    /// selection rules forbid: `J_z` must stay in its sector and `J₊` must
    /// raise the sector by one.
    pub fn selection_rule_defect(&self) -> Result<f64> {
        let jz = build_jz(self.system.j)?.into_matrix();
        let jp = build_jplus(self.system.j)?.into_matrix();
        let states: Vec<&CfState> = self.all_states().map(|(_, s)| s).collect();
        let mut worst = 0.0f64;
        for a in &states {
            for b in &states {
                if a.sector != b.sector {
                    worst = worst.max(matrix_element(&a.vector, &jz, &b.vector).norm());
                }
                if a.sector != (b.sector + 1) % 4 {
                    worst = worst.max(matrix_element(&a.vector, &jp, &b.vector).norm());
                }
            }
        }
        Ok(worst)
    }
}

fn sector_of(m: HalfInt) -> u8 {
    m.twice().div_euclid(2).rem_euclid(4) as u8
}

fn sector_weights(v: &DVector<C64>, ms: &[HalfInt]) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (z, m) in v.iter().zip(ms) {
        w[sector_of(*m) as usize] += z.norm_sqr();
    }
    w
}

/// Rotates the columns of `basis` so that they diagonalize `op` restricted
/// to their span.
fn rotate_within(basis: &CMatrix, op: &CMatrix) -> Result<CMatrix> {
    let reduced = basis.adjoint() * op * basis;
    let eig = eigh(&reduced)?;
    Ok(basis * eig.vectors)
}

/// Groups a crystal-field eigensystem into levels and assigns the S4 labels.
///
/// Degenerate subspaces are first resolved into `M mod 4` sectors and then
/// into `J_z` eigenstates, so the output never depends on the mixture the
/// eigensolver happened to return. The `σ = +1` branch is the sector in which
/// the lowest doublet has positive `⟨J_z⟩`.
pub fn classify_levels(eig: &Eigensystem, sys: &SpinSystem) -> Result<CfLevels> {
    if !sys.j.is_integer() {
        return Err(Error::InvalidSpin(format!(
            "S4 classification is implemented for integer J only (got {})",
            sys.j
        )));
    }
    let dim = sys.electronic_dim();
    if eig.values.len() != dim || eig.vectors.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: eig.values.len(),
        });
    }
    let ms = sys.m_values();
    let sector_op = CMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        ms.iter().map(|&m| C64::from(f64::from(sector_of(m)))),
    ));
    let jz = build_jz(sys.j)?.into_matrix();

    // clusters of degenerate eigenvalues
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (k, &e) in eig.values.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if e - eig.values[*c.last().unwrap()] < DEGENERACY_TOL => c.push(k),
            _ => clusters.push(vec![k]),
        }
    }

    struct Raw {
        energy: f64,
        states: Vec<(u8, f64, DVector<C64>)>,
    }
    let mut raw = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let energy = cluster.iter().map(|&k| eig.values[k]).sum::<f64>() / cluster.len() as f64;
        let cols: Vec<_> = cluster.iter().map(|&k| eig.vectors.column(k).into_owned()).collect();
        let mut basis = CMatrix::from_columns(&cols);
        if cluster.len() > 1 {
            basis = rotate_within(&basis, &sector_op)?;
            // split by sector, then diagonalize J_z inside each sector block
            let mut by_sector: [Vec<DVector<C64>>; 4] = Default::default();
            for c in 0..basis.ncols() {
                let v = basis.column(c).into_owned();
                let w = sector_weights(&v, &ms);
                let s = (0..4).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
                by_sector[s].push(v);
            }
            let mut cols = Vec::with_capacity(cluster.len());
            for group in by_sector.iter().filter(|g| !g.is_empty()) {
                let block = CMatrix::from_columns(group);
                let block = if group.len() > 1 { rotate_within(&block, &jz)? } else { block };
                cols.extend(block.column_iter().map(|c| c.into_owned()));
            }
            basis = CMatrix::from_columns(&cols);
        }
        let mut states = Vec::with_capacity(basis.ncols());
        for c in 0..basis.ncols() {
            let mut v = basis.column(c).into_owned();
            fix_phase(&mut v);
            let w = sector_weights(&v, &ms);
            let s = (0..4).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
            let leak = 1.0 - w[s] / w.iter().sum::<f64>();
            if leak > SECTOR_LEAK_TOL {
                return Err(Error::BrokenSymmetry { leak });
            }
            let jz_val = matrix_element(&v, &jz, &v).re;
            states.push((s as u8, jz_val, v));
        }
        raw.push(Raw { energy, states });
    }

    let is_pair = |r: &Raw| {
        r.states.len() == 2 && {
            let (a, b) = (r.states[0].0, r.states[1].0);
            a % 2 == 1 && b % 2 == 1 && a != b
        }
    };
    let plus_sector = raw
        .iter()
        .find(|r| is_pair(r))
        .and_then(|r| r.states.iter().find(|s| s.1 > 0.0).map(|s| s.0))
        .unwrap_or(3);

    let ground = raw.first().map(|r| r.energy).unwrap_or(0.0);
    let levels = raw
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let irrep = match r.states.as_slice() {
                [(0, ..)] => Irrep::Gamma1,
                [(2, ..)] => Irrep::Gamma2,
                _ if is_pair(&r) => Irrep::Gamma34,
                _ => Irrep::Mixed,
            };
            let mut states: Vec<CfState> = r
                .states
                .into_iter()
                .map(|(sector, jz, vector)| CfState {
                    sigma: if sector % 2 == 1 && sector != plus_sector { -1 } else { 1 },
                    sector,
                    jz,
                    vector,
                })
                .collect();
            states.sort_by_key(|s| (-s.sigma, s.sector));
            let jz_expect = if irrep == Irrep::Gamma34 { states[0].jz } else { 0.0 };
            CfLevel {
                index: k + 1,
                energy: if k == 0 { 0.0 } else { r.energy - ground },
                irrep,
                degeneracy: states.len(),
                jz_expect,
                states,
            }
        })
        .collect();

    Ok(CfLevels {
        system: *sys,
        ground_offset: ground,
        plus_sector,
        levels,
    })
}
