use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{
    build_cf_hamiltonian, build_electronuclear_hamiltonian, build_hf_hamiltonian, classify_levels, diagonalize, eigh,
    CfLevels, CfParameters, HyperfineConstants,
};
use crate::angular::{build_identity, CMatrix, OperatorMatrix, C64};
use crate::error::{Error, Result};
use crate::spin::{HalfInt, SpinSystem};

/// `|8.n^σ, m_z⟩`
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HfLabel {
    pub n: usize,
    pub sigma: i8,
    pub m_z: HalfInt,
}

impl HfLabel {
    pub fn new(n: usize, sigma: i8, m_z: HalfInt) -> Self {
        HfLabel { n, sigma, m_z }
    }

    /// Time-reversed partner `(n, −σ, −m_z)`; singlets keep `σ = +1`.
    pub fn kramers_partner(&self, doublet: bool) -> Self {
        HfLabel {
            n: self.n,
            sigma: if doublet { -self.sigma } else { self.sigma },
            m_z: -self.m_z,
        }
    }
}

impl fmt::Display for HfLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.sigma > 0 { "+" } else { "-" };
        write!(f, "|8.{}{}, {}>", self.n, s, self.m_z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfLevel {
    pub n: usize,
    pub sigma: i8,
    pub m_z: HalfInt,
    /// cm⁻¹ relative to the crystal-field ground level.
    pub energy: f64,
    /// `energy − E_n`
    pub correction: f64,
}

impl HfLevel {
    pub fn label(&self) -> HfLabel {
        HfLabel::new(self.n, self.sigma, self.m_z)
    }
}

/// Labelled electron-nuclear eigenstates together with the crystal-field
/// levels they derive from.
#[derive(Debug, Clone)]
pub struct HfLevels {
    cf: CfLevels,
    levels: Vec<HfLevel>,
    index: BTreeMap<HfLabel, usize>,
}

impl HfLevels {
    pub fn cf(&self) -> &CfLevels {
        &self.cf
    }

    /// Sorted by `(n, −σ, m_z)`.
    pub fn levels(&self) -> &[HfLevel] {
        &self.levels
    }

    pub fn get(&self, n: usize, sigma: i8, m_z: HalfInt) -> Result<&HfLevel> {
        let label = HfLabel::new(n, sigma, m_z);
        self.index
            .get(&label)
            .map(|&k| &self.levels[k])
            .ok_or_else(|| Error::InvalidInput(format!("no hyperfine state {label}")))
    }

    pub fn of_level(&self, n: usize) -> impl Iterator<Item = &HfLevel> {
        self.levels.iter().filter(move |l| l.n == n)
    }
}

/// Full electron-nuclear diagonalization with every eigenstate labelled by
/// its dominant product state `|8.n^σ⟩ ⊗ |m_z⟩`.
pub fn hf_levels_exact(p: &CfParameters, hf: &HyperfineConstants, sys: &SpinSystem) -> Result<HfLevels> {
    let h_cf = build_cf_hamiltonian(p, sys)?;
    let cf = classify_levels(&diagonalize(&h_cf)?, sys)?;
    hf_levels_with(&h_cf, cf, hf)
}

/// Same as [`hf_levels_exact`] for an already classified crystal field.
pub fn hf_levels_with(h_cf: &OperatorMatrix, cf: CfLevels, hf: &HyperfineConstants) -> Result<HfLevels> {
    let sys = *cf.system();
    if let Some(l) = cf.levels().iter().find(|l| l.irrep == super::Irrep::Mixed) {
        return Err(Error::WrongLevelKind {
            level: l.index,
            reason: "accidental degeneracy leaves hyperfine labels undefined".into(),
        });
    }
    let full =h_cf.kron(&build_identity(sys.i)?)?.add(&build_hf_hamiltonian(hf, &sys)?)?;
    let n_nuc = sys.nuclear_dim();
    let mzs = sys.mz_values();

    // candidate labels as product vectors
    let mut labels: Vec<(HfLabel, u8, usize, DVector<C64>)> = Vec::new();
    for (n, st) in cf.all_states() {
        for (k, &m_z) in mzs.iter().enumerate() {
            let mut nuc = DVector::zeros(n_nuc);
            nuc[k] = C64::from(1.0);
            labels.push((HfLabel::new(n, st.sigma, m_z), st.sector, k, st.vector.kronecker(&nuc)));
        }
    }

    // J·I conserves M + m_z and the crystal field conserves M mod 4, so
    // 2(M + m_z) mod 8 splits the product space into independent blocks;
    // Kramers partners always land in different blocks.
    let block_of = |twice_m: i32, twice_mz: i32| (twice_m + twice_mz).rem_euclid(8) as usize;
    let mut blocks: [Vec<usize>; 8] = Default::default();
    for (idx, label) in full.basis().iter().enumerate() {
        if let crate::angular::BasisLabel::Product { m, m_z } = label {
            blocks[block_of(m.twice(), m_z.twice())].push(idx);
        }
    }

    let mut out = Vec::with_capacity(sys.product_dim());
    let mut index = BTreeMap::new();
    for (b, rows) in blocks.iter().enumerate().filter(|(_, r)| !r.is_empty()) {
        let sub = CMatrix::from_fn(rows.len(), rows.len(), |r, c| full.matrix()[(rows[r], rows[c])]);
        // M ≡ sector (mod 4) implies 2M ≡ 2·sector (mod 8)
        let block_labels: Vec<_> = labels
            .iter()
            .filter(|(_, sector, k, _)| block_of(2 * i32::from(*sector), mzs[*k].twice()) == b)
            .map(|(l, _, _, v)| (*l, DVector::from_iterator(rows.len(), rows.iter().map(|&r| v[r]))))
            .collect();
        if block_labels.len() != rows.len() {
            return Err(Error::BrokenSymmetry {
                leak: (block_labels.len() as f64 - rows.len() as f64).abs(),
            });
        }
        let mut eig = eigh(&sub)?;
        resolve_degenerate(&mut eig.vectors, &eig.values, &block_labels)?;

        let mut taken = vec![false; block_labels.len()];
        for c in 0..rows.len() {
            let v = eig.vectors.column(c);
            let (best, _) = block_labels
                .iter()
                .enumerate()
                .map(|(k, (_, lv))| (k, lv.dotc(&v).norm_sqr()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty block");
            if taken[best] {
                return Err(Error::AmbiguousLabel {
                    label: block_labels[best].0.to_string(),
                });
            }
            taken[best] = true;
            let label = block_labels[best].0;
            let energy = eig.values[c] - cf.ground_offset();
            let parent = cf.level(label.n)?.energy;
            out.push(HfLevel {
                n: label.n,
                sigma: label.sigma,
                m_z: label.m_z,
                energy,
                correction: energy - parent,
            });
        }
    }
    out.sort_by_key(|l| (l.n, -l.sigma, l.m_z));
    for (k, l) in out.iter().enumerate() {
        index.insert(l.label(), k);
    }
    Ok(HfLevels { cf, levels: out, index })
}

/// Inside each cluster of degenerate eigenvalues, rotates the eigenvectors
/// onto the label states (only happens for vanishing couplings).
fn resolve_degenerate(vectors: &mut CMatrix, values: &[f64], labels: &[(HfLabel, DVector<C64>)]) -> Result<()> {
    let n = values.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[end - 1] < 1e-9 * values[end].abs().max(1.0) {
            end += 1;
        }
        if end - start > 1 {
            let dim = vectors.nrows();
            let mut weight = CMatrix::zeros(dim, dim);
            for (k, (_, lv)) in labels.iter().enumerate() {
                weight += lv * lv.adjoint() * C64::from(k as f64);
            }
            let basis = vectors.columns(start, end - start).into_owned();
            let reduced = basis.adjoint() * &weight * &basis;
            let rot = eigh(&reduced)?;
            let rotated = basis * rot.vectors;
            vectors.columns_mut(start, end - start).copy_from(&rotated);
        }
        start = end;
    }
    Ok(())
}

/// All `(2J+1)(2I+1)` eigenvalues of the electron-nuclear Hamiltonian from a
/// single dense diagonalization, relative to the crystal-field ground level.
pub fn full_spectrum(p: &CfParameters, hf: &HyperfineConstants, sys: &SpinSystem) -> Result<Vec<f64>> {
    let ground = diagonalize(&build_cf_hamiltonian(p, sys)?)?.values.first().copied().unwrap_or(0.0);
    let h = build_electronuclear_hamiltonian(p, hf, sys)?;
    Ok(diagonalize(&h)?.values.into_iter().map(|e| e - ground).collect())
}
