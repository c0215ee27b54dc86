//! Angular-momentum matrices and Stevens operator equivalents.
//!
//! Every single-spin operator is expressed in the `|J, M⟩` basis ordered by
//! ascending `M`; product-space operators use the lexicographic `(M, m_z)`
//! order, i.e. `kron(A_electronic, B_nuclear)`.
//!
//! Stevens operators follow the tabulated operator-equivalent polynomials.
//! Positive `q` gives the cosine combinations (`J₊^q + J₋^q`), negative `q`
//! the sine combinations `−i(J₊^|q| − J₋^|q|)` with identical prefactors, so
//! e.g. `O_4^{-4} = −(i/2)(J₊⁴ − J₋⁴)`.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::spin::{check_spin, HalfInt};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// The `(k, q)` pairs [`build_stevens`] knows about: everything an S4 site
/// admits for `k ≤ 6`.
pub const SUPPORTED_STEVENS: [(u32, i32); 7] = [(2, 0), (4, 0), (4, 4), (4, -4), (6, 0), (6, 4), (6, -4)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BasisLabel {
    /// `|M⟩` of a single angular momentum.
    Single(HalfInt),
    /// `|M⟩ ⊗ |m_z⟩`.
    Product { m: HalfInt, m_z: HalfInt },
}

/// A square complex matrix together with the magnetic labels of its basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    matrix: CMatrix,
    basis: Vec<BasisLabel>,
}

impl OperatorMatrix {
    pub fn new(matrix: CMatrix, basis: Vec<BasisLabel>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if basis.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: basis.len(),
            });
        }
        Ok(OperatorMatrix { matrix, basis })
    }

    pub fn zeros(basis: Vec<BasisLabel>) -> Self {
        let n = basis.len();
        OperatorMatrix {
            matrix: CMatrix::zeros(n, n),
            basis,
        }
    }

    pub fn identity(basis: Vec<BasisLabel>) -> Self {
        let n = basis.len();
        OperatorMatrix {
            matrix: CMatrix::identity(n, n),
            basis,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn basis(&self) -> &[BasisLabel] {
        &self.basis
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Largest entry of `|A − A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.matrix[(r, c)] - self.matrix[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix {
            matrix: self.matrix.adjoint(),
            basis: self.basis.clone(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        OperatorMatrix {
            matrix: self.matrix.map(|z| z * factor),
            basis: self.basis.clone(),
        }
    }

    fn check_same_basis(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix {
            matrix: &self.matrix + &other.matrix,
            basis: self.basis.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix {
            matrix: &self.matrix - &other.matrix,
            basis: self.basis.clone(),
        })
    }

    /// Operator product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix {
            matrix: &self.matrix * &other.matrix,
            basis: self.basis.clone(),
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix {
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
            basis: self.basis.clone(),
        })
    }

    /// Largest elementwise deviation from another operator on the same basis.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_basis(other)?;
        Ok(self
            .matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Tensor product `self ⊗ nuclear`, both single-spin operators.
    pub fn kron(&self, nuclear: &Self) -> Result<Self> {
        let mut basis = Vec::with_capacity(self.dim() * nuclear.dim());
        for a in &self.basis {
            for b in &nuclear.basis {
                match (a, b) {
                    (BasisLabel::Single(m), BasisLabel::Single(m_z)) => {
                        basis.push(BasisLabel::Product { m: *m, m_z: *m_z })
                    }
                    _ => return Err(Error::InvalidInput("kron expects two single-spin operators".into())),
                }
            }
        }
        Ok(OperatorMatrix {
            matrix: self.matrix.kronecker(&nuclear.matrix),
            basis,
        })
    }
}

fn single_basis(j: HalfInt) -> Vec<BasisLabel> {
    j.projections().map(BasisLabel::Single).collect()
}

pub fn build_identity(j: HalfInt) -> Result<OperatorMatrix> {
    check_spin(j)?;
    Ok(OperatorMatrix::identity(single_basis(j)))
}

/// `J_z = diag(−j, …, +j)`.
pub fn build_jz(j: HalfInt) -> Result<OperatorMatrix> {
    check_spin(j)?;
    let basis = single_basis(j);
    let diag: Vec<C64> = j.projections().map(|m| C64::new(m.value(), 0.0)).collect();
    let matrix = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    Ok(OperatorMatrix { matrix, basis })
}

/// Raising operator with `⟨M+1|J₊|M⟩ = √(j(j+1) − M(M+1))`.
pub fn build_jplus(j: HalfInt) -> Result<OperatorMatrix> {
    check_spin(j)?;
    let basis = single_basis(j);
    let n = basis.len();
    let jj = j.value() * (j.value() + 1.0);
    let mut matrix = CMatrix::zeros(n, n);
    for (col, m) in j.projections().enumerate().take(n.saturating_sub(1)) {
        let m = m.value();
        matrix[(col + 1, col)] = C64::new((jj - m * (m + 1.0)).sqrt(), 0.0);
    }
    Ok(OperatorMatrix { matrix, basis })
}

/// `J₋ = J₊†`.
pub fn build_jminus(j: HalfInt) -> Result<OperatorMatrix> {
    Ok(build_jplus(j)?.adjoint())
}

/// Stevens operator equivalent `O_k^q` for angular momentum `j`.
pub fn build_stevens(k: u32, q: i32, j: HalfInt) -> Result<OperatorMatrix> {
    if !SUPPORTED_STEVENS.contains(&(k, q)) {
        return Err(Error::UnsupportedStevens { k, q });
    }
    check_spin(j)?;
    let basis = single_basis(j);
    let n = basis.len();
    let x = j.value() * (j.value() + 1.0);
    let id = CMatrix::identity(n, n);
    let jz = build_jz(j)?.into_matrix();
    let jp = build_jplus(j)?.into_matrix();
    let jm = jp.adjoint();
    let jz2 = &jz * &jz;
    let jz4 = &jz2 * &jz2;
    let jp4 = &jp * &jp * &jp * &jp;
    let jm4 = &jm * &jm * &jm * &jm;
    let minus_i = C64::new(0.0, -1.0);

    // O_k^{±4} share the same polynomial prefactors; only the ladder
    // combination differs.
    let ladder4 = |q: i32| -> CMatrix {
        if q > 0 {
            &jp4 + &jm4
        } else {
            (&jp4 - &jm4) * minus_i
        }
    };

    let matrix = match (k, q) {
        (2, 0) => &jz2 * C64::from(3.0) - &id * C64::from(x),
        (4, 0) => {
            &jz4 * C64::from(35.0) - &jz2 * C64::from(30.0 * x - 25.0) + &id * C64::from(3.0 * x * x - 6.0 * x)
        }
        (4, q) => ladder4(q) * C64::from(0.5),
        (6, 0) => {
            let jz6 = &jz4 * &jz2;
            &jz6 * C64::from(231.0) - &jz4 * C64::from(315.0 * x - 735.0)
                + &jz2 * C64::from(105.0 * x * x - 525.0 * x + 294.0)
                + &id * C64::from(-5.0 * x * x * x + 40.0 * x * x - 60.0 * x)
        }
        (6, q) => {
            let poly = &jz2 * C64::from(11.0) - &id * C64::from(x + 38.0);
            let lad = ladder4(q);
            (&poly * &lad + &lad * &poly) * C64::from(0.25)
        }
        _ => unreachable!("filtered by SUPPORTED_STEVENS"),
    };
    Ok(OperatorMatrix { matrix, basis })
}

/// `exp(iφJ_z)` as a diagonal matrix.
pub fn build_z_rotation(j: HalfInt, phi: f64) -> Result<OperatorMatrix> {
    check_spin(j)?;
    let diag: Vec<C64> = j.projections().map(|m| C64::from_polar(1.0, phi * m.value())).collect();
    Ok(OperatorMatrix {
        matrix: CMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
        basis: single_basis(j),
    })
}
