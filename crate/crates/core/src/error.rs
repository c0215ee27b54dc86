use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid angular momentum: {0}")]
    InvalidSpin(String),

    #[error("unsupported Stevens operator O_{k}^{q}")]
    UnsupportedStevens { k: u32, q: i32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("eigensolver failed to converge")]
    EigenConvergence,

    #[error("broken S4 symmetry: eigenvector spreads over several M mod 4 sectors (leak {leak:e})")]
    BrokenSymmetry { leak: f64 },

    #[error("ambiguous hyperfine labelling: state {label} claimed twice")]
    AmbiguousLabel { label: String },

    #[error("crystal-field level 8.{0} does not exist")]
    LevelOutOfRange(usize),

    #[error("level 8.{level} has the wrong character: {reason}")]
    WrongLevelKind { level: usize, reason: String },

    #[error("zero energy denominator between levels 8.{0} and 8.{1}")]
    ZeroDenominator(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular normal matrix; poorly determined direction: {direction}")]
    SingularNormalMatrix { direction: String },

    #[error("fit did not converge within {iterations} iterations")]
    IterationLimit { iterations: usize },

    #[error("model evaluation failed at the current parameters: {0}")]
    Infeasible(String),
}
