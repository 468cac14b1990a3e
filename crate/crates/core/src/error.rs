use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // ---- input validation ----
    #[error("entity `{entity}` has no transactions")]
    EmptyBatch { entity: String },

    #[error("entity `{entity}`: amount #{index} is not finite")]
    NonFiniteAmount { entity: String, index: usize },

    #[error("entity `{entity}`: amount #{index} is negative ({value})")]
    NegativeAmount {
        entity: String,
        index: usize,
        value: f64,
    },

    #[error("supplied standardization constant {supplied} is below the data maximum {max}")]
    SuppliedM0TooSmall { supplied: f64, max: f64 },

    #[error("dataset contains no entities")]
    EmptyDataset,

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    // ---- graph construction ----
    #[error("all pairwise distances are zero; supply sigma explicitly")]
    NoVariation,

    #[error("sigma must be a positive finite number, got {0}")]
    InvalidSigma(f64),

    #[error("k0 = {k0} is outside [1, {max}]")]
    K0OutOfRange { k0: usize, max: usize },

    #[error("k = {k} is outside [1, {max}]")]
    KOutOfRange { k: usize, max: usize },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    // ---- spectral stage ----
    #[error(
        "entity #{entity} has zero degree after sparsification; increase k0 or disable sparsification"
    )]
    ZeroDegree { entity: usize },

    #[error("eigensolver did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("n_min = {n_min} must be in [1, n) with n = {n}")]
    DegenerateProportion { n_min: usize, n: usize },

    #[error("subsample size {n_s} is outside [1, {n}]")]
    SizeOutOfRange { n_s: usize, n: usize },

    #[error(
        "subsample Gram matrix has rank below k = {k} (eigenvalue ratio {ratio:e}); \
         the sample probably missed a cluster, resample or enlarge n_s"
    )]
    RankDeficientSample { k: usize, ratio: f64 },

    #[error("need at least two eigenvalues, got {0}")]
    TooFewEigenvalues(usize),

    // ---- clustering / evaluation ----
    #[error("k = {k} exceeds the number of points {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("silhouette needs at least two occupied clusters")]
    SingleCluster,

    #[error("partitions have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Errors caused by malformed or inconsistent input data rather than by
    /// the clustering pipeline itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyBatch { .. }
                | Error::NonFiniteAmount { .. }
                | Error::NegativeAmount { .. }
                | Error::SuppliedM0TooSmall { .. }
                | Error::EmptyDataset
                | Error::Csv { .. }
                | Error::Io(_)
                | Error::UnknownEntity(_)
                | Error::LengthMismatch { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
