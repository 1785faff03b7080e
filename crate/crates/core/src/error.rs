use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("truncation N={truncation} too small: tail mass {tail:e} >= tolerance {tol:e}")]
    CutoffTooSmall { truncation: usize, tail: f64, tol: f64 },

    #[error("degenerate cat state: |alpha> - |-alpha> vanishes at alpha = 0")]
    DegenerateCat,

    #[error("truncation mismatch: {left} vs {right}")]
    TruncationMismatch { left: usize, right: usize },

    #[error("input must be normalized, got norm^2 = {norm_sq}")]
    Unnormalized { norm_sq: f64 },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("no cavity is associated with path `{0}`")]
    MissingAssociation(String),

    #[error("atom `{atom}` has no level `{outcome}`")]
    InvalidOutcome { atom: String, outcome: String },

    #[error("impossible outcome: P({atom} = {outcome}) = {probability:e}")]
    ImpossibleOutcome { atom: String, outcome: String, probability: f64 },

    #[error("elapsed time must be positive, got {0}")]
    NonpositiveElapsed(f64),

    #[error("state path labels do not match the slit geometry: {0}")]
    LabelGeometryMismatch(String),

    #[error("visibility needs at least 3 extrema in the window, found {found}")]
    InsufficientExtrema { found: usize },

    #[error("geometry has a single stage; four-slit transfer needs two")]
    SingleStageGeometry,

    #[error("density {value:e} at x = {x} is negative beyond round-off")]
    NegativeDensity { x: f64, value: f64 },

    #[error("dense dimension {dim} exceeds the oracle limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("trace mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}
