use thiserror::Error;

/// Errors raised by the geometry kernels and the field I/O layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix has an eigenvalue on the closed negative real axis ({re:.6e} + {im:.6e}i)")]
    EigenvalueOnCut { re: f64, im: f64 },

    #[error("t = {t} is outside the maximal existence interval [0, {limit})")]
    OutOfDomain { t: f64, limit: f64 },

    #[error("integration blew up at t = {t} (|B| = {norm:.3e})")]
    BlowupDetected { t: f64, norm: f64 },

    #[error("target is not in the image of the exponential map: {0}")]
    NotInImage(String),

    #[error("fields live on different meshes")]
    MeshMismatch,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("matrix is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },

    #[error("matrix is not skew (defect {defect:.3e})")]
    NotSkew { defect: f64 },

    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    #[error("unsupported dimension n = {0}")]
    UnsupportedDimension(usize),

    #[error("metric is not Riemannian: {0}")]
    NotRiemannian(String),

    #[error("invalid almost product structure: {0}")]
    InvalidP(String),

    #[error("invalid split triple: {0}")]
    InvalidTriple(String),

    #[error("direction is not tangent to the almost-product slice: {0}")]
    NotTangentToPV(String),

    #[error("direction is not in D2 (relative D1 part {0:.3e})")]
    NotInD2(f64),

    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
}

impl GeometryError {
    pub fn domain(msg: impl Into<String>) -> Self {
        GeometryError::Domain(msg.into())
    }
}

impl From<std::io::Error> for GeometryError {
    fn from(e: std::io::Error) -> Self {
        GeometryError::Io(e.to_string())
    }
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
