use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh parse error: {0}")]
    MshParse(String),
    #[error("unsupported MSH version: {0}")]
    MshVersion(String),
    #[error("unsupported element type {typ} in MSH file")]
    MshElementType { typ: i32 },
    #[error("element references node {node} outside the node block")]
    MshDanglingNode { node: usize },
    #[error("unsupported quadrature exactness degree {0} (have 1..=6)")]
    UnsupportedQuadratureDegree(usize),
    #[error("basis of {0:?} cannot be evaluated pointwise")]
    NotPointwiseEvaluable(crate::elements::ElementFamily),
    #[error("{op} requires spaces built on the same mesh")]
    MeshMismatch { op: &'static str },
    #[error("{op}: space family {family:?} not admissible ({reason})")]
    InvalidSpace {
        op: &'static str,
        family: crate::elements::ElementFamily,
        reason: &'static str,
    },
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("index {index} out of range {len} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("matrix is singular to working precision")]
    SingularMatrix,
    #[error("method {method} is not applicable to problem {problem}: {reason}")]
    MethodUnavailable {
        method: String,
        problem: String,
        reason: String,
    },
    #[error("non-finite state at time step {step}")]
    NonFiniteState { step: usize },
    #[error("pointwise domain error: {0}")]
    PointwiseDomain(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report parse error: {0}")]
    ReportParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
