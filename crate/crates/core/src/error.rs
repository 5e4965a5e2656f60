use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty topology spec")]
    EmptyTopology,
    #[error("malformed topology token `{0}`")]
    MalformedToken(String),
    #[error("adjacent items share label `{0}`")]
    AdjacentDuplicate(String),
    #[error("label `{0}` is not in the alphabet")]
    UnknownLabel(String),
    #[error("topology does not map alignments to a unique label sequence")]
    AmbiguousTopology,
    #[error("blank label `{0}` appears in the target sequence")]
    BlankInTargets(String),
    #[error("empty target sequence")]
    EmptyTargets,
    #[error("no alignment of length {0} exists")]
    NoAlignment(usize),
    #[error("enumeration requested for T={requested}, cap is {cap}")]
    EnumerationCap { requested: usize, cap: usize },
    #[error("total path mass is zero")]
    ZeroMass,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model and loss are incompatible: {0}")]
    Incompatible(String),
    #[error("prior has zero mass on reachable label `{0}`")]
    ZeroPrior(String),
    #[error("parse error: {0}")]
    Parse(String),
}
