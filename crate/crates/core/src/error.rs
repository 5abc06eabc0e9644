use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("incompatible groups: {0}")]
    IncompatibleGroups(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid group spec: {0}")]
    InvalidSpec(&'static str),
    #[error("rotation angle {angle} is too close to pi for a principal logarithm")]
    LogBranchAmbiguous { angle: f64 },
    #[error("negative sampling scale {0}")]
    NegativeScale(f64),
    #[error("vector is not unit norm (norm {norm})")]
    NonUnitVector { norm: f64 },
    #[error("cannot normalize a vector of norm {norm}")]
    DegenerateDirection { norm: f64 },
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("node does not belong to this tape")]
    DetachedNode,
    #[error("node is not a scalar (length {len})")]
    NotScalar { len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("InfoNCE needs at least one negative")]
    EmptyNegatives,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("requested {requested} distractors but only {available} are available")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("at least two orbits are required")]
    SingleOrbit,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("action is not free")]
    NotFree,
    #[error("size bound exceeded: {size} > {bound}")]
    SizeBoundExceeded { size: usize, bound: usize },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("observation not known to the oracle encoder")]
    UnknownObservation,
}
