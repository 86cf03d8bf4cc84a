use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u32),
    #[error("modulus {p} exceeds the single-word cap {cap}")]
    ModulusTooLarge { p: u32, cap: u32 },
    #[error("modulus mismatch: {0} vs {1}")]
    ModulusMismatch(u32, u32),
    #[error("residue {value} is not in 0..{p}")]
    ResidueOutOfRange { value: u64, p: u32 },
    #[error("scalar must be a unit mod {0}")]
    ZeroScalar(u32),
    #[error("size {size} outside [{min}, {max}]")]
    SizeOutOfRange { size: usize, min: usize, max: usize },
    #[error("empty set at position {0}")]
    EmptySet(usize),
    #[error("grid has {got} sets but the map has {expected} columns")]
    ArityMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("column swap needs two distinct indices, got {0} twice")]
    SameIndex(usize),
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("matrix is singular")]
    Singular,
    #[error("map has rank {rank} < {rows}; no theorem covers rank-deficient maps")]
    RankDeficient { rank: usize, rows: usize },
    #[error("map is {rows}x{cols}; expected {rows}x{}", rows + 1)]
    NotCorank1 { rows: usize, cols: usize },
    #[error("image needs {required} cells, cap is {cap}")]
    CellCapExceeded { required: u128, cap: u64 },
    #[error("{families} grid families exceed the exhaustive cap {cap}; use random mode")]
    FamilyCapExceeded { families: u128, cap: u128 },
    #[error("kernel support must be nonempty")]
    EmptySupport,
    #[error("covering claim needs the first n-1 sizes equal, got {0:?}")]
    NonUniformCover(Vec<usize>),
    #[error("k = {k} outside the window [{lo}, {hi}] for p = {p}")]
    OutsideWindow {
        p: u32,
        k: usize,
        lo: usize,
        hi: usize,
    },
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("soundness violated: image size {image_size} below {theorem} bound {bound}")]
    SoundnessViolation {
        theorem: String,
        image_size: u64,
        bound: u64,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}
