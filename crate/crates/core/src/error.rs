use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("weight matrix `{0}` is not symmetric positive (semi)definite")]
    NonPsdWeights(&'static str),
    #[error("obstacle {index} covers the start position")]
    ObstacleCoversStart { index: usize },

    #[error("times must be strictly increasing (violated at node {index})")]
    NonMonotoneTimes { index: usize },
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("boundary measure at time {found}, expected {expected}")]
    TimeMismatch { expected: f64, found: f64 },

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
    #[error("index set entry {index} out of range for state dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("time shift must be nonnegative, got {0}")]
    NegativeShift(f64),
    #[error("sample set is empty: {0}")]
    EmptySamples(&'static str),
    #[error("declared tolerances ({declared_eps}, {declared_eps_t}) below estimated ({eps_hat}, {eps_t_hat})")]
    DeclaredBelowEstimate {
        declared_eps: f64,
        declared_eps_t: f64,
        eps_hat: f64,
        eps_t_hat: f64,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("step {step} does not divide interval [{start}, {end}]")]
    StepMismatch { step: f64, start: f64, end: f64 },
    #[error("state left the safety box at t = {time}: {state:?}")]
    SafetyBoxExit { time: f64, state: Vec<f64> },
    #[error("control knot {index} lies outside the control box")]
    KnotOutsideBox { index: usize },
    #[error("entry override at t = {0} is not an interior partition node")]
    OverrideNotAtNode(f64),
    #[error("primal pair was not produced by this rollout")]
    ProvenanceMismatch,
    #[error("probe {0} has zero sampled C1 norm")]
    ZeroNormProbe(usize),

    #[error("mixture weights sum to {found}, expected {expected}")]
    WeightSum { expected: f64, found: f64 },

    #[error("linear program is infeasible")]
    LpInfeasible,
    #[error("linear program is unbounded")]
    LpUnbounded,
    #[error("linear program hit the iteration limit ({0})")]
    LpIterationLimit(usize),
    #[error("linear program solver failed: {0}")]
    LpSolver(String),
    #[error("dual update infeasible: {0}")]
    DualInfeasible(String),

    #[error("every candidate was pruned, even after {retries} relaxations of tau")]
    AllPruned { retries: usize },
    #[error("problem is not time-homogeneous; time shifts are not certified")]
    NotTimeHomogeneous,
    #[error("reports refer to different problems ({0} vs {1})")]
    MixedProblems(String, String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}
