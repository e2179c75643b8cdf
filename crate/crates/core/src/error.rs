use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mass partition: {0}")]
    InvalidPartition(String),
    #[error("invalid truncation ladder: {0}")]
    InvalidLadder(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("q = {0} is outside the interior of dom kappa")]
    Domain(f64),
    #[error("g(q) = q kappa'(q) - kappa(q) has no sign change on the searchable interior")]
    NoCriticalPoint,
    #[error("y = {0} lies at or below the last level of the ladder")]
    LadderExhausted(f64),
    #[error("branch rate is zero at level {0}")]
    ZeroRate(usize),
    #[error("spine jump activity is infinite and no truncation level was given")]
    InfiniteActivity,
    #[error("kill-rate integral diverges at omega = {0}")]
    Diverges(f64),
    #[error("exponential moment of the jump measure diverges at omega = {0}")]
    Moment(f64),
    #[error("population cap {cap} exceeded at t = {time}")]
    PopulationCap { cap: usize, time: f64 },
    #[error("barrier tracking was not armed for omega = {omega}, mesh = {mesh}")]
    BarrierNotArmed { omega: f64, mesh: f64 },
    #[error("empty population")]
    Empty,
    #[error("too few samples (effective n = {0})")]
    TooFewSamples(f64),
    #[error("no prefix of the label was alive at s = {0}")]
    NotAlive(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
