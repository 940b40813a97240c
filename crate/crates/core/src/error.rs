use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoflowError {
    #[error("invalid step function: {0}")]
    InvalidStepFn(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid drift: {0}")]
    InvalidDrift(String),

    #[error("time {time} is not a lattice time of the window [{start}, {end}] with step {dt}")]
    NotLatticeTime { time: f64, start: f64, end: f64, dt: f64 },

    #[error("time order violated: s = {s} must not exceed t = {t}")]
    TimeOrder { s: f64, t: f64 },

    #[error("no forward data after time {0}: the window ends there")]
    NoForwardData(f64),

    #[error("generalized inverse at y = {y} is infinite ({side}); the spatial window is too small")]
    Boundary { y: f64, side: &'static str },

    #[error("shift by {0} is not a multiple of the lattice step")]
    ShiftNotLattice(f64),

    #[error("shift leaves the simulated data: {0}")]
    ShiftOutOfData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("web walker left the window at (t = {t}, z = {z})")]
    WindowExit { t: i64, z: i64 },

    #[error("enumeration too large: {sites} free arrow sites (limit {limit})")]
    EnumerationTooLarge { sites: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, CoflowError>;
