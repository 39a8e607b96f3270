use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("age {age} outside the domain [0, {max})")]
    AgeDomain { age: f64, max: f64 },

    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("CFL condition violated: alpha*dt/da = {ratio} > 1")]
    Cfl { ratio: f64 },

    #[error("negative control value {value} at node {node}")]
    NegativeControl { node: usize, value: f64 },

    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("invariant violated at step {step}: {detail}")]
    Invariant { step: usize, detail: String },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("inconsistent demography: negative transfer rate rho_{k} = {value}")]
    Demography { k: usize, value: f64 },

    #[error("state outside the linearization domain: {0}")]
    OutsideDomain(String),

    #[error("division guard triggered at node {node}: {detail}")]
    DivisionGuard { node: usize, detail: String },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("Riccati solution blew up at age {age} for every tried initial value")]
    RiccatiBlowUp { age: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Validation problems map to exit code 1, numerical failures to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::AgeDomain { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidParameter(_)
                | Error::Cfl { .. }
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
