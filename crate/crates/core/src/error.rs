use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InflateError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("exponential polynomial exceeded {cap} terms ({context}); the iterate is too deep for exact mode")]
    TermCap { cap: usize, context: String },

    #[error("outside empirical convergence radius: measured ratio {rho_hat:.4}")]
    Divergence { rho_hat: f64 },

    #[error("enumeration guard exceeded: {0}")]
    Guard(String),

    #[error("sequence hypothesis violated at k = {k}: b_k = {lhs} > {rhs}")]
    Hypothesis { k: usize, lhs: f64, rhs: f64 },

    #[error("nonlinear blow-up or instability at t = {t:.6e}: l1 norm grew by {growth:.3e}")]
    BlowUp { t: f64, growth: f64 },

    #[error("unknown case id `{0}`")]
    UnknownCase(String),
}

impl InflateError {
    /// Process exit code for the CLI: 1 for configuration problems, 2 for numeric guards.
    pub fn exit_code(&self) -> i32 {
        match self {
            InflateError::Config(_)
            | InflateError::LatticeMismatch(_)
            | InflateError::UnknownCase(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, InflateError>;
