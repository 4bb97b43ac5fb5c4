//! Error type shared by the whole pipeline.

use thiserror::Error;

/// Everything that can go wrong between a config file and a CSV row.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on arguments was violated (negative time, μ ≤ 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad configuration: parse failures, unknown keys, invalid values,
    /// or a Hermite order above the overflow cap.
    #[error("config error{}: {message}", match line { Some(l) => format!(" (line {l})"), None => String::new() })]
    Config {
        line: Option<usize>,
        message: String,
    },

    /// σ(t) left (0, ∞): the mass solution blew up at the given time.
    #[error("singular sigma: mass solution blows up near t = {t:.6}")]
    SingularSigma { t: f64 },

    /// Z⁻ crossed zero: the germ degenerated at the given time.
    #[error("germ degeneracy at t = {t:.6}; field is valid only for earlier times")]
    GermDegeneracy { t: f64 },

    /// The initial field has (numerically) zero mass; constants cannot be matched.
    #[error("degenerate mass: initial field integrates to zero within tolerance")]
    DegenerateMass,

    /// Off-diagonal second moments beyond tolerance; the axis-aligned germ
    /// cannot represent rotated data.
    #[error("unsupported anisotropy: |alpha12|/trace = {ratio:.3e} exceeds tolerance")]
    Anisotropy { ratio: f64 },

    /// A grid is too coarse for the requested operation.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// The ODE integration produced a non-finite state.
    #[error("integration blow-up at t = {t:.6}")]
    Blowup { t: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical validity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io(_) => 2,
            _ => 3,
        }
    }
}
