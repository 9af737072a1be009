use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh parse error (line {line}): {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("unsupported quadrature degree {0} (supported: 1, 2, 3, 5)")]
    UnsupportedDegree(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Newton iteration did not converge ({context}): {iterations} iterations, last residual {residual:e}")]
    NewtonDiverged {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("singular local Jacobian on element {0}")]
    SingularLocalJacobian(usize),

    #[error("singular matrix: pivot {pivot} has magnitude {value:e}")]
    SingularMatrix { pivot: usize, value: f64 },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach an element id to a diverged local solve.
    pub(crate) fn on_element(self, elem: usize) -> Self {
        match self {
            Error::NewtonDiverged {
                context,
                iterations,
                residual,
            } => Error::NewtonDiverged {
                context: format!("{context} on element {elem}"),
                iterations,
                residual,
            },
            other => other,
        }
    }
}
