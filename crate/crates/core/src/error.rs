use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("CFL condition violated: c = {c} must satisfy 0 < c < 1/2")]
    Cfl { c: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grids are not nested: {0}")]
    Nesting(String),

    #[error("index ({i}, {j}) out of range for a {rows}x{cols} noise field")]
    Index {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("quadrature did not converge (worst residual {residual:e} over [{a}, {b}])")]
    Quadrature { residual: f64, a: f64, b: f64 },

    #[error("scheme diverged at level n = {n}, step {step} (value {value})")]
    Divergence { n: u32, step: usize, value: f64 },

    #[error("rate fit refused: {0}")]
    Fit(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
