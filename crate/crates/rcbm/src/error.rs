use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),

    #[error("Delaunay construction failure: {0}")]
    Delaunay(String),

    #[error("dual construction error: {msg} (cells {cells:?})")]
    Construction { msg: String, cells: Vec<usize> },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("linear solver error: {0}")]
    LinearSolver(String),

    #[error("solver failed after {iterations} iterations: {msg}")]
    Solver {
        msg: String,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("eigen solver error: {0}")]
    Eigen(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
