use thiserror::Error;

use crate::geometry::Vec2;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level set gradient vanishes at ({}, {})", .0.x, .0.y)]
    DegenerateGradient(Vec2),

    #[error("no boundary root within search radius {radius} from ({}, {}) along ({}, {})", .x.x, .x.y, .dir.x, .dir.y)]
    NoRoot { x: Vec2, dir: Vec2, radius: f64 },

    #[error("degenerate cut in element {element}: {reason}")]
    DegenerateCut { element: usize, reason: String },

    #[error("degenerate element (|det| = {det:e})")]
    DegenerateElement { det: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("iterative solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("matrix is singular (pivot {pivot:e})")]
    SingularMatrix { pivot: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Configuration and input problems, as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Io(_))
    }
}
