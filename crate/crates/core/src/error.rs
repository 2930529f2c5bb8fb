use std::fmt;

use crate::spectral::BandGrid;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("incompatible band grids: {left} vs {right}")]
    IncompatibleGrid { left: BandGrid, right: BandGrid },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("shape mismatch in `{op}`: {}", ShapeList(.shapes))]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value produced by `{0}`")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, shapes: &[&[usize]]) -> Self {
        Error::Shape {
            op,
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Prefix a numeric error with the layer that produced it.
    pub(crate) fn in_layer(self, layer: &str) -> Self {
        match self {
            Error::NonFinite(op) => Error::NonFinite(format!("{layer}/{op}")),
            other => other,
        }
    }
}

struct ShapeList<'a>(&'a [Vec<usize>]);

impl fmt::Display for ShapeList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" vs ")?;
            }
            write!(f, "{s:?}")?;
        }
        Ok(())
    }
}
