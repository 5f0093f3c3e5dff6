use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::Point2;
use crate::mapexpr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cell ({i}, {j}) is outside a {width}x{height} grid")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("evaluation failed at ({}, {}): {source}", point.x, point.y)]
    Eval {
        point: Point2,
        #[source]
        source: EvalError,
    },

    #[error("point ({}, {}) is not in the image domain of `{map}`", point.x, point.y)]
    NotInImage { map: String, point: Point2 },

    #[error("map `{0}` has no inverse")]
    NoInverse(String),

    #[error("integration blew up at t = {time} (state ({}, {}))", state.x, state.y)]
    BlowUp { time: f64, state: Point2 },

    #[error("grid dimensions differ: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },

    #[error("grid has no member cells")]
    NoMembers,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
