//! Error type shared by the solver crate.

use alloc::string::String;
use core::fmt;

/// Failure modes surfaced by the library.
///
/// `Invalid` means the caller's inputs violate a documented precondition.
/// `IllPosed` means the inputs are structurally fine but the optimization
/// problem itself has no finite solution (diverging dual integrals, budget
/// that no multiplier can meet). `Numerical` means an iteration failed to
/// reach its tolerance within its cap.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    Invalid(String),
    IllPosed(String),
    Numerical(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::IllPosed(msg) => write!(f, "ill-posed problem: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

// Shorthand constructors; `invalid!("bad {x}")` reads better at call sites
// than the enum plumbing. Crate-internal on purpose.
macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::Invalid(alloc::format!($($arg)*)) };
}
macro_rules! ill_posed {
    ($($arg:tt)*) => { $crate::error::Error::IllPosed(alloc::format!($($arg)*)) };
}
macro_rules! numerical {
    ($($arg:tt)*) => { $crate::error::Error::Numerical(alloc::format!($($arg)*)) };
}

pub(crate) use {ill_posed, invalid, numerical};
