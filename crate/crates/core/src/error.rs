//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter violated a precondition; the message names it.
    InvalidInput(String),
    /// Light resonant with an atomic line: the detuning denominator is zero.
    ResonantLight,
    /// Lens mask with no illuminated lenslet.
    EmptyMask,
    /// Operation requires a red-detuned (bound) trap.
    BlueDetuned,
    /// No bound potential minimum near the requested site.
    NoMinimum,
    /// Site id not present in the configuration.
    UnknownSite(usize),
    /// Fit input does not constrain the parameters (e.g. all abscissae equal).
    DegenerateFit(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::ResonantLight => {
                write!(f, "resonant light: zero detuning makes the light shift singular")
            }
            Error::EmptyMask => write!(f, "illuminated_mask empty: no lenslet illuminated"),
            Error::BlueDetuned => {
                write!(f, "unsupported configuration: blue-detuned light does not form a bound trap")
            }
            Error::NoMinimum => write!(f, "no bound potential minimum found near the site center"),
            Error::UnknownSite(id) => write!(f, "unknown site id {id}"),
            Error::DegenerateFit(msg) => write!(f, "degenerate fit: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
