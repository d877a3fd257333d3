//! Config-driven front end for the microlens dipole-trap array simulator:
//! file formats, the register script interpreter, and the command
//! implementations behind the `microtrap` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod script;
