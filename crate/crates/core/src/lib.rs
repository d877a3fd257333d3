//! Physics core for simulating arrays of optical dipole traps generated by a
//! microlens array.
//!
//! The crate is `no_std` (with `alloc`) and fully deterministic: every
//! transcendental goes through [`libm`], and all Monte Carlo sampling is
//! driven by a counter-based, per-atom RNG, so identical inputs reproduce
//! bit-identical results on any platform and under any evaluation order.
//!
//! Layout follows the physics pipeline:
//!
//! * [`species`] — atomic constants and the intensity-to-energy maps
//!   (light shift, photon scattering, recoil),
//! * [`optics`] — lens-array geometry, illumination beams and the Gaussian
//!   focus field,
//! * [`field`] — the summed trap potential and its analytic gradient,
//! * [`traps`] — per-site characterization and gate-feasibility ratios,
//! * [`dynamics`] — classical trajectories: loading, storage with recoil
//!   heating, site addressing and time-of-flight thermometry,
//! * [`register`] — the discrete qubit-register state machine,
//! * [`imaging`] — synthetic fluorescence frames and spot detection.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod constants;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod fitting;
pub mod imaging;
mod math;
pub mod optics;
pub mod register;
pub mod rng;
pub mod species;
pub mod traps;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
