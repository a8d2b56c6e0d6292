//! Resonant tunneling in a 3D quantum waveguide with two narrow constrictions.
//!
//! A cylindrical waveguide of cross-section `D` is pinched by two conical
//! narrows of diameter `eps` placed a distance `d` apart; a solenoid threads
//! the chamber between them. For Fermi levels inside the first spectral band
//! the structure behaves as a resonator coupled to two leads: transmission is
//! exponentially small except near resonant energies, where it peaks sharply.
//! Electron spins aligned with and against the solenoid field see shifted
//! resonances, so the device acts as a spin polarizer.
//!
//! The crate computes the resonance characteristics two ways:
//!
//! * an asymptotic model in the narrow-diameter limit, assembled from a small
//!   set of constants obtained by solving the limit problems on the chamber
//!   (`resonator`), the leads (`channel`), and the unit-scale narrow
//!   (`junction`);
//! * a direct finite-difference scattering solve on the full geometry
//!   (`direct`), used to cross-check peak position, height, and width.
//!
//! Units: lengths in cylinder-radius units, energies in units of
//! `hbar^2 / (2 m)` per squared inverse length (so the dispersion in a lead
//! is `k^2 = lambda_1^2 + nu_1^2`).

pub mod asymptotics;
pub mod channel;
pub mod direct;
pub mod error;
pub mod farfield;
pub mod geometry;
pub mod grid;
pub mod junction;
pub mod linalg;
pub mod operators;
pub mod resonator;
pub mod special;
pub mod spectral;

pub use error::Error;

/// Convenient alias used throughout the solver stack.
pub type Complex = num_complex::Complex64;

/// Result alias for fallible solver operations.
pub type Result<T> = std::result::Result<T, Error>;
