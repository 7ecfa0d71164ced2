//! Numerics for volume-preserving skew products on the 3-torus.
//!
//! The crate covers the maps themselves ([`torus`]), the invariant center
//! fibration ([`fibration`]), Lyapunov exponents ([`lyapunov`]), fiberwise
//! conditional measures ([`disintegration`]) and a non-invertible random
//! circle system used as a counterexample ([`kifer`]).

pub mod disintegration;
pub mod error;
pub mod fibration;
pub mod kifer;
pub mod lyapunov;
pub mod rng;
pub mod torus;

pub use error::{Error, Result};
pub use torus::{SkewSystem, TorusPoint2, TorusPoint3};
