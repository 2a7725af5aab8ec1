//! Large-deviation rate functions and their Legendre-Fenchel geometry on
//! finite state spaces.
//!
//! - [`measures`]: priors, empirical frequencies, entropy, free energy, tilting.
//! - [`contraction`]: moment coordinates, `ψ`/`φ` duality, information projection.
//! - [`divergence`]: entropy production, Bregman divergences, Pythagorean split.
//! - [`polytope`]: fiber polytopes, vertex enumeration, simplex charts.
//! - [`markov`]: pair empirical measures and the spectral free energy.
//! - [`sampling`]: exact and Monte Carlo checks of decay rates.

pub mod contraction;
pub mod divergence;
pub mod error;
pub mod markov;
pub mod measures;
pub mod polytope;
pub mod sampling;

pub use error::{Error, OutsideReason, Result};
