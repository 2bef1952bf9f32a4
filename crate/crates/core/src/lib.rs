//! Deffuant bounded-confidence dynamics on a window of ℤ where every agent holds a
//! probability density on `[0,1]` instead of a number.
//!
//! Opinions are exact piecewise-linear densities ([`plf`]). Initial opinions are
//! (restricted) symmetric triangular densities whose intensity is available in
//! closed form ([`opinions`]). The consensus threshold and the expected initial
//! energy live in [`threshold`], the Sharing-a-Drink averaging procedure in
//! [`sad`], and the event-driven lattice simulation with its diagnostics in
//! [`sim`]. [`cli`] wires everything into the `deffuant` binary.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the simulator and the CLI use.

pub mod cli;
pub mod error;
pub mod opinions;
pub mod plf;
pub mod sad;
pub mod scalar;
pub mod sim;
pub mod threshold;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Piecewise-linear function on `[0,1]` over `f64`.
pub type Plf = plf::PiecewiseLinearFn<f64>;
/// Triangular density parameters over `f64`.
pub type Triangle = opinions::TriangularParams<f64>;
/// Sharing-a-Drink profile over `f64`.
pub type Profile = sad::SadProfile<f64>;
/// Simulation configuration over `f64`.
pub type Config = sim::SimConfig<f64>;
/// Lattice state over `f64`.
pub type Lattice = sim::LatticeState<f64>;
/// Quadrature result over `f64`.
pub type Quadrature = threshold::QuadratureResult<f64>;
