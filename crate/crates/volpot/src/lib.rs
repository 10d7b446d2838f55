//! Volume potentials in high space dimension via separated cubature.
//!
//! The crate evaluates Newton, advection-diffusion and heat volume potentials
//! of densities given on a uniform grid. The density is quasi-interpolated by
//! tensor products of Laguerre-Gaussian generating functions of order 2M; the
//! potential of a generating function is written as a one-dimensional integral
//! with a separable integrand, and a double-exponential trapezoidal rule turns
//! that integral into a rank-R separated kernel. The n-dimensional discrete
//! convolution then collapses into products of one-dimensional convolutions,
//! so the cost of a point evaluation grows (at most) linearly in the space
//! dimension. Signed log-space accumulation keeps the n-fold products finite
//! for dimensions up to a few hundred thousand.
//!
//! Modules:
//!
//! * [`specfun`] — Laguerre polynomials, incomplete gamma, erf/erfc/erfcx and
//!   the Faddeeva function.
//! * [`kernels`] — per-dimension integrand factors and closed-form reference
//!   potentials.
//! * [`quadrature`] — double-exponential substitutions, truncated trapezoidal
//!   rules and a node-count tuner.
//! * [`separated`] — separated kernel tables, separated densities and the
//!   convolution evaluator.
//! * [`heat`] — space-time cubature for the non-homogeneous heat equation.

pub mod heat;
pub mod kernels;
pub mod quadrature;
pub mod separated;
pub mod specfun;

/// Errors shared by all modules of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Argument outside a function's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A series or continued fraction failed to converge.
    #[error("{0} did not converge")]
    Convergence(&'static str),
    /// Invalid parameter combination.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    /// Kernel and density disagree on grids or index ranges.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// The quadrature tuner could not reach the target within its node budget.
    #[error("tuner budget exceeded: target {target:.3e} needs more than {budget} nodes (best achieved {achieved:.3e})")]
    TunerBudget {
        target: f64,
        budget: usize,
        achieved: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
