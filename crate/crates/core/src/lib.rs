//! Option pricing under one-dimensional jump-diffusion (Merton, Kou) by
//! cubic-spline radial-basis-function collocation of the pricing PIDE.
//!
//! The pipeline: [`models`] defines the market dynamics (densities,
//! compensator, characteristic exponent, jump-integral truncation),
//! [`rbf`] builds the collocation grid and the cubic-spline interpolation
//! matrices together with the F·C·F factorization that sidesteps the
//! ill-conditioned interpolant, [`collocation`] assembles the jump matrix by
//! adaptive Gauss-Kronrod quadrature and reduces everything to a constant
//! coefficient ODE operator, [`stepper`] integrates it with fixed-step
//! BDF1/BDF2 (with a per-step projection-and-refit loop for American puts),
//! [`reference`] holds the ground-truth pricers (Black-Scholes, Merton
//! series, FFT-based Fourier space time-stepping), and [`bench`] measures
//! errors and convergence rates against them.

pub mod bench;
pub mod collocation;
pub mod config;
pub mod error;
pub mod models;
pub(crate) mod quad;
pub mod rbf;
pub mod reference;
pub mod stepper;

pub use error::{Error, Result};
