//! Semiclassical mode superposition for the two-dimensional kinetic equation
//! with a nonlocal cubic nonlinearity,
//!
//! ```text
//! ∂ₜu = D D̃ₐ(t) Δu + a(t) u − κ b(t) u ∬ p(x−y, x−z, μ) u(y) u(z) dy dz,
//! p(r₁, r₂, μ) = exp(−(r₁² + r₂²) / 2μ²),
//! ```
//!
//! in the weak-diffusion regime `D → 0`. The construction runs in five stages:
//!
//! 1. [`coefficients`] — the time-dependent coefficient triple a(t), b(t),
//!    D̃ₐ(t), the nonlocality kernel and their integrals;
//! 2. [`ee`] — the Einstein–Ehrenfest moment system (total mass σ(t), center
//!    x(t) ≡ 0, second moments α⁽²⁾(t) = 2D d(t)), solved in closed form with
//!    an independent ODE oracle, plus matching of integration constants to
//!    initial data;
//! 3. [`variational`] — the linear variational system Ż = −2D̃ₐW, Ẇ = 2b̃Z
//!    whose solution pairs (W^±, Z^±) generate the germ, the Riccati quotient
//!    Q = W⁻/Z⁻ and the phase φ;
//! 4. [`hermite`] — the Hermite–Gauss mode basis ψₙ, expansion coefficients
//!    kₙ of the initial condition (projection quadrature and the closed form
//!    for double-Gaussian data), mode moments and the optimal localization
//!    parameter β;
//! 5. [`solver`] — the assembled evolving field v(x,t), residual diagnostics
//!    against the associated linear equation and against the full nonlocal
//!    equation, and the ladder-operator checks.
//!
//! The nonlinearity enters only through the moment matching: the evolved
//! Hermite series solves the nonlinear equation asymptotically once the
//! integration constants are matched to the initial data (a nonlinear
//! superposition principle). [`cli`] and [`config`] wire the pipeline into a
//! configuration-driven command-line tool that emits CSV artifacts.

pub mod cli;
pub mod coefficients;
pub mod config;
pub mod ee;
pub mod error;
pub mod hermite;
pub mod numeric;
pub mod solver;
#[cfg(test)]
pub(crate) mod testutil;
pub mod variational;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
