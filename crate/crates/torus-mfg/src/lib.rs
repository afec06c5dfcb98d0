//! Entropy-penalized backward time stepping for viscous mean-field dynamics
//! on the flat torus `T^p = [0,1)^p`, `p ∈ {1,2}`.
//!
//! One backward step of size `h = 1/n` replaces the Bellman operator by a
//! minimization over velocity laws `γ(x,·)` whose running cost is kinetic
//! energy plus the entropy of `γ`. The minimizer is an explicit Gibbs kernel
//!
//! ```text
//! γ(x,v) = N(0, (1/n)Id)(v) · exp(-f(x-v) + b(x))
//! ```
//!
//! where `f` is the linearized cost at the arrival time and `b` normalizes
//! the rows. Iterating the step backwards yields a discrete value function
//! and a discrete characteristic (a trajectory of densities); closing the
//! loop through the mean-field potential `W^μ` and the terminal derivative
//! `f_0 = U'(μ_0)` gives the mean-field fixed point. As the step count `n`
//! grows, the costs converge to a viscous Hamilton–Jacobi solution and the
//! characteristics to a Fokker–Planck solution with drift `-∂_x u`, both at
//! viscosity `ν = 1/2` (the kernel carries variance `1/n` per step of length
//! `1/n`).
//!
//! The crate is organized around that pipeline:
//!
//! * [`grid`]: periodic grids, wrapped Gaussians, circular convolution,
//!   quadrature;
//! * [`measures`]: densities, Wasserstein-1 (exact on the circle, LP oracle
//!   for small instances), the raw kinetic-entropy action;
//! * [`model`]: trigonometric potentials `V`, `W`, the mean field `W^μ`,
//!   and final conditions with exact derivatives;
//! * [`step`]: the one-step Gibbs kernel in factored form, push-forward,
//!   per-step cost, kernel moments;
//! * [`scheme`]: backward recursion, forward propagation, the mean-field
//!   fixed point, the discrete value, semigroup and Gaussian diagnostics;
//! * [`oracle`]: slow brute-force minimizers used as ground truth;
//! * [`pde`]: explicit finite-difference Hamilton–Jacobi and Fokker–Planck
//!   reference solvers;
//! * [`mc`]: Feynman–Kac Monte Carlo over Brownian bridges, an independent
//!   representation of `e^{-f}`.
//!
//! All numerics are generic over the scalar type through [`Scalar`];
//! concrete aliases for `f64` and `f32` live at the crate root.

// `!(x > 0)` guards reject NaN along with the out-of-range values; the
// suggested `<=` would let NaN through. Index loops over small fixed
// dimensions stay as loops.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

pub mod grid;
pub mod mc;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod pde;
pub mod scheme;
pub mod step;

/// Floating-point scalar the whole crate is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    /// Widening view, for reporting.
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }

    /// A consistency threshold: the stated `f64` tolerance, floored so that
    /// narrower scalar types do not trip on their own rounding.
    fn tol(stated: f64) -> Self {
        Self::of(stated).max(Self::epsilon() * Self::of(1e3))
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<T>
        + fmt::Debug
        + fmt::Display
        + fmt::LowerExp
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Errors shared by every module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or preconditions (dimension, grid size, CFL, ...).
    #[error("configuration: {0}")]
    Config(String),
    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// A numerical consistency contract was violated (mass drift, blow-up,
    /// non-finite values).
    #[error("numerical consistency: {0}")]
    Numerical(String),
    /// The requested exact computation is not available in this regime.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Instance exceeds a hard cap of a brute-force oracle.
    #[error("instance too large: {0}")]
    TooLarge(String),
    /// An iterative minimizer failed to make progress.
    #[error("optimizer diverged: {0}")]
    Diverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use grid::{GridField, TorusGrid, WrappedGaussian};
pub use measures::{Density, RawKernel};
pub use model::{FinalCondition, PotentialSpec};
pub use scheme::{SchemeConfig, SchemeSolution, ValueReport};
pub use step::GibbsKernel;

/// `f64` aliases: the precision the reference experiments run at.
pub type Field64 = GridField<f64>;
pub type Kernel64 = WrappedGaussian<f64>;
pub type Density64 = Density<f64>;
pub type RawKernel64 = RawKernel<f64>;
pub type Potential64 = PotentialSpec<f64>;
pub type Final64 = FinalCondition<f64>;
pub type Gibbs64 = GibbsKernel<f64>;
pub type Solution64 = SchemeSolution<f64>;

/// `f32` aliases, for storage-constrained sweeps.
pub type Field32 = GridField<f32>;
pub type Kernel32 = WrappedGaussian<f32>;
pub type Density32 = Density<f32>;
