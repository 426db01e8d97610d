//! Transfer-operator analysis of one-dimensional random maps with bounded noise.
//!
//! The crate discretizes the annealed transfer operator of a random map
//! `x ↦ f(x; ω)`, `ω ∈ [-1, 1]`, on a uniform grid (Ulam's method) and
//! extracts stationary densities, peripheral spectra, quasi-stationary
//! densities on leaky windows, rotation numbers and codimension-one
//! bifurcations of the stationary measures.
//!
//! All numerical code is generic over a floating point scalar implementing
//! [`Real`]; the aliases at the bottom of this file fix it to `f64`.

// `!(x > 0)` also rejects NaN; index loops follow the matrix formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bifurcate;
pub mod error;
pub mod escape;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod represent;
pub mod rotation;
pub mod spectral;
pub mod stationary;
pub mod transfer;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Floating point scalar used throughout the crate (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("representable count")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type PhaseSpace = model::PhaseSpace<f64>;
pub type RandomMap1D = model::RandomMap1D<f64>;
pub type Family = model::Family<f64>;
pub type OrbitSample = model::OrbitSample<f64>;
pub type KernelSlice = kernel::KernelSlice<f64>;
pub type PreimageSet = kernel::PreimageSet<f64>;
pub type Grid = transfer::Grid<f64>;
pub type UlamMatrix = transfer::UlamMatrix<f64>;
pub type SpectralSet = spectral::SpectralSet<f64>;
pub type SupportSet = stationary::SupportSet<f64>;
pub type BirkhoffEstimate = stationary::BirkhoffEstimate<f64>;
pub type EscapeReport = escape::EscapeReport<f64>;
pub type RotationEstimate = rotation::RotationEstimate<f64>;
pub type ExtremalOrbit = bifurcate::ExtremalOrbit<f64>;
pub type BifurcationEvent = bifurcate::BifurcationEvent<f64>;
pub type SweepReport = bifurcate::SweepReport<f64>;
pub type RepresentationMap<K> = represent::RepresentationMap<f64, K>;
