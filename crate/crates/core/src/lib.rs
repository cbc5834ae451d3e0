//! Steady radiative transfer on a rectangle, discrete ordinates in the
//! plane, and the acousto-optic reconstruction chain built on top of it.
//!
//! The numerical core is generic over the scalar type through [`Real`];
//! `f64` aliases for the common types live at the crate root.
//!
//! Modules, bottom-up:
//! - [`geometry`]: spatial and angular grids, boundary sets, ray tracing
//! - [`media`]: optical coefficients, acoustic modulation, beam sources
//! - [`field`]: scalar, phase-space and boundary fields plus CSV dumps
//! - [`transport`]: upwind sweeps, source iteration with Krylov acceleration
//! - [`decomposition`]: ballistic / scattered split of forward and adjoint solutions
//! - [`acousto`]: boundary term, internal functional, Fourier recovery
//! - [`reconstruct`]: attenuation recovery and error diagnostics

pub mod acousto;
pub mod decomposition;
pub mod error;
pub mod field;
pub mod geometry;
pub mod krylov;
pub mod media;
pub mod reconstruct;
pub mod transport;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub use error::{Error, Result};

/// Floating point scalar the solvers are generic over.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, panicking only if the value is unrepresentable.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + ScalarOperand
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

pub type SpatialGrid = geometry::SpatialGrid<f64>;
pub type AngularGrid = geometry::AngularGrid<f64>;
pub type Geometry = geometry::Geometry<f64>;
pub type RayTrace = geometry::RayTrace<f64>;
pub type ScalarField = field::ScalarField<f64>;
pub type PhaseSpaceField = field::PhaseSpaceField<f64>;
pub type BoundaryTrace = field::BoundaryTrace<f64>;
pub type MediaCoefficients = media::MediaCoefficients<f64>;
pub type ModulationParams = media::ModulationParams<f64>;
pub type BeamSource = media::BeamSource<f64>;
pub type TransportProblem = transport::TransportProblem<f64>;
pub type SolverOptions = transport::SolverOptions<f64>;
pub type Solution = transport::Solution<f64>;
pub type InternalField = acousto::InternalField<f64>;
pub type MeasurementSet = acousto::MeasurementSet<f64>;

pub type MediaCoefficients32 = media::MediaCoefficients<f32>;
pub type Geometry32 = geometry::Geometry<f32>;
pub type SolverOptions32 = transport::SolverOptions<f32>;
