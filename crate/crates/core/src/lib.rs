//! Heteroclinic leverage dynamics: the reduced leverage map, its noise
//! kernel, orbit simulation, transfer operators and the statistics built on
//! top of them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod extremes;
pub mod limit;
pub mod lyapunov;
pub mod map;
pub mod micro;
pub mod multifractal;
pub mod noise;
pub mod normality;
pub mod orbit;
pub mod par;
pub mod quad;
pub mod stats;
pub mod ulam;

pub use density::{DensityEstimate, Histogram};
pub use error::{Error, GeometryError, Result};
pub use extremes::{BoundaryLevel, ExtremalIndex};
pub use limit::{CltSample, Observable};
pub use lyapunov::LyapunovResult;
pub use map::{LeverageMap, MapGeometry, MapParams, SigmaMode};
pub use micro::{MicroConfig, MicroState};
pub use multifractal::DqSpectrum;
pub use noise::{BumpKind, NoiseLaw, NoiseSpec};
pub use orbit::{Chain, StartRule, StepMode, Trajectory};
pub use ulam::UlamOperator;

/// Library version, embedded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
