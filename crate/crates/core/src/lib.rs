//! Validation harness for measurements of software variants on platforms
//! whose system state drifts over time.
//!
//! The crate covers the full pipeline:
//!
//! * [`scheduling`] - deterministic generation of measurement schedules for
//!   five validation protocols, including rotated round-robin.
//! * [`stats`] - tied ranks, the Wilcoxon rank-sum (Mann-Whitney) test with
//!   exact and normal-approximation p-values, and the A12 effect size.
//! * [`spectral`] - periodogram analysis of ordered measurement series.
//! * [`simulator`] - a seeded model of a battery-powered device with
//!   reboot-dependent state, long-period drift, and background bursts.
//! * [`runner`] - schedule execution against pluggable measurement backends,
//!   with campaign and corpus persistence.
//! * [`evaluation`] - protocol quality measurements: false-positive
//!   (specificity) matrices and effect/significance (sensitivity) tables.
//! * [`pipeline`] - seeded end-to-end experiments and report rendering.
//!
//! Statistical and spectral math is generic over the scalar type through
//! [`Scalar`]; the domain model and simulator are fixed to `f64`, which the
//! file formats and random distributions use natively.

pub mod error;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod runner;
pub mod scheduling;
pub mod simulator;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Approach, Campaign, MeasurementSample, Schedule, ScheduleAction, VariantId};

use core::fmt::Debug;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the statistical and spectral routines operate on.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Concrete instantiations used by the rest of the crate.
pub type Energy = f64;
pub type TestResult = stats::TestResult<f64>;
pub type Spectrum = spectral::Spectrum<f64>;
