//! Haar wavelet thresholding estimates of the reproduction function of a
//! parent/child Poisson model.
//!
//! Parents `U_1, ..., U_n` sit on `[0, T]`. Each parent independently spawns
//! children at the points of a Poisson process with intensity `h(t - U_i)`,
//! and only the unlabeled positions of parents and children are observed.
//! This crate estimates `h` on `[-A, A]` from such data:
//!
//! ```
//! use pointrep::{estimate, simulate, EstimatorConfig, Signal, SimConfig};
//!
//! let sim = SimConfig::poisson(Signal::Signal1, 4.0, 2_000.0, 0.1, 7);
//! let sample = simulate(&sim)?;
//! let fit = estimate(&sample, &EstimatorConfig::default())?;
//! assert!(fit.table.kept_count() > 0);
//! # Ok::<(), pointrep::Error>(())
//! ```
//!
//! See the `book/` directory of the repository for a guided tour.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod haar;
pub mod ingest;
pub mod risk;
pub mod simulate;
pub mod stepfn;

pub use error::{Error, Result};
pub use estimator::{
    apply_threshold, coefficient_stats, estimate, reconstruct, thresholds, CoefficientRow,
    CoefficientTable, Estimate, EstimatorConfig, ProcessSample, ThresholdMode, VarianceMode,
};
pub use haar::{HaarIndex, IndexGrid, MotherLevels};
pub use ingest::OccurrenceSet;
pub use risk::{l2_risk, risk_surface, RiskSurface};
pub use simulate::{simulate, ParentMode, Signal, SignalSpec, SimConfig};
pub use stepfn::{PiecewiseLinear, StepFunction};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/step-functions.md")]
    pub mod step_functions {}
    #[doc = include_str!("../../../book/src/haar.md")]
    pub mod haar {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    pub mod estimator {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    pub mod calibration {}
    #[doc = include_str!("../../../book/src/genomic.md")]
    pub mod genomic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
