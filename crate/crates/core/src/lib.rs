//! Simulation, calibration and digital correction of time-interleaved ADCs
//! with frequency-dependent gain and timing mismatch.

// NaN must fail range checks, so `!(x > y)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod correction;
pub mod design;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synthetic;
pub mod window;

pub use calibration::{build_profile, estimate_mismatch_at, sine_fit, MismatchMeasurement};
pub use correction::{correct, correct_offsets};
pub use design::{design_filter_bank, pr_residual, DesignSpec, FilterBank, Zone};
pub use error::{Error, Result};
pub use metrics::{dynamic_metrics, spectrum, DynamicMetrics, SpectrumReport};
pub use model::{Capture, MismatchProfile, TiadcConfig, Tone, ToneSpec};
pub use window::Window;
