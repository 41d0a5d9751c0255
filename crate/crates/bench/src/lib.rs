//! Experiment driver around the `asyflexa` solver: error-vs-time curves,
//! speedup tables, regularization sweeps and stationarity-complexity
//! measurements, all emitted as CSV plus a metadata sidecar.

pub mod bound;
pub mod cpu;
pub mod curves;
pub mod fstar;
pub mod keps;
pub mod plan;
pub mod sidecar;
pub mod speedup;
pub mod sweep;

pub use curves::{run_error_curve, CurveOutput, Metric};
pub use keps::{run_kepsilon, KepsRow};
pub use plan::{ExperimentPlan, InstanceSpec};
pub use speedup::{run_speedup, SpeedupReport, SpeedupRow};
pub use sweep::{run_lambda_sweep, SweepRow};

/// Median of an unordered sample; even lengths average the middle pair.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
