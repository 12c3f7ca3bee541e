//! Exponent estimation and inequality checks.

pub mod bounds;
pub mod displacement;
pub mod kernel;
pub mod offdiag;
pub mod oscillation;
pub mod stats;
pub mod volume;

pub use bounds::{verify_bound_suite, BoundReport, BoundSuiteSpec, CheckTally, CHECKS};
pub use displacement::{displacement_exponent, displacement_means, DisplacementFit, EnvDisplacement};
pub use kernel::{
    annealed_heat_kernel, pair_kernel, quenched_heat_kernel, AnnealedKernel, KernelEstimate, KernelOptions,
    RadiusPolicy,
};
pub use offdiag::{offdiag_profile, OffDiagPoint, OffDiagProfile};
pub use oscillation::{oscillation_scan, scan_environments, OscillationSeries, OscillationSummary, ScaledKernel};
pub use stats::{correlation, geometric_grid, mean_se, weighted_line, ExponentFit, Pooled, Tally};
pub use volume::{lower_tail_exponent, volume_exponent, TailFrequency, VolumeFit};
