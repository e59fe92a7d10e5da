//! Approximation of Lipschitz functions by functions regular near `W`.

mod carve;
mod local;
mod pipeline;
mod schedule;

pub use carve::{carve_sets, coverage_check, CarvedSets};
pub use pipeline::{
    approximate, assemble, fit_derivative_constants, regularized_distance, schedule_offsets, tower_partition, Approximation, RegularizedDistance, TowerPartition,
    FIT_COLLAR, MAX_REFINEMENT_DRIFT,
};
pub use local::{fit_exponent_one, local_approx, LocalApprox, FIT_HEADROOM};
pub use schedule::{cutoff_schedule, cutoff_support, schedule_constants, schedule_from_inputs, ConstantSchedule, KillScale, ScheduleInput};
