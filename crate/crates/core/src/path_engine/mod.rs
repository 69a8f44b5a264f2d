//! Brownian paths and the discrete-type skeleton, in exact-walk and
//! coupled-extraction modes.

pub mod exit_time;
pub mod paths;
pub mod skeleton;

pub use exit_time::{
    exit_time_density, exit_time_hazard, exit_time_survival, sample_exit_time, unit_cumulative_hazard, unit_density,
    unit_hazard, unit_quantile, unit_survival, HazardValue,
};
pub use paths::{brownian_into, generate_brownian, ContinuousPath, SteppedPath};
pub use skeleton::{
    build_skeleton_walk, coupling_sup_error, extract_skeleton, extract_skeleton_corrected, Skeleton, SkeletonBuilder,
};
