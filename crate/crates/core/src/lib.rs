//! Regularized contrast maximization for event-camera motion estimation.
//!
//! Events in a window are warped to a reference time by a parametric
//! motion model and accumulated into an image of warped events (IWE). The
//! motion estimate maximizes the IWE's sharpness `G` while a regularizer
//! `R` penalizes warps that collapse events into few pixels:
//! `theta* = argmin -G(theta) + lambda R(theta)`.
//!
//! The geometric regularizer in [`regularizer`] integrates the rate of
//! change of the warp's area element along point trajectories and depends
//! on the parameters alone, so its cost does not grow with the event count.

pub mod error;
pub mod event;
pub mod io;
pub mod iwe;
pub mod metrics;
pub mod optimizer;
pub mod regularizer;
pub mod so3;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use event::{CameraGeometry, Event, EventWindow, Polarity};
pub use iwe::{build_iwe, build_iwe_parallel, objective_value, Iwe, Objective, ObjectiveKind};
pub use metrics::{aee_npe, fwl, rms_angular_velocity, time_to_contact, GroundTruthFlow, MetricsReport};
pub use optimizer::{composite_value, landscape_sweep, minimize, solve, CompositeProblem, SolveReport, SweepRow};
pub use regularizer::{
    deformation_map_3dof, rate_map, rate_of_area_change, reg_event_based, reg_geometric,
    reg_translation_2dof, reg_zoom_1dof, DeformationMap, RegularizerConfig, RegularizerKind,
};
pub use synth::{generate, MotionField, SceneMotion, SceneSpec, SyntheticScene};
pub use warp::{
    displacement_field, flow_field, incremental_jacobian_det, trajectory_point, velocity_at,
    warp_event, FlowField, WarpKind, WarpModel,
};
