//! Closed-loop simulation of the whole team against a scripted target.

mod director;
mod engine;
mod estimator;
mod log;
mod metrics;
mod scenario;

pub use director::{CommandReply, DirectorCommand, MetricsWindow, StateFrame, METRICS_WINDOW};
pub use engine::{run, QpObserver, Simulator, World};
pub use estimator::Estimator;
pub use log::{
    read_metrics, write_outputs, Event, EventKind, FormationFrame, Frame, FrameLog, Metrics, MotionMode, ReplanRecord,
    StageTimes, TimingStats, UavFrame, UavInfo,
};
pub use metrics::{fov_distance, lighting_deviation, rms_jerk, unwrap_series, LightingDeviation};
pub use scenario::{Role, Scenario, ShotEntry, SimConfig, TargetScript, UavSpec};
