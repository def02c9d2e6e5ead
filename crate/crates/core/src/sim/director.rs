//! Messages exchanged with a human director while a run is in progress.

use serde::{Deserialize, Serialize};

use crate::corridor::SafeCorridor;
use crate::dynamics::Vec3;
use crate::formation::LightingSpec;
use crate::shots::ShotCommand;

use super::engine::Simulator;
use super::log::{FormationFrame, Frame, UavFrame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectorCommand {
    SetShot { shot: ShotCommand },
    /// `follower_id` is the UAV index; the leader is 0.
    SetLighting { follower_id: usize, lighting: LightingSpec },
    SetTarget { target_id: String },
    Pause,
    Resume,
}

/// `{"ack": true, "tick": n}` or `{"nack": true, "reason": "..."}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CommandReply {
    Ack { ack: bool, tick: u64 },
    Nack { nack: bool, reason: String },
}

impl CommandReply {
    pub fn ack(tick: u64) -> Self {
        CommandReply::Ack { ack: true, tick }
    }

    pub fn nack(reason: impl Into<String>) -> Self {
        CommandReply::Nack { nack: true, reason: reason.into() }
    }

    pub fn is_ack(&self) -> bool {
        matches!(self, CommandReply::Ack { .. })
    }

    pub fn tick(&self) -> Option<u64> {
        match self {
            CommandReply::Ack { tick, .. } => Some(*tick),
            CommandReply::Nack { .. } => None,
        }
    }
}

/// Formation measures of the most recent frames, oldest first. Entry `i`
/// of each outer vector belongs to UAV `i + 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsWindow {
    pub start_tick: u64,
    pub time: Vec<f64>,
    pub d_f: Vec<Vec<f64>>,
    pub lighting_heading_dev: Vec<Vec<f64>>,
    pub lighting_pitch_dev: Vec<Vec<f64>>,
}

impl MetricsWindow {
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a Frame>, followers: usize) -> Self {
        let mut w = Self {
            d_f: vec![Vec::new(); followers],
            lighting_heading_dev: vec![Vec::new(); followers],
            lighting_pitch_dev: vec![Vec::new(); followers],
            ..Self::default()
        };
        for (i, f) in frames.into_iter().enumerate() {
            if i == 0 {
                w.start_tick = f.tick;
            }
            w.time.push(f.time);
            for j in 0..followers {
                w.d_f[j].push(f.formation.d_f[j]);
                w.lighting_heading_dev[j].push(f.formation.heading_dev[j]);
                w.lighting_pitch_dev[j].push(f.formation.pitch_dev[j]);
            }
        }
        w
    }
}

/// Snapshot of the simulation for live display.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub time: f64,
    pub paused: bool,
    pub finished: bool,
    pub active_shot: ShotCommand,
    pub lighting: Vec<Option<LightingSpec>>,
    pub uavs: Vec<UavFrame>,
    pub target_truth: Vec3,
    pub target_estimate: Vec3,
    pub formation: FormationFrame,
    pub separation: f64,
    pub metrics: MetricsWindow,
    /// Current corridor per UAV; only filled on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corridors: Option<Vec<Option<SafeCorridor>>>,
    /// Planned positions per UAV over the horizon; only filled on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plans: Option<Vec<Vec<Vec3>>>,
}

/// Number of frames kept in [`StateFrame::metrics`].
pub const METRICS_WINDOW: usize = 200;

impl StateFrame {
    /// Frame describing the last recorded tick of `sim`, or `None` before
    /// the first step.
    pub fn capture(sim: &Simulator, heavy: bool) -> Option<Self> {
        let frames = &sim.log().frames;
        let last = frames.last()?;
        let from = frames.len().saturating_sub(METRICS_WINDOW);
        let followers = sim.follower_count();
        Some(Self {
            tick: last.tick,
            time: last.time,
            paused: sim.is_paused(),
            finished: sim.is_finished(),
            active_shot: sim.active_shot().clone(),
            lighting: (0..=followers).map(|i| sim.lighting(i)).collect(),
            uavs: last.uavs.clone(),
            target_truth: last.target_truth,
            target_estimate: last.target_estimate,
            formation: last.formation.clone(),
            separation: last.separation,
            metrics: MetricsWindow::from_frames(&frames[from..], followers),
            corridors: heavy.then(|| sim.corridors().into_iter().map(|c| c.cloned()).collect()),
            plans: heavy.then(|| sim.planned_paths()),
        })
    }
}
