use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corridor::RepairOutcome;
use crate::dynamics::Vec3;
use crate::error::Result;
use crate::shots::ShotType;

use super::metrics::rms_jerk;
use super::scenario::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    /// Waiting for the first plan.
    Hover,
    Nominal,
    Braking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavFrame {
    pub id: usize,
    pub p: Vec3,
    pub v: Vec3,
    pub heading: f64,
    pub pitch: f64,
    pub mode: MotionMode,
    /// Replan that produced the executed plan, and the polyhedron of that
    /// plan's corridor assigned to the current step.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub corridor: Option<(u64, usize)>,
    /// Largest face violation of the assigned polyhedron.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub poly_violation: Option<f64>,
    /// Distance to the nearest static obstacle point, capped.
    pub clearance: f64,
    pub target_distance: f64,
}

/// Per-follower formation measures; entry `i` belongs to UAV `i + 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FormationFrame {
    pub d_f: Vec<f64>,
    pub heading_dev: Vec<f64>,
    pub pitch_dev: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub time: f64,
    pub uavs: Vec<UavFrame>,
    pub target_truth: Vec3,
    pub target_estimate: Vec3,
    pub shot: ShotType,
    pub formation: FormationFrame,
    /// Smallest pairwise UAV distance.
    pub separation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A shot became active for the leader.
    ShotAdopted { shot: ShotType },
    LightingAdopted { follower: usize },
    /// The corridor QP needed slack on the polyhedron constraints.
    Slack { max_slack: f64 },
    /// Planning failed; the vehicle brakes along its last plan.
    Braking { reason: String },
    /// The start cell was occupied in the inflated map and the path was
    /// seeded from the nearest free cell.
    StartEscape { distance: f64 },
    /// The last reference waypoint was occupied and was moved to the
    /// nearest free cell before path repair.
    GoalShift { distance: f64 },
    /// The repair ladder ended at the expanded node closest to the goal.
    PartialPath,
    OrientationHeld { reason: String },
    OrientationSoftened,
    CorridorAudit { violations: usize },
    /// Dynamic spheres skipped because they overlapped the path.
    DroppedSpheres { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub time: f64,
    pub uav: Option<usize>,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Wall-clock seconds per planning stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    /// Reference trajectory generation.
    pub itg: f64,
    /// Path repair, resampling and corridor construction.
    pub scg: f64,
    /// Corridor QP and orientation QPs.
    pub fto: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.itg + self.scg + self.fto
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub tick: u64,
    pub uav: usize,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub repair: Option<RepairOutcome>,
    pub used_slack: bool,
    pub nlp_iterations: usize,
    pub qp_iterations: usize,
    pub times: StageTimes,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UavInfo {
    pub id: usize,
    pub name: String,
    pub role: Role,
}

/// Everything recorded during a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameLog {
    pub scenario: String,
    pub seed: u64,
    pub tick: f64,
    pub uavs: Vec<UavInfo>,
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
    pub replans: Vec<ReplanRecord>,
}

/// Mean, standard deviation and share of the total per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub replans: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub itg_share: f64,
    pub scg_share: f64,
    pub fto_share: f64,
}

impl TimingStats {
    pub fn from_times(times: &[StageTimes]) -> Self {
        let n = times.len();
        if n == 0 {
            return Self::default();
        }
        let totals: Vec<f64> = times.iter().map(StageTimes::total).collect();
        let mean = totals.iter().sum::<f64>() / n as f64;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
        let sum: f64 = totals.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let share = |f: fn(&StageTimes) -> f64| times.iter().map(f).sum::<f64>() / sum * 100.0;
        Self {
            replans: n,
            mean,
            std: var.sqrt(),
            max: totals.iter().copied().fold(0.0, f64::max),
            itg_share: share(|t| t.itg),
            scg_share: share(|t| t.scg),
            fto_share: share(|t| t.fto),
        }
    }
}

/// Deterministic summary of a run. Every series has one entry per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub alpha1: f64,
    pub frames: usize,
    pub rms_jerk_heading: f64,
    pub rms_jerk_pitch: f64,
    pub min_clearance: f64,
    pub min_separation: f64,
    pub min_target_distance: f64,
    /// Ticks on which some UAV came closer than the vehicle radius to an
    /// obstacle or closer than the collision radius to a teammate.
    pub collision_ticks: usize,
    /// Largest polyhedron face violation outside slack and braking.
    pub max_poly_violation: f64,
    pub slack_events: usize,
    pub braking_events: usize,
    pub corridor_audit_violations: usize,
    pub time: Vec<f64>,
    /// One series per follower.
    pub d_f: Vec<Vec<f64>>,
    pub lighting_heading_dev: Vec<Vec<f64>>,
    pub lighting_pitch_dev: Vec<Vec<f64>>,
    /// Smallest obstacle clearance over all UAVs per frame.
    pub clearance: Vec<f64>,
    pub separation: Vec<f64>,
    pub leader_heading: Vec<f64>,
    pub leader_pitch: Vec<f64>,
}

impl Metrics {
    pub fn compute(log: &FrameLog, vehicle_radius: f64, collision_radius: f64, alpha1: f64) -> Self {
        let frames = &log.frames;
        let followers = log.uavs.len().saturating_sub(1);
        let series = |f: &dyn Fn(&Frame) -> f64| frames.iter().map(f).collect::<Vec<f64>>();
        let per_follower = |f: &dyn Fn(&FormationFrame) -> &Vec<f64>| {
            (0..followers).map(|i| frames.iter().map(|fr| f(&fr.formation)[i]).collect()).collect::<Vec<Vec<f64>>>()
        };
        let clearance = series(&|f| f.uavs.iter().map(|u| u.clearance).fold(f64::INFINITY, f64::min));
        let separation = series(&|f| f.separation);
        let leader_heading = series(&|f| f.uavs[0].heading);
        let leader_pitch = series(&|f| f.uavs[0].pitch);
        let collision_ticks = frames
            .iter()
            .filter(|f| f.uavs.iter().any(|u| u.clearance < vehicle_radius) || f.separation < collision_radius)
            .count();
        let max_poly_violation = frames
            .iter()
            .flat_map(|f| f.uavs.iter().filter_map(|u| u.poly_violation))
            .fold(f64::NEG_INFINITY, f64::max);
        let count = |pred: &dyn Fn(&EventKind) -> bool| log.events.iter().filter(|e| pred(&e.kind)).count();
        let corridor_audit_violations = log
            .events
            .iter()
            .map(|e| if let EventKind::CorridorAudit { violations } = e.kind { violations } else { 0 })
            .sum();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let min_target_distance = frames
            .iter()
            .flat_map(|f| f.uavs.iter().map(|u| u.target_distance))
            .fold(f64::INFINITY, f64::min);
        Self {
            scenario: log.scenario.clone(),
            seed: log.seed,
            alpha1,
            frames: frames.len(),
            rms_jerk_heading: rms_jerk(&leader_heading, log.tick),
            rms_jerk_pitch: rms_jerk(&leader_pitch, log.tick),
            min_clearance: min(&clearance),
            min_separation: min(&separation),
            min_target_distance,
            collision_ticks,
            max_poly_violation: if max_poly_violation.is_finite() { max_poly_violation } else { 0.0 },
            slack_events: count(&|k| matches!(k, EventKind::Slack { .. })),
            braking_events: count(&|k| matches!(k, EventKind::Braking { .. })),
            corridor_audit_violations,
            time: series(&|f| f.time),
            d_f: per_follower(&|f| &f.d_f),
            lighting_heading_dev: per_follower(&|f| &f.heading_dev),
            lighting_pitch_dev: per_follower(&|f| &f.pitch_dev),
            clearance,
            separation,
            leader_heading,
            leader_pitch,
        }
    }

    /// Fraction of frames on which every follower is within both bounds.
    pub fn lighting_within(&self, heading_bound: f64, pitch_bound: f64) -> f64 {
        if self.frames == 0 {
            return 1.0;
        }
        let ok = (0..self.frames)
            .filter(|&k| {
                self.lighting_heading_dev.iter().all(|s| s[k].abs() <= heading_bound)
                    && self.lighting_pitch_dev.iter().all(|s| s[k].abs() <= pitch_bound)
            })
            .count();
        ok as f64 / self.frames as f64
    }

    /// Fraction of frames on which no follower is inside the camera frustum.
    pub fn fov_clear_fraction(&self) -> f64 {
        if self.frames == 0 {
            return 1.0;
        }
        let ok = (0..self.frames).filter(|&k| self.d_f.iter().all(|s| s[k] > 0.0)).count();
        ok as f64 / self.frames as f64
    }
}

impl FrameLog {
    pub fn leader_times(&self) -> Vec<StageTimes> {
        self.replans.iter().filter(|r| r.uav == 0).map(|r| r.times).collect()
    }

    /// One row per tick per entity: every UAV, the true target and the
    /// target estimate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "tick,time,entity,role,x,y,z,vx,vy,vz,heading,pitch,mode,clearance,d_f,heading_dev,pitch_dev\n",
        );
        let num = |x: f64| format!("{x}");
        for f in &self.frames {
            for u in &f.uavs {
                let info = &self.uavs[u.id];
                let (df, hd, pd) = if u.id > 0 {
                    let i = u.id - 1;
                    (num(f.formation.d_f[i]), num(f.formation.heading_dev[i]), num(f.formation.pitch_dev[i]))
                } else {
                    (String::new(), String::new(), String::new())
                };
                let role = match info.role {
                    Role::Leader => "leader",
                    Role::Follower => "follower",
                };
                let mode = serde_json::to_value(u.mode).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    f.tick,
                    f.time,
                    info.name,
                    role,
                    u.p.x,
                    u.p.y,
                    u.p.z,
                    u.v.x,
                    u.v.y,
                    u.v.z,
                    u.heading,
                    u.pitch,
                    mode,
                    u.clearance,
                    df,
                    hd,
                    pd
                );
            }
            for (name, p) in [("target", f.target_truth), ("target_estimate", f.target_estimate)] {
                let _ = writeln!(out, "{},{},{},target,{},{},{},,,,,,,,,,", f.tick, f.time, name, p.x, p.y, p.z);
            }
        }
        out
    }

    /// One JSON frame per line.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for f in &self.frames {
            out.push_str(&serde_json::to_string(f)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Writes `frames.csv`, `frames.ndjson`, `events.json`, `metrics.json` and
/// `timings.json` into `dir`. Only `metrics.json` carries a timestamp, in
/// its `header` object; wall-clock timings live in `timings.json`.
pub fn write_outputs(dir: &Path, log: &FrameLog, metrics: &Metrics, timestamp: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("frames.csv"), log.to_csv())?;
    std::fs::write(dir.join("frames.ndjson"), log.to_ndjson()?)?;
    std::fs::write(dir.join("events.json"), serde_json::to_string_pretty(&log.events)?)?;
    let doc = serde_json::json!({
        "header": { "generated_at": timestamp, "version": env!("CARGO_PKG_VERSION") },
        "metrics": metrics,
    });
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&doc)?)?;
    let timings = serde_json::json!({
        "leader": TimingStats::from_times(&log.leader_times()),
        "all": TimingStats::from_times(&log.replans.iter().map(|r| r.times).collect::<Vec<_>>()),
        "replans": log.replans,
    });
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings)?)?;
    Ok(())
}

/// Reads the `metrics` object of a `metrics.json` file.
pub fn read_metrics(path: &Path) -> Result<Metrics> {
    let text = std::fs::read_to_string(path)?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)?;
    let m = doc
        .get_mut("metrics")
        .map(serde_json::Value::take)
        .ok_or_else(|| crate::Error::Scenario(format!("{}: missing 'metrics' object", path.display())))?;
    Ok(serde_json::from_value(m)?)
}
