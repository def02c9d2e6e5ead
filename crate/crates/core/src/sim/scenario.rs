use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corridor::{DecomposeOptions, JpsOptions};
use crate::dynamics::{HorizonConfig, Vec3};
use crate::error::{Error, Result};
use crate::formation::LightingSpec;
use crate::qpsolve::{CorridorQpOptions, QpSettings, TrackingWeights};
use crate::shots::{CineWeights, NlpOptions, ShotCommand};
use crate::world::ObstacleSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Follower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub name: String,
    pub role: Role,
    pub start: Vec3,
    /// Required for followers, ignored for the leader.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lighting: Option<LightingSpec>,
}

/// Piecewise-linear target path walked at constant speed; the target
/// stands still before `start_time` and after the last waypoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetScript {
    #[serde(default = "default_target_name")]
    pub name: String,
    pub waypoints: Vec<Vec3>,
    pub speed: f64,
    #[serde(default)]
    pub start_time: f64,
}

fn default_target_name() -> String {
    "target".into()
}

impl TargetScript {
    pub fn position(&self, t: f64) -> Vec3 {
        let mut s = (t - self.start_time).max(0.0) * self.speed;
        for w in self.waypoints.windows(2) {
            let len = (w[1] - w[0]).norm();
            if s <= len && len > 0.0 {
                return w[0] + (w[1] - w[0]) * (s / len);
            }
            s -= len;
        }
        *self.waypoints.last().expect("validated non-empty")
    }

    fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::Scenario("target needs at least one waypoint".into()));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) || !self.start_time.is_finite() {
            return Err(Error::Scenario("target speed and start time must be finite, speed non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotEntry {
    pub start_time: f64,
    pub shot: ShotCommand,
}

/// Everything tunable about a run. Every field has a default, so scenario
/// files only list what they change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: HorizonConfig,
    pub cine: CineWeights,
    pub tracking: TrackingWeights,
    pub nlp: NlpOptions,
    pub corridor_qp: CorridorQpOptions,
    pub orientation_qp: QpSettings,
    pub decompose: DecomposeOptions,
    pub jps_max_expansions: usize,
    /// Simulation tick, seconds.
    pub tick: f64,
    pub leader_period: f64,
    pub follower_period: f64,
    /// Standard deviation of the target position measurements, meters.
    pub noise_sigma: f64,
    pub observation_period: f64,
    /// Smoothing factor of the finite-difference velocity estimate.
    pub velocity_alpha: f64,
    pub voxel_resolution: f64,
    pub inflation: f64,
    /// Radius of the spheres placed along teammate plans.
    pub collision_radius: f64,
    /// Radius of the spheres placed along the predicted target path.
    pub target_radius: f64,
    /// Margin around the reference used for the local search grid.
    pub grid_margin: f64,
    pub d_s_max: f64,
    /// Camera half-angles used for the field-of-view metric.
    pub fov_h: f64,
    pub fov_v: f64,
    /// Anchor followers on the true target instead of the virtual target.
    pub raw_target_formation: bool,
    /// Exhaustively re-check every corridor against its obstacles.
    pub audit_corridors: bool,
    /// Deceleration used when braking to hover.
    pub brake_decel: f64,
    /// Clearance is reported up to this distance.
    pub clearance_cap: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: HorizonConfig::default(),
            cine: CineWeights::default(),
            tracking: TrackingWeights::default(),
            nlp: NlpOptions::default(),
            corridor_qp: CorridorQpOptions::default(),
            orientation_qp: QpSettings::default(),
            decompose: DecomposeOptions::default(),
            jps_max_expansions: JpsOptions::default().max_expansions,
            tick: 0.05,
            leader_period: 1.0,
            follower_period: 0.5,
            noise_sigma: 0.1,
            observation_period: 0.5,
            velocity_alpha: 0.5,
            voxel_resolution: 0.25,
            inflation: 1.0,
            collision_radius: 1.0,
            target_radius: 1.5,
            grid_margin: 4.0,
            d_s_max: 0.5,
            fov_h: 45f64.to_radians(),
            fov_v: 30f64.to_radians(),
            raw_target_formation: false,
            audit_corridors: true,
            brake_decel: 2.0,
            clearance_cap: 20.0,
        }
    }
}

/// Integer number of ticks in `period`, if it is a positive multiple.
pub(crate) fn ticks_in(period: f64, tick: f64) -> Option<u64> {
    let r = period / tick;
    let k = r.round();
    (k >= 1.0 && (r - k).abs() < 1e-6).then_some(k as u64)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.horizon.validate()?;
        self.cine.validate()?;
        self.tracking.validate()?;
        let positive = [
            ("tick", self.tick),
            ("leader_period", self.leader_period),
            ("follower_period", self.follower_period),
            ("observation_period", self.observation_period),
            ("voxel_resolution", self.voxel_resolution),
            ("d_s_max", self.d_s_max),
            ("brake_decel", self.brake_decel),
            ("clearance_cap", self.clearance_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Scenario(format!("config.{name} must be positive")));
            }
        }
        let non_negative = [
            ("noise_sigma", self.noise_sigma),
            ("inflation", self.inflation),
            ("collision_radius", self.collision_radius),
            ("target_radius", self.target_radius),
            ("grid_margin", self.grid_margin),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Scenario(format!("config.{name} must be non-negative")));
            }
        }
        if !(self.velocity_alpha > 0.0 && self.velocity_alpha <= 1.0) {
            return Err(Error::Scenario("config.velocity_alpha must lie in (0, 1]".into()));
        }
        for (name, v) in [("fov_h", self.fov_h), ("fov_v", self.fov_v)] {
            if !(v > 0.0 && v < std::f64::consts::FRAC_PI_2) {
                return Err(Error::Scenario(format!("config.{name} must lie in (0, pi/2)")));
            }
        }
        for (name, p) in [
            ("leader_period", self.leader_period),
            ("follower_period", self.follower_period),
            ("observation_period", self.observation_period),
        ] {
            if ticks_in(p, self.tick).is_none() {
                return Err(Error::Scenario(format!("config.{name} must be a multiple of the tick")));
            }
        }
        Ok(())
    }

    pub fn leader_ticks(&self) -> u64 {
        ticks_in(self.leader_period, self.tick).unwrap_or(1)
    }

    pub fn follower_ticks(&self) -> u64 {
        ticks_in(self.follower_period, self.tick).unwrap_or(1)
    }

    pub fn observation_ticks(&self) -> u64 {
        ticks_in(self.observation_period, self.tick).unwrap_or(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSource>,
    pub target: TargetScript,
    pub uavs: Vec<UavSpec>,
    pub shots: Vec<ShotEntry>,
    #[serde(default)]
    pub config: SimConfig,
    /// Directory used to resolve relative obstacle files.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario(format!("reading {}: {e}", path.display())))?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Scenario("duration must be positive".into()));
        }
        self.config.validate()?;
        self.target.validate()?;
        let leaders = self.uavs.iter().filter(|u| u.role == Role::Leader).count();
        if leaders != 1 {
            return Err(Error::Scenario(format!("exactly one leader required, found {leaders}")));
        }
        for u in &self.uavs {
            if !u.start.iter().all(|x| x.is_finite()) {
                return Err(Error::Scenario(format!("uav '{}' start must be finite", u.name)));
            }
            if u.role == Role::Follower {
                let Some(l) = &u.lighting else {
                    return Err(Error::Scenario(format!("follower '{}' needs a lighting spec", u.name)));
                };
                l.validate().map_err(|e| Error::Scenario(format!("follower '{}': {e}", u.name)))?;
            }
        }
        for (i, a) in self.uavs.iter().enumerate() {
            if self.uavs[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Scenario(format!("duplicate uav name '{}'", a.name)));
            }
        }
        if self.shots.is_empty() {
            return Err(Error::Scenario("shot script is empty".into()));
        }
        if self.shots[0].start_time != 0.0 {
            return Err(Error::Scenario("first shot must start at time 0".into()));
        }
        for w in self.shots.windows(2) {
            if !(w[1].start_time > w[0].start_time) {
                return Err(Error::Scenario("shot start times must increase".into()));
            }
        }
        for e in &self.shots {
            e.shot.validate().map_err(|err| Error::Scenario(format!("shot at {}: {err}", e.start_time)))?;
        }
        Ok(())
    }

    /// Roster with the leader first and followers in file order. Index in
    /// this list is the UAV id; followers are numbered from 1.
    pub fn roster(&self) -> Vec<&UavSpec> {
        let mut out: Vec<&UavSpec> = self.uavs.iter().filter(|u| u.role == Role::Leader).collect();
        out.extend(self.uavs.iter().filter(|u| u.role == Role::Follower));
        out
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.config.tick + 1e-9).floor() as u64
    }

    /// Expands every obstacle source into one point list.
    pub fn obstacle_points(&self) -> Result<Vec<Vec3>> {
        let mut pts = Vec::new();
        for src in &self.obstacles {
            pts.extend(src.expand(self.base_dir.as_deref())?);
        }
        Ok(pts)
    }

    /// Applies `key=value` overrides addressed by dotted path, e.g.
    /// `config.cine.alpha1=0` or `duration=20`. Values are parsed as JSON,
    /// falling back to a plain string.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Scenario(format!("override '{spec}' is not key=value")))?;
        let value: serde_json::Value =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let base_dir = self.base_dir.take();
        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                serde_json::Value::Object(map) if map.contains_key(part) => map.get_mut(part).unwrap(),
                serde_json::Value::Array(items) => match part.parse::<usize>().ok().and_then(|i| items.get_mut(i)) {
                    Some(v) => v,
                    None => return Err(Error::Scenario(format!("override key '{key}' not found"))),
                },
                _ => return Err(Error::Scenario(format!("override key '{key}' not found"))),
            };
        }
        *slot = value;
        let mut next: Scenario = serde_json::from_value(doc)?;
        next.base_dir = base_dir;
        next.validate()?;
        *self = next;
        Ok(())
    }
}
