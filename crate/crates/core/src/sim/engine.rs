use std::time::Instant;

use log::{debug, info, warn};

use crate::corridor::{
    build_corridor, point_at, polyline_length, repair_path, resample, verify_corridor, JpsOptions, ObstacleView,
    RepairOutcome, SafeCorridor,
};
use crate::dynamics::{OriPlan, OriState, PosInput, PosState, Trajectory, Vec2, Vec3};
use crate::error::{Error, Result};
use crate::formation::{follower_reference, LightingSpec};
use crate::qpsolve::{desired_orientation, plan_in_corridor, plan_orientation, CorridorPlan, QpProblem, QpSolution};
use crate::shots::{predict_target, terminal_goal, LeaderPlanner, ShotCommand, ShotType, TargetEstimate, TerminalGoal};
use crate::world::{inject_path, inject_teammates, Aabb, ObstacleCloud, PointIndex, Sphere, VoxelGrid, DEFAULT_CELL_BUDGET};

use super::director::{CommandReply, DirectorCommand};
use super::estimator::Estimator;
use super::log::{
    Event, EventKind, FormationFrame, Frame, FrameLog, Metrics, MotionMode, ReplanRecord, StageTimes, UavFrame,
    UavInfo,
};
use super::metrics::{fov_distance, lighting_deviation};
use super::scenario::{Role, Scenario, SimConfig};

/// Callback that sees every QP solved during a run.
pub type QpObserver = Box<dyn FnMut(&QpProblem, &QpSolution) + Send>;

/// Static obstacles: the raw points for decomposition and clearance, and
/// an inflated occupancy grid from which local search grids are cut.
pub struct World {
    pub index: PointIndex,
    grid: VoxelGrid,
}

impl World {
    pub fn new(points: Vec<Vec3>, extra: &[Vec3], cfg: &SimConfig) -> Result<Self> {
        let mut all: Vec<&Vec3> = points.iter().collect();
        all.extend(extra);
        let bounds = Aabb::from_points(all).unwrap_or_else(|| Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)));
        let bounds = Aabb::new(
            bounds.min - Vec3::new(15.0, 15.0, 5.0),
            bounds.max + Vec3::new(15.0, 15.0, 10.0),
        );
        let mut grid = VoxelGrid::empty(bounds, cfg.voxel_resolution, DEFAULT_CELL_BUDGET)?;
        let reach = bounds.expanded(cfg.inflation);
        for p in &points {
            if reach.contains(p) {
                grid.mark_ball(p, cfg.inflation);
            }
        }
        Ok(Self { index: PointIndex::new(points, 2.0), grid })
    }

    /// Distance to the nearest obstacle point, or `cap` if none is closer.
    pub fn clearance(&self, p: &Vec3, cap: f64) -> f64 {
        let mut r = 2.0_f64.min(cap);
        loop {
            if let Some((_, d)) = self.index.nearest_within(p, r) {
                return d;
            }
            if r >= cap {
                return cap;
            }
            r = (r * 2.0).min(cap);
        }
    }

    /// Search grid around `waypoints` with the dynamic spheres marked at
    /// their radius plus the vehicle radius, the clearance the corridor
    /// keeps from them. Spheres whose marked cells could cover the start or
    /// the final waypoint are skipped: the start cannot be left otherwise,
    /// and a reference that ends inside the snapshot of a moving obstacle
    /// only reaches that point after the obstacle has moved on.
    fn local_grid(&self, waypoints: &[Vec3], spheres: &[Sphere], cfg: &SimConfig) -> Result<VoxelGrid> {
        let b = Aabb::from_points(waypoints).expect("waypoints are non-empty").expanded(cfg.grid_margin);
        let mut grid = self.grid.window(&b, DEFAULT_CELL_BUDGET)?;
        let r_v = cfg.decompose.vehicle_radius;
        let slack = grid.resolution() * 3f64.sqrt();
        let ends = [waypoints[0], *waypoints.last().unwrap()];
        for s in spheres {
            let r = s.radius + r_v;
            if ends.iter().any(|e| (s.center - e).norm() < r + slack) {
                continue;
            }
            grid.mark_ball(&s.center, r);
        }
        Ok(grid)
    }
}

/// Nearest free cell center within `radius` of `p`, lowest index on ties.
fn nearest_free(grid: &VoxelGrid, p: &Vec3, radius: f64) -> Option<Vec3> {
    let c = grid.cell_of(p);
    let r = (radius / grid.resolution()).ceil() as i64;
    let mut best: Option<(f64, Vec3)> = None;
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let cell = [c[0] + dx, c[1] + dy, c[2] + dz];
                if grid.is_occupied_cell(cell) {
                    continue;
                }
                let q = grid.cell_center(cell);
                let d = (q - p).norm();
                if d <= radius && best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                    best = Some((d, q));
                }
            }
        }
    }
    best.map(|(_, q)| q)
}

/// Deceleration along the path of the motion being abandoned.
#[derive(Clone, Debug)]
struct Brake {
    t0: f64,
    path: Vec<Vec3>,
    length: f64,
    speed: f64,
    decel: f64,
}

impl Brake {
    fn from_motion(m: &Motion, t: f64, decel: f64) -> Self {
        let s0 = m.state(t);
        let speed = s0.v.norm();
        let stop = speed / decel;
        let samples = (stop / 0.05).ceil() as usize + 2;
        let mut path = vec![s0.p];
        for k in 1..=samples {
            let q = m.state(t + k as f64 * 0.05).p;
            if (q - path.last().unwrap()).norm() > 1e-9 {
                path.push(q);
            }
        }
        Self { t0: t, length: polyline_length(&path), path, speed, decel }
    }

    fn state(&self, t: f64) -> PosState {
        let tau = (t - self.t0).clamp(0.0, self.speed / self.decel);
        let s = self.speed * tau - 0.5 * self.decel * tau * tau;
        if s >= self.length {
            return PosState::at_rest(*self.path.last().unwrap());
        }
        let p = point_at(&self.path, s);
        let ahead = point_at(&self.path, (s + 1e-3).min(self.length));
        let dir = if (ahead - p).norm() > 1e-12 { (ahead - p).normalize() } else { Vec3::zeros() };
        PosState::new(p, dir * (self.speed - self.decel * tau))
    }
}

#[derive(Clone, Debug)]
enum Motion {
    Hover(Vec3),
    Plan { traj: Trajectory, corridor: SafeCorridor, id: u64, slack: bool },
    Brake(Brake),
}

impl Motion {
    fn state(&self, t: f64) -> PosState {
        match self {
            Motion::Hover(p) => PosState::at_rest(*p),
            Motion::Plan { traj, .. } => traj.sample(t),
            Motion::Brake(b) => b.state(t),
        }
    }

    fn mode(&self) -> MotionMode {
        match self {
            Motion::Hover(_) => MotionMode::Hover,
            Motion::Plan { .. } => MotionMode::Nominal,
            Motion::Brake(_) => MotionMode::Braking,
        }
    }

    /// The motion sampled on the grid `t0 + k dt`, `k = 0..=n`.
    fn aligned(&self, t0: f64, n: usize, dt: f64) -> Trajectory {
        let states: Vec<PosState> = (0..=n).map(|k| self.state(t0 + k as f64 * dt)).collect();
        let inputs = states.windows(2).map(|w| PosInput::new((w[1].v - w[0].v) / dt)).collect();
        Trajectory { t0, dt, states, inputs }
    }
}

struct Uav {
    name: String,
    role: Role,
    lighting: Option<LightingSpec>,
    pending_lighting: Option<LightingSpec>,
    motion: Motion,
    ori: OriPlan,
}

/// Outcome of one position replan.
struct PositionPlan {
    plan: CorridorPlan,
    corridor: SafeCorridor,
    repair: RepairOutcome,
}

/// Receding-horizon simulation of one leader and its followers.
pub struct Simulator {
    scenario: Scenario,
    cfg: SimConfig,
    world: World,
    uavs: Vec<Uav>,
    estimator: Estimator,
    tick: u64,
    total_ticks: u64,
    shot: ShotCommand,
    pending_shot: Option<ShotCommand>,
    next_script: usize,
    static_goal: Option<TerminalGoal>,
    planner: LeaderPlanner,
    replans: u64,
    paused: bool,
    log: FrameLog,
    observer: Option<QpObserver>,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let cfg = scenario.config.clone();
        let points = scenario.obstacle_points()?;
        let roster: Vec<_> = scenario.roster().into_iter().cloned().collect();
        let mut extra: Vec<Vec3> = roster.iter().map(|u| u.start).collect();
        extra.extend(scenario.target.waypoints.iter().copied());
        let world = World::new(points, &extra, &cfg)?;
        let target0 = scenario.target.position(0.0);
        let uavs = roster
            .iter()
            .map(|u| {
                let o = desired_orientation(&u.start, &target0, &OriState::new(0.0, 0.0));
                let pitch = o.pitch.clamp(cfg.horizon.pitch_min, cfg.horizon.pitch_max);
                Uav {
                    name: u.name.clone(),
                    role: u.role,
                    lighting: u.lighting,
                    pending_lighting: None,
                    motion: Motion::Hover(u.start),
                    ori: OriPlan::hold(0.0, cfg.horizon.dt, OriState::new(o.heading, pitch), cfg.horizon.n),
                }
            })
            .collect::<Vec<_>>();
        let log = FrameLog {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            tick: cfg.tick,
            uavs: uavs
                .iter()
                .enumerate()
                .map(|(id, u)| UavInfo { id, name: u.name.clone(), role: u.role })
                .collect(),
            frames: Vec::new(),
            events: Vec::new(),
            replans: Vec::new(),
        };
        Ok(Self {
            estimator: Estimator::new(cfg.noise_sigma, cfg.velocity_alpha, scenario.seed),
            total_ticks: scenario.total_ticks(),
            shot: scenario.shots[0].shot.clone(),
            pending_shot: None,
            next_script: 0,
            static_goal: None,
            planner: LeaderPlanner::new(),
            replans: 0,
            paused: false,
            tick: 0,
            cfg,
            world,
            uavs,
            log,
            observer: None,
            scenario,
        })
    }

    pub fn set_qp_observer(&mut self, observer: QpObserver) {
        self.observer = Some(observer);
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Next tick to be executed.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.tick
    }

    pub fn is_finished(&self) -> bool {
        self.tick > self.total_ticks
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn log(&self) -> &FrameLog {
        &self.log
    }

    pub fn active_shot(&self) -> &ShotCommand {
        &self.shot
    }

    pub fn follower_count(&self) -> usize {
        self.uavs.len() - 1
    }

    pub fn lighting(&self, id: usize) -> Option<LightingSpec> {
        self.uavs.get(id).and_then(|u| u.lighting)
    }

    /// Current corridor of every UAV (empty while hovering or braking).
    pub fn corridors(&self) -> Vec<Option<&SafeCorridor>> {
        self.uavs
            .iter()
            .map(|u| match &u.motion {
                Motion::Plan { corridor, .. } => Some(corridor),
                _ => None,
            })
            .collect()
    }

    /// Planned positions of every UAV over the next horizon.
    pub fn planned_paths(&self) -> Vec<Vec<Vec3>> {
        let t = self.time();
        let hz = &self.cfg.horizon;
        self.uavs.iter().map(|u| u.motion.aligned(t, hz.n, hz.dt).positions().collect()).collect()
    }

    /// First tick at or after the next one to run that is a multiple of `period`.
    fn next_boundary(&self, period: u64) -> u64 {
        self.tick.div_ceil(period) * period
    }

    /// Validates a director command and queues it for the next replan of
    /// the UAV it affects.
    pub fn submit(&mut self, cmd: DirectorCommand) -> CommandReply {
        match cmd {
            DirectorCommand::SetShot { shot } => {
                if let Err(e) = shot.validate() {
                    return CommandReply::nack(e.to_string());
                }
                self.pending_shot = Some(shot);
                CommandReply::ack(self.next_boundary(self.cfg.leader_ticks()))
            }
            DirectorCommand::SetLighting { follower_id, lighting } => {
                if follower_id == 0 || follower_id >= self.uavs.len() {
                    return CommandReply::nack("unknown follower");
                }
                if let Err(e) = lighting.validate() {
                    return CommandReply::nack(e.to_string());
                }
                self.uavs[follower_id].pending_lighting = Some(lighting);
                CommandReply::ack(self.next_boundary(self.cfg.follower_ticks()))
            }
            DirectorCommand::SetTarget { target_id } => {
                if target_id != self.scenario.target.name {
                    return CommandReply::nack("unknown target");
                }
                CommandReply::ack(self.tick)
            }
            DirectorCommand::Pause => {
                self.paused = true;
                CommandReply::ack(self.tick)
            }
            DirectorCommand::Resume => {
                self.paused = false;
                CommandReply::ack(self.tick)
            }
        }
    }

    fn event(&mut self, uav: Option<usize>, kind: EventKind) {
        let tick = self.tick;
        self.log.events.push(Event { tick, time: tick as f64 * self.cfg.tick, uav, kind });
    }

    /// Runs one tick unless paused or finished; returns the recorded frame.
    pub fn step(&mut self) -> Option<&Frame> {
        if self.paused || self.is_finished() {
            return None;
        }
        let t = self.time();
        let shots = &self.scenario.shots;
        while self.next_script < shots.len() && shots[self.next_script].start_time <= t + 1e-9 {
            self.pending_shot = Some(shots[self.next_script].shot.clone());
            self.next_script += 1;
        }
        if self.tick % self.cfg.observation_ticks() == 0 {
            let truth = self.scenario.target.position(t);
            self.estimator.observe(t, &truth);
        }
        if self.tick % self.cfg.leader_ticks() == 0 {
            self.replan_leader(t);
        }
        if self.tick % self.cfg.follower_ticks() == 0 {
            for id in 1..self.uavs.len() {
                self.replan_follower(id, t);
            }
        }
        let frame = self.record(t);
        self.log.frames.push(frame);
        self.tick += 1;
        self.log.frames.last()
    }

    pub fn run_to_end(&mut self) {
        while !self.is_finished() {
            if self.step().is_none() {
                // paused with nothing able to resume it
                self.paused = false;
            }
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::compute(
            &self.log,
            self.cfg.decompose.vehicle_radius,
            self.cfg.collision_radius,
            self.cfg.cine.alpha1,
        )
    }

    pub fn into_log(self) -> FrameLog {
        self.log
    }

    fn estimate(&self, t: f64) -> TargetEstimate {
        self.estimator.estimate(t).unwrap_or_else(|| TargetEstimate {
            p: self.scenario.target.position(t),
            v: Vec3::zeros(),
            timestamp: t,
        })
    }

    fn brake(&mut self, id: usize, t: f64, reason: String) {
        warn!("uav {id} braking at t={t:.2}: {reason}");
        let brake = Brake::from_motion(&self.uavs[id].motion, t, self.cfg.brake_decel);
        self.uavs[id].motion = Motion::Brake(brake);
        self.event(Some(id), EventKind::Braking { reason });
    }

    fn replan_leader(&mut self, t: f64) {
        if let Some(shot) = self.pending_shot.take() {
            self.static_goal = None;
            let kind = shot.shot_type;
            self.shot = shot;
            self.event(Some(0), EventKind::ShotAdopted { shot: kind });
        }
        let hz = self.cfg.horizon.clone();
        let x0 = self.uavs[0].motion.state(t);
        let mut times = StageTimes::default();

        let clock = Instant::now();
        let est = self.estimate(t);
        let pred = predict_target(&est, hz.n, hz.dt);
        let reference = (|| -> Result<_> {
            let goal = match (self.shot.shot_type, self.static_goal) {
                (ShotType::StaticFrame, Some(g)) => g,
                _ => terminal_goal(&self.shot, &pred, hz.dt, &x0)?,
            };
            if self.shot.shot_type == ShotType::StaticFrame {
                self.static_goal = Some(goal);
            }
            self.planner.plan(t, &x0, &self.shot, goal, &pred, &self.cfg.cine, &hz, &self.cfg.nlp)
        })();
        times.itg = clock.elapsed().as_secs_f64();
        let reference = match reference {
            Ok(r) => r,
            Err(e) => {
                self.finish_replan(0, t, times, Err(e), 0);
                return;
            }
        };
        let nlp_iterations = reference.iterations;

        let spheres = inject_path(&ObstacleCloud::default(), &pred, self.cfg.target_radius).dynamic.spheres;
        let planned = self.plan_position(0, t, &x0, &reference.trajectory, &spheres, &mut times);
        let planned = planned.inspect(|p| {
            let clock = Instant::now();
            self.plan_gimbal(0, t, &p.plan.trajectory, &pred);
            times.fto += clock.elapsed().as_secs_f64();
        });
        self.finish_replan(0, t, times, planned, nlp_iterations);
    }

    fn replan_follower(&mut self, id: usize, t: f64) {
        if let Some(spec) = self.uavs[id].pending_lighting.take() {
            self.uavs[id].lighting = Some(spec);
            self.event(Some(id), EventKind::LightingAdopted { follower: id });
        }
        let hz = self.cfg.horizon.clone();
        let x0 = self.uavs[id].motion.state(t);
        let spec = self.uavs[id].lighting.expect("followers carry a lighting spec");
        let mut times = StageTimes::default();
        let est = self.estimate(t);
        let pred = predict_target(&est, hz.n, hz.dt);

        let clock = Instant::now();
        let leader = self.uavs[0].motion.aligned(t, hz.n, hz.dt);
        let raw = self.cfg.raw_target_formation.then_some(pred.as_slice());
        let reference = follower_reference(t, &leader, &self.uavs[0].ori, &spec, &hz, raw);
        times.itg = clock.elapsed().as_secs_f64();
        let reference = match reference {
            Ok(r) => r,
            Err(e) => {
                self.finish_replan(id, t, times, Err(e), 0);
                return;
            }
        };

        // higher-priority teammates: the leader, then lower follower ids
        let mates: Vec<Trajectory> = (0..id).map(|j| self.uavs[j].motion.aligned(t, hz.n, hz.dt)).collect();
        let mate_refs: Vec<&Trajectory> = mates.iter().collect();
        let cloud = inject_path(&ObstacleCloud::default(), &pred, self.cfg.target_radius);
        let spheres = inject_teammates(&cloud, &mate_refs, self.cfg.collision_radius).dynamic.spheres;
        let planned = self.plan_position(id, t, &x0, &reference, &spheres, &mut times);
        let planned = planned.inspect(|p| {
            let clock = Instant::now();
            self.plan_gimbal(id, t, &p.plan.trajectory, &pred);
            times.fto += clock.elapsed().as_secs_f64();
        });
        self.finish_replan(id, t, times, planned, 0);
    }

    fn finish_replan(&mut self, id: usize, t: f64, times: StageTimes, planned: Result<PositionPlan>, nlp_iterations: usize) {
        let tick = self.tick;
        let record = match planned {
            Ok(p) => {
                self.replans += 1;
                let rec = ReplanRecord {
                    tick,
                    uav: id,
                    ok: true,
                    repair: Some(p.repair),
                    used_slack: p.plan.used_slack,
                    nlp_iterations,
                    qp_iterations: p.plan.solution.iterations,
                    times,
                };
                if p.plan.used_slack {
                    self.event(Some(id), EventKind::Slack { max_slack: p.plan.max_slack });
                }
                self.uavs[id].motion =
                    Motion::Plan { traj: p.plan.trajectory, corridor: p.corridor, id: self.replans, slack: p.plan.used_slack };
                rec
            }
            Err(e) => {
                self.brake(id, t, e.to_string());
                ReplanRecord {
                    tick,
                    uav: id,
                    ok: false,
                    repair: None,
                    used_slack: false,
                    nlp_iterations,
                    qp_iterations: 0,
                    times,
                }
            }
        };
        debug!("replan uav {id} at t={t:.2}: {:?}", record.times);
        self.log.replans.push(record);
    }

    /// Repair, corridor and corridor QP for one UAV, timing SCG and FTO.
    fn plan_position(
        &mut self,
        id: usize,
        t: f64,
        x0: &PosState,
        reference: &Trajectory,
        spheres: &[Sphere],
        times: &mut StageTimes,
    ) -> Result<PositionPlan> {
        let cfg = &self.cfg;
        let clock = Instant::now();
        let mut waypoints = vec![x0.p];
        waypoints.extend(reference.states[1..].iter().map(|s| s.p));
        let grid = self.world.local_grid(&waypoints, spheres, cfg)?;
        let escape_radius = 2.0 * cfg.inflation + grid.resolution();
        // an occupied goal can only end in a budget-exhausting partial search
        let mut goal_shift = None;
        let last = waypoints.len() - 1;
        if last > 0 && !grid.is_free(&waypoints[last]) {
            if let Some(c) = nearest_free(&grid, &waypoints[last], escape_radius) {
                goal_shift = Some((c - waypoints[last]).norm());
                waypoints[last] = c;
            }
        }
        let mut escape = None;
        let mut seeded = waypoints.clone();
        if !grid.is_free(&x0.p) {
            let Some(c) = nearest_free(&grid, &x0.p, escape_radius) else {
                return Err(Error::StartOccupied([x0.p.x, x0.p.y, x0.p.z]));
            };
            escape = Some((c - x0.p).norm());
            seeded[0] = c;
        }
        let jps = JpsOptions { max_expansions: cfg.jps_max_expansions, timeout: None };
        let repair = repair_path(&seeded, &grid, &jps)?;
        let mut path = repair.path.waypoints;
        if escape.is_some() {
            path.insert(0, x0.p);
        }
        let resampled = resample(&path, &waypoints, cfg.d_s_max);
        let mut corridor_pts = vec![x0.p];
        corridor_pts.extend(resampled.iter().copied());
        let view = ObstacleView { points: &self.world.index, spheres };
        let corridor = build_corridor(&corridor_pts, &view, &cfg.decompose)?;
        times.scg = clock.elapsed().as_secs_f64();

        let audit = cfg.audit_corridors.then(|| verify_corridor(&corridor, &view, &cfg.decompose));

        let clock = Instant::now();
        let observer = self.observer.as_mut().map(|o| o.as_mut() as &mut dyn FnMut(&QpProblem, &QpSolution));
        let plan = plan_in_corridor(
            t,
            x0,
            &resampled,
            &corridor,
            &cfg.horizon,
            cfg.tracking.beta,
            &cfg.corridor_qp,
            None,
            observer,
        );
        times.fto = clock.elapsed().as_secs_f64();

        if let Some(d) = escape {
            self.event(Some(id), EventKind::StartEscape { distance: d });
        }
        if let Some(d) = goal_shift {
            self.event(Some(id), EventKind::GoalShift { distance: d });
        }
        if repair.outcome == RepairOutcome::Partial {
            self.event(Some(id), EventKind::PartialPath);
        }
        if corridor.dropped_spheres > 0 {
            self.event(Some(id), EventKind::DroppedSpheres { count: corridor.dropped_spheres });
        }
        if let Some(v) = audit.filter(|&v| v > 0) {
            self.event(Some(id), EventKind::CorridorAudit { violations: v });
        }
        Ok(PositionPlan { plan: plan?, corridor, repair: repair.outcome })
    }

    /// Orientation plan pointing at the predicted target from the new
    /// position plan; holds the current orientation if the QP fails.
    fn plan_gimbal(&mut self, id: usize, t: f64, traj: &Trajectory, pred: &[Vec3]) {
        let hz = &self.cfg.horizon;
        let x0 = self.uavs[id].ori.sample(t);
        let mut prev = x0;
        let targets: Vec<Vec2> = (1..=hz.n)
            .map(|k| {
                let o = desired_orientation(&traj.states[k].p, &pred[k], &prev);
                prev = OriState::new(o.heading, o.pitch);
                Vec2::new(o.heading, o.pitch.clamp(hz.pitch_min, hz.pitch_max))
            })
            .collect();
        let observer = self.observer.as_mut().map(|o| o.as_mut() as &mut dyn FnMut(&QpProblem, &QpSolution));
        match plan_orientation(t, &x0, &targets, hz, self.cfg.tracking.gamma, &self.cfg.orientation_qp, observer) {
            Ok(p) => {
                if p.softened {
                    self.event(Some(id), EventKind::OrientationSoftened);
                }
                self.uavs[id].ori = p.plan;
            }
            Err(e) => {
                let held = OriState { rates: Vec2::zeros(), ..x0 };
                self.uavs[id].ori = OriPlan::hold(t, hz.dt, held, hz.n);
                self.event(Some(id), EventKind::OrientationHeld { reason: e.to_string() });
            }
        }
    }

    fn record(&self, t: f64) -> Frame {
        let truth = self.scenario.target.position(t);
        let estimate = self.estimate(t).p;
        let states: Vec<(PosState, OriState)> = self.uavs.iter().map(|u| (u.motion.state(t), u.ori.sample(t))).collect();
        let uavs = self
            .uavs
            .iter()
            .zip(&states)
            .enumerate()
            .map(|(id, (u, (s, o)))| {
                let (corridor, poly_violation) = match &u.motion {
                    Motion::Plan { traj, corridor, id: rid, slack } => {
                        let k = (((t - traj.t0) / traj.dt + 1e-9).floor().max(0.0) as usize).min(corridor.len() - 1);
                        let v = (!slack).then(|| corridor.polys[k].max_violation(&s.p));
                        (Some((*rid, k)), v)
                    }
                    _ => (None, None),
                };
                UavFrame {
                    id,
                    p: s.p,
                    v: s.v,
                    heading: o.heading,
                    pitch: o.pitch,
                    mode: u.motion.mode(),
                    corridor,
                    poly_violation,
                    clearance: self.world.clearance(&s.p, self.cfg.clearance_cap),
                    target_distance: (s.p - truth).norm(),
                }
            })
            .collect();
        let (leader, lo) = &states[0];
        let mut formation = FormationFrame::default();
        for (u, (s, _)) in self.uavs.iter().zip(&states).skip(1) {
            let spec = u.lighting.expect("followers carry a lighting spec");
            let anchor = self.cfg.raw_target_formation.then_some(&estimate);
            let dev = lighting_deviation(&s.p, &leader.p, lo.heading, lo.pitch, &spec, anchor);
            formation.d_f.push(fov_distance(&s.p, &leader.p, lo.heading, lo.pitch, self.cfg.fov_h, self.cfg.fov_v));
            formation.heading_dev.push(dev.heading);
            formation.pitch_dev.push(dev.pitch);
        }
        let mut separation = f64::INFINITY;
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                separation = separation.min((states[i].0.p - states[j].0.p).norm());
            }
        }
        if !separation.is_finite() {
            separation = self.cfg.clearance_cap;
        }
        Frame {
            tick: self.tick,
            time: t,
            uavs,
            target_truth: truth,
            target_estimate: estimate,
            shot: self.shot.shot_type,
            formation,
            separation,
        }
    }
}

/// Runs `scenario` to completion.
pub fn run(scenario: Scenario) -> Result<(FrameLog, Metrics)> {
    let name = scenario.name.clone();
    let mut sim = Simulator::new(scenario)?;
    sim.run_to_end();
    let metrics = sim.metrics();
    info!(
        "{name}: {} frames, rms jerk heading {:.4} pitch {:.4}, {} braking events",
        metrics.frames, metrics.rms_jerk_heading, metrics.rms_jerk_pitch, metrics.braking_events
    );
    Ok((sim.into_log(), metrics))
}
