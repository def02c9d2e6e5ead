//! Live bridge between a running simulation and a human director.
//!
//! A dedicated thread owns the [`Simulator`]. It drains the command queue
//! between ticks, steps the simulation and publishes the latest
//! [`StateFrame`] on a watch channel, so slow subscribers only ever miss
//! frames and never hold the simulation back.
//!
//! Routes: `GET /health`, `GET /scenario`, `POST /command` and
//! `GET /stream` (server-sent events, one frame per event, event id = tick;
//! `?corridors=true` adds corridors and planned paths).

use std::convert::Infallible;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, watch};

use cineswarm_core::sim::{CommandReply, DirectorCommand, Scenario, Simulator, StateFrame};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceOptions {
    /// Frames per second delivered to subscribers; the simulation tick
    /// rate is divided down to the nearest integer step.
    pub tick_rate: f64,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    pub speed: f64,
    /// Start paused, waiting for a `resume` command.
    pub start_paused: bool,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { tick_rate: 10.0, speed: 1.0, start_paused: false }
    }
}

/// A published frame, serialized once for every subscriber.
#[derive(Debug)]
pub struct Published {
    pub tick: u64,
    pub light: String,
    /// Present while at least one subscriber asked for corridors.
    pub heavy: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub tick: u64,
    pub paused: bool,
    pub finished: bool,
}

type CommandMsg = (DirectorCommand, oneshot::Sender<CommandReply>);

#[derive(Clone)]
struct AppState {
    scenario: Arc<Scenario>,
    commands: mpsc::Sender<CommandMsg>,
    frames: watch::Receiver<Option<Arc<Published>>>,
    health: watch::Receiver<Health>,
    heavy_subscribers: Arc<AtomicUsize>,
}

/// Handle to the simulation thread.
pub struct Service {
    state: AppState,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

/// Number of simulation ticks between published frames.
pub fn decimation(sim_tick: f64, tick_rate: f64) -> u64 {
    if !(tick_rate > 0.0) {
        return 1;
    }
    ((1.0 / (sim_tick * tick_rate)).round() as u64).max(1)
}

impl Service {
    pub fn start(scenario: Scenario, opts: ServiceOptions) -> cineswarm_core::Result<Self> {
        let mut sim = Simulator::new(scenario.clone())?;
        if opts.start_paused {
            sim.submit(DirectorCommand::Pause);
        }
        let (cmd_tx, cmd_rx) = mpsc::channel::<CommandMsg>();
        let (frame_tx, frame_rx) = watch::channel(None);
        let (health_tx, health_rx) = watch::channel(Health { status: "ok".into(), ..Health::default() });
        let stop = Arc::new(AtomicBool::new(false));
        let heavy = Arc::new(AtomicUsize::new(0));
        let every = decimation(sim.config().tick, opts.tick_rate);
        let thread = {
            let stop = stop.clone();
            let heavy = heavy.clone();
            std::thread::Builder::new()
                .name("sim".into())
                .spawn(move || sim_loop(sim, opts, every, cmd_rx, frame_tx, health_tx, stop, heavy))
                .map_err(|e| cineswarm_core::Error::Io(e.to_string()))?
        };
        Ok(Self {
            state: AppState {
                scenario: Arc::new(scenario),
                commands: cmd_tx,
                frames: frame_rx,
                health: health_rx,
                heavy_subscribers: heavy,
            },
            stop,
            thread: Some(thread),
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/health", get(health))
            .route("/scenario", get(scenario))
            .route("/command", post(command))
            .route("/stream", get(stream_frames))
            .with_state(self.state.clone())
    }

    /// Latest published frame, if any.
    pub fn latest(&self) -> Option<Arc<Published>> {
        self.state.frames.borrow().clone()
    }

    /// Sends a command to the simulation thread and waits for the reply.
    pub async fn submit(&self, cmd: DirectorCommand) -> CommandReply {
        submit(&self.state, cmd).await
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves `service` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: &Service,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    info!("director service listening on {}", listener.local_addr()?);
    axum::serve(listener, service.router()).with_graceful_shutdown(shutdown).await
}

#[allow(clippy::too_many_arguments)]
fn sim_loop(
    mut sim: Simulator,
    opts: ServiceOptions,
    every: u64,
    commands: mpsc::Receiver<CommandMsg>,
    frames: watch::Sender<Option<Arc<Published>>>,
    health: watch::Sender<Health>,
    stop: Arc<AtomicBool>,
    heavy: Arc<AtomicUsize>,
) {
    let tick = sim.config().tick;
    let mut clock = Instant::now();
    let mut sim_elapsed = 0.0;
    let mut was_running = false;
    while !stop.load(Ordering::SeqCst) {
        loop {
            match commands.try_recv() {
                Ok((cmd, reply)) => {
                    let _ = reply.send(sim.submit(cmd));
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
        let running = !sim.is_paused() && !sim.is_finished();
        health.send_replace(Health {
            status: "ok".into(),
            tick: sim.tick(),
            paused: sim.is_paused(),
            finished: sim.is_finished(),
        });
        if !running {
            was_running = false;
            match commands.recv_timeout(Duration::from_millis(20)) {
                Ok((cmd, reply)) => {
                    let _ = reply.send(sim.submit(cmd));
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return,
            }
            continue;
        }
        if !was_running {
            clock = Instant::now();
            sim_elapsed = 0.0;
            was_running = true;
        }
        let Some(frame) = sim.step() else { continue };
        let t = frame.tick;
        if t % every == 0 || sim.is_finished() {
            publish(&sim, &frames, heavy.load(Ordering::SeqCst) > 0);
        }
        if opts.speed > 0.0 {
            sim_elapsed += tick / opts.speed;
            let ahead = sim_elapsed - clock.elapsed().as_secs_f64();
            if ahead > 0.0 {
                std::thread::sleep(Duration::from_secs_f64(ahead));
            }
        }
    }
}

fn publish(sim: &Simulator, frames: &watch::Sender<Option<Arc<Published>>>, heavy: bool) {
    let Some(light) = StateFrame::capture(sim, false) else { return };
    let encode = |f: &StateFrame| serde_json::to_string(f).unwrap_or_else(|e| {
        warn!("frame serialization failed: {e}");
        String::from("{}")
    });
    let heavy = heavy.then(|| StateFrame::capture(sim, true)).flatten().map(|f| encode(&f));
    frames.send_replace(Some(Arc::new(Published { tick: light.tick, light: encode(&light), heavy })));
}

async fn submit(state: &AppState, cmd: DirectorCommand) -> CommandReply {
    let (tx, rx) = oneshot::channel();
    if state.commands.send((cmd, tx)).is_err() {
        return CommandReply::nack("simulation stopped");
    }
    rx.await.unwrap_or_else(|_| CommandReply::nack("simulation stopped"))
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(state.health.borrow().clone())
}

async fn scenario(State(state): State<AppState>) -> Json<Scenario> {
    Json((*state.scenario).clone())
}

async fn command(State(state): State<AppState>, body: String) -> impl IntoResponse {
    let reply = match serde_json::from_str::<DirectorCommand>(&body) {
        Ok(cmd) => submit(&state, cmd).await,
        Err(e) => CommandReply::nack(format!("malformed command: {e}")),
    };
    let status = if reply.is_ack() { StatusCode::OK } else { StatusCode::BAD_REQUEST };
    (status, Json(reply))
}

#[derive(Debug, Default, Deserialize)]
struct StreamParams {
    #[serde(default)]
    corridors: bool,
}

/// Decrements the heavy-subscriber count when a stream is dropped.
struct HeavyGuard(Arc<AtomicUsize>);

impl Drop for HeavyGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

struct Subscriber {
    rx: watch::Receiver<Option<Arc<Published>>>,
    heavy: Option<HeavyGuard>,
    last_tick: Option<u64>,
}

async fn stream_frames(
    State(state): State<AppState>,
    Query(params): Query<StreamParams>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let heavy = params.corridors.then(|| {
        state.heavy_subscribers.fetch_add(1, Ordering::SeqCst);
        HeavyGuard(state.heavy_subscribers.clone())
    });
    let mut rx = state.frames.clone();
    rx.mark_changed();
    let sub = Subscriber { rx, heavy, last_tick: None };
    let s = stream::unfold(sub, |mut sub| async move {
        loop {
            sub.rx.changed().await.ok()?;
            let Some(p) = sub.rx.borrow_and_update().clone() else { continue };
            if sub.last_tick.is_some_and(|t| p.tick <= t) {
                continue;
            }
            sub.last_tick = Some(p.tick);
            let data = match (&sub.heavy, &p.heavy) {
                (Some(_), Some(h)) => h.as_str(),
                _ => p.light.as_str(),
            };
            let event = Event::default().id(p.tick.to_string()).data(data);
            return Some((Ok(event), sub));
        }
    });
    Sse::new(s).keep_alive(KeepAlive::default())
}
