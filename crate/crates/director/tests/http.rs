use std::path::PathBuf;
use std::time::Duration;

use cineswarm_core::shots::{ShotCommand, ShotType};
use cineswarm_core::sim::{DirectorCommand, Scenario};
use cineswarm_director::{decimation, serve, Health, Service, ServiceOptions};
use serde_json::{json, Value};
use tokio::sync::oneshot;

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../schemas/{name}.schema.json"));
    jsonschema::validator_for(&serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()).unwrap()
}

fn tower() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/tower.json");
    Scenario::load(path).unwrap()
}

struct Running {
    base: String,
    client: reqwest::Client,
    service: &'static Service,
    _shutdown: oneshot::Sender<()>,
}

async fn start(scenario: Scenario, opts: ServiceOptions) -> Running {
    // leaked so the server task can borrow it for the rest of the test
    let service: &'static Service = Box::leak(Box::new(Service::start(scenario, opts).unwrap()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = oneshot::channel::<()>();
    tokio::spawn(async move {
        serve(listener, service, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Running { base, client: reqwest::Client::new(), service, _shutdown: tx }
}

impl Running {
    async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, serde_json::from_str(&r.text().await.unwrap()).unwrap())
    }

    async fn post(&self, body: String) -> (u16, Value) {
        let r = self
            .client
            .post(format!("{}/command", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, serde_json::from_str(&r.text().await.unwrap()).unwrap())
    }

    async fn health(&self) -> Health {
        serde_json::from_value(self.get("/health").await.1).unwrap()
    }

    async fn subscribe(&self, query: &str) -> Events {
        let r = self.client.get(format!("{}/stream{query}", self.base)).send().await.unwrap();
        assert_eq!(r.status().as_u16(), 200);
        let kind = r.headers()["content-type"].to_str().unwrap().to_string();
        assert!(kind.starts_with("text/event-stream"), "{kind}");
        Events { response: r, buffer: String::new() }
    }
}

/// Minimal server-sent-event reader.
struct Events {
    response: reqwest::Response,
    buffer: String,
}

impl Events {
    /// Next event with a payload, as (id, frame).
    async fn next(&mut self) -> (u64, Value) {
        loop {
            if let Some(end) = self.buffer.find("\n\n") {
                let block: String = self.buffer.drain(..end + 2).collect();
                let mut id = None;
                let mut data = String::new();
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("id:") {
                        id = Some(v.trim().parse().unwrap());
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.strip_prefix(' ').unwrap_or(v));
                    }
                }
                if let Some(id) = id {
                    return (id, serde_json::from_str(&data).unwrap());
                }
                continue;
            }
            let chunk = tokio::time::timeout(Duration::from_secs(30), self.response.chunk())
                .await
                .expect("stream stalled")
                .unwrap()
                .expect("stream closed");
            self.buffer.push_str(std::str::from_utf8(&chunk).unwrap());
        }
    }
}

fn paused() -> ServiceOptions {
    ServiceOptions { start_paused: true, ..ServiceOptions::default() }
}

#[test]
fn decimation_rounds_to_whole_ticks() {
    assert_eq!(decimation(0.05, 10.0), 2);
    assert_eq!(decimation(0.05, 20.0), 1);
    assert_eq!(decimation(0.05, 100.0), 1);
    assert_eq!(decimation(0.05, 3.0), 7);
    assert_eq!(decimation(0.05, 0.0), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_scenario() {
    let s = start(tower(), paused()).await;
    let (status, h) = s.get("/health").await;
    assert_eq!(status, 200);
    assert_eq!(h["status"], "ok");
    assert_eq!(h["paused"], true);
    let (status, sc) = s.get("/scenario").await;
    assert_eq!(status, 200);
    assert_eq!(sc["name"], "tower");
    assert_eq!(sc["uavs"].as_array().unwrap().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn commands_are_acknowledged_or_refused() {
    let s = start(tower(), paused()).await;
    let commands = schema("director_command");
    let replies = schema("command_reply");
    let shot = serde_json::to_string(&DirectorCommand::SetShot { shot: ShotCommand::new(ShotType::Lateral) }).unwrap();
    assert!(commands.is_valid(&serde_json::from_str(&shot).unwrap()));
    let (status, reply) = s.post(shot).await;
    assert!(replies.is_valid(&reply), "{reply}");
    assert_eq!(status, 200);
    assert_eq!(reply["ack"], true);
    assert!(reply["tick"].is_u64());

    let lighting = json!({"kind": "set_lighting", "follower_id": 7,
        "lighting": {"chi": 0.5, "varrho": 0.5, "distance": 5.0, "virtual_distance": 5.0}});
    assert!(commands.is_valid(&lighting));
    let (status, reply) = s.post(lighting.to_string()).await;
    assert_eq!(status, 400);
    assert!(replies.is_valid(&reply), "{reply}");
    assert_eq!(reply["nack"], true);
    assert!(reply["reason"].as_str().unwrap().contains("unknown follower"));

    let (status, reply) = s.post("{\"kind\": \"set_shot\"".into()).await;
    assert_eq!(status, 400);
    assert!(reply["reason"].as_str().unwrap().starts_with("malformed"));

    let warp = json!({"kind": "warp"});
    assert!(!commands.is_valid(&warp));
    let (status, reply) = s.post(warp.to_string()).await;
    assert_eq!(status, 400);
    assert!(replies.is_valid(&reply), "{reply}");
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_and_resume() {
    let s = start(tower(), paused()).await;
    tokio::time::sleep(Duration::from_millis(200)).await;
    let h = s.health().await;
    assert!(h.paused);
    assert_eq!(h.tick, 0);

    let (status, _) = s.post(json!({"kind": "resume"}).to_string()).await;
    assert_eq!(status, 200);
    tokio::time::sleep(Duration::from_millis(400)).await;
    let (status, _) = s.post(json!({"kind": "pause"}).to_string()).await;
    assert_eq!(status, 200);
    let held = s.health().await;
    assert!(held.paused);
    assert!(held.tick > 0);
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert_eq!(s.health().await.tick, held.tick);
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_is_ordered_and_decimated_for_every_subscriber() {
    let s = start(tower(), ServiceOptions { tick_rate: 10.0, speed: 4.0, start_paused: true }).await;
    let mut a = s.subscribe("").await;
    let mut b = s.subscribe("?corridors=true").await;
    s.post(json!({"kind": "resume"}).to_string()).await;
    let frames = schema("state_frame");
    for events in [&mut a, &mut b] {
        let mut last = None;
        for _ in 0..15 {
            let (id, frame) = events.next().await;
            assert!(frames.is_valid(&frame), "frame {id} does not match the schema");
            assert_eq!(frame["tick"].as_u64(), Some(id));
            assert_eq!(id % 2, 0, "tick {id} is not on the 10 Hz grid");
            assert!(last.is_none_or(|l| id > l), "tick {id} after {last:?}");
            assert_eq!(frame["uavs"].as_array().unwrap().len(), 3);
            last = Some(id);
        }
    }
    // only the corridor subscriber gets corridors
    let (_, light) = a.next().await;
    assert!(light.get("corridors").is_none_or(Value::is_null));
    let (_, heavy) = b.next().await;
    assert!(frames.is_valid(&heavy));
    assert_eq!(heavy["corridors"].as_array().unwrap().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn fly_over_takes_the_camera_past_the_target() {
    let mut scenario = tower();
    scenario.duration = 24.0;
    scenario.shots.truncate(1);
    assert_eq!(scenario.shots[0].shot.shot_type, ShotType::Chase);
    let s = start(scenario, ServiceOptions { tick_rate: 20.0, speed: 8.0, start_paused: true }).await;
    let mut events = s.subscribe("").await;
    s.post(json!({"kind": "resume"}).to_string()).await;

    let ahead = |f: &Value| {
        let p = &f["uavs"][0]["p"];
        p[0].as_f64().unwrap() - f["target_truth"][0].as_f64().unwrap()
    };
    let (_, first) = events.next().await;
    assert!(ahead(&first) < -3.0, "camera should start behind, offset {}", ahead(&first));
    loop {
        let (_, f) = events.next().await;
        if f["time"].as_f64().unwrap() >= 6.0 {
            break;
        }
    }
    let cfg = tower().config;
    let leader_ticks = (cfg.leader_period / cfg.tick).round() as u64;
    let reply = s.service.submit(DirectorCommand::SetShot { shot: ShotCommand::new(ShotType::FlyOver) }).await;
    let boundary = reply.tick().expect("ack");
    assert_eq!(boundary % leader_ticks, 0);

    let mut adopted_at = None;
    let last = loop {
        let (id, f) = events.next().await;
        if adopted_at.is_none() && f["active_shot"]["shot_type"] == "fly_over" {
            adopted_at = Some(id);
        }
        if f["finished"] == true {
            break f;
        }
    };
    let adopted_at = adopted_at.expect("fly_over never became active");
    assert!(adopted_at >= boundary && adopted_at < boundary + leader_ticks, "adopted at {adopted_at}, boundary {boundary}");
    assert!(ahead(&last) > 3.0, "camera should finish ahead, offset {}", ahead(&last));
}
