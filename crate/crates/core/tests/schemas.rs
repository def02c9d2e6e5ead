//! The JSON schemas under `schemas/` must accept what the code produces.

use std::path::PathBuf;

use cineswarm_core::sim::{Scenario, Simulator, StateFrame};
use serde_json::{json, Value};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn validator(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(root().join("schemas").join(format!("{name}.schema.json"))).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value, what: &str) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{what}: {errors:#?}");
}

#[test]
fn shipped_scenarios_match_schema() {
    let v = validator("scenario");
    for name in ["tower.json", "forest.json"] {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(root().join("scenarios").join(name)).unwrap()).unwrap();
        assert_valid(&v, &doc, name);
        // re-serialized with every default filled in
        let full = serde_json::to_value(Scenario::from_json(&doc.to_string()).unwrap()).unwrap();
        assert_valid(&v, &full, &format!("{name} with defaults"));
    }
}

#[test]
fn scenario_schema_rejects_what_the_loader_rejects() {
    let v = validator("scenario");
    let base = json!({
        "name": "x", "duration": 1.0,
        "target": {"waypoints": [[0.0, 0.0, 1.0]], "speed": 0.0},
        "uavs": [{"name": "cam", "role": "leader", "start": [0.0, 0.0, 2.0]}],
        "shots": [{"start_time": 0.0, "shot": {"shot_type": "chase"}}]
    });
    assert!(v.is_valid(&base));
    assert!(Scenario::from_json(&base.to_string()).is_ok());
    let mut unlit = base.clone();
    unlit["uavs"].as_array_mut().unwrap().push(json!({"name": "l", "role": "follower", "start": [1.0, 0.0, 2.0]}));
    let mut stray = base.clone();
    stray["colour"] = json!("red");
    let mut bad_shot = base.clone();
    bad_shot["shots"][0]["shot"]["shot_type"] = json!("dolly");
    for (what, doc) in [("follower without lighting", unlit), ("unknown field", stray), ("unknown shot", bad_shot)] {
        assert!(!v.is_valid(&doc), "{what} accepted by the schema");
        assert!(Scenario::from_json(&doc.to_string()).is_err(), "{what} accepted by the loader");
    }
}

#[test]
fn state_frames_match_schema() {
    let v = validator("state_frame");
    let path = root().join("scenarios/forest.json");
    let mut sim = Simulator::new(Scenario::load(path).unwrap()).unwrap();
    for _ in 0..45 {
        sim.step();
    }
    for heavy in [false, true] {
        let frame = serde_json::to_value(StateFrame::capture(&sim, heavy).unwrap()).unwrap();
        assert_eq!(frame.get("corridors").is_some(), heavy);
        assert_valid(&v, &frame, if heavy { "heavy frame" } else { "light frame" });
    }
}
