mod common;

use std::path::Path;

use ltlpsi::scenario::{PlanFile, Scenario, ScenarioError};

use common::*;

fn warehouse_json() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("warehouse/scenario.json")).unwrap()).unwrap()
}

fn load(v: &serde_json::Value) -> Result<Scenario, ScenarioError> {
    Scenario::from_json(&v.to_string(), &fixture("warehouse"))
}

#[test]
fn warehouse_fixture_loads() {
    let s = warehouse();
    let names: Vec<&str> = s.models.iter().map(|m| m.robot()).collect();
    assert_eq!(names, ["green", "blue", "orange", "pink"]);
    assert_eq!(s.schedule.len(), 3);
    assert_eq!(s.task.min.values().copied().collect::<Vec<_>>(), [2]);
}

#[test]
fn other_schema_versions_are_refused() {
    let mut v = warehouse_json();
    v["schema"] = "ltlpsi.scenario/2".into();
    assert!(matches!(load(&v), Err(ScenarioError::Schema(_))));
    v["schema"] = "ltlpsi.plan/1".into();
    assert!(matches!(load(&v), Err(ScenarioError::Schema(_))));
}

#[test]
fn unknown_fields_are_refused() {
    let mut v = warehouse_json();
    v["robts"] = serde_json::json!([]);
    assert!(matches!(load(&v), Err(ScenarioError::Json(_))));
}

#[test]
fn schedule_must_be_ordered_and_name_known_robots() {
    let mut v = warehouse_json();
    v["schedule"][1]["time"] = 1.into();
    let err = load(&v).unwrap_err().to_string();
    assert!(err.contains("strictly increase"), "{err}");

    let mut v = warehouse_json();
    v["schedule"][0]["robot"] = "purple".into();
    let err = load(&v).unwrap_err().to_string();
    assert!(err.contains("purple"), "{err}");
}

#[test]
fn removing_a_missing_transition_is_refused() {
    let mut v = warehouse_json();
    v["schedule"][1]["remove"]["mot"][0]["to"] = "roomA_c".into();
    assert!(load(&v).is_err());
}

#[test]
fn hash_ignores_schedule_seed_and_horizon() {
    let base = load(&warehouse_json()).unwrap().hash();
    let mut v = warehouse_json();
    v["schedule"] = serde_json::json!([]);
    v["seed"] = 9.into();
    v["horizon"] = "50".into();
    assert_eq!(load(&v).unwrap().hash(), base);

    let mut v = warehouse_json();
    v["robots"][0]["initial"] = serde_json::json!({"mot": "roomA_c"});
    assert_ne!(load(&v).unwrap().hash(), base);
}

#[test]
fn plan_files_round_trip_and_check_their_scenario() {
    let s = warehouse();
    let products = s.products();
    let (plan, cfg) = plan_with_seed(&s, &products, 0);
    let file = PlanFile::new(&s, cfg, plan);
    let back = PlanFile::from_json(&file.to_json()).unwrap();
    assert_eq!(back, file);
    back.check_matches(&s).unwrap();

    let line = Scenario::load(&fixture("line/scenario.json")).unwrap();
    assert!(back.check_matches(&line).is_err());

    let wrong = file.to_json().replace("ltlpsi.plan/1", "ltlpsi.transcript/1");
    assert!(matches!(PlanFile::from_json(&wrong), Err(ScenarioError::Schema(_))));
}

#[test]
fn missing_task_file_names_the_path() {
    let mut v = warehouse_json();
    v["task"] = "nowhere.task".into();
    let err = Scenario::from_json(&v.to_string(), Path::new("/nonexistent")).unwrap_err();
    assert!(err.to_string().contains("nowhere.task"), "{err}");
}
