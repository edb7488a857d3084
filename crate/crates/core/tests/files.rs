use scriptworld::corpus::{builtin_scenario, load_hints, load_scenario, save_scenario, CorpusError};
use scriptworld::graph::{dump_json, export_dot, ScenarioGraph};
use scriptworld::World;

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = builtin_scenario();
    save_scenario(&s, &path).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), s);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_scenario("/nonexistent/scenario.json").unwrap_err();
    assert!(matches!(err, CorpusError::Io { .. }));
}

#[test]
fn hints_file_loads_against_the_graph() {
    let world = World::builtin();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    let text: String = world
        .graph
        .playable_nodes()
        .map(|n| {
            let hints = world.hints.as_ref().unwrap().get(n);
            format!("{}\n", serde_json::json!({"node": world.graph.name(n), "hints": hints}))
        })
        .collect();
    std::fs::write(&path, text).unwrap();
    let store = load_hints(&path, &world.graph).unwrap();
    assert_eq!(store.get(ScenarioGraph::START), world.hints.as_ref().unwrap().get(ScenarioGraph::START));
}

#[test]
fn exports_are_deterministic() {
    let a = World::builtin();
    let b = World::builtin();
    assert_eq!(export_dot(&a.graph), export_dot(&b.graph));
    assert_eq!(export_dot(&a.compact), export_dot(&b.compact));
    let dump: serde_json::Value = serde_json::from_str(&dump_json(&a.graph, &a.scenario.title)).unwrap();
    assert_eq!(dump["nodes"].as_array().unwrap().len(), 33);
    assert_eq!(dump["edges"].as_array().unwrap().len(), 37);
}
