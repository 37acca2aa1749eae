//! Every record kind written to disk validates against the shipped schema.

use grapheme::dual::CoalescentState;
use grapheme::dynamics::{run, DynamicsParams, RunOptions, SizeMode, ThetaSource};
use grapheme::record::{Header, Record};
use grapheme::rng::master_rng;
use grapheme::state::GraphemeState;

fn validator() -> jsonschema::Validator {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/snapshot.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn check(v: &jsonschema::Validator, line: &str) {
    let value: serde_json::Value = serde_json::from_str(line).unwrap();
    let errors: Vec<String> = v.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{line}\n{errors:?}");
}

#[test]
fn trajectory_lines_match_schema() {
    let v = validator();
    let cases = [
        DynamicsParams { b: 1.0, c: 0.5, m_mut: 0.3, size_mode: SizeMode::Variable, ..DynamicsParams::fleming_viot(1.0) },
        DynamicsParams { c: 0.5, theta: ThetaSource::Atomic(vec![1.0, 2.0]), a_plus: 1.0, a_minus: 1.0, ..DynamicsParams::fleming_viot(1.0) },
    ];
    for params in cases {
        let mut rng = master_rng(6);
        let opts = RunOptions { horizon: 2.0, snapshot_interval: 0.5, log_events: true };
        let (rec, _) = run(GraphemeState::singletons(8), params, opts, &mut rng).unwrap();
        let mut buf = Vec::new();
        rec.write_jsonl(&Header::new(6, 0, serde_json::json!({"n0": 8})), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() > 3);
        for line in text.lines() {
            check(&v, line);
        }
    }
}

#[test]
fn coalescent_events_match_schema() {
    let v = validator();
    let mut rng = master_rng(2);
    let mut st = CoalescentState::singletons(6).with_log();
    while st.step_until(1.0, 1.0, &ThetaSource::Atomless, f64::INFINITY, &mut rng) {}
    assert!(!st.log().is_empty());
    for e in st.log() {
        check(&v, &serde_json::to_string(&Record::CoalescentEvent(e.clone())).unwrap());
    }
}
