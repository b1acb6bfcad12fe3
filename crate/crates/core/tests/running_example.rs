use discrepancy::canonical::{MatchRelation, Side};
use discrepancy::error::Error;
use discrepancy::eval::{run_pipeline, RunConfig};
use discrepancy::relational::{evaluate_query, load_csv, Database, QuerySpec, Schema, Value};
use std::path::{Path, PathBuf};

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/running_example")
}

fn bundle(name: &str) -> RunConfig {
    RunConfig::load(&dir().join(name)).unwrap()
}

#[test]
fn queries_evaluate_to_the_published_counts() {
    let mut db = Database::new();
    for d in ["d1", "d2", "d3", "d4"] {
        let schema = Schema::load(&dir().join(format!("{d}.schema.json"))).unwrap();
        let rel = load_csv(&dir().join(format!("{d}.csv")), &schema).unwrap();
        db.insert(rel.name.clone(), rel);
    }
    for (q, want) in [("q1", 7), ("q2", 6), ("q3", 5), ("q4", 4)] {
        let spec = QuerySpec::load(&dir().join(format!("{q}.json"))).unwrap();
        let out = evaluate_query(&spec, &db).unwrap();
        assert_eq!(out.rows, vec![vec![Value::Integer(want)]], "{q}");
    }
}

#[test]
fn q1_q2_is_one_value_change_on_cs() {
    let r = run_pipeline(&bundle("bundle_q1_q2.json")).unwrap();
    assert_eq!((r.q1, r.q2), (7.0, 6.0));
    assert_eq!(r.relation, MatchRelation::Equiv);
    let e = &r.explanation;
    assert!(e.delta.is_empty());
    assert_eq!(e.value_changes.len(), 1);
    let c = &e.value_changes[0];
    match c.side {
        Side::Left => assert_eq!((c.row_id.as_str(), c.old, c.new), ("cs", 2.0, 1.0)),
        Side::Right => assert_eq!((c.row_id.as_str(), c.old, c.new), ("cse", 1.0, 2.0)),
    }
    assert_eq!(e.evidence.len(), 6);
    assert!(r.complete);
}

#[test]
fn q1_q3_finds_design_and_cs() {
    let r = run_pipeline(&bundle("bundle_q1_q3.json")).unwrap();
    assert_eq!((r.q1, r.q2), (7.0, 5.0));
    assert_eq!(r.relation, MatchRelation::LessGeneral);
    let e = &r.explanation;
    assert_eq!(e.delta.len(), 1);
    assert_eq!((e.delta[0].side, e.delta[0].row_id.as_str()), (Side::Left, "design"));
    assert_eq!(e.value_changes.len(), 1);
    let c = &e.value_changes[0];
    match c.side {
        Side::Left => assert_eq!((c.row_id.as_str(), c.old, c.new), ("cs", 2.0, 1.0)),
        Side::Right => assert_eq!((c.row_id.as_str(), c.old, c.new), ("computer science", 1.0, 2.0)),
    }
    assert_eq!(e.evidence.len(), 5);
    assert!(e.evidence.iter().all(|m| m.p == 0.9));
    assert_eq!(r.summary.len(), 2);
}

#[test]
fn q1_q4_is_incomparable() {
    let err = run_pipeline(&bundle("bundle_q1_q4.json")).unwrap_err();
    assert!(matches!(err.root(), Error::Incomparable), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let mut cfg = bundle("bundle_q1_q2.json");
    cfg.queries[0] = dir().join("absent.json");
    assert!(matches!(run_pipeline(&cfg).unwrap_err().root(), Error::Io { .. }));
}
