#![cfg(unix)]

use std::time::Duration;

use slideret_core::pipeline::{Candidate, ExternalScorer, Scorer, ScorerRequest};
use slideret_core::Error;

fn sh(script: &str) -> Vec<String> {
    vec!["sh".into(), "-c".into(), script.into()]
}

fn request() -> ScorerRequest {
    ScorerRequest {
        query_id: "q1".into(),
        text: "pet care".into(),
        candidates: ["a", "b"]
            .iter()
            .map(|d| Candidate { doc_id: d.to_string(), caption: String::new(), ocr_text: None, image_path: None })
            .collect(),
    }
}

fn scorer_error(script: &str, timeout: Duration) -> String {
    let mut s = ExternalScorer::spawn(&sh(script), timeout).unwrap();
    match s.score(&request()) {
        Err(e @ Error::Scorer { .. }) => e.to_string(),
        other => panic!("expected scorer error, got {other:?}"),
    }
}

#[test]
fn fixed_response_is_reused_across_queries() {
    let reply = r#"{"query_id":"q1","scores":[{"doc_id":"b","score":2.0},{"doc_id":"a","score":1.0}]}"#;
    let mut s = ExternalScorer::spawn(&sh(&format!("while read l; do echo '{reply}'; done")), Duration::from_secs(10)).unwrap();
    for _ in 0..3 {
        let resp = s.score(&request()).unwrap();
        assert_eq!(resp.align(&request()).unwrap(), vec![1.0, 2.0]);
    }
}

#[test]
fn nonzero_exit_reported() {
    let msg = scorer_error("read l; exit 3", Duration::from_secs(10));
    assert!(msg.contains("exit"), "{msg}");
    assert!(msg.contains("q1"), "{msg}");
}

#[test]
fn garbage_is_protocol_violation() {
    let msg = scorer_error("read l; echo not-json; sleep 1", Duration::from_secs(10));
    assert!(msg.contains("protocol violation"), "{msg}");
}

#[test]
fn omitted_candidate_named() {
    let reply = r#"{"query_id":"q1","scores":[{"doc_id":"a","score":1.0}]}"#;
    let msg = scorer_error(&format!("read l; echo '{reply}'; sleep 1"), Duration::from_secs(10));
    assert!(msg.contains("`b`"), "{msg}");
}

#[test]
fn slow_scorer_times_out() {
    let msg = scorer_error("read l; sleep 5", Duration::from_millis(200));
    assert!(msg.contains("timed out"), "{msg}");
}

#[test]
fn missing_program() {
    assert!(ExternalScorer::spawn(&["/no/such/scorer".to_string()], Duration::from_secs(1)).is_err());
    assert!(ExternalScorer::spawn(&[], Duration::from_secs(1)).is_err());
}
