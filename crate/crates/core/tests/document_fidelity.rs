//! Golden-file checks for the rendered decision documents.

mod common;

use common::*;

use std::path::Path;

use rtlsquad_core::orchestrator::Outcome;

fn assert_matches_golden(actual: &str, name: &str) {
    let path = Path::new("tests/golden").join(name);
    if std::env::var("RTLSQUAD_UPDATE_GOLDEN").is_ok() {
        std::fs::write(&path, actual).unwrap();
        println!("golden file {name} updated");
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| {
        panic!("golden file {name} missing; run with RTLSQUAD_UPDATE_GOLDEN=1 to create it")
    });
    assert_eq!(
        actual, expected,
        "golden mismatch for {name}; run with RTLSQUAD_UPDATE_GOLDEN=1 to refresh"
    );
}

#[test]
fn implementation_session_document_is_stable() {
    let (cfg, inputs, records) = impl_fidelity_fixture();
    let root = temp_session_root("fidelity-impl").join("session");
    let (outcome, state) = run_with_records(cfg, inputs, records, &root);
    assert_eq!(outcome, Outcome::Accepted(1));

    let markdown = std::fs::read_to_string(root.join("decision_path.md")).unwrap();

    // both code versions and the reviewer's feedback paragraph, verbatim
    assert!(markdown.contains(IMPL_CODE_ROUND_1));
    assert!(markdown.contains(IMPL_CODE_ROUND_2));
    assert!(markdown.contains(REVIEWER_FEEDBACK));
    assert!(markdown.contains("rating of 4/5"));
    assert_eq!(state.versions.len(), 2);

    assert_matches_golden(&markdown, "impl_session.md");
}

#[test]
fn exploration_session_document_is_stable() {
    let (cfg, inputs, records) = expl_fidelity_fixture();
    let root = temp_session_root("fidelity-expl").join("session");
    let (outcome, _state) = run_with_records(cfg, inputs, records, &root);
    assert_eq!(outcome, Outcome::Accepted(1));

    let markdown = std::fs::read_to_string(root.join("decision_path.md")).unwrap();

    assert!(markdown.contains("**Current Commits**"));
    assert!(markdown.contains("Commit 79b4 Accepted"));
    assert!(markdown.contains("Commit 982d Rejected (1 accept / 2 reject)"));
    assert!(markdown.contains(GATING_DESCRIPTION));
    assert!(markdown.contains(REUSE_DESCRIPTION));
    assert!(markdown.contains("could lead to data hazards"));

    assert_matches_golden(&markdown, "expl_session.md");
}

#[test]
fn rerendering_from_the_transcript_is_byte_identical() {
    let (cfg, inputs, records) = expl_fidelity_fixture();
    let root = temp_session_root("fidelity-rerender").join("session");
    run_with_records(cfg, inputs, records, &root);

    let first = std::fs::read_to_string(root.join("decision_path.md")).unwrap();
    let events = rtlsquad_core::doc::read_transcript(&root.join("transcript.jsonl")).unwrap();
    let second = rtlsquad_core::doc::render_markdown(&events);
    assert_eq!(first, second);
}
