use dialsum_core::annotate::{AnnotateError, Annotator, ExternalAnnotator, FallbackAnnotator};
use rayon::prelude::*;

fn stub(args: &[&str]) -> Vec<String> {
    let mut cmd = vec![env!("CARGO_BIN_EXE_dialsum-annotator").to_string()];
    cmd.extend(args.iter().map(|s| s.to_string()));
    cmd
}

fn texts() -> Vec<String> {
    (0..40)
        .map(|i| format!("Person{i} met Zoë at {i} pm. She thanked him. They left together."))
        .collect()
}

#[test]
fn pool_matches_fallback_under_concurrency() {
    let ext = ExternalAnnotator::spawn(&stub(&[]), 3).unwrap();
    assert_eq!(ext.workers(), 3);
    let texts = texts();
    let got: Vec<_> = texts.par_iter().map(|t| ext.annotate(t).unwrap()).collect();
    for (t, a) in texts.iter().zip(got) {
        assert_eq!(a, FallbackAnnotator.annotate(t).unwrap());
    }
}

#[test]
fn unmatched_ids_are_skipped() {
    let ext = ExternalAnnotator::spawn(&stub(&["--stale"]), 1).unwrap();
    let t = "Bob left. He slept.";
    for _ in 0..3 {
        assert_eq!(ext.annotate(t).unwrap(), FallbackAnnotator.annotate(t).unwrap());
    }
}

#[test]
fn echo_process_is_a_protocol_violation_with_raw_response() {
    let ext = ExternalAnnotator::spawn(&["cat".to_string()], 1).unwrap();
    match ext.annotate("Hi.") {
        Err(AnnotateError::Protocol { raw, .. }) => assert!(raw.contains("\"tasks\"")),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn exited_process_is_unreachable() {
    let ext = ExternalAnnotator::spawn(&["true".to_string()], 1).unwrap();
    assert!(matches!(ext.annotate("Hi."), Err(AnnotateError::Unreachable(_))));
}
