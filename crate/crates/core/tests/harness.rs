//! Ingestion, aggregation and batch execution.

use std::sync::Arc;

use exrefine::fixtures::scripted::worked_examples;
use exrefine::harness::{aggregate, load_traces, parse_problems, run_batch, write_problems, TraceWriter};
use exrefine::llm::{ChatBackend, FnChat, Gateway, LLMConfig, Mode};
use exrefine::pipeline::{FinalStatus, IterationRecord, RefinementTrace, RefinerConfig};
use exrefine::prover::CheckReport;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn record(round: usize, before: usize, after: usize) -> IterationRecord {
    IterationRecord {
        round,
        explanation_before: vec![],
        theory: None,
        theory_text: None,
        syntax_iterations_used: 0,
        syntax_errors_before: before,
        syntax_errors_after: after,
        strategy: None,
        steps: vec![],
        steps_processed: 0,
        report: CheckReport::synthetic_failure("x"),
        feedback: None,
        failure: None,
        explanation_after: vec![],
    }
}

fn trace(id: &str, dataset: &str, status: FinalStatus, total: usize) -> RefinementTrace {
    RefinementTrace {
        problem_id: id.into(),
        dataset: Some(dataset.into()),
        iterations: (0..=total).map(|r| record(r, 1, 0)).collect(),
        final_status: status,
        total_iterations: total,
        diagnostic: None,
    }
}

#[test]
fn single_refined_trace_histogram() {
    let r = aggregate(&[trace("a", "d", FinalStatus::RefinedValid, 2)]);
    assert_eq!(r.overall.refined_per_iteration.into_iter().collect::<Vec<_>>(), [(2, 1)]);
    assert_eq!(r.overall.valid_after_iteration, [0, 0, 1]);
    assert_eq!(r.overall.syntax_errors_before, 3.0);
}

#[test]
fn aggregate_partitions_and_ignores_order() {
    let mut traces = Vec::new();
    for i in 0..30 {
        let (status, total) = match i % 3 {
            0 => (FinalStatus::ValidInitially, 0),
            1 => (FinalStatus::RefinedValid, 1 + i % 4),
            _ => (FinalStatus::ExhaustedInvalid, 10),
        };
        traces.push(trace(&format!("p{i}"), if i % 2 == 0 { "x" } else { "y" }, status, total));
    }
    let report = aggregate(&traces);
    for d in report.datasets.iter().chain([&report.overall]) {
        assert_eq!(d.initially_valid + d.refined_valid + d.exhausted, d.problems);
        assert_eq!(d.refined_per_iteration.values().sum::<usize>(), d.refined_valid);
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    traces.shuffle(&mut rng);
    assert_eq!(aggregate(&traces), report);
}

#[test]
fn report_tables_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let r = aggregate(&[trace("a", "d", FinalStatus::RefinedValid, 2), trace("b", "d", FinalStatus::ValidInitially, 0)]);
    r.write(dir.path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("d,2,1,1,0,50.00,100.00")), "{summary}");
    for f in ["report.json", "valid_per_iteration.csv", "proof_steps.csv", "solve_time.csv"] {
        assert!(dir.path().join(f).exists());
    }
}

fn sentence() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z ,'-]{0,30}[.]?".prop_filter("non-blank", |s| !s.trim().is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ingestion_round_trip(
        rows in prop::collection::vec((prop::option::of(sentence()), sentence(), prop::collection::vec(sentence(), 0..5)), 1..6)
    ) {
        let text: String = rows
            .iter()
            .enumerate()
            .map(|(i, (p, h, e))| {
                serde_json::json!({"id": format!("p{i}"), "premise": p, "hypothesis": h, "explanation": e, "dataset": "d"})
                    .to_string() + "\n"
            })
            .collect();
        let loaded = parse_problems(&text, None).unwrap();
        let again = parse_problems(&write_problems(&loaded), None).unwrap();
        prop_assert_eq!(loaded, again);
    }
}

#[test]
fn batch_writes_one_trace_per_problem() {
    let model = worked_examples();
    let problems: Vec<_> = model.problems().iter().map(|p| p.problem.clone()).collect();
    let backend: Arc<dyn ChatBackend> = Arc::new(FnChat(move |req: &_| model.respond(req)));
    let g = Gateway::new(LLMConfig::default(), Mode::Live, Some(backend), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let writer = TraceWriter::new(dir.path()).unwrap();
    let mut n = 0;
    run_batch(&problems, &g, &RefinerConfig::default(), 3, |t| {
        writer.write(&t).unwrap();
        n += 1;
    });
    assert_eq!(n, 3);
    let traces = load_traces(dir.path()).unwrap();
    assert_eq!(traces.len(), 3);
    let report = aggregate(&traces);
    assert_eq!((report.overall.initially_valid, report.overall.refined_valid), (1, 2));
    assert_eq!(report.overall.refined_per_iteration.get(&2), Some(&2));
}
