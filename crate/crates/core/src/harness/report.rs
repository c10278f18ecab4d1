use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::pipeline::{FinalStatus, RefinementTrace};

/// Dataset name for traces whose problem carried no `dataset` label.
pub const UNLABELLED: &str = "unlabelled";

/// Proof steps the prover got through against the steps proposed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPoint {
    pub problem_id: String,
    pub iteration: usize,
    pub processed: usize,
    pub suggested: usize,
}

/// Prover time for one proof check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub problem_id: String,
    pub iteration: usize,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub problems: usize,
    pub initially_valid: usize,
    pub refined_valid: usize,
    pub exhausted: usize,
    pub initially_valid_pct: f64,
    pub final_valid_pct: f64,
    /// Refined-valid problems by the iteration at which they became valid.
    pub refined_per_iteration: BTreeMap<usize, usize>,
    /// Problems valid after each iteration, counting from the initial check.
    pub valid_after_iteration: Vec<usize>,
    /// Syntax errors per problem, summed over its rounds, averaged.
    pub syntax_errors_before: f64,
    pub syntax_errors_after: f64,
    pub syntax_reduction_pct: f64,
    pub proof_steps_processed_vs_suggested: Vec<StepPoint>,
    pub solve_time_vs_steps: Vec<TimePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub datasets: Vec<DatasetReport>,
    pub overall: DatasetReport,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn dataset_report(name: &str, traces: &[&RefinementTrace]) -> DatasetReport {
    let n = traces.len();
    let count = |s: FinalStatus| traces.iter().filter(|t| t.final_status == s).count();
    let initially_valid = count(FinalStatus::ValidInitially);
    let refined_valid = count(FinalStatus::RefinedValid);
    let exhausted = count(FinalStatus::ExhaustedInvalid);

    let mut refined_per_iteration = BTreeMap::new();
    for t in traces.iter().filter(|t| t.final_status == FinalStatus::RefinedValid) {
        *refined_per_iteration.entry(t.total_iterations).or_insert(0) += 1;
    }
    let horizon = traces.iter().map(|t| t.total_iterations).max().unwrap_or(0);
    let valid_after_iteration = (0..=horizon)
        .map(|k| initially_valid + refined_per_iteration.range(..=k).map(|(_, c)| c).sum::<usize>())
        .collect();

    let before: usize = traces.iter().flat_map(|t| &t.iterations).map(|r| r.syntax_errors_before).sum();
    let after: usize = traces.iter().flat_map(|t| &t.iterations).map(|r| r.syntax_errors_after).sum();
    let avg = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };

    let mut steps = Vec::new();
    let mut times = Vec::new();
    for t in traces {
        for r in t.iterations.iter().filter(|r| !r.steps.is_empty() && r.failure.is_none()) {
            steps.push(StepPoint {
                problem_id: t.problem_id.clone(),
                iteration: r.round,
                processed: r.steps_processed,
                suggested: r.steps.len(),
            });
            times.push(TimePoint {
                problem_id: t.problem_id.clone(),
                iteration: r.round,
                steps: r.steps.len(),
                seconds: r.report.elapsed,
            });
        }
    }
    steps.sort_by(|a, b| (&a.problem_id, a.iteration).cmp(&(&b.problem_id, b.iteration)));
    times.sort_by(|a, b| (&a.problem_id, a.iteration).cmp(&(&b.problem_id, b.iteration)));

    DatasetReport {
        dataset: name.to_string(),
        problems: n,
        initially_valid,
        refined_valid,
        exhausted,
        initially_valid_pct: pct(initially_valid, n),
        final_valid_pct: pct(initially_valid + refined_valid, n),
        refined_per_iteration,
        valid_after_iteration,
        syntax_errors_before: avg(before),
        syntax_errors_after: avg(after),
        syntax_reduction_pct: if before == 0 { 0.0 } else { 100.0 * (before - after.min(before)) as f64 / before as f64 },
        proof_steps_processed_vs_suggested: steps,
        solve_time_vs_steps: times,
    }
}

/// Counts and series per dataset label and over all traces.
pub fn aggregate(traces: &[RefinementTrace]) -> RunReport {
    let mut groups: BTreeMap<&str, Vec<&RefinementTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.dataset.as_deref().unwrap_or(UNLABELLED)).or_default().push(t);
    }
    let all: Vec<&RefinementTrace> = traces.iter().collect();
    RunReport {
        datasets: groups.iter().map(|(name, ts)| dataset_report(name, ts)).collect(),
        overall: dataset_report("all", &all),
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    fn rows(&self) -> impl Iterator<Item = &DatasetReport> {
        self.datasets.iter().chain(std::iter::once(&self.overall))
    }

    /// Writes `report.json` and one CSV table per series into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()).map_err(|e| HarnessError::io(&json, e))?;

        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.write_record([
            "dataset",
            "problems",
            "initially_valid",
            "refined_valid",
            "exhausted",
            "initially_valid_pct",
            "final_valid_pct",
            "syntax_errors_before",
            "syntax_errors_after",
            "syntax_reduction_pct",
        ])?;
        for d in self.rows() {
            w.write_record([
                d.dataset.clone(),
                d.problems.to_string(),
                d.initially_valid.to_string(),
                d.refined_valid.to_string(),
                d.exhausted.to_string(),
                format!("{:.2}", d.initially_valid_pct),
                format!("{:.2}", d.final_valid_pct),
                format!("{:.2}", d.syntax_errors_before),
                format!("{:.2}", d.syntax_errors_after),
                format!("{:.2}", d.syntax_reduction_pct),
            ])?;
        }
        w.flush().map_err(|e| HarnessError::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("valid_per_iteration.csv"))?;
        w.write_record(["dataset", "iteration", "refined_at_iteration", "valid_after_iteration"])?;
        for d in self.rows() {
            for (k, valid) in d.valid_after_iteration.iter().enumerate() {
                let refined = d.refined_per_iteration.get(&k).copied().unwrap_or(0);
                w.write_record([d.dataset.clone(), k.to_string(), refined.to_string(), valid.to_string()])?;
            }
        }
        w.flush().map_err(|e| HarnessError::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("proof_steps.csv"))?;
        w.write_record(["dataset", "problem_id", "iteration", "processed", "suggested"])?;
        for d in &self.datasets {
            for p in &d.proof_steps_processed_vs_suggested {
                w.write_record([
                    d.dataset.clone(),
                    p.problem_id.clone(),
                    p.iteration.to_string(),
                    p.processed.to_string(),
                    p.suggested.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| HarnessError::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("solve_time.csv"))?;
        w.write_record(["dataset", "problem_id", "iteration", "steps", "seconds"])?;
        for d in &self.datasets {
            for p in &d.solve_time_vs_steps {
                w.write_record([
                    d.dataset.clone(),
                    p.problem_id.clone(),
                    p.iteration.to_string(),
                    p.steps.to_string(),
                    format!("{:.6}", p.seconds),
                ])?;
            }
        }
        w.flush().map_err(|e| HarnessError::io(dir, e))?;
        Ok(())
    }
}
