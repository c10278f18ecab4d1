use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use super::HarnessError;
use crate::llm::Gateway;
use crate::pipeline::{NLIProblem, RefinementTrace, Refiner, RefinerConfig};

/// File name for a problem's trace; characters outside `[A-Za-z0-9_.-]`
/// become `_`.
pub fn trace_file_name(problem_id: &str) -> String {
    let stem: String =
        problem_id.chars().map(|c| if c.is_ascii_alphanumeric() || "_.-".contains(c) { c } else { '_' }).collect();
    format!("{stem}.trace.json")
}

/// Writes one trace document per problem into a directory.
pub struct TraceWriter {
    dir: PathBuf,
}

impl TraceWriter {
    pub fn new(dir: &Path) -> Result<TraceWriter, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(TraceWriter { dir: dir.to_path_buf() })
    }

    pub fn write(&self, trace: &RefinementTrace) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join(trace_file_name(&trace.problem_id));
        let text = serde_json::to_string_pretty(trace).expect("trace serialises");
        fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}

/// Every `*.trace.json` under `dir`, sorted by file name.
pub fn load_traces(dir: &Path) -> Result<Vec<RefinementTrace>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".trace.json")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| HarnessError::Trace { path: p.display().to_string(), reason: e.to_string() })
        })
        .collect()
}

/// Runs every problem on a pool of `workers` threads. Each finished trace
/// goes to `sink` on the calling thread, in completion order.
pub fn run_batch<F>(problems: &[NLIProblem], gateway: &Gateway, cfg: &RefinerConfig, workers: usize, mut sink: F)
where
    F: FnMut(RefinementTrace),
{
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, problems.len().max(1)) {
            let tx = tx.clone();
            let next = &next;
            s.spawn(move || {
                let refiner = Refiner::new(gateway, cfg.clone());
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(p) = problems.get(i) else { break };
                    if tx.send(refiner.run(p)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for trace in rx {
            sink(trace);
        }
    });
}
