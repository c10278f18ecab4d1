//! Rewrites the shipped fixtures: the violin theory and the replay
//! transcripts of the worked examples, recorded from the scripted model.
//!
//! cargo run -p exrefine-core --example regenerate_fixtures

use std::fs;
use std::path::Path;
use std::sync::Arc;

use exrefine::fixtures::scripted::worked_examples;
use exrefine::fixtures::violin_theory;
use exrefine::harness::write_problems;
use exrefine::llm::{ChatBackend, FnChat, Gateway, LLMConfig, Mode, TranscriptCache};
use exrefine::pipeline::{run_refiner, RefinerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let replay = root.join("replay");
    fs::create_dir_all(&replay)?;
    fs::write(root.join("violin.thy"), violin_theory().render())?;

    let model = worked_examples();
    let problems: Vec<_> = model.problems().iter().map(|p| p.problem.clone()).collect();
    fs::write(replay.join("problems.jsonl"), write_problems(&problems))?;

    let cache_path = replay.join("transcripts.jsonl");
    if cache_path.exists() {
        fs::remove_file(&cache_path)?;
    }
    let cache = Arc::new(TranscriptCache::open(&cache_path)?);
    let backend: Arc<dyn ChatBackend> = Arc::new(FnChat(move |req: &_| model.respond(req)));
    let gateway = Gateway::new(LLMConfig::default(), Mode::Record, Some(backend), Some(cache.clone()))?;
    for p in &problems {
        let trace = run_refiner(p, &gateway, &RefinerConfig::default());
        println!("{}: {:?} after {} refinement round(s)", p.id, trace.final_status, trace.total_iterations);
    }
    println!("{} transcripts in {}", cache.len(), cache_path.display());
    Ok(())
}
