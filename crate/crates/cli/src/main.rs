use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use exrefine::harness::{aggregate, load_problems, load_traces, run_batch, Format, RunReport, TraceWriter};
use exrefine::llm::{ChatBackend, Gateway, HttpChat, LLMConfig, Mode, StageKind, TranscriptCache};
use exrefine::pipeline::{formalise, FormulaCache, NLIProblem, RefinementTrace, RefinerConfig};
use exrefine::prover::{ErrorClassifier, IsabelleConfig, ProverBackend, DEFAULT_DOMAIN_BOUND};

#[derive(Parser)]
#[command(name = "exrefine", version, about = "Verify and refine NLI explanations with a theorem prover")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the theory of each problem without checking it.
    Formalise { problem_file: PathBuf },
    /// Check each problem once, without refinement.
    Verify { problem_file: PathBuf },
    /// Run the full refinement loop on each problem.
    Refine { problem_file: PathBuf },
    /// Refine every problem in every `*.jsonl` file of a directory.
    Batch { dir: PathBuf },
    /// Aggregate a directory of trace files into report tables.
    Report { trace_dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Isabelle,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Entailment,
    Mcqa,
}

#[derive(Args)]
struct Opts {
    #[arg(long, value_enum, default_value = "oracle", global = true)]
    backend: BackendKind,
    #[arg(long, default_value = "127.0.0.1", global = true)]
    isabelle_host: String,
    #[arg(long, default_value_t = 4711, global = true)]
    isabelle_port: u16,
    #[arg(long, env = "ISABELLE_PASSWORD", default_value = "", hide_env_values = true, global = true)]
    isabelle_password: String,
    #[arg(long, default_value = "HOL", global = true)]
    isabelle_session: String,
    /// Constants added to the premise's individuals by the oracle.
    #[arg(long, default_value_t = DEFAULT_DOMAIN_BOUND, global = true)]
    domain_bound: usize,
    /// JSON table replacing the bundled error classification patterns.
    #[arg(long, global = true)]
    error_patterns: Option<PathBuf>,

    #[arg(long, global = true)]
    llm_endpoint: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Model for one stage, as `<stage>=<model>`; repeatable.
    #[arg(long = "stage-model", value_parser = parse_stage_model, global = true)]
    stage_models: Vec<(StageKind, String)>,

    #[arg(long, default_value_t = 10, global = true)]
    max_iterations: usize,
    #[arg(long, default_value_t = 3, global = true)]
    syntax_iterations: usize,
    /// Prover timeout per check, in seconds.
    #[arg(long, default_value_t = 65, global = true)]
    timeout: u64,
    /// Keep one prover session for all rounds of a problem.
    #[arg(long, global = true)]
    reuse_session: bool,

    #[arg(long, value_enum, default_value = "live", global = true)]
    mode: ModeArg,
    /// Transcript cache (JSONL); required for record and replay.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = 1, global = true)]
    workers: usize,
    #[arg(long, default_value = "runs", global = true)]
    out: PathBuf,
}

fn parse_stage_model(s: &str) -> Result<(StageKind, String), String> {
    let (stage, model) = s.split_once('=').ok_or_else(|| format!("expected <stage>=<model>, got {s:?}"))?;
    let stage: StageKind = stage.trim().parse().map_err(|e| format!("{e}"))?;
    if model.trim().is_empty() {
        return Err("empty model name".into());
    }
    Ok((stage, model.trim().to_string()))
}

impl Opts {
    fn format(&self) -> Option<Format> {
        self.format.map(|f| match f {
            FormatArg::Entailment => Format::Entailment,
            FormatArg::Mcqa => Format::Mcqa,
        })
    }

    fn llm_config(&self) -> LLMConfig {
        let mut cfg = LLMConfig::default();
        if let Some(e) = &self.llm_endpoint {
            cfg.endpoint = e.clone();
        }
        if let Some(m) = &self.model {
            cfg.model_name = m.clone();
        }
        if let Some(t) = self.temperature {
            cfg.temperature = t;
        }
        cfg.per_stage_overrides.extend(self.stage_models.iter().cloned());
        cfg
    }

    fn gateway(&self) -> Result<Gateway> {
        let cfg = self.llm_config();
        let mode = match self.mode {
            ModeArg::Live => Mode::Live,
            ModeArg::Record => Mode::Record,
            ModeArg::Replay => Mode::Replay,
        };
        let cache = match &self.cache {
            Some(p) => Some(Arc::new(
                TranscriptCache::open(p).with_context(|| format!("opening cache {}", p.display()))?,
            )),
            None => None,
        };
        let backend: Option<Arc<dyn ChatBackend>> = match mode {
            Mode::Replay => None,
            _ => Some(Arc::new(HttpChat::from_env(&cfg.endpoint)?)),
        };
        Ok(Gateway::new(cfg, mode, backend, cache)?)
    }

    fn refiner_config(&self, max_iterations: usize) -> Result<RefinerConfig> {
        let backend = match self.backend {
            BackendKind::Oracle => ProverBackend::GroundOracle { domain_bound: self.domain_bound },
            BackendKind::Isabelle => ProverBackend::IsabelleServer(IsabelleConfig {
                host: self.isabelle_host.clone(),
                port: self.isabelle_port,
                password: self.isabelle_password.clone(),
                session: self.isabelle_session.clone(),
                ..IsabelleConfig::default()
            }),
        };
        let classifier = match &self.error_patterns {
            Some(p) => ErrorClassifier::from_file(p)?,
            None => ErrorClassifier::default(),
        };
        Ok(RefinerConfig {
            max_refinement_iterations: max_iterations,
            syntax_bound: self.syntax_iterations,
            timeout: Duration::from_secs(self.timeout),
            backend,
            reuse_session: self.reuse_session,
            classifier,
        })
    }
}

fn problems_in_dir(dir: &Path, format: Option<Format>) -> Result<Vec<NLIProblem>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in files {
        let ps = load_problems(&f, format).with_context(|| f.display().to_string())?;
        all.extend(ps);
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = all.iter().find(|p| !seen.insert(p.id.as_str())) {
        bail!("problem id {} appears in more than one file", dup.id);
    }
    Ok(all)
}

fn run(opts: &Opts, problems: &[NLIProblem], max_iterations: usize) -> Result<Vec<RefinementTrace>> {
    let gateway = opts.gateway()?;
    let cfg = opts.refiner_config(max_iterations)?;
    let writer = TraceWriter::new(&opts.out)?;
    let mut failed_writes = Vec::new();
    let mut traces = Vec::new();
    run_batch(problems, &gateway, &cfg, opts.workers, |trace| {
        println!("{}\t{}\t{}", trace.problem_id, trace.final_status.as_str(), trace.total_iterations);
        if let Some(d) = &trace.diagnostic {
            log::warn!("{}: {d}", trace.problem_id);
        }
        if let Err(e) = writer.write(&trace) {
            failed_writes.push(e.to_string());
        }
        traces.push(trace);
    });
    if !failed_writes.is_empty() {
        bail!("could not write {} trace(s): {}", failed_writes.len(), failed_writes.join("; "));
    }
    Ok(traces)
}

fn print_summary(report: &RunReport) {
    println!("dataset\tproblems\tinitially_valid\trefined_valid\texhausted\tinitial%\tfinal%\tsyntax_before\tsyntax_after");
    for d in report.datasets.iter().chain([&report.overall]) {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            d.dataset,
            d.problems,
            d.initially_valid,
            d.refined_valid,
            d.exhausted,
            d.initially_valid_pct,
            d.final_valid_pct,
            d.syntax_errors_before,
            d.syntax_errors_after
        );
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = &cli.opts;
    match &cli.command {
        Command::Formalise { problem_file } => {
            let problems = load_problems(problem_file, opts.format())?;
            let gateway = opts.gateway()?;
            fs::create_dir_all(&opts.out)?;
            for p in &problems {
                let mut cache = FormulaCache::default();
                match formalise(p, &p.explanation, &gateway, &mut cache) {
                    Ok(doc) => {
                        let path = opts.out.join(format!("{}.thy", doc.name));
                        fs::write(&path, doc.render())?;
                        println!("{}\t{}", p.id, path.display());
                    }
                    Err(e) => println!("{}\terror: {e}", p.id),
                }
            }
        }
        Command::Verify { problem_file } => {
            run(opts, &load_problems(problem_file, opts.format())?, 0)?;
        }
        Command::Refine { problem_file } => {
            run(opts, &load_problems(problem_file, opts.format())?, opts.max_iterations)?;
        }
        Command::Batch { dir } => {
            let problems = problems_in_dir(dir, opts.format())?;
            let traces = run(opts, &problems, opts.max_iterations)?;
            let report = aggregate(&traces);
            report.write(&opts.out)?;
            print_summary(&report);
        }
        Command::Report { trace_dir } => {
            let traces = load_traces(trace_dir)?;
            if traces.is_empty() {
                bail!("no trace files in {}", trace_dir.display());
            }
            let report = aggregate(&traces);
            report.write(&opts.out)?;
            print_summary(&report);
        }
    }
    Ok(())
}
