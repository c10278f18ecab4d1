use super::stages::{attach_proof, construct_proof, rough_inference};
use super::{
    assemble_feedback, filter_facts, formalise, refine_explanation, refine_syntax_loop, Fact, FactIds, FinalStatus,
    FormulaCache, IterationRecord, NLIProblem, PipelineError, RefinementTrace, RefinerConfig,
};
use crate::llm::Gateway;
use crate::prover::{locate_failed_step, start_session_with, CheckReport, ProverError, SessionHandle};

/// Runs the refinement loop for one problem at a time.
pub struct Refiner<'g> {
    gateway: &'g Gateway,
    cfg: RefinerConfig,
}

pub fn run_refiner(problem: &NLIProblem, gateway: &Gateway, cfg: &RefinerConfig) -> RefinementTrace {
    Refiner::new(gateway, cfg.clone()).run(problem)
}

impl IterationRecord {
    fn start(round: usize, explanation: &[Fact]) -> IterationRecord {
        IterationRecord {
            round,
            explanation_before: explanation.to_vec(),
            theory: None,
            theory_text: None,
            syntax_iterations_used: 0,
            syntax_errors_before: 0,
            syntax_errors_after: 0,
            strategy: None,
            steps: Vec::new(),
            steps_processed: 0,
            report: CheckReport::synthetic_failure("round did not reach the prover"),
            feedback: None,
            failure: None,
            explanation_after: Vec::new(),
        }
    }

    fn fail(&mut self, reason: String) {
        self.report = CheckReport::synthetic_failure(&reason);
        self.note(reason);
    }

    fn note(&mut self, reason: String) {
        self.failure = Some(match self.failure.take() {
            Some(prev) => format!("{prev}; {reason}"),
            None => reason,
        });
    }
}

impl<'g> Refiner<'g> {
    pub fn new(gateway: &'g Gateway, cfg: RefinerConfig) -> Self {
        Refiner { gateway, cfg }
    }

    pub fn config(&self) -> &RefinerConfig {
        &self.cfg
    }

    pub fn run(&self, problem: &NLIProblem) -> RefinementTrace {
        let mut trace = RefinementTrace {
            problem_id: problem.id.clone(),
            dataset: problem.dataset().map(str::to_string),
            iterations: Vec::new(),
            final_status: FinalStatus::ExhaustedInvalid,
            total_iterations: 0,
            diagnostic: None,
        };
        if let Err(e) = problem.validate() {
            trace.diagnostic = Some(e.to_string());
            return trace;
        }

        let mut explanation = problem.explanation.clone();
        let mut cache = FormulaCache::default();
        let mut ids = FactIds::new(problem);
        let mut kept: Option<SessionHandle> = None;
        let max = self.cfg.max_refinement_iterations;

        for round in 0..=max {
            let mut session = match kept.take() {
                Some(s) => s,
                None => match start_session_with(&self.cfg.backend, self.cfg.classifier.clone()) {
                    Ok(s) => s,
                    Err(e) => {
                        trace.diagnostic = Some(PipelineError::from(e).to_string());
                        break;
                    }
                },
            };
            let mut rec = IterationRecord::start(round, &explanation);
            let outcome = self.attempt(problem, &explanation, &mut cache, &mut session, &mut rec);
            let mut done = false;
            match outcome {
                Err(e) => {
                    let e = PipelineError::from(e);
                    rec.fail(e.to_string());
                    trace.diagnostic = Some(e.to_string());
                    done = true;
                }
                Ok(()) if rec.report.is_valid() => {
                    trace.final_status =
                        if round == 0 { FinalStatus::ValidInitially } else { FinalStatus::RefinedValid };
                    done = true;
                }
                Ok(()) if round == max => done = true,
                Ok(()) => {
                    let feedback = assemble_feedback(&rec.report, rec.theory.as_ref(), rec.strategy.clone());
                    let base = match &rec.strategy {
                        Some(s) => filter_facts(&explanation, s, &rec.steps),
                        None => explanation.clone(),
                    };
                    match refine_explanation(&feedback, problem, &base, &explanation, self.gateway, &mut ids) {
                        Ok(next) => explanation = next,
                        Err(e) => {
                            log::warn!("{}: round {round}: {e}", problem.id);
                            rec.note(e.to_string());
                        }
                    }
                    rec.feedback = Some(feedback);
                }
            }
            rec.explanation_after = explanation.clone();
            log::info!("{}: round {round}: {:?}", problem.id, rec.report.status);
            trace.iterations.push(rec);

            if self.cfg.reuse_session && !done {
                kept = Some(session);
            } else if let Err(e) = session.shutdown() {
                log::warn!("{}: session shutdown: {e}", problem.id);
            }
            if done {
                break;
            }
        }
        trace.total_iterations = trace.iterations.len().saturating_sub(1);
        trace
    }

    /// One round up to the proof check. Stage failures are recorded in
    /// `rec`; only prover failures are returned.
    fn attempt(
        &self,
        problem: &NLIProblem,
        explanation: &[Fact],
        cache: &mut FormulaCache,
        session: &mut SessionHandle,
        rec: &mut IterationRecord,
    ) -> Result<(), ProverError> {
        let doc = match formalise(problem, explanation, self.gateway, cache) {
            Ok(d) => d,
            Err(PipelineError::BackendUnavailable(e)) => return Err(e),
            Err(e) => {
                rec.fail(e.to_string());
                return Ok(());
            }
        };

        let syn = refine_syntax_loop(&doc, session, self.gateway, &self.cfg)?;
        rec.syntax_iterations_used = syn.iterations_used;
        rec.syntax_errors_before = syn.errors_before;
        rec.syntax_errors_after = syn.errors_after;
        rec.theory_text = Some(syn.text.clone());
        rec.theory = syn.parsed.as_ref().map(|p| p.doc.clone());
        rec.report = syn.report.clone();
        if !syn.is_clean() {
            if syn.report.is_valid() {
                rec.fail("the repaired theory text could not be read back".into());
            } else {
                rec.note(format!("syntax errors remain after {} repairs", syn.iterations_used));
            }
            return Ok(());
        }
        let doc = match (syn.iterations_used, syn.parsed) {
            (0, _) | (_, None) => doc,
            (_, Some(p)) => p.doc,
        };

        let strategy = match rough_inference(problem, explanation, self.gateway) {
            Ok(s) => s,
            Err(e) => {
                rec.fail(e.to_string());
                return Ok(());
            }
        };
        rec.strategy = Some(strategy.clone());
        let steps = match construct_proof(&doc, &strategy, self.gateway) {
            Ok(s) => s,
            Err(e) => {
                rec.fail(e.to_string());
                return Ok(());
            }
        };
        rec.steps = steps.clone();
        let proved = match attach_proof(doc, steps) {
            Ok(d) => d,
            Err(e) => {
                rec.fail(PipelineError::from(e).to_string());
                return Ok(());
            }
        };

        let report = session.check_theory(&proved, self.cfg.timeout)?;
        rec.steps_processed = if report.is_valid() {
            proved.proof.len()
        } else {
            match locate_failed_step(&report, &proved) {
                Ok(Some((i, _))) => i,
                _ => 0,
            }
        };
        rec.theory_text = Some(proved.render());
        rec.theory = Some(proved);
        rec.report = report;
        Ok(())
    }
}
