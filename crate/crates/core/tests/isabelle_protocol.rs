//! Drives the Isabelle client against an in-process server speaking the
//! same wire protocol. Verdicts come from the ground oracle, so positions
//! travel through the symbol-offset conversion in both directions.

use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use exrefine::fixtures;
use exrefine::prover::isabelle::{byte_to_symbol, read_message, write_message};
use exrefine::prover::{
    locate_failed_step, start_session, CheckStatus, ErrorClass, IsabelleConfig, ProverBackend, ProverError,
    Severity,
};
use exrefine::theory::{ProofStep, StepKind, TheoryDoc};
use serde_json::{json, Value};

const PASSWORD: &str = "secret-pw";

fn send_long(w: &mut TcpStream, msg: &str) {
    write!(w, "{}\n{}", msg.len(), msg).unwrap();
    w.flush().unwrap();
}

fn oracle_messages(text: &str, file: &str) -> Vec<Value> {
    let mut h = start_session(&ProverBackend::GroundOracle { domain_bound: 3 }).unwrap();
    let report = h.check_text("t", text, Duration::from_secs(30)).unwrap();
    report
        .messages
        .iter()
        .map(|m| {
            let mut rec = json!({
                "kind": match m.severity { Severity::Error => "error", Severity::Warning => "warning", Severity::Info => "writeln" },
                "message": m.text,
            });
            if let Some(s) = m.span {
                rec["pos"] = json!({
                    "line": s.line,
                    "offset": byte_to_symbol(text, s.start),
                    "end_offset": byte_to_symbol(text, s.end),
                    "file": file,
                });
            }
            rec
        })
        .collect()
}

fn serve(stream: TcpStream, tmp: PathBuf) {
    let mut w = stream.try_clone().unwrap();
    let mut r = BufReader::new(stream);
    match read_message(&mut r) {
        Ok(Some(pw)) if pw == PASSWORD => write_message(&mut w, "OK {\"isabelle_id\":\"mock\"}").unwrap(),
        _ => return,
    }
    let mut task = 0;
    let mut pending_slow: Option<String> = None;
    while let Ok(Some(line)) = read_message(&mut r) {
        let (cmd, arg) = line.split_once(' ').unwrap_or((&line, "null"));
        let arg: Value = serde_json::from_str(arg).unwrap();
        task += 1;
        let id = format!("task-{task}");
        match cmd {
            "session_build" => {
                write_message(&mut w, &format!("OK {}", json!({"task": id}))).unwrap();
                write_message(&mut w, &format!("NOTE {}", json!({"task": id, "message": "Building HOL"}))).unwrap();
                write_message(&mut w, &format!("FINISHED {}", json!({"task": id, "ok": true, "return_code": 0})))
                    .unwrap();
            }
            "session_start" => {
                write_message(&mut w, &format!("OK {}", json!({"task": id}))).unwrap();
                let body = json!({"task": id, "session_id": "sess-1", "tmp_dir": tmp.to_string_lossy()});
                write_message(&mut w, &format!("FINISHED {body}")).unwrap();
            }
            "use_theories" => {
                write_message(&mut w, &format!("OK {}", json!({"task": id}))).unwrap();
                let name = arg["theories"][0].as_str().unwrap();
                let dir = PathBuf::from(arg["master_dir"].as_str().unwrap());
                let path = dir.join(format!("{name}.thy"));
                let text = std::fs::read_to_string(&path).unwrap();
                if name.contains("slow") {
                    pending_slow = Some(id);
                    continue;
                }
                let msgs = oracle_messages(&text, &path.to_string_lossy());
                let ok = !msgs.iter().any(|m| m["kind"] == "error");
                let body = json!({
                    "task": id, "ok": ok, "errors": [],
                    "nodes": [{"node_name": name, "theory_name": format!("Draft.{name}"), "messages": msgs}],
                });
                send_long(&mut w, &format!("FINISHED {body}"));
            }
            "cancel" => {
                write_message(&mut w, "OK").unwrap();
                if let Some(t) = pending_slow.take() {
                    let body = json!({"task": t, "kind": "error", "message": "Interrupt"});
                    write_message(&mut w, &format!("FAILED {body}")).unwrap();
                }
            }
            "purge_theories" => write_message(&mut w, "OK {\"purged\":[]}").unwrap(),
            "session_stop" => {
                write_message(&mut w, &format!("OK {}", json!({"task": id}))).unwrap();
                write_message(&mut w, &format!("FINISHED {}", json!({"task": id, "ok": true}))).unwrap();
            }
            "shutdown" => {
                write_message(&mut w, "OK").unwrap();
                return;
            }
            _ => write_message(&mut w, "ERROR \"unknown command\"").unwrap(),
        }
    }
}

/// Starts a mock server accepting `connections` clients.
fn mock_server(connections: usize) -> (u16, tempfile::TempDir) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    thread::spawn(move || {
        for stream in listener.incoming().take(connections) {
            let dir = dir.clone();
            thread::spawn(move || serve(stream.unwrap(), dir));
        }
    });
    (port, tmp)
}

fn backend(port: u16, password: &str) -> ProverBackend {
    ProverBackend::IsabelleServer(IsabelleConfig {
        port,
        password: password.into(),
        ..IsabelleConfig::default()
    })
}

#[test]
fn wrong_password_is_rejected() {
    let (port, _tmp) = mock_server(1);
    assert!(matches!(start_session(&backend(port, "nope")), Err(ProverError::AuthFailed)));
}

#[test]
fn unreachable_server_fails_to_connect() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    assert!(matches!(start_session(&backend(port, PASSWORD)), Err(ProverError::ConnectFailed { .. })));
}

#[test]
fn violin_theory_round_trips_through_the_protocol() {
    let (port, _tmp) = mock_server(1);
    let mut h = start_session(&backend(port, PASSWORD)).unwrap();
    assert_eq!(h.session_id(), Some("sess-1"));

    let report = h.check_theory(&fixtures::violin_theory(), Duration::from_secs(65)).unwrap();
    assert_eq!(report.status, CheckStatus::Valid, "{:?}", report.messages);

    // Unprovable middle step: no axiom supports it.
    let mut doc = fixtures::violin_theory();
    doc.proof[1] = ProofStep::new(StepKind::ThenHave, "Woman x \\<and> Instrument z", &["explanation_1"]);
    let report = h.check_theory(&doc, Duration::from_secs(65)).unwrap();
    assert_eq!(report.status, CheckStatus::Failed);
    let first = report.first_error.as_ref().unwrap();
    assert_eq!(first.class, ErrorClass::ProofFailure, "{:?}", first);
    assert_eq!(locate_failed_step(&report, &doc).unwrap(), Some((1, vec!["explanation_1".to_string()])));

    // Arity clash between declaration and use.
    let text = fixtures::violin_theory().render().replace("Instrument x\"", "Instrument x x\"");
    let report = h.check_text("violin", &text, Duration::from_secs(65)).unwrap();
    assert_eq!(report.first_error.unwrap().class, ErrorClass::TypeUnification);

    h.shutdown().unwrap();
}

#[test]
fn timeout_cancels_the_task() {
    let (port, _tmp) = mock_server(1);
    let mut h = start_session(&backend(port, PASSWORD)).unwrap();
    let doc = TheoryDoc::new("slow_case", vec![], fixtures::violin_theory().theorem);
    let started = Instant::now();
    let report = h.check_theory(&doc, Duration::from_secs(1)).unwrap();
    assert!(started.elapsed() < Duration::from_secs(6));
    assert_eq!(report.status, CheckStatus::Timeout);
    assert_eq!(report.first_error.unwrap().class, ErrorClass::Timeout);
    h.shutdown().unwrap();
}
