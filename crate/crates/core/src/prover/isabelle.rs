//! Client for the Isabelle server protocol.
//!
//! Messages are single lines, or a decimal byte count on its own line
//! followed by exactly that many bytes. Replies start with `OK`, `ERROR`,
//! `NOTE`, `FINISHED` or `FAILED` and carry a JSON payload; asynchronous
//! commands answer `OK {"task": …}` first and finish later with a
//! `FINISHED`/`FAILED` for the same task.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ProverError, ProverMessage, Severity};
use crate::theory::{line_of, Span};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
const CANCEL_GRACE: Duration = Duration::from_secs(4);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsabelleConfig {
    pub host: String,
    pub port: u16,
    #[serde(skip_serializing, default)]
    pub password: String,
    /// Logic image to start, `HOL` by default.
    pub session: String,
    /// Directory the theory files are written to; must be visible to the
    /// server. Defaults to the session's own temporary directory.
    pub master_dir: Option<PathBuf>,
    /// Run `session_build` before `session_start`.
    pub build: bool,
}

impl Default for IsabelleConfig {
    fn default() -> Self {
        IsabelleConfig {
            host: "127.0.0.1".into(),
            port: 4711,
            password: String::new(),
            session: "HOL".into(),
            master_dir: None,
            build: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplyKind {
    Ok,
    Error,
    Note,
    Finished,
    Failed,
}

#[derive(Clone, Debug)]
pub struct Reply {
    pub kind: ReplyKind,
    pub body: Value,
}

/// Splits `OK {...}` into kind and JSON body.
pub fn parse_reply(msg: &str) -> Result<Reply, ProverError> {
    let (head, rest) = msg.split_once(' ').unwrap_or((msg, ""));
    let kind = match head {
        "OK" => ReplyKind::Ok,
        "ERROR" => ReplyKind::Error,
        "NOTE" => ReplyKind::Note,
        "FINISHED" => ReplyKind::Finished,
        "FAILED" => ReplyKind::Failed,
        other => return Err(ProverError::Protocol(format!("unexpected reply {other:?}"))),
    };
    let rest = rest.trim();
    let body = if rest.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(rest).unwrap_or_else(|_| Value::String(rest.to_string()))
    };
    Ok(Reply { kind, body })
}

/// Writes one protocol message, length-framed when it spans lines.
pub fn write_message(w: &mut impl Write, msg: &str) -> io::Result<()> {
    if msg.contains('\n') {
        write!(w, "{}\n{}", msg.len(), msg)?;
    } else {
        writeln!(w, "{msg}")?;
    }
    w.flush()
}

/// Reads one protocol message; `None` at end of stream.
pub fn read_message(r: &mut impl BufRead) -> io::Result<Option<String>> {
    let mut line = Vec::new();
    if r.read_until(b'\n', &mut line)? == 0 {
        return Ok(None);
    }
    if line.last() == Some(&b'\n') {
        line.pop();
        if line.last() == Some(&b'\r') {
            line.pop();
        }
    }
    let text = String::from_utf8(line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit()) {
        let n: usize = text.parse().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)?;
        return String::from_utf8(buf).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e));
    }
    Ok(Some(text))
}

/// Byte offsets of each symbol start; a `\<name>` sequence is one symbol.
fn symbol_starts(text: &str) -> Vec<usize> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        out.push(i);
        if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'<') {
            if let Some(close) = text[i + 2..].find('>') {
                let name = &text[i + 2..i + 2 + close];
                if name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'^') {
                    i += close + 3;
                    continue;
                }
            }
        }
        i += text[i..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// Converts a 1-based symbol offset to a byte offset, clamped to the text.
pub fn symbol_to_byte(text: &str, offset: usize) -> usize {
    let starts = symbol_starts(text);
    offset.checked_sub(1).and_then(|i| starts.get(i).copied()).unwrap_or(text.len())
}

/// Converts a byte offset to the 1-based symbol offset containing it.
pub fn byte_to_symbol(text: &str, byte: usize) -> usize {
    let starts = symbol_starts(text);
    starts.partition_point(|&s| s <= byte).max(1)
}

fn position_span(text: &str, pos: &Value) -> Option<Span> {
    let offset = pos.get("offset")?.as_u64()? as usize;
    let start = symbol_to_byte(text, offset);
    let end = pos
        .get("end_offset")
        .and_then(Value::as_u64)
        .map_or(start, |e| symbol_to_byte(text, e as usize))
        .max(start);
    let line = pos.get("line").and_then(Value::as_u64).map_or_else(|| line_of(text, start), |l| l as usize);
    Some(Span { line, start, end })
}

/// Turns `use_theories` message records into prover messages with byte
/// spans into `text`. Positions in other files lose their span.
pub fn convert_messages(records: &[Value], text: &str, file_name: &str) -> Vec<ProverMessage> {
    records
        .iter()
        .map(|m| {
            let severity = match m.get("kind").and_then(Value::as_str) {
                Some("error") => Severity::Error,
                Some("warning") | Some("legacy") => Severity::Warning,
                _ => Severity::Info,
            };
            let text_field = m.get("message").and_then(Value::as_str).unwrap_or_default().to_string();
            let span = m.get("pos").and_then(|pos| {
                let in_file = pos.get("file").and_then(Value::as_str).is_none_or(|f| f.ends_with(file_name));
                if in_file {
                    position_span(text, pos)
                } else {
                    None
                }
            });
            ProverMessage { severity, text: text_field, span }
        })
        .collect()
}

enum TaskEnd {
    Finished(Value),
    Failed(Value),
    TimedOut,
}

/// A connection to a running Isabelle server with one started session.
pub struct IsabelleSession {
    writer: TcpStream,
    replies: Receiver<io::Result<String>>,
    session_id: String,
    master_dir: PathBuf,
}

impl IsabelleSession {
    /// Connects, authenticates, builds (optionally) and starts the session.
    pub fn start(cfg: &IsabelleConfig) -> Result<IsabelleSession, ProverError> {
        let addr = format!("{}:{}", cfg.host, cfg.port);
        let connect_err = |reason: String| ProverError::ConnectFailed { addr: addr.clone(), reason };
        let sock = addr
            .to_socket_addrs()
            .map_err(|e| connect_err(e.to_string()))?
            .next()
            .ok_or_else(|| connect_err("no address".into()))?;
        let stream = TcpStream::connect_timeout(&sock, CONNECT_TIMEOUT).map_err(|e| connect_err(e.to_string()))?;
        let reader = stream.try_clone().map_err(|e| connect_err(e.to_string()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                match read_message(&mut reader) {
                    Ok(Some(msg)) => {
                        if tx.send(Ok(msg)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut session = IsabelleSession {
            writer: stream,
            replies: rx,
            session_id: String::new(),
            master_dir: PathBuf::new(),
        };
        session.send(&cfg.password).map_err(|_| ProverError::AuthFailed)?;
        match session.recv(Some(Instant::now() + CONNECT_TIMEOUT)) {
            Ok(Some(Reply { kind: ReplyKind::Ok, .. })) => {}
            _ => return Err(ProverError::AuthFailed),
        }

        if cfg.build {
            match session.run_task("session_build", json!({ "session": cfg.session }), None)? {
                TaskEnd::Finished(v) if v.get("ok").and_then(Value::as_bool) != Some(false) => {}
                TaskEnd::Finished(v) | TaskEnd::Failed(v) => {
                    return Err(ProverError::SessionBuildFailed(excerpt(&v)));
                }
                TaskEnd::TimedOut => unreachable!("no deadline"),
            }
        }
        let started = match session.run_task("session_start", json!({ "session": cfg.session }), None)? {
            TaskEnd::Finished(v) => v,
            TaskEnd::Failed(v) => return Err(ProverError::SessionBuildFailed(excerpt(&v))),
            TaskEnd::TimedOut => unreachable!("no deadline"),
        };
        session.session_id = started
            .get("session_id")
            .and_then(Value::as_str)
            .ok_or_else(|| ProverError::Protocol("session_start without session_id".into()))?
            .to_string();
        session.master_dir = match &cfg.master_dir {
            Some(dir) => dir.clone(),
            None => started
                .get("tmp_dir")
                .and_then(Value::as_str)
                .map(PathBuf::from)
                .ok_or_else(|| ProverError::Protocol("session_start without tmp_dir".into()))?,
        };
        log::debug!("isabelle session {} started", session.session_id);
        Ok(session)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn master_dir(&self) -> &Path {
        &self.master_dir
    }

    fn send(&mut self, msg: &str) -> io::Result<()> {
        write_message(&mut self.writer, msg)
    }

    fn command_line(name: &str, arg: &Value) -> String {
        if arg.is_null() {
            name.to_string()
        } else {
            format!("{name} {arg}")
        }
    }

    /// Next reply; `Ok(None)` when the deadline passes first.
    fn recv(&mut self, deadline: Option<Instant>) -> Result<Option<Reply>, ProverError> {
        let msg = match deadline {
            None => self.replies.recv().map_err(|_| ProverError::SessionDead("connection closed".into()))?,
            Some(d) => match self.replies.recv_timeout(d.saturating_duration_since(Instant::now())) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ProverError::SessionDead("connection closed".into()));
                }
            },
        };
        let msg = msg.map_err(|e| ProverError::SessionDead(e.to_string()))?;
        parse_reply(&msg).map(Some)
    }

    /// Synchronous command: the first non-`NOTE` reply.
    fn command(&mut self, name: &str, arg: Value) -> Result<Value, ProverError> {
        self.send(&Self::command_line(name, &arg)).map_err(|e| ProverError::SessionDead(e.to_string()))?;
        loop {
            let reply = self.recv(None)?.expect("no deadline");
            match reply.kind {
                ReplyKind::Ok => return Ok(reply.body),
                ReplyKind::Error => return Err(ProverError::Protocol(format!("{name}: {}", excerpt(&reply.body)))),
                _ => continue,
            }
        }
    }

    /// Asynchronous command; cancels the task when `deadline` passes.
    fn run_task(&mut self, name: &str, arg: Value, deadline: Option<Instant>) -> Result<TaskEnd, ProverError> {
        let ok = self.command(name, arg)?;
        let task = ok
            .get("task")
            .and_then(Value::as_str)
            .ok_or_else(|| ProverError::Protocol(format!("{name}: reply without task id")))?
            .to_string();
        let same_task = |body: &Value| body.get("task").and_then(Value::as_str).is_none_or(|t| t == task);
        loop {
            let Some(reply) = self.recv(deadline)? else {
                log::warn!("{name}: deadline reached, cancelling task {task}");
                self.send(&Self::command_line("cancel", &json!({ "task": task })))
                    .map_err(|e| ProverError::SessionDead(e.to_string()))?;
                let grace = Instant::now() + CANCEL_GRACE;
                while let Some(r) = self.recv(Some(grace))? {
                    if matches!(r.kind, ReplyKind::Finished | ReplyKind::Failed) && same_task(&r.body) {
                        break;
                    }
                }
                return Ok(TaskEnd::TimedOut);
            };
            match reply.kind {
                ReplyKind::Finished if same_task(&reply.body) => return Ok(TaskEnd::Finished(reply.body)),
                ReplyKind::Failed if same_task(&reply.body) => return Ok(TaskEnd::Failed(reply.body)),
                ReplyKind::Note => log::trace!("{name}: {}", reply.body),
                _ => {}
            }
        }
    }

    /// Writes `<name>.thy`, runs `use_theories` on it and returns its
    /// messages and whether the deadline was hit.
    pub fn use_theory(
        &mut self,
        name: &str,
        text: &str,
        timeout: Duration,
    ) -> Result<(Vec<ProverMessage>, bool), ProverError> {
        let deadline = Instant::now() + timeout;
        let file_name = format!("{name}.thy");
        let path = self.master_dir.join(&file_name);
        std::fs::write(&path, text)
            .map_err(|e| ProverError::TheoryLoadFailed(format!("cannot write {}: {e}", path.display())))?;
        let master_dir = self.master_dir.to_string_lossy().into_owned();
        let args = json!({
            "session_id": self.session_id,
            "theories": [name],
            "master_dir": master_dir,
        });
        let end = self.run_task("use_theories", args, Some(deadline))?;
        let result = match end {
            TaskEnd::Finished(v) => {
                let mut records: Vec<Value> = v
                    .get("nodes")
                    .and_then(Value::as_array)
                    .map(|nodes| {
                        nodes
                            .iter()
                            .flat_map(|n| n.get("messages").and_then(Value::as_array).cloned().unwrap_or_default())
                            .collect()
                    })
                    .unwrap_or_default();
                if !records.iter().any(|r| r.get("kind").and_then(Value::as_str) == Some("error")) {
                    records.extend(v.get("errors").and_then(Value::as_array).cloned().unwrap_or_default());
                }
                (convert_messages(&records, text, &file_name), false)
            }
            TaskEnd::Failed(v) => {
                if excerpt(&v).contains("Interrupt") {
                    (vec![timeout_message(timeout)], true)
                } else {
                    return Err(ProverError::TheoryLoadFailed(excerpt(&v)));
                }
            }
            TaskEnd::TimedOut => (vec![timeout_message(timeout)], true),
        };
        let purge = json!({ "session_id": self.session_id, "theories": [name], "master_dir": master_dir });
        if let Err(e) = self.command("purge_theories", purge) {
            log::debug!("purge_theories: {e}");
        }
        Ok(result)
    }

    /// Stops the session and closes the connection; the server keeps running.
    pub fn stop(mut self) -> Result<(), ProverError> {
        let id = self.session_id.clone();
        match self.run_task("session_stop", json!({ "session_id": id }), Some(Instant::now() + CONNECT_TIMEOUT))? {
            TaskEnd::Finished(_) => Ok(()),
            TaskEnd::Failed(v) => Err(ProverError::Protocol(format!("session_stop: {}", excerpt(&v)))),
            TaskEnd::TimedOut => Err(ProverError::SessionDead("session_stop timed out".into())),
        }
    }

    /// Stops the session, then asks the server process itself to exit.
    pub fn shutdown_server(mut self) -> Result<(), ProverError> {
        let id = self.session_id.clone();
        let _ = self.run_task("session_stop", json!({ "session_id": id }), Some(Instant::now() + CONNECT_TIMEOUT));
        self.command("shutdown", Value::Null).map(|_| ())
    }
}

fn timeout_message(timeout: Duration) -> ProverMessage {
    ProverMessage { severity: Severity::Error, text: format!("Timeout after {} s", timeout.as_secs_f64()), span: None }
}

fn excerpt(v: &Value) -> String {
    let s = match v.get("message").and_then(Value::as_str) {
        Some(m) => m.to_string(),
        None => v.to_string(),
    };
    s.chars().take(2000).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_round_trip() {
        let mut buf = Vec::new();
        write_message(&mut buf, "OK {\"task\":\"1\"}").unwrap();
        write_message(&mut buf, "FINISHED {\"a\":\n1}").unwrap();
        assert!(buf.starts_with(b"OK {\"task\":\"1\"}\n17\nFINISHED"));
        let mut r = io::Cursor::new(buf);
        assert_eq!(read_message(&mut r).unwrap().unwrap(), "OK {\"task\":\"1\"}");
        assert_eq!(read_message(&mut r).unwrap().unwrap(), "FINISHED {\"a\":\n1}");
        assert_eq!(read_message(&mut r).unwrap(), None);
    }

    #[test]
    fn replies_parse() {
        let r = parse_reply("OK {\"task\":\"t1\"}").unwrap();
        assert_eq!(r.kind, ReplyKind::Ok);
        assert_eq!(r.body["task"], "t1");
        assert_eq!(parse_reply("OK").unwrap().body, Value::Null);
        assert!(parse_reply("HELLO").is_err());
    }

    #[test]
    fn symbol_offsets_count_escapes_once() {
        let text = "a \\<and> b";
        // symbols: a, ' ', \<and>, ' ', b
        assert_eq!(symbol_to_byte(text, 1), 0);
        assert_eq!(symbol_to_byte(text, 3), 2);
        assert_eq!(symbol_to_byte(text, 4), 8);
        assert_eq!(symbol_to_byte(text, 5), 9);
        assert_eq!(symbol_to_byte(text, 99), text.len());
        for b in [0, 2, 8, 9] {
            assert_eq!(symbol_to_byte(text, byte_to_symbol(text, b)), b);
        }
        assert_eq!(symbol_to_byte("∀x", 2), "∀".len());
    }

    #[test]
    fn foreign_file_positions_drop_their_span() {
        let recs = vec![
            json!({"kind":"error","message":"x","pos":{"line":1,"offset":1,"end_offset":2,"file":"/tmp/t.thy"}}),
            json!({"kind":"error","message":"y","pos":{"line":1,"offset":1,"file":"~~/src/HOL/Main.thy"}}),
            json!({"kind":"writeln","message":"z"}),
        ];
        let ms = convert_messages(&recs, "ab", "t.thy");
        assert_eq!(ms[0].span, Some(Span { line: 1, start: 0, end: 1 }));
        assert_eq!(ms[1].span, None);
        assert_eq!(ms[2].severity, Severity::Info);
    }
}
