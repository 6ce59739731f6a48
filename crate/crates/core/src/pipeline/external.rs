//! A scorer living in a child process, spoken to over its standard streams.
//!
//! One JSON request per line goes to the child's stdin; exactly one JSON
//! response per line comes back on stdout. The process is reused across
//! queries and fed strictly one request at a time.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::scorer::{Scorer, ScorerRequest, ScorerResponse};
use crate::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

pub struct ExternalScorer {
    name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl ExternalScorer {
    /// Launches `command[0]` with the remaining elements as arguments.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty scorer command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalScorer {
            name: command.join(" "),
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }

    fn fail(&self, query_id: &str, message: impl Into<String>) -> Error {
        Error::Scorer {
            query_id: query_id.to_string(),
            message: message.into(),
        }
    }

    fn exit_message(&mut self) -> String {
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) if status.success() => return "scorer exited before responding".into(),
                Ok(Some(status)) => return format!("scorer exited with {status}"),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                Ok(None) => return "scorer closed its output".into(),
                Err(e) => return format!("scorer state unknown: {e}"),
            }
        }
    }
}

impl Scorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, req: &ScorerRequest) -> Result<ScorerResponse> {
        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        let write = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::Error::other("stdin closed")),
        };
        if let Err(e) = write {
            let status = self.exit_message();
            return Err(self.fail(&req.query_id, format!("cannot send request ({e}); {status}")));
        }
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.fail(&req.query_id, format!("reading response: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                self.stdin = None;
                return Err(self.fail(&req.query_id, format!("timed out after {:?}", self.timeout)));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.exit_message();
                return Err(self.fail(&req.query_id, status));
            }
        };
        let resp: ScorerResponse = serde_json::from_str(&reply)
            .map_err(|e| self.fail(&req.query_id, format!("protocol violation: {e}: {reply:?}")))?;
        resp.align(req)?;
        Ok(resp)
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        self.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(1);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
