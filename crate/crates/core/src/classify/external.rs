use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ClassDistribution, Classifier, ClassifierError};

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    scores: BTreeMap<String, f64>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Classifier backed by a long-running child process.
///
/// Protocol: one JSON object per line in each direction. The adapter writes
/// `{"text": "..."}` and expects `{"scores": {"label": p, ...}}` back. Calls
/// are serialized per child.
pub struct ExternalClassifier {
    pipe: Mutex<Pipe>,
}

impl ExternalClassifier {
    pub fn spawn(program: &str, args: &[String]) -> std::io::Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { pipe: Mutex::new(Pipe { child, stdin, stdout }) })
    }
}

impl Classifier for ExternalClassifier {
    fn classify(&self, text: &str) -> Result<ClassDistribution, ClassifierError> {
        let ext = |e: String| ClassifierError::External(e);
        let mut pipe = self.pipe.lock().map_err(|_| ext("adapter lock poisoned".into()))?;
        let mut line = serde_json::to_string(&Request { text }).map_err(|e| ext(e.to_string()))?;
        line.push('\n');
        pipe.stdin.write_all(line.as_bytes()).map_err(|e| ext(e.to_string()))?;
        pipe.stdin.flush().map_err(|e| ext(e.to_string()))?;

        let mut reply = String::new();
        let n = pipe.stdout.read_line(&mut reply).map_err(|e| ext(e.to_string()))?;
        if n == 0 {
            return Err(ext("child closed its output".into()));
        }
        let resp: Response = serde_json::from_str(reply.trim_end()).map_err(|e| ext(format!("bad reply: {e}")))?;
        ClassDistribution::new(resp.scores)
    }
}

impl Drop for ExternalClassifier {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}
