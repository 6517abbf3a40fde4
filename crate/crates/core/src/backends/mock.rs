//! Loopback streaming server speaking the chat-completions SSE protocol.
//!
//! Used to verify the live client without network access. Each connection is
//! answered by a caller-supplied closure that turns the JSON request body into
//! a [`MockReply`].

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum MockChunk {
    /// Waits `delay_ms`, then sends one delta event.
    Delta { text: String, delay_ms: u64 },
    /// Sends nothing for `ms`.
    Stall(u64),
    /// Sends a verbatim SSE line (for protocol-error tests).
    Raw(String),
    Done,
    /// Drops the connection without finishing the response.
    Abort,
}

impl MockChunk {
    pub fn delta(text: impl Into<String>, delay_ms: u64) -> Self {
        MockChunk::Delta { text: text.into(), delay_ms }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockReply {
    pub status: u16,
    pub chunks: Vec<MockChunk>,
}

impl MockReply {
    /// A well-formed stream of `deltas` followed by `[DONE]`.
    pub fn deltas<S: AsRef<str>>(deltas: &[S], delay_ms: u64) -> Self {
        let mut chunks: Vec<MockChunk> = deltas.iter().map(|d| MockChunk::delta(d.as_ref(), delay_ms)).collect();
        chunks.push(MockChunk::Done);
        Self { status: 200, chunks }
    }

    pub fn status(status: u16) -> Self {
        Self { status, chunks: Vec::new() }
    }
}

type Handler = dyn Fn(&Value) -> MockReply + Send + Sync;

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<Value>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&Value) -> MockReply + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let stop = Arc::clone(&stop);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let handler = Arc::clone(&handler);
                    let requests = Arc::clone(&requests);
                    std::thread::spawn(move || {
                        let _ = serve(conn, &*handler, &requests);
                    });
                }
            });
        }
        Ok(Self { addr, stop, requests })
    }

    /// Base URL to put in a `BackendEndpoint`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Request bodies received so far.
    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().map(|r| r.clone()).unwrap_or_default()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
    }
}

fn read_request(reader: &mut BufReader<TcpStream>) -> std::io::Result<Value> {
    let mut content_length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((name, value)) = l.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    Ok(serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn write_chunk(out: &mut TcpStream, data: &str) -> std::io::Result<()> {
    write!(out, "{:x}\r\n{}\r\n", data.len(), data)?;
    out.flush()
}

fn serve(conn: TcpStream, handler: &Handler, requests: &Mutex<Vec<Value>>) -> std::io::Result<()> {
    let mut out = conn.try_clone()?;
    let mut reader = BufReader::new(conn);
    let body = read_request(&mut reader)?;
    let reply = handler(&body);
    if let Ok(mut r) = requests.lock() {
        r.push(body);
    }
    if reply.status != 200 {
        write!(out, "HTTP/1.1 {} Mock\r\nContent-Length: 0\r\nConnection: close\r\n\r\n", reply.status)?;
        return out.flush();
    }
    write!(
        out,
        "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nTransfer-Encoding: chunked\r\nConnection: close\r\n\r\n"
    )?;
    out.flush()?;
    for chunk in reply.chunks {
        match chunk {
            MockChunk::Delta { text, delay_ms } => {
                std::thread::sleep(Duration::from_millis(delay_ms));
                let ev = json!({"choices": [{"index": 0, "delta": {"content": text}}]});
                write_chunk(&mut out, &format!("data: {ev}\n\n"))?;
            }
            MockChunk::Stall(ms) => std::thread::sleep(Duration::from_millis(ms)),
            MockChunk::Raw(line) => write_chunk(&mut out, &format!("{line}\n\n"))?,
            MockChunk::Done => write_chunk(&mut out, "data: [DONE]\n\n")?,
            MockChunk::Abort => {
                return out.shutdown(std::net::Shutdown::Both);
            }
        }
    }
    out.write_all(b"0\r\n\r\n")?;
    out.flush()
}
