//! Minimal OpenAI-compatible chat-completions server for tests and demos.
//!
//! Each connection carries one request and is closed after the reply. Every
//! request is recorded so callers can inspect what a client actually sent.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};

/// A request as received by the stub.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedRequest {
    pub method: String,
    pub path: String,
    /// Header names lower-cased.
    pub headers: Vec<(String, String)>,
    /// Parsed JSON body, or `Value::Null` if the body was not JSON.
    pub body: Value,
}

impl CapturedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers.iter().find(|(k, _)| *k == name).map(|(_, v)| v.as_str())
    }

    fn content(&self) -> impl Iterator<Item = &Value> {
        self.body["messages"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|m| m["content"].as_array())
            .flatten()
    }

    /// Image URLs in message order.
    pub fn image_urls(&self) -> Vec<&str> {
        self.content()
            .filter(|p| p["type"] == "image_url")
            .filter_map(|p| p["image_url"]["url"].as_str())
            .collect()
    }

    /// Concatenated text parts.
    pub fn prompt(&self) -> String {
        self.content()
            .filter(|p| p["type"] == "text")
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StubReply {
    /// 200 with one choice per requested `n`, all carrying this text.
    Text(String),
    /// Arbitrary status and raw body.
    Status(u16, String),
}

type Handler = dyn Fn(&CapturedRequest, usize) -> StubReply + Send + Sync;

pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<CapturedRequest>>>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Serves on an ephemeral localhost port. `handler` receives each request
    /// and its zero-based arrival index.
    pub fn start<F>(handler: F) -> io::Result<Self>
    where
        F: Fn(&CapturedRequest, usize) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let requests = Arc::clone(&requests);
            let stop = Arc::clone(&stop);
            thread::spawn(move || serve(listener, handler, requests, stop))
        };
        Ok(Self {
            addr,
            requests,
            stop,
            thread: Some(thread),
        })
    }

    /// Always answers with `text`.
    pub fn fixed(text: impl Into<String>) -> io::Result<Self> {
        let text = text.into();
        Self::start(move |_, _| StubReply::Text(text.clone()))
    }

    /// Replays `answers` in arrival order, repeating the last one when exhausted.
    pub fn scripted(answers: Vec<String>) -> io::Result<Self> {
        Self::start(move |_, i| match answers.get(i).or(answers.last()) {
            Some(a) => StubReply::Text(a.clone()),
            None => StubReply::Status(500, "no scripted answers".into()),
        })
    }

    /// Base URL in the form `http://127.0.0.1:<port>/v1`.
    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Snapshot of every request received so far.
    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.requests.lock().expect("stub lock").clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(
    listener: TcpListener,
    handler: Arc<Handler>,
    requests: Arc<Mutex<Vec<CapturedRequest>>>,
    stop: Arc<AtomicBool>,
) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        if let Err(e) = handle(stream, &*handler, &requests) {
            log::debug!("stub connection error: {e}");
        }
    }
}

fn read_request(stream: &TcpStream) -> io::Result<CapturedRequest> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();

    let mut headers = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
    }
    let find = |name: &str| headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());

    let mut body = Vec::new();
    if let Some(len) = find("content-length").and_then(|v| v.parse::<usize>().ok()) {
        body.resize(len, 0);
        reader.read_exact(&mut body)?;
    } else if find("transfer-encoding").is_some_and(|v| v.eq_ignore_ascii_case("chunked")) {
        loop {
            line.clear();
            reader.read_line(&mut line)?;
            let size = usize::from_str_radix(line.trim().split(';').next().unwrap_or("0"), 16)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            if size == 0 {
                break;
            }
            let start = body.len();
            body.resize(start + size, 0);
            reader.read_exact(&mut body[start..])?;
            line.clear();
            reader.read_line(&mut line)?;
        }
    }
    Ok(CapturedRequest {
        method,
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    })
}

fn handle(
    mut stream: TcpStream,
    handler: &Handler,
    requests: &Mutex<Vec<CapturedRequest>>,
) -> io::Result<()> {
    let request = read_request(&stream)?;
    let index = {
        let mut all = requests.lock().expect("stub lock");
        all.push(request.clone());
        all.len() - 1
    };
    let (status, body) = match handler(&request, index) {
        StubReply::Text(text) => {
            let n = request.body["n"].as_u64().unwrap_or(1).max(1);
            let choices: Vec<Value> = (0..n)
                .map(|i| {
                    json!({
                        "index": i,
                        "message": {"role": "assistant", "content": text},
                        "finish_reason": "stop"
                    })
                })
                .collect();
            let body = json!({
                "id": format!("stub-{index}"),
                "object": "chat.completion",
                "model": request.body["model"],
                "choices": choices,
            });
            (200, body.to_string())
        }
        StubReply::Status(status, body) => (status, body),
    };
    let response = format!(
        "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        reason(status),
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}
