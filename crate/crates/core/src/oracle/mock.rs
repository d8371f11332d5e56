//! Scriptable mock oracles.
//!
//! Three layers, all deterministic:
//! * [`ScriptOracle`] — in-process, answers from a fixed script; used to
//!   drive the reasoner state machine through exact attempt sequences.
//! * [`SimOracle`] — in-process simulated diagnostician with a configurable
//!   accuracy; correctness of each reply is a pure function of the request
//!   seed, so whole-pipeline runs are byte-reproducible.
//! * [`MockServer`] — a minimal HTTP server speaking the chat-completions
//!   wire format, backed by fixture rules (`{match_substring,
//!   scripted_response, fail_times}` JSONL) or by any responder closure, so
//!   the real transport stack is exercised in tests and mock runs.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::Label;
use crate::oracle::{ChatExchange, ChatRequest, Oracle};
use crate::seed;
use crate::Result;

fn word_count(s: &str) -> u32 {
    s.split_whitespace().count() as u32
}

fn exchange_for(request: &ChatRequest, response: String) -> ChatExchange {
    let prompt_tokens: u32 = request.messages.iter().map(|m| word_count(&m.content)).sum();
    let completion_tokens = word_count(&response);
    ChatExchange {
        request: request.clone(),
        response,
        latency_ms: 0,
        prompt_tokens,
        completion_tokens,
        attempts: 1,
    }
}

// ---------------------------------------------------------------------------
// Script-driven oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum ScriptStep {
    Respond(String),
    TransportFail,
}

/// Replays a fixed script of responses; popping past the end is an error so
/// tests notice unexpected extra calls.
pub struct ScriptOracle {
    id: String,
    steps: Mutex<std::collections::VecDeque<ScriptStep>>,
}

impl ScriptOracle {
    pub fn new(id: impl Into<String>, steps: Vec<ScriptStep>) -> ScriptOracle {
        ScriptOracle {
            id: id.into(),
            steps: Mutex::new(steps.into()),
        }
    }

    pub fn answering(id: impl Into<String>, answers: &[&str]) -> ScriptOracle {
        ScriptOracle::new(
            id,
            answers
                .iter()
                .map(|a| ScriptStep::Respond(format!("<answer>{a}</answer>")))
                .collect(),
        )
    }

    pub fn remaining(&self) -> usize {
        self.steps.lock().expect("script lock").len()
    }
}

impl Oracle for ScriptOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange> {
        let step = self
            .steps
            .lock()
            .expect("script lock")
            .pop_front()
            .ok_or_else(|| Error::invalid("script oracle exhausted"))?;
        match step {
            ScriptStep::Respond(text) => Ok(exchange_for(request, text)),
            ScriptStep::TransportFail => Err(Error::Transport {
                attempts: 1,
                reason: "scripted transport failure".into(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Simulated diagnostician
// ---------------------------------------------------------------------------

/// Deterministic simulated oracle: answers each known question correctly
/// with probability `accuracy`, keyed by `(sim seed, request seed)`. Unknown
/// questions produce an unparseable reply.
pub struct SimOracle {
    id: String,
    answers: BTreeMap<String, Label>,
    accuracy: f64,
    seed: u64,
}

impl SimOracle {
    pub fn new(
        id: impl Into<String>,
        answers: BTreeMap<String, Label>,
        accuracy: f64,
        seed: u64,
    ) -> SimOracle {
        SimOracle {
            id: id.into(),
            answers,
            accuracy,
            seed,
        }
    }

    /// Build the reply text. The think block scales with the requested tier:
    /// stage-by-stage lines when the system prompt lists stages, a short
    /// block when it merely asks for `<think>`, and a bare answer otherwise.
    /// Prompt-refinement requests echo the original prompt with a sharpening
    /// line appended. Effective accuracy shifts with the tier (down for
    /// direct prompting, up for staged reasoning), vanishing at 0 and 1.
    pub fn response_for(&self, system: &str, question: &str, request_seed: Option<u64>) -> String {
        if system.contains("Reply with the improved prompt only") {
            let original = question
                .split_once("Original prompt:\n")
                .and_then(|(_, rest)| rest.split_once("\n\nQuestion:"))
                .map(|(prompt, _)| prompt)
                .unwrap_or(system);
            return format!(
                "{original}\nBe precise: confirm each finding against the profile before concluding."
            );
        }
        let Some(truth) = self.answers.get(question) else {
            return "I cannot assess this case.".to_string();
        };
        let stages: Vec<&str> = system
            .lines()
            .find_map(|l| l.strip_prefix("Stages: "))
            .map(|s| s.trim_end_matches('.').split(", ").collect())
            .unwrap_or_default();
        // deep scaffolds help, bare classification hurts
        let tier_shift = if stages.len() >= 4 {
            0.10
        } else if !stages.is_empty() || system.contains("<think>") {
            0.0
        } else {
            -0.15
        };
        let effective = self.accuracy + tier_shift * 4.0 * self.accuracy * (1.0 - self.accuracy);
        let key = request_seed.unwrap_or_else(|| seed::subseed(0, question, &[]));
        let correct = seed::unit_draw(self.seed, "sim-correct", &[key]) < effective;
        let verdict = if correct { *truth } else { truth.flipped() };
        if !stages.is_empty() {
            let mut out = String::from("<think>\n");
            for (i, stage) in stages.iter().enumerate() {
                out.push_str(&format!(
                    "Step {} ({stage}): reviewing the {stage} findings in the profile and weighing them against the diagnostic picture.\n",
                    i + 1
                ));
            }
            out.push_str(&format!(
                "Taken together the profile points to {verdict}.\n</think>\n<answer>{verdict}</answer>"
            ));
            out
        } else if system.contains("<think>") {
            format!(
                "<think>\nKey signals reviewed; the balance of findings favours {verdict}.\n</think>\n<answer>{verdict}</answer>"
            )
        } else {
            format!("<answer>{verdict}</answer>")
        }
    }
}

impl Oracle for SimOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange> {
        let response = self.response_for(
            request.system_content(),
            request.last_user_content(),
            request.seed,
        );
        Ok(exchange_for(request, response))
    }
}

// ---------------------------------------------------------------------------
// HTTP mock server
// ---------------------------------------------------------------------------

/// Fixture rule: requests whose last user message contains
/// `match_substring` get `scripted_response`, after failing `fail_times`
/// requests with HTTP 500.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    pub match_substring: String,
    pub scripted_response: String,
    #[serde(default)]
    pub fail_times: u32,
}

/// Load fixture rules from JSONL.
pub fn load_rules_jsonl(path: &Path) -> Result<Vec<MockRule>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rules = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        rules.push(serde_json::from_str(&line).map_err(|e| {
            Error::parse(path.display().to_string(), format!("rule {}: {e}", i + 1))
        })?);
    }
    Ok(rules)
}

pub enum MockReply {
    Content(String),
    Status(u16),
}

type Responder = dyn Fn(&ChatRequest) -> MockReply + Send + Sync;

/// Minimal chat-completions HTTP server bound to a loopback port.
pub struct MockServer {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
    pub request_count: Arc<Mutex<u32>>,
}

impl MockServer {
    pub fn with_responder<F>(responder: F) -> Result<MockServer>
    where
        F: Fn(&ChatRequest) -> MockReply + Send + Sync + 'static,
    {
        MockServer::spawn(Box::new(responder))
    }

    /// Fixture-rule server; the first matching rule answers, unmatched
    /// requests get a fixed non-answer.
    pub fn with_rules(rules: Vec<MockRule>) -> Result<MockServer> {
        let remaining: Vec<Mutex<u32>> = rules.iter().map(|r| Mutex::new(r.fail_times)).collect();
        MockServer::spawn(Box::new(move |req: &ChatRequest| {
            let needle = req.last_user_content();
            for (rule, left) in rules.iter().zip(&remaining) {
                if needle.contains(&rule.match_substring) {
                    let mut left = left.lock().expect("fail counter");
                    if *left > 0 {
                        *left -= 1;
                        return MockReply::Status(500);
                    }
                    return MockReply::Content(rule.scripted_response.clone());
                }
            }
            MockReply::Content("no scripted response".to_string())
        }))
    }

    /// Serve a [`SimOracle`] over the wire.
    pub fn with_sim(sim: SimOracle) -> Result<MockServer> {
        MockServer::with_responder(move |req| {
            MockReply::Content(sim.response_for(
                req.system_content(),
                req.last_user_content(),
                req.seed,
            ))
        })
    }

    fn spawn(responder: Box<Responder>) -> Result<MockServer> {
        let listener = TcpListener::bind("127.0.0.1:0")
            .map_err(|e| Error::io("127.0.0.1:0".to_string(), e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::io("mock server".to_string(), e))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::io("mock server".to_string(), e))?;
        let stop = Arc::new(AtomicBool::new(false));
        let request_count = Arc::new(Mutex::new(0));
        let stop_flag = stop.clone();
        let counter = request_count.clone();
        let handle = std::thread::spawn(move || {
            while !stop_flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        *counter.lock().expect("request counter") += 1;
                        let _ = handle_connection(stream, &responder);
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(MockServer {
            addr,
            stop,
            handle: Some(handle),
            request_count,
        })
    }

    /// Base URL to configure endpoints with.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests_served(&self) -> u32 {
        *self.request_count.lock().expect("request counter")
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, responder: &Responder) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    stream.set_nodelay(true)?;

    // request line + headers
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") {
        let n = stream.read(&mut byte)?;
        if n == 0 {
            return Ok(());
        }
        head.push(byte[0]);
        if head.len() > 64 * 1024 {
            return respond(&mut stream, 431, b"");
        }
    }
    let head_text = String::from_utf8_lossy(&head);
    let content_length = head_text
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);

    let mut body = vec![0u8; content_length];
    stream.read_exact(&mut body)?;

    let request: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(_) => return respond(&mut stream, 400, b""),
    };

    match responder(&request) {
        MockReply::Status(code) => respond(&mut stream, code, b""),
        MockReply::Content(content) => {
            let prompt_tokens: u32 = request
                .messages
                .iter()
                .map(|m| word_count(&m.content))
                .sum();
            let body = serde_json::json!({
                "id": "mock-completion",
                "object": "chat.completion",
                "model": request.model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop"
                }],
                "usage": {
                    "prompt_tokens": prompt_tokens,
                    "completion_tokens": word_count(&content),
                    "total_tokens": prompt_tokens + word_count(&content),
                }
            });
            respond(&mut stream, 200, body.to_string().as_bytes())
        }
    }
}

fn respond(stream: &mut TcpStream, status: u16, body: &[u8]) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        431 => "Request Header Fields Too Large",
        500 => "Internal Server Error",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}
