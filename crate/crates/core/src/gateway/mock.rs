//! Offline backends: a deterministic generator, a canned-reply queue, and a
//! fault-injecting wrapper.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU8, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatRequest, GatewayError};

/// Produces a schema-conforming JSON reply whose content is a pure function
/// of the system and user messages.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl ChatBackend for MockBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
        let mut h = Sha256::new();
        h.update(request.system.as_bytes());
        h.update([0]);
        h.update(request.user.as_bytes());
        let digest = h.finalize();
        let tag = hex::encode(&digest[..4]);
        let (r, g, b) = (digest[4], digest[5], digest[6]);
        let size = 20 + digest[7] % 80;
        let speed = 1 + digest[8] % 9;

        let mut reply = Map::new();
        for key in request.expected_keys {
            let value = match key.as_str() {
                "code" => format!(
                    "// mock sketch {tag}\nfunction setup() {{\n  createCanvas(400, 400);\n}}\n\n\
                     function draw() {{\n  background({r}, {g}, {b});\n  \
                     const t = frameCount * 0.0{speed};\n  \
                     circle(200 + cos(t) * 100, 200 + sin(t) * 100, {size});\n}}"
                ),
                "reflection" => format!("- Why does this version feel the way it does? ({tag})"),
                other => format!("- mock {other} ({tag})"),
            };
            reply.insert(key.clone(), Value::String(value));
        }
        Ok(Value::Object(reply).to_string())
    }
}

/// Returns queued replies in order; errors once the queue is exhausted.
/// Records every user message it receives.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<Result<String, String>>>,
    seen: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    /// `Err(msg)` entries surface as provider errors.
    pub fn new(replies: impl IntoIterator<Item = Result<String, String>>) -> Self {
        Self {
            queue: Mutex::new(replies.into_iter().collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn push(&self, reply: Result<String, String>) {
        self.queue.lock().unwrap().push_back(reply);
    }

    pub fn calls(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<String> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
        self.seen.lock().unwrap().push(request.user.to_string());
        match self.queue.lock().unwrap().pop_front() {
            Some(Ok(text)) => Ok(text),
            Some(Err(msg)) => Err(GatewayError::Provider(msg)),
            None => Err(GatewayError::Provider("scripted backend exhausted".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailMode {
    /// Delegate to the inner backend.
    Pass,
    /// Fail with a provider error.
    Provider,
    /// Answer with prose that cannot be parsed.
    Garbage,
    /// Answer with a valid object lacking required keys.
    WrongSchema,
}

/// Wraps a backend and injects failures on demand.
pub struct FlakyBackend {
    inner: Arc<dyn ChatBackend>,
    mode: AtomicU8,
    calls: AtomicUsize,
}

impl FlakyBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            inner,
            mode: AtomicU8::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn set_mode(&self, mode: FailMode) {
        self.mode.store(mode as u8, Ordering::SeqCst);
    }

    pub fn mode(&self) -> FailMode {
        match self.mode.load(Ordering::SeqCst) {
            0 => FailMode::Pass,
            1 => FailMode::Provider,
            2 => FailMode::Garbage,
            _ => FailMode::WrongSchema,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for FlakyBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.mode() {
            FailMode::Pass => self.inner.chat(request),
            FailMode::Provider => Err(GatewayError::Provider("injected failure".into())),
            FailMode::Garbage => Ok("Sorry, I cannot help with that sketch.".into()),
            FailMode::WrongSchema => Ok(r#"{"code": "", "unexpected": true}"#.into()),
        }
    }
}
