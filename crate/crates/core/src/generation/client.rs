use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_bytes;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

/// Network or server failure; retried with backoff by the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub trait ChatClient: Send + Sync {
    fn model(&self) -> &str;
    /// Returns the assistant message content of the first choice.
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, TransportError>;
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpChatClient {
    url: String,
    api_key: Option<String>,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    /// `base_url` may be the full endpoint or a base to which
    /// `/chat/completions` is appended.
    pub fn new(base_url: &str, api_key: Option<String>, model: &str) -> Self {
        let trimmed = base_url.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/chat/completions")
        };
        HttpChatClient {
            url,
            api_key,
            model: model.to_string(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("http client"),
        }
    }
}

impl ChatClient for HttpChatClient {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, TransportError> {
        let mut req = self.client.post(&self.url).json(&ChatRequest {
            model: &self.model,
            messages,
            temperature,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(TransportError(format!("HTTP {status}: {body}")));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| TransportError(format!("bad chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError("chat response has no message content".into()))
    }
}

/// Replays a fixed list of replies in order and records every request.
/// Once the script runs out, further calls fail.
pub struct ScriptedChatClient {
    replies: Mutex<VecDeque<Result<String, TransportError>>>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedChatClient {
    pub fn new(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        ScriptedChatClient {
            replies: Mutex::new(replies.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatClient for ScriptedChatClient {
    fn model(&self) -> &str {
        "scripted"
    }

    fn complete(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, TransportError> {
        self.requests.lock().unwrap().push(messages.to_vec());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError("script exhausted".into())))
    }
}

/// Deterministic offline generator. It reads the requested count from the
/// phrase "exactly N" in the last user message and builds that many
/// statements from words of the conversation, chosen by hashing the
/// conversation. Identical prompts always give identical replies.
#[derive(Debug, Default)]
pub struct MockGenerator {
    calls: std::sync::atomic::AtomicUsize,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

fn requested_count(text: &str) -> usize {
    let words: Vec<&str> = text.split_whitespace().collect();
    words
        .windows(2)
        .rev()
        .find_map(|w| (w[0] == "exactly").then(|| w[1].parse::<usize>().ok()).flatten())
        .unwrap_or(5)
}

impl ChatClient for MockGenerator {
    fn model(&self) -> &str {
        "mock-generator"
    }

    fn complete(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, TransportError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let user = messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let n = requested_count(user);
        let policy = user.contains("policy options");
        let mut vocab: Vec<String> = user
            .split(|c: char| !c.is_alphabetic())
            .filter(|w| w.chars().count() >= 6)
            .map(str::to_lowercase)
            .collect();
        vocab.sort();
        vocab.dedup();
        if vocab.is_empty() {
            vocab.push("topic".into());
        }
        let conversation: String = messages.iter().map(|m| m.content.as_str()).collect();
        let seed = sha256_bytes(conversation.as_bytes());
        let pick = |i: usize, j: usize| {
            let h = sha256_bytes(&[&seed[..], &(i as u64).to_le_bytes(), &(j as u64).to_le_bytes()].concat());
            let idx = u64::from_le_bytes(h[..8].try_into().unwrap()) as usize % vocab.len();
            vocab[idx].clone()
        };
        let statements: Vec<String> = (0..n)
            .map(|i| {
                let (a, b, c, d) = (pick(i, 0), pick(i, 1), pick(i, 2), pick(i, 3));
                if policy {
                    format!("Adopt a binding plan on {a} that reduces {b} while protecting {c} and {d}.")
                } else {
                    let mut first = a.chars();
                    let cap: String = first.next().map(|c| c.to_uppercase().chain(first).collect()).unwrap_or_default();
                    format!("{cap} matters more than {b} when weighing {c} against {d}.")
                }
            })
            .collect();
        Ok(serde_json::to_string(&statements).expect("strings serialize"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_in_order() {
        let c = ScriptedChatClient::from_texts(["one", "two"]);
        assert_eq!(c.complete(&[], 0.0).unwrap(), "one");
        assert_eq!(c.complete(&[ChatMessage::user("x")], 0.0).unwrap(), "two");
        assert!(c.complete(&[], 0.0).is_err());
        assert_eq!(c.calls(), 3);
        assert_eq!(c.requests()[1][0].content, "x");
    }

    #[test]
    fn mock_generator_honours_count_and_is_deterministic() {
        let g = MockGenerator::new();
        let msgs = vec![
            ChatMessage::system("sys"),
            ChatMessage::user("[1] Spitalplanung Krankenkassen Prämienverbilligung\n\nproduce exactly 3 consideration statements"),
        ];
        let a = g.complete(&msgs, 0.2).unwrap();
        let b = g.complete(&msgs, 0.2).unwrap();
        assert_eq!(a, b);
        let parsed: Vec<String> = serde_json::from_str(&a).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(requested_count("give me exactly 12 items"), 12);
    }
}
