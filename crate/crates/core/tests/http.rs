//! Wire-level checks of the HTTP clients against a minimal local server.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use driforge::corpus::Leaning;
use driforge::embedding::{embed_batch, BatchOptions, EmbeddingCache, EmbeddingProvider, HttpEmbedder};
use driforge::generation::{generate, ChatClient, ChatMessage, GenerationOptions, HttpChatClient, PromptSpec, Role};
use driforge::Error;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    headers: HashMap<String, String>,
    body: Value,
}

type Handler = Box<dyn Fn(usize, &Seen) -> (u16, String) + Send>;

/// Serves one request per connection until the test ends. The handler
/// gets the zero-based request number and the parsed request.
fn serve(handler: Handler) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut headers = HashMap::new();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
                }
            }
            let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req = Seen {
                path,
                headers,
                body: serde_json::from_slice(&body).unwrap_or(Value::Null),
            };
            let n = {
                let mut l = log.lock().unwrap();
                l.push(req.clone());
                l.len() - 1
            };
            let (status, text) = handler(n, &req);
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn embeddings_reply(req: &Seen, reverse: bool) -> String {
    let inputs = req.body["input"].as_array().unwrap();
    let mut data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"index": i, "embedding": [t.as_str().unwrap().len() as f32, 1.0, i as f32]}))
        .collect();
    if reverse {
        data.reverse();
    }
    json!({"object": "list", "data": data}).to_string()
}

fn opts() -> BatchOptions {
    BatchOptions {
        batch_size: 2,
        max_attempts: 3,
        backoff: Duration::from_millis(5),
        parallelism: 1,
    }
}

#[test]
fn embeddings_request_shape_and_index_order() {
    let (url, seen) = serve(Box::new(|_, req| (200, embeddings_reply(req, true))));
    let p = HttpEmbedder::new(&url, Some("sk-test".into()), "mini", 3);
    let out = p.embed(&["a".into(), "bbb".into()]).unwrap();
    assert_eq!(out, vec![vec![1.0, 1.0, 0.0], vec![3.0, 1.0, 1.0]]);
    let req = &seen.lock().unwrap()[0];
    assert_eq!(req.path, "/v1/embeddings");
    assert_eq!(req.headers["authorization"], "Bearer sk-test");
    assert_eq!(req.body["model"], "mini");
    assert_eq!(req.body["input"], json!(["a", "bbb"]));
}

#[test]
fn server_errors_are_retried_then_cached() {
    let (url, seen) = serve(Box::new(|n, req| {
        if n == 0 {
            (500, r#"{"error":"busy"}"#.into())
        } else {
            (200, embeddings_reply(req, false))
        }
    }));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("emb.cache");
    let p = HttpEmbedder::new(&url, None, "mini", 3);
    let texts: Vec<String> = ["x", "yy", "zzz"].iter().map(|s| s.to_string()).collect();
    {
        let cache = EmbeddingCache::open(&file, p.provider_id(), p.model_id(), 3).unwrap();
        let v = embed_batch(&texts, &p, &cache, &opts()).unwrap();
        assert_eq!(v[2].values(), &[3.0, 1.0, 0.0]);
    }
    // two batches of at most two texts, the first needing one retry
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert!(!seen.lock().unwrap()[0].headers.contains_key("authorization"));

    let cache = EmbeddingCache::open(&file, p.provider_id(), p.model_id(), 3).unwrap();
    let again = embed_batch(&texts, &p, &cache, &opts()).unwrap();
    assert_eq!(again.len(), 3);
    assert_eq!(seen.lock().unwrap().len(), 3, "cached texts must not hit the server");
}

#[test]
fn persistent_failure_names_the_batch() {
    let (url, seen) = serve(Box::new(|_, _| (503, "down".into())));
    let p = HttpEmbedder::new(&url, None, "mini", 3);
    let cache = EmbeddingCache::in_memory(p.provider_id(), p.model_id(), 3);
    let err = embed_batch(&["only".to_string()], &p, &cache, &opts()).unwrap_err();
    match err {
        Error::Provider { batch, attempts, message } => {
            assert_eq!((batch, attempts), (0, 3));
            assert!(message.contains("503"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn wrong_dimension_is_rejected() {
    let (url, _seen) = serve(Box::new(|_, req| (200, embeddings_reply(req, false))));
    let p = HttpEmbedder::new(&url, None, "mini", 5);
    let cache = EmbeddingCache::in_memory(p.provider_id(), p.model_id(), 5);
    let err = embed_batch(&["t".to_string()], &p, &cache, &opts()).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. } | Error::Provider { .. }), "{err:?}");
}

fn chat_reply(content: &str) -> String {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn chat_request_shape() {
    let (url, seen) = serve(Box::new(|_, _| (200, chat_reply("hello"))));
    let c = HttpChatClient::new(&url, Some("k".into()), "gpt-test");
    let out = c
        .complete(&[ChatMessage::system("sys"), ChatMessage::user("hi")], 0.2)
        .unwrap();
    assert_eq!(out, "hello");
    let req = &seen.lock().unwrap()[0];
    assert_eq!(req.path, "/v1/chat/completions");
    assert_eq!(req.headers["authorization"], "Bearer k");
    assert_eq!(req.body["model"], "gpt-test");
    assert_eq!(req.body["temperature"], 0.2);
    assert_eq!(req.body["messages"][0], json!({"role": "system", "content": "sys"}));
    assert_eq!(req.body["messages"][1], json!({"role": "user", "content": "hi"}));
}

fn spec() -> PromptSpec {
    PromptSpec {
        role: Role::Consideration,
        category: "Hospital planning and financing".into(),
        leaning: Leaning::Centrist,
        system_template: String::new(),
        system_prompt: "Write statements.".into(),
        exemplars: Vec::new(),
        statement_count: 3,
        attachment: vec!["Paragraph one.".into()],
        prompt_hash: "h".into(),
    }
}

#[test]
fn generation_over_http_retries_transport_and_format() {
    let (url, seen) = serve(Box::new(|n, _| match n {
        0 => (429, r#"{"error":"slow down"}"#.into()),
        1 => (200, chat_reply("Here are some ideas: hospitals, costs.")),
        _ => (200, chat_reply(r#"["One.", "Two.", "Three."]"#)),
    }));
    let client = HttpChatClient::new(&url, None, "gpt-test");
    let options = GenerationOptions {
        backoff: Duration::from_millis(5),
        ..GenerationOptions::default()
    };
    let out = generate(&spec(), &client, &options).unwrap();
    assert_eq!(out.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(), ["One.", "Two.", "Three."]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    // the correction turn carries the rejected reply back to the model
    let last = seen[2].body["messages"].as_array().unwrap();
    assert_eq!(last[last.len() - 2]["role"], "assistant");
    assert_eq!(last[last.len() - 1]["role"], "user");
}
