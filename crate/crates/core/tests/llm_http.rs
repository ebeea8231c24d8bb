use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use essay_scorer::llm::{
    ApiKey, DiskCache, LlmClient, LlmError, LlmRequest, OpenAiBackend, RetryPolicy,
};

const SECRET: &str = "sk-test-DO-NOT-LEAK-4242";

struct Captured {
    auth: Option<String>,
    path: String,
    body: serde_json::Value,
}

/// Serves the canned `(status, body)` replies in order, one per connection.
fn fake_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut auth = None;
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "authorization" => auth = Some(value.trim().to_string()),
                    "content-length" => length = value.trim().parse().unwrap(),
                    _ => {}
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            log.lock().unwrap().push(Captured {
                auth,
                path: request_line
                    .split_whitespace()
                    .nth(1)
                    .unwrap_or("")
                    .to_string(),
                body: serde_json::from_slice(&payload).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn completion(text: &str) -> String {
    serde_json::json!({
        "model": "served-model",
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 7}
    })
    .to_string()
}

fn client(endpoint: &str, cache: &std::path::Path) -> LlmClient {
    let backend =
        OpenAiBackend::new(endpoint, Some(ApiKey::new(SECRET)), Duration::from_secs(5)).unwrap();
    LlmClient::new(Arc::new(backend))
        .with_cache(DiskCache::new(cache))
        .with_retry(RetryPolicy::no_delay(3))
}

fn files_under(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn chat_completion_wire_format_and_retry() {
    let (endpoint, seen) = fake_server(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (200, completion("### Score:\n- Overall: 4")),
    ]);
    let cache = tempfile::tempdir().unwrap();
    let client = client(&endpoint, cache.path());
    let request = LlmRequest::new("gpt-x", "Grade this.");
    let response = client.complete(&request).unwrap();
    assert_eq!(response.text, "### Score:\n- Overall: 4");
    assert_eq!(response.model, "served-model");
    assert_eq!(response.retries, 1);
    assert_eq!(response.usage.unwrap().completion_tokens, 7);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let call = &seen[1];
    assert_eq!(call.path, "/v1/chat/completions");
    assert_eq!(
        call.auth.as_deref(),
        Some(format!("Bearer {SECRET}").as_str())
    );
    assert_eq!(call.body["model"], "gpt-x");
    assert_eq!(call.body["temperature"], 0.0);
    assert_eq!(call.body["max_tokens"], 4096);
    assert_eq!(call.body["messages"][0]["role"], "user");
    assert_eq!(call.body["messages"][0]["content"], "Grade this.");

    // Served from cache: the server has no replies left.
    assert!(client.complete(&request).unwrap().cached);
}

#[test]
fn auth_failure_is_not_retried() {
    let (endpoint, seen) = fake_server(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let cache = tempfile::tempdir().unwrap();
    let err = client(&endpoint, cache.path())
        .complete(&LlmRequest::new("m", "p"))
        .unwrap_err();
    assert!(matches!(err, LlmError::Auth(_)), "{err}");
    assert!(!err.to_string().contains(SECRET));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_payload() {
    let (endpoint, _) = fake_server(vec![(200, r#"{"choices": []}"#.into())]);
    let cache = tempfile::tempdir().unwrap();
    let err = client(&endpoint, cache.path())
        .complete(&LlmRequest::new("m", "p"))
        .unwrap_err();
    assert!(matches!(err, LlmError::Malformed(_)), "{err}");
}

#[test]
fn credential_never_reaches_cache_or_errors() {
    let (endpoint, _) = fake_server(vec![
        (200, completion("fine")),
        (500, "internal".into()),
        (500, "internal".into()),
        (500, "internal".into()),
        (500, "internal".into()),
    ]);
    let cache = tempfile::tempdir().unwrap();
    let client = client(&endpoint, cache.path());
    client.complete(&LlmRequest::new("m", "first")).unwrap();
    let err = client
        .complete(&LlmRequest::new("m", "second"))
        .unwrap_err();
    assert!(
        matches!(err, LlmError::Exhausted { attempts: 4, .. }),
        "{err}"
    );
    assert!(!format!("{err} {err:?}").contains(SECRET));
    let files = files_under(cache.path());
    assert_eq!(files.len(), 1);
    for file in files {
        assert!(!std::fs::read_to_string(file).unwrap().contains(SECRET));
    }
}

#[test]
fn unreachable_endpoint_is_transient() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let cache = tempfile::tempdir().unwrap();
    let err = client(&endpoint, cache.path())
        .complete(&LlmRequest::new("m", "p"))
        .unwrap_err();
    assert!(
        matches!(err, LlmError::Exhausted { .. } | LlmError::Timeout { .. }),
        "{err}"
    );
}
