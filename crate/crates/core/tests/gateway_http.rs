//! Gateway behavior against a local scripted HTTP server: transient
//! statuses are retried with backoff, auth failures are not, and the
//! fine-tuning endpoints round-trip.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use sublearn_core::provider::http::HttpProvider;
use sublearn_core::provider::{
    ChatRequest, FineTuneSpec, FineTuneStatus, Gateway, ProviderConfig, ProviderError,
    RetryPolicy,
};

struct StubServer {
    base_url: String,
    hits: Arc<AtomicUsize>,
}

fn respond(stream: &mut TcpStream, status: u16, reason: &str, body: &str) {
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

fn read_request(stream: &mut TcpStream) -> String {
    let mut buffer = Vec::new();
    let mut chunk = [0u8; 4096];
    loop {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => {
                buffer.extend_from_slice(&chunk[..n]);
                if let Some(header_end) = find_header_end(&buffer) {
                    let headers = String::from_utf8_lossy(&buffer[..header_end]).to_string();
                    let content_length = headers
                        .lines()
                        .find_map(|line| {
                            let (name, value) = line.split_once(':')?;
                            name.eq_ignore_ascii_case("content-length")
                                .then(|| value.trim().parse::<usize>().ok())?
                        })
                        .unwrap_or(0);
                    let body_have = buffer.len() - header_end - 4;
                    if body_have >= content_length {
                        break;
                    }
                }
            }
            Err(_) => break,
        }
    }
    String::from_utf8_lossy(&buffer).to_string()
}

fn find_header_end(buffer: &[u8]) -> Option<usize> {
    buffer.windows(4).position(|w| w == b"\r\n\r\n")
}

/// Serve the scripted (status, body) responses in order, then repeat the
/// last one.
fn start_stub(responses: Vec<(u16, String)>) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_clone = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let _request = read_request(&mut stream);
            let idx = hits_clone.fetch_add(1, Ordering::SeqCst);
            let (status, body) = responses
                .get(idx)
                .or_else(|| responses.last())
                .cloned()
                .unwrap_or((500, String::new()));
            let reason = match status {
                200 => "OK",
                401 => "Unauthorized",
                429 => "Too Many Requests",
                _ => "Error",
            };
            respond(&mut stream, status, reason, &body);
        }
    });
    StubServer { base_url, hits }
}

fn chat_ok_body(content: &str) -> String {
    format!(
        r#"{{"id":"cmpl-1","model":"stub-model","choices":[{{"index":0,"message":{{"role":"assistant","content":"{content}"}},"finish_reason":"stop"}}]}}"#
    )
}

fn provider_config(base_url: &str, key_env: &str) -> ProviderConfig {
    ProviderConfig {
        base_url: base_url.to_string(),
        api_key_env: key_env.to_string(),
        max_concurrent_requests: 2,
        retry: RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1,
            backoff_multiplier: 2.0,
        },
        timeout_secs: 10,
    }
}

fn request(user: &str) -> ChatRequest {
    ChatRequest {
        system_prompt: None,
        user_message: user.into(),
        temperature: 1.0,
        n_samples: 1,
        max_tokens: None,
        model: "stub-model".into(),
    }
}

#[test]
fn rate_limited_twice_then_succeeds_on_third_attempt() {
    let server = start_stub(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (429, r#"{"error":"slow down"}"#.into()),
        (200, chat_ok_body("recovered")),
    ]);
    std::env::set_var("SUBLEARN_TEST_KEY_RETRY", "sk-test");
    let config = provider_config(&server.base_url, "SUBLEARN_TEST_KEY_RETRY");
    let provider = Arc::new(HttpProvider::new(&config).unwrap());
    let gateway = Gateway::new(provider, &config).unwrap();

    let completions = gateway.complete(&request("hello")).unwrap();
    assert_eq!(completions[0].text, "recovered");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    let stats = gateway.stats();
    assert_eq!(stats.requests, 1);
    assert_eq!(stats.attempts, 3);
    assert_eq!(stats.retries, 2);
}

#[test]
fn auth_failure_is_immediate() {
    let server = start_stub(vec![(401, r#"{"error":"bad key"}"#.into())]);
    std::env::set_var("SUBLEARN_TEST_KEY_AUTH", "sk-test");
    let config = provider_config(&server.base_url, "SUBLEARN_TEST_KEY_AUTH");
    let provider = Arc::new(HttpProvider::new(&config).unwrap());
    let gateway = Gateway::new(provider, &config).unwrap();

    let err = gateway.complete(&request("hello")).unwrap_err();
    assert!(matches!(err, ProviderError::Auth(_)), "got {err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn exhausted_retries_surface_the_count() {
    let server = start_stub(vec![(503, r#"{"error":"down"}"#.into())]);
    std::env::set_var("SUBLEARN_TEST_KEY_DOWN", "sk-test");
    let config = provider_config(&server.base_url, "SUBLEARN_TEST_KEY_DOWN");
    let provider = Arc::new(HttpProvider::new(&config).unwrap());
    let gateway = Gateway::new(provider, &config).unwrap();

    let err = gateway.complete(&request("hello")).unwrap_err();
    match err {
        ProviderError::RetriesExhausted { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("unexpected error: {other}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn finetune_flow_over_http() {
    let server = start_stub(vec![
        (200, r#"{"id":"file-abc","object":"file"}"#.into()),
        (
            200,
            r#"{"id":"ftjob-7","status":"queued","fine_tuned_model":null}"#.into(),
        ),
        (
            200,
            r#"{"id":"ftjob-7","status":"running","fine_tuned_model":null}"#.into(),
        ),
        (
            200,
            r#"{"id":"ftjob-7","status":"succeeded","fine_tuned_model":"ft:stub:demo"}"#.into(),
        ),
    ]);
    std::env::set_var("SUBLEARN_TEST_KEY_FT", "sk-test");
    let config = provider_config(&server.base_url, "SUBLEARN_TEST_KEY_FT");
    let provider = Arc::new(HttpProvider::new(&config).unwrap());
    let gateway = Gateway::new(provider, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    std::fs::write(&train, "{\"prompt\":\"p\",\"completion\":\"c\"}\n").unwrap();
    let file_ref = gateway.upload_training_file(&train).unwrap();
    assert_eq!(file_ref, "file-abc");

    let spec = FineTuneSpec {
        training_file_ref: file_ref,
        base_model: "stub-base".into(),
        n_epochs: 10,
        learning_rate_multiplier: 0.1,
        batch_size: 66,
        suffix: "demo".into(),
    };
    let job = gateway.create_finetune(&spec).unwrap();
    let done = gateway
        .poll_finetune(&job.id, std::time::Duration::ZERO)
        .unwrap();
    assert_eq!(done.status, FineTuneStatus::Succeeded);
    assert_eq!(done.result_model.as_deref(), Some("ft:stub:demo"));
    assert_eq!(server.hits.load(Ordering::SeqCst), 4);
}
