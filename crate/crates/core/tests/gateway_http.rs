use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use itref_core::gateway::{BackendConfig, Gateway, OpenAiBackend, ResponseCache};
use itref_core::prompts::{render_prompt, PromptInputs, PromptKind};
use itref_core::Error;

struct Recorded {
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves the scripted `(status, body)` replies in order, one per
/// connection, and records each request.
fn fake_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let sink = log.clone();
    thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => length = value.trim().parse().unwrap(),
                        "authorization" => authorization = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            sink.lock().unwrap().push(Recorded {
                authorization,
                body: serde_json::from_slice(&body).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (url, log)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(url: &str) -> BackendConfig {
    BackendConfig {
        endpoint: url.to_string(),
        max_retries: 2,
        retry_backoff_ms: 50,
        timeout_ms: 5_000,
        ..BackendConfig::default()
    }
}

fn prompt() -> itref_core::prompts::RenderedPrompt {
    let inputs = PromptInputs {
        source: Some("Hallo Welt"),
        lang: "English",
        is_first_iteration: true,
        ..Default::default()
    };
    render_prompt(PromptKind::Translate, &inputs).unwrap()
}

#[test]
fn rate_limited_request_is_retried_once() {
    let (url, log) = fake_server(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (200, completion("\"Hello world\"")),
    ]);
    let cfg = config(&url);
    let backend = Arc::new(OpenAiBackend::new(&cfg, Some("sk-test".into())));
    let gateway = Gateway::new(backend, cfg).unwrap();
    let started = Instant::now();
    let exchange = gateway.complete(&prompt()).unwrap();
    assert!(started.elapsed().as_millis() >= 50);
    assert_eq!(exchange.raw_response, "\"Hello world\"");
    assert_eq!(exchange.sanitized_response, "Hello world");
    assert!(exchange.latency_ms >= 50);
    assert!(!exchange.from_cache);

    let stats = gateway.stats();
    assert_eq!((stats.network_calls, stats.backend_requests, stats.retries), (1, 2, 1));
    let log = log.lock().unwrap();
    assert_eq!(log.len(), 2);
    for request in log.iter() {
        assert_eq!(request.authorization.as_deref(), Some("Bearer sk-test"));
        let messages = request.body["messages"].as_array().unwrap();
        assert_eq!(messages.len(), 1);
        assert_eq!(messages[0]["role"], "user");
        assert_eq!(messages[0]["content"], prompt().text);
        assert_eq!(request.body["model"], "gpt-3.5-turbo");
        assert_eq!(request.body["temperature"], 1.0);
    }
}

#[test]
fn exhausted_retries_report_the_last_status() {
    let (url, _) = fake_server(vec![(503, "down".into()), (503, "down".into()), (503, "still down".into())]);
    let cfg = config(&url);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&cfg, None)), cfg).unwrap();
    match gateway.complete(&prompt()) {
        Err(Error::Transport { status, attempts, .. }) => {
            assert_eq!(status, Some(503));
            assert_eq!(attempts, 3);
        }
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log) = fake_server(vec![(401, "bad key".into())]);
    let cfg = config(&url);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&cfg, None)), cfg).unwrap();
    assert!(matches!(
        gateway.complete(&prompt()),
        Err(Error::Transport { status: Some(401), attempts: 1, .. })
    ));
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn malformed_and_empty_bodies() {
    let (url, _) = fake_server(vec![(200, "{\"choices\": 3}".into()), (200, completion("  "))]);
    let cfg = config(&url);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&cfg, None)), cfg).unwrap();
    assert!(matches!(gateway.complete(&prompt()), Err(Error::Protocol(_))));
    assert!(matches!(gateway.complete(&prompt()), Err(Error::EmptyResponse)));
}

#[test]
fn cached_exchange_survives_a_new_gateway() {
    let (url, log) = fake_server(vec![(200, completion("Translation: Hello world"))]);
    let cache_dir = tempfile::tempdir().unwrap();
    let cfg = config(&url);
    let first = Gateway::new(Arc::new(OpenAiBackend::new(&cfg, None)), cfg.clone())
        .unwrap()
        .with_cache(ResponseCache::open(cache_dir.path()).unwrap());
    let fresh = first.complete(&prompt()).unwrap();

    let second = Gateway::new(Arc::new(OpenAiBackend::new(&cfg, None)), cfg)
        .unwrap()
        .with_cache(ResponseCache::open(cache_dir.path()).unwrap());
    let cached = second.complete(&prompt()).unwrap();
    assert!(cached.from_cache);
    assert_eq!(cached.raw_response, fresh.raw_response);
    assert_eq!(cached.sanitized_response, "Hello world");
    assert_eq!(second.stats().network_calls, 0);
    assert_eq!(log.lock().unwrap().len(), 1);
}
