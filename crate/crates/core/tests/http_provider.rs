#![cfg(feature = "http")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use qagen::gateway::http::{HttpProvider, HttpSettings};
use qagen::gateway::{ChatRequest, EmbedInput, Gateway, Message, RetryPolicy, RewardRequest, Role};
use qagen::Error;
use serde_json::{json, Value};

/// Serves canned responses in order, one per request, and reports each
/// request's path, auth header and JSON body.
fn serve(responses: Vec<(u16, Value)>) -> (String, mpsc::Receiver<(String, Option<String>, Value)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut queue = responses.into_iter();
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut len = 0;
                let mut auth = None;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    let (k, v) = h.split_once(':').unwrap();
                    match k.to_ascii_lowercase().as_str() {
                        "content-length" => len = v.trim().parse().unwrap(),
                        "authorization" => auth = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                tx.send((path, auth, serde_json::from_slice(&body).unwrap())).unwrap();
                let Some((status, resp)) = queue.next() else { return };
                let text = resp.to_string();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{text}",
                    text.len()
                )
                .unwrap();
                stream.flush().unwrap();
            }
        }
    });
    (format!("http://{addr}/v1"), rx)
}

fn provider(base_url: String) -> HttpProvider {
    HttpProvider::new(HttpSettings {
        base_url,
        api_key: Some("sk-test".into()),
        chat_model: "chat-m".into(),
        reward_model: "reward-m".into(),
        embedding_model: "embed-m".into(),
        timeout: Duration::from_secs(5),
    })
    .unwrap()
}

fn no_wait() -> RetryPolicy {
    RetryPolicy { max_attempts: 3, base_delay_ms: 0, max_delay_ms: 0 }
}

#[test]
fn chat_request_wire_format_and_retry() {
    let ok = json!({"choices": [
        {"index": 0, "message": {"role": "assistant", "content": "Q1?"}},
        {"index": 1, "message": {"role": "assistant", "content": "Q2?"}}
    ]});
    let (url, rx) = serve(vec![(503, json!({"error": "busy"})), (200, ok)]);
    let gw = Gateway::new(provider(url)).with_retry(no_wait());
    let req = ChatRequest::user("Passage: x").with_samples(2).with_temperature(0.7);
    assert_eq!(gw.chat(&req).unwrap(), vec!["Q1?", "Q2?"]);

    let (path, auth, body) = rx.recv().unwrap();
    assert_eq!(path, "/v1/chat/completions");
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(body["model"], "chat-m");
    assert_eq!(body["n"], 2);
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["messages"][0], json!({"role": "user", "content": "Passage: x"}));
    assert!(body.get("retry_salt").is_none());
    let (_, _, retried) = rx.recv().unwrap();
    assert_eq!(retried, body);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, rx) = serve(vec![(400, json!({"error": "bad"}))]);
    let gw = Gateway::new(provider(url)).with_retry(no_wait());
    match gw.chat(&ChatRequest::user("hi")) {
        Err(Error::Provider { attempts, .. }) => assert_eq!(attempts, 1),
        other => panic!("unexpected {other:?}"),
    }
    rx.recv().unwrap();
    assert!(rx.recv_timeout(Duration::from_millis(200)).is_err());
}

#[test]
fn reward_and_embeddings() {
    let (url, rx) = serve(vec![
        (200, json!({"choices": [{"message": {"content": "reward:-6.5"}}]})),
        (200, json!({"data": [{"index": 0, "embedding": [0.6, 0.8]}, {"index": 1, "embedding": [1.0, 0.0]}]})),
    ]);
    let gw = Gateway::new(provider(url)).with_retry(no_wait());
    let reward = RewardRequest::new(vec![
        Message::new(Role::User, "q"),
        Message::new(Role::Assistant, "a"),
    ])
    .unwrap();
    assert_eq!(gw.score(&reward).unwrap(), -6.5);
    let (_, _, body) = rx.recv().unwrap();
    assert_eq!(body["model"], "reward-m");
    assert_eq!(body["messages"][1]["role"], "assistant");

    let out = gw.embed(&[EmbedInput::new("c1", "alpha"), EmbedInput::new("q1", "beta")]).unwrap();
    assert_eq!(out[0].owner_id, "c1");
    assert_eq!(out[1].vector, vec![1.0, 0.0]);
    let (path, _, body) = rx.recv().unwrap();
    assert_eq!(path, "/v1/embeddings");
    assert_eq!(body["input"], json!(["alpha", "beta"]));
}
