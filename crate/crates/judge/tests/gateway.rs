//! Gateway tests against a local scripted HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use peerrank_judge::{
    generate_answers, judge_pair, ChatClient, GatewayError, JudgeEndpointConfig, PromptKind,
};
use peerrank_core::{Answer, ModelId, Outcome, Question};

/// Minimal HTTP/1.1 responder: one request per connection, response chosen
/// by a closure over the request body. Runs until the listener is dropped.
struct MockServer {
    base_url: String,
    requests: Arc<Mutex<Vec<String>>>,
    shutdown: Arc<AtomicUsize>,
}

impl MockServer {
    fn start<F>(respond: F) -> MockServer
    where
        F: Fn(&str, usize) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<String>>> = Arc::default();
        let shutdown: Arc<AtomicUsize> = Arc::default();

        let seen = Arc::clone(&requests);
        let stop = Arc::clone(&shutdown);
        std::thread::spawn(move || {
            for (index, stream) in listener.incoming().enumerate() {
                if stop.load(Ordering::SeqCst) != 0 {
                    break;
                }
                let Ok(stream) = stream else { break };
                let mut reader = BufReader::new(stream);
                let mut content_length = 0usize;
                let mut line = String::new();
                loop {
                    line.clear();
                    if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(value) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = value.trim().parse().unwrap_or(0);
                    }
                    // Capture auth headers for assertions.
                    if line.to_ascii_lowercase().starts_with("authorization:") {
                        seen.lock().unwrap().push(line.trim().to_string());
                    }
                }
                let mut body = vec![0u8; content_length];
                reader.read_exact(&mut body).ok();
                let body = String::from_utf8_lossy(&body).to_string();
                seen.lock().unwrap().push(body.clone());

                let (status, payload) = respond(&body, index);
                let reason = if status == 200 { "OK" } else { "Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
Content-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
                reader.into_inner().write_all(response.as_bytes()).ok();
            }
        });

        MockServer {
            base_url,
            requests,
            shutdown,
        }
    }

    fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(1, Ordering::SeqCst);
        // Nudge the accept loop so it can observe the flag.
        let _ = std::net::TcpStream::connect(self.base_url.trim_start_matches("http://"));
    }
}

fn completion_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }]
    })
    .to_string()
}

fn client_for(server: &MockServer) -> ChatClient {
    let mut config = JudgeEndpointConfig::new(server.base_url.clone(), "mock-judge");
    config.backoff_ms = 5;
    ChatClient::new(config).unwrap()
}

fn question() -> Question {
    Question {
        question_id: 7,
        category: "test".into(),
        turns: vec!["Which answer is better?".into()],
        reference: None,
    }
}

fn answer(model: &str, text: &str) -> Answer {
    Answer {
        question_id: 7,
        model: ModelId::new(model).unwrap(),
        turns: vec![text.into()],
    }
}

#[test]
fn completion_round_trip() {
    let server = MockServer::start(|_, _| (200, completion_body("hello there")));
    let client = client_for(&server);
    let text = client.complete("system prompt", "user prompt").unwrap();
    assert_eq!(text, "hello there");
    let requests = server.requests();
    assert!(requests.iter().any(|r| r.contains("system prompt")));
    assert!(requests.iter().any(|r| r.contains("\"temperature\":0.0")));
}

#[test]
fn transient_failure_consumes_one_retry() {
    let server = MockServer::start(|_, index| {
        if index == 0 {
            (500, "{\"error\":\"worker crashed\"}".to_string())
        } else {
            (200, completion_body("[[A]]"))
        }
    });
    let client = client_for(&server);
    let text = client.complete("s", "u").unwrap();
    assert_eq!(text, "[[A]]");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn exhausted_retries_surface_a_transport_error() {
    let server = MockServer::start(|_, _| (503, "{}".to_string()));
    let mut config = JudgeEndpointConfig::new(server.base_url.clone(), "mock-judge");
    config.max_retries = 2;
    config.backoff_ms = 1;
    let client = ChatClient::new(config).unwrap();
    let err = client.complete("s", "u").unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)));
    assert_eq!(server.requests().len(), 3); // initial attempt + 2 retries
}

#[test]
fn non_retryable_status_fails_immediately() {
    let server = MockServer::start(|_, _| (401, "{\"error\":\"bad key\"}".to_string()));
    let client = client_for(&server);
    assert!(matches!(
        client.complete("s", "u"),
        Err(GatewayError::Transport(_))
    ));
    assert_eq!(server.requests().len(), 1);
}

/// Responds as a position-blind judge: the side whose answer text contains
/// "best" wins.
fn content_judge(body: &str, _: usize) -> (u16, String) {
    let a_has = body
        .find("Assistant A's Answer: ")
        .map(|i| body[i..].starts_with("Assistant A's Answer: best"))
        .unwrap_or(false);
    let b_has = body
        .find("Assistant B's Answer: ")
        .map(|i| body[i..].starts_with("Assistant B's Answer: best"))
        .unwrap_or(false);
    let verdict = match (a_has, b_has) {
        (true, false) => "[[A]]",
        (false, true) => "[[B]]",
        _ => "[[C]]",
    };
    (200, completion_body(verdict))
}

#[test]
fn agreeing_orders_pick_the_winner() {
    let server = MockServer::start(content_judge);
    let client = client_for(&server);
    let good = answer("x", "best");
    let bad = answer("y", "meh");
    let outcome = judge_pair(&client, &question(), &good, &bad, PromptKind::Single).unwrap();
    assert_eq!(outcome, Outcome::FirstWins);
    let outcome = judge_pair(&client, &question(), &bad, &good, PromptKind::Single).unwrap();
    assert_eq!(outcome, Outcome::SecondWins);
}

#[test]
fn mirrored_pairs_produce_mirrored_outcomes() {
    let server = MockServer::start(content_judge);
    let client = client_for(&server);
    let a = answer("x", "best");
    let b = answer("y", "meh");
    let forward = judge_pair(&client, &question(), &a, &b, PromptKind::Single).unwrap();
    let backward = judge_pair(&client, &question(), &b, &a, PromptKind::Single).unwrap();
    assert_eq!(forward.mirrored(), backward);
}

#[test]
fn order_sensitive_judge_collapses_to_tie() {
    // Always prefers whichever answer is presented as assistant A: pure
    // position bias, which the dual order cancels.
    let server = MockServer::start(|_, _| (200, completion_body("[[A]]")));
    let client = client_for(&server);
    let outcome = judge_pair(
        &client,
        &question(),
        &answer("x", "one"),
        &answer("y", "two"),
        PromptKind::Single,
    )
    .unwrap();
    assert_eq!(outcome, Outcome::Tie);
    assert_eq!(server.requests().len(), 2); // one call per presentation order
}

#[test]
fn invalid_verdict_in_one_order_counts_as_tie_vote() {
    // First order: no marker at all. Second order: B (the first-passed
    // answer). Tie vote + model_1 vote disagree, so the pair ties.
    let server = MockServer::start(|_, index| {
        if index == 0 {
            (200, completion_body("cannot decide"))
        } else {
            (200, completion_body("[[B]]"))
        }
    });
    let client = client_for(&server);
    let outcome = judge_pair(
        &client,
        &question(),
        &answer("x", "one"),
        &answer("y", "two"),
        PromptKind::Single,
    )
    .unwrap();
    assert_eq!(outcome, Outcome::Tie);
}

#[test]
fn both_orders_invalid_is_an_invalid_verdict_error() {
    let server = MockServer::start(|_, _| (200, completion_body("hmm")));
    let client = client_for(&server);
    let err = judge_pair(
        &client,
        &question(),
        &answer("x", "one"),
        &answer("y", "two"),
        PromptKind::Single,
    )
    .unwrap_err();
    assert!(matches!(err, GatewayError::InvalidVerdict(_)));
}

#[test]
fn api_key_is_read_from_the_environment() {
    let server = MockServer::start(|_, _| (200, completion_body("[[C]]")));
    let mut config = JudgeEndpointConfig::new(server.base_url.clone(), "mock-judge");
    config.api_key_env = Some("PEERRANK_TEST_KEY".into());
    // Env var unset: construction fails.
    std::env::remove_var("PEERRANK_TEST_KEY");
    assert!(matches!(
        ChatClient::new(config.clone()),
        Err(GatewayError::Argument(_))
    ));
    std::env::set_var("PEERRANK_TEST_KEY", "sk-mock-123");
    let client = ChatClient::new(config).unwrap();
    client.complete("s", "u").unwrap();
    let requests = server.requests();
    assert!(requests.iter().any(|r| r.contains("Bearer sk-mock-123")));
}

#[test]
fn answer_generation_carries_the_conversation() {
    let server = MockServer::start(|body, _| {
        // Echo a reply that depends on how many user turns arrived.
        let turns = body.matches("\"role\":\"user\"").count();
        (200, completion_body(&format!("reply {turns}")))
    });
    let client = client_for(&server);
    let questions = vec![Question {
        question_id: 1,
        category: "test".into(),
        turns: vec!["first".into(), "second".into()],
        reference: None,
    }];
    let model = ModelId::new("contestant").unwrap();
    let answers = generate_answers(&client, &questions, &model).unwrap();
    assert_eq!(answers.len(), 1);
    assert_eq!(answers[0].turns, vec!["reply 1".to_string(), "reply 2".to_string()]);
    // The second call must include the first assistant reply as history.
    let requests = server.requests();
    assert!(requests.iter().any(|r| r.contains("\"role\":\"assistant\"") && r.contains("reply 1")));
}
