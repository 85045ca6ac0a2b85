use std::sync::Arc;
use std::time::Duration;

use cirag::eval::{build_eval_store, run_eval};
use cirag::fixtures::{chat_completion_body, oracle_stub_handler, synthetic_oracle, synthetic_two_hop, StubReply, StubServer};
use cirag::llm::{BackendError, HttpBackend, HttpConfig};
use cirag::{CompletionRequest, LlmBackend, Pipeline, PipelineConfig, RoleTag};

fn config(endpoint: String) -> HttpConfig {
    HttpConfig {
        endpoint,
        model: "stub-model".into(),
        api_key_env: "CIRAG_TEST_UNSET_KEY".into(),
        timeout_secs: 10.0,
        max_retries: 3,
        initial_backoff_ms: 5,
        max_backoff_ms: 20,
        ..HttpConfig::default()
    }
}

#[test]
fn retries_after_rate_limit() {
    let server = StubServer::start(|req| {
        if req.index == 0 {
            StubReply::status(429)
        } else {
            StubReply::ok(chat_completion_body("hello"))
        }
    })
    .unwrap();
    let backend = HttpBackend::new(config(server.endpoint())).unwrap();
    let out = backend.complete(&CompletionRequest::new(RoleTag::Ner, "hi")).unwrap();
    assert_eq!(out.text, "hello");
    assert_eq!(server.requests(), 2);
}

#[test]
fn request_shape() {
    let server = StubServer::start(|req| {
        let v: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        let ok = req.method == "POST"
            && req.path == "/v1/chat/completions"
            && v["model"] == "stub-model"
            && v["temperature"] == 0.0
            && v["messages"][0]["content"] == "prompt text";
        StubReply::ok(chat_completion_body(if ok { "shape ok" } else { "bad shape" }))
    })
    .unwrap();
    let backend = HttpBackend::new(config(server.endpoint())).unwrap();
    let out = backend.complete(&CompletionRequest::new(RoleTag::Integrate, "prompt text")).unwrap();
    assert_eq!(out.text, "shape ok");
}

#[test]
fn gives_up_after_max_retries() {
    let server = StubServer::start(|_| StubReply::status(503)).unwrap();
    let mut cfg = config(server.endpoint());
    cfg.max_retries = 2;
    let backend = HttpBackend::new(cfg).unwrap();
    match backend.complete(&CompletionRequest::new(RoleTag::Ner, "x")) {
        Err(BackendError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(server.requests(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(|_| StubReply::status(400)).unwrap();
    let backend = HttpBackend::new(config(server.endpoint())).unwrap();
    match backend.complete(&CompletionRequest::new(RoleTag::Ner, "x")) {
        Err(BackendError::Status { status, .. }) => assert_eq!(status, 400),
        other => panic!("expected status error, got {other:?}"),
    }
    assert_eq!(server.requests(), 1);
}

#[test]
fn in_flight_requests_are_bounded() {
    let server =
        StubServer::start(|_| StubReply::ok(chat_completion_body("ok")).after(Duration::from_millis(60))).unwrap();
    let mut cfg = config(server.endpoint());
    cfg.max_in_flight = 2;
    let backend = Arc::new(HttpBackend::new(cfg).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let b = backend.clone();
            std::thread::spawn(move || b.complete(&CompletionRequest::new(RoleTag::Ner, format!("p{i}"))).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.requests(), 8);
    assert!(server.peak_concurrency() <= 2, "peak {}", server.peak_concurrency());
    assert!(backend.limiter().peak() <= 2);
    assert_eq!(backend.limiter().in_flight(), 0);
}

#[test]
fn eval_over_http_reports_positive_latencies() {
    let suite = synthetic_two_hop(3, 21);
    let oracle: Arc<dyn LlmBackend> = Arc::new(synthetic_oracle(&suite.kb));
    let server = StubServer::start(oracle_stub_handler(oracle, Duration::from_millis(3))).unwrap();
    let backend: Arc<dyn LlmBackend> = Arc::new(HttpBackend::new(config(server.endpoint())).unwrap());
    let ds = suite.dataset();
    let cfg = PipelineConfig {
        max_iterations: 2,
        ..PipelineConfig::default()
    };
    let p = Pipeline::new(build_eval_store(&ds).unwrap(), cfg, backend).unwrap();
    let report = run_eval(&ds.examples, &p, 2);
    assert_eq!(report.aggregates.failed, 0, "{:?}", report.rows);
    assert_eq!(report.aggregates.mean_em, 1.0);
    for row in &report.rows {
        let l = &row.latency;
        for v in [l.retrieval_ms, l.extraction_ms, l.rerank_ms, l.integration_ms, l.generation_ms, l.total_ms] {
            assert!(v > 0.0, "{row:?}");
        }
    }
}
