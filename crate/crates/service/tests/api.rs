use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use litrag_core::providers::mock::{FnLlm, HeuristicLlm, MockEmbedder};
use litrag_core::testset::{
    apply_annotations, generate_testset, Annotation, GenerateOptions, Scope, Verdict,
};
use litrag_core::workspace::Providers;
use litrag_core::{Corpus, ProviderError};
use litrag_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const ATRAZINE: &str =
    "Atrazine is a Herbicide used on Maize. Atrazine persists in Groundwater for months. \
    Monitoring programs detect Atrazine in Wells near fields.";
const BEES: &str = "Neonicotinoids affect Honeybees at low doses. Honeybees exposed to Neonicotinoids forage less. \
    Field studies in Europe confirm reduced Colony growth.";

struct Harness {
    _dirs: (tempfile::TempDir, tempfile::TempDir),
    config: ServiceConfig,
    app: Router,
}

fn mock_providers() -> Providers {
    (
        Arc::new(HeuristicLlm::new()),
        Arc::new(MockEmbedder::bag_of_words(64, 0)),
    )
}

fn harness_with(providers: Providers) -> Harness {
    let index = tempfile::tempdir().unwrap();
    let state = tempfile::tempdir().unwrap();
    let config = ServiceConfig::new(index.path(), state.path());
    let app = router(AppState::open(config.clone(), providers).unwrap());
    Harness {
        _dirs: (index, state),
        config,
        app,
    }
}

fn harness() -> Harness {
    harness_with(mock_providers())
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    send_raw(app, req).await
}

async fn send_raw(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::Null)
    };
    (status, value)
}

async fn upload(app: &Router, name: &str, text: &str) -> String {
    let (status, body) = send(
        app,
        "POST",
        "/api/corpus/documents",
        Some(json!({"filename": name, "text": text})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["doc_id"].as_str().unwrap().to_string()
}

async fn wait_job(app: &Router, job_id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let (status, body) = send(app, "GET", &format!("/api/jobs/{job_id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if body["state"] == "done" || body["state"] == "failed" {
            return body;
        }
        assert!(Instant::now() < deadline, "job did not finish: {body}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

async fn build(app: &Router) -> Value {
    let (status, body) = send(
        app,
        "POST",
        "/api/index/build",
        Some(json!({"modes": ["vector", "graph"]})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    wait_job(app, body["job_id"].as_str().unwrap()).await
}

#[tokio::test]
async fn health_reports_missing_indexes() {
    let h = harness();
    let (status, body) = send(&h.app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body,
        json!({"status": "ok", "index_loaded": false, "graph_loaded": false})
    );
}

#[tokio::test]
async fn unknown_session_and_job_are_404() {
    let h = harness();
    let (status, body) = send(
        &h.app,
        "POST",
        "/api/chat/sessions/s-nope/messages",
        Some(json!({"query": "hello"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["retryable"], false);
    assert!(body["error"].as_str().unwrap().contains("s-nope"));
    let (status, _) = send(&h.app, "GET", "/api/jobs/job-9999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(&h.app, "GET", "/api/chat/sessions/s-nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(&h.app, "GET", "/api/eval/runs/run-nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn query_before_build_is_409() {
    let h = harness();
    upload(&h.app, "atrazine.txt", ATRAZINE).await;
    let (_, session) = send(
        &h.app,
        "POST",
        "/api/chat/sessions",
        Some(json!({"mode": "vector"})),
    )
    .await;
    let id = session["session_id"].as_str().unwrap();
    let (status, body) = send(
        &h.app,
        "POST",
        &format!("/api/chat/sessions/{id}/messages"),
        Some(json!({"query": "What is atrazine?"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert!(body["error"].as_str().unwrap().contains("build"));
}

#[tokio::test]
async fn malformed_bodies_are_422() {
    let h = harness();
    let req = Request::builder()
        .method("POST")
        .uri("/api/chat/sessions")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(
        send_raw(&h.app, req).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let req = Request::builder()
        .method("POST")
        .uri("/api/index/build")
        .body(Body::from("{}"))
        .unwrap();
    assert_eq!(
        send_raw(&h.app, req).await.0,
        StatusCode::UNPROCESSABLE_ENTITY,
        "missing content type"
    );
    let (status, _) = send(
        &h.app,
        "POST",
        "/api/chat/sessions",
        Some(json!({"mode": "telepathy"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = send(
        &h.app,
        "POST",
        "/api/index/build",
        Some(json!({"modes": ["sparse"]})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = send(
        &h.app,
        "POST",
        "/api/corpus/documents",
        Some(json!({"filename": "x.txt", "text": "  "})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = send(
        &h.app,
        "POST",
        "/api/chat/sessions",
        Some(json!({"doc_filter": []})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn multipart_upload_and_listing() {
    let h = harness();
    let boundary = "XBOUNDARYX";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"bees.txt\"\r\n\
         Content-Type: text/plain\r\n\r\n{BEES}\r\n--{boundary}--\r\n"
    );
    let req = Request::builder()
        .method("POST")
        .uri("/api/corpus/documents")
        .header(
            "content-type",
            format!("multipart/form-data; boundary={boundary}"),
        )
        .body(Body::from(body))
        .unwrap();
    let (status, created) = send_raw(&h.app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["title"], "bees");
    let (status, docs) = send(&h.app, "GET", "/api/corpus/documents", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(docs.as_array().unwrap().len(), 1);
    assert_eq!(docs[0]["doc_id"], created["doc_id"]);
    assert_eq!(docs[0]["indexed"], false);
}

#[tokio::test]
async fn session_for_unknown_document_is_404() {
    let h = harness();
    let (status, _) = send(
        &h.app,
        "POST",
        "/api/chat/sessions",
        Some(json!({"doc_filter": ["doc-missing"]})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn build_of_empty_corpus_fails() {
    let h = harness();
    let job = build(&h.app).await;
    assert_eq!(job["state"], "failed");
    assert!(job["error"].as_str().unwrap().contains("empty"));
}

#[tokio::test]
async fn single_paper_flow_and_restart() {
    let h = harness();
    let atrazine = upload(&h.app, "atrazine.txt", ATRAZINE).await;
    upload(&h.app, "bees.txt", BEES).await;
    let job = build(&h.app).await;
    assert_eq!(job["state"], "done", "{job}");
    assert_eq!(job["progress"], 1.0);
    let (_, health) = send(&h.app, "GET", "/health", None).await;
    assert_eq!(health["index_loaded"], true);
    assert_eq!(health["graph_loaded"], true);

    let (status, session) = send(
        &h.app,
        "POST",
        "/api/chat/sessions",
        Some(json!({"mode": "hybrid", "doc_filter": [atrazine]})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = session["session_id"].as_str().unwrap().to_string();
    let uri = format!("/api/chat/sessions/{id}/messages");
    for (query, mode) in [
        ("Where does atrazine persist?", None),
        ("What do honeybees do?", Some("vector")),
    ] {
        let body = match mode {
            Some(m) => json!({"query": query, "mode": m}),
            None => json!({"query": query}),
        };
        let (status, answer) = send(&h.app, "POST", &uri, Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{answer}");
        assert_eq!(answer["mode"], mode.unwrap_or("hybrid"));
        assert!(
            !answer["citations"].as_array().unwrap().is_empty(),
            "{answer}"
        );
        for c in answer["citations"].as_array().unwrap() {
            assert_eq!(c["doc_id"], atrazine.as_str());
            let (status, chunk) = send(
                &h.app,
                "GET",
                &format!(
                    "/api/corpus/documents/{}/chunks/{}",
                    c["doc_id"].as_str().unwrap(),
                    c["chunk_id"].as_str().unwrap()
                ),
                None,
            )
            .await;
            assert_eq!(status, StatusCode::OK);
            assert!(chunk["text"]
                .as_str()
                .unwrap()
                .starts_with(c["snippet"].as_str().unwrap().trim_end_matches('…')));
        }
    }
    let (_, transcript) = send(&h.app, "GET", &format!("/api/chat/sessions/{id}"), None).await;
    let turns = transcript["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 2);
    assert_eq!(turns[0]["mode"], "hybrid");
    assert_eq!(turns[1]["mode"], "vector");

    let restarted = router(AppState::open(h.config.clone(), mock_providers()).unwrap());
    let (status, again) = send(&restarted, "GET", &format!("/api/chat/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, transcript);
    let (_, health) = send(&restarted, "GET", "/health", None).await;
    assert_eq!(health["index_loaded"], true);
}

#[tokio::test]
async fn provider_failure_is_502_with_retryable_flag() {
    let failing: Providers = (
        Arc::new(FnLlm::new(|_| {
            Err(ProviderError::Mock {
                message: "rate limited".into(),
                retryable: true,
            })
        })),
        Arc::new(MockEmbedder::bag_of_words(64, 0)),
    );
    let h = harness_with(failing);
    upload(&h.app, "atrazine.txt", ATRAZINE).await;
    let (_, job) = send(
        &h.app,
        "POST",
        "/api/index/build",
        Some(json!({"modes": ["vector"]})),
    )
    .await;
    assert_eq!(
        wait_job(&h.app, job["job_id"].as_str().unwrap()).await["state"],
        "done"
    );
    let (_, session) = send(
        &h.app,
        "POST",
        "/api/chat/sessions",
        Some(json!({"mode": "vector"})),
    )
    .await;
    let uri = format!(
        "/api/chat/sessions/{}/messages",
        session["session_id"].as_str().unwrap()
    );
    let (status, body) = send(
        &h.app,
        "POST",
        &uri,
        Some(json!({"query": "What is atrazine?"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["retryable"], true);
    let (status, _) = send(
        &h.app,
        "POST",
        &uri,
        Some(json!({"query": "x", "mode": "graph"})),
    )
    .await;
    assert_eq!(
        status,
        StatusCode::CONFLICT,
        "graph mode without a graph index"
    );
}

#[tokio::test]
async fn evaluation_run_produces_report() {
    let h = harness();
    let atrazine = upload(&h.app, "atrazine.txt", ATRAZINE).await;
    upload(&h.app, "bees.txt", BEES).await;
    assert_eq!(build(&h.app).await["state"], "done");

    let corpus = Corpus::load(&h.config.index_dir).unwrap();
    let mut options = GenerateOptions::new(2, Scope::SinglePaper);
    options.doc_id = Some(atrazine.as_str().into());
    let raw = generate_testset(&corpus, &options, &HeuristicLlm::new()).unwrap();
    let yes = |id: &str| Annotation {
        item_id: id.into(),
        q_context_related: Verdict::Yes,
        q_answer_from_context: Verdict::Yes,
        q_answer_complete: Verdict::Yes,
        annotator_id: "a1".into(),
    };
    let annotations: Vec<Annotation> = raw.items.iter().map(|i| yes(&i.item_id)).collect();
    let path = h.config.state_dir.join("filtered.jsonl");
    apply_annotations(&raw, &annotations)
        .unwrap()
        .save(&path)
        .unwrap();
    raw.save(&h.config.state_dir.join("raw.jsonl")).unwrap();

    let (status, _) = send(
        &h.app,
        "POST",
        "/api/eval/run",
        Some(json!({"testset_path": h.config.state_dir.join("raw.jsonl"), "modes": ["vector"]})),
    )
    .await;
    assert_eq!(
        status,
        StatusCode::UNPROCESSABLE_ENTITY,
        "unfiltered test set"
    );

    let (status, accepted) = send(
        &h.app,
        "POST",
        "/api/eval/run",
        Some(json!({"testset_path": path, "modes": ["vector", "graph", "hybrid"]})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let run_id = accepted["run_id"].as_str().unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let report = loop {
        let (status, body) = send(&h.app, "GET", &format!("/api/eval/runs/{run_id}"), None).await;
        match status {
            StatusCode::OK => break body,
            StatusCode::ACCEPTED => {}
            other => panic!("unexpected status {other}: {body}"),
        }
        assert!(Instant::now() < deadline);
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    assert_eq!(report["run_id"], run_id);
    assert_eq!(report["per_mode"].as_object().unwrap().len(), 3);
    let md = h
        .app
        .clone()
        .oneshot(
            Request::builder()
                .uri(format!("/api/eval/runs/{run_id}/report.md"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(md.status(), StatusCode::OK);
    let text =
        String::from_utf8(md.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    assert!(text.contains("| Hybrid RAG |"));
}
