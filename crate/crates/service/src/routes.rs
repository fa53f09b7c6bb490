//! Route handlers.

use std::collections::BTreeSet;

use axum::extract::{FromRequest, Multipart, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use litrag_core::ingest::chunk_document;
use litrag_core::testset::TestSet;
use litrag_core::{ChunkId, DocId, Document, Engine, RetrievalMode};

use crate::api::*;
use crate::error::{ApiError, ApiJson};
use crate::sessions::{now_ms, ChatSession, Turn};
use crate::state::{save_working_corpus, AppState, JobState};

const SNIPPET_CHARS: usize = 240;

type ApiResult<T> = Result<T, ApiError>;

pub async fn health(State(state): State<AppState>) -> Json<Health> {
    let snapshot = state.snapshot();
    Json(Health {
        status: "ok".into(),
        index_loaded: snapshot
            .as_ref()
            .is_some_and(|e| e.vector_index().is_some()),
        graph_loaded: snapshot.as_ref().is_some_and(|e| e.graph().is_some()),
    })
}

/// Accepts JSON `{filename, text}` or a multipart form with a `file` part
/// (and an optional `filename` text part).
pub async fn upload(
    State(state): State<AppState>,
    req: Request,
) -> ApiResult<(StatusCode, Json<UploadResponse>)> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let body = if is_multipart {
        read_multipart(req).await?
    } else {
        ApiJson::<UploadRequest>::from_request(req, &()).await?.0
    };
    if body.filename.trim().is_empty() {
        return Err(ApiError::unprocessable("filename is empty"));
    }
    let doc = Document::from_text(body.filename.trim(), &body.text, body.metadata)?;
    let worker = state.clone();
    let (doc, chunks) = tokio::task::spawn_blocking(move || {
        let shared = &worker.0;
        chunk_document(&doc, &shared.config.chunking, shared.embedder.as_ref())
            .map(|chunks| (doc, chunks))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let response = UploadResponse {
        doc_id: doc.doc_id.clone(),
        title: doc.title.clone(),
        chunks: chunks.len(),
    };
    let mut corpus = state.0.corpus.lock().expect("corpus lock");
    corpus.upsert(doc, chunks)?;
    save_working_corpus(state.config(), &corpus)?;
    Ok((StatusCode::CREATED, Json(response)))
}

async fn read_multipart(req: Request) -> ApiResult<UploadRequest> {
    let mut multipart = Multipart::from_request(req, &())
        .await
        .map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let mut filename = None;
    let mut text = None;
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::unprocessable(e.body_text());
    while let Some(field) = multipart.next_field().await.map_err(bad)? {
        match field.name() {
            Some("file") => {
                if filename.is_none() {
                    filename = field.file_name().map(str::to_string);
                }
                let bytes = field.bytes().await.map_err(bad)?;
                text = Some(
                    String::from_utf8(bytes.to_vec())
                        .map_err(|_| ApiError::unprocessable("file is not UTF-8 text"))?,
                );
            }
            Some("filename") => filename = Some(field.text().await.map_err(bad)?),
            _ => {}
        }
    }
    let text = text.ok_or_else(|| ApiError::unprocessable("multipart body has no file part"))?;
    Ok(UploadRequest {
        filename: filename.unwrap_or_default(),
        text,
        metadata: Default::default(),
    })
}

pub async fn list_documents(State(state): State<AppState>) -> Json<Vec<DocumentSummary>> {
    let snapshot = state.snapshot();
    let corpus = state.0.corpus.lock().expect("corpus lock");
    Json(
        corpus
            .documents()
            .iter()
            .map(|d| DocumentSummary {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                source_path: d.source_path.clone(),
                chunks: corpus.chunks_of(&d.doc_id).count(),
                indexed: snapshot
                    .as_ref()
                    .is_some_and(|e| e.corpus().document(&d.doc_id).is_some()),
            })
            .collect(),
    )
}

/// Resolves chunks of the built snapshot first, then of the working corpus.
pub async fn get_chunk(
    State(state): State<AppState>,
    Path((doc_id, chunk_id)): Path<(String, String)>,
) -> ApiResult<Json<ChunkView>> {
    let (doc_id, chunk_id) = (DocId::new(doc_id), ChunkId::new(chunk_id));
    let view = |corpus: &litrag_core::Corpus| {
        let chunk = corpus.chunk(&chunk_id).filter(|c| c.doc_id == doc_id)?;
        let doc = corpus.document(&doc_id)?;
        Some(ChunkView {
            doc_id: doc_id.clone(),
            chunk_id: chunk_id.clone(),
            title: doc.title.clone(),
            sentence_range: chunk.sentence_range,
            text: chunk.text.clone(),
        })
    };
    state
        .snapshot()
        .and_then(|e| view(e.corpus()))
        .or_else(|| view(&state.0.corpus.lock().expect("corpus lock")))
        .map(Json)
        .ok_or_else(|| {
            ApiError::not_found(format!("unknown chunk {chunk_id} of document {doc_id}"))
        })
}

pub async fn start_build(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<BuildRequest>,
) -> ApiResult<(StatusCode, Json<JobAccepted>)> {
    let (mut vector, mut graph) = (false, false);
    for mode in &body.modes {
        match mode.trim().to_ascii_lowercase().as_str() {
            "vector" => vector = true,
            "graph" => graph = true,
            "hybrid" => (vector, graph) = (true, true),
            other => {
                return Err(ApiError::unprocessable(format!(
                    "unknown index kind {other:?}"
                )))
            }
        }
    }
    if !vector && !graph {
        return Err(ApiError::unprocessable(
            "modes must name vector and/or graph",
        ));
    }
    let job_id = state.submit_build(vector, graph);
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })))
}

pub async fn get_job(
    State(state): State<AppState>,
    Path(job_id): Path<String>,
) -> ApiResult<Response> {
    let job = state
        .job(&job_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {job_id}")))?;
    Ok(Json(job).into_response())
}

pub async fn create_session(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let doc_filter = match body.doc_filter.clone() {
        None => None,
        Some(ids) if ids.is_empty() => return Err(ApiError::unprocessable("doc_filter is empty")),
        Some(ids) => {
            let corpus = state.0.corpus.lock().expect("corpus lock");
            if let Some(missing) = ids.iter().find(|d| corpus.document(d).is_none()) {
                return Err(ApiError::not_found(format!("unknown document {missing}")));
            }
            Some(ids.into_iter().collect::<BTreeSet<_>>())
        }
    };
    let session = state
        .0
        .sessions
        .create(body.mode, doc_filter)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: session.session_id,
            mode: session.mode,
            doc_filter: session.doc_filter.map(|f| f.into_iter().collect()),
        }),
    ))
}

pub async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<ChatSession>> {
    state
        .0
        .sessions
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
}

pub async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<MessageRequest>,
) -> ApiResult<Json<MessageResponse>> {
    let session = state
        .0
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
    if body.query.trim().is_empty() {
        return Err(ApiError::unprocessable("query is empty"));
    }
    let engine = state.snapshot().ok_or_else(ApiError::no_index)?;
    let mode = body.mode.unwrap_or(session.mode);
    let mut config = state.config().engine.clone();
    config.doc_filter = session.doc_filter.clone();
    let query = body.query.clone();
    let worker = state.clone();
    let answer_engine = engine.clone();
    let answer = tokio::task::spawn_blocking(move || {
        let shared = &worker.0;
        answer_engine.answer_query(
            &query,
            mode,
            &config,
            shared.llm.as_ref(),
            shared.embedder.as_ref(),
        )
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let citations = citation_views(&engine, &answer);
    let response_contexts = answer.contexts.items.clone();
    let response_text = answer.text.clone();
    let trace = answer.trace.clone();
    let turn = Turn {
        query: body.query,
        mode,
        answer,
        timestamp: now_ms(),
    };
    let index = state
        .0
        .sessions
        .append_turn(&id, turn)
        .map_err(|e| ApiError::internal(e.to_string()))?
        .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
    Ok(Json(MessageResponse {
        session_id: id,
        turn: index,
        mode,
        answer: response_text,
        citations,
        contexts: response_contexts,
        trace,
    }))
}

fn citation_views(engine: &Engine, answer: &litrag_core::Answer) -> Vec<CitationView> {
    answer
        .citations
        .iter()
        .map(|c| CitationView {
            number: c.number,
            doc_id: c.doc_id.clone(),
            chunk_id: c.chunk_id.clone(),
            snippet: engine
                .corpus()
                .chunk(&c.chunk_id)
                .map(|ch| snippet(&ch.text))
                .unwrap_or_default(),
        })
        .collect()
}

fn snippet(text: &str) -> String {
    match text.char_indices().nth(SNIPPET_CHARS) {
        Some((end, _)) => format!("{}…", &text[..end]),
        None => text.to_string(),
    }
}

pub async fn start_eval(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<EvalRequest>,
) -> ApiResult<(StatusCode, Json<EvalAccepted>)> {
    if body.modes.is_empty() {
        return Err(ApiError::unprocessable("no retrieval modes requested"));
    }
    let path = body.testset_path.clone();
    let testset = tokio::task::spawn_blocking(move || TestSet::load(&path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    if !testset.filtered {
        return Err(ApiError::unprocessable(
            "test set is not filtered; apply annotations first",
        ));
    }
    let engine = state.snapshot().ok_or_else(ApiError::no_index)?;
    let modes: BTreeSet<RetrievalMode> = body.modes.into_iter().collect();
    for mode in &modes {
        let missing = (mode.uses_vectors() && engine.vector_index().is_none())
            .then_some("vector")
            .or((mode.uses_graph() && engine.graph().is_none()).then_some("graph"));
        if let Some(kind) = missing {
            return Err(ApiError::conflict(format!(
                "no {kind} index loaded; run an index build first"
            )));
        }
    }
    let run_id = state.submit_eval(testset, modes);
    Ok((StatusCode::ACCEPTED, Json(EvalAccepted { run_id })))
}

/// EvalReport JSON once the run is done (200); the run status while it is
/// pending or running (202); the error body if it failed (500).
pub async fn get_eval(
    State(state): State<AppState>,
    Path(run_id): Path<String>,
) -> ApiResult<Response> {
    match state.eval_status(&run_id) {
        Some(status) if matches!(status.state, JobState::Pending | JobState::Running) => {
            Ok((StatusCode::ACCEPTED, Json(status)).into_response())
        }
        Some(status) if status.state == JobState::Failed => Err(ApiError::internal(format!(
            "evaluation {run_id} failed: {}",
            status.error.unwrap_or_default()
        ))),
        _ => state
            .eval_report(&run_id)
            .map(|r| Json(r).into_response())
            .ok_or_else(|| ApiError::not_found(format!("unknown evaluation run {run_id}"))),
    }
}

/// The run's rendered markdown report.
pub async fn get_eval_markdown(
    State(state): State<AppState>,
    Path(run_id): Path<String>,
) -> ApiResult<Response> {
    let path = state
        .eval_run_dir(&run_id)
        .map(|d| d.join(litrag_core::evaluation::REPORT_MD))
        .ok_or_else(|| ApiError::not_found(format!("unknown evaluation run {run_id}")))?;
    let text = tokio::fs::read_to_string(&path)
        .await
        .map_err(|_| ApiError::not_found(format!("no report for evaluation run {run_id}")))?;
    Ok((
        [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
        text,
    )
        .into_response())
}
