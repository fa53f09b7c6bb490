//! Shared service state: the working corpus, the published engine snapshot,
//! background job workers and the session store.
//!
//! Queries clone the current `Arc<Engine>` and never wait for a build; a
//! finished build replaces the snapshot in one swap. Build and evaluation
//! jobs each run on a single worker thread, so jobs of one kind are
//! serialized.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock, Weak};

use litrag_core::evaluation::{run_evaluation, EvalConfig, EvalReport};
use litrag_core::testset::TestSet;
use litrag_core::workspace::{
    build_indexes, open_engine, remove_index_files, BuildOptions, BuildSummary, Providers,
};
use litrag_core::{ChunkingConfig, Corpus, Embedder, Engine, EngineConfig, Llm, RetrievalMode};
use serde::{Deserialize, Serialize};

use crate::sessions::SessionStore;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Service settings. `index_dir` holds the corpus and indexes of the last
/// completed build; `state_dir` holds the working corpus, sessions and
/// evaluation reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub index_dir: PathBuf,
    pub state_dir: PathBuf,
    pub bind: String,
    pub cors_origin: Option<String>,
    pub chunking: ChunkingConfig,
    pub build: BuildOptions,
    pub engine: EngineConfig,
    pub max_in_flight: usize,
}

impl ServiceConfig {
    pub fn new(index_dir: impl Into<PathBuf>, state_dir: impl Into<PathBuf>) -> Self {
        Self {
            index_dir: index_dir.into(),
            state_dir: state_dir.into(),
            bind: DEFAULT_BIND.into(),
            cors_origin: None,
            chunking: ChunkingConfig::default(),
            build: BuildOptions::default(),
            engine: EngineConfig::default(),
            max_in_flight: 4,
        }
    }

    /// Applies `LITRAG_BIND` and `LITRAG_CORS_ORIGIN` when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(bind) = std::env::var("LITRAG_BIND") {
            self.bind = bind;
        }
        if let Ok(origin) = std::env::var("LITRAG_CORS_ORIGIN") {
            self.cors_origin = Some(origin);
        }
        self
    }

    pub fn working_corpus_dir(&self) -> PathBuf {
        self.state_dir.join("corpus")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.state_dir.join("sessions")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.state_dir.join("eval")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub state: JobState,
    /// Fraction of the requested indexes built, 0 to 1.
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<BuildSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStatus {
    pub run_id: String,
    pub state: JobState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct BuildRequest {
    job_id: String,
    vector: bool,
    graph: bool,
}

struct EvalRequest {
    run_id: String,
    testset: TestSet,
    modes: BTreeSet<RetrievalMode>,
}

pub(crate) struct Shared {
    pub config: ServiceConfig,
    pub llm: Arc<dyn Llm>,
    pub embedder: Arc<dyn Embedder>,
    pub corpus: Mutex<Corpus>,
    snapshot: RwLock<Option<Arc<Engine>>>,
    jobs: Mutex<BTreeMap<String, JobStatus>>,
    evals: Mutex<BTreeMap<String, EvalStatus>>,
    next_job: AtomicU64,
    build_tx: Mutex<mpsc::Sender<BuildRequest>>,
    eval_tx: Mutex<mpsc::Sender<EvalRequest>>,
    pub sessions: SessionStore,
}

/// Cheaply cloneable handle to the service state.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Shared>);

impl AppState {
    /// Loads the last build from `index_dir` (if any), the working corpus
    /// and the session logs, and starts the job workers.
    pub fn open(config: ServiceConfig, providers: Providers) -> io::Result<Self> {
        let (llm, embedder) = providers;
        let snapshot = if Corpus::exists(&config.index_dir) {
            let engine = open_engine(&config.index_dir).map_err(io::Error::other)?;
            let built = engine.vector_index().is_some() || engine.graph().is_some();
            built.then(|| Arc::new(engine))
        } else {
            None
        };
        let working = config.working_corpus_dir();
        let corpus = if Corpus::exists(&working) {
            Corpus::load(&working).map_err(io::Error::other)?
        } else if Corpus::exists(&config.index_dir) {
            Corpus::load(&config.index_dir).map_err(io::Error::other)?
        } else {
            Corpus::default()
        };
        let sessions = SessionStore::open(&config.sessions_dir())?;
        let (build_tx, build_rx) = mpsc::channel();
        let (eval_tx, eval_rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            config,
            llm,
            embedder,
            corpus: Mutex::new(corpus),
            snapshot: RwLock::new(snapshot),
            jobs: Mutex::new(BTreeMap::new()),
            evals: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            build_tx: Mutex::new(build_tx),
            eval_tx: Mutex::new(eval_tx),
            sessions,
        });
        spawn_worker("litrag-build", Arc::downgrade(&shared), build_rx, run_build);
        spawn_worker("litrag-eval", Arc::downgrade(&shared), eval_rx, run_eval);
        Ok(AppState(shared))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    /// The last completed build, if any.
    pub fn snapshot(&self) -> Option<Arc<Engine>> {
        self.0.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn job(&self, id: &str) -> Option<JobStatus> {
        self.0.jobs.lock().expect("job lock").get(id).cloned()
    }

    pub fn submit_build(&self, vector: bool, graph: bool) -> String {
        let job_id = format!("job-{:04}", self.0.next_job.fetch_add(1, Ordering::Relaxed));
        let status = JobStatus {
            job_id: job_id.clone(),
            state: JobState::Pending,
            progress: 0.0,
            error: None,
            summary: None,
        };
        self.0
            .jobs
            .lock()
            .expect("job lock")
            .insert(job_id.clone(), status);
        let request = BuildRequest {
            job_id: job_id.clone(),
            vector,
            graph,
        };
        if self
            .0
            .build_tx
            .lock()
            .expect("queue lock")
            .send(request)
            .is_err()
        {
            self.0
                .update_job(&job_id, |j| fail(j, "build worker is not running".into()));
        }
        job_id
    }

    pub fn eval_status(&self, run_id: &str) -> Option<EvalStatus> {
        self.0.evals.lock().expect("eval lock").get(run_id).cloned()
    }

    /// Report of a finished run, read from the state directory so reports
    /// survive restarts.
    pub fn eval_report(&self, run_id: &str) -> Option<EvalReport> {
        let dir = self.eval_run_dir(run_id)?;
        EvalReport::load(&dir).ok()
    }

    pub fn eval_run_dir(&self, run_id: &str) -> Option<PathBuf> {
        let safe = !run_id.is_empty()
            && run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        safe.then(|| self.0.config.eval_dir().join(run_id))
    }

    pub fn submit_eval(&self, testset: TestSet, modes: BTreeSet<RetrievalMode>) -> String {
        let run_id = format!("run-{}", &uuid::Uuid::new_v4().simple().to_string()[..12]);
        let status = EvalStatus {
            run_id: run_id.clone(),
            state: JobState::Pending,
            error: None,
        };
        self.0
            .evals
            .lock()
            .expect("eval lock")
            .insert(run_id.clone(), status);
        let request = EvalRequest {
            run_id: run_id.clone(),
            testset,
            modes,
        };
        if self
            .0
            .eval_tx
            .lock()
            .expect("queue lock")
            .send(request)
            .is_err()
        {
            self.0.update_eval(
                &run_id,
                JobState::Failed,
                Some("evaluation worker is not running".into()),
            );
        }
        run_id
    }
}

fn fail(job: &mut JobStatus, message: String) {
    job.state = JobState::Failed;
    job.error = Some(message);
}

fn spawn_worker<R: Send + 'static>(
    name: &str,
    shared: Weak<Shared>,
    rx: mpsc::Receiver<R>,
    run: fn(&Shared, R),
) {
    std::thread::Builder::new()
        .name(name.into())
        .spawn(move || {
            while let Ok(request) = rx.recv() {
                let Some(shared) = shared.upgrade() else {
                    break;
                };
                run(&shared, request);
            }
        })
        .expect("spawn worker thread");
}

impl Shared {
    fn update_job(&self, id: &str, f: impl FnOnce(&mut JobStatus)) {
        if let Some(job) = self.jobs.lock().expect("job lock").get_mut(id) {
            f(job);
        }
    }

    fn update_eval(&self, id: &str, state: JobState, error: Option<String>) {
        if let Some(run) = self.evals.lock().expect("eval lock").get_mut(id) {
            run.state = state;
            run.error = error;
        }
    }

    fn publish(&self, engine: Engine) {
        *self.snapshot.write().expect("snapshot lock") = Some(Arc::new(engine));
    }

    fn current(&self) -> Option<Arc<Engine>> {
        self.snapshot.read().expect("snapshot lock").clone()
    }
}

fn run_build(shared: &Shared, request: BuildRequest) {
    let id = request.job_id.clone();
    shared.update_job(&id, |j| j.state = JobState::Running);
    match build(shared, &request) {
        Ok(summary) => shared.update_job(&id, |j| {
            j.state = JobState::Done;
            j.progress = 1.0;
            j.summary = Some(summary);
        }),
        Err(message) => {
            tracing::warn!(job = %id, "build failed: {message}");
            shared.update_job(&id, |j| fail(j, message));
        }
    }
}

/// Builds the requested indexes over a copy of the working corpus. Indexes
/// that were not requested are carried over from the previous snapshot only
/// when it was built from the same corpus.
fn build(shared: &Shared, request: &BuildRequest) -> Result<BuildSummary, String> {
    let corpus = shared.corpus.lock().expect("corpus lock").clone();
    if corpus.is_empty() {
        return Err("corpus is empty; upload documents first".into());
    }
    let dir = &shared.config.index_dir;
    let steps = usize::from(request.vector) + usize::from(request.graph);
    let mut done = 0;
    let mut run_step = |vector: bool, graph: bool| {
        let options = BuildOptions {
            vector,
            graph,
            ..shared.config.build.clone()
        };
        let built = build_indexes(
            dir,
            &corpus,
            &options,
            shared.llm.as_ref(),
            shared.embedder.as_ref(),
        )
        .map_err(|e| e.to_string())?;
        done += 1;
        shared.update_job(&request.job_id, |j| j.progress = done as f64 / steps as f64);
        Ok::<_, String>(built)
    };
    let mut summary = BuildSummary {
        chunks: corpus.chunks().len(),
        ..Default::default()
    };
    let vector = if request.vector {
        let (s, v, _) = run_step(true, false)?;
        summary.vector_entries = s.vector_entries;
        v
    } else {
        None
    };
    let graph = if request.graph {
        let (s, _, g) = run_step(false, true)?;
        summary.graph_nodes = s.graph_nodes;
        summary.graph_edges = s.graph_edges;
        summary.extraction_warnings = s.extraction_warnings;
        g
    } else {
        None
    };
    let previous = shared
        .current()
        .filter(|e| e.corpus().manifest_hash() == corpus.manifest_hash());
    let vector = vector.or_else(|| previous.as_ref().and_then(|e| e.vector_index().cloned()));
    let graph = graph.or_else(|| previous.as_ref().and_then(|e| e.graph().cloned()));
    remove_index_files(dir, vector.is_none(), graph.is_none()).map_err(|e| e.to_string())?;
    corpus.save(dir).map_err(|e| e.to_string())?;
    shared.publish(Engine::new(corpus, vector, graph));
    Ok(summary)
}

fn run_eval(shared: &Shared, request: EvalRequest) {
    let id = request.run_id.clone();
    shared.update_eval(&id, JobState::Running, None);
    match evaluate(shared, request) {
        Ok(()) => shared.update_eval(&id, JobState::Done, None),
        Err(message) => {
            tracing::warn!(run = %id, "evaluation failed: {message}");
            shared.update_eval(&id, JobState::Failed, Some(message));
        }
    }
}

fn evaluate(shared: &Shared, request: EvalRequest) -> Result<(), String> {
    let engine = shared.current().ok_or("no index built yet")?;
    let config = EvalConfig {
        engine: shared.config.engine.clone(),
        max_in_flight: shared.config.max_in_flight,
        run_id: Some(request.run_id.clone()),
    };
    let report = run_evaluation(
        &engine,
        &request.testset,
        &request.modes,
        &config,
        shared.llm.as_ref(),
        shared.embedder.as_ref(),
    )
    .map_err(|e| e.to_string())?;
    report
        .save(&shared.config.eval_dir().join(&request.run_id))
        .map_err(|e| e.to_string())
}

/// Persists the working corpus after an upload.
pub(crate) fn save_working_corpus(
    config: &ServiceConfig,
    corpus: &Corpus,
) -> Result<(), litrag_core::IngestError> {
    corpus.save(&config.working_corpus_dir())
}
