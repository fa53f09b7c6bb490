//! Synthetic question/answer test sets and annotation filtering.
//!
//! A test set file is JSONL with one [`QaItem`] per line next to a
//! `<stem>.meta.json` sidecar. Annotation files are CSV with the header
//! `item_id,context_related,answer_from_context,answer_complete,annotator_id`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concurrency::map_bounded;
use crate::ids::{ChunkId, DocId};
use crate::ingest::{Chunk, Corpus};
use crate::prompts;
use crate::providers::{complete_prompt, Llm, ProviderError};

pub const DEFAULT_SINGLE_PAPER_SIZE: usize = 500;
pub const DEFAULT_MULTI_PAPER_SIZE: usize = 60;
pub const MAX_PARSE_ATTEMPTS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum TestsetError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("corpus has no chunks to sample from")]
    EmptyCorpus,
    #[error("invalid test set request: {0}")]
    InvalidArgument(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed test set file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("annotation refers to unknown item {0:?}")]
    UnknownItem(String),
    #[error("item {0:?} is annotated more than once")]
    Duplicate(String),
    #[error("no annotations given")]
    Empty,
    #[error("invalid verdict {0:?} (expected yes, no or unsure)")]
    InvalidVerdict(String),
    #[error("annotation file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    SinglePaper,
    MultiPaper,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::SinglePaper => "single_paper",
            Scope::MultiPaper => "multi_paper",
        }
    }

    /// Scenario heading used in reports.
    pub fn scenario(self) -> &'static str {
        match self {
            Scope::SinglePaper => "RAG on Single Paper",
            Scope::MultiPaper => "RAG on Database",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "single" | "single_paper" => Ok(Scope::SinglePaper),
            "multi" | "multi_paper" | "database" => Ok(Scope::MultiPaper),
            other => Err(format!(
                "unknown scope {other:?} (expected single or multi)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub item_id: String,
    pub question: String,
    pub answer: String,
    pub context: String,
    pub scope: Scope,
    pub source_doc_ids: BTreeSet<DocId>,
    pub source_chunk_ids: Vec<ChunkId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSet {
    pub items: Vec<QaItem>,
    pub scope: Scope,
    pub generator_model: String,
    pub filtered: bool,
    pub corpus_manifest_hash: String,
    /// Ids removed by filtering, kept so the same annotations can be
    /// re-applied.
    #[serde(default)]
    pub excluded_item_ids: BTreeSet<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TestSetMeta {
    scope: Scope,
    generator_model: String,
    corpus_manifest_hash: String,
    filtered: bool,
    item_count: usize,
    #[serde(default)]
    excluded_item_ids: BTreeSet<String>,
}

/// Sidecar path for a test set file: `dir/name.jsonl` → `dir/name.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "testset".into());
    path.with_file_name(format!("{stem}.meta.json"))
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), TestsetError> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| TestsetError::Io { path: p, source }
        };
        let mut body = String::new();
        for item in &self.items {
            body.push_str(&serde_json::to_string(item).expect("item serializes"));
            body.push('\n');
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(path, body).map_err(io(path))?;
        let meta = TestSetMeta {
            scope: self.scope,
            generator_model: self.generator_model.clone(),
            corpus_manifest_hash: self.corpus_manifest_hash.clone(),
            filtered: self.filtered,
            item_count: self.items.len(),
            excluded_item_ids: self.excluded_item_ids.clone(),
        };
        let mp = meta_path(path);
        fs::write(
            &mp,
            serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n",
        )
        .map_err(io(&mp))
    }

    pub fn load(path: &Path) -> Result<Self, TestsetError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| TestsetError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let malformed = |p: &Path, message: String| TestsetError::Malformed {
            path: p.to_path_buf(),
            message,
        };
        let items = read(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<QaItem>(l)
                    .map_err(|e| malformed(path, format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mp = meta_path(path);
        let meta: TestSetMeta =
            serde_json::from_str(&read(&mp)?).map_err(|e| malformed(&mp, e.to_string()))?;
        if meta.item_count != items.len() {
            return Err(malformed(
                path,
                format!(
                    "{} items but metadata says {}",
                    items.len(),
                    meta.item_count
                ),
            ));
        }
        let set = TestSet {
            items,
            scope: meta.scope,
            generator_model: meta.generator_model,
            filtered: meta.filtered,
            corpus_manifest_hash: meta.corpus_manifest_hash,
            excluded_item_ids: meta.excluded_item_ids,
        };
        set.validate().map_err(|m| malformed(path, m))?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), String> {
        let mut ids = BTreeSet::new();
        for item in &self.items {
            if !ids.insert(&item.item_id) {
                return Err(format!("duplicate item id {}", item.item_id));
            }
            if item.question.trim().is_empty()
                || item.answer.trim().is_empty()
                || item.context.trim().is_empty()
            {
                return Err(format!("item {} has an empty field", item.item_id));
            }
            if item.scope == Scope::SinglePaper && item.source_doc_ids.len() != 1 {
                return Err(format!(
                    "single-paper item {} must have exactly one source document",
                    item.item_id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub n: usize,
    pub scope: Scope,
    /// Required for single-paper sets unless the corpus has one document.
    pub doc_id: Option<DocId>,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl GenerateOptions {
    pub fn new(n: usize, scope: Scope) -> Self {
        Self {
            n,
            scope,
            doc_id: None,
            seed: 0,
            max_in_flight: 4,
        }
    }
}

/// Splits a `QUESTION: ... ANSWER: ...` response.
pub fn parse_qa(response: &str) -> Option<(String, String)> {
    let q_at = response.find("QUESTION:")?;
    let after_q = &response[q_at + "QUESTION:".len()..];
    let a_at = after_q.find("ANSWER:")?;
    let question = after_q[..a_at].trim();
    let answer = after_q[a_at + "ANSWER:".len()..].trim();
    (!question.is_empty() && !answer.is_empty()).then(|| (question.to_string(), answer.to_string()))
}

fn sample_contexts<'c>(
    corpus: &'c Corpus,
    options: &GenerateOptions,
) -> Result<Vec<&'c Chunk>, TestsetError> {
    if corpus.chunks().is_empty() {
        return Err(TestsetError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    match options.scope {
        Scope::SinglePaper => {
            let doc = match &options.doc_id {
                Some(d) => d.clone(),
                None if corpus.documents().len() == 1 => corpus.documents()[0].doc_id.clone(),
                None => {
                    return Err(TestsetError::InvalidArgument(
                        "single-paper generation needs a document when the corpus has several"
                            .into(),
                    ))
                }
            };
            if corpus.document(&doc).is_none() {
                return Err(TestsetError::InvalidArgument(format!(
                    "unknown document {doc}"
                )));
            }
            let mut pool: Vec<&Chunk> =
                corpus.chunks().iter().filter(|c| c.doc_id == doc).collect();
            if pool.is_empty() {
                return Err(TestsetError::EmptyCorpus);
            }
            pool.shuffle(&mut rng);
            Ok((0..options.n).map(|i| pool[i % pool.len()]).collect())
        }
        Scope::MultiPaper => {
            let docs: Vec<Vec<&Chunk>> = corpus
                .documents()
                .iter()
                .map(|d| corpus.chunks_of(&d.doc_id).collect::<Vec<_>>())
                .filter(|c| !c.is_empty())
                .collect();
            Ok((0..options.n)
                .map(|_| {
                    let doc = &docs[rng.random_range(0..docs.len())];
                    doc[rng.random_range(0..doc.len())]
                })
                .collect())
        }
    }
}

/// Samples one chunk per item and asks the LLM for a question/answer pair
/// about it. Unparseable responses are retried up to
/// [`MAX_PARSE_ATTEMPTS`] times, then the slot is skipped with a warning.
/// Items are numbered `q0001`, `q0002`, ... in sampling order.
pub fn generate_testset(
    corpus: &Corpus,
    options: &GenerateOptions,
    llm: &dyn Llm,
) -> Result<TestSet, TestsetError> {
    if options.n == 0 {
        return Err(TestsetError::InvalidArgument("n must be at least 1".into()));
    }
    let contexts = sample_contexts(corpus, options)?;
    let results = map_bounded(
        &contexts,
        options.max_in_flight,
        |slot, chunk| -> Result<_, ProviderError> {
            let prompt = prompts::testset(&chunk.text);
            for _ in 0..MAX_PARSE_ATTEMPTS {
                if let Some(qa) = parse_qa(&complete_prompt(llm, &prompt)?) {
                    return Ok(Some(qa));
                }
            }
            tracing::warn!(slot, chunk = %chunk.chunk_id, "no parseable question after {MAX_PARSE_ATTEMPTS} attempts; skipping");
            Ok(None)
        },
    );
    let mut items = Vec::new();
    for (chunk, result) in contexts.iter().zip(results) {
        if let Some((question, answer)) = result? {
            items.push(QaItem {
                item_id: format!("q{:04}", items.len() + 1),
                question,
                answer,
                context: chunk.text.clone(),
                scope: options.scope,
                source_doc_ids: [chunk.doc_id.clone()].into(),
                source_chunk_ids: vec![chunk.chunk_id.clone()],
            });
        }
    }
    Ok(TestSet {
        items,
        scope: options.scope,
        generator_model: llm.model_id().to_string(),
        filtered: false,
        corpus_manifest_hash: corpus.manifest_hash(),
        excluded_item_ids: BTreeSet::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unsure,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Yes => "yes",
            Verdict::No => "no",
            Verdict::Unsure => "unsure",
        }
    }
}

impl FromStr for Verdict {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(Verdict::Yes),
            "no" => Ok(Verdict::No),
            "unsure" => Ok(Verdict::Unsure),
            _ => Err(AnnotationError::InvalidVerdict(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub item_id: String,
    pub q_context_related: Verdict,
    pub q_answer_from_context: Verdict,
    pub q_answer_complete: Verdict,
    pub annotator_id: String,
}

impl Annotation {
    pub fn all_yes(&self) -> bool {
        [
            self.q_context_related,
            self.q_answer_from_context,
            self.q_answer_complete,
        ]
        .iter()
        .all(|v| *v == Verdict::Yes)
    }
}

const CSV_HEADER: [&str; 5] = [
    "item_id",
    "context_related",
    "answer_from_context",
    "answer_complete",
    "annotator_id",
];

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, AnnotationError> {
    let malformed = |message: String| AnnotationError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => AnnotationError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => malformed(format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(str::to_lowercase)
        .collect();
    if header != CSV_HEADER {
        return Err(malformed(format!(
            "expected header {}",
            CSV_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| malformed(e.to_string()))?;
        if r.len() != 5 {
            return Err(malformed(format!("expected 5 fields, got {}", r.len())));
        }
        out.push(Annotation {
            item_id: r[0].to_string(),
            q_context_related: r[1].parse()?,
            q_answer_from_context: r[2].parse()?,
            q_answer_complete: r[3].parse()?,
            annotator_id: r[4].to_string(),
        });
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<(), AnnotationError> {
    let malformed = |e: csv::Error| AnnotationError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(malformed)?;
    w.write_record(CSV_HEADER).map_err(malformed)?;
    for a in annotations {
        w.write_record([
            a.item_id.as_str(),
            a.q_context_related.as_str(),
            a.q_answer_from_context.as_str(),
            a.q_answer_complete.as_str(),
            a.annotator_id.as_str(),
        ])
        .map_err(malformed)?;
    }
    w.flush().map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Keeps only items whose annotation is yes on all three questions.
/// Unannotated items are removed too.
pub fn apply_annotations(
    testset: &TestSet,
    annotations: &[Annotation],
) -> Result<TestSet, AnnotationError> {
    let known: BTreeSet<&str> = testset
        .items
        .iter()
        .map(|i| i.item_id.as_str())
        .chain(testset.excluded_item_ids.iter().map(String::as_str))
        .collect();
    let mut by_id: BTreeMap<&str, &Annotation> = BTreeMap::new();
    for a in annotations {
        if !known.contains(a.item_id.as_str()) {
            return Err(AnnotationError::UnknownItem(a.item_id.clone()));
        }
        if by_id.insert(a.item_id.as_str(), a).is_some() {
            return Err(AnnotationError::Duplicate(a.item_id.clone()));
        }
    }
    let mut out = testset.clone();
    let (kept, removed): (Vec<QaItem>, Vec<QaItem>) = testset
        .items
        .iter()
        .cloned()
        .partition(|i| by_id.get(i.item_id.as_str()).is_some_and(|a| a.all_yes()));
    out.items = kept;
    out.excluded_item_ids
        .extend(removed.into_iter().map(|i| i.item_id));
    out.filtered = true;
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub yes: usize,
    pub no: usize,
    pub unsure: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Yes => self.yes += 1,
            Verdict::No => self.no += 1,
            Verdict::Unsure => self.unsure += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.yes + self.no + self.unsure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityStats {
    pub total: usize,
    pub context_related: VerdictCounts,
    pub answer_from_context: VerdictCounts,
    pub answer_complete: VerdictCounts,
    pub pct_context_related: f64,
    pub pct_answer_from_context: f64,
    pub pct_answer_complete: f64,
}

pub fn testset_quality_report(annotations: &[Annotation]) -> Result<QualityStats, AnnotationError> {
    if annotations.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let mut stats = QualityStats {
        total: annotations.len(),
        context_related: VerdictCounts::default(),
        answer_from_context: VerdictCounts::default(),
        answer_complete: VerdictCounts::default(),
        pct_context_related: 0.0,
        pct_answer_from_context: 0.0,
        pct_answer_complete: 0.0,
    };
    for a in annotations {
        stats.context_related.add(a.q_context_related);
        stats.answer_from_context.add(a.q_answer_from_context);
        stats.answer_complete.add(a.q_answer_complete);
    }
    let pct = |c: &VerdictCounts| 100.0 * c.yes as f64 / stats.total as f64;
    stats.pct_context_related = pct(&stats.context_related);
    stats.pct_answer_from_context = pct(&stats.answer_from_context);
    stats.pct_answer_complete = pct(&stats.answer_complete);
    Ok(stats)
}

/// `yes / total` as a percentage cut to one decimal, integer arithmetic
/// only. A zero tenth is left off: 460/500 prints `92%`, 49/60 `81.6%`.
pub fn display_pct(yes: usize, total: usize) -> String {
    let tenths = (yes as u128 * 1000) / total.max(1) as u128;
    if tenths.is_multiple_of(10) {
        format!("{}%", tenths / 10)
    } else {
        format!("{}.{}%", tenths / 10, tenths % 10)
    }
}

/// Markdown table in the layout of a test-set quality summary: one row per
/// set, context relevance and answer completeness as columns.
pub fn render_quality_table(rows: &[(&str, &QualityStats)]) -> String {
    let mut out = String::from(
        "| Test set | n | Context related to question | Answer fully addresses question |\n",
    );
    out.push_str("|---|---:|---:|---:|\n");
    for (label, s) in rows {
        out.push_str(&format!(
            "| {label} | {} | {} | {} |\n",
            s.total,
            display_pct(s.context_related.yes, s.total),
            display_pct(s.answer_complete.yes, s.total)
        ));
    }
    out
}

/// Full breakdown of all three annotation questions.
pub fn render_quality_details(stats: &QualityStats) -> String {
    let mut out = format!("annotated items: {}\n", stats.total);
    for (label, c) in [
        ("context related", &stats.context_related),
        ("answer from context", &stats.answer_from_context),
        ("answer complete", &stats.answer_complete),
    ] {
        out.push_str(&format!(
            "{label:<20} yes {:>4}  no {:>4}  unsure {:>4}  ({})\n",
            c.yes,
            c.no,
            c.unsure,
            display_pct(c.yes, stats.total)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{chunk_sentences, Document};
    use crate::providers::mock::{HeuristicLlm, ScriptedLlm};

    fn corpus() -> Corpus {
        let docs: Vec<Document> = ["a", "b", "c"]
            .iter()
            .map(|n| {
                Document::from_text(
                    &format!("{n}.txt"),
                    &format!("Paper {n} studies Atrazine in soil. Residues of Atrazine decline over Summer. Paper {n} ends here."),
                    Default::default(),
                )
                .unwrap()
            })
            .collect();
        let chunks = docs
            .iter()
            .flat_map(|d| chunk_sentences(d).unwrap())
            .collect();
        Corpus::new(docs, chunks).unwrap()
    }

    fn item(id: &str) -> QaItem {
        QaItem {
            item_id: id.into(),
            question: "q?".into(),
            answer: "a".into(),
            context: "c".into(),
            scope: Scope::MultiPaper,
            source_doc_ids: [DocId::from("d")].into(),
            source_chunk_ids: vec![ChunkId::from("d-c0000")],
        }
    }

    fn set(ids: &[&str]) -> TestSet {
        TestSet {
            items: ids.iter().map(|i| item(i)).collect(),
            scope: Scope::MultiPaper,
            generator_model: "m".into(),
            filtered: false,
            corpus_manifest_hash: "h".into(),
            excluded_item_ids: BTreeSet::new(),
        }
    }

    fn ann(id: &str, v: [&str; 3]) -> Annotation {
        Annotation {
            item_id: id.into(),
            q_context_related: v[0].parse().unwrap(),
            q_answer_from_context: v[1].parse().unwrap(),
            q_answer_complete: v[2].parse().unwrap(),
            annotator_id: "sme".into(),
        }
    }

    #[test]
    fn generates_n_items_with_scope() {
        let c = corpus();
        let out = generate_testset(
            &c,
            &GenerateOptions::new(5, Scope::MultiPaper),
            &HeuristicLlm,
        )
        .unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.items.iter().all(|i| i.scope == Scope::MultiPaper
            && !i.question.is_empty()
            && !i.answer.is_empty()));
        assert_eq!(out.items[4].item_id, "q0005");
        assert!(!out.filtered);
    }

    #[test]
    fn single_paper_stays_in_one_doc() {
        let c = corpus();
        let doc = c.documents()[1].doc_id.clone();
        let opts = GenerateOptions {
            doc_id: Some(doc.clone()),
            ..GenerateOptions::new(7, Scope::SinglePaper)
        };
        let out = generate_testset(&c, &opts, &HeuristicLlm).unwrap();
        assert!(out
            .items
            .iter()
            .all(|i| i.source_doc_ids == BTreeSet::from([doc.clone()])));
        let no_doc = GenerateOptions::new(2, Scope::SinglePaper);
        assert!(matches!(
            generate_testset(&c, &no_doc, &HeuristicLlm),
            Err(TestsetError::InvalidArgument(_))
        ));
    }

    #[test]
    fn malformed_then_valid_retries() {
        let c = corpus();
        let llm = ScriptedLlm::new(["I cannot do that", "QUESTION: What?\nANSWER: That."]);
        let out = generate_testset(
            &c,
            &GenerateOptions {
                max_in_flight: 1,
                ..GenerateOptions::new(1, Scope::MultiPaper)
            },
            &llm,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(llm.calls(), 2);
    }

    #[test]
    fn three_failures_skip_the_item() {
        let c = corpus();
        let llm = ScriptedLlm::new(["x", "y", "z", "QUESTION: Q\nANSWER: A"]);
        let opts = GenerateOptions {
            max_in_flight: 1,
            ..GenerateOptions::new(2, Scope::MultiPaper)
        };
        let out = generate_testset(&c, &opts, &llm).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.items[0].item_id, "q0001");
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = generate_testset(
            &Corpus::default(),
            &GenerateOptions::new(1, Scope::MultiPaper),
            &HeuristicLlm,
        );
        assert!(matches!(err, Err(TestsetError::EmptyCorpus)));
    }

    #[test]
    fn four_item_fixture_filters_to_two() {
        let ts = set(&["q1", "q2", "q3", "q4"]);
        let anns = vec![
            ann("q1", ["yes", "yes", "yes"]),
            ann("q2", ["yes", "no", "yes"]),
            ann("q3", ["unsure", "yes", "yes"]),
            ann("q4", ["YES", "Yes", "yes"]),
        ];
        let out = apply_annotations(&ts, &anns).unwrap();
        assert_eq!(
            out.items
                .iter()
                .map(|i| i.item_id.as_str())
                .collect::<Vec<_>>(),
            ["q1", "q4"]
        );
        assert!(out.filtered);
        assert_eq!(apply_annotations(&out, &anns).unwrap(), out);
    }

    #[test]
    fn unknown_and_duplicate_annotations() {
        let ts = set(&["q1"]);
        assert!(matches!(
            apply_annotations(&ts, &[ann("zzz", ["yes"; 3])]),
            Err(AnnotationError::UnknownItem(_))
        ));
        let dup = [ann("q1", ["yes"; 3]), ann("q1", ["no"; 3])];
        assert!(matches!(
            apply_annotations(&ts, &dup),
            Err(AnnotationError::Duplicate(_))
        ));
    }

    #[test]
    fn unannotated_items_are_removed() {
        let out = apply_annotations(&set(&["q1", "q2"]), &[ann("q1", ["yes"; 3])]).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn quality_percentages() {
        let anns = vec![
            ann("a", ["yes", "yes", "no"]),
            ann("b", ["yes", "no", "yes"]),
            ann("c", ["yes", "yes", "yes"]),
            ann("d", ["no", "yes", "unsure"]),
        ];
        let q = testset_quality_report(&anns).unwrap();
        assert_eq!(q.pct_context_related, 75.0);
        assert_eq!(q.pct_answer_complete, 50.0);
        assert_eq!(q.answer_complete.total(), 4);
        assert!(matches!(
            testset_quality_report(&[]),
            Err(AnnotationError::Empty)
        ));
    }

    #[test]
    fn pct_display() {
        assert_eq!(display_pct(471, 500), "94.2%");
        assert_eq!(display_pct(460, 500), "92%");
        assert_eq!(display_pct(49, 60), "81.6%");
        assert_eq!(display_pct(51, 60), "85%");
        assert_eq!(display_pct(3, 4), "75%");
        assert_eq!(display_pct(0, 7), "0%");
    }

    #[test]
    fn csv_round_trip_lowercases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "item_id,context_related,answer_from_context,answer_complete,annotator_id\nq1,YES,No,unsure,sme\n").unwrap();
        let anns = read_annotations(&p).unwrap();
        assert_eq!(anns[0].q_answer_from_context, Verdict::No);
        write_annotations(&p, &anns).unwrap();
        assert!(fs::read_to_string(&p)
            .unwrap()
            .contains("q1,yes,no,unsure,sme"));
        fs::write(&p, "id,a,b,c,d\n").unwrap();
        assert!(read_annotations(&p).is_err());
        fs::write(&p, "item_id,context_related,answer_from_context,answer_complete,annotator_id\nq1,maybe,no,no,x\n").unwrap();
        assert!(matches!(
            read_annotations(&p),
            Err(AnnotationError::InvalidVerdict(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("set.jsonl");
        let ts = apply_annotations(
            &set(&["q1", "q2"]),
            &[ann("q1", ["yes"; 3]), ann("q2", ["no"; 3])],
        )
        .unwrap();
        ts.save(&p).unwrap();
        assert!(dir.path().join("set.meta.json").exists());
        assert_eq!(TestSet::load(&p).unwrap(), ts);
    }
}
