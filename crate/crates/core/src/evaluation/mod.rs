//! Answer scoring (embedding cosine similarity and LLM-judged
//! faithfulness), per-mode aggregation and evaluation runs.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use report::{mode_label, render_markdown, render_table};

use crate::concurrency::map_bounded;
use crate::engine::{Engine, EngineConfig, EngineError, RetrievalMode};
use crate::prompts::{self, PROMPTS_VERSION};
use crate::providers::{complete_prompt, embed_texts, Embedder, Llm, ProviderError};
use crate::testset::{Scope, TestSet};
use crate::text::{cosine, sha256_hex};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const ITEMS_JSONL: &str = "items.jsonl";
pub const SD_CONVENTION: &str = "population (divisor n)";

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("metric input text is empty")]
    EmptyText,
    #[error("no contexts to judge against")]
    EmptyContexts,
    #[error("no values to aggregate")]
    Empty,
    #[error("{metric} value {value} is out of range")]
    OutOfRange { metric: Metric, value: f64 },
    #[error("the answer decomposed into zero statements")]
    NoStatements,
    #[error("unparseable judge output: {0}")]
    UnparseableVerdicts(String),
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("test set is not filtered; apply annotations first")]
    NotFiltered,
    #[error("no retrieval modes requested")]
    NoModes,
    #[error(transparent)]
    Engine(EngineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("report is inconsistent: {0}")]
    Inconsistent(String),
    #[error("malformed report file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CosineSimilarity,
    Faithfulness,
}

impl Metric {
    pub fn range(self) -> (f64, f64) {
        match self {
            Metric::CosineSimilarity => (-1.0, 1.0),
            Metric::Faithfulness => (0.0, 1.0),
        }
    }

    pub fn check(self, value: f64) -> Result<f64, MetricError> {
        let (lo, hi) = self.range();
        if value.is_finite() && (lo..=hi).contains(&value) {
            Ok(value)
        } else {
            Err(MetricError::OutOfRange {
                metric: self,
                value,
            })
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::CosineSimilarity => "cosine_similarity",
            Metric::Faithfulness => "faithfulness",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub metric: Metric,
}

/// Mean and population standard deviation via Welford's update.
pub fn aggregate(values: &[f64], metric: Metric) -> Result<MetricStats, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for (i, &v) in values.iter().enumerate() {
        metric.check(v)?;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let n = values.len();
    Ok(MetricStats {
        mean,
        sd: (m2.max(0.0) / n as f64).sqrt(),
        n,
        metric,
    })
}

/// Cosine similarity of the embeddings of the two texts.
pub fn answer_similarity(
    generated: &str,
    ground_truth: &str,
    embedder: &dyn Embedder,
) -> Result<f64, MetricError> {
    if generated.trim().is_empty() || ground_truth.trim().is_empty() {
        return Err(MetricError::EmptyText);
    }
    let v = embed_texts(embedder, &[generated.to_string(), ground_truth.to_string()])?;
    Ok(cosine(&v[0].values, &v[1].values).clamp(-1.0, 1.0))
}

static NUMBERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d+)\s*[.)]\s+(.+?)\s*$").expect("valid regex"));
static VERDICT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(\d+)\s*[.):\-]?\s*[:\-]?\s*\**\s*(UNSUPPORTED|SUPPORTED)\b")
        .expect("valid regex")
});

/// Numbered `n. statement` lines of a decomposition response.
pub fn parse_statements(response: &str) -> Vec<String> {
    response
        .lines()
        .filter_map(|l| NUMBERED.captures(l))
        .map(|c| c[2].to_string())
        .collect()
}

/// One verdict per statement, `true` for SUPPORTED. Every statement number
/// from 1 to `count` must be judged.
pub fn parse_verdicts(response: &str, count: usize) -> Result<Vec<bool>, MetricError> {
    let mut verdicts: BTreeMap<usize, bool> = BTreeMap::new();
    for cap in response.lines().filter_map(|l| VERDICT.captures(l)) {
        let n: usize = cap[1]
            .parse()
            .map_err(|_| MetricError::UnparseableVerdicts(cap[0].to_string()))?;
        verdicts
            .entry(n)
            .or_insert(cap[2].eq_ignore_ascii_case("SUPPORTED"));
    }
    (1..=count)
        .map(|n| {
            verdicts.get(&n).copied().ok_or_else(|| {
                MetricError::UnparseableVerdicts(format!("no verdict for statement {n}"))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessDetail {
    pub score: f64,
    pub statements: Vec<String>,
    pub supported: Vec<bool>,
}

/// Decomposes the answer into statements, then has the judge mark each one
/// as supported or not by the contexts. Two LLM calls.
pub fn faithfulness_detail<S: AsRef<str>>(
    answer: &str,
    contexts: &[S],
    llm: &dyn Llm,
) -> Result<FaithfulnessDetail, MetricError> {
    if answer.trim().is_empty() {
        return Err(MetricError::EmptyText);
    }
    if contexts.iter().all(|c| c.as_ref().trim().is_empty()) {
        return Err(MetricError::EmptyContexts);
    }
    let statements = parse_statements(&complete_prompt(llm, &prompts::statements(answer))?);
    if statements.is_empty() {
        return Err(MetricError::NoStatements);
    }
    let supported = parse_verdicts(
        &complete_prompt(llm, &prompts::judge(contexts, &statements))?,
        statements.len(),
    )?;
    let score = supported.iter().filter(|s| **s).count() as f64 / statements.len() as f64;
    Ok(FaithfulnessDetail {
        score: Metric::Faithfulness.check(score)?,
        statements,
        supported,
    })
}

pub fn faithfulness<S: AsRef<str>>(
    answer: &str,
    contexts: &[S],
    llm: &dyn Llm,
) -> Result<f64, MetricError> {
    faithfulness_detail(answer, contexts, llm).map(|d| d.score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub mode: RetrievalMode,
    pub cosine: f64,
    pub faithfulness: f64,
    pub answer_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub item_id: String,
    pub mode: RetrievalMode,
    pub reason: String,
    pub retryable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub cosine: Option<MetricStats>,
    pub faithfulness: Option<MetricStats>,
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub engine: EngineConfig,
    pub chat_model: String,
    pub embed_model: String,
    pub prompts_version: String,
    pub sd_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub scope: Scope,
    pub testset_ref: String,
    pub config: ConfigSnapshot,
    pub per_mode: BTreeMap<RetrievalMode, ModeStats>,
    pub items: Vec<ItemRecord>,
    pub skipped: Vec<SkippedItem>,
}

/// Hash of the test set content an evaluation ran against.
pub fn testset_ref(testset: &TestSet) -> String {
    sha256_hex(serde_json::to_string(&testset.items).expect("items serialize"))
}

fn mode_stats(
    items: &[ItemRecord],
    skipped: &[SkippedItem],
    mode: RetrievalMode,
) -> Result<ModeStats, MetricError> {
    let rows: Vec<&ItemRecord> = items.iter().filter(|r| r.mode == mode).collect();
    let stats = |f: fn(&ItemRecord) -> f64, metric| {
        let values: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        if values.is_empty() {
            Ok(None)
        } else {
            aggregate(&values, metric).map(Some)
        }
    };
    Ok(ModeStats {
        cosine: stats(|r| r.cosine, Metric::CosineSimilarity)?,
        faithfulness: stats(|r| r.faithfulness, Metric::Faithfulness)?,
        evaluated: rows.len(),
        skipped: skipped.iter().filter(|s| s.mode == mode).count(),
    })
}

impl EvalReport {
    /// Sorts records by `(mode, item_id)` and aggregates every mode that
    /// has records or skips.
    pub fn from_records(
        run_id: impl Into<String>,
        scope: Scope,
        testset_ref: impl Into<String>,
        config: ConfigSnapshot,
        modes: &BTreeSet<RetrievalMode>,
        mut items: Vec<ItemRecord>,
        mut skipped: Vec<SkippedItem>,
    ) -> Result<Self, MetricError> {
        items.sort_by(|a, b| (a.mode, &a.item_id).cmp(&(b.mode, &b.item_id)));
        skipped.sort_by(|a, b| (a.mode, &a.item_id).cmp(&(b.mode, &b.item_id)));
        let mut per_mode = BTreeMap::new();
        let all: BTreeSet<RetrievalMode> = modes
            .iter()
            .copied()
            .chain(items.iter().map(|r| r.mode))
            .chain(skipped.iter().map(|s| s.mode))
            .collect();
        for mode in all {
            per_mode.insert(mode, mode_stats(&items, &skipped, mode)?);
        }
        Ok(Self {
            run_id: run_id.into(),
            scope,
            testset_ref: testset_ref.into(),
            config,
            per_mode,
            items,
            skipped,
        })
    }

    /// Recomputes the aggregates from the item records.
    pub fn check_consistency(&self) -> Result<(), EvalError> {
        for (mode, stats) in &self.per_mode {
            let again = mode_stats(&self.items, &self.skipped, *mode)?;
            if &again != stats {
                return Err(EvalError::Inconsistent(format!(
                    "{mode} statistics do not match the item records"
                )));
            }
        }
        if let Some(r) = self
            .items
            .iter()
            .find(|r| !self.per_mode.contains_key(&r.mode))
        {
            return Err(EvalError::Inconsistent(format!(
                "records for {} have no aggregate",
                r.mode
            )));
        }
        for r in &self.items {
            Metric::CosineSimilarity.check(r.cosine)?;
            Metric::Faithfulness.check(r.faithfulness)?;
        }
        Ok(())
    }

    /// Writes `report.json`, `report.md` and `items.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), EvalError> {
        let io = |path: PathBuf| move |source| EvalError::Io { path, source };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(dir.join(REPORT_JSON), json + "\n").map_err(io(dir.join(REPORT_JSON)))?;
        fs::write(dir.join(REPORT_MD), render_markdown(&[self]))
            .map_err(io(dir.join(REPORT_MD)))?;
        let mut lines = String::new();
        for r in &self.items {
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        fs::write(dir.join(ITEMS_JSONL), lines).map_err(io(dir.join(ITEMS_JSONL)))
    }

    pub fn load(dir: &Path) -> Result<Self, EvalError> {
        let path = dir.join(REPORT_JSON);
        let text = fs::read_to_string(&path).map_err(|source| EvalError::Io {
            path: path.clone(),
            source,
        })?;
        let report: EvalReport = serde_json::from_str(&text).map_err(|e| EvalError::Malformed {
            path,
            message: e.to_string(),
        })?;
        report.check_consistency()?;
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub engine: EngineConfig,
    pub max_in_flight: usize,
    /// Overrides the derived run id.
    pub run_id: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            max_in_flight: 4,
            run_id: None,
        }
    }
}

/// Deterministic run id from the test set, modes and configuration.
pub fn derive_run_id(
    testset_ref: &str,
    modes: &BTreeSet<RetrievalMode>,
    config: &ConfigSnapshot,
) -> String {
    let modes: Vec<&str> = modes.iter().map(|m| m.as_str()).collect();
    let key = format!(
        "{testset_ref}\n{}\n{}",
        modes.join(","),
        serde_json::to_string(config).expect("config serializes")
    );
    format!("run-{}", &sha256_hex(key)[..12])
}

/// Answers every item in every mode and scores the answers. Single-paper
/// items are answered with retrieval restricted to their source document.
/// Items whose provider calls fail, or whose metrics cannot be computed,
/// are recorded as skipped and the run continues.
pub fn run_evaluation(
    engine: &Engine,
    testset: &TestSet,
    modes: &BTreeSet<RetrievalMode>,
    config: &EvalConfig,
    llm: &dyn Llm,
    embedder: &dyn Embedder,
) -> Result<EvalReport, EvalError> {
    if !testset.filtered {
        return Err(EvalError::NotFiltered);
    }
    if modes.is_empty() {
        return Err(EvalError::NoModes);
    }
    config.engine.validate().map_err(EvalError::Engine)?;
    let tasks: Vec<(RetrievalMode, usize)> = modes
        .iter()
        .flat_map(|m| (0..testset.items.len()).map(move |i| (*m, i)))
        .collect();

    enum Outcome {
        Scored(ItemRecord),
        Skipped(SkippedItem),
        Fatal(EngineError),
    }

    let outcomes = map_bounded(&tasks, config.max_in_flight, |_, &(mode, i)| {
        let item = &testset.items[i];
        let mut engine_config = config.engine.clone();
        if testset.scope == Scope::SinglePaper {
            engine_config.doc_filter = Some(item.source_doc_ids.clone());
        }
        let skip = |reason: String, retryable: bool| {
            tracing::warn!(item = %item.item_id, %mode, "skipping: {reason}");
            Outcome::Skipped(SkippedItem {
                item_id: item.item_id.clone(),
                mode,
                reason,
                retryable,
            })
        };
        let answer = match engine.answer_query(&item.question, mode, &engine_config, llm, embedder)
        {
            Ok(a) => a,
            Err(EngineError::Provider(e)) => return skip(e.to_string(), e.retryable()),
            Err(e) => return Outcome::Fatal(e),
        };
        let scored = answer_similarity(&answer.text, &item.answer, embedder).and_then(|cos| {
            faithfulness(&answer.text, &answer.contexts.texts(), llm).map(|f| (cos, f))
        });
        match scored {
            Ok((cosine, faithfulness)) => Outcome::Scored(ItemRecord {
                item_id: item.item_id.clone(),
                mode,
                cosine,
                faithfulness,
                answer_text: answer.text,
            }),
            Err(MetricError::Provider(e)) => skip(e.to_string(), e.retryable()),
            Err(e) => skip(e.to_string(), false),
        }
    });

    let mut items = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Scored(r) => items.push(r),
            Outcome::Skipped(s) => skipped.push(s),
            Outcome::Fatal(e) => return Err(EvalError::Engine(e)),
        }
    }
    let snapshot = ConfigSnapshot {
        engine: config.engine.clone(),
        chat_model: llm.model_id().to_string(),
        embed_model: embedder.model_id().to_string(),
        prompts_version: PROMPTS_VERSION.to_string(),
        sd_convention: SD_CONVENTION.to_string(),
    };
    let reference = testset_ref(testset);
    let run_id = config
        .run_id
        .clone()
        .unwrap_or_else(|| derive_run_id(&reference, modes, &snapshot));
    Ok(EvalReport::from_records(
        run_id,
        testset.scope,
        reference,
        snapshot,
        modes,
        items,
        skipped,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{FnEmbedder, MockEmbedder, ScriptedLlm};

    #[test]
    fn aggregate_small_cases() {
        let s = aggregate(&[0.5], Metric::Faithfulness).unwrap();
        assert_eq!((s.mean, s.sd, s.n), (0.5, 0.0, 1));
        let s = aggregate(&[0.0, 1.0], Metric::Faithfulness).unwrap();
        assert_eq!((s.mean, s.sd), (0.5, 0.5));
        assert!(matches!(
            aggregate(&[1.5], Metric::Faithfulness),
            Err(MetricError::OutOfRange { .. })
        ));
        assert!(aggregate(&[-0.5], Metric::CosineSimilarity).is_ok());
        assert!(matches!(
            aggregate(&[], Metric::CosineSimilarity),
            Err(MetricError::Empty)
        ));
    }

    #[test]
    fn similarity_cases() {
        let e = MockEmbedder::new(32, 1);
        assert!((answer_similarity("same text", "same text", &e).unwrap() - 1.0).abs() < 1e-6);
        let axes = FnEmbedder::new(2, |t| {
            if t == "x" {
                vec![1.0, 0.0]
            } else if t == "y" {
                vec![0.0, 1.0]
            } else {
                vec![1.0, 1.0]
            }
        });
        assert!(answer_similarity("x", "y", &axes).unwrap().abs() < 1e-6);
        assert!(
            (answer_similarity("x", "xy", &axes).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs()
                < 1e-6
        );
        assert!(matches!(
            answer_similarity("", "y", &axes),
            Err(MetricError::EmptyText)
        ));
    }

    #[test]
    fn faithfulness_ratios() {
        let llm = ScriptedLlm::new(["1. A.\n2. B.", "1. SUPPORTED\n2. SUPPORTED"]);
        assert_eq!(faithfulness("A. B.", &["ctx"], &llm).unwrap(), 1.0);
        let llm = ScriptedLlm::new(["1. A.\n2. B.", "1. SUPPORTED\n2. UNSUPPORTED"]);
        assert_eq!(faithfulness("A. B.", &["ctx"], &llm).unwrap(), 0.5);
        assert_eq!(llm.calls(), 2);
        let llm = ScriptedLlm::new(["NONE"]);
        assert!(matches!(
            faithfulness("A.", &["ctx"], &llm),
            Err(MetricError::NoStatements)
        ));
        let llm = ScriptedLlm::new(["1. A.\n2. B.", "1. SUPPORTED"]);
        assert!(matches!(
            faithfulness("A.", &["ctx"], &llm),
            Err(MetricError::UnparseableVerdicts(_))
        ));
    }

    #[test]
    fn verdict_parsing_variants() {
        assert_eq!(
            parse_verdicts("1. supported\n2) UNSUPPORTED\n3: **SUPPORTED**", 3).unwrap(),
            [true, false, true]
        );
        assert_eq!(
            parse_statements("Here:\n1. One.\n2) Two.\nnot numbered"),
            ["One.", "Two."]
        );
    }
}
