//! Prompt templates. The text lives under `prompts/` and is compiled in;
//! bump [`PROMPTS_VERSION`] whenever any template changes.

use std::collections::HashMap;

pub const PROMPTS_VERSION: &str = "1";

pub const EXTRACTION: &str = include_str!("../prompts/extraction.txt");
pub const SYNONYMS: &str = include_str!("../prompts/synonyms.txt");
pub const VECTOR_ANSWER: &str = include_str!("../prompts/vector_answer.txt");
pub const GRAPH_ANSWER: &str = include_str!("../prompts/graph_answer.txt");
pub const HYBRID_ANSWER: &str = include_str!("../prompts/hybrid_answer.txt");
pub const STATEMENTS: &str = include_str!("../prompts/statements.txt");
pub const JUDGE: &str = include_str!("../prompts/judge.txt");
pub const TESTSET: &str = include_str!("../prompts/testset.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Extraction,
    Synonyms,
    VectorAnswer,
    GraphAnswer,
    HybridAnswer,
    Statements,
    Judge,
    Testset,
}

impl PromptKind {
    pub const ALL: [PromptKind; 8] = [
        PromptKind::Extraction,
        PromptKind::Synonyms,
        PromptKind::VectorAnswer,
        PromptKind::GraphAnswer,
        PromptKind::HybridAnswer,
        PromptKind::Statements,
        PromptKind::Judge,
        PromptKind::Testset,
    ];

    pub fn template(self) -> &'static str {
        match self {
            PromptKind::Extraction => EXTRACTION,
            PromptKind::Synonyms => SYNONYMS,
            PromptKind::VectorAnswer => VECTOR_ANSWER,
            PromptKind::GraphAnswer => GRAPH_ANSWER,
            PromptKind::HybridAnswer => HYBRID_ANSWER,
            PromptKind::Statements => STATEMENTS,
            PromptKind::Judge => JUDGE,
            PromptKind::Testset => TESTSET,
        }
    }

    fn heading(self) -> &'static str {
        self.template().lines().next().unwrap_or_default()
    }

    /// Identifies a rendered prompt by its first line.
    pub fn detect(prompt: &str) -> Option<PromptKind> {
        let first = prompt.lines().next()?;
        Self::ALL.into_iter().find(|k| k.heading() == first)
    }
}

/// Single-pass `{name}` substitution; substituted text is never rescanned.
pub fn fill(template: &str, values: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if values.contains_key(&after[..close]) => {
                out.push_str(&values[&after[..close]]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn render(kind: PromptKind, pairs: &[(&'static str, String)]) -> String {
    let values: HashMap<&str, String> = pairs.iter().cloned().collect();
    fill(kind.template(), &values).trim_end().to_string()
}

pub fn extraction(text: &str, max_paths: usize) -> String {
    render(
        PromptKind::Extraction,
        &[
            ("text", text.to_string()),
            ("max_paths", max_paths.to_string()),
        ],
    )
}

pub fn synonyms(query: &str, max_synonyms: usize) -> String {
    render(
        PromptKind::Synonyms,
        &[
            ("query", query.to_string()),
            ("max_synonyms", max_synonyms.to_string()),
        ],
    )
}

/// Passages rendered as `[n] text`, blank-line separated, numbered from 1.
pub fn number_passages<S: AsRef<str>>(passages: &[S]) -> String {
    if passages.is_empty() {
        return "(none)".into();
    }
    passages
        .iter()
        .enumerate()
        .map(|(i, p)| format!("[{}] {}", i + 1, p.as_ref()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn vector_answer<S: AsRef<str>>(passages: &[S], query: &str) -> String {
    render(
        PromptKind::VectorAnswer,
        &[
            ("passages", number_passages(passages)),
            ("query", query.to_string()),
        ],
    )
}

fn triplet_lines<S: AsRef<str>>(triplets: &[S]) -> String {
    if triplets.is_empty() {
        return "(none)".into();
    }
    triplets
        .iter()
        .map(|t| format!("- {}", t.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn graph_answer<S: AsRef<str>, P: AsRef<str>>(
    triplets: &[S],
    passages: &[P],
    query: &str,
) -> String {
    render(
        PromptKind::GraphAnswer,
        &[
            ("triplets", triplet_lines(triplets)),
            ("passages", number_passages(passages)),
            ("query", query.to_string()),
        ],
    )
}

pub fn hybrid_answer<S: AsRef<str>, P: AsRef<str>>(
    triplets: &[S],
    passages: &[P],
    query: &str,
) -> String {
    render(
        PromptKind::HybridAnswer,
        &[
            ("triplets", triplet_lines(triplets)),
            ("passages", number_passages(passages)),
            ("query", query.to_string()),
        ],
    )
}

pub fn statements(answer: &str) -> String {
    render(PromptKind::Statements, &[("answer", answer.to_string())])
}

pub fn judge<S: AsRef<str>>(contexts: &[S], statements: &[String]) -> String {
    let contexts = contexts
        .iter()
        .map(|c| c.as_ref())
        .collect::<Vec<_>>()
        .join("\n\n");
    let statements = statements
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        PromptKind::Judge,
        &[("contexts", contexts), ("statements", statements)],
    )
}

pub fn testset(context: &str) -> String {
    render(PromptKind::Testset, &[("context", context.to_string())])
}

/// Body of a labelled section (`LABEL:` alone on a line) up to the next
/// section label or the end of the prompt.
pub fn section<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    let marker = format!("\n{label}\n");
    let start = prompt.find(&marker)? + marker.len();
    let rest = &prompt[start..];
    let end = SECTION_LABELS
        .iter()
        .filter_map(|l| rest.find(&format!("\n\n{l}\n")))
        .min()
        .unwrap_or(rest.len());
    Some(rest[..end].trim())
}

const SECTION_LABELS: &[&str] = &[
    "TEXT:",
    "QUESTION:",
    "SOURCE PASSAGES:",
    "TRIPLETS:",
    "ANSWER:",
    "CONTEXT:",
    "STATEMENTS:",
];
