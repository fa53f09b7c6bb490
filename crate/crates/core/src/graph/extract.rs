use super::Triplet;
use crate::ingest::Chunk;
use crate::prompts;
use crate::providers::{complete_prompt, Llm, ProviderError};
use crate::text::surface_form;

/// Parsed extraction for one chunk.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extraction {
    pub triplets: Vec<Triplet>,
    /// Set when the response held no well-formed triplet line.
    pub warning: Option<String>,
}

/// Parses one `(subject | relation | object)` line. Anything else, including
/// lines with empty parts or extra separators, yields `None`.
pub fn parse_triplet_line(line: &str) -> Option<(String, String, String)> {
    let inner = line.trim().strip_prefix('(')?.strip_suffix(')')?;
    let parts: Vec<String> = inner.split('|').map(surface_form).collect();
    match parts.as_slice() {
        [s, r, o] if !s.is_empty() && !r.is_empty() && !o.is_empty() => {
            Some((s.clone(), r.clone(), o.clone()))
        }
        _ => None,
    }
}

/// Keeps the first `max_paths` well-formed lines of `response`.
pub fn parse_triplets(response: &str, chunk: &Chunk, max_paths: usize) -> Extraction {
    let triplets: Vec<Triplet> = response
        .lines()
        .filter_map(parse_triplet_line)
        .take(max_paths)
        .map(|(subject, relation, object)| Triplet {
            subject,
            relation,
            object,
            chunk_id: chunk.chunk_id.clone(),
            doc_id: chunk.doc_id.clone(),
        })
        .collect();
    let warning = triplets
        .is_empty()
        .then(|| "extraction response contained no triplet lines".to_string());
    Extraction { triplets, warning }
}

pub fn extract_triplets(
    chunk: &Chunk,
    max_paths: usize,
    llm: &dyn Llm,
) -> Result<Extraction, ProviderError> {
    if max_paths == 0 {
        return Err(ProviderError::InvalidRequest(
            "max_paths must be at least 1".into(),
        ));
    }
    let response = complete_prompt(llm, &prompts::extraction(&chunk.text, max_paths))?;
    Ok(parse_triplets(&response, chunk, max_paths))
}
