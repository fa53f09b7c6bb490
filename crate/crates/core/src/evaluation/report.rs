//! Markdown rendering of evaluation reports: one table per scenario with
//! modes as rows and metric mean/SD as columns, three decimals.

use super::{EvalReport, MetricStats, ModeStats, SD_CONVENTION};
use crate::engine::RetrievalMode;

pub fn mode_label(mode: RetrievalMode) -> &'static str {
    match mode {
        RetrievalMode::Vector => "VectorRAG",
        RetrievalMode::Graph => "GraphRAG",
        RetrievalMode::Hybrid => "Hybrid RAG",
    }
}

fn cells(stats: Option<&MetricStats>) -> [String; 2] {
    match stats {
        Some(s) => [format!("{:.3}", s.mean), format!("{:.3}", s.sd)],
        None => ["n/a".into(), "n/a".into()],
    }
}

/// The mode table of one report.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::from(
        "| Methods/Metrics | Cosine Similarity Mean | Cosine Similarity SD. | Faithfulness Mean | Faithfulness SD. | n | skipped |\n",
    );
    out.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for (mode, stats) in &report.per_mode {
        let ModeStats {
            cosine,
            faithfulness,
            evaluated,
            skipped,
        } = stats;
        let [cm, cs] = cells(cosine.as_ref());
        let [fm, fs] = cells(faithfulness.as_ref());
        out.push_str(&format!(
            "| {} | {cm} | {cs} | {fm} | {fs} | {evaluated} | {skipped} |\n",
            mode_label(*mode)
        ));
    }
    out
}

/// Full `report.md` for one or more runs, one block per run in the order
/// given.
pub fn render_markdown(reports: &[&EvalReport]) -> String {
    let mut out = String::from("# RAG evaluation\n");
    for r in reports {
        out.push_str(&format!("\n## {}\n\n", r.scope.scenario()));
        out.push_str(&render_table(r));
        out.push_str(&format!(
            "\nrun `{}`, test set `{}`, chat model `{}`, embedding model `{}`, prompts v{}\n",
            r.run_id,
            &r.testset_ref[..r.testset_ref.len().min(12)],
            r.config.chat_model,
            r.config.embed_model,
            r.config.prompts_version
        ));
        if !r.skipped.is_empty() {
            out.push_str(&format!(
                "\n{} item evaluations were skipped:\n\n",
                r.skipped.len()
            ));
            for s in &r.skipped {
                out.push_str(&format!("- {} ({}): {}\n", s.item_id, s.mode, s.reason));
            }
        }
    }
    out.push_str(&format!(
        "\nSD is the {SD_CONVENTION} standard deviation. Scores depend on the chat model, the embedding \
         model, the corpus and the judge prompts, so they are only comparable between runs that share all four.\n"
    ));
    out
}
