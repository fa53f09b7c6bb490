//! Command implementations. Each prints a human summary, or one JSON
//! document with `--json`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use litrag_core::evaluation::{
    render_markdown, run_evaluation, EvalConfig, EvalReport, REPORT_JSON,
};
use litrag_core::graph::PropertyGraph;
use litrag_core::ingest::load_corpus;
use litrag_core::testset::{
    apply_annotations, generate_testset, read_annotations, render_quality_table,
    testset_quality_report, GenerateOptions, TestSet,
};
use litrag_core::vector_index::VectorIndex;
use litrag_core::workspace::{
    build_indexes, load_corpus_from, make_providers, open_engine, remove_index_files, Providers,
};
use litrag_core::{Answer, Corpus, EngineError, RetrievalMode};
use serde::Serialize;
use serde_json::json;

use crate::config::CliConfig;
use crate::error::{pipeline, CliError};
use crate::{Command, ConfigCommand, EvalCommand, IndexCommand, TestsetCommand};

struct Ctx<'a> {
    config: &'a CliConfig,
    json: bool,
}

impl Ctx<'_> {
    fn providers(&self) -> Result<Providers, CliError> {
        make_providers(&self.config.provider).map_err(pipeline)
    }

    /// Prints `value` as JSON, or `human` otherwise.
    fn emit(&self, value: &impl Serialize, human: impl FnOnce() -> String) {
        if self.json {
            println!(
                "{}",
                serde_json::to_string_pretty(value).expect("output serializes")
            );
        } else {
            let text = human();
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }
}

pub fn run(command: Command, config: &CliConfig, json: bool) -> Result<(), CliError> {
    let ctx = Ctx { config, json };
    match command {
        Command::Ingest { dir, force } => ingest(&ctx, dir, force),
        Command::Index(IndexCommand::Build { modes, force }) => index_build(&ctx, &modes, force),
        Command::Index(IndexCommand::Status) => index_status(&ctx),
        Command::Query {
            query,
            mode,
            doc,
            top_k,
        } => {
            let mut engine_config = config.engine.clone();
            if let Some(doc) = doc {
                engine_config = engine_config.single_doc(doc);
            }
            if let Some(k) = top_k {
                engine_config.top_k = k;
            }
            query_cmd(&ctx, &query, mode, &engine_config)
        }
        Command::Testset(TestsetCommand::Generate {
            scope,
            n,
            out,
            doc,
            seed,
            force,
        }) => {
            refuse_overwrite(&out, force)?;
            let corpus = load_corpus_from(&config.index_dir).map_err(pipeline)?;
            let (llm, _) = ctx.providers()?;
            let options = GenerateOptions {
                n,
                scope,
                doc_id: doc,
                seed,
                max_in_flight: config.max_in_flight(),
            };
            let set = generate_testset(&corpus, &options, llm.as_ref()).map_err(pipeline)?;
            set.save(&out).map_err(pipeline)?;
            ctx.emit(
                &json!({"path": out, "items": set.len(), "scope": scope}),
                || format!("wrote {} {scope} items to {}", set.len(), out.display()),
            );
            Ok(())
        }
        Command::Testset(TestsetCommand::Filter {
            input,
            annotations,
            out,
        }) => {
            let set = TestSet::load(&input).map_err(pipeline)?;
            let sheet = read_annotations(&annotations).map_err(pipeline)?;
            let filtered = apply_annotations(&set, &sheet).map_err(pipeline)?;
            filtered.save(&out).map_err(pipeline)?;
            ctx.emit(
                &json!({"path": out, "kept": filtered.len(), "input": set.len()}),
                || {
                    format!(
                        "kept {} of {} items; wrote {}",
                        filtered.len(),
                        set.len(),
                        out.display()
                    )
                },
            );
            Ok(())
        }
        Command::Testset(TestsetCommand::Quality { annotations, label }) => {
            quality(&ctx, &annotations, &label)
        }
        Command::Eval(EvalCommand::Run {
            testset,
            modes,
            out,
            run_id,
            force,
        }) => eval_run(&ctx, &testset, &modes, out, run_id, force),
        Command::Eval(EvalCommand::Report { dirs }) => {
            let reports = dirs
                .iter()
                .map(|d| EvalReport::load(d).map_err(pipeline))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&EvalReport> = reports.iter().collect();
            ctx.emit(&reports, || render_markdown(&refs));
            Ok(())
        }
        Command::Serve { bind } => {
            let mut service = config.service_config();
            if let Some(bind) = bind {
                service.bind = bind;
            }
            let providers = ctx.providers()?;
            let runtime = tokio::runtime::Runtime::new().map_err(CliError::io("tokio runtime"))?;
            runtime.block_on(async {
                let state = litrag_service::AppState::open(service.clone(), providers)
                    .map_err(CliError::io(service.state_dir.clone()))?;
                eprintln!("listening on {}", service.bind);
                litrag_service::serve(state)
                    .await
                    .map_err(CliError::io(service.bind.clone()))
            })
        }
        Command::Config(ConfigCommand::Show) => {
            let mut value = serde_json::to_value(config).expect("config serializes");
            value["api_key_set"] = json!(!config.provider.config.api_key.is_empty());
            ctx.emit(&value, || config.to_toml());
            Ok(())
        }
    }
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn ingest(ctx: &Ctx, dir: Option<PathBuf>, force: bool) -> Result<(), CliError> {
    let config = ctx.config;
    let dir = dir.unwrap_or_else(|| config.corpus_dir.clone());
    let (_, embedder) = ctx.providers()?;
    let previous = if Corpus::exists(&config.index_dir) {
        Corpus::load(&config.index_dir).ok()
    } else {
        None
    };
    // Chunk in memory first so a refused or failed run leaves the index
    // directory untouched.
    let docs = load_corpus(&dir).map_err(pipeline)?;
    let corpus = Corpus::build(
        docs,
        &config.chunking,
        embedder.as_ref(),
        config.max_in_flight(),
    )
    .map_err(pipeline)?;
    let changed = previous.as_ref().is_some_and(|p| {
        p.manifest_hash() != corpus.manifest_hash() || p.chunks() != corpus.chunks()
    });
    if changed {
        if !force {
            return Err(CliError::Usage(format!(
                "{} holds a different corpus; pass --force to replace it and drop its indexes",
                config.index_dir.display()
            )));
        }
        remove_index_files(&config.index_dir, true, true)
            .map_err(CliError::io(config.index_dir.clone()))?;
    }
    corpus.save(&config.index_dir).map_err(pipeline)?;
    let summary = json!({
        "documents": corpus.documents().len(),
        "chunks": corpus.chunks().len(),
        "index_dir": config.index_dir,
        "manifest_hash": corpus.manifest_hash(),
        "replaced": changed,
    });
    ctx.emit(&summary, || {
        format!(
            "ingested {} documents ({} chunks) into {}",
            corpus.documents().len(),
            corpus.chunks().len(),
            config.index_dir.display()
        )
    });
    Ok(())
}

/// `vector`, `graph` and `hybrid` (both) may be combined.
fn parse_build_modes(modes: &[String]) -> Result<(bool, bool), CliError> {
    let (mut vector, mut graph) = (false, false);
    for m in modes.iter().map(|m| m.trim().to_ascii_lowercase()) {
        match m.as_str() {
            "vector" => vector = true,
            "graph" => graph = true,
            "hybrid" | "both" => (vector, graph) = (true, true),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown index {other:?} (expected vector, graph or hybrid)"
                )))
            }
        }
    }
    if !vector && !graph {
        return Err(CliError::Usage("no index requested".into()));
    }
    Ok((vector, graph))
}

fn index_build(ctx: &Ctx, modes: &[String], force: bool) -> Result<(), CliError> {
    let config = ctx.config;
    let (vector, graph) = parse_build_modes(modes)?;
    let dir = &config.index_dir;
    let existing: Vec<&str> = [
        (vector && VectorIndex::exists(dir), "vector"),
        (graph && PropertyGraph::exists(dir), "graph"),
    ]
    .into_iter()
    .filter_map(|(e, name)| e.then_some(name))
    .collect();
    if !existing.is_empty() && !force {
        return Err(CliError::Usage(format!(
            "{} index already exists in {}; pass --force to rebuild",
            existing.join(" and "),
            dir.display()
        )));
    }
    let corpus = load_corpus_from(dir).map_err(pipeline)?;
    let (llm, embedder) = ctx.providers()?;
    let mut options = config.build.clone();
    options.vector = vector;
    options.graph = graph;
    options.graph_build.max_in_flight = config.max_in_flight();
    let (summary, _, _) =
        build_indexes(dir, &corpus, &options, llm.as_ref(), embedder.as_ref()).map_err(pipeline)?;
    ctx.emit(&summary, || {
        let mut lines = vec![format!(
            "built indexes over {} chunks in {}",
            summary.chunks,
            dir.display()
        )];
        if let Some(n) = summary.vector_entries {
            lines.push(format!("  vector: {n} entries"));
        }
        if let (Some(n), Some(e)) = (summary.graph_nodes, summary.graph_edges) {
            lines.push(format!(
                "  graph: {n} nodes, {e} edges, {} extraction warnings",
                summary.extraction_warnings
            ));
        }
        lines.join("\n")
    });
    Ok(())
}

fn index_status(ctx: &Ctx) -> Result<(), CliError> {
    let dir = &ctx.config.index_dir;
    let engine = open_engine(dir).map_err(pipeline)?;
    let status = json!({
        "index_dir": dir,
        "documents": engine.corpus().documents().len(),
        "chunks": engine.corpus().chunks().len(),
        "manifest_hash": engine.corpus().manifest_hash(),
        "vector_entries": engine.vector_index().map(VectorIndex::len),
        "graph_nodes": engine.graph().map(|g| g.nodes().len()),
        "graph_edges": engine.graph().map(|g| g.edges().len()),
    });
    ctx.emit(&status, || {
        let show = |v: Option<usize>| v.map_or("not built".to_string(), |n| n.to_string());
        format!(
            "{}: {} documents, {} chunks\n  vector entries: {}\n  graph nodes: {}\n  graph edges: {}",
            dir.display(),
            engine.corpus().documents().len(),
            engine.corpus().chunks().len(),
            show(engine.vector_index().map(VectorIndex::len)),
            show(engine.graph().map(|g| g.nodes().len())),
            show(engine.graph().map(|g| g.edges().len())),
        )
    });
    Ok(())
}

fn query_cmd(
    ctx: &Ctx,
    query: &str,
    mode: RetrievalMode,
    engine_config: &litrag_core::EngineConfig,
) -> Result<(), CliError> {
    let dir = &ctx.config.index_dir;
    if !Corpus::exists(dir) {
        return Err(pipeline(EngineError::NoIndex(
            "no index found; run `litrag ingest` and `litrag index build` first",
        )));
    }
    let engine = open_engine(dir).map_err(pipeline)?;
    let (llm, embedder) = ctx.providers()?;
    let answer: Answer = engine
        .answer_query(query, mode, engine_config, llm.as_ref(), embedder.as_ref())
        .map_err(pipeline)?;
    ctx.emit(&answer, || {
        let mut out = format!("{}\n", answer.text);
        if !answer.citations.is_empty() {
            out.push_str("\nSources:\n");
            for c in &answer.citations {
                let title = engine
                    .corpus()
                    .document(&c.doc_id)
                    .map_or("", |d| d.title.as_str());
                let snippet = engine
                    .corpus()
                    .chunk(&c.chunk_id)
                    .map(|ch| snippet(&ch.text))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "  [{}] {} ({}, {})\n      {snippet}\n",
                    c.number, title, c.doc_id, c.chunk_id
                ));
            }
        }
        out
    });
    Ok(())
}

fn snippet(text: &str) -> String {
    const MAX: usize = 160;
    if text.chars().count() <= MAX {
        text.to_string()
    } else {
        text.chars().take(MAX).collect::<String>() + "…"
    }
}

fn quality(ctx: &Ctx, sheets: &[PathBuf], labels: &[String]) -> Result<(), CliError> {
    if !labels.is_empty() && labels.len() != sheets.len() {
        return Err(CliError::Usage(format!(
            "{} labels given for {} annotation files",
            labels.len(),
            sheets.len()
        )));
    }
    let mut rows = Vec::new();
    for (i, path) in sheets.iter().enumerate() {
        let label = labels.get(i).cloned().unwrap_or_else(|| {
            path.file_stem().map_or_else(
                || path.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            )
        });
        let stats =
            testset_quality_report(&read_annotations(path).map_err(pipeline)?).map_err(pipeline)?;
        rows.push((label, stats));
    }
    let value: Vec<_> = rows
        .iter()
        .map(|(label, stats)| json!({"label": label, "stats": stats}))
        .collect();
    ctx.emit(&value, || {
        let table: Vec<(&str, &litrag_core::testset::QualityStats)> =
            rows.iter().map(|(l, s)| (l.as_str(), s)).collect();
        render_quality_table(&table)
    });
    Ok(())
}

fn eval_run(
    ctx: &Ctx,
    testset: &Path,
    modes: &[RetrievalMode],
    out: Option<PathBuf>,
    run_id: Option<String>,
    force: bool,
) -> Result<(), CliError> {
    let config = ctx.config;
    if let Some(out) = &out {
        refuse_overwrite(&out.join(REPORT_JSON), force)?;
    }
    let set = TestSet::load(testset).map_err(pipeline)?;
    let engine = open_engine(&config.index_dir).map_err(pipeline)?;
    let (llm, embedder) = ctx.providers()?;
    let modes: BTreeSet<RetrievalMode> = modes.iter().copied().collect();
    let eval_config = EvalConfig {
        engine: config.engine.clone(),
        max_in_flight: config.max_in_flight(),
        run_id,
    };
    let report = run_evaluation(
        &engine,
        &set,
        &modes,
        &eval_config,
        llm.as_ref(),
        embedder.as_ref(),
    )
    .map_err(pipeline)?;
    let out = match out {
        Some(out) => out,
        None => {
            let dir = config.state_dir.join("eval").join(&report.run_id);
            refuse_overwrite(&dir.join(REPORT_JSON), force)?;
            dir
        }
    };
    report.save(&out).map_err(pipeline)?;
    ctx.emit(
        &json!({"run_id": report.run_id, "out": out, "report": report}),
        || format!("{}\nwrote {}", render_markdown(&[&report]), out.display()),
    );
    Ok(())
}
