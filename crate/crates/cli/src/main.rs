//! `cirag`: index a corpus, extract triples, answer questions, evaluate
//! datasets and export teacher trajectories.

mod config;
mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cirag::corpus::{ingest_corpus, DocumentStore};
use cirag::distill::{export_all, filter_trajectories, read_jsonl, write_jsonl, FilterPolicy, Trajectory};
use cirag::eval::{build_eval_store, load_dataset, run_eval_recording, DatasetFormat};
use cirag::extraction::{extract_for_documents, TripleCache};
use cirag::prompts::extraction_fingerprint;
use cirag::retrieval::{Bm25Index, Retriever};
use cirag::{LlmBackend, Pipeline, PipelineOutput};

use config::{BackendKind, Config};
use manifest::{now, Backend, RunManifest};

/// Exit status when some items failed but the command itself ran.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "cirag", version, about = "Iterative construction-integration retrieval over knowledge triples")]
struct Cli {
    /// Upper bound on worker threads and in-flight model requests.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config with [pipeline], [pipeline.retriever] and [backend] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use a JSON replay script as the model backend.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus JSONL and build the lexical index.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract triples for every indexed document into a cache (resumable).
    Extract {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Exit 0 even if some documents failed.
        #[arg(long)]
        best_effort: bool,
    },
    /// Answer one question and print the round trace.
    Answer {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Maximum number of rounds (overrides the config).
        #[arg(long)]
        max_steps: Option<usize>,
        /// Write the per-round log (JSONL) to this file.
        #[arg(long)]
        emit_trace: Option<PathBuf>,
        /// Print the full result as JSON instead of the text trace.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a dataset end to end and write a run directory.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// hotpotqa, twowiki, musique, nq or webq.
        #[arg(long)]
        format: DatasetFormat,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        best_effort: bool,
    },
    /// Filter recorded trajectories and export training examples.
    ExportTrajectories {
        #[arg(long)]
        run_dir: PathBuf,
        /// keep-all, keep-answer-correct or keep-terminated.
        #[arg(long, default_value = "keep-all")]
        policy: FilterPolicy,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print corpus, index and cache statistics as JSON.
    Stats {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

const REPORT_FILE: &str = "report.json";
const REPORT_CSV: &str = "report.csv";
const TRAJECTORIES_FILE: &str = "trajectories.jsonl";

fn load_config(common: &Common, workers: Option<usize>, max_steps: Option<usize>) -> Result<Config> {
    let mut cfg = Config::load(common.config.as_deref())?;
    cfg.apply_overrides(workers, common.replay.as_deref(), max_steps)?;
    Ok(cfg)
}

fn backend_info(cfg: &Config, backend: &dyn LlmBackend) -> Backend {
    Backend {
        kind: match cfg.backend.kind {
            BackendKind::Http => "http".into(),
            BackendKind::Replay => "replay".into(),
        },
        model: backend.model_id().to_owned(),
    }
}

fn open_cache(path: Option<&Path>, backend: &dyn LlmBackend) -> Result<TripleCache> {
    Ok(match path {
        Some(p) => TripleCache::open(p, extraction_fingerprint(), backend.model_id())?,
        None => TripleCache::for_model(backend.model_id()),
    })
}

fn load_store(index_dir: &Path) -> Result<DocumentStore> {
    let store = DocumentStore::load(index_dir).with_context(|| format!("loading documents from {}", index_dir.display()))?;
    if store.is_empty() {
        bail!("corpus in {} is empty", index_dir.display());
    }
    Ok(store)
}

fn cmd_index(corpus: &Path, out: &Path) -> Result<u8> {
    let started = now();
    let (store, stats) = ingest_corpus(corpus)?;
    if store.is_empty() {
        bail!("corpus {} is empty", corpus.display());
    }
    let index = Bm25Index::build(&store)?;
    store.save(out)?;
    index.save(out)?;
    let mut m = RunManifest::new("index", &Config::default(), started).input("corpus", corpus);
    m.output(&out.join(cirag::corpus::STORE_FILE))?;
    m.output(&out.join(cirag::retrieval::INDEX_FILE))?;
    m.write_in(out)?;
    println!(
        "indexed {} documents ({} sentences, {} tokens) into {}",
        stats.document_count,
        stats.sentence_count,
        stats.token_count,
        out.display()
    );
    Ok(0)
}

fn cmd_extract(index: &Path, cache_path: &Path, cfg: &Config, best_effort: bool) -> Result<u8> {
    let started = now();
    let store = load_store(index)?;
    let backend = cfg.backend()?;
    let cache = open_cache(Some(cache_path), backend.as_ref())?;
    let ids: Vec<String> = store.documents().iter().map(|d| d.id.clone()).collect();
    let batch = extract_for_documents(&ids, &store, Some(&cache), backend.as_ref(), cfg.pipeline.parallel_extraction);
    let mut m = RunManifest::new("extract", cfg, started).input("index", index);
    m.backend = Some(backend_info(cfg, backend.as_ref()));
    if cache_path.exists() {
        m.output(cache_path)?;
    }
    m.write_beside(cache_path)?;
    println!(
        "{} documents: {} cached, {} extracted, {} failed; {} triples",
        ids.len(),
        batch.cache_hits,
        batch.cache_misses.saturating_sub(batch.failures.len()),
        batch.failures.len(),
        batch.triples.len()
    );
    if batch.failures.is_empty() {
        return Ok(0);
    }
    for (id, err) in &batch.failures {
        eprintln!("failed {id}: {err}");
    }
    let missing: Vec<&str> = batch.failures.iter().map(|(id, _)| id.as_str()).collect();
    eprintln!("missing documents: {}", missing.join(", "));
    Ok(if best_effort { 0 } else { EXIT_PARTIAL })
}

fn render_trace(out: &PipelineOutput) -> String {
    let mut s = String::new();
    for r in &out.ici.rounds {
        let _ = writeln!(s, "round {}: {}", r.round, r.query);
        let _ = writeln!(s, "  retrieved {} documents, {} candidate triples", r.retrieved.len(), r.candidate_count);
        let kept: Vec<String> = r.decision.core_triples.iter().map(|t| t.normalized.clone()).collect();
        let _ = writeln!(s, "  kept: {}", if kept.is_empty() { "-".to_owned() } else { kept.join(", ") });
        let _ = writeln!(s, "  next: {}", r.decision.next_query.as_deref().unwrap_or("<no question>"));
    }
    let _ = writeln!(
        s,
        "stopped: {:?} after {} round(s); pools: {} triples, {} sentences, {} documents",
        out.ici.stop_reason,
        out.ici.iterations_used,
        out.ici.pools.triples.len(),
        out.ici.pools.sentences.len(),
        out.ici.pools.documents.len()
    );
    let _ = writeln!(s, "granularity: {} ({} reader call(s))", out.cascade.selected, out.cascade.attempts.len());
    let _ = writeln!(s, "answer: {}", out.final_answer);
    s
}

#[allow(clippy::too_many_arguments)]
fn cmd_answer(
    index: &Path,
    question: &str,
    cache: Option<&Path>,
    cfg: &Config,
    emit_trace: Option<&Path>,
    json: bool,
) -> Result<u8> {
    let started = now();
    let store = load_store(index)?;
    let bm25 = Bm25Index::load(index)?;
    let retriever = Retriever::new(bm25, &store);
    let backend = cfg.backend()?;
    let cache = open_cache(cache, backend.as_ref())?;
    let pipeline = Pipeline::from_parts(
        Arc::new(store),
        Arc::new(retriever),
        Arc::new(cache),
        cfg.pipeline.clone(),
        backend.clone(),
    );
    let out = pipeline.answer(question)?;
    if let Some(path) = emit_trace {
        std::fs::write(path, out.ici.run_log_jsonl()).with_context(|| format!("writing {}", path.display()))?;
        let mut m = RunManifest::new("answer", cfg, started).input("index", index);
        m.backend = Some(backend_info(cfg, backend.as_ref()));
        m.output(path)?;
        m.write_beside(path)?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print!("{}", render_trace(&out));
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    dataset: &Path,
    format: DatasetFormat,
    out: &Path,
    sample: Option<usize>,
    seed: u64,
    cache: Option<&Path>,
    cfg: &Config,
    best_effort: bool,
) -> Result<u8> {
    let started = now();
    let ds = load_dataset(dataset, format, sample, seed)?;
    let backend = cfg.backend()?;
    let store = build_eval_store(&ds)?;
    let cache = open_cache(cache, backend.as_ref())?;
    let pipeline = if store.is_empty() {
        None
    } else {
        Some(Pipeline::new(store, cfg.pipeline.clone(), backend.clone())?.with_cache(Arc::new(cache)))
    };
    let (report, trajectories) = match &pipeline {
        Some(p) => run_eval_recording(&ds.examples, p, cfg.workers),
        None => (
            cirag::eval::EvalReport {
                rows: Vec::new(),
                aggregates: cirag::eval::aggregate(&[]),
            },
            Vec::new(),
        ),
    };
    std::fs::create_dir_all(out)?;
    let report_path = out.join(REPORT_FILE);
    report.write(&report_path)?;
    let csv_path = out.join(REPORT_CSV);
    std::fs::write(&csv_path, report.aggregates_csv())?;
    let traj_path = out.join(TRAJECTORIES_FILE);
    write_jsonl(&traj_path, &trajectories)?;

    let mut m = RunManifest::new("eval", cfg, started).input("dataset", dataset);
    m.backend = Some(backend_info(cfg, backend.as_ref()));
    m.seed = Some(seed);
    for p in [&report_path, &csv_path, &traj_path] {
        m.output(p)?;
    }
    m.write_in(out)?;

    let a = &report.aggregates;
    println!(
        "{} examples ({} failed): EM {:.4}  F1 {:.4}  mean rounds {:.2}",
        a.examples, a.failed, a.mean_em, a.mean_f1, a.mean_iterations
    );
    for (level, share) in &a.granularity_distribution {
        println!("  {level}: {share:.4}");
    }
    Ok(if a.failed > 0 && !best_effort { EXIT_PARTIAL } else { 0 })
}

fn cmd_export(run_dir: &Path, policy: FilterPolicy, cap: Option<usize>, out: &Path) -> Result<u8> {
    let started = now();
    let source = run_dir.join(TRAJECTORIES_FILE);
    let trajs: Vec<Trajectory> = read_jsonl(&source)?;
    let kept = filter_trajectories(&trajs, policy, cap);
    let examples = export_all(&kept);
    write_jsonl(out, &examples)?;
    let mut m = RunManifest::new("export-trajectories", &Config::default(), started).input("trajectories", &source);
    m.output(out)?;
    m.write_beside(out)?;
    println!("{} of {} trajectories kept; {} training examples", kept.len(), trajs.len(), examples.len());
    Ok(0)
}

fn cmd_stats(index: &Path, cache: Option<&Path>) -> Result<u8> {
    let store = DocumentStore::load(index)?;
    let bm25 = Bm25Index::load(index)?;
    let mut v = serde_json::json!({
        "corpus": store.stats(),
        "index": { "documents": bm25.len(), "avg_doc_length": bm25.avg_doc_length() },
    });
    if let Some(path) = cache {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut records = 0usize;
        let mut triples = 0usize;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: serde_json::Value = serde_json::from_str(line)?;
            records += 1;
            triples += rec["triples"].as_array().map_or(0, Vec::len);
        }
        v["cache"] = serde_json::json!({ "records": records, "triples": triples });
    }
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(w) = cli.workers {
        // ignore the error when a pool already exists (only possible in-process)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    match cli.command {
        Command::Index { corpus, out } => cmd_index(&corpus, &out),
        Command::Extract {
            index,
            cache,
            common,
            best_effort,
        } => cmd_extract(&index, &cache, &load_config(&common, cli.workers, None)?, best_effort),
        Command::Answer {
            index,
            question,
            cache,
            common,
            max_steps,
            emit_trace,
            json,
        } => {
            let cfg = load_config(&common, cli.workers, max_steps)?;
            cmd_answer(&index, &question, cache.as_deref(), &cfg, emit_trace.as_deref(), json)
        }
        Command::Eval {
            dataset,
            format,
            out,
            sample,
            seed,
            cache,
            common,
            max_steps,
            best_effort,
        } => {
            let cfg = load_config(&common, cli.workers, max_steps)?;
            cmd_eval(&dataset, format, &out, sample, seed, cache.as_deref(), &cfg, best_effort)
        }
        Command::ExportTrajectories {
            run_dir,
            policy,
            cap,
            out,
        } => cmd_export(&run_dir, policy, cap, &out),
        Command::Stats { index, cache } => cmd_stats(&index, cache.as_deref()),
    }
}

/// Joins the cause chain, skipping causes whose text a wrapper already shows.
fn error_chain(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::FAILURE
        }
    }
}

