//! The `earco` command line: ingest, build-index, optimize, infer,
//! evaluate, report, and the two ablation harnesses.
//!
//! `--backend test` routes every model role to the built-in scripted
//! backend and the hashed-n-gram embedder, making any pipeline fully
//! offline and reproducible.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, retrieve_icl_examples, PromptMode, RetrievedExample};
use crate::config::{ConfigError, RunConfig};
use crate::embedding::{query_text, EmbeddingBackend};
use crate::evaluation::{
    aggregate, compare_modes, evaluate_results, format_pct, load_report, render_table,
    save_report, SplitStats,
};
use crate::gateway::Gateway;
use crate::incident::{load_corpus, save_corpus, temporal_split, Corpus, Incident};
use crate::index::VectorIndex;
use crate::inference::{generate_batch, load_results, save_results, GenerationParams, RcaRecommendation};
use crate::optimizer::{load_artifact, run_optimization, save_artifact, OptimizedPrompt, STAGE_NAMES};
use crate::summarize::{clean_corpus, summarize_corpus};
use crate::templates;

#[derive(Debug, Parser)]
#[command(name = "earco", version, about = "Automated incident root-cause-analysis engine")]
pub struct Cli {
    /// TOML run configuration; flags override individual fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Backend override for every model role: test | mock:<path> | URL.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, clean, optionally summarize, and optionally split a corpus.
    Ingest(IngestArgs),
    /// Embed a corpus and persist the exact flat index.
    BuildIndex(BuildIndexArgs),
    /// Run the full prompt-optimization pipeline.
    Optimize(OptimizeArgs),
    /// Generate root-cause recommendations for one incident or a corpus.
    Infer(InferArgs),
    /// Judge a results file against corpus ground truth.
    Evaluate(EvaluateArgs),
    /// Render a saved report; optionally compare two modes.
    Report(ReportArgs),
    /// Sweep the number of retrieved in-context examples.
    AblateExamples(AblateExamplesArgs),
    /// Evaluate each persisted optimization stage.
    AblateStages(AblateStagesArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run the LLM summarization stage after local cleaning.
    #[arg(long)]
    pub summarize: bool,
    /// With --val-frac, also write <out>.train/.validation/.test files.
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Write per-incident cleaning reports (JSON lines).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Training corpus (cleaned).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output prompt artifact; stage artifacts land in <out stem>.stages/.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Prompt mode (default: config `mode`).
    #[arg(long)]
    pub mode: Option<String>,
    /// Incident id (looked up in --corpus) or a corpus file to run wholesale.
    #[arg(long)]
    pub incident: String,
    /// Optimized prompt artifact; required by PW modes.
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    /// Vector index; required by retrieval modes.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Historical corpus backing retrieval and id lookup.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Retrieved examples per incident (default: config retrieval_k).
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Two mode tokens: baseline then candidate.
    #[arg(long, num_args = 2, value_names = ["BASELINE", "CANDIDATE"])]
    pub compare: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct AblateExamplesArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated example counts.
    #[arg(long, default_value = "0,3,5,7,10")]
    pub counts: String,
}

#[derive(Debug, Args)]
pub struct AblateStagesArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Final prompt artifact; stages default to <prompt stem>.stages/.
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    /// Directory holding the per-stage artifacts.
    #[arg(long)]
    pub stages: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Directory the optimize subcommand persists stage artifacts into.
pub fn stage_dir(prompt_out: &Path) -> PathBuf {
    prompt_out.with_extension("stages")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleAblationRow {
    pub examples: usize,
    pub complete: SplitStats,
    pub filtered: SplitStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAblationRow {
    pub stage: String,
    pub complete: SplitStats,
    pub filtered: SplitStats,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let mut config = RunConfig::default();
            config.apply_env_overrides();
            config
        }
    };
    if let Some(backend) = &cli.backend {
        config.override_backends(backend);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    match cli.command {
        Command::Ingest(args) => ingest(&config, args),
        Command::BuildIndex(args) => build_index(&config, args),
        Command::Optimize(args) => optimize(&config, args),
        Command::Infer(args) => infer(&config, args),
        Command::Evaluate(args) => evaluate(&config, args),
        Command::Report(args) => report(args),
        Command::AblateExamples(args) => ablate_examples(&config, args),
        Command::AblateStages(args) => ablate_stages(&config, args),
    }
}

fn ingest(config: &RunConfig, args: IngestArgs) -> anyhow::Result<()> {
    let mut corpus = load_corpus(&args.input)
        .with_context(|| format!("reading corpus {}", args.input.display()))?;
    let mut reports = clean_corpus(&mut corpus);
    let removed: usize = reports
        .iter()
        .map(|r| {
            r.removed_html_tag_count + r.removed_stacktrace_block_count + r.removed_image_ref_count
        })
        .sum();

    if args.summarize {
        let gateway = config.build_gateway()?;
        let failures = summarize_corpus(&gateway, &mut corpus, &mut reports, config.concurrency);
        for (id, err) in &failures {
            tracing::warn!("summarization skipped for {id}: {err}");
        }
        println!(
            "summarized {} incidents ({} skipped on gateway errors)",
            corpus.len() - failures.len(),
            failures.len()
        );
    }

    save_corpus(&corpus, &args.out)?;
    println!(
        "ingested {} incidents -> {} ({} noisy constructs removed)",
        corpus.len(),
        args.out.display(),
        removed
    );

    if let Some(report_path) = &args.report {
        let mut text = String::new();
        for report in &reports {
            text.push_str(&serde_json::to_string(report)?);
            text.push('\n');
        }
        std::fs::write(report_path, text)?;
    }

    match (args.train_frac, args.val_frac) {
        (Some(train_frac), Some(val_frac)) => {
            let (train, validation, test) = temporal_split(&corpus, train_frac, val_frac)?;
            for (split, name) in [(&train, "train"), (&validation, "validation"), (&test, "test")]
            {
                let path = split_path(&args.out, name);
                save_corpus(split, &path)?;
                println!("  {name}: {} incidents -> {}", split.len(), path.display());
            }
        }
        (None, None) => {}
        _ => bail!("--train-frac and --val-frac must be given together"),
    }
    Ok(())
}

fn split_path(out: &Path, split: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("jsonl");
    out.with_file_name(format!("{stem}.{split}.{ext}"))
}

/// Embed every incident's query text into a fresh index.
pub fn index_corpus(
    backend: &dyn EmbeddingBackend,
    corpus: &Corpus,
) -> anyhow::Result<VectorIndex> {
    let mut index = VectorIndex::new(backend.dim());
    for incident in &corpus.incidents {
        let vector = backend.embed(&query_text(incident))?;
        index.add(incident.id.clone(), vector)?;
    }
    Ok(index)
}

fn build_index(config: &RunConfig, args: BuildIndexArgs) -> anyhow::Result<()> {
    let corpus_path = resolve_path(args.corpus, &config.paths.corpus, "paths.corpus", "--corpus")?;
    let out = resolve_path(args.out, &config.paths.index, "paths.index", "--out")?;
    let corpus = load_corpus(&corpus_path)?;
    let backend = config.build_embedding_backend()?;
    let index = index_corpus(backend.as_ref(), &corpus)?;
    index.save(&out)?;
    println!("indexed {} incidents (dim {}) -> {}", index.len(), index.dim(), out.display());
    Ok(())
}

fn optimize(config: &RunConfig, args: OptimizeArgs) -> anyhow::Result<()> {
    let corpus_path = resolve_path(args.corpus, &config.paths.corpus, "paths.corpus", "--corpus")?;
    let out = resolve_path(args.out, &config.paths.prompt, "paths.prompt", "--out")?;
    let corpus = load_corpus(&corpus_path)?;
    let gateway = config.build_gateway()?;
    let backend = config.build_embedding_backend()?;
    let index = index_corpus(backend.as_ref(), &corpus)?;

    let stages = run_optimization(&gateway, &index, &corpus, &config.optimization, config.seed)?;

    let dir = stage_dir(&out);
    std::fs::create_dir_all(&dir)?;
    for name in STAGE_NAMES {
        let artifact = stages.by_name(name).expect("known stage");
        save_artifact(artifact, &dir.join(format!("{name}.json")))?;
    }
    save_artifact(&stages.final_prompt, &out)?;

    for entry in &stages.final_prompt.history {
        println!("iteration {}: best score {:.3}", entry.iteration, entry.best_score);
    }
    let calls = gateway.calls(crate::gateway::Role::Optimizer);
    println!("optimized prompt -> {} (stages in {})", out.display(), dir.display());
    println!("optimizer-role calls: {calls} (budget {})", config.call_budget);
    if calls > config.call_budget {
        tracing::warn!("optimizer call budget exceeded: {calls} > {}", config.call_budget);
    }
    Ok(())
}

fn missing(field: &'static str, hint: &'static str) -> anyhow::Error {
    ConfigError::MissingField { field, hint }.into()
}

/// Flag value, falling back to the config file, else a config error
/// naming both.
fn resolve_path(
    flag: Option<PathBuf>,
    config_value: &Option<PathBuf>,
    field: &'static str,
    hint: &'static str,
) -> anyhow::Result<PathBuf> {
    flag.or_else(|| config_value.clone()).ok_or_else(|| missing(field, hint))
}

/// Assemble-and-generate over `targets`. Retrieval modes embed each
/// target and pull `k` similar incidents from the index; `k = 0` yields
/// zero-example prompts.
#[allow(clippy::too_many_arguments)]
fn infer_targets(
    gateway: &Gateway,
    config: &RunConfig,
    mode: PromptMode,
    targets: &[Incident],
    corpus: &Corpus,
    optimized: Option<&OptimizedPrompt>,
    index: Option<&VectorIndex>,
    k: usize,
) -> anyhow::Result<Vec<RcaRecommendation>> {
    let manual = templates::MANUAL_INSTRUCTION.trim();
    let embedder = if mode.uses_retrieval() && k > 0 {
        Some(config.build_embedding_backend()?)
    } else {
        None
    };

    let mut jobs = Vec::with_capacity(targets.len());
    for incident in targets {
        let retrieved: Option<Vec<RetrievedExample>> = if mode.uses_retrieval() {
            if k == 0 {
                Some(Vec::new())
            } else {
                let index = index.ok_or_else(|| missing("paths.index", "--index"))?;
                let embedder = embedder.as_ref().expect("embedder built for retrieval");
                Some(retrieve_icl_examples(embedder.as_ref(), index, corpus, incident, k)?)
            }
        } else {
            None
        };
        let assembled =
            assemble(mode, incident, optimized, Some(manual), retrieved.as_deref())?;
        jobs.push((incident.id.clone(), assembled));
    }

    let results = generate_batch(gateway, jobs, GenerationParams::default(), config.concurrency);
    results.into_iter().collect::<Result<Vec<_>, _>>().map_err(Into::into)
}

fn infer(config: &RunConfig, args: InferArgs) -> anyhow::Result<()> {
    let mode: PromptMode = args
        .mode
        .or_else(|| config.mode.clone())
        .ok_or_else(|| missing("mode", "--mode"))?
        .parse()?;
    let corpus_path = resolve_path(args.corpus, &config.paths.corpus, "paths.corpus", "--corpus")?;
    let out = resolve_path(args.out, &config.paths.results, "paths.results", "--out")?;
    let corpus = load_corpus(&corpus_path)?;

    let targets: Vec<Incident> = {
        let as_path = Path::new(&args.incident);
        if as_path.exists() {
            load_corpus(as_path)?.incidents
        } else {
            vec![corpus
                .get(&args.incident)
                .ok_or_else(|| anyhow!("incident id {:?} not found in corpus", args.incident))?
                .clone()]
        }
    };

    let optimized = if mode.uses_optimized_instruction() || mode.uses_static_examples() {
        let path = resolve_path(args.prompt, &config.paths.prompt, "paths.prompt", "--prompt")?;
        Some(load_artifact(&path)?)
    } else {
        None
    };
    let index = if mode.uses_retrieval() {
        let path = resolve_path(args.index, &config.paths.index, "paths.index", "--index")?;
        Some(VectorIndex::load(&path)?)
    } else {
        None
    };

    let gateway = config.build_gateway()?;
    let k = args.k.unwrap_or(config.retrieval_k);
    let results = infer_targets(
        &gateway,
        config,
        mode,
        &targets,
        &corpus,
        optimized.as_ref().map(|a| &a.prompt),
        index.as_ref(),
        k,
    )?;
    save_results(&results, &out)?;
    println!("generated {} recommendations ({mode}) -> {}", results.len(), out.display());
    println!("remote calls: {}", gateway.remote_calls());
    Ok(())
}

fn evaluate(config: &RunConfig, args: EvaluateArgs) -> anyhow::Result<()> {
    let results_path =
        resolve_path(args.results, &config.paths.results, "paths.results", "--results")?;
    let corpus_path = resolve_path(args.corpus, &config.paths.corpus, "paths.corpus", "--corpus")?;
    let results = load_results(&results_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let gateway = config.build_gateway()?;
    let records = evaluate_results(&gateway, &results, &corpus, config.concurrency)?;
    let report = aggregate(&records)?;
    save_report(&report, &args.out)?;
    println!("{}", render_table(&report));
    println!("report -> {}", args.out.display());
    Ok(())
}

fn report(args: ReportArgs) -> anyhow::Result<()> {
    let report = load_report(&args.report)?;
    println!("{}", render_table(&report));
    if let Some(pair) = args.compare {
        let (baseline, candidate) = (&pair[0], &pair[1]);
        let baseline = baseline.parse::<PromptMode>()?.token().to_string();
        let candidate = candidate.parse::<PromptMode>()?.token().to_string();
        let cmp = compare_modes(&report, &baseline, &candidate)?;
        println!(
            "{candidate} vs {baseline}: complete {}, filtered {}",
            format_pct(cmp.complete_pct),
            format_pct(cmp.filtered_pct)
        );
    }
    Ok(())
}

fn ablate_examples(config: &RunConfig, args: AblateExamplesArgs) -> anyhow::Result<()> {
    let counts: Vec<usize> = args
        .counts
        .split(',')
        .map(|c| c.trim().parse::<usize>().context("bad --counts entry"))
        .collect::<Result<_, _>>()?;
    let corpus_path = resolve_path(args.corpus, &config.paths.corpus, "paths.corpus", "--corpus")?;
    let prompt_path = resolve_path(args.prompt, &config.paths.prompt, "paths.prompt", "--prompt")?;
    let index_path = resolve_path(args.index, &config.paths.index, "paths.index", "--index")?;
    let corpus = load_corpus(&corpus_path)?;
    let artifact = load_artifact(&prompt_path)?;
    let index = VectorIndex::load(&index_path)?;
    let gateway = config.build_gateway()?;

    let mut rows = Vec::new();
    for &count in &counts {
        let results = infer_targets(
            &gateway,
            config,
            PromptMode::PwSs,
            &corpus.incidents,
            &corpus,
            Some(&artifact.prompt),
            Some(&index),
            count,
        )?;
        let records = evaluate_results(&gateway, &results, &corpus, config.concurrency)?;
        let report = aggregate(&records)?;
        let stats = report.modes.get("pw-ss").expect("pw-ss rows present");
        rows.push(ExampleAblationRow {
            examples: count,
            complete: stats.complete,
            filtered: stats.filtered,
        });
    }

    std::fs::write(&args.out, serde_json::to_string_pretty(&rows)? + "\n")?;
    println!("{:<9} {:<22} {:<22}", "Examples", "Complete", "Filtered");
    for row in &rows {
        println!(
            "{:<9} {:<22} {:<22}",
            row.examples,
            cell(&row.complete),
            cell(&row.filtered)
        );
    }
    println!("ablation -> {}", args.out.display());
    Ok(())
}

fn cell(stats: &SplitStats) -> String {
    if stats.n == 0 {
        "-".to_string()
    } else {
        format!("{} (n={})", crate::evaluation::format_mean_std(stats.mean, stats.sample_std), stats.n)
    }
}

fn ablate_stages(config: &RunConfig, args: AblateStagesArgs) -> anyhow::Result<()> {
    let corpus_path = resolve_path(args.corpus, &config.paths.corpus, "paths.corpus", "--corpus")?;
    let prompt_path = resolve_path(args.prompt, &config.paths.prompt, "paths.prompt", "--prompt")?;
    let index_path = resolve_path(args.index, &config.paths.index, "paths.index", "--index")?;
    let corpus = load_corpus(&corpus_path)?;
    let index = VectorIndex::load(&index_path)?;
    let gateway = config.build_gateway()?;
    let dir = args.stages.unwrap_or_else(|| stage_dir(&prompt_path));

    let mut rows = Vec::new();
    for name in STAGE_NAMES {
        let path = dir.join(format!("{name}.json"));
        let artifact = load_artifact(&path)
            .with_context(|| format!("missing stage artifact {}", path.display()))?;
        let results = infer_targets(
            &gateway,
            config,
            PromptMode::PwSs,
            &corpus.incidents,
            &corpus,
            Some(&artifact.prompt),
            Some(&index),
            config.retrieval_k,
        )?;
        let records = evaluate_results(&gateway, &results, &corpus, config.concurrency)?;
        let report = aggregate(&records)?;
        let stats = report.modes.get("pw-ss").expect("pw-ss rows present");
        rows.push(StageAblationRow {
            stage: name.to_string(),
            complete: stats.complete,
            filtered: stats.filtered,
        });
    }

    std::fs::write(&args.out, serde_json::to_string_pretty(&rows)? + "\n")?;
    println!("{:<19} {:<22} {:<22}", "Stage", "Complete", "Filtered");
    for row in &rows {
        println!("{:<19} {:<22} {:<22}", row.stage, cell(&row.complete), cell(&row.filtered));
    }
    println!("stage ablation -> {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_dir_derivation() {
        assert_eq!(stage_dir(Path::new("/x/prompt.json")), PathBuf::from("/x/prompt.stages"));
        assert_eq!(stage_dir(Path::new("prompt")), PathBuf::from("prompt.stages"));
    }

    #[test]
    fn split_path_derivation() {
        assert_eq!(
            split_path(Path::new("/d/clean.jsonl"), "train"),
            PathBuf::from("/d/clean.train.jsonl")
        );
    }

    #[test]
    fn cli_parses_the_documented_surface() {
        let cli = Cli::parse_from([
            "earco", "infer", "--mode", "PWSS", "--incident", "inc-1", "--prompt", "p.json",
            "--index", "i.bin", "--corpus", "c.jsonl", "--out", "r.jsonl", "--backend", "test",
        ]);
        match cli.command {
            Command::Infer(args) => {
                assert_eq!(args.mode.as_deref(), Some("PWSS"));
                assert_eq!(args.incident, "inc-1");
            }
            other => panic!("wrong command {other:?}"),
        }
        assert_eq!(cli.backend.as_deref(), Some("test"));
    }
}
