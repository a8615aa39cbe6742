//! Command-line driver: `eval`, `compare`, `trace`, `cache-clear`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_dataset, DatasetKind};
use crate::gateway::{Gateway, LiveBackend, MockBackend, ModelSpec, ResponseCache, RetryPolicy};
use crate::harness::{evaluate, EvalConfig, EvalReport, RunLog};
use crate::pipeline::{PipelineConfig, Strategy};
use crate::prompts::PromptLibrary;
use crate::scoring::DecisionBoundary;

pub const DEFAULT_STRONG_MODEL: &str = "GPT-4-1106-preview";
pub const DEFAULT_WEAK_MODEL: &str = "GPT-3.5-Turbo-1106";
pub const DEFAULT_CACHE_DIR: &str = ".autoreason-cache";

const EXIT_OK: i32 = 0;
const EXIT_RUNTIME: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Parser)]
#[command(name = "autoreason", version, about = "Two-stage prompting pipeline and evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an evaluation and write a run log plus manifest.
    Eval(EvalArgs),
    /// Render a Base/CoT/AutoReason comparison table from run manifests.
    Compare(CompareArgs),
    /// Pretty-print the full trace of one record from a run log.
    Trace(TraceArgs),
    /// Delete all entries from the response cache.
    CacheClear(CacheClearArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset JSON file.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset kind: strategyqa or hotpotqa.
    #[arg(long)]
    kind: DatasetKind,
    /// Prompting strategy: base, cot, or autoreason.
    #[arg(long)]
    strategy: Strategy,
    /// Master seed for shuffling and sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Records per run.
    #[arg(long)]
    samples: Option<usize>,
    /// Runs per iteration.
    #[arg(long)]
    runs: Option<u32>,
    /// Iterations.
    #[arg(long)]
    iterations: Option<u32>,
    /// Decision boundary: judge scores >= threshold count as correct.
    #[arg(long)]
    threshold: Option<u8>,
    /// Rationale-extraction model id.
    #[arg(long)]
    strong_model: Option<String>,
    /// Answering model id.
    #[arg(long)]
    weak_model: Option<String>,
    /// Judge model id (defaults to the strong model).
    #[arg(long)]
    judge_model: Option<String>,
    /// Chat-completions endpoint base URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Scripted mock transcript (JSONL); runs offline when given.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Output directory for run log and manifest.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Disable the on-disk response cache.
    #[arg(long)]
    no_cache: bool,
    /// Response cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Prompt template fixture directory (defaults to the built-in set).
    #[arg(long)]
    prompt_dir: Option<PathBuf>,
    /// Flat key-value JSON config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run manifest files, one per strategy/model combination.
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    /// Also write the table as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Run log (JSONL) produced by `eval`.
    #[arg(long)]
    log: PathBuf,
    /// Record id to print.
    #[arg(long)]
    id: String,
}

#[derive(Args)]
struct CacheClearArgs {
    #[arg(long, default_value = DEFAULT_CACHE_DIR)]
    cache_dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub report: EvalReport,
    pub created_at: String,
    pub tool_version: String,
    pub dataset_path: String,
    pub dataset_digest: String,
}

/// Entry point for the binary; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text and picks 0 or 2
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Eval(args) => match cmd_eval(args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_RUNTIME
            }
        },
        Command::Compare(args) => report_errors(cmd_compare(args)),
        Command::Trace(args) => report_errors(cmd_trace(args)),
        Command::CacheClear(args) => report_errors(cmd_cache_clear(args)),
    }
}

fn report_errors(result: anyhow::Result<()>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

/// Flat JSON config file; CLI flags take precedence, then these values,
/// then built-in defaults.
#[derive(Default)]
struct FileConfig(BTreeMap<String, serde_json::Value>);

impl FileConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let map: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(&text).context("config must be a flat JSON object")?;
        Ok(FileConfig(map))
    }

    fn u64(&self, key: &str) -> Option<u64> {
        self.0.get(key).and_then(|v| v.as_u64())
    }

    fn string(&self, key: &str) -> Option<String> {
        self.0.get(key).and_then(|v| v.as_str()).map(str::to_string)
    }
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<i32> {
    let file = FileConfig::load(args.config.as_deref())?;

    let seed = args.seed.or_else(|| file.u64("seed")).unwrap_or(0);
    let samples = args
        .samples
        .or_else(|| file.u64("samples").map(|v| v as usize))
        .unwrap_or(20);
    let runs = args
        .runs
        .or_else(|| file.u64("runs").map(|v| v as u32))
        .unwrap_or(3);
    let iterations = args
        .iterations
        .or_else(|| file.u64("iterations").map(|v| v as u32))
        .unwrap_or(1);
    let threshold = args
        .threshold
        .or_else(|| file.u64("threshold").map(|v| v as u8))
        .unwrap_or(crate::scoring::DEFAULT_THRESHOLD);
    let strong_id = args
        .strong_model
        .or_else(|| file.string("strong_model"))
        .unwrap_or_else(|| DEFAULT_STRONG_MODEL.to_string());
    let weak_id = args
        .weak_model
        .or_else(|| file.string("weak_model"))
        .unwrap_or_else(|| DEFAULT_WEAK_MODEL.to_string());
    let judge_id = args
        .judge_model
        .or_else(|| file.string("judge_model"))
        .unwrap_or_else(|| strong_id.clone());
    let endpoint = args.endpoint.or_else(|| file.string("endpoint"));
    let cache_dir = args
        .cache_dir
        .or_else(|| file.string("cache_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));

    // usage-level validation (exit 2)
    if samples == 0 || runs == 0 || iterations == 0 {
        eprintln!("error: --samples, --runs and --iterations must all be >= 1");
        return Ok(EXIT_USAGE);
    }
    if threshold > 10 {
        eprintln!("error: --threshold must be in [0, 10]");
        return Ok(EXIT_USAGE);
    }

    let make_spec = |id: String| -> ModelSpec {
        let mut spec = ModelSpec::new(id);
        if let Some(endpoint) = &endpoint {
            spec.endpoint = endpoint.clone();
        }
        spec
    };
    let pipeline = PipelineConfig {
        strong_model: make_spec(strong_id),
        weak_model: make_spec(weak_id),
        judge_model: make_spec(judge_id),
    };
    let config = EvalConfig {
        num_samples: samples,
        num_runs: runs,
        num_iterations: iterations,
        seed,
        strategy: args.strategy,
        boundary: DecisionBoundary { threshold },
        pipeline,
    };

    let dataset = load_dataset(&args.dataset, args.kind)?;
    if config.num_samples > dataset.len() {
        eprintln!(
            "error: --samples {} exceeds dataset size {}",
            config.num_samples,
            dataset.len()
        );
        return Ok(EXIT_USAGE);
    }

    let library = match &args.prompt_dir {
        Some(dir) => PromptLibrary::from_dir(dir)?,
        None => PromptLibrary::builtin(),
    };

    let gateway = if let Some(mock_path) = &args.mock {
        // offline replay: no cache, no backoff delays
        let backend = MockBackend::from_jsonl(mock_path)
            .map_err(|e| anyhow!("loading mock transcript: {e}"))?;
        Gateway::new(Arc::new(backend), None, RetryPolicy::immediate(5))
    } else {
        let backend = LiveBackend::from_env().map_err(|e| anyhow!("{e}"))?;
        let cache = if args.no_cache {
            None
        } else {
            Some(ResponseCache::new(cache_dir))
        };
        Gateway::new(Arc::new(backend), cache, RetryPolicy::default())
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;
    let log_path = args.out.join("run_log.jsonl");
    let mut log = RunLog::new(Box::new(BufWriter::new(
        File::create(&log_path)
            .with_context(|| format!("cannot create {}", log_path.display()))?,
    )));

    let report = evaluate(&dataset, &config, &gateway, &library, &mut log)?;

    let manifest = RunManifest {
        report,
        created_at: chrono::Utc::now().to_rfc3339(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset_path: args.dataset.display().to_string(),
        dataset_digest: file_digest(&args.dataset)?,
    };
    let manifest_path = args.out.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).context("serializing manifest")?,
    )
    .with_context(|| format!("cannot write {}", manifest_path.display()))?;

    println!("final_score: {}", manifest.report.final_score);
    Ok(EXIT_OK)
}

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Per-model rows, one accuracy column per strategy, one decimal place.
#[derive(Debug, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Serialize)]
pub struct ComparisonRow {
    pub model: String,
    pub base: Option<f64>,
    pub cot: Option<f64>,
    pub autoreason: Option<f64>,
}

impl ComparisonTable {
    pub fn from_manifests(manifests: &[RunManifest]) -> anyhow::Result<Self> {
        if let Some(first) = manifests.first() {
            for m in manifests {
                if m.dataset_digest != first.dataset_digest {
                    bail!(
                        "digest mismatch: {} covers a different dataset file than {}",
                        m.dataset_path,
                        first.dataset_path
                    );
                }
            }
        }
        let mut rows: Vec<ComparisonRow> = Vec::new();
        for m in manifests {
            let model = m.report.config.pipeline.weak_model.model_id.clone();
            let row = match rows.iter_mut().find(|r| r.model == model) {
                Some(row) => row,
                None => {
                    rows.push(ComparisonRow {
                        model,
                        base: None,
                        cot: None,
                        autoreason: None,
                    });
                    rows.last_mut().unwrap()
                }
            };
            let cell = match m.report.config.strategy {
                Strategy::Base => &mut row.base,
                Strategy::Cot => &mut row.cot,
                Strategy::Autoreason => &mut row.autoreason,
            };
            *cell = Some(m.report.final_score);
        }
        Ok(ComparisonTable { rows })
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .chain(std::iter::once("Model".len()))
            .max()
            .unwrap_or(5);
        out.push_str(&format!(
            "{:width$}  {:>5}  {:>5}  {:>10}\n",
            "Model", "Base", "CoT", "AutoReason"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:width$}  {:>5}  {:>5}  {:>10}\n",
                row.model,
                cell(row.base),
                cell(row.cot),
                cell(row.autoreason),
            ));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("model,base,cot,autoreason\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.model,
                cell(row.base),
                cell(row.cot),
                cell(row.autoreason)
            ));
        }
        out
    }
}

fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.1}"),
        None => "-".to_string(),
    }
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let mut manifests = Vec::new();
    for path in &args.manifests {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .with_context(|| format!("invalid manifest {}", path.display()))?;
        manifests.push(manifest);
    }
    let table = ComparisonTable::from_manifests(&manifests)?;
    print!("{}", table.render_text());
    if let Some(csv_path) = &args.csv {
        std::fs::write(csv_path, table.render_csv())
            .with_context(|| format!("cannot write {}", csv_path.display()))?;
    }
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.log)
        .with_context(|| format!("cannot read run log {}", args.log.display()))?;
    let mut found = false;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let event: serde_json::Value = serde_json::from_str(line).context("invalid log line")?;
        if event["type"] != "record" || event["record_id"] != args.id.as_str() {
            continue;
        }
        found = true;
        println!(
            "record {} (strategy {}, iteration {}, run {})",
            args.id, event["strategy"], event["iteration"], event["run"]
        );
        println!("question: {}", event["question"]);
        println!("gold answer: {}", event["gold_answer"]);
        if let Some(rationales) = event["rationales"].as_array() {
            println!("rationales:");
            for r in rationales {
                println!("  - {}", r.as_str().unwrap_or_default());
            }
        }
        let prompts = event["prompts_sent"].as_array().cloned().unwrap_or_default();
        let responses = event["raw_responses"].as_array().cloned().unwrap_or_default();
        for (i, (prompt, response)) in prompts.iter().zip(responses.iter()).enumerate() {
            println!("--- prompt {} ---", i + 1);
            if let Some(messages) = prompt["messages"].as_array() {
                for m in messages {
                    println!("[{}]", m["role"].as_str().unwrap_or("?"));
                    println!("{}", m["content"].as_str().unwrap_or_default());
                }
            }
            println!("--- response {} ---", i + 1);
            println!("{}", response.as_str().unwrap_or_default());
        }
        println!("final answer: {}", event["final_answer"]);
        println!(
            "score: {} -> {}",
            event["score"],
            if event["correct"].as_bool().unwrap_or(false) {
                "correct"
            } else {
                "incorrect"
            }
        );
        println!();
    }
    if !found {
        bail!("record `{}` not found in {}", args.id, args.log.display());
    }
    Ok(())
}

fn cmd_cache_clear(args: CacheClearArgs) -> anyhow::Result<()> {
    let removed = ResponseCache::new(&args.cache_dir).clear()?;
    println!("removed {removed} cached responses");
    Ok(())
}
