use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use driforge::categorization::Aggregation;
use driforge::corpus::{DateWindow, Leaning};
use driforge::dri::Wave;
use driforge::embedding::ReductionSpec;
use driforge::generation::PolicyScope;
use driforge::io::{write_json, write_string};
use driforge::pipeline::tasks::*;
use driforge::pipeline::{run_all, run_stage, ErrorReport, RunConfig, Stage};
use driforge::{Error, Result};

/// Build DRI survey instruments from a news corpus and score surveys.
///
/// Every stage command runs against a run config when only `--config` is
/// given. Passing explicit input and `--out` flags runs the step on those
/// files instead; `--config` then only supplies provider settings.
#[derive(Parser)]
#[command(name = "driforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run even if upstream manifests are missing.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Filter articles and split them into paragraphs.
    Ingest {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        keywords: Option<PathBuf>,
        #[arg(long)]
        leanings: Option<PathBuf>,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long)]
        strict: bool,
        /// Paragraph corpus to write (JSONL).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed every paragraph of a corpus.
    Embed {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score paragraphs against category anchors.
    Categorize {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Precomputed paragraph vectors; embedded on the fly otherwise.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// `none`, `pca`, `pca:<dim>` or `import:<path>`.
        #[arg(long, default_value = "none")]
        reduction: String,
        #[arg(long, default_value = "max")]
        aggregation: Aggregation,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the top-k paragraphs per category.
    Select {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        k: usize,
        /// Restrict to one leaning; repeat for several. Pooled when absent.
        #[arg(long)]
        leaning: Vec<Leaning>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Category overlap matrix of the top-k selections.
    Overlap {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        leaning: Option<Leaning>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Similarity histogram for one category.
    Histogram {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prompt the chat model over the category × leaning matrix.
    Generate {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        selections: Option<PathBuf>,
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        exemplars: Option<PathBuf>,
        #[arg(long)]
        policy_scope: Option<PolicyScope>,
        #[arg(long)]
        runs: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group near-identical statements.
    Dedup {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        statements: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a review sheet or import reviewer decisions.
    Review {
        #[command(flatten)]
        stage: StageArgs,
        #[command(subcommand)]
        action: Option<ReviewAction>,
    },
    /// DRI for one survey wave.
    Score {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        instrument: Option<PathBuf>,
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        wave: Option<Wave>,
        #[arg(long)]
        permissive_missing: bool,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Change in DRI between two scored waves.
    Delta {
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        post: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare generated statements with a reference survey.
    Validate {
        #[command(flatten)]
        stage: StageArgs,
        #[command(subcommand)]
        action: Option<ValidateAction>,
    },
    /// Histograms, overlaps, corpus statistics and DRI scatter data.
    Report {
        #[command(flatten)]
        stage: StageArgs,
    },
    /// Every stage in order.
    RunAll {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReviewAction {
    Export {
        #[arg(long)]
        statements: PathBuf,
        #[arg(long)]
        duplicates: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Import {
        #[arg(long)]
        sheet: PathBuf,
        #[arg(long)]
        statements: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ValidateAction {
    Match {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long, default_value = "matrix.csv")]
        out: PathBuf,
    },
    Candidates {
        #[arg(long, default_value = "matrix.csv")]
        matrix: PathBuf,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value = "candidates.csv")]
        out: PathBuf,
    },
    Rate {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Print only the rate without general-style reference items.
        #[arg(long)]
        exclude_general: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Embed { .. } => "embed",
            Command::Categorize { .. } => "categorize",
            Command::Select { .. } => "select",
            Command::Overlap { .. } => "overlap",
            Command::Histogram { .. } => "histogram",
            Command::Generate { .. } => "generate",
            Command::Dedup { .. } => "dedup",
            Command::Review { .. } => "review",
            Command::Score { .. } => "score",
            Command::Delta { .. } => "delta",
            Command::Validate { .. } => "validate",
            Command::Report { .. } => "report",
            Command::RunAll { .. } => "run-all",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", ErrorReport::new(name, &e).to_json());
            ExitCode::FAILURE
        }
    }
}

/// Settings for standalone runs: the given config, or defaults with
/// environment overrides.
fn settings(config: Option<&Path>) -> Result<RunConfig> {
    match config {
        Some(p) => RunConfig::load(p),
        None => {
            let mut c = RunConfig::default();
            c.apply_env();
            Ok(c)
        }
    }
}

fn stage_run(stage: Stage, args: &StageArgs) -> Result<()> {
    let path = args
        .config
        .as_deref()
        .ok_or_else(|| Error::Config(format!("`{stage}` needs --config or explicit input and --out flags")))?;
    let config = RunConfig::load(path)?;
    let m = run_stage(stage, &config, args.force)?;
    println!("{}", config.stage_dir(stage).join("manifest.json").display());
    log::info!("{} output files", m.output_hashes.len());
    Ok(())
}

fn need(flag: &str, v: Option<PathBuf>) -> Result<PathBuf> {
    v.ok_or_else(|| Error::Config(format!("--{flag} is required with --out")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_string(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { stage, input, keywords, leanings, from, to, strict, out } => {
            let Some(out) = out else { return stage_run(Stage::Ingest, &stage) };
            let cfg = settings(stage.config.as_deref())?;
            let window = DateWindow::new(from.unwrap_or(cfg.ingest.from), to.unwrap_or(cfg.ingest.to))?;
            let report = ingest_files(
                &need("input", input)?,
                &need("keywords", keywords)?,
                &need("leanings", leanings)?,
                window,
                strict,
                &out,
            )?;
            print_json(&report);
        }
        Command::Embed { stage, corpus, out } => {
            let Some(out) = out else { return stage_run(Stage::Embed, &stage) };
            let cfg = settings(stage.config.as_deref())?;
            let n = embed_corpus(&need("corpus", corpus)?, &cfg.embedding, cfg.cache_dir().as_deref(), &out)?;
            println!("{n} vectors");
        }
        Command::Categorize { stage, corpus, anchors, vectors, reduction, aggregation, out } => {
            let Some(out) = out else { return stage_run(Stage::Categorize, &stage) };
            let cfg = settings(stage.config.as_deref())?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let table = categorize_files(
                &need("corpus", corpus)?,
                vectors.as_deref(),
                &need("anchors", anchors)?,
                &ReductionSpec::parse(&reduction)?,
                aggregation,
                &cfg.embedding,
                cfg.cache_dir().as_deref(),
                &out,
            )?;
            println!("{} paragraphs scored against {} categories", table.rows.len(), table.categories.len());
        }
        Command::Select { stage, scores, corpus, k, leaning, out } => {
            let Some(out) = out else { return stage_run(Stage::Select, &stage) };
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let leanings: Vec<Option<Leaning>> = if leaning.is_empty() {
                vec![None]
            } else {
                leaning.into_iter().map(Some).collect()
            };
            let sels = select_files(&need("scores", scores)?, &need("corpus", corpus)?, k, &leanings, &out)?;
            println!("{} selections", sels.len());
        }
        Command::Overlap { scores, corpus, k, leaning, out } => {
            let table = load_scores(&scores, &corpus)?;
            let m = overlap_from_scores(&table, k, leaning)?;
            emit(out.as_deref(), &m.to_csv())?;
        }
        Command::Histogram { scores, corpus, category, bins, out } => {
            let table = load_scores(&scores, &corpus)?;
            let h = histogram_from_scores(&table, &category, bins)?;
            emit(out.as_deref(), &h.to_csv())?;
        }
        Command::Generate { stage, selections, anchors, templates, exemplars, policy_scope, runs, out } => {
            let Some(out) = out else { return stage_run(Stage::Generate, &stage) };
            let mut cfg = settings(stage.config.as_deref())?;
            if let Some(s) = policy_scope {
                cfg.generation.policy_scope = s;
            }
            if let Some(r) = runs {
                cfg.generation.runs = r;
            }
            cfg.check()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let output = generate_files(
                &need("selections", selections)?,
                &need("anchors", anchors)?,
                &need("templates", templates)?,
                exemplars.as_deref(),
                &cfg.generation,
                &cfg.select.leanings,
                &cfg.embedding,
                cfg.cache_dir().as_deref(),
                &out,
            )?;
            print_json(&output.report);
        }
        Command::Dedup { stage, statements, threshold, out } => {
            let cfg = settings(stage.config.as_deref())?;
            let outcome = dedup_file(&statements, threshold, &cfg.embedding, cfg.cache_dir().as_deref(), &out)?;
            println!("kept {}, {} duplicate groups", outcome.kept.len(), outcome.groups.len());
        }
        Command::Review { stage, action } => match action {
            None => return stage_run(Stage::Review, &stage),
            Some(ReviewAction::Export { statements, duplicates, out }) => {
                let sheet = review_export_file(&statements, duplicates.as_deref(), &out)?;
                println!("{} rows", sheet.rows.len());
            }
            Some(ReviewAction::Import { sheet, statements, out }) => {
                let inst = review_import_file(&sheet, &statements, &out)?;
                println!("{} considerations, {} policies", inst.considerations.len(), inst.policies.len());
            }
        },
        Command::Score { stage, instrument, responses, wave, permissive_missing, out } => {
            let Some(out) = out else { return stage_run(Stage::Score, &stage) };
            let instrument = need("instrument", instrument)?;
            let responses = need("responses", responses)?;
            let wave = wave.ok_or_else(|| Error::Config("--wave is required with --out".into()))?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let result = score_file(&instrument, &responses, wave, permissive_missing, &out)?;
            println!("group DRI {:.4} over {} participants", result.group, result.individual.len());
        }
        Command::Delta { pre, post, out } => {
            let d = delta_files(&pre, &post)?;
            match out {
                Some(p) => write_json(&p, &d)?,
                None => print_json(&d),
            }
        }
        Command::Validate { stage, action } => match action {
            None => return stage_run(Stage::Validate, &stage),
            Some(ValidateAction::Match { reference, generated, out }) => {
                let cfg = settings(stage.config.as_deref())?;
                let m = validate_match_file(&reference, &generated, &cfg.embedding, cfg.cache_dir().as_deref(), &out)?;
                println!("{} × {} similarities", m.reference_ids.len(), m.generated_ids.len());
            }
            Some(ValidateAction::Candidates { matrix, n, out }) => {
                let rows = validate_candidates_file(&matrix, n, &out)?;
                println!("{rows} candidate rows");
            }
            Some(ValidateAction::Rate { judgments, reference, exclude_general }) => {
                let summary = rate_summary(&judgments, &reference)?;
                if exclude_general {
                    print_json(&summary.all_excluding_general);
                } else {
                    print_json(&summary);
                }
            }
        },
        Command::Report { stage } => return stage_run(Stage::Report, &stage),
        Command::RunAll { config } => {
            let cfg = RunConfig::load(&config)?;
            let manifests = run_all(&cfg)?;
            println!("{} stages written to {}", manifests.len(), cfg.output_dir().display());
        }
    }
    Ok(())
}
