//! Staged runs driven by a [`RunConfig`]. Each stage reads its inputs from
//! configured files and upstream stage directories, writes into a staging
//! directory that atomically replaces `<output_dir>/<stage>`, and leaves a
//! [`RunManifest`] behind.

mod config;
mod manifest;
pub mod tasks;

pub use config::{
    CategorizeSettings, EmbeddingSettings, GenerationSettings, IngestSettings, Paths, ProviderKind, ReportSettings,
    ReviewSettings, RunConfig, ScoreSettings, SelectSettings, ValidateSettings, ENV_EMBED_KEY, ENV_EMBED_URL,
    ENV_LLM_KEY, ENV_LLM_URL,
};
pub use manifest::{hash_file, hash_input, hash_tree, OutputLock, RunManifest, StagingDir, MANIFEST_FILE, TOOL_VERSION};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::Utc;
use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::io::{write_json, write_string};
use tasks::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Embed,
    Categorize,
    Select,
    Generate,
    Review,
    Score,
    Validate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Embed,
        Stage::Categorize,
        Stage::Select,
        Stage::Generate,
        Stage::Review,
        Stage::Score,
        Stage::Validate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Categorize => "categorize",
            Stage::Select => "select",
            Stage::Generate => "generate",
            Stage::Review => "review",
            Stage::Score => "score",
            Stage::Validate => "validate",
            Stage::Report => "report",
        }
    }

    /// Stages whose manifests must exist before this one runs.
    pub fn upstream(self, config: &RunConfig) -> Vec<Stage> {
        match self {
            Stage::Ingest => vec![],
            Stage::Embed => vec![Stage::Ingest],
            Stage::Categorize => vec![Stage::Ingest, Stage::Embed],
            Stage::Select => vec![Stage::Ingest, Stage::Categorize],
            Stage::Generate => vec![Stage::Select],
            Stage::Review => vec![Stage::Generate],
            Stage::Score if config.score.instrument.is_none() => vec![Stage::Review],
            Stage::Score => vec![],
            Stage::Validate => vec![Stage::Generate],
            Stage::Report => vec![Stage::Ingest, Stage::Categorize],
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown stage `{s}`")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Machine-readable failure description printed by the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub stage: String,
    pub error_kind: String,
    pub detail: String,
    pub offending_ids: Vec<String>,
}

impl ErrorReport {
    pub fn new(stage: &str, err: &Error) -> Self {
        ErrorReport {
            stage: stage.to_string(),
            error_kind: err.kind().to_string(),
            detail: err.to_string(),
            offending_ids: err.offending_ids(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Upstream manifest fingerprint: the recorded output hashes, not the
/// timestamps, so reruns over identical inputs fingerprint identically.
fn upstream_fingerprint(m: &RunManifest) -> String {
    sha256_hex(serde_json::to_vec(&m.output_hashes).expect("hashes serialize"))
}

fn upstream_file(config: &RunConfig, stage: Stage, file: &str) -> PathBuf {
    config.stage_dir(stage).join(file)
}

/// Runs one stage. Without `force`, every upstream stage must have left a
/// manifest; with it, only the files actually read need to exist.
pub fn run_stage(stage: Stage, config: &RunConfig, force: bool) -> Result<RunManifest> {
    config.validate_for(stage)?;
    let out_root = config.output_dir();
    let _lock = OutputLock::acquire(&out_root)?;
    let started_at = manifest::timestamp(Utc::now());

    let mut input_hashes = BTreeMap::new();
    for up in stage.upstream(config) {
        let dir = config.stage_dir(up);
        match RunManifest::read(&dir) {
            Ok(m) => {
                input_hashes.insert(format!("{up}/{MANIFEST_FILE}"), upstream_fingerprint(&m));
            }
            Err(_) if force => {}
            Err(_) => {
                return Err(Error::MissingUpstream {
                    stage: up.to_string(),
                    path: dir.join(MANIFEST_FILE),
                })
            }
        }
    }
    for (key, path) in config.stage_inputs(stage) {
        if let Some(path) = path {
            let label = match stage {
                Stage::Score => format!("{key}:{}", path.file_name().unwrap_or_default().to_string_lossy()),
                _ => key.to_string(),
            };
            input_hashes.insert(label, hash_input(&path)?);
        }
    }

    let staging = StagingDir::new(&config.stage_dir(stage))?;
    execute(stage, config, staging.path())?;
    let manifest = staging.commit(RunManifest {
        stage: stage.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config.hash(),
        input_hashes,
        output_hashes: BTreeMap::new(),
        started_at,
        finished_at: String::new(),
    })?;
    info!("stage {stage} wrote {} files", manifest.output_hashes.len());
    Ok(manifest)
}

/// Runs all stages in order, stopping at the first failure.
pub fn run_all(config: &RunConfig) -> Result<Vec<RunManifest>> {
    Stage::ALL.iter().map(|s| run_stage(*s, config, false)).collect()
}

fn execute(stage: Stage, config: &RunConfig, out: &Path) -> Result<()> {
    let cache_dir = config.cache_dir();
    let cache_dir = cache_dir.as_deref();
    let corpus = || upstream_file(config, Stage::Ingest, CORPUS_FILE);
    let path = |key: &str, p: &Option<PathBuf>| config.required(key, p.as_ref());
    match stage {
        Stage::Ingest => {
            ingest_files(
                &path("paths.articles", &config.paths.articles)?,
                &path("paths.keywords", &config.paths.keywords)?,
                &path("paths.leanings", &config.paths.leanings)?,
                config.window()?,
                config.ingest.strict,
                &out.join(CORPUS_FILE),
            )?;
        }
        Stage::Embed => {
            embed_corpus(&corpus(), &config.embedding, cache_dir, &out.join(VECTORS_FILE))?;
        }
        Stage::Categorize => {
            categorize_files(
                &corpus(),
                Some(&upstream_file(config, Stage::Embed, VECTORS_FILE)),
                &path("paths.anchors", &config.paths.anchors)?,
                &config.reduction()?,
                config.categorize.aggregation,
                &config.embedding,
                cache_dir,
                out,
            )?;
        }
        Stage::Select => {
            let mut leanings: Vec<_> = config.select.leanings.iter().copied().map(Some).collect();
            leanings.push(None);
            select_files(
                &upstream_file(config, Stage::Categorize, SCORES_FILE),
                &corpus(),
                config.select.k,
                &leanings,
                out,
            )?;
        }
        Stage::Generate => {
            generate_files(
                &config.stage_dir(Stage::Select),
                &path("paths.anchors", &config.paths.anchors)?,
                &path("paths.templates", &config.paths.templates)?,
                config.paths.exemplars.as_ref().map(|p| config.resolve(p)).as_deref(),
                &config.generation,
                &config.select.leanings,
                &config.embedding,
                cache_dir,
                out,
            )?;
            dedup_file(
                &out.join(STATEMENTS_FILE),
                config.generation.dedup_threshold,
                &config.embedding,
                cache_dir,
                &out.join(DUPLICATES_FILE),
            )?;
        }
        Stage::Review => {
            let gen = config.stage_dir(Stage::Generate);
            let statements = gen.join(STATEMENTS_FILE);
            let sheet = out.join(REVIEW_SHEET_FILE);
            review_export_file(&statements, Some(&gen.join(DUPLICATES_FILE)), &sheet)?;
            let decisions = match &config.review.decisions {
                Some(p) => config.resolve(p),
                None => sheet,
            };
            review_import_file(&decisions, &statements, &out.join(INSTRUMENT_FILE))?;
        }
        Stage::Score => {
            let instrument = match &config.score.instrument {
                Some(p) => config.resolve(p),
                None => upstream_file(config, Stage::Review, SURVEY_INSTRUMENT_FILE),
            };
            let mut results = BTreeMap::new();
            for (wave, responses) in &config.score.responses {
                let r = score_file(&instrument, &config.resolve(responses), *wave, config.score.permissive_missing, out)?;
                results.insert(*wave, r);
            }
            if let (Some(pre), Some(post)) = (results.get(&crate::dri::Wave::Pre), results.get(&crate::dri::Wave::Post)) {
                write_json(&out.join("delta.json"), &crate::dri::dri_delta(pre, post)?)?;
            }
        }
        Stage::Validate => {
            let reference = path("validate.reference", &config.validate.reference)?;
            let matrix = out.join("matrix.csv");
            validate_match_file(
                &reference,
                &upstream_file(config, Stage::Generate, STATEMENTS_FILE),
                &config.embedding,
                cache_dir,
                &matrix,
            )?;
            validate_candidates_file(&matrix, config.validate.candidates, &out.join("candidates.csv"))?;
            if let Some(j) = &config.validate.judgments {
                write_json(&out.join("rate.json"), &rate_summary(&config.resolve(j), &reference)?)?;
            }
        }
        Stage::Report => report(config, out)?,
    }
    Ok(())
}

/// Overlap summary for one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub k: usize,
    pub pooled_mean_off_diagonal: f64,
    pub per_leaning_mean_off_diagonal: f64,
}

/// Writes histogram CSVs per category, overlap CSVs per k (pooled and
/// averaged over leanings), recounted ingestion statistics and, when the
/// score stage ran, copies of its scatter files.
pub fn report(config: &RunConfig, out: &Path) -> Result<()> {
    let corpus = upstream_file(config, Stage::Ingest, CORPUS_FILE);
    let table = load_scores(&upstream_file(config, Stage::Categorize, SCORES_FILE), &corpus)?;
    for category in &table.categories {
        let h = histogram_from_scores(&table, category, config.report.histogram_bins)?;
        write_string(&out.join("histograms").join(format!("{}.csv", slug(category))), &h.to_csv())?;
    }
    let mut summaries = Vec::new();
    for &k in &config.report.overlap_ks {
        let pooled = overlap_from_scores(&table, k, None)?;
        let by_leaning = leaning_averaged_overlap(&table, k, &config.select.leanings)?;
        write_string(&out.join(format!("overlap_k{k}.csv")), &pooled.to_csv())?;
        write_string(&out.join(format!("overlap_k{k}_leanings.csv")), &by_leaning.to_csv())?;
        summaries.push(OverlapSummary {
            k,
            pooled_mean_off_diagonal: pooled.mean_off_diagonal,
            per_leaning_mean_off_diagonal: by_leaning.mean_off_diagonal,
        });
    }
    write_json(&out.join("overlap_summary.json"), &summaries)?;
    write_json(&out.join("ingest_stats.json"), &ingest_stats(&corpus)?)?;

    let score_dir = config.stage_dir(Stage::Score);
    if score_dir.join(MANIFEST_FILE).exists() {
        let mut names: Vec<_> = std::fs::read_dir(&score_dir)
            .map_err(|e| Error::io(&score_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("scatter_") || n.starts_with("result_") || n == "delta.json")
            .collect();
        names.sort();
        for name in names {
            let from = score_dir.join(&name);
            let to = out.join("dri").join(&name);
            std::fs::create_dir_all(to.parent().unwrap()).map_err(|e| Error::io(&to, e))?;
            std::fs::copy(&from, &to).map_err(|e| Error::io(&from, e))?;
        }
    }
    Ok(())
}
