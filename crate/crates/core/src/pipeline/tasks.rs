//! File-to-file operations behind each CLI command. Stages call these with
//! paths inside their staging directory; the standalone commands call them
//! with user-supplied paths.

use std::collections::{BTreeMap, HashMap};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{EmbeddingSettings, GenerationSettings};
use crate::categorization::{
    embed_anchors, overlap_matrix, score_paragraphs, select_top_k, similarity_histogram, Aggregation, AnchorSet,
    Histogram, OverlapMatrix, ScoreTable, Selection, SelectionRow,
};
use crate::corpus::{build_paragraphs, ingest, CorpusReport, CorpusStats, DateWindow, KeywordList, Leaning, LeaningMap, Paragraph};
use crate::dri::{
    dri_delta, export_scatter, read_responses, score_wave, DriDelta, DriResult, ScoringOptions, SurveyInstrument, Wave,
};
use crate::embedding::{embed_batch, EmbeddingVector, ImportRow, ReductionSpec};
use crate::error::{Error, Result};
use crate::generation::{
    dedup_statements, review_export, review_import, run_matrix, select_exemplars, DedupOutcome, DuplicateGroup,
    ExemplarBank, FinalInstrument, GeneratedStatement, MatrixConfig, MatrixOutput, PromptTemplates, ReviewSheet, Role,
};
use crate::io::{read_json, read_jsonl, write_json, write_jsonl, write_string};
use crate::validation::{
    all_candidates, candidates_to_csv, match_matrix, match_rate, read_judgments, read_reference, MatchMatrix, MatchRate,
    ReferenceItem, ReferenceKind,
};

pub const CORPUS_FILE: &str = "paragraphs.jsonl";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const VECTORS_FILE: &str = "vectors.jsonl";
pub const SCORES_FILE: &str = "scores.csv";
pub const SELECTIONS_FILE: &str = "selections.jsonl";
pub const SELECTED_PARAGRAPHS_FILE: &str = "paragraphs.jsonl";
pub const STATEMENTS_FILE: &str = "statements.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const DUPLICATES_FILE: &str = "duplicates.json";
pub const REVIEW_SHEET_FILE: &str = "review_sheet.csv";
pub const INSTRUMENT_FILE: &str = "instrument.json";
pub const SURVEY_INSTRUMENT_FILE: &str = "survey_instrument.json";

pub fn read_corpus(path: &Path) -> Result<Vec<Paragraph>> {
    read_jsonl(path)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

/// Reads the article dump, filters it and writes the paragraph corpus to
/// `corpus_out`, with the ingestion report beside it.
pub fn ingest_files(
    articles: &Path,
    keywords: &Path,
    leanings: &Path,
    window: DateWindow,
    strict: bool,
    corpus_out: &Path,
) -> Result<CorpusReport> {
    let keywords = KeywordList::from_csv_path(keywords)?;
    let leanings = LeaningMap::from_csv_path(leanings)?;
    let file = std::fs::File::open(articles).map_err(|e| Error::io(articles, e))?;
    let (kept, ingest_report) = ingest(BufReader::new(file), window, &keywords, strict)?;
    let (paragraphs, mut report) = build_paragraphs(&kept, &keywords, &leanings);
    report.ingest = ingest_report;
    write_jsonl(corpus_out, &paragraphs)?;
    write_json(&sibling(corpus_out, INGEST_REPORT_FILE), &report)?;
    info!(
        "ingested {} articles into {} paragraphs",
        report.ingest.kept,
        paragraphs.len()
    );
    Ok(report)
}

/// Embeds every paragraph of a corpus and writes `{id, vec}` rows.
pub fn embed_corpus(
    corpus: &Path,
    settings: &EmbeddingSettings,
    cache_dir: Option<&Path>,
    out: &Path,
) -> Result<usize> {
    let paragraphs = read_corpus(corpus)?;
    let provider = settings.provider()?;
    let cache = settings.cache(provider.as_ref(), cache_dir)?;
    let texts: Vec<String> = paragraphs.iter().map(|p| p.text.clone()).collect();
    let vectors = embed_batch(&texts, provider.as_ref(), &cache, &settings.batch_options())?;
    let rows: Vec<ImportRow> = paragraphs
        .iter()
        .zip(vectors)
        .map(|(p, v)| ImportRow {
            id: p.id.clone(),
            vec: v.values().to_vec(),
        })
        .collect();
    write_jsonl(out, &rows)?;
    Ok(rows.len())
}

pub fn read_vectors(path: &Path) -> Result<Vec<(String, EmbeddingVector)>> {
    read_jsonl::<ImportRow>(path)?
        .into_iter()
        .map(|r| Ok((r.id, EmbeddingVector::new(r.vec)?)))
        .collect()
}

fn leaning_map(paragraphs: &[Paragraph]) -> HashMap<String, Option<Leaning>> {
    paragraphs.iter().map(|p| (p.id.clone(), p.leaning)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizeRecord {
    pub reduction: ReductionSpec,
    pub aggregation: Aggregation,
    pub provider: String,
    pub model: String,
    pub categories: Vec<String>,
    pub paragraphs: usize,
}

/// Scores a corpus against the anchors and writes `scores.csv` plus a
/// provenance record into `out_dir`. Paragraph vectors come from
/// `vectors` when given, otherwise they are embedded here.
#[allow(clippy::too_many_arguments)]
pub fn categorize_files(
    corpus: &Path,
    vectors: Option<&Path>,
    anchors: &Path,
    reduction: &ReductionSpec,
    aggregation: Aggregation,
    settings: &EmbeddingSettings,
    cache_dir: Option<&Path>,
    out_dir: &Path,
) -> Result<ScoreTable> {
    let paragraphs = read_corpus(corpus)?;
    let anchors = AnchorSet::from_json_path(anchors)?;
    let provider = settings.provider()?;
    let cache = settings.cache(provider.as_ref(), cache_dir)?;
    let opts = settings.batch_options();
    let ids: Vec<String> = paragraphs.iter().map(|p| p.id.clone()).collect();
    let para_vectors: Vec<EmbeddingVector> = match vectors {
        Some(path) => {
            let mut by_id: HashMap<String, EmbeddingVector> = read_vectors(path)?.into_iter().collect();
            let missing: Vec<String> = ids.iter().filter(|id| !by_id.contains_key(*id)).cloned().collect();
            if !missing.is_empty() {
                return Err(Error::Discrepancy {
                    message: format!("paragraphs without a vector in {}", path.display()),
                    ids: missing,
                });
            }
            ids.iter().map(|id| by_id.remove(id).expect("checked")).collect()
        }
        None => {
            let texts: Vec<String> = paragraphs.iter().map(|p| p.text.clone()).collect();
            embed_batch(&texts, provider.as_ref(), &cache, &opts)?
        }
    };
    let (anchors, reduced) = embed_anchors(&anchors, provider.as_ref(), &cache, &opts, reduction, &ids, &para_vectors)?;
    let by_id: HashMap<String, EmbeddingVector> = ids.iter().cloned().zip(reduced).collect();
    let table = score_paragraphs(&ids, &leaning_map(&paragraphs), &by_id, &anchors, aggregation)?;
    write_string(&out_dir.join(SCORES_FILE), &table.to_csv()?)?;
    write_json(
        &out_dir.join("categorize.json"),
        &CategorizeRecord {
            reduction: reduction.clone(),
            aggregation,
            provider: provider.provider_id().to_string(),
            model: provider.model_id().to_string(),
            categories: table.categories.clone(),
            paragraphs: table.rows.len(),
        },
    )?;
    Ok(table)
}

pub fn load_scores(scores: &Path, corpus: &Path) -> Result<ScoreTable> {
    let paragraphs = read_corpus(corpus)?;
    ScoreTable::from_csv_path(scores, &leaning_map(&paragraphs))
}

/// Top-k per category for each requested leaning (`None` = pooled).
/// Writes the selection rows and the texts of every selected paragraph so
/// the output directory is self-contained for generation.
pub fn select_files(
    scores: &Path,
    corpus: &Path,
    k: usize,
    leanings: &[Option<Leaning>],
    out_dir: &Path,
) -> Result<Vec<Selection>> {
    let paragraphs = read_corpus(corpus)?;
    let table = ScoreTable::from_csv_path(scores, &leaning_map(&paragraphs))?;
    let mut selections = Vec::new();
    for category in &table.categories {
        for &leaning in leanings {
            let sel = select_top_k(&table, category, k, leaning)?;
            if sel.len() < k {
                warn!(
                    "only {} paragraphs available for {category} / {}",
                    sel.len(),
                    leaning.map(|l| l.as_str()).unwrap_or("pooled")
                );
            }
            selections.push(sel);
        }
    }
    let rows: Vec<SelectionRow> = selections.iter().flat_map(Selection::rows).collect();
    write_jsonl(&out_dir.join(SELECTIONS_FILE), &rows)?;
    let chosen: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.paragraph_id.as_str()).collect();
    let texts: Vec<&Paragraph> = paragraphs.iter().filter(|p| chosen.contains(p.id.as_str())).collect();
    write_jsonl(&out_dir.join(SELECTED_PARAGRAPHS_FILE), &texts)?;
    Ok(selections)
}

pub fn read_selections(dir: &Path) -> Result<(Vec<Selection>, HashMap<String, String>)> {
    let rows: Vec<SelectionRow> = read_jsonl(&dir.join(SELECTIONS_FILE))?;
    let paragraphs = read_corpus(&dir.join(SELECTED_PARAGRAPHS_FILE))?;
    Ok((
        Selection::from_rows(&rows),
        paragraphs.into_iter().map(|p| (p.id, p.text)).collect(),
    ))
}

pub fn overlap_from_scores(table: &ScoreTable, k: usize, leaning: Option<Leaning>) -> Result<OverlapMatrix> {
    let sels = table
        .categories
        .iter()
        .map(|c| select_top_k(table, c, k, leaning))
        .collect::<Result<Vec<_>>>()?;
    overlap_matrix(&sels)
}

/// Element-wise mean of the per-leaning overlap matrices.
pub fn leaning_averaged_overlap(table: &ScoreTable, k: usize, leanings: &[Leaning]) -> Result<OverlapMatrix> {
    let mats = leanings
        .iter()
        .map(|l| overlap_from_scores(table, k, Some(*l)))
        .collect::<Result<Vec<_>>>()?;
    let first = mats
        .first()
        .ok_or_else(|| Error::InvalidInput("no leanings to average over".into()))?;
    let n = first.categories.len();
    let avg = |pick: fn(&OverlapMatrix) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| mats.iter().map(|m| pick(m)[i][j]).sum::<f64>() / mats.len() as f64).collect())
            .collect()
    };
    let mean = |f: fn(&OverlapMatrix) -> f64| mats.iter().map(f).sum::<f64>() / mats.len() as f64;
    Ok(OverlapMatrix {
        categories: first.categories.clone(),
        k,
        leaning: None,
        values: avg(|m| &m.values),
        jaccard: avg(|m| &m.jaccard),
        mean_off_diagonal: mean(|m| m.mean_off_diagonal),
        mean_off_diagonal_jaccard: mean(|m| m.mean_off_diagonal_jaccard),
    })
}

pub fn histogram_from_scores(table: &ScoreTable, category: &str, bins: usize) -> Result<Histogram> {
    similarity_histogram(table, category, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReportFile {
    pub model: String,
    pub temperature: f64,
    pub statement_count: usize,
    pub policy_scope: crate::generation::PolicyScope,
    pub runs: usize,
    pub exemplars_per_prompt: usize,
    pub report: crate::generation::MatrixReport,
}

/// Runs the generation matrix over a selections directory and writes the
/// statement corpus, the prompt records and a report into `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn generate_files(
    selections_dir: &Path,
    anchors: &Path,
    templates: &Path,
    exemplars: Option<&Path>,
    settings: &GenerationSettings,
    leanings: &[Leaning],
    embedding: &EmbeddingSettings,
    cache_dir: Option<&Path>,
    out_dir: &Path,
) -> Result<MatrixOutput> {
    let anchors = AnchorSet::from_json_path(anchors)?;
    let templates = PromptTemplates::load_dir(templates)?;
    let (selections, texts) = read_selections(selections_dir)?;

    let mut exemplar_map: HashMap<(String, Role), Vec<String>> = HashMap::new();
    if let Some(path) = exemplars {
        let bank = ExemplarBank::from_jsonl_path(path)?;
        let provider = embedding.provider()?;
        let cache = embedding.cache(provider.as_ref(), cache_dir)?;
        let opts = embedding.batch_options();
        let (embedded, _) = embed_anchors(&anchors, provider.as_ref(), &cache, &opts, &ReductionSpec::none(), &[], &[])?;
        for name in embedded.names() {
            let centroid = embedded.centroid(&name).expect("embedded anchors have centroids");
            for role in [Role::Consideration, Role::Policy] {
                let picked = select_exemplars(
                    &bank,
                    role,
                    &centroid,
                    provider.as_ref(),
                    &cache,
                    &opts,
                    settings.exemplars_per_prompt,
                )?;
                exemplar_map.insert((name.clone(), role), picked);
            }
        }
    }

    let config = MatrixConfig {
        categories: anchors.names(),
        general_category: anchors.general().map(|c| c.name.clone()),
        leanings: leanings.to_vec(),
        policy_scope: settings.policy_scope,
        statement_count: settings.statement_count,
        runs: settings.runs,
        parallelism: settings.parallelism,
        strict: settings.strict,
    };
    let client = settings.client()?;
    let out = run_matrix(
        &config,
        &selections,
        &texts,
        &templates,
        &exemplar_map,
        client.as_ref(),
        &settings.options(),
    )?;
    write_jsonl(&out_dir.join(STATEMENTS_FILE), &out.statements)?;
    write_jsonl(&out_dir.join(PROMPTS_FILE), &out.prompts)?;
    write_json(
        &out_dir.join("generation_report.json"),
        &GenerationReportFile {
            model: client.model().to_string(),
            temperature: settings.temperature,
            statement_count: settings.statement_count,
            policy_scope: settings.policy_scope,
            runs: settings.runs,
            exemplars_per_prompt: if exemplars.is_some() { settings.exemplars_per_prompt } else { 0 },
            report: out.report.clone(),
        },
    )?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatesFile {
    pub threshold: f64,
    pub kept: usize,
    pub duplicates: usize,
    pub groups: Vec<DuplicateGroup>,
}

pub fn dedup_file(
    statements: &Path,
    threshold: f64,
    embedding: &EmbeddingSettings,
    cache_dir: Option<&Path>,
    out: &Path,
) -> Result<DedupOutcome> {
    let statements: Vec<GeneratedStatement> = read_jsonl(statements)?;
    let provider = embedding.provider()?;
    let cache = embedding.cache(provider.as_ref(), cache_dir)?;
    let outcome = dedup_statements(&statements, provider.as_ref(), &cache, &embedding.batch_options(), threshold)?;
    write_json(
        out,
        &DuplicatesFile {
            threshold,
            kept: outcome.kept.len(),
            duplicates: statements.len() - outcome.kept.len(),
            groups: outcome.groups.clone(),
        },
    )?;
    Ok(outcome)
}

pub fn review_export_file(statements: &Path, duplicates: Option<&Path>, out: &Path) -> Result<ReviewSheet> {
    let statements: Vec<GeneratedStatement> = read_jsonl(statements)?;
    let groups = match duplicates {
        Some(p) => read_json::<DuplicatesFile>(p)?.groups,
        None => Vec::new(),
    };
    let sheet = review_export(&statements, &groups);
    write_string(out, &sheet.to_csv()?)?;
    Ok(sheet)
}

/// Applies a review sheet and writes the final instrument. When it has at
/// least two items per role, the scoring instrument is written beside it.
pub fn review_import_file(sheet: &Path, statements: &Path, out: &Path) -> Result<FinalInstrument> {
    let statements: Vec<GeneratedStatement> = read_jsonl(statements)?;
    let sheet = ReviewSheet::from_csv_path(sheet)?;
    let inst = review_import(&sheet, &statements)?;
    write_json(out, &inst)?;
    match inst.survey_instrument(Default::default(), Default::default()) {
        Ok(survey) => write_json(&sibling(out, SURVEY_INSTRUMENT_FILE), &survey)?,
        Err(e) => warn!("no scoring instrument written: {e}"),
    }
    Ok(inst)
}

/// Scores one wave of a responses file. Rows for other waves are ignored.
pub fn score_file(
    instrument: &Path,
    responses: &Path,
    wave: Wave,
    permissive_missing: bool,
    out_dir: &Path,
) -> Result<DriResult> {
    let inst = SurveyInstrument::from_json_path(instrument)?;
    let all = read_responses(responses, &inst)?;
    let in_wave: Vec<_> = all.into_iter().filter(|r| r.wave == wave).collect();
    if in_wave.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} has no responses for wave `{wave}`",
            responses.display()
        )));
    }
    let result = score_wave(&in_wave, &inst, ScoringOptions { permissive_missing })?;
    write_json(&out_dir.join(format!("result_{wave}.json")), &result)?;
    let scatter = export_scatter(&result);
    write_string(&out_dir.join(format!("scatter_{wave}.csv")), &scatter.csv)?;
    write_json(&out_dir.join(format!("scatter_{wave}.json")), &scatter.metadata)?;
    Ok(result)
}

pub fn delta_files(pre: &Path, post: &Path) -> Result<DriDelta> {
    let pre: DriResult = read_json(pre)?;
    let post: DriResult = read_json(post)?;
    dri_delta(&pre, &post)
}

fn statement_pairs(statements: &[GeneratedStatement]) -> Vec<(String, String)> {
    statements.iter().map(|s| (s.id.clone(), s.text.clone())).collect()
}

pub fn validate_match_file(
    reference: &Path,
    generated: &Path,
    embedding: &EmbeddingSettings,
    cache_dir: Option<&Path>,
    out: &Path,
) -> Result<MatchMatrix> {
    let reference = read_reference(reference)?;
    let generated: Vec<GeneratedStatement> = read_jsonl(generated)?;
    let provider = embedding.provider()?;
    let cache = embedding.cache(provider.as_ref(), cache_dir)?;
    let refs: Vec<(String, String)> = reference.iter().map(|r| (r.id.clone(), r.text.clone())).collect();
    let matrix = match_matrix(&refs, &statement_pairs(&generated), provider.as_ref(), &cache, &embedding.batch_options())?;
    write_string(out, &matrix.to_csv())?;
    Ok(matrix)
}

pub fn validate_candidates_file(matrix: &Path, n: usize, out: &Path) -> Result<usize> {
    let matrix = MatchMatrix::from_csv_path(matrix)?;
    let cands = all_candidates(&matrix, n)?;
    write_string(out, &candidates_to_csv(&cands))?;
    Ok(cands.len())
}

/// Match rates overall and per reference kind, each with and without the
/// general-style items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub all: MatchRate,
    pub considerations: Option<MatchRate>,
    pub preferences: Option<MatchRate>,
    pub all_excluding_general: MatchRate,
    pub considerations_excluding_general: Option<MatchRate>,
}

pub fn rate_summary(judgments: &Path, reference: &Path) -> Result<RateSummary> {
    let judgments = read_judgments(judgments)?;
    let reference = read_reference(reference)?;
    let of_kind = |k: ReferenceKind| -> Vec<ReferenceItem> { reference.iter().filter(|r| r.kind == k).cloned().collect() };
    let rate_opt = |items: Vec<ReferenceItem>, exclude: bool| -> Result<Option<MatchRate>> {
        if items.is_empty() {
            Ok(None)
        } else {
            match_rate(&judgments, &items, exclude).map(Some)
        }
    };
    Ok(RateSummary {
        all: match_rate(&judgments, &reference, false)?,
        considerations: rate_opt(of_kind(ReferenceKind::Consideration), false)?,
        preferences: rate_opt(of_kind(ReferenceKind::Preference), false)?,
        all_excluding_general: match_rate(&judgments, &reference, true)?,
        considerations_excluding_general: rate_opt(of_kind(ReferenceKind::Consideration), true)?,
    })
}

/// Ingestion statistics recounted from a paragraph corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub articles_with_paragraphs: usize,
    pub paragraphs: usize,
    pub mean_paragraphs_per_article: f64,
    pub median_paragraphs_per_article: f64,
    pub paragraphs_per_leaning: BTreeMap<String, usize>,
}

pub fn ingest_stats(corpus: &Path) -> Result<IngestStats> {
    let paragraphs = read_corpus(corpus)?;
    let stats = CorpusStats::from_paragraphs(&paragraphs);
    let mut per_leaning = BTreeMap::new();
    for p in &paragraphs {
        let key = p.leaning.map(|l| l.as_str()).unwrap_or("unknown").to_string();
        *per_leaning.entry(key).or_default() += 1;
    }
    Ok(IngestStats {
        articles_with_paragraphs: stats.articles,
        paragraphs: stats.paragraphs,
        mean_paragraphs_per_article: stats.mean_paragraphs_per_article,
        median_paragraphs_per_article: stats.median_paragraphs_per_article,
        paragraphs_per_leaning: per_leaning,
    })
}

/// File-name-safe form of a category name.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}
