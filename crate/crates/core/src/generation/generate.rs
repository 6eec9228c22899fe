use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{build_prompt, ChatClient, ChatMessage, GeneratedStatement, PromptRecord, PromptSpec, PromptTemplates, Role};
use crate::categorization::Selection;
use crate::corpus::Leaning;
use crate::error::{Error, Result};
use crate::hashing::short_id;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOptions {
    pub temperature: f64,
    /// Total parse attempts per prompt, the first call included.
    pub max_attempts: u32,
    /// Calls per attempt before a transport failure is surfaced.
    pub transport_attempts: u32,
    pub backoff: Duration,
    pub run_id: String,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            temperature: 0.2,
            max_attempts: 3,
            transport_attempts: 3,
            backoff: Duration::from_millis(500),
            run_id: "run-01".into(),
        }
    }
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses a reply that must be a flat JSON array of exactly `expected`
/// non-empty single-line strings. A surrounding markdown code fence is
/// tolerated. The error is a correction hint suitable for the model.
pub fn parse_statements(raw: &str, expected: usize) -> std::result::Result<Vec<String>, String> {
    let value: serde_json::Value = serde_json::from_str(strip_fences(raw))
        .map_err(|e| format!("the reply was not valid JSON ({e})"))?;
    let items = value
        .as_array()
        .ok_or_else(|| "the reply must be a JSON array, not an object or scalar".to_string())?;
    if items.len() != expected {
        return Err(format!(
            "the array has {} elements but exactly {expected} are required",
            items.len()
        ));
    }
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let s = item
            .as_str()
            .ok_or_else(|| format!("element {} is not a string", i + 1))?
            .trim();
        if s.is_empty() {
            return Err(format!("element {} is empty", i + 1));
        }
        if s.contains('\n') {
            return Err(format!("element {} spans several lines; give one statement per element", i + 1));
        }
        let marker = s.starts_with("- ")
            || s.starts_with("* ")
            || s.starts_with('•')
            || s.split_once(". ").is_some_and(|(head, _)| !head.is_empty() && head.chars().all(|c| c.is_ascii_digit()));
        if marker {
            return Err(format!("element {} starts with list markup", i + 1));
        }
        out.push(s.to_string());
    }
    Ok(out)
}

fn correction(reason: &str, n: usize) -> String {
    format!(
        "Your previous answer could not be used: {reason}. Reply again with only a JSON array of exactly {n} strings, one statement per string, and no other text."
    )
}

fn call_with_retry(
    client: &dyn ChatClient,
    messages: &[ChatMessage],
    options: &GenerationOptions,
) -> Result<String> {
    let attempts = options.transport_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        match client.complete(messages, options.temperature) {
            Ok(reply) => return Ok(reply),
            Err(e) => {
                warn!("chat call failed (attempt {attempt}/{attempts}): {e}");
                last = e.0;
                if attempt < attempts {
                    std::thread::sleep(options.backoff * 2u32.pow(attempt - 1));
                }
            }
        }
    }
    Err(Error::Transport(format!("gave up after {attempts} attempts: {last}")))
}

/// Runs one prompt to completion. Malformed replies are answered with a
/// correction message in the same conversation until `max_attempts` replies
/// have been seen.
pub fn generate(
    spec: &PromptSpec,
    client: &dyn ChatClient,
    options: &GenerationOptions,
) -> Result<Vec<GeneratedStatement>> {
    let mut messages = spec.messages();
    let mut transcripts = Vec::new();
    let attempts = options.max_attempts.max(1);
    let mut reason = String::new();
    for _ in 0..attempts {
        let reply = call_with_retry(client, &messages, options)?;
        match parse_statements(&reply, spec.statement_count) {
            Ok(texts) => {
                return Ok(texts
                    .into_iter()
                    .enumerate()
                    .map(|(i, text)| GeneratedStatement {
                        id: short_id(
                            spec.role.id_prefix(),
                            format!("{}\0{}\0{i}", options.run_id, spec.prompt_hash),
                        ),
                        role: spec.role,
                        text,
                        category: spec.category.clone(),
                        leaning: spec.leaning,
                        run_id: options.run_id.clone(),
                        prompt_hash: spec.prompt_hash.clone(),
                    })
                    .collect())
            }
            Err(why) => {
                warn!("malformed reply for {} / {} / {}: {why}", spec.role, spec.category, spec.leaning);
                messages.push(ChatMessage::assistant(reply.clone()));
                messages.push(ChatMessage::user(correction(&why, spec.statement_count)));
                transcripts.push(reply);
                reason = why;
            }
        }
    }
    Err(Error::Generation {
        attempts,
        reason,
        transcripts,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyScope {
    /// Policy options only for the general category.
    #[default]
    General,
    All,
}

impl FromStr for PolicyScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "general" => Ok(PolicyScope::General),
            "all" => Ok(PolicyScope::All),
            other => Err(Error::InvalidInput(format!("unknown policy scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    /// Categories in output order.
    pub categories: Vec<String>,
    pub general_category: Option<String>,
    pub leanings: Vec<Leaning>,
    pub policy_scope: PolicyScope,
    pub statement_count: usize,
    pub runs: usize,
    /// Cells in flight at once.
    pub parallelism: usize,
    pub strict: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            categories: Vec::new(),
            general_category: None,
            leanings: Leaning::ALL.to_vec(),
            policy_scope: PolicyScope::General,
            statement_count: 5,
            runs: 1,
            parallelism: 4,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellId {
    pub run_id: String,
    pub category: String,
    pub leaning: Leaning,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: CellId,
    pub error_kind: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub cells_planned: usize,
    pub cells_succeeded: usize,
    pub considerations: usize,
    pub policies: usize,
    pub total: usize,
    pub missing: Vec<CellId>,
    pub failures: Vec<CellFailure>,
    /// Statement texts produced by more than one run, with their counts.
    pub repeated_texts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutput {
    pub statements: Vec<GeneratedStatement>,
    pub prompts: Vec<PromptRecord>,
    pub report: MatrixReport,
}

fn run_id(r: usize) -> String {
    format!("run-{:02}", r + 1)
}

/// Generates statements for every (run, category, leaning, role) cell.
///
/// Considerations cover all categories; policy options cover the general
/// category or all categories depending on the scope. Output is ordered by
/// run, category (config order), leaning (config order), role and index,
/// whatever order the cells finish in. `exemplars` maps (category, role) to
/// the exemplar texts for that prompt; absent keys mean none.
pub fn run_matrix(
    config: &MatrixConfig,
    selections: &[Selection],
    paragraph_texts: &HashMap<String, String>,
    templates: &PromptTemplates,
    exemplars: &HashMap<(String, Role), Vec<String>>,
    client: &dyn ChatClient,
    options: &GenerationOptions,
) -> Result<MatrixOutput> {
    if config.runs == 0 || config.statement_count == 0 {
        return Err(Error::Config("runs and statement_count must be at least 1".into()));
    }
    let policy_categories: Vec<&String> = match config.policy_scope {
        PolicyScope::All => config.categories.iter().collect(),
        PolicyScope::General => {
            let general = config.general_category.as_ref().ok_or_else(|| {
                Error::Config("policy scope `general` needs a general category in the anchors".into())
            })?;
            vec![general]
        }
    };
    let by_cell: HashMap<(&str, Leaning), &Selection> = selections
        .iter()
        .filter_map(|s| s.leaning.map(|l| ((s.category.as_str(), l), s)))
        .collect();

    let mut cells = Vec::new();
    for r in 0..config.runs {
        for category in &config.categories {
            for &leaning in &config.leanings {
                for role in [Role::Consideration, Role::Policy] {
                    if role == Role::Policy && !policy_categories.contains(&category) {
                        continue;
                    }
                    cells.push(CellId {
                        run_id: run_id(r),
                        category: category.clone(),
                        leaning,
                        role,
                    });
                }
            }
        }
    }

    let mut report = MatrixReport {
        cells_planned: cells.len(),
        ..Default::default()
    };
    let mut runnable = Vec::new();
    for cell in cells {
        match by_cell.get(&(cell.category.as_str(), cell.leaning)).copied() {
            Some(sel) => runnable.push((cell, sel)),
            None => report.missing.push(cell),
        }
    }
    if config.strict && !report.missing.is_empty() {
        return Err(Error::Discrepancy {
            message: "no selection for cells".into(),
            ids: report
                .missing
                .iter()
                .map(|c| format!("{}/{}", c.category, c.leaning))
                .collect(),
        });
    }

    let results: Vec<Mutex<Option<Result<(PromptRecord, Vec<GeneratedStatement>)>>>> =
        runnable.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.parallelism.clamp(1, runnable.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((cell, selection)) = runnable.get(i) else {
                    break;
                };
                let no_exemplars = Vec::new();
                let ex = exemplars
                    .get(&(cell.category.clone(), cell.role))
                    .unwrap_or(&no_exemplars);
                let outcome = build_prompt(
                    cell.role,
                    &cell.category,
                    cell.leaning,
                    selection,
                    paragraph_texts,
                    templates,
                    ex,
                    config.statement_count,
                )
                .and_then(|spec| {
                    let opts = GenerationOptions {
                        run_id: cell.run_id.clone(),
                        ..options.clone()
                    };
                    generate(&spec, client, &opts).map(|s| (spec.record(), s))
                });
                *results[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut statements = Vec::new();
    let mut prompts: Vec<PromptRecord> = Vec::new();
    for ((cell, _), slot) in runnable.into_iter().zip(results) {
        match slot.into_inner().unwrap().expect("every cell runs") {
            Ok((record, batch)) => {
                report.cells_succeeded += 1;
                if !prompts.iter().any(|p| p.prompt_hash == record.prompt_hash) {
                    prompts.push(record);
                }
                statements.extend(batch);
            }
            Err(e) => {
                if config.strict {
                    return Err(e);
                }
                let transcripts = match &e {
                    Error::Generation { transcripts, .. } => transcripts.clone(),
                    _ => Vec::new(),
                };
                report.failures.push(CellFailure {
                    cell,
                    error_kind: e.kind().to_string(),
                    detail: e.to_string(),
                    transcripts,
                });
            }
        }
    }
    report.considerations = statements.iter().filter(|s| s.role == Role::Consideration).count();
    report.policies = statements.iter().filter(|s| s.role == Role::Policy).count();
    report.total = statements.len();
    if config.runs > 1 {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in &statements {
            *counts.entry(s.text.clone()).or_default() += 1;
        }
        report.repeated_texts = counts.into_iter().filter(|(_, n)| *n > 1).collect();
    }
    info!(
        "generated {} considerations and {} policy options from {}/{} cells",
        report.considerations, report.policies, report.cells_succeeded, report.cells_planned
    );
    Ok(MatrixOutput {
        statements,
        prompts,
        report,
    })
}
