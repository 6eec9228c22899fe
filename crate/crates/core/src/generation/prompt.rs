use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, Role};
use crate::categorization::Selection;
use crate::corpus::Leaning;
use crate::embedding::{cosine, embed_batch, BatchOptions, EmbeddingCache, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

/// System prompt templates, one per role. Placeholders are written
/// `{{name}}`; see [`build_prompt`] for the available names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub considerations: String,
    pub policy: String,
}

impl PromptTemplates {
    /// Loads `considerations.txt` and `policy.txt` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Ok(PromptTemplates {
            considerations: crate::io::read_to_string(&dir.join("considerations.txt"))?,
            policy: crate::io::read_to_string(&dir.join("policy.txt"))?,
        })
    }

    pub fn for_role(&self, role: Role) -> &str {
        match role {
            Role::Consideration => &self.considerations,
            Role::Policy => &self.policy,
        }
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let body = "{{role_explanation}}\n\n\
            Write from a {{leaning}} political perspective on the topic \"{{category}}\".\n\n\
            Statements from earlier surveys, for style only:\n{{exemplars}}\n\n\
            Produce exactly {{statement_count}} items as a JSON array of strings.";
        PromptTemplates {
            considerations: body.to_string(),
            policy: body.to_string(),
        }
    }
}

/// Fixed description of the survey item type each role produces, including
/// good and bad examples.
pub fn role_explanation(role: Role) -> &'static str {
    match role {
        Role::Consideration => {
            "You help build a survey for measuring the Deliberative Reason Index. \
Participants rate consideration statements on an agree/disagree scale. A \
consideration states one belief, value or reason that people bring to the \
debate. Each statement must be short, self-contained, neutral in wording and \
express exactly one idea that some part of the public would endorse.\n\
Good: \"Health insurance premiums weigh more heavily on low-income households.\"\n\
Good: \"Competition between hospitals keeps quality high.\"\n\
Bad: \"Premiums are too high and hospitals are wasteful.\" (two ideas)\n\
Bad: \"What should be done about costs?\" (a question, not a position)"
        }
        Role::Policy => {
            "You help build a survey for measuring the Deliberative Reason Index. \
Participants rank policy options from most to least preferred. A policy \
option is one concrete, feasible course of action that a government or \
public body could adopt. Each option must be clear, actionable and distinct \
from the others.\n\
Good: \"Cap the yearly premium share of household income at ten percent.\"\n\
Good: \"Merge small regional hospitals into larger care centres.\"\n\
Bad: \"Make healthcare better.\" (not actionable)\n\
Bad: \"Lower premiums and raise taxes and close hospitals.\" (several policies)"
        }
    }
}

/// Replaces every `{{name}}` placeholder. Unknown or unresolved
/// placeholders are an error.
pub fn render_template(template: &str, vars: &BTreeMap<&str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| {
            Error::InvalidInput("template has an unterminated `{{` placeholder".into())
        })?;
        let name = after[..end].trim();
        let value = vars
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("unresolved template placeholder `{{{{{name}}}}}`")))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub role: Role,
    pub category: String,
    pub leaning: Leaning,
    pub system_template: String,
    pub system_prompt: String,
    pub exemplars: Vec<String>,
    pub statement_count: usize,
    pub attachment: Vec<String>,
    pub prompt_hash: String,
}

impl PromptSpec {
    /// Instruction with the attached paragraphs, sent as the user message.
    pub fn user_message(&self) -> String {
        let noun = match self.role {
            Role::Consideration => "consideration statements",
            Role::Policy => "policy options",
        };
        let mut msg = format!(
            "Attached are {} newspaper paragraphs on \"{}\" from {} outlets, most relevant first.\n\n",
            self.attachment.len(),
            self.category,
            self.leaning.label()
        );
        for (i, text) in self.attachment.iter().enumerate() {
            let _ = write!(msg, "[{}] {}\n\n", i + 1, text);
        }
        let _ = write!(
            msg,
            "Based on these paragraphs, produce exactly {n} {noun} reflecting a {leaning} perspective. \
Answer with a JSON array of exactly {n} strings and nothing else.",
            n = self.statement_count,
            leaning = self.leaning.label()
        );
        msg
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(self.user_message()),
        ]
    }

    pub fn record(&self) -> PromptRecord {
        PromptRecord {
            prompt_hash: self.prompt_hash.clone(),
            role: self.role,
            category: self.category.clone(),
            leaning: self.leaning,
            statement_count: self.statement_count,
            system: self.system_prompt.clone(),
            user: self.user_message(),
        }
    }
}

/// Everything needed to replay one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_hash: String,
    pub role: Role,
    pub category: String,
    pub leaning: Leaning,
    pub statement_count: usize,
    pub system: String,
    pub user: String,
}

/// Renders the role's template for one (category, leaning) cell and
/// attaches the selection's paragraphs in rank order.
///
/// Template placeholders: `role_explanation`, `leaning`, `category`,
/// `statement_count`, `exemplars`.
#[allow(clippy::too_many_arguments)]
pub fn build_prompt(
    role: Role,
    category: &str,
    leaning: Leaning,
    selection: &Selection,
    paragraph_texts: &HashMap<String, String>,
    templates: &PromptTemplates,
    exemplars: &[String],
    statement_count: usize,
) -> Result<PromptSpec> {
    if selection.category != category || selection.leaning != Some(leaning) {
        return Err(Error::InvalidInput(format!(
            "selection for ({}, {:?}) used for cell ({category}, {leaning})",
            selection.category, selection.leaning
        )));
    }
    if statement_count == 0 {
        return Err(Error::InvalidInput("statement count must be at least 1".into()));
    }
    let missing: Vec<String> = selection
        .paragraph_ids
        .iter()
        .filter(|id| !paragraph_texts.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Discrepancy {
            message: "selected paragraphs missing from the corpus".into(),
            ids: missing,
        });
    }
    let attachment: Vec<String> = selection
        .paragraph_ids
        .iter()
        .map(|id| paragraph_texts[id].clone())
        .collect();
    if attachment.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no paragraphs selected for ({category}, {leaning})"
        )));
    }

    let exemplar_block = if exemplars.is_empty() {
        "(none)".to_string()
    } else {
        exemplars.iter().map(|e| format!("- {e}")).collect::<Vec<_>>().join("\n")
    };
    let vars: BTreeMap<&str, String> = [
        ("role_explanation", role_explanation(role).to_string()),
        ("leaning", leaning.label().to_string()),
        ("category", category.to_string()),
        ("statement_count", statement_count.to_string()),
        ("exemplars", exemplar_block),
    ]
    .into_iter()
    .collect();
    let template = templates.for_role(role);
    let system_prompt = render_template(template, &vars)?;

    let mut spec = PromptSpec {
        role,
        category: category.to_string(),
        leaning,
        system_template: template.to_string(),
        system_prompt,
        exemplars: exemplars.to_vec(),
        statement_count,
        attachment,
        prompt_hash: String::new(),
    };
    spec.prompt_hash = sha256_hex(format!("{}\0{}", spec.system_prompt, spec.user_message()));
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub kind: Role,
}

/// Statements from earlier surveys used as style grounding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExemplarBank {
    pub items: Vec<Exemplar>,
}

impl ExemplarBank {
    /// Reads JSONL lines `{"text": str, "kind": "consideration"|"policy"}`.
    pub fn from_jsonl_path(path: &Path) -> Result<Self> {
        Ok(ExemplarBank {
            items: crate::io::read_jsonl(path)?,
        })
    }

    pub fn texts(&self, role: Role) -> Vec<String> {
        self.items
            .iter()
            .filter(|e| e.kind == role)
            .map(|e| e.text.clone())
            .collect()
    }
}

/// The `m` exemplars of a role most similar to a category's anchor
/// centroid, best first; ties keep bank order.
pub fn select_exemplars(
    bank: &ExemplarBank,
    role: Role,
    centroid: &EmbeddingVector,
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    options: &BatchOptions,
    m: usize,
) -> Result<Vec<String>> {
    let texts = bank.texts(role);
    if texts.is_empty() || m == 0 {
        return Ok(Vec::new());
    }
    let vectors = embed_batch(&texts, provider, cache, options)?;
    let mut scored: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, cosine(v, centroid).unwrap_or(f64::NEG_INFINITY)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(m).map(|(i, _)| texts[i].clone()).collect())
}
