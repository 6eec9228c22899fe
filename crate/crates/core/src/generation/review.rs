use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DuplicateGroup, GeneratedStatement, Role};
use crate::corpus::Leaning;
use crate::dri::{RankingMode, RatingScale, SurveyInstrument};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Keep,
    Drop,
    Edit,
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "keep" => Ok(Decision::Keep),
            "drop" => Ok(Decision::Drop),
            "edit" => Ok(Decision::Edit),
            other => Err(Error::InvalidInput(format!("unknown decision `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub statement_id: String,
    pub text: String,
    pub category: String,
    pub leaning: Leaning,
    pub decision: Decision,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub edited_text: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.filter(|s| !s.trim().is_empty()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewSheet {
    pub rows: Vec<ReviewRow>,
}

impl ReviewSheet {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in r.deserialize().enumerate() {
            let row: ReviewRow = rec.map_err(|e| Error::Record {
                line: i + 2,
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        Ok(ReviewSheet { rows })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_str(&crate::io::read_to_string(path)?)
    }

    pub fn set(&mut self, statement_id: &str, decision: Decision, edited_text: Option<String>) -> Result<()> {
        let row = self
            .rows
            .iter_mut()
            .find(|r| r.statement_id == statement_id)
            .ok_or_else(|| Error::Unknown {
                kind: "statement",
                name: statement_id.to_string(),
            })?;
        row.decision = decision;
        row.edited_text = edited_text;
        Ok(())
    }
}

/// One row per statement in corpus order. Members of duplicate groups
/// start as `drop`, everything else as `keep`.
pub fn review_export(statements: &[GeneratedStatement], duplicates: &[DuplicateGroup]) -> ReviewSheet {
    let dropped: BTreeSet<&str> = duplicates
        .iter()
        .flat_map(|g| g.members.iter().map(String::as_str))
        .collect();
    ReviewSheet {
        rows: statements
            .iter()
            .map(|s| ReviewRow {
                statement_id: s.id.clone(),
                text: s.text.clone(),
                category: s.category.clone(),
                leaning: s.leaning,
                decision: if dropped.contains(s.id.as_str()) {
                    Decision::Drop
                } else {
                    Decision::Keep
                },
                edited_text: None,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentItem {
    /// Ordinal survey id: `C01`, `C02`, ... or `P01`, ...
    pub id: String,
    pub statement_id: String,
    pub text: String,
    pub category: String,
    pub leaning: Leaning,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalInstrument {
    pub considerations: Vec<InstrumentItem>,
    pub policies: Vec<InstrumentItem>,
}

impl FinalInstrument {
    pub fn survey_instrument(&self, scale: RatingScale, ranking_mode: RankingMode) -> Result<SurveyInstrument> {
        SurveyInstrument::new(
            self.considerations.iter().map(|i| i.id.clone()).collect(),
            self.policies.iter().map(|i| i.id.clone()).collect(),
            scale,
            ranking_mode,
        )
    }
}

/// Applies reviewer decisions. Every statement must have exactly one row
/// and every row must name a known statement; all discrepancies are
/// reported together. Items keep corpus order within each role.
pub fn review_import(sheet: &ReviewSheet, statements: &[GeneratedStatement]) -> Result<FinalInstrument> {
    let known: HashMap<&str, &GeneratedStatement> = statements.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut rows: HashMap<&str, &ReviewRow> = HashMap::new();
    let mut problems = Vec::new();
    for row in &sheet.rows {
        if !known.contains_key(row.statement_id.as_str()) {
            problems.push(format!("unknown:{}", row.statement_id));
        } else if rows.insert(row.statement_id.as_str(), row).is_some() {
            problems.push(format!("repeated:{}", row.statement_id));
        }
        if row.decision == Decision::Edit && row.edited_text.is_none() {
            problems.push(format!("edit_without_text:{}", row.statement_id));
        }
    }
    for s in statements {
        if !rows.contains_key(s.id.as_str()) {
            problems.push(format!("missing:{}", s.id));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Discrepancy {
            message: "review sheet does not match the statement corpus".into(),
            ids: problems,
        });
    }

    let mut out = FinalInstrument::default();
    for s in statements {
        let row = rows[s.id.as_str()];
        let text = match row.decision {
            Decision::Drop => continue,
            Decision::Keep => s.text.clone(),
            Decision::Edit => row.edited_text.clone().expect("checked above"),
        };
        let (list, prefix) = match s.role {
            Role::Consideration => (&mut out.considerations, "C"),
            Role::Policy => (&mut out.policies, "P"),
        };
        list.push(InstrumentItem {
            id: format!("{prefix}{:02}", list.len() + 1),
            statement_id: s.id.clone(),
            text,
            category: s.category.clone(),
            leaning: s.leaning,
        });
    }
    Ok(out)
}
