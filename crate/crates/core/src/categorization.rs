//! Anchor-based categorization: every paragraph is scored against every
//! category's anchor texts, and the best paragraphs per category (and
//! optionally per leaning) are selected for generation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Language, Leaning};
use crate::embedding::{
    cosine, embed_batch, reduce, BatchOptions, EmbeddingCache, EmbeddingProvider,
    EmbeddingVector, ReductionSpec,
};
use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// How the per-language anchor similarities of one category are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    #[serde(rename = "general", default)]
    pub is_general: bool,
    pub variants: BTreeMap<Language, String>,
    #[serde(skip)]
    pub embeddings: BTreeMap<Language, EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub categories: Vec<Category>,
}

impl AnchorSet {
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        let set = AnchorSet { categories };
        set.validate()?;
        Ok(set)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let set: AnchorSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&crate::io::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Config("anchor set has no categories".into()));
        }
        let mut names = HashSet::new();
        for c in &self.categories {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("duplicate category `{}`", c.name)));
            }
            if c.variants.is_empty() {
                return Err(Error::Config(format!(
                    "category `{}` has no language variant",
                    c.name
                )));
            }
            if let Some((lang, _)) = c.variants.iter().find(|(_, t)| t.trim().is_empty()) {
                return Err(Error::Config(format!(
                    "category `{}` has an empty {lang} anchor",
                    c.name
                )));
            }
        }
        if self.categories.iter().filter(|c| c.is_general).count() > 1 {
            return Err(Error::Config("more than one general category".into()));
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn general(&self) -> Option<&Category> {
        self.categories.iter().find(|c| c.is_general)
    }

    pub fn get(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn variant_count(&self) -> usize {
        self.categories.iter().map(|c| c.variants.len()).sum()
    }

    /// `(category index, language, text)` for every anchor variant, in a
    /// fixed order.
    pub fn variant_texts(&self) -> Vec<(usize, Language, &str)> {
        self.categories
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.variants.iter().map(move |(l, t)| (i, *l, t.as_str())))
            .collect()
    }

    pub fn is_embedded(&self) -> bool {
        self.categories
            .iter()
            .all(|c| c.embeddings.len() == c.variants.len())
    }

    /// Mean anchor vector of a category, used to rank exemplars.
    pub fn centroid(&self, name: &str) -> Option<EmbeddingVector> {
        let c = self.get(name)?;
        let first = c.embeddings.values().next()?;
        let mut acc = vec![0.0; first.dim()];
        for v in c.embeddings.values() {
            for (a, x) in acc.iter_mut().zip(v.values()) {
                *a += x / c.embeddings.len() as f64;
            }
        }
        EmbeddingVector::new(acc).ok()
    }
}

fn anchor_row_id(category: &str, language: Language) -> String {
    format!("anchor:{category}:{language}")
}

/// Reduces anchor and paragraph vectors in one call so both live in the
/// same space. Returns the anchors with their reduced vectors attached and
/// the reduced paragraph vectors in input order.
pub fn joint_reduce(
    anchors: &AnchorSet,
    anchor_vectors: &[EmbeddingVector],
    paragraph_ids: &[String],
    paragraph_vectors: &[EmbeddingVector],
    spec: &ReductionSpec,
) -> Result<(AnchorSet, Vec<EmbeddingVector>)> {
    let variants = anchors.variant_texts();
    if variants.len() != anchor_vectors.len() {
        return Err(Error::InvalidInput(format!(
            "{} anchor vectors for {} anchor variants",
            anchor_vectors.len(),
            variants.len()
        )));
    }
    let mut ids: Vec<String> = paragraph_ids.to_vec();
    ids.extend(
        variants
            .iter()
            .map(|(i, l, _)| anchor_row_id(&anchors.categories[*i].name, *l)),
    );
    let mut all: Vec<EmbeddingVector> = paragraph_vectors.to_vec();
    all.extend(anchor_vectors.iter().cloned());
    let mut reduced = reduce(&ids, &all, spec)?;
    let anchor_part = reduced.split_off(paragraph_vectors.len());

    let mut out = anchors.clone();
    for c in &mut out.categories {
        c.embeddings.clear();
    }
    for ((i, lang, _), v) in variants.into_iter().zip(anchor_part) {
        out.categories[i].embeddings.insert(lang, v);
    }
    Ok((out, reduced))
}

/// Embeds every anchor variant with the same provider as the corpus and
/// reduces anchors and paragraphs jointly.
pub fn embed_anchors(
    anchors: &AnchorSet,
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    options: &BatchOptions,
    reduction: &ReductionSpec,
    paragraph_ids: &[String],
    paragraph_vectors: &[EmbeddingVector],
) -> Result<(AnchorSet, Vec<EmbeddingVector>)> {
    let texts: Vec<String> = anchors
        .variant_texts()
        .into_iter()
        .map(|(_, _, t)| t.to_string())
        .collect();
    let vectors = embed_batch(&texts, provider, cache, options)?;
    joint_reduce(anchors, &vectors, paragraph_ids, paragraph_vectors, reduction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub paragraph_id: String,
    pub leaning: Option<Leaning>,
    pub scores: Vec<f64>,
}

/// One row per paragraph, one column per category in anchor order. Rows
/// are kept sorted by paragraph id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub categories: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

/// Scores are kept at the resolution they are written with, so rankings
/// do not depend on rounding noise (for example from rescaled vectors) and
/// a table read back from CSV ranks exactly like the one computed.
pub const SCORE_RESOLUTION: f64 = 1e12;

fn quantize(s: f64) -> f64 {
    (s * SCORE_RESOLUTION).round() / SCORE_RESOLUTION
}

/// Scores every paragraph against every category. A category's score is
/// the max (or mean) over its language variants.
pub fn score_paragraphs(
    paragraph_ids: &[String],
    leanings: &HashMap<String, Option<Leaning>>,
    vectors: &HashMap<String, EmbeddingVector>,
    anchors: &AnchorSet,
    aggregation: Aggregation,
) -> Result<ScoreTable> {
    if !anchors.is_embedded() {
        return Err(Error::InvalidInput("anchors have not been embedded".into()));
    }
    let missing: Vec<String> = paragraph_ids
        .iter()
        .filter(|id| !vectors.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Discrepancy {
            message: "paragraphs without an embedding".into(),
            ids: missing,
        });
    }
    let zero: Vec<String> = paragraph_ids
        .iter()
        .filter(|id| vectors[*id].is_zero())
        .cloned()
        .collect();
    if !zero.is_empty() {
        return Err(Error::Discrepancy {
            message: "paragraphs with a zero embedding vector".into(),
            ids: zero,
        });
    }
    for c in &anchors.categories {
        if c.embeddings.values().any(EmbeddingVector::is_zero) {
            return Err(Error::Discrepancy {
                message: "anchor with a zero embedding vector".into(),
                ids: vec![c.name.clone()],
            });
        }
    }

    let mut rows = paragraph_ids
        .par_iter()
        .map(|id| {
            let v = &vectors[id];
            let scores = anchors
                .categories
                .iter()
                .map(|c| {
                    let sims = c
                        .embeddings
                        .values()
                        .map(|a| cosine(v, a))
                        .collect::<Result<Vec<f64>>>()?;
                    let s = match aggregation {
                        Aggregation::Max => sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        Aggregation::Mean => sims.iter().sum::<f64>() / sims.len() as f64,
                    };
                    Ok(quantize(s))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(ScoreRow {
                paragraph_id: id.clone(),
                leaning: leanings.get(id).copied().flatten(),
                scores,
            })
        })
        .collect::<Result<Vec<ScoreRow>>>()?;
    rows.sort_by(|a, b| a.paragraph_id.cmp(&b.paragraph_id));
    rows.dedup_by(|a, b| a.paragraph_id == b.paragraph_id);
    Ok(ScoreTable {
        categories: anchors.names(),
        rows,
    })
}

impl ScoreTable {
    pub fn column(&self, category: &str) -> Result<usize> {
        self.categories
            .iter()
            .position(|c| c == category)
            .ok_or_else(|| Error::Unknown {
                kind: "category",
                name: category.to_string(),
            })
    }

    /// Index of the best-scoring category for a row (first on ties).
    pub fn argmax(&self, row: &ScoreRow) -> usize {
        let mut best = 0;
        for (i, s) in row.scores.iter().enumerate() {
            if *s > row.scores[best] {
                best = i;
            }
        }
        best
    }

    /// CSV with header `paragraph_id,<category names...>`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["paragraph_id".to_string()];
        header.extend(self.categories.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.paragraph_id.clone()];
            rec.extend(row.scores.iter().map(|s| fmt_f64(*s)));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .expect("csv output is utf-8"))
    }

    /// Reads the CSV form; leanings are attached from `leanings`.
    pub fn from_csv_path(path: &Path, leanings: &HashMap<String, Option<Leaning>>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("paragraph_id") {
            return Err(Error::InvalidInput(format!(
                "{}: first column must be paragraph_id",
                path.display()
            )));
        }
        let categories: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let scores = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>().map_err(|e| Error::Record {
                        line: i + 2,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if scores.len() != categories.len() {
                return Err(Error::Record {
                    line: i + 2,
                    message: "column count differs from header".into(),
                });
            }
            rows.push(ScoreRow {
                leaning: leanings.get(&id).copied().flatten(),
                paragraph_id: id,
                scores,
            });
        }
        rows.sort_by(|a, b| a.paragraph_id.cmp(&b.paragraph_id));
        Ok(ScoreTable { categories, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub category: String,
    pub leaning: Option<Leaning>,
    pub k: usize,
    pub paragraph_ids: Vec<String>,
    pub scores: Vec<f64>,
}

/// One line of the selection JSONL export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub category: String,
    pub leaning: Option<Leaning>,
    pub rank: usize,
    pub paragraph_id: String,
    pub score: f64,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.paragraph_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraph_ids.is_empty()
    }

    pub fn rows(&self) -> Vec<SelectionRow> {
        self.paragraph_ids
            .iter()
            .zip(&self.scores)
            .enumerate()
            .map(|(i, (id, s))| SelectionRow {
                category: self.category.clone(),
                leaning: self.leaning,
                rank: i + 1,
                paragraph_id: id.clone(),
                score: *s,
            })
            .collect()
    }

    /// Regroups exported rows into selections, ordered by first appearance.
    /// `k` is taken as the largest rank seen in each group.
    pub fn from_rows(rows: &[SelectionRow]) -> Vec<Selection> {
        let mut order: Vec<(String, Option<Leaning>)> = Vec::new();
        let mut groups: HashMap<(String, Option<Leaning>), Vec<&SelectionRow>> = HashMap::new();
        for r in rows {
            let key = (r.category.clone(), r.leaning);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(r);
        }
        order
            .into_iter()
            .map(|key| {
                let mut g = groups.remove(&key).unwrap();
                g.sort_by_key(|r| r.rank);
                Selection {
                    category: key.0,
                    leaning: key.1,
                    k: g.iter().map(|r| r.rank).max().unwrap_or(0),
                    paragraph_ids: g.iter().map(|r| r.paragraph_id.clone()).collect(),
                    scores: g.iter().map(|r| r.score).collect(),
                }
            })
            .collect()
    }
}

/// Top `k` paragraphs for a category, highest score first, ties broken by
/// ascending paragraph id. With a leaning, only paragraphs from that bin
/// are eligible.
pub fn select_top_k(
    table: &ScoreTable,
    category: &str,
    k: usize,
    leaning: Option<Leaning>,
) -> Result<Selection> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let col = table.column(category)?;
    let mut pool: Vec<(&str, f64)> = table
        .rows
        .iter()
        .filter(|r| leaning.is_none() || r.leaning == leaning)
        .map(|r| (r.paragraph_id.as_str(), r.scores[col]))
        .collect();
    pool.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    pool.truncate(k);
    Ok(Selection {
        category: category.to_string(),
        leaning,
        k,
        paragraph_ids: pool.iter().map(|(id, _)| id.to_string()).collect(),
        scores: pool.iter().map(|(_, s)| *s).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub categories: Vec<String>,
    pub k: usize,
    pub leaning: Option<Leaning>,
    /// `|A ∩ B| / k`, with k capped at the selection size when a pool
    /// holds fewer than k paragraphs.
    pub values: Vec<Vec<f64>>,
    /// `|A ∩ B| / |A ∪ B|`
    pub jaccard: Vec<Vec<f64>>,
    pub mean_off_diagonal: f64,
    pub mean_off_diagonal_jaccard: f64,
}

pub fn overlap_matrix(selections: &[Selection]) -> Result<OverlapMatrix> {
    let first = selections
        .first()
        .ok_or_else(|| Error::InvalidInput("no selections to compare".into()))?;
    if let Some(s) = selections.iter().find(|s| s.k != first.k) {
        return Err(Error::InvalidInput(format!(
            "mixed k: `{}` has k={} but `{}` has k={}",
            first.category, first.k, s.category, s.k
        )));
    }
    if let Some(s) = selections.iter().find(|s| s.leaning != first.leaning) {
        return Err(Error::InvalidInput(format!(
            "mixed leaning scope between `{}` and `{}`",
            first.category, s.category
        )));
    }
    let sets: Vec<HashSet<&str>> = selections
        .iter()
        .map(|s| s.paragraph_ids.iter().map(String::as_str).collect())
        .collect();
    let n = sets.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut jaccard = vec![vec![0.0; n]; n];
    let (mut off, mut off_j) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let inter = sets[i].intersection(&sets[j]).count() as f64;
            let union = sets[i].union(&sets[j]).count() as f64;
            let size = sets[i].len().max(sets[j].len()) as f64;
            values[i][j] = if size == 0.0 { 0.0 } else { inter / size };
            jaccard[i][j] = if union == 0.0 { 0.0 } else { inter / union };
            if i != j {
                off += values[i][j];
                off_j += jaccard[i][j];
            }
        }
    }
    let pairs = (n * (n - 1)) as f64;
    Ok(OverlapMatrix {
        categories: selections.iter().map(|s| s.category.clone()).collect(),
        k: first.k,
        leaning: first.leaning,
        values,
        jaccard,
        mean_off_diagonal: if pairs > 0.0 { off / pairs } else { 0.0 },
        mean_off_diagonal_jaccard: if pairs > 0.0 { off_j / pairs } else { 0.0 },
    })
}

impl OverlapMatrix {
    /// Square CSV: header `category,<names...>`, one row per category.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category");
        for c in &self.categories {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (name, row) in self.categories.iter().zip(&self.values) {
            out.push_str(&csv_field(name));
            for v in row {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub category: String,
    pub min: f64,
    pub max: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram of one category's scores over [min, max]. The
/// maximum lands in the last bin.
pub fn similarity_histogram(table: &ScoreTable, category: &str, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be at least 1".into()));
    }
    let col = table.column(category)?;
    let values: Vec<f64> = table.rows.iter().map(|r| r.scores[col]).collect();
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (min, max) = if values.is_empty() { (0.0, 0.0) } else { (min, max) };
    let span = max - min;
    let mut counts = vec![0usize; bins];
    for v in &values {
        let idx = if span > 0.0 {
            (((v - min) / span) * bins as f64).floor() as usize
        } else {
            0
        };
        counts[idx.min(bins - 1)] += 1;
    }
    let edges = (0..=bins)
        .map(|i| min + span * i as f64 / bins as f64)
        .collect();
    Ok(Histogram {
        category: category.to_string(),
        min,
        max,
        edges,
        counts,
    })
}

impl Histogram {
    /// CSV rows `bin_start,bin_end,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", fmt_f64(self.edges[i]), fmt_f64(self.edges[i + 1]), c);
        }
        out
    }
}
