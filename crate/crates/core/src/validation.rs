//! Compare generated statements with a human-made reference survey:
//! all-pairs cosine similarity, nearest candidates per reference item for
//! manual review, and match-rate summaries over the reviewer's verdicts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, embed_batch, BatchOptions, EmbeddingCache, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::io::fmt_f64;

pub const DEFAULT_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Consideration,
    Preference,
}

/// One item of the reference survey.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceItem {
    pub id: String,
    pub text: String,
    pub kind: ReferenceKind,
    /// Reviewer flag for items phrased in a very general style.
    #[serde(default)]
    pub general_style: bool,
}

pub fn read_reference(path: &Path) -> Result<Vec<ReferenceItem>> {
    let items: Vec<ReferenceItem> = crate::io::read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for item in &items {
        if !seen.insert(item.id.as_str()) {
            return Err(Error::InvalidInput(format!("reference id `{}` repeated", item.id)));
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchMatrix {
    pub reference_ids: Vec<String>,
    pub generated_ids: Vec<String>,
    /// `scores[r][g]`, cosine similarity in [−1, 1].
    pub scores: Vec<Vec<f64>>,
}

/// Embeds both sets with the same provider and fills the dense cosine
/// matrix, one reference row per task.
pub fn match_matrix(
    reference: &[(String, String)],
    generated: &[(String, String)],
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    options: &BatchOptions,
) -> Result<MatchMatrix> {
    if reference.is_empty() || generated.is_empty() {
        return Err(Error::InvalidInput("both statement sets must be non-empty".into()));
    }
    let texts: Vec<String> = reference.iter().chain(generated).map(|(_, t)| t.clone()).collect();
    let vectors = embed_batch(&texts, provider, cache, options)?;
    let (rv, gv) = vectors.split_at(reference.len());
    let scores = rv
        .par_iter()
        .map(|r| gv.iter().map(|g| cosine(r, g)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchMatrix {
        reference_ids: reference.iter().map(|(id, _)| id.clone()).collect(),
        generated_ids: generated.iter().map(|(id, _)| id.clone()).collect(),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub reference_id: String,
    pub rank: usize,
    pub candidate_id: String,
    pub similarity: f64,
}

impl MatchMatrix {
    fn row(&self, reference_id: &str) -> Result<usize> {
        self.reference_ids
            .iter()
            .position(|r| r == reference_id)
            .ok_or_else(|| Error::Unknown {
                kind: "reference item",
                name: reference_id.to_string(),
            })
    }

    /// Long-form CSV `reference_id,generated_id,similarity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("reference_id,generated_id,similarity\n");
        for (r, row) in self.reference_ids.iter().zip(&self.scores) {
            for (g, s) in self.generated_ids.iter().zip(row) {
                let _ = writeln!(out, "{r},{g},{}", fmt_f64(*s));
            }
        }
        out
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            reference_id: String,
            generated_id: String,
            similarity: f64,
        }
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{other:?}")),
        })?;
        let mut reference_ids: Vec<String> = Vec::new();
        let mut generated_ids: Vec<String> = Vec::new();
        let mut cells: HashMap<(String, String), f64> = HashMap::new();
        for (i, rec) in rdr.deserialize().enumerate() {
            let row: Row = rec.map_err(|e| Error::Record {
                line: i + 2,
                message: e.to_string(),
            })?;
            if !reference_ids.contains(&row.reference_id) {
                reference_ids.push(row.reference_id.clone());
            }
            if !generated_ids.contains(&row.generated_id) {
                generated_ids.push(row.generated_id.clone());
            }
            cells.insert((row.reference_id, row.generated_id), row.similarity);
        }
        let mut scores = Vec::with_capacity(reference_ids.len());
        let mut missing = Vec::new();
        for r in &reference_ids {
            let mut row = Vec::with_capacity(generated_ids.len());
            for g in &generated_ids {
                match cells.get(&(r.clone(), g.clone())) {
                    Some(s) => row.push(*s),
                    None => {
                        missing.push(format!("{r}/{g}"));
                        row.push(f64::NAN);
                    }
                }
            }
            scores.push(row);
        }
        if !missing.is_empty() {
            return Err(Error::Discrepancy {
                message: "match matrix file is not dense".into(),
                ids: missing,
            });
        }
        Ok(MatchMatrix {
            reference_ids,
            generated_ids,
            scores,
        })
    }
}

/// The `n` generated statements most similar to one reference item,
/// best first, ties broken by id.
pub fn top_candidates(matrix: &MatchMatrix, reference_id: &str, n: usize) -> Result<Vec<Candidate>> {
    if n == 0 {
        return Err(Error::InvalidInput("candidate count must be at least 1".into()));
    }
    let r = matrix.row(reference_id)?;
    let mut order: Vec<usize> = (0..matrix.generated_ids.len()).collect();
    let row = &matrix.scores[r];
    order.sort_by(|&a, &b| {
        row[b]
            .total_cmp(&row[a])
            .then_with(|| matrix.generated_ids[a].cmp(&matrix.generated_ids[b]))
    });
    Ok(order
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(rank, g)| Candidate {
            reference_id: reference_id.to_string(),
            rank: rank + 1,
            candidate_id: matrix.generated_ids[g].clone(),
            similarity: row[g],
        })
        .collect())
}

/// Candidates for every reference item, in reference order.
pub fn all_candidates(matrix: &MatchMatrix, n: usize) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    for r in &matrix.reference_ids {
        out.extend(top_candidates(matrix, r, n)?);
    }
    Ok(out)
}

pub fn candidates_to_csv(candidates: &[Candidate]) -> String {
    let mut out = String::from("reference_id,rank,candidate_id,similarity\n");
    for c in candidates {
        let _ = writeln!(out, "{},{},{},{}", c.reference_id, c.rank, c.candidate_id, fmt_f64(c.similarity));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    GoodToOkay,
    Okay,
    NoMatch,
}

impl Verdict {
    pub fn is_match(self) -> bool {
        self != Verdict::NoMatch
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "good" => Ok(Verdict::Good),
            "good_to_okay" => Ok(Verdict::GoodToOkay),
            "okay" => Ok(Verdict::Okay),
            "no_match" | "none" => Ok(Verdict::NoMatch),
            other => Err(Error::InvalidInput(format!("unknown verdict `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchJudgment {
    pub reference_id: String,
    /// Empty when the verdict is `no_match`.
    #[serde(default)]
    pub candidate_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub reviewer: String,
}

pub fn read_judgments(path: &Path) -> Result<Vec<MatchJudgment>> {
    let text = crate::io::read_to_string(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e| Error::Record {
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn judgments_to_csv(judgments: &[MatchJudgment]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for j in judgments {
        w.serialize(j)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRate {
    pub items: usize,
    pub matches: usize,
    pub rate: f64,
    pub by_verdict: BTreeMap<String, usize>,
    pub excluded_general: usize,
}

impl MatchRate {
    pub fn percent(&self) -> f64 {
        self.rate * 100.0
    }
}

/// Share of reference items whose verdict is a match of any strength.
///
/// `reference` is the set being rated (for example only the preference
/// items); each needs exactly one verdict. Exact repeats of a judgment are
/// ignored; conflicting verdicts for one item are an error. With
/// `exclude_general`, items flagged `general_style` are left out of both
/// numerator and denominator.
pub fn match_rate(judgments: &[MatchJudgment], reference: &[ReferenceItem], exclude_general: bool) -> Result<MatchRate> {
    let ids: BTreeSet<&str> = reference.iter().map(|r| r.id.as_str()).collect();
    let mut verdicts: HashMap<&str, Verdict> = HashMap::new();
    let mut problems = Vec::new();
    for j in judgments {
        let id = j.reference_id.as_str();
        if !ids.contains(id) {
            continue;
        }
        match verdicts.get(id) {
            Some(v) if *v != j.verdict => problems.push(format!("conflicting:{id}")),
            Some(_) => {}
            None => {
                verdicts.insert(id, j.verdict);
            }
        }
    }
    for r in reference {
        if !verdicts.contains_key(r.id.as_str()) {
            problems.push(format!("missing:{}", r.id));
        }
    }
    if !problems.is_empty() {
        problems.sort();
        problems.dedup();
        return Err(Error::Discrepancy {
            message: "judgments incomplete".into(),
            ids: problems,
        });
    }
    let mut by_verdict = BTreeMap::new();
    let mut items = 0;
    let mut matches = 0;
    let mut excluded_general = 0;
    for r in reference {
        if exclude_general && r.general_style {
            excluded_general += 1;
            continue;
        }
        let v = verdicts[r.id.as_str()];
        items += 1;
        matches += usize::from(v.is_match());
        let key = serde_json::to_value(v).expect("verdict serializes");
        *by_verdict.entry(key.as_str().unwrap_or_default().to_string()).or_default() += 1;
    }
    Ok(MatchRate {
        items,
        matches,
        rate: if items == 0 { 0.0 } else { matches as f64 / items as f64 },
        by_verdict,
        excluded_general,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingVector, MockEmbedder};
    use proptest::prelude::*;

    fn hand(row: Vec<f64>) -> MatchMatrix {
        MatchMatrix {
            reference_ids: vec!["r".into()],
            generated_ids: (0..row.len()).map(|i| i.to_string()).collect(),
            scores: vec![row],
        }
    }

    fn pairs(texts: &[&str], prefix: &str) -> Vec<(String, String)> {
        texts.iter().enumerate().map(|(i, t)| (format!("{prefix}{i}"), t.to_string())).collect()
    }

    fn refs(n: usize, general: usize) -> Vec<ReferenceItem> {
        (0..n)
            .map(|i| ReferenceItem {
                id: format!("R{i:02}"),
                text: String::new(),
                kind: ReferenceKind::Consideration,
                general_style: i < general,
            })
            .collect()
    }

    fn judged(items: &[ReferenceItem], matches: usize) -> Vec<MatchJudgment> {
        items
            .iter()
            .enumerate()
            .map(|(i, r)| MatchJudgment {
                reference_id: r.id.clone(),
                candidate_id: format!("g{i}"),
                verdict: if i < matches { Verdict::Good } else { Verdict::NoMatch },
                reviewer: "rv".into(),
            })
            .collect()
    }

    #[test]
    fn hand_matrix_orders_by_similarity() {
        let m = hand(vec![0.9, 0.2, 0.5]);
        let ids: Vec<_> = top_candidates(&m, "r", 2).unwrap().into_iter().map(|c| c.candidate_id).collect();
        assert_eq!(ids, vec!["0", "2"]);
        assert_eq!(top_candidates(&m, "r", 1).unwrap()[0].candidate_id, "0");
        assert_eq!(top_candidates(&m, "r", 10).unwrap().len(), 3);
        assert!(top_candidates(&m, "nope", 1).is_err());
        assert!(top_candidates(&m, "r", 0).is_err());
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let m = hand(vec![0.5, 0.7, 0.7]);
        let ids: Vec<_> = top_candidates(&m, "r", 3).unwrap().into_iter().map(|c| c.candidate_id).collect();
        assert_eq!(ids, vec!["1", "2", "0"]);
    }

    #[test]
    fn self_match_has_unit_diagonal() {
        let texts = ["Hospitals need stable funding", "Drug prices are too high", "Nurses deserve better pay"];
        let set = pairs(&texts, "s");
        let emb = MockEmbedder::new(384);
        let cache = EmbeddingCache::in_memory("mock", "m", 384);
        let m = match_matrix(&set, &set, &emb, &cache, &BatchOptions::default()).unwrap();
        for (i, row) in m.scores.iter().enumerate() {
            assert!((row[i] - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|s| *s <= row[i]));
            let top = &top_candidates(&m, &m.reference_ids[i], 1).unwrap()[0];
            assert_eq!(top.candidate_id, m.reference_ids[i]);
        }
    }

    #[test]
    fn orthogonal_vectors_give_zero_off_diagonal() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let m = hand(vec![0.9, -0.25, 0.5]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, m.to_csv()).unwrap();
        assert_eq!(MatchMatrix::from_csv_path(&p).unwrap(), m);
    }

    #[test]
    fn reported_ratios() {
        let items = refs(41, 0);
        let r = match_rate(&judged(&items, 20), &items, false).unwrap();
        assert_eq!((r.matches, r.items), (20, 41));
        assert!((r.percent() - 48.78).abs() < 0.01);

        let prefs = refs(8, 0);
        assert_eq!(match_rate(&judged(&prefs, 7), &prefs, false).unwrap().rate, 0.875);
        assert_eq!(match_rate(&judged(&prefs, 0), &prefs, false).unwrap().rate, 0.0);
    }

    #[test]
    fn general_items_can_be_excluded() {
        // Items 0..3 are flagged; the first 5 items match.
        let items = refs(10, 3);
        let r = match_rate(&judged(&items, 5), &items, true).unwrap();
        assert_eq!((r.matches, r.items, r.excluded_general), (2, 7, 3));
    }

    #[test]
    fn incomplete_judgments_list_missing_ids() {
        let items = refs(3, 0);
        let mut j = judged(&items, 1);
        j.pop();
        let err = match_rate(&j, &items, false).unwrap_err();
        assert_eq!(err.offending_ids(), vec!["missing:R02".to_string()]);
    }

    #[test]
    fn judgments_csv_round_trip() {
        let items = refs(3, 0);
        let j = judged(&items, 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        std::fs::write(&p, judgments_to_csv(&j).unwrap()).unwrap();
        assert_eq!(read_judgments(&p).unwrap(), j);
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("reference_id,candidate_id,verdict,reviewer"));
    }

    proptest! {
        #[test]
        fn candidate_lists_are_prefix_stable(row in prop::collection::vec(-1.0f64..1.0, 1..30), n in 1usize..30) {
            let m = hand(row);
            let a = top_candidates(&m, "r", n).unwrap();
            let b = top_candidates(&m, "r", n + 1).unwrap();
            prop_assert_eq!(&b[..a.len()], &a[..]);
        }

        #[test]
        fn rate_ignores_order_and_repeats(matches in 0usize..12, seed in any::<u64>()) {
            let items = refs(12, 0);
            let mut j = judged(&items, matches);
            let base = match_rate(&j, &items, false).unwrap();
            let k = (seed as usize) % j.len();
            j.rotate_left(k);
            j.push(j[0].clone());
            prop_assert_eq!(match_rate(&j, &items, false).unwrap(), base);
        }
    }
}
