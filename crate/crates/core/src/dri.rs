//! Deliberative Reason Index scoring.
//!
//! Every pair of participants gets a point `(rho_c, rho_p)`: the Spearman
//! correlation of their consideration ratings and of their preference
//! rankings. A pair is intersubjectively consistent when the point lies on
//! the line `x = y`; its perpendicular distance `|rho_c - rho_p| / √2`
//! measures the inconsistency. A participant's DRI averages the distances
//! of all pairs they are part of, normalized onto [0, 1] as
//! `1 - mean_distance / √2`; the group DRI is the mean of the individual
//! scores.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Largest possible distance of a pair point from `x = y`.
pub const MAX_DISTANCE: f64 = std::f64::consts::SQRT_2;

/// Minimum number of commonly answered items per pair in permissive mode.
pub const MIN_SHARED_ITEMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Pre,
    Mid,
    Post,
}

impl FromStr for Wave {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "pre" => Ok(Wave::Pre),
            "mid" => Ok(Wave::Mid),
            "post" => Ok(Wave::Post),
            other => Err(Error::InvalidInput(format!("unknown wave `{other}`"))),
        }
    }
}

impl fmt::Display for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Wave::Pre => "pre",
            Wave::Mid => "mid",
            Wave::Post => "post",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    #[default]
    StrictPermutation,
    TiesAllowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: i64,
    pub max: i64,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: -4, max: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyInstrument {
    pub considerations: Vec<String>,
    pub preferences: Vec<String>,
    #[serde(default)]
    pub scale: RatingScale,
    #[serde(default)]
    pub ranking_mode: RankingMode,
}

impl SurveyInstrument {
    pub fn new(
        considerations: Vec<String>,
        preferences: Vec<String>,
        scale: RatingScale,
        ranking_mode: RankingMode,
    ) -> Result<Self> {
        let inst = SurveyInstrument {
            considerations,
            preferences,
            scale,
            ranking_mode,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.considerations.len() < 2 || self.preferences.len() < 2 {
            return Err(Error::InvalidInput(
                "an instrument needs at least two considerations and two preferences".into(),
            ));
        }
        if self.scale.min >= self.scale.max {
            return Err(Error::InvalidInput(format!(
                "rating scale {}..{} is empty",
                self.scale.min, self.scale.max
            )));
        }
        let mut seen = BTreeSet::new();
        for id in self.considerations.iter().chain(&self.preferences) {
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!("item `{id}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        let inst: SurveyInstrument = crate::io::read_json(path)?;
        inst.validate()?;
        Ok(inst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant_id: String,
    pub wave: Wave,
    #[serde(rename = "considerations")]
    pub consideration_ratings: BTreeMap<String, i64>,
    /// Rank per option, 1 = most preferred.
    #[serde(rename = "preferences")]
    pub preference_rankings: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Accept incomplete responses; each pair then uses the items both
    /// participants answered.
    pub permissive_missing: bool,
}

impl SurveyResponse {
    /// Checks the response against the instrument. Returns a description of
    /// every problem found.
    pub fn problems(&self, inst: &SurveyInstrument, options: ScoringOptions) -> Vec<String> {
        let mut out = Vec::new();
        let cons: BTreeSet<&String> = inst.considerations.iter().collect();
        let prefs: BTreeSet<&String> = inst.preferences.iter().collect();
        for id in self.consideration_ratings.keys() {
            if !cons.contains(id) {
                out.push(format!("unknown consideration `{id}`"));
            }
        }
        for id in self.preference_rankings.keys() {
            if !prefs.contains(id) {
                out.push(format!("unknown preference `{id}`"));
            }
        }
        if !options.permissive_missing {
            for id in &inst.considerations {
                if !self.consideration_ratings.contains_key(id) {
                    out.push(format!("missing consideration `{id}`"));
                }
            }
            for id in &inst.preferences {
                if !self.preference_rankings.contains_key(id) {
                    out.push(format!("missing preference `{id}`"));
                }
            }
        }
        for (id, v) in &self.consideration_ratings {
            if *v < inst.scale.min || *v > inst.scale.max {
                out.push(format!(
                    "rating {v} for `{id}` outside {}..{}",
                    inst.scale.min, inst.scale.max
                ));
            }
        }
        match inst.ranking_mode {
            RankingMode::StrictPermutation => {
                let m = self.preference_rankings.len() as i64;
                let ranks: BTreeSet<i64> = self.preference_rankings.values().copied().collect();
                let expected: BTreeSet<i64> = (1..=m).collect();
                if ranks != expected {
                    out.push(format!("preference ranks are not a permutation of 1..{m}"));
                }
            }
            RankingMode::TiesAllowed => {
                if let Some((id, r)) = self.preference_rankings.iter().find(|(_, r)| **r < 1) {
                    out.push(format!("rank {r} for `{id}` is below 1"));
                }
            }
        }
        out
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties: the Pearson
/// correlation of the two rank vectors. A constant input has no defined
/// correlation and is reported as an error rather than a number.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "spearman inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("spearman needs at least two items".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant response vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPoint {
    pub a: String,
    pub b: String,
    pub rho_c: f64,
    pub rho_p: f64,
    pub distance: f64,
}

impl PairPoint {
    /// `(rho_c - rho_p) / √2`; positive below the `x = y` line.
    pub fn signed_distance(&self) -> f64 {
        (self.rho_c - self.rho_p) / MAX_DISTANCE
    }
}

/// A pair left out of aggregation because a correlation was undefined or
/// too few items were shared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedPair {
    pub a: String,
    pub b: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub points: Vec<PairPoint>,
    pub flagged: Vec<FlaggedPair>,
}

/// A participant's answers as item → value maps, ready for pairing.
#[derive(Debug, Clone)]
struct Profile<'a> {
    id: &'a str,
    considerations: &'a BTreeMap<String, i64>,
    preferences: &'a BTreeMap<String, i64>,
}

fn shared_values(
    items: &[String],
    a: &BTreeMap<String, i64>,
    b: &BTreeMap<String, i64>,
) -> (Vec<f64>, Vec<f64>) {
    items
        .iter()
        .filter_map(|id| Some((*a.get(id)? as f64, *b.get(id)? as f64)))
        .unzip()
}

fn pair_point(
    inst: &SurveyInstrument,
    options: ScoringOptions,
    a: &Profile<'_>,
    b: &Profile<'_>,
) -> std::result::Result<PairPoint, FlaggedPair> {
    let flag = |reason: String| FlaggedPair {
        a: a.id.to_string(),
        b: b.id.to_string(),
        reason,
    };
    let (ca, cb) = shared_values(&inst.considerations, a.considerations, b.considerations);
    let (pa, pb) = shared_values(&inst.preferences, a.preferences, b.preferences);
    if options.permissive_missing {
        let need_c = MIN_SHARED_ITEMS.min(inst.considerations.len());
        let need_p = MIN_SHARED_ITEMS.min(inst.preferences.len());
        if ca.len() < need_c || pa.len() < need_p {
            return Err(flag(format!(
                "too few shared items ({} considerations, {} preferences)",
                ca.len(),
                pa.len()
            )));
        }
    }
    let rho_c = spearman(&ca, &cb).map_err(|e| flag(format!("considerations: {e}")))?;
    let rho_p = spearman(&pa, &pb).map_err(|e| flag(format!("preferences: {e}")))?;
    Ok(PairPoint {
        a: a.id.to_string(),
        b: b.id.to_string(),
        rho_c,
        rho_p,
        distance: (rho_c - rho_p).abs() / MAX_DISTANCE,
    })
}

/// Computes a point for every unordered pair of participants in one wave.
/// Pairs are canonical (`a < b`) and sorted.
pub fn pair_points(
    responses: &[SurveyResponse],
    inst: &SurveyInstrument,
    options: ScoringOptions,
) -> Result<PairSet> {
    inst.validate()?;
    if responses.len() < 2 {
        return Err(Error::InvalidInput("need at least two responses".into()));
    }
    let wave = responses[0].wave;
    if let Some(r) = responses.iter().find(|r| r.wave != wave) {
        return Err(Error::InvalidInput(format!(
            "responses mix waves {wave} and {} (participant `{}`)",
            r.wave, r.participant_id
        )));
    }
    let mut bad = Vec::new();
    let mut ids = BTreeSet::new();
    for r in responses {
        if !ids.insert(r.participant_id.as_str()) {
            bad.push(format!("{} (duplicate response)", r.participant_id));
        }
        let problems = r.problems(inst, options);
        if !problems.is_empty() {
            bad.push(format!("{} ({})", r.participant_id, problems.join("; ")));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Discrepancy {
            message: "responses do not match the instrument".into(),
            ids: bad,
        });
    }

    let mut profiles: Vec<Profile<'_>> = responses
        .iter()
        .map(|r| Profile {
            id: &r.participant_id,
            considerations: &r.consideration_ratings,
            preferences: &r.preference_rankings,
        })
        .collect();
    profiles.sort_by(|x, y| x.id.cmp(y.id));

    let n = profiles.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<_> = pairs
        .par_iter()
        .map(|&(i, j)| pair_point(inst, options, &profiles[i], &profiles[j]))
        .collect();
    let mut set = PairSet::default();
    for r in results {
        match r {
            Ok(p) => set.points.push(p),
            Err(f) => set.flagged.push(f),
        }
    }
    Ok(set)
}

/// `1 - mean(distance) / √2` over the participant's pairs.
pub fn individual_dri(points: &[PairPoint], participant: &str) -> Result<f64> {
    let (sum, count) = points
        .iter()
        .filter(|p| p.a == participant || p.b == participant)
        .fold((0.0, 0usize), |(s, c), p| (s + p.distance, c + 1));
    if count == 0 {
        return Err(Error::Unknown {
            kind: "participant",
            name: participant.to_string(),
        });
    }
    Ok(1.0 - (sum / count as f64) / MAX_DISTANCE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriResult {
    pub wave: Wave,
    pub pair_points: Vec<PairPoint>,
    pub flagged_pairs: Vec<FlaggedPair>,
    pub individual: BTreeMap<String, f64>,
    /// Participants whose every pair was flagged.
    pub without_valid_pairs: Vec<String>,
    pub group: f64,
    /// Mean distance over all valid pairs, before normalization.
    pub raw_mean_distance: f64,
}

/// Aggregates pair points into individual and group scores.
pub fn group_dri(wave: Wave, pairs: PairSet, participants: &[String]) -> Result<DriResult> {
    let mut individual = BTreeMap::new();
    let mut without = Vec::new();
    let unique: BTreeSet<&String> = participants.iter().collect();
    for p in unique {
        match individual_dri(&pairs.points, p) {
            Ok(v) => {
                individual.insert(p.clone(), v);
            }
            Err(_) => without.push(p.clone()),
        }
    }
    if pairs.points.is_empty() {
        return Err(Error::InvalidInput("no valid pairs to aggregate".into()));
    }
    if individual.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two participants with a defined DRI".into(),
        ));
    }
    let group = individual.values().sum::<f64>() / individual.len() as f64;
    let raw_mean_distance =
        pairs.points.iter().map(|p| p.distance).sum::<f64>() / pairs.points.len() as f64;
    Ok(DriResult {
        wave,
        pair_points: pairs.points,
        flagged_pairs: pairs.flagged,
        individual,
        without_valid_pairs: without,
        group,
        raw_mean_distance,
    })
}

/// Validates, pairs and aggregates the responses of one wave.
pub fn score_wave(
    responses: &[SurveyResponse],
    inst: &SurveyInstrument,
    options: ScoringOptions,
) -> Result<DriResult> {
    let pairs = pair_points(responses, inst, options)?;
    let wave = responses[0].wave;
    let participants: Vec<String> = responses.iter().map(|r| r.participant_id.clone()).collect();
    group_dri(wave, pairs, &participants)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriDelta {
    pub pre_wave: Wave,
    pub post_wave: Wave,
    pub group_delta: f64,
    pub raw_mean_distance_delta: f64,
    /// Post minus pre, for participants scored in both waves.
    pub individual: BTreeMap<String, f64>,
    pub pre_only: usize,
    pub post_only: usize,
}

pub fn dri_delta(pre: &DriResult, post: &DriResult) -> Result<DriDelta> {
    let individual: BTreeMap<String, f64> = pre
        .individual
        .iter()
        .filter_map(|(id, before)| post.individual.get(id).map(|after| (id.clone(), after - before)))
        .collect();
    if individual.is_empty() {
        return Err(Error::InvalidInput("pre and post waves share no participants".into()));
    }
    if individual.len() < 2 {
        return Err(Error::InvalidInput(
            "pre and post waves share fewer than two participants".into(),
        ));
    }
    Ok(DriDelta {
        pre_wave: pre.wave,
        post_wave: post.wave,
        group_delta: post.group - pre.group,
        raw_mean_distance_delta: post.raw_mean_distance - pre.raw_mean_distance,
        pre_only: pre.individual.len() - individual.len(),
        post_only: post.individual.len() - individual.len(),
        individual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedDistance {
    pub a: String,
    pub b: String,
    pub signed_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterMetadata {
    pub wave: Wave,
    pub x: String,
    pub y: String,
    pub reference_line: ReferenceLine,
    pub pairs: usize,
    pub signed_distances: Vec<SignedDistance>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterExport {
    pub csv: String,
    pub metadata: ScatterMetadata,
}

/// Plot-ready pair points: CSV `a,b,rho_c,rho_p,distance` plus metadata
/// describing the `x = y` reference line.
pub fn export_scatter(result: &DriResult) -> ScatterExport {
    let mut csv = String::from("a,b,rho_c,rho_p,distance\n");
    for p in &result.pair_points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            p.a,
            p.b,
            fmt_f64(p.rho_c),
            fmt_f64(p.rho_p),
            fmt_f64(p.distance)
        );
    }
    let warning = if result.pair_points.is_empty() {
        log::warn!("no valid pairs in wave {}; scatter has no points", result.wave);
        Some("no valid pairs".to_string())
    } else {
        None
    };
    ScatterExport {
        csv,
        metadata: ScatterMetadata {
            wave: result.wave,
            x: "rho_c".into(),
            y: "rho_p".into(),
            reference_line: ReferenceLine {
                label: "x = y".into(),
                slope: 1.0,
                intercept: 0.0,
            },
            pairs: result.pair_points.len(),
            signed_distances: result
                .pair_points
                .iter()
                .map(|p| SignedDistance {
                    a: p.a.clone(),
                    b: p.b.clone(),
                    signed_distance: p.signed_distance(),
                })
                .collect(),
            warning,
        },
    }
}

#[derive(Debug, Deserialize)]
struct LongRow {
    participant_id: String,
    wave: String,
    item_id: String,
    value: i64,
}

/// Reads responses from a long-format CSV
/// (`participant_id,wave,item_id,value`) or from JSONL with one response
/// per line, chosen by file extension.
pub fn read_responses(path: &Path, inst: &SurveyInstrument) -> Result<Vec<SurveyResponse>> {
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        return crate::io::read_jsonl(path);
    }
    let cons: BTreeSet<&str> = inst.considerations.iter().map(String::as_str).collect();
    let prefs: BTreeSet<&str> = inst.preferences.iter().map(String::as_str).collect();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut by_key: BTreeMap<(String, Wave), SurveyResponse> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, row) in rdr.deserialize::<LongRow>().enumerate() {
        let row = row?;
        let wave: Wave = row.wave.parse().map_err(|e: Error| Error::Record {
            line: i + 2,
            message: e.to_string(),
        })?;
        let key = (row.participant_id.clone(), wave);
        let resp = by_key.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            SurveyResponse {
                participant_id: row.participant_id.clone(),
                wave,
                consideration_ratings: BTreeMap::new(),
                preference_rankings: BTreeMap::new(),
            }
        });
        let target = if cons.contains(row.item_id.as_str()) {
            &mut resp.consideration_ratings
        } else if prefs.contains(row.item_id.as_str()) {
            &mut resp.preference_rankings
        } else {
            return Err(Error::Discrepancy {
                message: format!("line {}: item `{}` is not in the instrument", i + 2, row.item_id),
                ids: vec![row.participant_id],
            });
        };
        if target.insert(row.item_id.clone(), row.value).is_some() {
            return Err(Error::Record {
                line: i + 2,
                message: format!("participant `{}` answers `{}` twice", row.participant_id, row.item_id),
            });
        }
    }
    Ok(order.into_iter().map(|k| by_key.remove(&k).unwrap()).collect())
}

/// Writes responses in the long CSV format.
pub fn responses_to_csv(responses: &[SurveyResponse]) -> String {
    let mut out = String::from("participant_id,wave,item_id,value\n");
    for r in responses {
        for (id, v) in r.consideration_ratings.iter().chain(&r.preference_rankings) {
            let _ = writeln!(out, "{},{},{},{}", r.participant_id, r.wave, id, v);
        }
    }
    out
}

/// Individual DRI values keyed by participant, as plain numbers.
pub fn individual_map(result: &DriResult) -> HashMap<&str, f64> {
    result.individual.iter().map(|(k, v)| (k.as_str(), *v)).collect()
}
