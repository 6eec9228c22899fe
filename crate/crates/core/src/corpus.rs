//! Article ingestion, keyword filtering, paragraph chunking, deduplication
//! and outlet leaning bins.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::short_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    De,
    Fr,
    It,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::De, Language::Fr, Language::It];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::De => "de",
            Language::Fr => "fr",
            Language::It => "it",
        }
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "de" | "german" => Ok(Language::De),
            "fr" | "french" => Ok(Language::Fr),
            "it" | "italian" => Ok(Language::It),
            other => Err(Error::InvalidInput(format!("unknown language `{other}`"))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Political leaning bin of a news outlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leaning {
    Left,
    LeftLiberal,
    Centrist,
    RightLiberal,
    Right,
}

impl Leaning {
    pub const ALL: [Leaning; 5] = [
        Leaning::Left,
        Leaning::LeftLiberal,
        Leaning::Centrist,
        Leaning::RightLiberal,
        Leaning::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Leaning::Left => "left",
            Leaning::LeftLiberal => "left_liberal",
            Leaning::Centrist => "centrist",
            Leaning::RightLiberal => "right_liberal",
            Leaning::Right => "right",
        }
    }

    /// Human-readable label used in prompts.
    pub fn label(self) -> &'static str {
        match self {
            Leaning::Left => "left",
            Leaning::LeftLiberal => "left-liberal",
            Leaning::Centrist => "centrist",
            Leaning::RightLiberal => "right-liberal",
            Leaning::Right => "right",
        }
    }

    /// Bins an outlet score on the −100..100 left-right scale.
    ///
    /// Centrist is the open interval (−5, 5); the liberal bins are closed
    /// ([−15, −5] and [5, 15]); everything beyond ±15 is left or right.
    pub fn from_score(score: f64) -> Result<Leaning> {
        if !score.is_finite() || !(-100.0..=100.0).contains(&score) {
            return Err(Error::Config(format!(
                "leaning score {score} outside [-100, 100]"
            )));
        }
        Ok(if score < -15.0 {
            Leaning::Left
        } else if score <= -5.0 {
            Leaning::LeftLiberal
        } else if score < 5.0 {
            Leaning::Centrist
        } else if score <= 15.0 {
            Leaning::RightLiberal
        } else {
            Leaning::Right
        })
    }
}

impl FromStr for Leaning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "left" => Ok(Leaning::Left),
            "left_liberal" => Ok(Leaning::LeftLiberal),
            "centrist" | "center" | "centre" => Ok(Leaning::Centrist),
            "right_liberal" => Ok(Leaning::RightLiberal),
            "right" => Ok(Leaning::Right),
            other => Err(Error::InvalidInput(format!("unknown leaning `{other}`"))),
        }
    }
}

impl fmt::Display for Leaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub outlet: String,
    #[serde(rename = "date")]
    pub published: NaiveDate,
    #[serde(rename = "lang")]
    pub language: Language,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: String,
    pub article_id: String,
    pub text: String,
    #[serde(rename = "lang")]
    pub language: Language,
    pub leaning: Option<Leaning>,
}

/// Case-folded, whitespace-collapsed form of a text. Used as the dedup key
/// and as the source of paragraph ids.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn paragraph_id(text: &str) -> String {
    short_id("p", normalize_text(text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyword {
    pub keyword: String,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordList {
    entries: Vec<Keyword>,
}

impl KeywordList {
    pub fn new(entries: impl IntoIterator<Item = (String, Language)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (keyword, language) in entries {
            let keyword = keyword.trim().to_lowercase();
            if keyword.is_empty() {
                continue;
            }
            if seen.insert((keyword.clone(), language)) {
                out.push(Keyword { keyword, language });
            }
        }
        if out.is_empty() {
            return Err(Error::Config("keyword list is empty".into()));
        }
        Ok(KeywordList { entries: out })
    }

    pub fn entries(&self) -> &[Keyword] {
        &self.entries
    }

    /// Reads a CSV with `keyword,language` columns.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for row in rdr.deserialize::<HashMap<String, String>>() {
            let row = row?;
            let keyword = row
                .get("keyword")
                .ok_or_else(|| Error::Config("keyword file needs a `keyword` column".into()))?;
            let language = row
                .get("language")
                .ok_or_else(|| Error::Config("keyword file needs a `language` column".into()))?;
            entries.push((keyword.clone(), language.parse()?));
        }
        KeywordList::new(entries)
    }
}

/// True iff the case-folded text contains any case-folded keyword as a
/// substring. Substring rather than token match so compounds such as
/// "Spitalfinanzierung" hit "Spital".
pub fn keyword_match(text: &str, keywords: &KeywordList) -> bool {
    let folded = text.to_lowercase();
    keywords
        .entries
        .iter()
        .any(|k| folded.contains(k.keyword.as_str()))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeaningMap {
    entries: BTreeMap<String, f64>,
}

impl LeaningMap {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (outlet, score) in entries {
            Leaning::from_score(score)?;
            if map.insert(outlet.trim().to_string(), score).is_some() {
                return Err(Error::Config(format!(
                    "outlet `{}` has more than one leaning score",
                    outlet.trim()
                )));
            }
        }
        Ok(LeaningMap { entries: map })
    }

    pub fn score(&self, outlet: &str) -> Option<f64> {
        self.entries.get(outlet.trim()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a CSV with `outlet,score` columns.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            outlet: String,
            score: f64,
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            entries.push((row.outlet, row.score));
        }
        LeaningMap::new(entries)
    }
}

/// Outlets missing from the map get no leaning.
pub fn assign_leaning(outlet: &str, map: &LeaningMap) -> Option<Leaning> {
    map.score(outlet)
        .map(|s| Leaning::from_score(s).expect("scores validated when the map was built"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateWindow {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Result<Self> {
        if from > to {
            return Err(Error::Config(format!("date window {from}..{to} is empty")));
        }
        Ok(DateWindow { from, to })
    }

    /// Inclusive on both ends.
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.from <= date && date <= self.to
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: usize,
    pub kept: usize,
    pub dropped_date: usize,
    pub dropped_keyword: usize,
    pub dropped_duplicate: usize,
    pub errors: Vec<RecordError>,
}

#[derive(Deserialize)]
struct RawArticle {
    id: String,
    outlet: String,
    date: String,
    lang: String,
    #[serde(default)]
    title: String,
    body: String,
}

fn parse_record(line: &str) -> std::result::Result<Article, String> {
    let raw: RawArticle = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if raw.body.trim().is_empty() {
        return Err(format!("article `{}` has an empty body", raw.id));
    }
    let published = NaiveDate::parse_from_str(raw.date.trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date `{}`: {e}", raw.date))?;
    let language = raw.lang.parse::<Language>().map_err(|e| e.to_string())?;
    Ok(Article {
        id: raw.id,
        outlet: raw.outlet,
        published,
        language,
        title: raw.title,
        body: raw.body,
    })
}

/// Reads an article dump (JSONL) and keeps in-window, keyword-matching
/// articles with unique ids. The keyword filter runs over title and body.
///
/// Malformed records are reported by line and skipped; with `strict` the
/// first one aborts the run.
pub fn ingest<R: BufRead>(
    source: R,
    window: DateWindow,
    keywords: &KeywordList,
    strict: bool,
) -> Result<(Vec<Article>, IngestReport)> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    let mut kept = Vec::new();

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        report.read += 1;
        let article = match parse_record(&line) {
            Ok(a) => a,
            Err(message) => {
                if strict {
                    return Err(Error::Record {
                        line: line_no,
                        message,
                    });
                }
                warn!("skipping article on line {line_no}: {message}");
                report.errors.push(RecordError {
                    line: line_no,
                    message,
                });
                continue;
            }
        };
        if !seen.insert(article.id.clone()) {
            report.dropped_duplicate += 1;
            continue;
        }
        if !window.contains(article.published) {
            report.dropped_date += 1;
            continue;
        }
        let haystack = format!("{}\n{}", article.title, article.body);
        if !keyword_match(&haystack, keywords) {
            report.dropped_keyword += 1;
            continue;
        }
        kept.push(article);
    }
    report.kept = kept.len();
    Ok((kept, report))
}

/// Serializes articles back into the dump format.
pub fn articles_to_jsonl(articles: &[Article]) -> Result<String> {
    crate::io::to_jsonl(articles)
}

/// Splits an article body on blank lines. Single newlines stay inside a
/// paragraph; every paragraph is trimmed and empty ones are dropped.
pub fn chunk(article: &Article) -> Vec<Paragraph> {
    let body = article.body.replace("\r\n", "\n");
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut flush = |lines: &mut Vec<&str>| {
        if lines.is_empty() {
            return;
        }
        let text = lines.join("\n").trim().to_string();
        lines.clear();
        if !text.is_empty() {
            paragraphs.push(Paragraph {
                id: paragraph_id(&text),
                article_id: article.id.clone(),
                text,
                language: article.language,
                leaning: None,
            });
        }
    };
    for line in body.split('\n') {
        if line.trim().is_empty() {
            flush(&mut current);
        } else {
            current.push(line);
        }
    }
    flush(&mut current);
    paragraphs
}

/// Paragraph-per-article statistics over a paragraph corpus. Only articles
/// that contribute at least one paragraph are counted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub articles: usize,
    pub paragraphs: usize,
    pub mean_paragraphs_per_article: f64,
    pub median_paragraphs_per_article: f64,
}

impl CorpusStats {
    pub fn from_paragraphs(paragraphs: &[Paragraph]) -> Self {
        let mut per_article: HashMap<&str, usize> = HashMap::new();
        for p in paragraphs {
            *per_article.entry(p.article_id.as_str()).or_default() += 1;
        }
        let mut counts: Vec<usize> = per_article.into_values().collect();
        counts.sort_unstable();
        let articles = counts.len();
        let (mean, median) = if articles == 0 {
            (0.0, 0.0)
        } else {
            let mean = paragraphs.len() as f64 / articles as f64;
            let median = if articles % 2 == 1 {
                counts[articles / 2] as f64
            } else {
                (counts[articles / 2 - 1] + counts[articles / 2]) as f64 / 2.0
            };
            (mean, median)
        };
        CorpusStats {
            articles,
            paragraphs: paragraphs.len(),
            mean_paragraphs_per_article: mean,
            median_paragraphs_per_article: median,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub input: usize,
    pub kept: usize,
    pub duplicates: usize,
    pub stats: CorpusStats,
}

/// Removes paragraphs whose normalized text was already seen. First
/// occurrence wins.
pub fn dedup(paragraphs: Vec<Paragraph>) -> (Vec<Paragraph>, DedupReport) {
    let input = paragraphs.len();
    let mut seen = HashSet::new();
    let kept: Vec<Paragraph> = paragraphs
        .into_iter()
        .filter(|p| seen.insert(crate::hashing::sha256_bytes(normalize_text(&p.text).as_bytes())))
        .collect();
    let report = DedupReport {
        input,
        kept: kept.len(),
        duplicates: input - kept.len(),
        stats: CorpusStats::from_paragraphs(&kept),
    };
    (kept, report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub ingest: IngestReport,
    pub paragraphs_chunked: usize,
    pub paragraphs_dropped_keyword: usize,
    pub dedup: DedupReport,
    pub paragraphs_without_leaning: usize,
}

/// Chunks articles, keeps keyword-matching paragraphs, dedups them and tags
/// each with its outlet's leaning.
pub fn build_paragraphs(
    articles: &[Article],
    keywords: &KeywordList,
    leanings: &LeaningMap,
) -> (Vec<Paragraph>, CorpusReport) {
    let mut report = CorpusReport::default();
    let mut candidates = Vec::new();
    for article in articles {
        let leaning = assign_leaning(&article.outlet, leanings);
        for mut p in chunk(article) {
            report.paragraphs_chunked += 1;
            if !keyword_match(&p.text, keywords) {
                report.paragraphs_dropped_keyword += 1;
                continue;
            }
            p.leaning = leaning;
            candidates.push(p);
        }
    }
    let (kept, dedup_report) = dedup(candidates);
    report.dedup = dedup_report;
    report.paragraphs_without_leaning = kept.iter().filter(|p| p.leaning.is_none()).count();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(words: &[&str]) -> KeywordList {
        KeywordList::new(words.iter().map(|w| (w.to_string(), Language::De))).unwrap()
    }

    fn article(id: &str, date: &str, body: &str) -> Article {
        Article {
            id: id.into(),
            outlet: "NZZ".into(),
            published: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            language: Language::De,
            title: String::new(),
            body: body.into(),
        }
    }

    fn naive_contains(hay: &[char], needle: &[char]) -> bool {
        if needle.is_empty() {
            return true;
        }
        (0..hay.len()).any(|start| {
            start + needle.len() <= hay.len()
                && (0..needle.len()).all(|j| hay[start + j] == needle[j])
        })
    }

    #[test]
    fn keyword_substring_hits_compound() {
        assert!(keyword_match("Die Spitalfinanzierung steigt", &kw(&["Spital"])));
        assert!(!keyword_match("kosten steigen", &kw(&["Gesundheitskosten"])));
    }

    #[test]
    fn keyword_match_case_folds_against_naive_oracle() {
        let text = "PRÄMIEN: Krankenkassen-Schock";
        let list = kw(&["krankenkassen"]);
        let hay: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        let needle: Vec<char> = "krankenkassen".chars().flat_map(char::to_lowercase).collect();
        assert!(naive_contains(&hay, &needle));
        assert!(keyword_match(text, &list));
        assert!(keyword_match("prämien", &kw(&["PRÄMIEN"])));
    }

    #[test]
    fn keyword_list_rejects_empty() {
        assert!(KeywordList::new(Vec::<(String, Language)>::new()).is_err());
        assert!(KeywordList::new(vec![("  ".to_string(), Language::Fr)]).is_err());
    }

    #[test]
    fn chunk_on_blank_lines() {
        let a = article("a", "2020-01-01", "A\n\nB\n\nC");
        let texts: Vec<_> = chunk(&a).into_iter().map(|p| p.text).collect();
        assert_eq!(texts, ["A", "B", "C"]);

        let a = article("a", "2020-01-01", "A\nB");
        let texts: Vec<_> = chunk(&a).into_iter().map(|p| p.text).collect();
        assert_eq!(texts, ["A\nB"]);

        let a = article("a", "2020-01-01", "  A  \n \n\n\t\nB\r\n\r\nC\n\n\n");
        let texts: Vec<_> = chunk(&a).into_iter().map(|p| p.text).collect();
        assert_eq!(texts, ["A", "B", "C"]);
    }

    #[test]
    fn dedup_normalizes_whitespace_and_case() {
        let a = article("a", "2020-01-01", "Hello  world\n\nhello world   \n\nOther");
        let (kept, report) = dedup(chunk(&a));
        assert_eq!(kept.len(), 2);
        assert_eq!(report.duplicates, 1);
        assert_eq!(kept[0].text, "Hello  world");
    }

    #[test]
    fn dedup_identity_on_distinct() {
        let a = article("a", "2020-01-01", "one\n\ntwo\n\nthree");
        let input = chunk(&a);
        let (kept, _) = dedup(input.clone());
        assert_eq!(kept, input);
    }

    #[test]
    fn dedup_planted_duplicates() {
        let mut paragraphs = Vec::new();
        for i in 0..80 {
            let text = format!("distinct paragraph number {i}");
            paragraphs.push(Paragraph {
                id: paragraph_id(&text),
                article_id: format!("a{}", i % 7),
                text,
                language: Language::De,
                leaning: None,
            });
        }
        for i in 0..20 {
            let mut dup = paragraphs[i * 3].clone();
            dup.article_id = "other".into();
            paragraphs.push(dup);
        }
        assert_eq!(paragraphs.len(), 100);
        let (kept, report) = dedup(paragraphs);
        assert_eq!(kept.len(), 80);
        assert_eq!(report.duplicates, 20);
    }

    #[test]
    fn leaning_bins() {
        let map = LeaningMap::new(vec![
            ("Zero".to_string(), 0.0),
            ("Ten".to_string(), 10.0),
            ("MinusFifteen".to_string(), -15.0),
            ("Over".to_string(), 15.01),
        ])
        .unwrap();
        assert_eq!(assign_leaning("Zero", &map), Some(Leaning::Centrist));
        assert_eq!(assign_leaning("Ten", &map), Some(Leaning::RightLiberal));
        assert_eq!(assign_leaning("MinusFifteen", &map), Some(Leaning::LeftLiberal));
        assert_eq!(assign_leaning("Over", &map), Some(Leaning::Right));
        assert_eq!(assign_leaning("Unknown", &map), None);
    }

    #[test]
    fn leaning_boundaries_owned_by_liberal_bins() {
        let eps = 1e-9;
        assert_eq!(Leaning::from_score(-15.0 - eps).unwrap(), Leaning::Left);
        assert_eq!(Leaning::from_score(-15.0).unwrap(), Leaning::LeftLiberal);
        assert_eq!(Leaning::from_score(-5.0).unwrap(), Leaning::LeftLiberal);
        assert_eq!(Leaning::from_score(-5.0 + eps).unwrap(), Leaning::Centrist);
        assert_eq!(Leaning::from_score(5.0 - eps).unwrap(), Leaning::Centrist);
        assert_eq!(Leaning::from_score(5.0).unwrap(), Leaning::RightLiberal);
        assert_eq!(Leaning::from_score(15.0).unwrap(), Leaning::RightLiberal);
        assert_eq!(Leaning::from_score(15.0 + eps).unwrap(), Leaning::Right);
    }

    #[test]
    fn leaning_score_out_of_range_is_config_error() {
        assert!(matches!(Leaning::from_score(100.5), Err(Error::Config(_))));
        assert!(LeaningMap::new(vec![("X".to_string(), -101.0)]).is_err());
        assert!(Leaning::from_score(f64::NAN).is_err());
    }

    #[test]
    fn ingest_keeps_matching_article_in_window() {
        let dump = r#"{"id":"1","outlet":"NZZ","date":"2020-03-01","lang":"de","title":"t","body":"Die Gesundheitskosten steigen."}"#;
        let window = DateWindow::new(
            NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2024, 8, 29).unwrap(),
        )
        .unwrap();
        let (articles, report) =
            ingest(dump.as_bytes(), window, &kw(&["Gesundheitskosten"]), false).unwrap();
        assert_eq!(articles.len(), 1);
        assert_eq!(report.kept, 1);
    }

    #[test]
    fn ingest_reports_empty_body_and_continues() {
        let dump = concat!(
            r#"{"id":"1","outlet":"NZZ","date":"2020-03-01","lang":"de","title":"Spital","body":"   "}"#,
            "\n",
            r#"{"id":"2","outlet":"NZZ","date":"2020-03-01","lang":"de","title":"","body":"Spital"}"#,
            "\n",
            "not json\n",
        );
        let window = DateWindow::new(
            NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2024, 8, 29).unwrap(),
        )
        .unwrap();
        let (articles, report) = ingest(dump.as_bytes(), window, &kw(&["spital"]), false).unwrap();
        assert_eq!(articles.len(), 1);
        assert_eq!(report.read, 3);
        assert_eq!(report.errors.len(), 2);
        assert_eq!(report.errors[0].line, 1);
        assert_eq!(report.errors[1].line, 3);

        let err = ingest(dump.as_bytes(), window, &kw(&["spital"]), true).unwrap_err();
        assert!(matches!(err, Error::Record { line: 1, .. }));
    }

    #[test]
    fn ingest_collapses_duplicate_ids() {
        let dump = concat!(
            r#"{"id":"a","outlet":"X","date":"2020-03-01","lang":"fr","title":"","body":"Hôpital un"}"#,
            "\n",
            r#"{"id":"b","outlet":"X","date":"2020-03-01","lang":"fr","title":"","body":"Hôpital deux"}"#,
            "\n",
            r#"{"id":"a","outlet":"X","date":"2020-03-01","lang":"fr","title":"","body":"Hôpital trois"}"#,
            "\n",
        );
        let window = DateWindow::new(
            NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2024, 8, 29).unwrap(),
        )
        .unwrap();
        let (articles, report) = ingest(dump.as_bytes(), window, &kw(&["hôpital"]), false).unwrap();
        assert_eq!(articles.len(), 2);
        assert_eq!(report.dropped_duplicate, 1);
        assert_eq!(articles[0].body, "Hôpital un");
    }

    #[test]
    fn corpus_stats_median_and_mean() {
        let mk = |aid: &str, i: usize| Paragraph {
            id: format!("{aid}{i}"),
            article_id: aid.into(),
            text: "x".into(),
            language: Language::It,
            leaning: None,
        };
        let ps = vec![mk("a", 0), mk("b", 0), mk("b", 1), mk("b", 2), mk("c", 0)];
        let stats = CorpusStats::from_paragraphs(&ps);
        assert_eq!(stats.articles, 3);
        assert_eq!(stats.median_paragraphs_per_article, 1.0);
        assert!((stats.mean_paragraphs_per_article - 5.0 / 3.0).abs() < 1e-12);
    }
}
