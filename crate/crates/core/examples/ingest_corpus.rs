//! Filter the fixture articles by date window and keyword, split them into
//! paragraphs, tag outlet leanings and print the accounting.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveDate;
use driforge::corpus::{build_paragraphs, ingest, CorpusStats, DateWindow, KeywordList, LeaningMap};

fn main() -> driforge::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let keywords = KeywordList::from_csv_path(&fixtures.join("keywords.csv"))?;
    let leanings = LeaningMap::from_csv_path(&fixtures.join("leanings.csv"))?;
    let window = DateWindow::new(
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2024, 8, 29).unwrap(),
    )?;

    let file = File::open(fixtures.join("articles.jsonl")).map_err(|e| driforge::Error::io(fixtures.join("articles.jsonl"), e))?;
    let (articles, report) = ingest(BufReader::new(file), window, &keywords, false)?;
    println!(
        "read {} lines: kept {}, out of window {}, no keyword {}, repeated id {}, bad records {}",
        report.read,
        report.kept,
        report.dropped_date,
        report.dropped_keyword,
        report.dropped_duplicate,
        report.errors.len()
    );

    let (paragraphs, corpus) = build_paragraphs(&articles, &keywords, &leanings);
    println!(
        "{} paragraphs chunked, {} without a keyword, {} exact repeats removed, {} from unscored outlets",
        corpus.paragraphs_chunked,
        corpus.paragraphs_dropped_keyword,
        corpus.dedup.duplicates,
        corpus.paragraphs_without_leaning
    );
    let stats = CorpusStats::from_paragraphs(&paragraphs);
    println!(
        "{} articles, {} paragraphs, mean {:.2} / median {} per article",
        stats.articles, stats.paragraphs, stats.mean_paragraphs_per_article, stats.median_paragraphs_per_article
    );
    for p in paragraphs.iter().take(3) {
        let leaning = p.leaning.map(|l| l.label()).unwrap_or("unscored");
        println!("  [{}] {} ({leaning}): {:.70}", p.language.as_str(), p.id, p.text);
    }
    Ok(())
}
