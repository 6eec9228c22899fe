//! Score the fixture corpus against the category anchors, pick the top
//! paragraphs per category and leaning, and compare categories by overlap.

use std::path::Path;

use chrono::NaiveDate;
use driforge::categorization::{overlap_matrix, select_top_k, similarity_histogram, Aggregation};
use driforge::corpus::{DateWindow, Leaning};
use driforge::embedding::ReductionSpec;
use driforge::pipeline::tasks::{categorize_files, ingest_files};
use driforge::pipeline::EmbeddingSettings;

fn main() -> driforge::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let work = tempfile::tempdir().expect("temp dir");
    let corpus = work.path().join("paragraphs.jsonl");
    let window = DateWindow::new(
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2024, 8, 29).unwrap(),
    )?;
    ingest_files(
        &fixtures.join("articles.jsonl"),
        &fixtures.join("keywords.csv"),
        &fixtures.join("leanings.csv"),
        window,
        false,
        &corpus,
    )?;

    let settings = EmbeddingSettings { dim: 256, ..EmbeddingSettings::default() };
    let table = categorize_files(
        &corpus,
        None,
        &fixtures.join("anchors.json"),
        &ReductionSpec::none(),
        Aggregation::Max,
        &settings,
        None,
        work.path(),
    )?;
    println!("{} paragraphs × {} categories", table.rows.len(), table.categories.len());

    let category = &table.categories[3];
    for leaning in [None, Some(Leaning::Left), Some(Leaning::Right)] {
        let sel = select_top_k(&table, category, 3, leaning)?;
        let scope = leaning.map(|l| l.label()).unwrap_or("pooled");
        println!("top 3 for `{category}` ({scope}): {:?}", sel.paragraph_ids);
    }

    let hist = similarity_histogram(&table, category, 10)?;
    print!("{}", hist.to_csv());

    for k in [5, 20, 100] {
        let sels = table
            .categories
            .iter()
            .map(|c| select_top_k(&table, c, k, None))
            .collect::<driforge::Result<Vec<_>>>()?;
        let m = overlap_matrix(&sels)?;
        println!("k = {k:>3}: mean off-diagonal overlap {:.3}", m.mean_off_diagonal);
    }
    Ok(())
}
