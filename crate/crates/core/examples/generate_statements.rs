//! Run the category × leaning generation matrix against the offline mock
//! generator, fold near-duplicates and write a review sheet.

use std::collections::HashMap;

use driforge::categorization::Selection;
use driforge::corpus::Leaning;
use driforge::embedding::{BatchOptions, EmbeddingCache, EmbeddingProvider, MockEmbedder};
use driforge::generation::{
    dedup_statements, review_export, run_matrix, GenerationOptions, MatrixConfig, MockGenerator, PromptTemplates,
};

fn main() -> driforge::Result<()> {
    let categories = ["Overall costs", "Hospital planning", "Prevention"];
    let paragraphs: HashMap<String, String> = [
        ("p1", "Die Gesundheitskosten sind im letzten Jahr erneut gestiegen."),
        ("p2", "Der Kanton will die Spitalplanung mit den Nachbarkantonen abstimmen."),
        ("p3", "Les campagnes de prévention restent sous-financées."),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();

    let leanings = [Leaning::Left, Leaning::Centrist, Leaning::Right];
    let mut selections = Vec::new();
    for c in categories {
        for l in leanings {
            selections.push(Selection {
                category: c.to_string(),
                leaning: Some(l),
                k: 3,
                paragraph_ids: vec!["p1".into(), "p2".into(), "p3".into()],
                scores: vec![0.8, 0.7, 0.6],
            });
        }
    }
    let config = MatrixConfig {
        categories: categories.iter().map(|c| c.to_string()).collect(),
        general_category: Some("Overall costs".into()),
        leanings: leanings.to_vec(),
        ..MatrixConfig::default()
    };
    let out = run_matrix(
        &config,
        &selections,
        &paragraphs,
        &PromptTemplates::default(),
        &HashMap::new(),
        &MockGenerator::new(),
        &GenerationOptions::default(),
    )?;
    let r = &out.report;
    println!(
        "{} of {} cells: {} considerations, {} policy options",
        r.cells_succeeded, r.cells_planned, r.considerations, r.policies
    );
    for s in out.statements.iter().take(3) {
        println!("  {} [{} / {}] {}", s.id, s.category, s.leaning.label(), s.text);
    }

    let embedder = MockEmbedder::new(256);
    let cache = EmbeddingCache::in_memory(embedder.provider_id(), embedder.model_id(), 256);
    let dedup = dedup_statements(&out.statements, &embedder, &cache, &BatchOptions::default(), 0.95)?;
    println!("{} kept after dedup, {} groups", dedup.kept.len(), dedup.groups.len());

    let sheet = review_export(&out.statements, &dedup.groups);
    let csv = sheet.to_csv()?;
    println!("review sheet preview:");
    for line in csv.lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
