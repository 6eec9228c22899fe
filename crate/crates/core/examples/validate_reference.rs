//! Compare generated statements with a reference survey: similarity
//! matrix, nearest candidates for review, and match rates from verdicts.

use std::path::Path;

use driforge::embedding::{BatchOptions, EmbeddingCache, EmbeddingProvider, MockEmbedder};
use driforge::validation::{match_matrix, match_rate, read_reference, top_candidates, MatchJudgment, Verdict};

fn main() -> driforge::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let reference = read_reference(&fixtures.join("reference.jsonl"))?;
    let generated: Vec<(String, String)> = [
        "Premiums take too large a share of household income.",
        "Cantons should plan hospitals together.",
        "A single public insurer would simplify the system.",
        "Doctors are visited more often than needed.",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| (format!("g{i}"), t.to_string()))
    .collect();

    let embedder = MockEmbedder::new(256);
    let cache = EmbeddingCache::in_memory(embedder.provider_id(), embedder.model_id(), 256);
    let refs: Vec<(String, String)> = reference.iter().map(|r| (r.id.clone(), r.text.clone())).collect();
    let matrix = match_matrix(&refs, &generated, &embedder, &cache, &BatchOptions::default())?;

    let mut judgments = Vec::new();
    for r in &reference {
        let best = &top_candidates(&matrix, &r.id, 2)?[0];
        println!("{} -> {} ({:.3})  {}", r.id, best.candidate_id, best.similarity, r.text);
        // stand-in reviewer: accept clear lexical matches only
        let verdict = if best.similarity >= 0.4 { Verdict::Good } else { Verdict::NoMatch };
        judgments.push(MatchJudgment {
            reference_id: r.id.clone(),
            candidate_id: best.candidate_id.clone(),
            verdict,
            reviewer: "example".into(),
        });
    }
    let all = match_rate(&judgments, &reference, false)?;
    let specific = match_rate(&judgments, &reference, true)?;
    println!(
        "matched {}/{} ({:.1}%); without general-style items {}/{}",
        all.matches,
        all.items,
        all.percent(),
        specific.matches,
        specific.items
    );
    Ok(())
}
