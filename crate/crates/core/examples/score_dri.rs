//! Score the fixture survey before and after deliberation and print the
//! DRI change per participant.

use std::path::Path;

use driforge::dri::{dri_delta, export_scatter, read_responses, score_wave, ScoringOptions, SurveyInstrument, Wave};

fn main() -> driforge::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let inst = SurveyInstrument::from_json_path(&fixtures.join("instrument.json"))?;
    let responses = read_responses(&fixtures.join("responses.csv"), &inst)?;

    let wave = |w: Wave| -> driforge::Result<_> {
        let rows: Vec<_> = responses.iter().filter(|r| r.wave == w).cloned().collect();
        score_wave(&rows, &inst, ScoringOptions::default())
    };
    let pre = wave(Wave::Pre)?;
    let post = wave(Wave::Post)?;
    println!("group DRI: pre {:.3}, post {:.3}", pre.group, post.group);

    let delta = dri_delta(&pre, &post)?;
    for (id, d) in &delta.individual {
        println!("  {id}: {:+.3}", d);
    }

    let scatter = export_scatter(&post);
    println!("post-deliberation pair points (first rows):");
    for line in scatter.csv.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
