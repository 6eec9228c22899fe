//! Run every stage on a copy of the fixture directory and list what each
//! stage wrote. Uses the offline mock embedder and generator.

use std::fs;
use std::path::Path;

use driforge::pipeline::{run_all, RunConfig};

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}

fn main() -> driforge::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let work = tempfile::tempdir().expect("temp dir");
    copy_dir(&fixtures, work.path()).expect("copy fixtures");

    let config = RunConfig::load(&work.path().join("run.toml"))?;
    for m in run_all(&config)? {
        println!("{:<10} {} files", m.stage, m.output_hashes.len());
        for (file, hash) in m.output_hashes.iter().take(3) {
            println!("    {file:<40} {}", &hash[..12]);
        }
    }
    let summary = fs::read_to_string(config.output_dir().join("report/overlap_summary.json"))
        .map_err(|e| driforge::Error::io(config.output_dir().join("report/overlap_summary.json"), e))?;
    println!("{summary}");
    Ok(())
}
