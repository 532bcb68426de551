//! Writes inputs to a temporary directory, runs the top-down pipeline into
//! a run directory and replays it from its manifest.

use vulnscape::domain::write_edi;
use vulnscape::pipeline::{replay, run_topdown_dir, Inputs, RunOptions, TopDownConfig, MANIFEST_FILE};
use vulnscape::synth::EdiFixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("vulnscape-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let edi = dir.join("edi.csv");
    write_edi(&EdiFixture::default().generate(3).dataset.edi, std::fs::File::create(&edi)?)?;

    let inputs = Inputs {
        edi: Some(edi),
        ..Default::default()
    };
    let config = TopDownConfig {
        seed: 3,
        ..Default::default()
    };
    let manifest = run_topdown_dir(&inputs, &config, &dir.join("run"), &RunOptions::default())?;
    for a in &manifest.artifacts {
        println!("{} {}", &a.sha256[..12], a.path);
    }

    replay(&dir.join("run").join(MANIFEST_FILE), &dir.join("again"))?;
    println!("replay matches");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
