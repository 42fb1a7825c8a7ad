//! Drives a CLI command from a JSON configuration in-process.
use pce::cli::{run, Command};

fn main() -> pce::Result<()> {
    let dir = std::env::temp_dir().join("pce-cli-config");
    let config = r#"{
        "lattice": {"preset": "fcc", "a": 1.0},
        "cutoff": 1.5,
        "k_path": {"vertices": [[0, 0, 0], [0.5, 0, 0.5], [0.5, 0.25, 0.75]], "samples_per_segment": 6},
        "n_bands": 6
    }"#;
    for cmd in [Command::Oracle, Command::Bands] {
        let outcome = run(cmd, config, std::path::Path::new("."), Some(&dir))?;
        println!("{}: exit {}, {}", cmd.name(), outcome.exit_code, outcome.summary);
        for a in outcome.artifacts {
            println!("  {}", a.display());
        }
    }
    Ok(())
}
