//! Band drift of the sphere crystal as the plane-wave cutoff grows.
use std::path::Path;

use pce::cli::{convergence_report, RunConfig};

fn main() -> pce::Result<()> {
    let config = RunConfig::from_json(
        r#"{"cutoff": 1.0, "n_bands": 4, "weights": {"primitives": [
            {"kind": "background"},
            {"kind": "sphere", "center": [0, 0, 0], "radius": 0.3908, "eps": 13.0}]}}"#,
    )?;
    let t = convergence_report(&config, &[1.0, 2.0, 3.0], [1.2, 0.4, -0.3], Path::new("."))?;
    for (c, w) in t.cutoffs.iter().zip(&t.omegas) {
        println!("cutoff {c}: {w:.5?}");
    }
    for d in &t.drift {
        let d: Vec<String> = d.iter().map(|x| format!("{x:.2e}")).collect();
        println!("drift {}", d.join(" "));
    }
    println!("non-monotone bands: {:?}", t.non_monotone);
    Ok(())
}
