//! Band diagram of a dielectric sphere crystal along Γ-X-M-Γ.
//!
//! `cargo run --release --example sphere_bands -- [out_dir]`
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use pce::lattice::{cutoff_modes, dual_basis, kpath, Lattice};
use pce::material::{check_structure, coefficients_from_primitives, sphere_crystal};
use pce::planewave::{assemble_gram, FiberBasis};
use pce::spectrum::{label_bands, solve_many, write_band_csv, DEFAULT_ZERO_TOL};

fn main() -> pce::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let lattice = Lattice::cubic(1.0);
    let dual = dual_basis(&lattice)?;
    let modes = cutoff_modes(&dual, 4.0 * PI);
    let weights = coefficients_from_primitives(&sphere_crystal(&lattice, 13.0, 0.25), &lattice, &modes.differences(&dual))?;
    check_structure(&weights, 64)?;
    let basis = FiberBasis::new(modes);
    let gram = Arc::new(assemble_gram(&weights, &basis)?);

    let x = dual.vector([1, 0, 0]).map(|v| v / 2.0);
    let m = [x[0], x[0], 0.0];
    let path = kpath(&[[0.0; 3], x, m, [0.0; 3]], 8)?;
    let spectra = solve_many(&path.samples, &basis, &gram, DEFAULT_ZERO_TOL)?;
    let bands = label_bands(&spectra, &path, &dual, basis.n_modes(), 6)?;
    for (i, k) in bands.ks.iter().enumerate() {
        let row: Vec<String> = (1..=6).map(|n| format!("{:.4}", bands.omega(i, n).unwrap())).collect();
        println!("{:>6.3} {:?} {}", bands.params[i], k.map(|v| (v * 100.0).round() / 100.0), row.join(" "));
    }
    let csv = out.join("sphere_bands.csv");
    write_band_csv(&csv, &bands)?;
    println!("wrote {}", csv.display());
    Ok(())
}
