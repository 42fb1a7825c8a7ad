//! Coefficient tables from primitives and from a sampled grid, JSON round trip
//! and the weights report.
use std::f64::consts::PI;

use pce::lattice::{cutoff_modes, dual_basis, Lattice};
use pce::material::{
    coefficients_from_primitives, coefficients_from_samples, sphere_crystal, validate_weights, MaterialWeights, SampledGrid,
};

fn main() -> pce::Result<()> {
    let lattice = Lattice::cubic(1.0);
    let dual = dual_basis(&lattice)?;
    let modes = cutoff_modes(&dual, 2.0 * PI);
    let diff = modes.differences(&dual);
    let prims = sphere_crystal(&lattice, 4.0, 0.2);

    let analytic = coefficients_from_primitives(&prims, &lattice, &diff)?;
    let sampled = coefficients_from_samples(&SampledGrid::from_primitives(32, &prims, &lattice), Some(&diff))?;
    let mean = |w: &MaterialWeights| w.eps[&[0, 0, 0]].max_abs();
    println!("mean permittivity: analytic {:.5}, sampled {:.5}", mean(&analytic), mean(&sampled));

    let back = MaterialWeights::from_json(&analytic.to_json()?)?;
    let same = back.eps == analytic.eps && back.mu == analytic.mu && back.inv_eps == analytic.inv_eps && back.inv_mu == analytic.inv_mu;
    println!("tables survive the JSON round trip bit for bit: {same}");

    for (name, w) in [("analytic", &analytic), ("sampled", &sampled)] {
        let r = validate_weights(w, 128);
        println!(
            "{name}: eigenvalues in [{:.3}, {:.3}], hermiticity {:.1e}, failure {:?}",
            r.min_eigenvalue, r.max_eigenvalue, r.hermiticity_residual, r.failure
        );
    }
    Ok(())
}
