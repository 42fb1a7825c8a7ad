//! Gradient projectors near `k = 0`: the plain one jumps, the regularized one does not.
use std::f64::consts::PI;

use pce::lattice::{cutoff_modes, dual_basis, Lattice};
use pce::material::{coefficients_from_primitives, sphere_crystal};
use pce::planewave::{assemble_gram, FiberBasis};
use pce::projections::{discontinuity_probe, intersection_dimension};

fn main() -> pce::Result<()> {
    let lattice = Lattice::cubic(1.0);
    let dual = dual_basis(&lattice)?;
    let modes = cutoff_modes(&dual, 2.0 * PI);
    let weights = coefficients_from_primitives(&sphere_crystal(&lattice, 13.0, 0.25), &lattice, &modes.differences(&dual))?;
    let basis = FiberBasis::new(modes);
    let gram = assemble_gram(&weights, &basis)?;

    for k in [[0.0; 3], [0.4, -0.1, 0.2]] {
        let (dim, _) = intersection_dimension(k, &basis, &gram)?;
        println!("k = {k:?}: dim(ran Qper ∩ ran Pper) = {dim}");
    }
    for row in discontinuity_probe(&[1e-1, 1e-2, 1e-3], [0.2, 0.9, -0.4], &basis, &gram)? {
        println!("t = {:.0e}: plain {:.4}, regularized {:.2e}", row.t, row.norm_plain, row.norm_reg);
    }
    Ok(())
}
