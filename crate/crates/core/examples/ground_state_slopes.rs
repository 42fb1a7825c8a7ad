//! Ground-state space at `k = 0` and the four band slopes it predicts.
use std::f64::consts::PI;
use std::sync::Arc;

use pce::groundstate::{collapse_residual, ground_slopes, ground_space, perturbation_rank, slope_validation};
use pce::lattice::{cutoff_modes, dual_basis, Lattice};
use pce::material::{coefficients_from_primitives, sphere_crystal};
use pce::planewave::{assemble_gram, FiberBasis};

fn main() -> pce::Result<()> {
    let lattice = Lattice::cubic(1.0);
    let dual = dual_basis(&lattice)?;
    let modes = cutoff_modes(&dual, 4.0 * PI);
    let weights = coefficients_from_primitives(&sphere_crystal(&lattice, 13.0, 0.25), &lattice, &modes.differences(&dual))?;
    let basis = FiberBasis::new(modes);
    let gram = Arc::new(assemble_gram(&weights, &basis)?);

    let gs = ground_space(&basis, &gram)?;
    println!("kernel residual {:.2e}, gradient residual {:.2e}", gs.kernel_residual, gs.jreg_residual);
    let dir = [1.0, 0.3, 0.1];
    println!("rank of k.A: {}, collapse residual {:.2e}", perturbation_rank(&gs, dir), collapse_residual(&gs, dir, &basis));
    let s = ground_slopes(&gs, dir)?;
    println!("slopes {:?}", s.slopes);
    let step = 2.0 * PI;
    let report = slope_validation(&basis, &gram, &gs, dir, &[0.1 * step, 0.03 * step, 0.01 * step])?;
    for v in &report.validation {
        println!("t = {:.4}: omegas {:?}, max rel err {:.2e}", v.t, v.omegas, v.rel_err.iter().copied().fold(0.0, f64::max));
    }
    println!("errors decrease: {}", report.decreasing);
    Ok(())
}
