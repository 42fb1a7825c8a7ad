//! Two-term Moyal products against the closed-form operator symbols.
use std::f64::consts::PI;

use pce::lattice::{cutoff_modes, dual_basis, Lattice};
use pce::material::{coefficients_from_primitives, sphere_crystal, Modulation, ModulationPair};
use pce::planewave::FiberBasis;
use pce::symbol::{eval_symbol_rescaled, symbol_residuals, SymbolContext, SymbolPoint};

fn main() -> pce::Result<()> {
    let lattice = Lattice::cubic(1.0);
    let dual = dual_basis(&lattice)?;
    let modes = cutoff_modes(&dual, 2.0 * PI);
    let weights = coefficients_from_primitives(&sphere_crystal(&lattice, 13.0, 0.25), &lattice, &modes.differences(&dual))?;
    let ctx = SymbolContext::new(&weights, FiberBasis::new(modes));
    let m = ModulationPair {
        eps: Modulation::GaussianBump { alpha: 0.4, center: [0.1, 0.2, 0.3], sigma: 0.6 },
        mu: Modulation::Cosine { alpha: 0.3, q: [1.0, 0.5, 0.0] },
    };
    let shift_vector = dual.vector([1, 0, 0]);
    for (r, k, lambda) in [([0.3, -0.2, 0.5], [0.7, 0.1, -0.4], 0.1), ([1.0, 1.0, 0.0], [2.0, 0.0, 0.3], 0.5)] {
        let p = SymbolPoint::new(r, k, lambda)?;
        let res = symbol_residuals(&p, &m, &ctx, [1, 0, 0], shift_vector)?;
        println!(
            "r {r:?} k {k:?} λ {lambda}: physical {:.1e}, rescaled {:.1e}, second order {:.1e}, equivariance {:.1e}/{:.1e}",
            res.physical, res.rescaled, res.second_order, res.equivariance_physical, res.equivariance_rescaled
        );
        let s = eval_symbol_rescaled(&p, &m, &ctx)?;
        println!("  |m1| = {:.3e}", pce::linalg::max_abs(s.m1.as_ref()));
    }
    Ok(())
}
