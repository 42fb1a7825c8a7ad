//! Vacuum bands against the closed form `±|γ + k|`.
//!
//! Deviations are relative to `max(|ω|, 1)`, so numerical zeros count absolutely.
use std::f64::consts::PI;

use pce::lattice::{cutoff_modes, dual_basis, Lattice};
use pce::planewave::FiberBasis;
use pce::spectrum::{analytic_free_spectrum, multiset_rel_deviation, solve_fiber_values, vacuum_problem, DEFAULT_ZERO_TOL};

fn main() -> pce::Result<()> {
    let dual = dual_basis(&Lattice::fcc(1.0))?;
    let basis = FiberBasis::new(cutoff_modes(&dual, 6.0 * PI));
    println!("{} modes, dimension {}", basis.n_modes(), basis.dim());
    for k in [[0.0, 0.0, 0.0], [0.3, -0.2, 1.1], [2.0, 1.0, 0.5]] {
        let sp = solve_fiber_values(&vacuum_problem(k, &basis)?, DEFAULT_ZERO_TOL)?;
        let exact = analytic_free_spectrum(k, &basis.modes);
        let dev = multiset_rel_deviation(&sp.eigenvalues, &exact, 1.0).unwrap_or(f64::NAN);
        println!("k = {k:?}: zeros {}, deviation {dev:.2e}", sp.zero_count());
    }
    Ok(())
}
