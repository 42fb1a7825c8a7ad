//! The six-dimensional ground-state space at `k = 0` and the first-order
//! dispersion of the four ground-state bands.

use std::sync::Arc;

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, cross, max_abs, norm, numerical_rank, scale, spectral_norm, CMat, Vec3, ZERO};
use crate::planewave::{assemble_rot, k_dot_rot, FiberBasis, FiberProblem, Gram};
use crate::projections::gradient_projector;
use crate::spectrum::{solve_fiber_values, DEFAULT_ZERO_TOL};

/// `B`-orthonormal basis `Ψ_(1..6)` of the ground-state space.
#[derive(Debug, Clone)]
pub struct GroundStateBasis {
    /// `N × 6`, columns `Ψ_(j)`.
    pub vectors: CMat,
    /// `6 × 6`, column `j` is the zeroth Fourier coefficient `a_(j)`.
    pub lambda: CMat,
    /// Starting vectors `v_(j)` (columns), E-constants first.
    pub frame: [Vec3; 3],
    /// `max ‖A(0) Ψ_(j)‖`.
    pub kernel_residual: f64,
    /// `max ‖Qreg(0) Ψ_(j)‖`.
    pub jreg_residual: f64,
}

impl GroundStateBasis {
    pub fn a(&self, j: usize) -> [c64; 6] {
        std::array::from_fn(|i| self.lambda[(i, j)])
    }
}

/// Right-handed orthonormal frame with first vector along `d`.
pub fn adapted_frame(d: Vec3) -> [Vec3; 3] {
    let u1 = scale(1.0 / norm(d), d);
    let axis = (0..3).min_by(|&a, &b| u1[a].abs().total_cmp(&u1[b].abs())).unwrap();
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let c = cross(u1, e);
    let u2 = scale(1.0 / norm(c), c);
    [u1, u2, cross(u1, u2)]
}

const CANONICAL: [Vec3; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// `Preg(0)` applied to the six constant fields, then Gram–Schmidt in the
/// `B` inner product (E-constants first, then H-constants).
pub fn ground_space(basis: &FiberBasis, gram: &Gram) -> Result<GroundStateBasis> {
    ground_space_with_frame(basis, gram, CANONICAL)
}

/// As [`ground_space`] with the constants taken along an orthonormal frame
/// whose first vector is `direction`.
pub fn ground_space_adapted(basis: &FiberBasis, gram: &Gram, direction: Vec3) -> Result<GroundStateBasis> {
    ground_space_with_frame(basis, gram, adapted_frame(direction))
}

fn ground_space_with_frame(basis: &FiberBasis, gram: &Gram, frame: [Vec3; 3]) -> Result<GroundStateBasis> {
    let zero = basis
        .modes
        .zero_position()
        .ok_or_else(|| Error::Inconsistent("mode set lacks γ* = 0".into()))?;
    let n = basis.dim();
    let mut v = Mat::<c64>::zeros(n, 6);
    for (j, f) in frame.iter().enumerate() {
        for i in 0..3 {
            v[(FiberBasis::e_offset(zero) + i, j)] = c64::new(f[i], 0.0);
            v[(FiberBasis::h_offset(zero) + i, j + 3)] = c64::new(f[i], 0.0);
        }
    }
    let qreg = gradient_projector([0.0; 3], basis, gram, true)?;
    let projected = &v - &qreg.matrix * &v;

    let b = &gram.matrix;
    let mut psi = Mat::<c64>::zeros(n, 6);
    let mut bpsi = Mat::<c64>::zeros(n, 6);
    for j in 0..6 {
        let mut x: Vec<c64> = (0..n).map(|i| projected[(i, j)]).collect();
        let b_norm = |x: &[c64]| -> f64 {
            let mut acc = ZERO;
            for r in 0..n {
                let mut bx = ZERO;
                for c in 0..n {
                    bx += b[(r, c)] * x[c];
                }
                acc += x[r].conj() * bx;
            }
            acc.re.max(0.0).sqrt()
        };
        let start = b_norm(&x);
        for _pass in 0..2 {
            let coeffs: Vec<c64> = (0..j)
                .map(|l| (0..n).map(|r| bpsi[(r, l)].conj() * x[r]).sum())
                .collect();
            for (l, c) in coeffs.iter().enumerate() {
                for r in 0..n {
                    x[r] -= psi[(r, l)] * *c;
                }
            }
        }
        let len = b_norm(&x);
        if !(len > 1e-8 * start) || start == 0.0 {
            return Err(Error::RankDeficient { expected: 6, found: j });
        }
        for r in 0..n {
            psi[(r, j)] = x[r] / len;
        }
        let col = b * psi.col(j);
        for r in 0..n {
            bpsi[(r, j)] = col[r];
        }
    }
    let lambda = Mat::from_fn(6, 6, |i, j| psi[(6 * zero + i, j)]);
    let a0 = assemble_rot([0.0; 3], basis);
    let kernel_residual = max_abs((&a0 * &psi).as_ref());
    let jreg_residual = max_abs((&qreg.matrix * &psi).as_ref());
    Ok(GroundStateBasis { vectors: psi, lambda, frame, kernel_residual, jreg_residual })
}

/// Largest component of the mode-`γ*` blocks of `Ψ` orthogonal to `γ*`,
/// relative to the largest entry of `Ψ`.
pub fn transversal_residual(gs: &GroundStateBasis, basis: &FiberBasis) -> f64 {
    let mut worst = 0.0f64;
    for (m, mode) in basis.modes.iter().enumerate() {
        let g = norm(mode.vector);
        if g == 0.0 {
            continue;
        }
        let u = scale(1.0 / g, mode.vector);
        for j in 0..6 {
            for off in [FiberBasis::e_offset(m), FiberBasis::h_offset(m)] {
                let x: [c64; 3] = std::array::from_fn(|i| gs.vectors[(off + i, j)]);
                let along: c64 = (0..3).map(|i| x[i] * u[i]).sum();
                for i in 0..3 {
                    worst = worst.max((x[i] - along * u[i]).norm());
                }
            }
        }
    }
    worst / max_abs(gs.vectors.as_ref()).max(f64::MIN_POSITIVE)
}

/// `k·A` (6×6) and its off-diagonal block `k·B` (3×3).
#[derive(Debug, Clone)]
pub struct PerturbationMatrices {
    pub k: Vec3,
    pub ka: CMat,
    pub kb: CMat,
}

fn cdot_cross(k: Vec3, a: [c64; 3], b: [c64; 3]) -> c64 {
    // k · (a × b)
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    c[0] * k[0] + c[1] * k[1] + c[2] * k[2]
}

/// Closed form from the zeroth coefficients:
/// `(k·A)_{lj} = k·(conj(a_l^E) × a_j^H − conj(a_l^H) × a_j^E)`.
pub fn perturbation_matrices(gs: &GroundStateBasis, k: Vec3) -> PerturbationMatrices {
    let split = |a: [c64; 6]| -> ([c64; 3], [c64; 3]) { ([a[0], a[1], a[2]], [a[3], a[4], a[5]]) };
    let ka = Mat::from_fn(6, 6, |l, j| {
        let (le, lh) = split(gs.a(l));
        let (je, jh) = split(gs.a(j));
        let (le, lh) = (le.map(|z| z.conj()), lh.map(|z| z.conj()));
        cdot_cross(k, le, jh) - cdot_cross(k, lh, je)
    });
    let kb = Mat::from_fn(3, 3, |i, j| ka[(i, j + 3)]);
    PerturbationMatrices { k, ka, kb }
}

/// `⟨Ψ_l, (k·𝐀) Ψ_j⟩ = Ψ_l† (A(k) − A(0)) Ψ_j` summed over every mode.
pub fn full_expectation_matrix(gs: &GroundStateBasis, k: Vec3, basis: &FiberBasis) -> CMat {
    let d = k_dot_rot(k, basis);
    gs.vectors.adjoint() * (&d * &gs.vectors)
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundSlopes {
    pub direction: Vec3,
    /// `{−c₁, −c₂, c₂, c₁}`, ascending.
    pub slopes: [f64; 4],
    pub singular_values: [f64; 3],
    /// Largest mismatch between `±σ(k̂·B)` and the eigenvalues of `k̂·A`.
    pub eigen_crosscheck: f64,
}

/// Signed slopes of the four ground-state bands along `direction`.
pub fn ground_slopes(gs: &GroundStateBasis, direction: Vec3) -> Result<GroundSlopes> {
    let r = norm(direction);
    if !(r > 0.0) {
        return Err(Error::Inconsistent("slope direction must be non-zero".into()));
    }
    let khat = scale(1.0 / r, direction);
    let p = perturbation_matrices(gs, khat);
    let sv = p.kb.singular_values().map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    let singular_values = [sv[0], sv[1], sv[2]];
    let slopes = [-sv[0], -sv[1], sv[1], sv[0]];
    let herm = crate::linalg::hermitian_part(p.ka.as_ref());
    let ev = herm
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    let mut from_svd = vec![-sv[0], -sv[1], -sv[2], sv[2], sv[1], sv[0]];
    from_svd.sort_by(f64::total_cmp);
    let eigen_crosscheck = ev.iter().zip(&from_svd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(GroundSlopes { direction: khat, slopes, singular_values, eigen_crosscheck })
}

/// Numerical rank of `k·A` (relative threshold `1e−8`).
pub fn perturbation_rank(gs: &GroundStateBasis, k: Vec3) -> usize {
    numerical_rank(perturbation_matrices(gs, k).ka.as_ref(), 1e-8).0
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeSample {
    pub t: f64,
    /// The four eigenvalues found in the annulus, ascending.
    pub omegas: [f64; 4],
    pub rel_err: [f64; 4],
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub direction: Vec3,
    pub slopes: [f64; 4],
    pub validation: Vec<SlopeSample>,
    /// Whether the largest relative error shrinks with `t`.
    pub decreasing: bool,
}

impl SlopeReport {
    pub fn max_error(&self, i: usize) -> f64 {
        self.validation[i].rel_err.iter().copied().fold(0.0, f64::max)
    }
}

/// Below this the relative error counts as exact when judging monotonicity.
const ERROR_FLOOR: f64 = 1e-12;

/// Solves at `k = t·k̂` for each `t` and compares the four eigenvalues in the
/// annulus `c_min t/2 < |ω| < 2 c_max t` with `t` times the predicted slopes.
pub fn slope_validation(
    basis: &FiberBasis,
    gram: &Arc<Gram>,
    gs: &GroundStateBasis,
    direction: Vec3,
    ts: &[f64],
) -> Result<SlopeReport> {
    if ts.is_empty() || ts.windows(2).any(|w| !(w[1] < w[0])) || ts.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Config("t values must be positive and strictly decreasing".into()));
    }
    let pred = ground_slopes(gs, direction)?;
    let c_min = pred.singular_values[1];
    let c_max = pred.singular_values[0];
    let mut validation = Vec::with_capacity(ts.len());
    for &t in ts {
        let k = scale(t, pred.direction);
        let sp = solve_fiber_values(&FiberProblem::new(k, basis, gram.clone()), DEFAULT_ZERO_TOL)?;
        let found: Vec<f64> = sp
            .eigenvalues
            .iter()
            .copied()
            .filter(|w| w.abs() > 0.5 * c_min * t && w.abs() < 2.0 * c_max * t)
            .collect();
        if found.len() != 4 {
            return Err(Error::SlopeIsolation { t, found: found.len() });
        }
        let omegas = [found[0], found[1], found[2], found[3]];
        let rel_err = std::array::from_fn(|i| {
            let want = t * pred.slopes[i];
            (omegas[i] - want).abs() / want.abs()
        });
        validation.push(SlopeSample { t, omegas, rel_err });
    }
    let worst: Vec<f64> = validation
        .iter()
        .map(|s| s.rel_err.iter().copied().fold(0.0, f64::max).max(ERROR_FLOOR))
        .collect();
    let decreasing = worst.windows(2).all(|w| w[1] <= w[0]);
    Ok(SlopeReport { direction: pred.direction, slopes: pred.slopes, validation, decreasing })
}

/// `‖full_expectation_matrix − perturbation_matrices.ka‖_max`.
pub fn collapse_residual(gs: &GroundStateBasis, k: Vec3, basis: &FiberBasis) -> f64 {
    let full = full_expectation_matrix(gs, k, basis);
    crate::linalg::max_abs_diff(full.as_ref(), perturbation_matrices(gs, k).ka.as_ref())
}

/// `‖k·A − [[0, k·B], [(k·B)†, 0]]‖_max` together with `‖k·A − (k·A)†‖`.
pub fn block_structure_residual(p: &PerturbationMatrices) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..6 {
        for j in 0..6 {
            let same_block = (i < 3) == (j < 3);
            if same_block {
                worst = worst.max(p.ka[(i, j)].norm());
            } else {
                worst = worst.max((p.ka[(i, j)] - p.ka[(j, i)].conj()).norm());
            }
        }
    }
    worst / spectral_norm(p.ka.as_ref()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cutoff_modes, dual_basis, Lattice};
    use crate::linalg::{cross_matrix, max_abs_diff};
    use crate::material::{coefficients_from_primitives, GeometryPrimitive, MaterialWeights};
    use crate::planewave::assemble_gram;
    use std::f64::consts::PI;

    fn setup(w: Option<f64>, radius: f64) -> (FiberBasis, Arc<Gram>) {
        let lattice = Lattice::cubic(1.0);
        let dual = dual_basis(&lattice).unwrap();
        let basis = FiberBasis::new(cutoff_modes(&dual, radius));
        let weights = match w {
            None => MaterialWeights::vacuum(),
            Some(eps) => {
                let prims = vec![
                    GeometryPrimitive::Background { eps: 1.0.into(), mu: 1.0.into() },
                    GeometryPrimitive::Sphere { center: [0.5; 3], radius: 0.35, eps: eps.into(), mu: 1.0.into() },
                ];
                coefficients_from_primitives(&prims, &lattice, &basis.modes.differences(&dual)).unwrap()
            }
        };
        let gram = Arc::new(assemble_gram(&weights, &basis).unwrap());
        (basis, gram)
    }

    fn rot_block(k: Vec3) -> CMat {
        let x = cross_matrix(k);
        Mat::from_fn(6, 6, |i, j| match (i < 3, j < 3) {
            (true, false) => c64::new(-x[i][j - 3], 0.0),
            (false, true) => c64::new(x[i - 3][j], 0.0),
            _ => ZERO,
        })
    }

    #[test]
    fn vacuum_ground_space_is_canonical() {
        let (basis, gram) = setup(None, 2.0 * PI);
        let gs = ground_space(&basis, &gram).unwrap();
        assert!(max_abs_diff(gs.lambda.as_ref(), CMat::identity(6, 6).as_ref()) < 1e-14);
        let k = [0.3, -0.7, 0.2];
        let p = perturbation_matrices(&gs, k);
        assert!(max_abs_diff(p.ka.as_ref(), rot_block(k).as_ref()) < 1e-14);
        assert!(collapse_residual(&gs, k, &basis) < 1e-14);
        let s = ground_slopes(&gs, [0.0, 0.0, 2.0]).unwrap();
        for (a, b) in s.slopes.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_ground_space_structure() {
        let (basis, gram) = setup(Some(8.0), 4.0 * PI);
        let gs = ground_space(&basis, &gram).unwrap();
        assert!(gs.kernel_residual < 1e-10 && gs.jreg_residual < 1e-10);
        assert!(transversal_residual(&gs, &basis) < 1e-8);
        for j in 0..3 {
            for i in 3..6 {
                assert!(gs.lambda[(i, j)].norm() < 1e-14 && gs.lambda[(j, i)].norm() < 1e-14);
            }
        }
        let bpsi = gs.vectors.adjoint() * (&gram.matrix * &gs.vectors);
        assert!(max_abs_diff(bpsi.as_ref(), CMat::identity(6, 6).as_ref()) < 1e-10);
        let (rank, _) = numerical_rank(gs.lambda.as_ref(), 1e-10);
        assert_eq!(rank, 6);

        let k = [0.4, 0.1, -0.9];
        let p = perturbation_matrices(&gs, k);
        assert!(block_structure_residual(&p) < 1e-12);
        assert_eq!(perturbation_rank(&gs, k), 4);
        assert_eq!(numerical_rank(p.kb.as_ref(), 1e-8).0, 2);
        assert!(collapse_residual(&gs, k, &basis) < 1e-8);
        let p2 = perturbation_matrices(&gs, scale(2.0, k));
        assert_eq!(max_abs_diff(p2.ka.as_ref(), Mat::from_fn(6, 6, |i, j| p.ka[(i, j)] * 2.0).as_ref()), 0.0);
        let s = ground_slopes(&gs, k).unwrap();
        assert!(s.eigen_crosscheck < 1e-12);
    }

    #[test]
    fn adapted_frame_zero_pattern() {
        let (basis, gram) = setup(Some(8.0), 2.0 * PI);
        let d = [1.0, 0.0, 0.0];
        let gs = ground_space_adapted(&basis, &gram, d).unwrap();
        let p = perturbation_matrices(&gs, d);
        for i in 0..3 {
            assert!(p.kb[(0, i)].norm() < 1e-13 && p.kb[(i, 0)].norm() < 1e-13);
        }
        let sub = Mat::from_fn(2, 2, |i, j| p.kb[(i + 1, j + 1)]);
        assert_eq!(numerical_rank(sub.as_ref(), 1e-8).0, 2);
    }

    #[test]
    fn constant_media_slopes() {
        let dual = dual_basis(&Lattice::cubic(1.0)).unwrap();
        let basis = FiberBasis::new(cutoff_modes(&dual, 2.0 * PI));
        let gram = Arc::new(assemble_gram(&MaterialWeights::scalar(4.0, 1.0).unwrap(), &basis).unwrap());
        let gs = ground_space(&basis, &gram).unwrap();
        for d in [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]] {
            let s = ground_slopes(&gs, d).unwrap();
            for (a, b) in s.slopes.iter().zip([-0.5, -0.5, 0.5, 0.5]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let rep = slope_validation(&basis, &gram, &gs, [1.0, 0.0, 0.0], &[0.1, 0.01]).unwrap();
        assert!(rep.max_error(1) < 1e-10);
    }

    #[test]
    fn vacuum_slope_validation() {
        let (basis, gram) = setup(None, 2.0 * PI);
        let gs = ground_space(&basis, &gram).unwrap();
        let rep = slope_validation(&basis, &gram, &gs, [0.3, 0.5, 0.1], &[2.0 * PI * 1e-2]).unwrap();
        assert_eq!(rep.validation[0].rel_err.len(), 4);
        assert!(rep.max_error(0) < 1e-6);
        assert!(slope_validation(&basis, &gram, &gs, [1.0, 0.0, 0.0], &[0.01, 0.1]).is_err());
    }
}
