//! Fiber eigenproblems, the free-operator oracle and band labelling.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use faer::Side;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{DualLattice, KPath, ModeSet};
use crate::linalg::{add, c64, hermitian_part, max_abs, norm, spectral_norm, CMat, Vec3};
use crate::material::MaterialWeights;
use crate::planewave::{assemble_gram, assemble_rot, FiberBasis, FiberProblem, Gram};

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;
/// Relative distance (in units of `|e*₁|`) below which `k` is snapped to Γ*.
pub const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct FiberSpectrum {
    pub k: Vec3,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are `B`-orthonormal eigenvectors, when requested.
    pub eigenvectors: Option<CMat>,
    pub zero_tol: f64,
    /// `max_i ‖A u_i − ω_i B u_i‖ / (‖A‖ + |ω_i| ‖B‖)`.
    pub residual: Option<f64>,
    /// `‖U† B U − I‖_max`.
    pub orthonormality: Option<f64>,
}

impl FiberSpectrum {
    fn scale(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self, omega: f64) -> bool {
        omega.abs() < self.zero_tol * self.scale()
    }

    pub fn zero_count(&self) -> usize {
        self.eigenvalues.iter().filter(|w| self.is_zero(**w)).count()
    }

    /// Eigenvalues not classified as zero modes, ascending.
    pub fn nonzero(&self) -> Vec<f64> {
        self.eigenvalues.iter().copied().filter(|w| !self.is_zero(*w)).collect()
    }
}

/// `C = L⁻¹ A L⁻†` for `B = L L†`.
fn reduce(a: &CMat, gram: &Gram) -> CMat {
    let l = &gram.cholesky;
    let mut x = a.clone();
    l.solve_lower_triangular_in_place(&mut x);
    let mut c = x.adjoint().to_owned();
    l.solve_lower_triangular_in_place(&mut c);
    hermitian_part(c.as_ref())
}

fn check_dims(problem: &FiberProblem) -> Result<()> {
    let n = problem.a.nrows();
    if problem.a.ncols() != n || problem.b().nrows() != n || problem.b().ncols() != n {
        return Err(Error::Inconsistent("A and B dimensions differ".into()));
    }
    Ok(())
}

/// Eigenvalues only; the cheap path used for band diagrams.
pub fn solve_fiber_values(problem: &FiberProblem, zero_tol: f64) -> Result<FiberSpectrum> {
    check_dims(problem)?;
    let c = reduce(&problem.a, &problem.gram);
    let eigenvalues = c
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::EigenSolver(format!("Hermitian eigenvalue iteration did not converge ({e:?})")))?;
    Ok(FiberSpectrum { k: problem.k, eigenvalues, eigenvectors: None, zero_tol, residual: None, orthonormality: None })
}

/// Full eigendecomposition with residual and `B`-orthonormality checks.
pub fn solve_fiber(problem: &FiberProblem, zero_tol: f64) -> Result<FiberSpectrum> {
    check_dims(problem)?;
    let c = reduce(&problem.a, &problem.gram);
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenSolver(format!("Hermitian eigendecomposition did not converge ({e:?})")))?;
    let n = c.nrows();
    let eigenvalues: Vec<f64> = (0..n).map(|i| evd.S()[i].re).collect();
    let mut u = evd.U().to_owned();
    problem.gram.cholesky.adjoint().solve_upper_triangular_in_place(&mut u);

    let b = problem.b();
    let bu = b * &u;
    let au = &problem.a * &u;
    let (na, nb) = (spectral_norm(problem.a.as_ref()), spectral_norm(b.as_ref()));
    let mut residual = 0.0f64;
    for j in 0..n {
        let w = eigenvalues[j];
        let r = (0..n).map(|i| (au[(i, j)] - bu[(i, j)] * w).norm_sqr()).sum::<f64>().sqrt();
        residual = residual.max(r / (na + w.abs() * nb).max(f64::MIN_POSITIVE));
    }
    let gram = u.adjoint() * &bu;
    let orth = max_abs((gram - CMat::identity(n, n)).as_ref());
    if residual > 1e-8 || orth > 1e-8 {
        return Err(Error::EigenSolver(format!(
            "eigenpair residual {residual:.3e}, B-orthonormality residual {orth:.3e}"
        )));
    }
    Ok(FiberSpectrum {
        k: problem.k,
        eigenvalues,
        eigenvectors: Some(u),
        zero_tol,
        residual: Some(residual),
        orthonormality: Some(orth),
    })
}

/// Eigenvalues at every `k`, in parallel over `k`.
pub fn solve_many(ks: &[Vec3], basis: &FiberBasis, gram: &Arc<Gram>, zero_tol: f64) -> Result<Vec<FiberSpectrum>> {
    ks.par_iter()
        .map(|&k| solve_fiber_values(&FiberProblem::new(k, basis, gram.clone()), zero_tol))
        .collect()
}

/// `{±|γ* + k|}` twice each, plus the kernel: two zeros per mode with
/// `γ* + k ≠ 0` and six for `γ* + k = 0`. Ascending.
pub fn analytic_free_spectrum(k: Vec3, modes: &ModeSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * modes.len());
    for m in modes.iter() {
        let r = norm(add(m.vector, k));
        if r == 0.0 {
            out.extend([0.0; 6]);
        } else {
            out.extend([r, r, -r, -r, 0.0, 0.0]);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Largest `|a_i − b_i| / max(|b_i|, floor)` after sorting both, or `None`
/// when the multisets differ in size.
pub fn multiset_rel_deviation(a: &[f64], b: &[f64], floor: f64) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Some(a.iter().zip(&b).map(|(x, y)| (x - y).abs() / y.abs().max(floor)).fold(0.0, f64::max))
}

/// Labelled bands along a path.
///
/// `positive[s][n-1] = ω_n` and `negative[s][n-1] = ω_{−n}` at sample `s`,
/// so that `… ≤ ω₋₂ ≤ ω₋₁ ≤ 0 ≤ ω₁ ≤ ω₂ ≤ …`.
#[derive(Debug, Clone, Serialize)]
pub struct BandStructure {
    pub params: Vec<f64>,
    pub ks: Vec<Vec3>,
    pub n_max: usize,
    pub positive: Vec<Vec<f64>>,
    pub negative: Vec<Vec<f64>>,
    /// Numerically classified zero modes per sample.
    pub zero_counts: Vec<usize>,
    /// Kernel dimension of the exact discretization: `2|M|`, plus 4 on Γ*.
    pub expected_zero_counts: Vec<usize>,
    pub on_lattice: Vec<bool>,
}

/// Band indices of the ground-state bands.
pub const GROUND_STATE_BANDS: [i32; 4] = [-2, -1, 1, 2];

impl BandStructure {
    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn omega(&self, sample: usize, n: i32) -> Option<f64> {
        let idx = n.unsigned_abs() as usize;
        if n == 0 || idx > self.n_max {
            return None;
        }
        let side = if n > 0 { &self.positive } else { &self.negative };
        side[sample].get(idx - 1).copied()
    }

    pub fn is_ground_state(n: i32) -> bool {
        GROUND_STATE_BANDS.contains(&n)
    }

    /// Band labels present at every sample, ascending.
    pub fn labels(&self) -> Vec<i32> {
        let pos = self.positive.iter().map(Vec::len).min().unwrap_or(0);
        let neg = self.negative.iter().map(Vec::len).min().unwrap_or(0);
        (1..=neg as i32).rev().map(|n| -n).chain(1..=pos as i32).collect()
    }

    /// Samples where the numerical zero count differs from the exact kernel.
    pub fn zero_count_mismatches(&self) -> Vec<usize> {
        (0..self.len()).filter(|&s| self.zero_counts[s] != self.expected_zero_counts[s]).collect()
    }

    /// The same data traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        let total = self.params.last().copied().unwrap_or(0.0);
        let rev = |v: &Vec<Vec<f64>>| v.iter().rev().cloned().collect::<Vec<_>>();
        Self {
            params: self.params.iter().rev().map(|p| total - p).collect(),
            ks: self.ks.iter().rev().copied().collect(),
            n_max: self.n_max,
            positive: rev(&self.positive),
            negative: rev(&self.negative),
            zero_counts: self.zero_counts.iter().rev().copied().collect(),
            expected_zero_counts: self.expected_zero_counts.iter().rev().copied().collect(),
            on_lattice: self.on_lattice.iter().rev().copied().collect(),
        }
    }
}

/// Orders the non-zero eigenvalues at each sample and labels them by sign
/// and rank. At `k ∈ Γ*` the four extra kernel vectors are continued as
/// `ω_{±1} = ω_{±2} = 0`.
pub fn label_bands(spectra: &[FiberSpectrum], path: &KPath, dual: &DualLattice, n_modes: usize, n_max: usize) -> Result<BandStructure> {
    if spectra.len() != path.samples.len() {
        return Err(Error::Inconsistent(format!(
            "{} spectra for {} path samples",
            spectra.len(),
            path.samples.len()
        )));
    }
    let dim = 6 * n_modes;
    let mut out = BandStructure {
        params: path.params.clone(),
        ks: path.samples.clone(),
        n_max,
        positive: Vec::new(),
        negative: Vec::new(),
        zero_counts: Vec::new(),
        expected_zero_counts: Vec::new(),
        on_lattice: Vec::new(),
    };
    for sp in spectra {
        if sp.eigenvalues.len() != dim {
            return Err(Error::Inconsistent(format!(
                "spectrum of size {} for a basis of dimension {dim}",
                sp.eigenvalues.len()
            )));
        }
        let (_, on) = dual.snap(sp.k, SNAP_TOL);
        let generic_kernel = 2 * n_modes;
        let drop = if on { generic_kernel + 4 } else { generic_kernel };
        let mut by_abs = sp.eigenvalues.clone();
        by_abs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        let rest = &by_abs[drop.min(dim)..];
        let mut pos: Vec<f64> = rest.iter().copied().filter(|w| *w > 0.0).collect();
        let mut neg: Vec<f64> = rest.iter().copied().filter(|w| *w <= 0.0).collect();
        pos.sort_by(f64::total_cmp);
        neg.sort_by(|a, b| b.total_cmp(a));
        if on {
            pos.splice(0..0, [0.0, 0.0]);
            neg.splice(0..0, [0.0, 0.0]);
        }
        pos.truncate(n_max);
        neg.truncate(n_max);
        out.positive.push(pos);
        out.negative.push(neg);
        out.zero_counts.push(sp.zero_count());
        out.expected_zero_counts.push(drop);
        out.on_lattice.push(on);
    }
    Ok(out)
}

/// Sorted spectrum at `k` against the negated spectrum at `−k`; returns the
/// largest absolute mismatch.
pub fn ph_symmetry_check(w: &MaterialWeights, k: Vec3, basis: &FiberBasis) -> Result<f64> {
    if !w.real_weights {
        return Err(Error::ComplexWeights);
    }
    let gram = Arc::new(assemble_gram(w, basis)?);
    let plus = solve_fiber_values(&FiberProblem::new(k, basis, gram.clone()), DEFAULT_ZERO_TOL)?;
    let minus = solve_fiber_values(&FiberProblem::new([-k[0], -k[1], -k[2]], basis, gram), DEFAULT_ZERO_TOL)?;
    let mut reflected: Vec<f64> = minus.eigenvalues.iter().map(|x| -x).collect();
    reflected.sort_by(f64::total_cmp);
    Ok(plus.eigenvalues.iter().zip(&reflected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Largest imaginary part of `u† A u` over `B`-normalised eigenvectors,
/// relative to the spectral radius; zero for an exactly selfadjoint pencil.
pub fn rayleigh_imaginary_residue(problem: &FiberProblem, sp: &FiberSpectrum) -> Option<f64> {
    let u = sp.eigenvectors.as_ref()?;
    let au = &problem.a * u;
    let radius = sp.scale().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for j in 0..u.ncols() {
        let mut acc = c64::new(0.0, 0.0);
        for i in 0..u.nrows() {
            acc += u[(i, j)].conj() * au[(i, j)];
        }
        worst = worst.max(acc.im.abs() / radius);
    }
    Some(worst)
}

/// CSV with header `s,k1,k2,k3,n,omega`; one row per sample and label.
pub fn band_csv(bands: &BandStructure) -> String {
    let mut s = String::from("s,k1,k2,k3,n,omega\n");
    let labels = bands.labels();
    for i in 0..bands.len() {
        let k = bands.ks[i];
        for &n in &labels {
            let w = bands.omega(i, n).expect("label present at all samples");
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}", bands.params[i], k[0], k[1], k[2], n, w);
        }
    }
    s
}

pub fn write_band_csv(path: &Path, bands: &BandStructure) -> Result<()> {
    crate::io::write_atomic(path, band_csv(bands).as_bytes())
}

/// Vacuum problem helper used by oracles and examples.
pub fn vacuum_problem(k: Vec3, basis: &FiberBasis) -> Result<FiberProblem> {
    let gram = Arc::new(assemble_gram(&MaterialWeights::vacuum(), basis)?);
    Ok(FiberProblem { k, a: assemble_rot(k, basis), gram })
}

/// Dense `B⁻¹ A(k)` (for diagnostics on small bases only).
pub fn weighted_operator(problem: &FiberProblem) -> CMat {
    let l = &problem.gram.cholesky;
    let mut x = problem.a.clone();
    l.solve_lower_triangular_in_place(&mut x);
    l.adjoint().solve_upper_triangular_in_place(&mut x);
    x
}
