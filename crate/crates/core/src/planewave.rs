//! Galerkin matrices on the truncated plane-wave basis.
//!
//! Mode `m` of the [`ModeSet`] occupies rows `6m .. 6m+6`, ordered
//! `(E₁, E₂, E₃, H₁, H₂, H₃)`.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::lattice::ModeSet;
use crate::linalg::{add, c64, cross_matrix, CMat, Mat3, Vec3, ZERO};
use crate::material::{CoefficientTable, MaterialWeights};

#[derive(Debug, Clone)]
pub struct FiberBasis {
    pub modes: ModeSet,
}

impl FiberBasis {
    pub fn new(modes: ModeSet) -> Self {
        Self { modes }
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        6 * self.modes.len()
    }

    /// Row of the first E component of mode `m`.
    pub fn e_offset(m: usize) -> usize {
        6 * m
    }

    pub fn h_offset(m: usize) -> usize {
        6 * m + 3
    }
}

/// Generalized Hermitian pencil `A(k) u = ω B u` at one quasi-momentum.
#[derive(Debug, Clone)]
pub struct FiberProblem {
    pub k: Vec3,
    pub a: CMat,
    pub gram: Arc<Gram>,
}

impl FiberProblem {
    pub fn new(k: Vec3, basis: &FiberBasis, gram: Arc<Gram>) -> Self {
        Self { k, a: assemble_rot(k, basis), gram }
    }

    pub fn b(&self) -> &CMat {
        &self.gram.matrix
    }
}

fn put_block(m: &mut CMat, row: usize, col: usize, block: &[[f64; 3]; 3], s: f64) {
    for i in 0..3 {
        for j in 0..3 {
            m[(row + i, col + j)] = c64::new(s * block[i][j], 0.0);
        }
    }
}

/// `Rot(k)`: per mode the block `[[0, −ξ^×], [ξ^×, 0]]` with `ξ = γ* + k`.
pub fn assemble_rot(k: Vec3, basis: &FiberBasis) -> CMat {
    let n = basis.dim();
    let mut a = Mat::zeros(n, n);
    for (m, mode) in basis.modes.iter().enumerate() {
        let x = cross_matrix(add(mode.vector, k));
        let (e, h) = (FiberBasis::e_offset(m), FiberBasis::h_offset(m));
        put_block(&mut a, e, h, &x, -1.0);
        put_block(&mut a, h, e, &x, 1.0);
    }
    a
}

/// `Σ_j v_j ∂A/∂k_j = A(k + v) − A(k)`, the same 6×6 block on every mode.
pub fn k_dot_rot(v: Vec3, basis: &FiberBasis) -> CMat {
    let n = basis.dim();
    let mut a = Mat::zeros(n, n);
    let x = cross_matrix(v);
    for m in 0..basis.n_modes() {
        let (e, h) = (FiberBasis::e_offset(m), FiberBasis::h_offset(m));
        put_block(&mut a, e, h, &x, -1.0);
        put_block(&mut a, h, e, &x, 1.0);
    }
    a
}

/// Convolution matrix `diag(upper(γ* − γ*'), lower(γ* − γ*'))` together with
/// the coefficient indices the tables did not provide.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub matrix: CMat,
    pub missing: Vec<[i32; 3]>,
}

pub fn assemble_multiplier(upper: &CoefficientTable, lower: &CoefficientTable, basis: &FiberBasis) -> Multiplier {
    let n = basis.dim();
    let mut matrix = Mat::zeros(n, n);
    let mut missing = std::collections::BTreeSet::new();
    for (a, ma) in basis.modes.iter().enumerate() {
        for (b, mb) in basis.modes.iter().enumerate() {
            let d = [ma.index[0] - mb.index[0], ma.index[1] - mb.index[1], ma.index[2] - mb.index[2]];
            for (table, off) in [(upper, 0), (lower, 3)] {
                match table.get(&d) {
                    Some(c) => {
                        for i in 0..3 {
                            for j in 0..3 {
                                matrix[(6 * a + off + i, 6 * b + off + j)] = c.0[i][j];
                            }
                        }
                    }
                    None => {
                        missing.insert(d);
                    }
                }
            }
        }
    }
    Multiplier { matrix, missing: missing.into_iter().collect() }
}

/// Same-table convenience for scalar multipliers acting on both slots.
pub fn assemble_scalar_multiplier(table: &CoefficientTable, basis: &FiberBasis) -> Multiplier {
    assemble_multiplier(table, table, basis)
}

/// Weighted Gram matrix and its Cholesky factor `B = L L†`.
#[derive(Debug, Clone)]
pub struct Gram {
    pub matrix: CMat,
    pub cholesky: CMat,
    pub missing: Vec<[i32; 3]>,
}

pub fn assemble_gram(w: &MaterialWeights, basis: &FiberBasis) -> Result<Gram> {
    let Multiplier { matrix, missing } = assemble_multiplier(&w.eps, &w.mu, basis);
    gram_from_matrix(matrix, missing)
}

/// Wraps an explicit Gram matrix, checking it is Hermitian positive definite.
pub fn gram_from_matrix(matrix: CMat, missing: Vec<[i32; 3]>) -> Result<Gram> {
    let resid = crate::linalg::hermiticity_residual(matrix.as_ref());
    if resid > 1e-12 {
        return Err(Error::InvariantViolated {
            invariant: crate::error::Invariant::Hermiticity,
            detail: format!("Gram matrix hermiticity residual {resid:.3e}"),
        });
    }
    let llt = matrix.llt(Side::Lower).map_err(|_| Error::IndefiniteGram)?;
    let cholesky = llt.L().to_owned();
    Ok(Gram { matrix, cholesky, missing })
}

/// Conjugation by multiplication with `e^{iγ*·y}`, which moves the block of
/// mode `γ*'` to `γ*' + γ*`.
#[derive(Debug, Clone)]
pub struct Translated {
    pub value: CMat,
    /// Modes whose image left the mode set.
    pub dropped: usize,
    /// `interior[m]` is true when mode `m` receives a block from inside the set.
    pub interior: Vec<bool>,
}

fn shifted_source(basis: &FiberBasis, shift: [i32; 3]) -> Vec<Option<usize>> {
    basis
        .modes
        .iter()
        .map(|m| basis.modes.position([m.index[0] - shift[0], m.index[1] - shift[1], m.index[2] - shift[2]]))
        .collect()
}

fn count_dropped(basis: &FiberBasis, shift: [i32; 3]) -> usize {
    basis
        .modes
        .iter()
        .filter(|m| !basis.modes.contains([m.index[0] + shift[0], m.index[1] + shift[1], m.index[2] + shift[2]]))
        .count()
}

/// `U X U†` for a square matrix, or `U X` when `x` has fewer columns than rows
/// (column vectors).
pub fn translate_conjugate(x: &CMat, shift: [i32; 3], basis: &FiberBasis) -> Translated {
    let n = basis.dim();
    assert_eq!(x.nrows(), n, "row dimension must match the basis");
    let src = shifted_source(basis, shift);
    let conj_cols = x.ncols() == n;
    let value = Mat::from_fn(n, x.ncols(), |r, c| {
        let Some(sr) = src[r / 6] else { return ZERO };
        if conj_cols {
            match src[c / 6] {
                Some(sc) => x[(6 * sr + r % 6, 6 * sc + c % 6)],
                None => ZERO,
            }
        } else {
            x[(6 * sr + r % 6, c)]
        }
    });
    Translated {
        value,
        dropped: count_dropped(basis, shift),
        interior: src.iter().map(Option::is_some).collect(),
    }
}

const DUMP_MAGIC: &[u8; 8] = b"PCEMAT01";

/// Binary matrix dump: 8-byte magic `PCEMAT01`, `u64` rows, `u64` columns,
/// three `f64` components of `k`, then row-major `(re, im)` `f64` pairs.
/// All little-endian.
pub fn write_matrix_dump(path: &Path, m: &CMat, k: Vec3) -> Result<()> {
    let mut buf = Vec::with_capacity(40 + 16 * m.nrows() * m.ncols());
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for x in k {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            buf.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    crate::io::write_atomic(path, &buf)
}

pub fn read_matrix_dump(path: &Path) -> Result<(CMat, Vec3)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || Error::Inconsistent(format!("{} is not a matrix dump", path.display()));
    if bytes.len() < 48 || &bytes[..8] != DUMP_MAGIC {
        return Err(bad());
    }
    let u = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (rows, cols) = (u(8), u(16));
    let k = [f(24), f(32), f(40)];
    if bytes.len() != 48 + 16 * rows * cols {
        return Err(bad());
    }
    let m = Mat::from_fn(rows, cols, |i, j| {
        let o = 48 + 16 * (i * cols + j);
        c64::new(f(o), f(o + 8))
    });
    Ok((m, k))
}

/// The identity-weight table `{0 ↦ I}`.
pub fn identity_table() -> CoefficientTable {
    let mut t = CoefficientTable::new();
    t.insert([0, 0, 0], Mat3::identity());
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cutoff_modes, dual_basis, Lattice};
    use crate::linalg::{max_abs, max_abs_diff};
    use std::f64::consts::PI;

    fn cubic_basis(radius: f64) -> (FiberBasis, crate::lattice::DualLattice) {
        let dual = dual_basis(&Lattice::cubic(1.0)).unwrap();
        (FiberBasis::new(cutoff_modes(&dual, radius)), dual)
    }

    #[test]
    fn single_mode_rot_blocks() {
        let (basis, _) = cubic_basis(0.0);
        assert_eq!(basis.dim(), 6);
        assert_eq!(max_abs(assemble_rot([0.0; 3], &basis).as_ref()), 0.0);
        let a = assemble_rot([0.5, 0.0, 0.0], &basis);
        let ev = a.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let want = [-0.5, -0.5, 0.0, 0.0, 0.5, 0.5];
        for (x, y) in ev.iter().zip(want) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn rot_is_hermitian_and_affine_in_k() {
        let (basis, _) = cubic_basis(4.0 * PI);
        let k = [0.3, -1.1, 0.7];
        let kp = [-0.4, 0.2, 2.5];
        let a = assemble_rot(k, &basis);
        assert_eq!(crate::linalg::hermiticity_residual(a.as_ref()), 0.0);
        let diff = &a - &assemble_rot(kp, &basis);
        let lin = k_dot_rot([k[0] - kp[0], k[1] - kp[1], k[2] - kp[2]], &basis);
        assert!(max_abs_diff(diff.as_ref(), lin.as_ref()) < 1e-14);
    }

    #[test]
    fn vacuum_and_constant_gram() {
        let (basis, _) = cubic_basis(2.0 * PI);
        let g = assemble_gram(&MaterialWeights::vacuum(), &basis).unwrap();
        assert!(max_abs_diff(g.matrix.as_ref(), CMat::identity(basis.dim(), basis.dim()).as_ref()) == 0.0);
        // vacuum tables only hold the zero index; the rest are reported
        assert!(!g.missing.is_empty());
        let w = MaterialWeights::scalar(4.0, 2.0).unwrap();
        let g = assemble_gram(&w, &basis).unwrap();
        for r in 0..basis.dim() {
            for c in 0..basis.dim() {
                let want = if r != c { 0.0 } else if r % 6 < 3 { 4.0 } else { 2.0 };
                assert_eq!(g.matrix[(r, c)], c64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn indefinite_gram_is_reported() {
        let (basis, _) = cubic_basis(0.0);
        let mut w = MaterialWeights::vacuum();
        w.eps.insert([0, 0, 0], Mat3::scalar(-1.0));
        assert!(matches!(assemble_gram(&w, &basis), Err(Error::IndefiniteGram)));
    }

    #[test]
    fn inverse_multiplier_of_vacuum_is_identity() {
        let (basis, _) = cubic_basis(2.0 * PI);
        let w = MaterialWeights::vacuum();
        let m = assemble_multiplier(&w.inv_eps, &w.inv_mu, &basis);
        assert_eq!(max_abs_diff(m.matrix.as_ref(), CMat::identity(basis.dim(), basis.dim()).as_ref()), 0.0);
        let id = assemble_scalar_multiplier(&identity_table(), &basis);
        assert_eq!(max_abs_diff(id.matrix.as_ref(), m.matrix.as_ref()), 0.0);
    }

    #[test]
    fn translation_examples() {
        let (basis, _) = cubic_basis(4.0 * PI);
        let k = [0.4, -0.9, 1.3];
        let a = assemble_rot(k, &basis);
        let same = translate_conjugate(&a, [0, 0, 0], &basis);
        assert_eq!(same.dropped, 0);
        assert_eq!(max_abs_diff(same.value.as_ref(), a.as_ref()), 0.0);

        let g = [1, 0, 0];
        let gv = [2.0 * PI, 0.0, 0.0];
        let t = translate_conjugate(&a, g, &basis);
        assert!(t.dropped > 0);
        let shifted = assemble_rot([k[0] - gv[0], k[1], k[2]], &basis);
        let mut worst = 0.0f64;
        for r in 0..basis.dim() {
            for c in 0..basis.dim() {
                if t.interior[r / 6] && t.interior[c / 6] {
                    worst = worst.max((t.value[(r, c)] - shifted[(r, c)]).norm());
                }
            }
        }
        assert!(worst <= 1e-14, "{worst}");

        let back = translate_conjugate(&t.value, [-1, 0, 0], &basis);
        for r in 0..basis.dim() {
            for c in 0..basis.dim() {
                if back.interior[r / 6] && back.interior[c / 6] && t.interior[r / 6] && t.interior[c / 6] {
                    // modes that survive both shifts return unchanged
                    let m = basis.modes.get(r / 6).index;
                    let n = basis.modes.get(c / 6).index;
                    if basis.modes.contains([m[0] - 1, m[1], m[2]]) && basis.modes.contains([n[0] - 1, n[1], n[2]]) {
                        assert_eq!(back.value[(r, c)], a[(r, c)]);
                    }
                }
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let (basis, _) = cubic_basis(2.0 * PI);
        let a = assemble_rot([0.1, 0.2, 0.3], &basis);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        write_matrix_dump(&p, &a, [0.1, 0.2, 0.3]).unwrap();
        let (b, k) = read_matrix_dump(&p).unwrap();
        assert_eq!(k, [0.1, 0.2, 0.3]);
        assert_eq!(max_abs_diff(a.as_ref(), b.as_ref()), 0.0);
    }
}
