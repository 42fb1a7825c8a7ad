//! Bravais lattice, dual lattice, truncated plane-wave mode sets and k-paths.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add, cross, dot, norm, scale, sub, Vec3};

/// Periodicity lattice spanned by three linearly independent vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub basis: [Vec3; 3],
}

/// Dual lattice with `e_j · e*_n = 2π δ_jn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualLattice {
    pub basis: [Vec3; 3],
}

impl Lattice {
    pub fn new(basis: [Vec3; 3]) -> Result<Self> {
        let lattice = Self { basis };
        check_basis(&lattice.basis)?;
        Ok(lattice)
    }

    pub fn cubic(a: f64) -> Self {
        Self { basis: [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]] }
    }

    /// Face-centred cubic primitive vectors for conventional cube edge `a`.
    pub fn fcc(a: f64) -> Self {
        let h = 0.5 * a;
        Self { basis: [[0.0, h, h], [h, 0.0, h], [h, h, 0.0]] }
    }

    /// Cell volume `|det(e_1|e_2|e_3)|`.
    pub fn volume(&self) -> f64 {
        dot(self.basis[0], cross(self.basis[1], self.basis[2])).abs()
    }

    /// Cartesian position of fractional coordinates `s`.
    pub fn to_cartesian(&self, s: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for j in 0..3 {
            out = add(out, scale(s[j], self.basis[j]));
        }
        out
    }
}

fn check_basis(basis: &[Vec3; 3]) -> Result<()> {
    let det = dot(basis[0], cross(basis[1], basis[2]));
    let lens: f64 = basis.iter().map(|v| norm(*v)).product();
    let condition = condition_estimate(basis);
    if !det.is_finite() || lens == 0.0 || det.abs() <= 1e-12 * lens || condition > 1e12 {
        return Err(Error::SingularLattice { condition });
    }
    Ok(())
}

/// Frobenius-norm condition number `‖E‖ ‖E⁻¹‖` of the basis matrix.
fn condition_estimate(basis: &[Vec3; 3]) -> f64 {
    let det = dot(basis[0], cross(basis[1], basis[2]));
    if det == 0.0 || !det.is_finite() {
        return f64::INFINITY;
    }
    let fro: f64 = basis.iter().map(|v| dot(*v, *v)).sum::<f64>().sqrt();
    // rows of E⁻¹ are the cofactor vectors divided by det
    let inv_fro: f64 = [cross(basis[1], basis[2]), cross(basis[2], basis[0]), cross(basis[0], basis[1])]
        .iter()
        .map(|v| dot(*v, *v))
        .sum::<f64>()
        .sqrt()
        / det.abs();
    fro * inv_fro
}

/// Dual basis `e*_n = 2π (e_{n+1} × e_{n+2}) / det`.
pub fn dual_basis(lattice: &Lattice) -> Result<DualLattice> {
    check_basis(&lattice.basis)?;
    let [a, b, c] = lattice.basis;
    let det = dot(a, cross(b, c));
    let f = 2.0 * PI / det;
    Ok(DualLattice { basis: [scale(f, cross(b, c)), scale(f, cross(c, a)), scale(f, cross(a, b))] })
}

impl DualLattice {
    /// The direct lattice this dual belongs to (the relation is symmetric).
    pub fn direct(&self) -> Result<Lattice> {
        let as_lattice = Lattice { basis: self.basis };
        let d = dual_basis(&as_lattice)?;
        Ok(Lattice { basis: d.basis })
    }

    pub fn vector(&self, index: [i32; 3]) -> Vec3 {
        let mut out = [0.0; 3];
        for j in 0..3 {
            out = add(out, scale(index[j] as f64, self.basis[j]));
        }
        out
    }

    /// Coordinates of `k` in the dual basis (real-valued).
    pub fn fractional(&self, k: Vec3) -> Vec3 {
        // k = Σ n_j e*_j  ⇒  n_j = k · e_j / 2π
        let direct = self.direct().expect("dual basis is non-singular");
        std::array::from_fn(|j| dot(k, direct.basis[j]) / (2.0 * PI))
    }

    /// Distance from `k` to the nearest dual-lattice point and that point's index.
    pub fn nearest_point(&self, k: Vec3) -> (f64, [i32; 3]) {
        let frac = self.fractional(k);
        let base: [i32; 3] = std::array::from_fn(|j| frac[j].round() as i32);
        let mut best = (f64::INFINITY, base);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let idx = [base[0] + dx, base[1] + dy, base[2] + dz];
                    let d = norm(sub(k, self.vector(idx)));
                    if d < best.0 {
                        best = (d, idx);
                    }
                }
            }
        }
        best
    }

    /// Splits `k = k_cell + γ*` with fractional coordinates of `k_cell` in `[-½, ½)`.
    pub fn reduce_to_cell(&self, k: Vec3) -> (Vec3, [i32; 3]) {
        let frac = self.fractional(k);
        let shift: [i32; 3] = std::array::from_fn(|j| (frac[j] + 0.5).floor() as i32);
        (sub(k, self.vector(shift)), shift)
    }

    /// Returns the nearest dual-lattice vector when `k` lies within
    /// `rel_tol · |e*_1|` of it, otherwise `k` unchanged.
    pub fn snap(&self, k: Vec3, rel_tol: f64) -> (Vec3, bool) {
        let (d, idx) = self.nearest_point(k);
        if d < rel_tol * norm(self.basis[0]) {
            (self.vector(idx), true)
        } else {
            (k, false)
        }
    }
}

/// One plane wave `e^{iγ*·y}` of the truncated basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub index: [i32; 3],
    pub vector: Vec3,
}

/// Ordered, negation-closed set of dual-lattice vectors.
#[derive(Debug, Clone)]
pub struct ModeSet {
    modes: Vec<Mode>,
    lookup: HashMap<[i32; 3], usize>,
}

impl ModeSet {
    /// Builds a mode set from integer indices, applying the canonical ordering.
    pub fn from_indices(dual: &DualLattice, indices: impl IntoIterator<Item = [i32; 3]>) -> Self {
        let mut modes: Vec<Mode> = indices
            .into_iter()
            .map(|index| Mode { index, vector: dual.vector(index) })
            .collect();
        let scale = dual.basis.iter().map(|v| dot(*v, *v)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        // quantised |γ*|² keeps ties (equal-norm shells) exact before the
        // lexicographic tie-break
        let key = |m: &Mode| (dot(m.vector, m.vector) / scale * 1e9).round() as i64;
        modes.sort_by(|a, b| match key(a).cmp(&key(b)) {
            Ordering::Equal => a.index.cmp(&b.index),
            o => o,
        });
        modes.dedup_by(|a, b| a.index == b.index);
        let lookup = modes.iter().enumerate().map(|(i, m)| (m.index, i)).collect();
        Self { modes, lookup }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn get(&self, i: usize) -> &Mode {
        &self.modes[i]
    }

    pub fn position(&self, index: [i32; 3]) -> Option<usize> {
        self.lookup.get(&index).copied()
    }

    pub fn contains(&self, index: [i32; 3]) -> bool {
        self.lookup.contains_key(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter()
    }

    /// Position of the `γ* = 0` mode.
    pub fn zero_position(&self) -> Option<usize> {
        self.position([0, 0, 0])
    }

    /// Indices of all differences `γ* − γ*'`, i.e. every coefficient a
    /// convolution matrix on this set can touch.
    pub fn difference_indices(&self) -> Vec<[i32; 3]> {
        let mut seen = std::collections::HashSet::new();
        for a in &self.modes {
            for b in &self.modes {
                seen.insert([
                    a.index[0] - b.index[0],
                    a.index[1] - b.index[1],
                    a.index[2] - b.index[2],
                ]);
            }
        }
        let mut v: Vec<_> = seen.into_iter().collect();
        v.sort();
        v
    }

    pub fn differences(&self, dual: &DualLattice) -> ModeSet {
        ModeSet::from_indices(dual, self.difference_indices())
    }
}

/// All `γ*` with `|γ*| ≤ radius`, ordered by `(|γ*|, integer coordinates)`.
pub fn cutoff_modes(dual: &DualLattice, radius: f64) -> ModeSet {
    let radius = radius.max(0.0);
    let direct = dual.direct().expect("dual basis is non-singular");
    // n_j = γ*·e_j / 2π  ⇒  |n_j| ≤ radius |e_j| / 2π
    let bound: [i32; 3] =
        std::array::from_fn(|j| (radius * norm(direct.basis[j]) / (2.0 * PI)).floor() as i32 + 1);
    let limit = radius * (1.0 + 1e-12) + 1e-300;
    let mut indices = Vec::new();
    for a in -bound[0]..=bound[0] {
        for b in -bound[1]..=bound[1] {
            for c in -bound[2]..=bound[2] {
                let idx = [a, b, c];
                if norm(dual.vector(idx)) <= limit {
                    indices.push(idx);
                }
            }
        }
    }
    ModeSet::from_indices(dual, indices)
}

/// Piecewise-linear path through k-space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPath {
    pub vertices: Vec<Vec3>,
    pub samples_per_segment: usize,
    pub samples: Vec<Vec3>,
    /// Cumulative arc length at each sample.
    pub params: Vec<f64>,
}

/// Samples each segment at `n` equal steps; shared vertices appear once.
pub fn kpath(vertices: &[Vec3], n: usize) -> Result<KPath> {
    if vertices.is_empty() {
        return Err(Error::InvalidKPath("empty vertex list"));
    }
    if vertices.len() < 2 {
        return Err(Error::InvalidKPath("at least two vertices are required"));
    }
    if n == 0 {
        return Err(Error::InvalidKPath("samples per segment must be positive"));
    }
    let mut samples = Vec::with_capacity(n * (vertices.len() - 1) + 1);
    let mut params = Vec::with_capacity(samples.capacity());
    let mut s0 = 0.0;
    for w in vertices.windows(2) {
        let d = sub(w[1], w[0]);
        let len = norm(d);
        for j in 0..n {
            let f = j as f64 / n as f64;
            samples.push(add(w[0], scale(f, d)));
            params.push(s0 + f * len);
        }
        s0 += len;
    }
    samples.push(*vertices.last().unwrap());
    params.push(s0);
    Ok(KPath { vertices: vertices.to_vec(), samples_per_segment: n, samples, params })
}

impl KPath {
    /// A path visiting the given points without interpolation.
    pub fn from_points(points: Vec<Vec3>) -> Self {
        let mut params = Vec::with_capacity(points.len());
        let mut s = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                s += norm(sub(*p, points[i - 1]));
            }
            params.push(s);
        }
        Self { vertices: points.clone(), samples_per_segment: 1, samples: points, params }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn cubic_dual_is_two_pi_identity() {
        let d = dual_basis(&Lattice::cubic(1.0)).unwrap();
        assert!(close(d.basis[0], [2.0 * PI, 0.0, 0.0], 1e-14));
        assert!(close(d.basis[1], [0.0, 2.0 * PI, 0.0], 1e-14));
        assert!(close(d.basis[2], [0.0, 0.0, 2.0 * PI], 1e-14));
    }

    #[test]
    fn scaled_cubic_dual() {
        let a = 2.5;
        let d = dual_basis(&Lattice::cubic(a)).unwrap();
        for j in 0..3 {
            assert!((d.basis[j][j] - 2.0 * PI / a).abs() < 1e-14);
        }
    }

    #[test]
    fn fcc_dual_matches_linear_solve() {
        let lattice = Lattice::fcc(1.0);
        let d = dual_basis(&lattice).unwrap();
        // independent route: solve E X = 2π I with an LU factorisation
        let e = faer::Mat::<f64>::from_fn(3, 3, |i, j| lattice.basis[i][j]);
        let rhs = faer::Mat::<f64>::from_fn(3, 3, |i, j| if i == j { 2.0 * PI } else { 0.0 });
        use faer::linalg::solvers::Solve;
        let x = e.partial_piv_lu().solve(&rhs);
        for n in 0..3 {
            let col: Vec3 = std::array::from_fn(|i| x[(i, n)]);
            assert!(close(d.basis[n], col, 1e-12));
        }
        let expected = [[-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]];
        for n in 0..3 {
            assert!(close(d.basis[n], scale(2.0 * PI, expected[n]), 1e-12));
        }
    }

    #[test]
    fn singular_basis_is_rejected() {
        let err = Lattice::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::SingularLattice { .. }));
        let err = dual_basis(&Lattice { basis: [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]] });
        assert!(err.is_err());
    }

    #[test]
    fn mode_counts_on_cubic_dual() {
        let d = dual_basis(&Lattice::cubic(1.0)).unwrap();
        let m0 = cutoff_modes(&d, 0.0);
        assert_eq!(m0.len(), 1);
        assert_eq!(m0.get(0).index, [0, 0, 0]);
        assert_eq!(cutoff_modes(&d, 2.0 * PI).len(), 7);

        // brute force: integer points with |n| ≤ 3
        let mut count = 0;
        for a in -4i32..=4 {
            for b in -4i32..=4 {
                for c in -4i32..=4 {
                    if a * a + b * b + c * c <= 9 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 123);
        assert_eq!(cutoff_modes(&d, 6.0 * PI).len(), count);
    }

    #[test]
    fn mode_ordering_is_by_norm_then_index() {
        let d = dual_basis(&Lattice::cubic(1.0)).unwrap();
        let m = cutoff_modes(&d, 2.0 * PI);
        assert_eq!(m.get(0).index, [0, 0, 0]);
        assert_eq!(m.get(1).index, [-1, 0, 0]);
        assert_eq!(m.get(6).index, [1, 0, 0]);
        for w in m.modes().windows(2) {
            assert!(norm(w[0].vector) <= norm(w[1].vector) + 1e-12);
        }
    }

    #[test]
    fn kpath_examples() {
        let p = kpath(&[[0.0; 3], [PI, 0.0, 0.0]], 2).unwrap();
        assert_eq!(p.samples.len(), 3);
        assert!(close(p.samples[1], [PI / 2.0, 0.0, 0.0], 1e-15));
        assert!(close(p.samples[2], [PI, 0.0, 0.0], 0.0));

        let p = kpath(&[[0.0; 3], [1.0, 2.0, 3.0]], 1).unwrap();
        assert_eq!(p.samples, vec![[0.0; 3], [1.0, 2.0, 3.0]]);

        let gxm = [[0.0; 3], [PI, 0.0, 0.0], [PI, PI, 0.0]];
        let p = kpath(&gxm, 10).unwrap();
        assert_eq!(p.samples.len(), 21);
        for i in 0..p.len() {
            for j in 0..i {
                assert!(!close(p.samples[i], p.samples[j], 1e-12));
            }
        }

        assert!(matches!(kpath(&[], 3), Err(Error::InvalidKPath(_))));
        assert!(kpath(&[[0.0; 3]], 3).is_err());
        assert!(kpath(&gxm, 0).is_err());
    }

    #[test]
    fn reduce_and_snap() {
        let d = dual_basis(&Lattice::cubic(1.0)).unwrap();
        let k = [2.0 * PI + 0.3, -0.1, 4.0 * PI];
        let (kc, shift) = d.reduce_to_cell(k);
        assert_eq!(shift, [1, 0, 2]);
        assert!(close(kc, [0.3, -0.1, 0.0], 1e-12));
        let (snapped, hit) = d.snap([2.0 * PI + 1e-12, 0.0, 0.0], 1e-9);
        assert!(hit);
        assert_eq!(snapped, [2.0 * PI, 0.0, 0.0]);
        assert!(!d.snap([0.1, 0.0, 0.0], 1e-9).1);
    }
}
