//! Small dense helpers shared by the assembly, projection and symbol code.
//!
//! Large matrices are `faer::Mat<c64>`; 3-vectors are plain `[f64; 3]` and the
//! 3×3 material blocks use the tiny [`Mat3`] type below.

use faer::{Mat, MatRef};

pub use faer::c64;

pub type Vec3 = [f64; 3];
pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// The antisymmetric matrix `v^×` with `v^× w = v × w`.
pub fn cross_matrix(v: Vec3) -> [[f64; 3]; 3] {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

/// Complex 3×3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[c64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[ZERO; 3]; 3]);

    pub fn identity() -> Self {
        Self::scalar(1.0)
    }

    pub fn scalar(s: f64) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            m.0[i][i] = c64::new(s, 0.0);
        }
        m
    }

    pub fn diag(d: [f64; 3]) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            m.0[i][i] = c64::new(d[i], 0.0);
        }
        m
    }

    pub fn from_real(r: [[f64; 3]; 3]) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = c64::new(r[i][j], 0.0);
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x = x.conj();
            }
        }
        m
    }

    pub fn scale(&self, s: c64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    pub fn add(&self, o: &Mat3) -> Self {
        let mut m = *self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] += o.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, o: &Mat3) -> Self {
        self.add(&o.scale(c64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, o: &Mat3) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = ZERO;
                for l in 0..3 {
                    acc += self.0[i][l] * o.0[l][j];
                }
                m.0[i][j] = acc;
            }
        }
        m
    }

    pub fn det(&self) -> c64 {
        let a = &self.0;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    /// Inverse by cofactors; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.re.is_finite() {
            return None;
        }
        let a = &self.0;
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                m.0[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
            }
        }
        Some(m)
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0, |acc, x| acc.max(x.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 3] {
        let h = Mat::<c64>::from_fn(3, 3, |i, j| (self.0[i][j] + self.0[j][i].conj()) * 0.5);
        let ev = h
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .expect("3x3 Hermitian eigenvalues");
        [ev[0], ev[1], ev[2]]
    }
}

/// Largest entrywise modulus of a dense matrix.
pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut acc = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc = acc.max(m[(i, j)].norm());
        }
    }
    acc
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc = acc.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    acc
}

/// Spectral norm (largest singular value), computed densely.
pub fn spectral_norm(m: MatRef<'_, c64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if max_abs(m) == 0.0 {
        return 0.0;
    }
    let sv = m.singular_values().expect("svd did not converge");
    sv.first().copied().unwrap_or(0.0)
}

/// Singular values (descending) and the number above `rel_tol * max`.
pub fn numerical_rank(m: MatRef<'_, c64>, rel_tol: f64) -> (usize, Vec<f64>) {
    if m.nrows() == 0 || m.ncols() == 0 || max_abs(m) == 0.0 {
        return (0, vec![0.0; m.nrows().min(m.ncols())]);
    }
    let sv = m.singular_values().expect("svd did not converge");
    let top = sv[0];
    let rank = sv.iter().filter(|&&s| s > rel_tol * top).count();
    (rank, sv)
}

/// `‖M − M†‖_max / ‖M‖_max` (0 for the zero matrix).
pub fn hermiticity_residual(m: MatRef<'_, c64>) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc = acc.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    acc / scale
}

/// `(M + M†) / 2`.
pub fn hermitian_part(m: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_matrix_acts_as_cross_product() {
        let v = [0.3, -1.2, 2.0];
        let w = [1.5, 0.25, -0.7];
        let m = cross_matrix(v);
        let mw: Vec3 = std::array::from_fn(|i| (0..3).map(|j| m[i][j] * w[j]).sum());
        let c = cross(v, w);
        for i in 0..3 {
            assert!((mw[i] - c[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn mat3_inverse_roundtrip() {
        let mut a = Mat3::from_real([[2.0, 0.5, 0.0], [0.5, 3.0, 0.1], [0.0, 0.1, 1.5]]);
        a.0[0][2] = c64::new(0.0, 0.3);
        a.0[2][0] = c64::new(0.0, -0.3);
        let inv = a.inverse().unwrap();
        let id = a.mul(&inv);
        assert!(id.sub(&Mat3::identity()).max_abs() < 1e-14);
        assert!(Mat3::ZERO.inverse().is_none());
    }

    #[test]
    fn rank_of_zero_matrix_is_zero() {
        let z = CMat::zeros(4, 2);
        assert_eq!(numerical_rank(z.as_ref(), 1e-8).0, 0);
        assert_eq!(spectral_norm(z.as_ref()), 0.0);
    }
}
