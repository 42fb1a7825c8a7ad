//! Gradient subspaces `Gper(k)`, `Greg(k)` and their `B`-orthogonal projectors.

use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{add, c64, norm, numerical_rank, scale, spectral_norm, CMat, Vec3};
use crate::planewave::{FiberBasis, Gram};

/// Columns spanning `Gper(k)` (all modes) or `Greg(k)` (the `γ* = 0` mode
/// left out). Each contributing mode gives one E-slot and one H-slot column
/// along `ξ = γ* + k`, normalised to unit length.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub k: Vec3,
    pub regularized: bool,
    pub columns: CMat,
    /// Mode position behind each pair of columns.
    pub column_modes: Vec<usize>,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }
}

/// `|ξ|` below this is treated as `ξ = 0` (the mode `γ* = −k` for `k ∈ Γ*`).
const XI_TOL: f64 = 1e-12;

pub fn gradient_basis(k: Vec3, basis: &FiberBasis, regularized: bool) -> SubspaceBasis {
    let scale_ref = basis.modes.iter().map(|m| norm(m.vector)).fold(norm(k), f64::max).max(1.0);
    let mut contributing = Vec::new();
    for (m, mode) in basis.modes.iter().enumerate() {
        if regularized && mode.index == [0, 0, 0] {
            continue;
        }
        let xi = add(mode.vector, k);
        let r = norm(xi);
        if r <= XI_TOL * scale_ref {
            continue;
        }
        contributing.push((m, scale(1.0 / r, xi)));
    }
    let n = basis.dim();
    let mut columns = Mat::zeros(n, 2 * contributing.len());
    for (c, (m, u)) in contributing.iter().enumerate() {
        for i in 0..3 {
            columns[(FiberBasis::e_offset(*m) + i, 2 * c)] = c64::new(u[i], 0.0);
            columns[(FiberBasis::h_offset(*m) + i, 2 * c + 1)] = c64::new(u[i], 0.0);
        }
    }
    SubspaceBasis { k, regularized, columns, column_modes: contributing.iter().map(|(m, _)| *m).collect() }
}

#[derive(Debug, Clone)]
pub struct Projector {
    pub matrix: CMat,
}

impl Projector {
    pub fn complement(&self) -> Projector {
        let n = self.matrix.nrows();
        Projector { matrix: CMat::identity(n, n) - &self.matrix }
    }

    /// `‖P² − P‖_max`.
    pub fn idempotency_residual(&self) -> f64 {
        crate::linalg::max_abs_diff((&self.matrix * &self.matrix).as_ref(), self.matrix.as_ref())
    }

    /// `‖B P − P† B‖_max`.
    pub fn b_selfadjoint_residual(&self, b: &CMat) -> f64 {
        crate::linalg::max_abs_diff((b * &self.matrix).as_ref(), (self.matrix.adjoint() * b).as_ref())
    }
}

/// `P = S (S† B S)⁻¹ S† B`.
pub fn weighted_projector(s: &SubspaceBasis, gram: &Gram) -> Result<Projector> {
    let n = s.columns.nrows();
    if s.dim() == 0 {
        return Ok(Projector { matrix: Mat::zeros(n, n) });
    }
    let sb = s.columns.adjoint() * &gram.matrix;
    let g = &sb * &s.columns;
    let llt = g.llt(Side::Lower).map_err(|_| {
        let (rank, _) = numerical_rank(g.as_ref(), 1e-12);
        Error::RankDeficient { expected: s.dim(), found: rank }
    })?;
    let x = llt.solve(&sb);
    Ok(Projector { matrix: &s.columns * x })
}

/// `Qper(k)` or `Qreg(k)`.
pub fn gradient_projector(k: Vec3, basis: &FiberBasis, gram: &Gram, regularized: bool) -> Result<Projector> {
    weighted_projector(&gradient_basis(k, basis, regularized), gram)
}

/// Rank of `Preg(k)` applied to the two constant fields `(k, 0)` and
/// `(0, k)`, with singular values for auditing.
pub fn intersection_dimension(k: Vec3, basis: &FiberBasis, gram: &Gram) -> Result<(usize, Vec<f64>)> {
    let zero = basis
        .modes
        .zero_position()
        .ok_or_else(|| Error::Inconsistent("mode set lacks γ* = 0".into()))?;
    let p = gradient_projector(k, basis, gram, true)?.complement();
    let mut v = Mat::zeros(basis.dim(), 2);
    for i in 0..3 {
        v[(FiberBasis::e_offset(zero) + i, 0)] = c64::new(k[i], 0.0);
        v[(FiberBasis::h_offset(zero) + i, 1)] = c64::new(k[i], 0.0);
    }
    let pv = &p.matrix * &v;
    Ok(numerical_rank(pv.as_ref(), 1e-8))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscontinuityRow {
    pub t: f64,
    pub norm_plain: f64,
    pub norm_reg: f64,
}

/// `‖Qper(t k̂) − Qper(0)‖` and `‖Qreg(t k̂) − Qreg(0)‖` (spectral norms).
pub fn discontinuity_probe(ts: &[f64], direction: Vec3, basis: &FiberBasis, gram: &Gram) -> Result<Vec<DiscontinuityRow>> {
    let khat = scale(1.0 / norm(direction), direction);
    let q0_plain = gradient_projector([0.0; 3], basis, gram, false)?;
    let q0_reg = gradient_projector([0.0; 3], basis, gram, true)?;
    ts.iter()
        .map(|&t| {
            let k = scale(t, khat);
            let qp = gradient_projector(k, basis, gram, false)?;
            let qr = gradient_projector(k, basis, gram, true)?;
            Ok(DiscontinuityRow {
                t,
                norm_plain: spectral_norm((&qp.matrix - &q0_plain.matrix).as_ref()),
                norm_reg: spectral_norm((&qr.matrix - &q0_reg.matrix).as_ref()),
            })
        })
        .collect()
}

/// CSV with header `t,norm_plain,norm_reg`.
pub fn write_discontinuity_csv(path: &Path, rows: &[DiscontinuityRow]) -> Result<()> {
    let mut s = String::from("t,norm_plain,norm_reg\n");
    for r in rows {
        s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r.t, r.norm_plain, r.norm_reg));
    }
    crate::io::write_atomic(path, s.as_bytes())
}
