//! Periodic material weights `(ε, μ)` as Fourier-coefficient tables, plus the
//! slowly varying modulation pair `(τ_ε, τ_μ)`.
//!
//! Coefficients follow `f(y) = Σ f̂(γ*) e^{iγ*·y}`, keyed by the integer
//! coordinates of `γ*` in the dual basis. The tables for `ε⁻¹` and `μ⁻¹` are
//! the Fourier coefficients of the pointwise inverse fields, not inverses of
//! the truncated convolution matrices.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Invariant, Result};
use crate::linalg::{c64, dot, norm, scale, sub, Mat3, Vec3, ZERO};
use crate::lattice::{dual_basis, Lattice, ModeSet};

pub type CoefficientTable = BTreeMap<[i32; 3], Mat3>;

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialWeights {
    pub eps: CoefficientTable,
    pub mu: CoefficientTable,
    pub inv_eps: CoefficientTable,
    pub inv_mu: CoefficientTable,
    pub real_weights: bool,
    /// Lower and upper bounds on the pointwise eigenvalues of ε and μ.
    pub bounds: (f64, f64),
}

fn single_entry(m: Mat3) -> CoefficientTable {
    let mut t = CoefficientTable::new();
    t.insert([0, 0, 0], m);
    t
}

fn neg(idx: [i32; 3]) -> [i32; 3] {
    [-idx[0], -idx[1], -idx[2]]
}

/// `max ‖f̂(−γ*) − f̂(γ*)†‖` over the table (missing partners count as zero).
pub fn hermiticity_residual(table: &CoefficientTable) -> f64 {
    table
        .iter()
        .map(|(idx, m)| {
            let partner = table.get(&neg(*idx)).copied().unwrap_or(Mat3::ZERO);
            partner.sub(&m.adjoint()).max_abs()
        })
        .fold(0.0, f64::max)
}

/// `max ‖f̂(−γ*) − conj(f̂(γ*))‖`, zero exactly when `f` is real-valued.
pub fn realness_residual(table: &CoefficientTable) -> f64 {
    table
        .iter()
        .map(|(idx, m)| {
            let partner = table.get(&neg(*idx)).copied().unwrap_or(Mat3::ZERO);
            partner.sub(&m.conj()).max_abs()
        })
        .fold(0.0, f64::max)
}

fn table_scale(table: &CoefficientTable) -> f64 {
    table.values().map(Mat3::max_abs).fold(0.0, f64::max)
}

/// Evaluates a truncated series at fractional coordinates `s` (`y = Σ s_j e_j`).
pub fn reconstruct(table: &CoefficientTable, s: Vec3) -> Mat3 {
    let mut acc = Mat3::ZERO;
    for (idx, m) in table {
        let phase = 2.0 * PI * (idx[0] as f64 * s[0] + idx[1] as f64 * s[1] + idx[2] as f64 * s[2]);
        acc = acc.add(&m.scale(c64::from_polar(1.0, phase)));
    }
    acc
}

impl MaterialWeights {
    pub fn vacuum() -> Self {
        Self::constant(Mat3::identity(), Mat3::identity()).expect("identity is positive definite")
    }

    /// Spatially constant weights.
    pub fn constant(eps: Mat3, mu: Mat3) -> Result<Self> {
        let lo_hi = |m: &Mat3, what: &str| -> Result<(f64, f64)> {
            check_tensor(m, what)?;
            let ev = m.hermitian_eigenvalues();
            Ok((ev[0], ev[2]))
        };
        let (e0, e1) = lo_hi(&eps, "eps")?;
        let (m0, m1) = lo_hi(&mu, "mu")?;
        let inv_eps = eps.inverse().expect("checked positive definite");
        let inv_mu = mu.inverse().expect("checked positive definite");
        let real = eps.0.iter().flatten().chain(mu.0.iter().flatten()).all(|z| z.im == 0.0);
        Ok(Self {
            eps: single_entry(eps),
            mu: single_entry(mu),
            inv_eps: single_entry(inv_eps),
            inv_mu: single_entry(inv_mu),
            real_weights: real,
            bounds: (e0.min(m0), e1.max(m1)),
        })
    }

    pub fn scalar(eps: f64, mu: f64) -> Result<Self> {
        Self::constant(Mat3::scalar(eps), Mat3::scalar(mu))
    }

    /// Builds weights from raw tables; realness and bounds are inferred by probing.
    pub fn from_tables(
        eps: CoefficientTable,
        mu: CoefficientTable,
        inv_eps: CoefficientTable,
        inv_mu: CoefficientTable,
    ) -> Self {
        let scale = [&eps, &mu].iter().map(|t| table_scale(t)).fold(0.0, f64::max).max(1.0);
        let real = [&eps, &mu, &inv_eps, &inv_mu]
            .iter()
            .all(|t| realness_residual(t) <= 1e-12 * scale);
        let mut w = Self { eps, mu, inv_eps, inv_mu, real_weights: real, bounds: (0.0, 0.0) };
        let report = probe(&w, &probe_points(64, 0x5eed));
        w.bounds = (report.min_eigenvalue, report.max_eigenvalue);
        w
    }

    /// Union of tabulated indices across the four tables.
    pub fn indices(&self) -> Vec<[i32; 3]> {
        let mut all: Vec<[i32; 3]> = self
            .eps
            .keys()
            .chain(self.mu.keys())
            .chain(self.inv_eps.keys())
            .chain(self.inv_mu.keys())
            .copied()
            .collect();
        all.sort();
        all.dedup();
        all
    }
}

fn check_tensor(m: &Mat3, what: &str) -> Result<()> {
    if m.sub(&m.adjoint()).max_abs() > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::InvariantViolated {
            invariant: Invariant::Hermiticity,
            detail: format!("{what} tensor of a primitive"),
        });
    }
    let ev = m.hermitian_eigenvalues();
    if !(ev[0] > 0.0) {
        return Err(Error::InvariantViolated {
            invariant: Invariant::Positivity,
            detail: format!("{what} tensor of a primitive has min eigenvalue {:.3e}", ev[0]),
        });
    }
    Ok(())
}

/// Material tensor as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorSpec {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
    /// Row-major complex entries as `[re, im]` pairs.
    Complex([[[f64; 2]; 3]; 3]),
}

impl TensorSpec {
    pub fn to_mat3(&self) -> Mat3 {
        match self {
            TensorSpec::Scalar(s) => Mat3::scalar(*s),
            TensorSpec::Diagonal(d) => Mat3::diag(*d),
            TensorSpec::Full(r) => Mat3::from_real(*r),
            TensorSpec::Complex(c) => {
                Mat3(std::array::from_fn(|i| std::array::from_fn(|j| c64::new(c[i][j][0], c[i][j][1]))))
            }
        }
    }
}

impl From<f64> for TensorSpec {
    fn from(s: f64) -> Self {
        TensorSpec::Scalar(s)
    }
}

impl Default for TensorSpec {
    fn default() -> Self {
        TensorSpec::Scalar(1.0)
    }
}

/// Piecewise-constant building block of a unit cell.
///
/// Centers are fractional coordinates; sphere and rod radii are Cartesian
/// lengths; slab position and thickness are fractions of the cell along the
/// chosen lattice axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeometryPrimitive {
    Background {
        #[serde(default)]
        eps: TensorSpec,
        #[serde(default)]
        mu: TensorSpec,
    },
    Sphere {
        center: Vec3,
        radius: f64,
        #[serde(default)]
        eps: TensorSpec,
        #[serde(default)]
        mu: TensorSpec,
    },
    /// Infinite circular rod parallel to lattice vector `axis`.
    CylinderRod {
        center: Vec3,
        axis: usize,
        radius: f64,
        #[serde(default)]
        eps: TensorSpec,
        #[serde(default)]
        mu: TensorSpec,
    },
    /// Layer `|s_axis − center| ≤ thickness/2` in fractional coordinates.
    Slab {
        axis: usize,
        center: f64,
        thickness: f64,
        #[serde(default)]
        eps: TensorSpec,
        #[serde(default)]
        mu: TensorSpec,
    },
}

/// Vacuum background with one isotropic sphere at the cell origin filling
/// the volume fraction `fill`.
pub fn sphere_crystal(lattice: &Lattice, eps_in: f64, fill: f64) -> Vec<GeometryPrimitive> {
    let radius = (3.0 * fill * lattice.volume() / (4.0 * PI)).cbrt();
    vec![
        GeometryPrimitive::Background { eps: TensorSpec::Scalar(1.0), mu: TensorSpec::Scalar(1.0) },
        GeometryPrimitive::Sphere { center: [0.0; 3], radius, eps: TensorSpec::Scalar(eps_in), mu: TensorSpec::Scalar(1.0) },
    ]
}

impl GeometryPrimitive {
    fn weights(&self) -> (Mat3, Mat3) {
        match self {
            GeometryPrimitive::Background { eps, mu }
            | GeometryPrimitive::Sphere { eps, mu, .. }
            | GeometryPrimitive::CylinderRod { eps, mu, .. }
            | GeometryPrimitive::Slab { eps, mu, .. } => (eps.to_mat3(), mu.to_mat3()),
        }
    }

    fn validate(&self, lattice: &Lattice) -> Result<()> {
        let shortest = shortest_lattice_vector(lattice);
        match self {
            GeometryPrimitive::Background { .. } => {}
            GeometryPrimitive::Sphere { radius, .. } => {
                if !(*radius >= 0.0) || 2.0 * radius >= shortest {
                    return Err(Error::InvalidPrimitive(format!(
                        "sphere radius {radius} must lie in [0, {})",
                        shortest / 2.0
                    )));
                }
            }
            GeometryPrimitive::CylinderRod { axis, radius, .. } => {
                if *axis > 2 {
                    return Err(Error::InvalidPrimitive(format!("rod axis {axis} out of range")));
                }
                let spacing = rod_spacing(lattice, *axis);
                if !(*radius >= 0.0) || 2.0 * radius >= spacing {
                    return Err(Error::InvalidPrimitive(format!(
                        "rod radius {radius} must lie in [0, {})",
                        spacing / 2.0
                    )));
                }
            }
            GeometryPrimitive::Slab { axis, thickness, .. } => {
                if *axis > 2 {
                    return Err(Error::InvalidPrimitive(format!("slab axis {axis} out of range")));
                }
                if !(*thickness >= 0.0 && *thickness <= 1.0) {
                    return Err(Error::InvalidPrimitive(format!(
                        "slab thickness {thickness} must lie in [0, 1]"
                    )));
                }
            }
        }
        let (e, m) = self.weights();
        check_tensor(&e, "eps")?;
        check_tensor(&m, "mu")
    }

    /// Whether fractional point `s` lies inside (periodically extended).
    pub fn contains(&self, lattice: &Lattice, s: Vec3) -> bool {
        match self {
            GeometryPrimitive::Background { .. } => true,
            GeometryPrimitive::Sphere { center, radius, .. } => {
                periodic_distance(lattice, s, *center, None) <= *radius
            }
            GeometryPrimitive::CylinderRod { center, axis, radius, .. } => {
                periodic_distance(lattice, s, *center, Some(*axis)) <= *radius
            }
            GeometryPrimitive::Slab { axis, center, thickness, .. } => {
                let d = s[*axis] - center;
                (d - d.round()).abs() <= thickness / 2.0
            }
        }
    }

    /// `(1/V) ∫_cell χ(y) e^{−iγ*·y} dy` for this inclusion's indicator.
    fn indicator_coefficient(&self, lattice: &Lattice, dual_vec: Vec3, idx: [i32; 3]) -> c64 {
        let volume = lattice.volume();
        match self {
            GeometryPrimitive::Background { .. } => {
                if idx == [0, 0, 0] {
                    c64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            }
            GeometryPrimitive::Sphere { center, radius, .. } => {
                let fill = 4.0 * PI * radius.powi(3) / (3.0 * volume);
                let x = norm(dual_vec) * radius;
                let shape = if x < 1e-3 {
                    1.0 - x * x / 10.0 + x.powi(4) / 280.0
                } else {
                    3.0 * (x.sin() - x * x.cos()) / x.powi(3)
                };
                let c = lattice.to_cartesian(*center);
                c64::from_polar(fill * shape, -dot(dual_vec, c))
            }
            GeometryPrimitive::CylinderRod { center, axis, radius, .. } => {
                if idx[*axis] != 0 {
                    return ZERO;
                }
                let len = norm(lattice.basis[*axis]);
                let fill = PI * radius * radius * len / volume;
                let x = norm(dual_vec) * radius;
                let shape = if x < 1e-4 { 1.0 - x * x / 8.0 } else { 2.0 * libm::j1(x) / x };
                let c = lattice.to_cartesian(*center);
                c64::from_polar(fill * shape, -dot(dual_vec, c))
            }
            GeometryPrimitive::Slab { axis, center, thickness, .. } => {
                if (0..3).any(|b| b != *axis && idx[b] != 0) {
                    return ZERO;
                }
                let n = idx[*axis] as f64;
                let x = PI * n * thickness;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                c64::from_polar(thickness * sinc, -2.0 * PI * n * center)
            }
        }
    }
}

fn shortest_lattice_vector(lattice: &Lattice) -> f64 {
    let mut best = f64::INFINITY;
    for a in -2i32..=2 {
        for b in -2i32..=2 {
            for c in -2i32..=2 {
                if (a, b, c) != (0, 0, 0) {
                    best = best.min(norm(lattice.to_cartesian([a as f64, b as f64, c as f64])));
                }
            }
        }
    }
    best
}

/// Shortest distance between a rod and its periodic images.
fn rod_spacing(lattice: &Lattice, axis: usize) -> f64 {
    let u = scale(1.0 / norm(lattice.basis[axis]), lattice.basis[axis]);
    let mut best = f64::INFINITY;
    for a in -2i32..=2 {
        for b in -2i32..=2 {
            for c in -2i32..=2 {
                let v = lattice.to_cartesian([a as f64, b as f64, c as f64]);
                let perp = sub(v, scale(dot(v, u), u));
                let d = norm(perp);
                if d > 1e-12 {
                    best = best.min(d);
                }
            }
        }
    }
    best
}

/// Distance between fractional points (or from a point to a rod line when
/// `axis` is set), minimised over lattice images.
fn periodic_distance(lattice: &Lattice, s: Vec3, center: Vec3, axis: Option<usize>) -> f64 {
    let mut d: Vec3 = std::array::from_fn(|j| s[j] - center[j]);
    for x in d.iter_mut() {
        *x -= x.round();
    }
    let mut best = f64::INFINITY;
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                let shifted = [d[0] + a as f64, d[1] + b as f64, d[2] + c as f64];
                let mut v = lattice.to_cartesian(shifted);
                if let Some(ax) = axis {
                    let u = scale(1.0 / norm(lattice.basis[ax]), lattice.basis[ax]);
                    v = sub(v, scale(dot(v, u), u));
                }
                best = best.min(norm(v));
            }
        }
    }
    best
}

/// Closed-form Fourier tables for a background followed by non-overlapping
/// inclusions, tabulated on `modes`.
pub fn coefficients_from_primitives(
    primitives: &[GeometryPrimitive],
    lattice: &Lattice,
    modes: &ModeSet,
) -> Result<MaterialWeights> {
    let (bg, inclusions) = match primitives.split_first() {
        Some((bg @ GeometryPrimitive::Background { .. }, rest)) => (bg, rest),
        _ => return Err(Error::InvalidPrimitive("the first primitive must be the background".into())),
    };
    if inclusions.iter().any(|p| matches!(p, GeometryPrimitive::Background { .. })) {
        return Err(Error::InvalidPrimitive("only one background is allowed".into()));
    }
    for p in primitives {
        p.validate(lattice)?;
    }
    check_overlaps(inclusions, lattice)?;

    dual_basis(lattice)?;
    let (eps_bg, mu_bg) = bg.weights();
    let inv_eps_bg = eps_bg.inverse().expect("validated");
    let inv_mu_bg = mu_bg.inverse().expect("validated");

    let mut tables: [CoefficientTable; 4] = Default::default();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut real = true;
    for p in primitives {
        let (e, m) = p.weights();
        for t in [&e, &m] {
            let ev = t.hermitian_eigenvalues();
            lo = lo.min(ev[0]);
            hi = hi.max(ev[2]);
            real &= t.0.iter().flatten().all(|z| z.im == 0.0);
        }
    }
    for mode in modes.iter() {
        let mut acc = [Mat3::ZERO; 4];
        if mode.index == [0, 0, 0] {
            acc = [eps_bg, mu_bg, inv_eps_bg, inv_mu_bg];
        }
        for p in inclusions {
            let chi = p.indicator_coefficient(lattice, mode.vector, mode.index);
            if chi == ZERO {
                continue;
            }
            let (e, m) = p.weights();
            let contrasts = [
                e.sub(&eps_bg),
                m.sub(&mu_bg),
                e.inverse().expect("validated").sub(&inv_eps_bg),
                m.inverse().expect("validated").sub(&inv_mu_bg),
            ];
            for (a, c) in acc.iter_mut().zip(contrasts.iter()) {
                *a = a.add(&c.scale(chi));
            }
        }
        for (t, a) in tables.iter_mut().zip(acc) {
            t.insert(mode.index, a);
        }
    }
    let [eps, mu, inv_eps, inv_mu] = tables;
    Ok(MaterialWeights { eps, mu, inv_eps, inv_mu, real_weights: real, bounds: (lo, hi) })
}

fn check_overlaps(inclusions: &[GeometryPrimitive], lattice: &Lattice) -> Result<()> {
    const GRID: usize = 40;
    for i in 0..inclusions.len() {
        for j in (i + 1)..inclusions.len() {
            for a in 0..GRID {
                for b in 0..GRID {
                    for c in 0..GRID {
                        let s = [a as f64 / GRID as f64, b as f64 / GRID as f64, c as f64 / GRID as f64];
                        if inclusions[i].contains(lattice, s) && inclusions[j].contains(lattice, s) {
                            return Err(Error::OverlappingPrimitives { first: i + 1, second: j + 1 });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Uniform `n³` sampling of `ε` and `μ` over the unit cell.
///
/// Sample `(i, j, l)` sits at fractional coordinates `(i, j, l)/n` and is
/// stored at `(i·n + j)·n + l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledGrid {
    pub n: usize,
    #[serde(with = "mat3_list")]
    pub eps: Vec<Mat3>,
    #[serde(with = "mat3_list")]
    pub mu: Vec<Mat3>,
}

impl SampledGrid {
    pub fn from_fn(n: usize, mut f: impl FnMut(Vec3) -> (Mat3, Mat3)) -> Self {
        let mut eps = Vec::with_capacity(n * n * n);
        let mut mu = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let (e, m) = f([i as f64 / n as f64, j as f64 / n as f64, l as f64 / n as f64]);
                    eps.push(e);
                    mu.push(m);
                }
            }
        }
        Self { n, eps, mu }
    }

    /// Samples a primitive description at the grid points.
    pub fn from_primitives(n: usize, primitives: &[GeometryPrimitive], lattice: &Lattice) -> Self {
        Self::from_fn(n, |s| {
            let mut w = (Mat3::identity(), Mat3::identity());
            for p in primitives {
                if p.contains(lattice, s) {
                    w = p.weights();
                }
            }
            w
        })
    }
}

fn fft3(data: &mut [c64], n: usize) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut line = vec![ZERO; n];
    for axis in 0..3 {
        let stride = match axis {
            0 => n * n,
            1 => n,
            _ => 1,
        };
        for outer in 0..n {
            for inner in 0..n {
                let base = match axis {
                    0 => outer * n + inner,
                    1 => outer * n * n + inner,
                    _ => outer * n * n + inner * n,
                };
                for t in 0..n {
                    line[t] = data[base + t * stride];
                }
                fft.process(&mut line);
                for t in 0..n {
                    data[base + t * stride] = line[t];
                }
            }
        }
    }
}

fn transform_field(samples: &[Mat3], n: usize, keep: &[[i32; 3]]) -> CoefficientTable {
    let total = (n * n * n) as f64;
    let mut out: CoefficientTable = keep.iter().map(|k| (*k, Mat3::ZERO)).collect();
    let mut buf = vec![ZERO; n * n * n];
    for r in 0..3 {
        for c in 0..3 {
            for (b, s) in buf.iter_mut().zip(samples) {
                *b = s.0[r][c];
            }
            fft3(&mut buf, n);
            for idx in keep {
                let w = |m: i32| m.rem_euclid(n as i32) as usize;
                let pos = (w(idx[0]) * n + w(idx[1])) * n + w(idx[2]);
                out.get_mut(idx).unwrap().0[r][c] = buf[pos] / total;
            }
        }
    }
    out
}

/// Discrete Fourier transform of sampled weights.
///
/// Only indices with `|m_j| < n/2` survive (the Nyquist plane is dropped so
/// the table stays negation-closed); `modes`, when given, restricts the
/// output further.
pub fn coefficients_from_samples(grid: &SampledGrid, modes: Option<&ModeSet>) -> Result<MaterialWeights> {
    let n = grid.n;
    if n == 0 || grid.eps.len() != n * n * n || grid.mu.len() != n * n * n {
        return Err(Error::Inconsistent(format!("grid of size {n} needs {} samples per weight", n * n * n)));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut inv_eps = Vec::with_capacity(grid.eps.len());
    let mut inv_mu = Vec::with_capacity(grid.mu.len());
    let mut real = true;
    for (pos, (e, m)) in grid.eps.iter().zip(&grid.mu).enumerate() {
        let location = [pos / (n * n), (pos / n) % n, pos % n];
        for (t, sink) in [(e, &mut inv_eps), (m, &mut inv_mu)] {
            let herm = t.sub(&t.adjoint()).max_abs() <= 1e-12 * t.max_abs().max(1.0);
            let ev = t.hermitian_eigenvalues();
            if !herm || !(ev[0] > 0.0) {
                return Err(Error::NonPositiveSample { location, min_eigenvalue: ev[0] });
            }
            lo = lo.min(ev[0]);
            hi = hi.max(ev[2]);
            real &= t.0.iter().flatten().all(|z| z.im == 0.0);
            sink.push(t.inverse().expect("positive definite"));
        }
    }
    let half = (n as i32 + 1) / 2; // |m| < n/2
    let keep: Vec<[i32; 3]> = match modes {
        Some(ms) => ms
            .iter()
            .map(|m| m.index)
            .filter(|idx| idx.iter().all(|&c| 2 * c.abs() < n as i32))
            .collect(),
        None => {
            let mut v = Vec::new();
            for a in -half..=half {
                for b in -half..=half {
                    for c in -half..=half {
                        let idx = [a, b, c];
                        if idx.iter().all(|&x| 2 * x.abs() < n as i32) {
                            v.push(idx);
                        }
                    }
                }
            }
            v
        }
    };
    Ok(MaterialWeights {
        eps: transform_field(&grid.eps, n, &keep),
        mu: transform_field(&grid.mu, n, &keep),
        inv_eps: transform_field(&inv_eps, n, &keep),
        inv_mu: transform_field(&inv_mu, n, &keep),
        real_weights: real,
        bounds: (lo, hi),
    })
}

/// Outcome of probing a set of weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightsReport {
    pub n_probe: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub hermiticity_residual: f64,
    pub realness_residual: f64,
    pub real_weights: bool,
    pub failure: Option<String>,
}

impl WeightsReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

fn probe_points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![[0.0; 3]];
    while pts.len() < n.max(1) {
        pts.push([rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]);
    }
    pts
}

fn probe(w: &MaterialWeights, points: &[Vec3]) -> WeightsReport {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut imag = 0.0f64;
    for &s in points {
        for t in [&w.eps, &w.mu] {
            let m = reconstruct(t, s);
            let ev = m.hermitian_eigenvalues();
            lo = lo.min(ev[0]);
            hi = hi.max(ev[2]);
            if w.real_weights {
                imag = imag.max(m.0.iter().flatten().map(|z| z.im.abs()).fold(0.0, f64::max));
            }
        }
    }
    let herm = [&w.eps, &w.mu, &w.inv_eps, &w.inv_mu]
        .iter()
        .map(|t| hermiticity_residual(t))
        .fold(0.0, f64::max);
    WeightsReport {
        n_probe: points.len(),
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        hermiticity_residual: herm,
        realness_residual: imag,
        real_weights: w.real_weights,
        failure: None,
    }
}

/// Reconstructs ε and μ at `n_probe` cell points (the origin plus seeded
/// random points) and checks Hermiticity, positivity and realness.
pub fn validate_weights(w: &MaterialWeights, n_probe: usize) -> WeightsReport {
    let mut report = probe(w, &probe_points(n_probe, 0x00c0_ffee));
    report.failure = first_violation(w, &report, true).map(|i| format!("{i}: {}", violation_detail(i, &report)));
    report
}

fn first_violation(w: &MaterialWeights, report: &WeightsReport, positivity: bool) -> Option<Invariant> {
    let scale = [&w.eps, &w.mu].iter().map(|t| table_scale(t)).fold(0.0, f64::max).max(1.0);
    if report.hermiticity_residual > 1e-10 * scale {
        Some(Invariant::Hermiticity)
    } else if positivity && !(report.min_eigenvalue > 0.0) {
        Some(Invariant::Positivity)
    } else if w.real_weights && report.realness_residual > 1e-10 * scale {
        Some(Invariant::Realness)
    } else {
        None
    }
}

fn violation_detail(invariant: Invariant, report: &WeightsReport) -> String {
    match invariant {
        Invariant::Hermiticity => format!("residual {:.3e}", report.hermiticity_residual),
        Invariant::Positivity => format!("min eigenvalue {:.3e}", report.min_eigenvalue),
        Invariant::Realness => format!("residual {:.3e}", report.realness_residual),
    }
}

fn as_result(w: &MaterialWeights, report: WeightsReport, positivity: bool) -> Result<WeightsReport> {
    match first_violation(w, &report, positivity) {
        Some(invariant) => Err(Error::InvariantViolated {
            detail: violation_detail(invariant, &report),
            invariant,
        }),
        None => Ok(report),
    }
}

/// [`validate_weights`] as a `Result`, naming the first violated invariant.
pub fn check_weights(w: &MaterialWeights, n_probe: usize) -> Result<WeightsReport> {
    as_result(w, validate_weights(w, n_probe), true)
}

/// Hermiticity and realness only. Truncated series of discontinuous
/// weights undershoot near interfaces, so solvers rely on the Gram
/// factorization for definiteness instead of pointwise probes.
pub fn check_structure(w: &MaterialWeights, n_probe: usize) -> Result<WeightsReport> {
    as_result(w, validate_weights(w, n_probe), false)
}

// ---------------------------------------------------------------------------
// JSON coefficient tables
// ---------------------------------------------------------------------------

type ComplexRows = [[[f64; 2]; 3]; 3];

fn to_rows(m: &Mat3) -> ComplexRows {
    std::array::from_fn(|i| std::array::from_fn(|j| [m.0[i][j].re, m.0[i][j].im]))
}

fn from_rows(r: &ComplexRows) -> Mat3 {
    Mat3(std::array::from_fn(|i| std::array::from_fn(|j| c64::new(r[i][j][0], r[i][j][1]))))
}

mod mat3_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Mat3], s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<ComplexRows> = v.iter().map(to_rows).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mat3>, D::Error> {
        let rows = Vec::<ComplexRows>::deserialize(d)?;
        Ok(rows.iter().map(from_rows).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TableEntry {
    mode: [i32; 3],
    matrix: ComplexRows,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    real_weights: bool,
    eps: Vec<TableEntry>,
    mu: Vec<TableEntry>,
    inv_eps: Vec<TableEntry>,
    inv_mu: Vec<TableEntry>,
}

fn entries(t: &CoefficientTable) -> Vec<TableEntry> {
    t.iter().map(|(k, m)| TableEntry { mode: *k, matrix: to_rows(m) }).collect()
}

fn table(e: &[TableEntry]) -> CoefficientTable {
    e.iter().map(|t| (t.mode, from_rows(&t.matrix))).collect()
}

impl MaterialWeights {
    /// JSON layout: `{real_weights, eps, mu, inv_eps, inv_mu}`, each table a
    /// list of `{mode: [n1, n2, n3], matrix: 3×3 rows of [re, im]}`.
    pub fn to_json(&self) -> Result<String> {
        let f = TableFile {
            real_weights: self.real_weights,
            eps: entries(&self.eps),
            mu: entries(&self.mu),
            inv_eps: entries(&self.inv_eps),
            inv_mu: entries(&self.inv_mu),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: TableFile = serde_json::from_str(s)?;
        let mut w = Self::from_tables(table(&f.eps), table(&f.mu), table(&f.inv_eps), table(&f.inv_mu));
        // an explicit claim of realness is kept so validation can refute it
        w.real_weights = f.real_weights;
        Ok(w)
    }
}

// ---------------------------------------------------------------------------
// Modulation functions
// ---------------------------------------------------------------------------

/// Closed-form scalar modulation `τ(r)` with `τ(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Modulation {
    Constant,
    /// `1 + α (g(r) − g(0))` with `g(r) = exp(−|r − r₀|²/σ²)`.
    GaussianBump { alpha: f64, center: Vec3, sigma: f64 },
    /// `1 + (α/2)(cos(q·r) − 1)`.
    Cosine { alpha: f64, q: Vec3 },
}

/// Value, gradient and Hessian of a modulation at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationJet {
    pub value: f64,
    pub grad: Vec3,
    pub hess: [[f64; 3]; 3],
}

impl Modulation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Modulation::Constant => Ok(()),
            Modulation::GaussianBump { alpha, sigma, .. } => {
                if !(alpha.abs() < 1.0) || !(*sigma > 0.0) {
                    return Err(Error::Config(format!("gaussian bump needs |alpha| < 1 and sigma > 0 (alpha {alpha}, sigma {sigma})")));
                }
                Ok(())
            }
            Modulation::Cosine { alpha, .. } => {
                if !(alpha.abs() < 1.0) {
                    return Err(Error::Config(format!("cosine modulation needs |alpha| < 1 (alpha {alpha})")));
                }
                Ok(())
            }
        }
    }

    pub fn jet(&self, r: Vec3) -> ModulationJet {
        match *self {
            Modulation::Constant => ModulationJet { value: 1.0, grad: [0.0; 3], hess: [[0.0; 3]; 3] },
            Modulation::GaussianBump { alpha, center, sigma } => {
                let s2 = sigma * sigma;
                let d = sub(r, center);
                let g = (-dot(d, d) / s2).exp();
                let g0 = (-dot(center, center) / s2).exp();
                let grad = scale(-2.0 * alpha * g / s2, d);
                let hess = std::array::from_fn(|i| {
                    std::array::from_fn(|j| {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        alpha * g * (4.0 * d[i] * d[j] / (s2 * s2) - 2.0 * delta / s2)
                    })
                });
                ModulationJet { value: 1.0 + alpha * (g - g0), grad, hess }
            }
            Modulation::Cosine { alpha, q } => {
                let phase = dot(q, r);
                let grad = scale(-0.5 * alpha * phase.sin(), q);
                let hess = std::array::from_fn(|i| std::array::from_fn(|j| -0.5 * alpha * phase.cos() * q[i] * q[j]));
                ModulationJet { value: 1.0 + 0.5 * alpha * (phase.cos() - 1.0), grad, hess }
            }
        }
    }

    pub fn value(&self, r: Vec3) -> f64 {
        self.jet(r).value
    }
}

/// `(τ_ε, τ_μ)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationPair {
    pub eps: Modulation,
    pub mu: Modulation,
}

impl Default for ModulationPair {
    fn default() -> Self {
        Self { eps: Modulation::Constant, mu: Modulation::Constant }
    }
}

impl ModulationPair {
    pub fn validate(&self) -> Result<()> {
        self.eps.validate()?;
        self.mu.validate()
    }
}

/// `(τ_ε(r), τ_μ(r), ∇τ_ε(r), ∇τ_μ(r))`.
pub fn modulation_eval(m: &ModulationPair, r: Vec3) -> (f64, f64, Vec3, Vec3) {
    let e = m.eps.jet(r);
    let u = m.mu.jet(r);
    (e.value, u.value, e.grad, u.grad)
}
