//! Pointwise semiclassical symbols of the modulated operator and their
//! Moyal compositions.
//!
//! With `[r_j, k_l] = iλ δ_jl` the Moyal product of an `r`-only field `f`
//! with a field `g` linear in `k` terminates:
//! `f ♯ g = f g + (iλ/2) Σ_j ∂_{r_j} f ∂_{k_j} g` and
//! `g ♯ f = g f − (iλ/2) Σ_j ∂_{k_j} g ∂_{r_j} f`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, cross_matrix, max_abs, CMat, Vec3, I, ZERO};
use crate::material::{ModulationJet, ModulationPair};
use crate::planewave::{assemble_multiplier, assemble_rot, k_dot_rot, translate_conjugate, FiberBasis};
use crate::material::MaterialWeights;

/// Largest λ used when sampling symbol identities.
pub const LAMBDA_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolPoint {
    pub r: Vec3,
    pub k: Vec3,
    pub lambda: f64,
}

impl SymbolPoint {
    pub fn new(r: Vec3, k: Vec3, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
        }
        Ok(Self { r, k, lambda })
    }
}

/// `m0 + λ m1`.
#[derive(Debug, Clone)]
pub struct SymbolMatrix {
    pub m0: CMat,
    pub m1: CMat,
    pub lambda: f64,
}

impl SymbolMatrix {
    pub fn value(&self) -> CMat {
        &self.m0 + &self.m1 * faer::Scale(c64::new(self.lambda, 0.0))
    }

    /// `max(‖Δm0‖, ‖Δm1‖)` entrywise.
    pub fn max_diff(&self, other: &SymbolMatrix) -> f64 {
        crate::linalg::max_abs_diff(self.m0.as_ref(), other.m0.as_ref())
            .max(crate::linalg::max_abs_diff(self.m1.as_ref(), other.m1.as_ref()))
    }
}

/// Shared per-basis matrices: `W` (from the inverse weight tables) and the
/// `k`-derivatives `A_j = ∂A/∂k_j`.
#[derive(Debug, Clone)]
pub struct SymbolContext {
    pub basis: FiberBasis,
    pub w: CMat,
    pub a_parts: [CMat; 3],
}

impl SymbolContext {
    pub fn new(weights: &MaterialWeights, basis: FiberBasis) -> Self {
        let w = assemble_multiplier(&weights.inv_eps, &weights.inv_mu, &basis).matrix;
        let a_parts = std::array::from_fn(|j| {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            k_dot_rot(e, &basis)
        });
        Self { basis, w, a_parts }
    }

    /// `Mper(k) = W A(k)`.
    pub fn periodic_operator(&self, k: Vec3) -> CMat {
        &self.w * assemble_rot(k, &self.basis)
    }
}

/// `diag(e·I₃, h·I₃)` on every mode, stored as the pair `[e, h]`.
pub type BlockScalar = [f64; 2];

fn scale_rows(m: &CMat, s: BlockScalar) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[(i % 6) / 3])
}

fn scale_cols(m: &CMat, s: BlockScalar) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[(j % 6) / 3])
}

/// Block matrix `[[0, x·u^×], [y·u^×, 0]]` repeated on every mode.
fn cross_blocks(n_modes: usize, u_e: Vec3, u_h: Vec3, x: c64, y: c64) -> CMat {
    let (ce, ch) = (cross_matrix(u_e), cross_matrix(u_h));
    let n = 6 * n_modes;
    CMat::from_fn(n, n, |r, c| {
        if r / 6 != c / 6 {
            return ZERO;
        }
        let (i, j) = (r % 6, c % 6);
        match (i < 3, j < 3) {
            (true, false) => x * ce[i][j - 3],
            (false, true) => y * ch[i - 3][j],
            _ => ZERO,
        }
    })
}

/// `r`-dependent, `k`-independent scalar-block field with derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RJet {
    pub value: BlockScalar,
    pub grad: [BlockScalar; 3],
    pub hess: [[BlockScalar; 3]; 3],
}

fn power_jet(t: &ModulationJet, p: i32) -> (f64, Vec3, [[f64; 3]; 3]) {
    let pf = p as f64;
    let v = t.value.powi(p);
    let d1 = pf * t.value.powi(p - 1);
    let d2 = pf * (pf - 1.0) * t.value.powi(p - 2);
    let grad = std::array::from_fn(|j| d1 * t.grad[j]);
    let hess = std::array::from_fn(|j| std::array::from_fn(|l| d2 * t.grad[j] * t.grad[l] + d1 * t.hess[j][l]));
    (v, grad, hess)
}

/// `diag(τ_ε^p, τ_μ^p)` at `r`, so `p = 2` is `S⁻²` and `p = −1` is `S`.
pub fn tau_power_jet(m: &ModulationPair, r: Vec3, p: i32) -> RJet {
    let (ve, ge, he) = power_jet(&m.eps.jet(r), p);
    let (vh, gh, hh) = power_jet(&m.mu.jet(r), p);
    RJet {
        value: [ve, vh],
        grad: std::array::from_fn(|j| [ge[j], gh[j]]),
        hess: std::array::from_fn(|j| std::array::from_fn(|l| [he[j][l], hh[j][l]])),
    }
}

/// As [`tau_power_jet`] with first and second derivatives from central
/// differences of step `h`.
pub fn tau_power_jet_fd(m: &ModulationPair, r: Vec3, p: i32, h: f64) -> RJet {
    let f = |x: Vec3| -> BlockScalar { [m.eps.value(x).powi(p), m.mu.value(x).powi(p)] };
    let shift = |x: Vec3, j: usize, d: f64| -> Vec3 {
        let mut y = x;
        y[j] += d;
        y
    };
    let grad = std::array::from_fn(|j| {
        let (a, b) = (f(shift(r, j, h)), f(shift(r, j, -h)));
        [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]
    });
    let hess = std::array::from_fn(|j| {
        std::array::from_fn(|l| {
            let pp = f(shift(shift(r, j, h), l, h));
            let pm = f(shift(shift(r, j, h), l, -h));
            let mp = f(shift(shift(r, j, -h), l, h));
            let mm = f(shift(shift(r, j, -h), l, -h));
            std::array::from_fn(|s| (pp[s] - pm[s] - mp[s] + mm[s]) / (4.0 * h * h))
        })
    });
    RJet { value: f(r), grad, hess }
}

/// A symbol at one point through its `k`-derivatives: `m0 + λ m1` with
/// `dk[j] = ∂_{k_j} m0` and `dkk[j][l] = ∂_{k_j}∂_{k_l} m0`; `m1` carries
/// no `k`-dependence.
#[derive(Debug, Clone)]
pub struct KJet {
    pub m0: CMat,
    pub m1: CMat,
    pub dk: [CMat; 3],
    pub dkk: Option<[[CMat; 3]; 3]>,
}

impl KJet {
    /// `Mper(·)` at `k`: value `W A(k)`, slopes `W A_j`, no curvature.
    pub fn periodic(ctx: &SymbolContext, k: Vec3) -> Self {
        let n = ctx.basis.dim();
        KJet {
            m0: ctx.periodic_operator(k),
            m1: CMat::zeros(n, n),
            dk: std::array::from_fn(|j| &ctx.w * &ctx.a_parts[j]),
            dkk: None,
        }
    }

    fn is_k_linear(&self) -> bool {
        self.dkk.as_ref().is_none_or(|d| d.iter().flatten().all(|m| max_abs(m.as_ref()) == 0.0))
    }
}

/// Result of one two-term Moyal composition.
#[derive(Debug, Clone)]
pub struct MoyalProduct {
    pub symbol: SymbolMatrix,
    /// `k`-jet of the product, for chaining.
    pub jet: KJet,
}

/// `f ♯ g` for `r`-only `f` and `k`-linear `g`.
pub fn moyal_two_term(f: &RJet, g: &KJet, lambda: f64) -> Result<MoyalProduct> {
    if !g.is_k_linear() {
        return Err(Error::NonLinearSymbol);
    }
    let half_i = I * 0.5;
    let m0 = scale_rows(&g.m0, f.value);
    let mut m1 = scale_rows(&g.m1, f.value);
    for j in 0..3 {
        m1 += scale_rows(&g.dk[j], f.grad[j]) * faer::Scale(half_i);
    }
    let dk = std::array::from_fn(|j| scale_rows(&g.dk[j], f.value));
    let jet = KJet { m0: m0.clone(), m1: m1.clone(), dk, dkk: None };
    Ok(MoyalProduct { symbol: SymbolMatrix { m0, m1, lambda }, jet })
}

/// `g ♯ f` for `k`-linear `g` and `r`-only `f`.
pub fn moyal_two_term_right(g: &KJet, f: &RJet, lambda: f64) -> Result<MoyalProduct> {
    if !g.is_k_linear() {
        return Err(Error::NonLinearSymbol);
    }
    let half_i = I * 0.5;
    let m0 = scale_cols(&g.m0, f.value);
    let mut m1 = scale_cols(&g.m1, f.value);
    for j in 0..3 {
        m1 -= scale_cols(&g.dk[j], f.grad[j]) * faer::Scale(half_i);
    }
    let dk = std::array::from_fn(|j| scale_cols(&g.dk[j], f.value));
    let jet = KJet { m0: m0.clone(), m1: m1.clone(), dk, dkk: None };
    Ok(MoyalProduct { symbol: SymbolMatrix { m0, m1, lambda }, jet })
}

/// Coefficient of `λ²` in `f ♯ g`:
/// `(1/2)(i/2)² Σ_{jl} ∂_{r_j}∂_{r_l} f ∂_{k_j}∂_{k_l} g`.
/// The remaining second-order terms need `k`-derivatives of `f` and vanish.
pub fn moyal_second_order(f: &RJet, g: &KJet) -> CMat {
    let n = g.m0.nrows();
    let mut out = CMat::zeros(n, n);
    if let Some(dkk) = &g.dkk {
        for j in 0..3 {
            for l in 0..3 {
                out += scale_rows(&dkk[j][l], f.hess[j][l]) * faer::Scale(c64::new(-0.125, 0.0));
            }
        }
    }
    out
}

/// `S⁻² ♯ Mper(·)` assembled in closed form:
/// `m0 = diag(τ_ε², τ_μ²) W A(k)`,
/// `m1 = W [[0, −i τ_ε (∇τ_ε)^×], [i τ_μ (∇τ_μ)^×, 0]]`.
pub fn eval_symbol_physical(p: &SymbolPoint, m: &ModulationPair, ctx: &SymbolContext) -> SymbolMatrix {
    let (te, th) = (m.eps.jet(p.r), m.mu.jet(p.r));
    let m0 = scale_rows(&ctx.periodic_operator(p.k), [te.value * te.value, th.value * th.value]);
    let blocks = cross_blocks(
        ctx.basis.n_modes(),
        te.grad,
        th.grad,
        c64::new(0.0, -te.value),
        c64::new(0.0, th.value),
    );
    SymbolMatrix { m0, m1: &ctx.w * blocks, lambda: p.lambda }
}

/// `S⁻¹ ♯ Mper(·) ♯ S⁻¹` in closed form: `m0 = τ W A(k)` with `τ = τ_ε τ_μ`,
/// `m1 = −τ W [[0, (i/2) L^×], [(i/2) L^×, 0]]` with `L = ∇ ln(τ_ε/τ_μ)`.
pub fn eval_symbol_rescaled(p: &SymbolPoint, m: &ModulationPair, ctx: &SymbolContext) -> Result<SymbolMatrix> {
    let (te, th) = (m.eps.jet(p.r), m.mu.jet(p.r));
    if !(te.value > 0.0 && th.value > 0.0) {
        return Err(Error::Inconsistent(format!(
            "modulation must stay positive (τ_ε = {}, τ_μ = {})",
            te.value, th.value
        )));
    }
    let tau = te.value * th.value;
    let l: Vec3 = std::array::from_fn(|j| te.grad[j] / te.value - th.grad[j] / th.value);
    let m0 = &ctx.periodic_operator(p.k) * faer::Scale(c64::new(tau, 0.0));
    let coeff = c64::new(0.0, -0.5 * tau);
    let blocks = cross_blocks(ctx.basis.n_modes(), l, l, coeff, coeff);
    Ok(SymbolMatrix { m0, m1: &ctx.w * blocks, lambda: p.lambda })
}

/// Max mismatch between `eval(k − γ*)` and the conjugation of `eval(k)` by
/// multiplication with `e^{iγ*·y}`, over mode blocks that survive the shift.
pub fn symbol_equivariance_check(
    eval: impl Fn(Vec3) -> CMat,
    k: Vec3,
    shift: [i32; 3],
    shift_vector: Vec3,
    basis: &FiberBasis,
) -> f64 {
    let here = eval(k);
    let there = eval([k[0] - shift_vector[0], k[1] - shift_vector[1], k[2] - shift_vector[2]]);
    let t = translate_conjugate(&here, shift, basis);
    let n = basis.dim();
    let mut worst = 0.0f64;
    for r in 0..n {
        if !t.interior[r / 6] {
            continue;
        }
        for c in 0..n {
            if t.interior[c / 6] {
                worst = worst.max((t.value[(r, c)] - there[(r, c)]).norm());
            }
        }
    }
    worst
}

/// Residuals of the symbol identities at one sample point.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolResiduals {
    pub point: SymbolPoint,
    pub physical: f64,
    pub rescaled: f64,
    pub second_order: f64,
    pub equivariance_physical: f64,
    pub equivariance_rescaled: f64,
}

/// Runs every identity at `p`, shifting by the dual vector `shift`.
pub fn symbol_residuals(
    p: &SymbolPoint,
    m: &ModulationPair,
    ctx: &SymbolContext,
    shift: [i32; 3],
    shift_vector: Vec3,
) -> Result<SymbolResiduals> {
    let mper = KJet::periodic(ctx, p.k);
    let s_inv2 = tau_power_jet(m, p.r, 2);
    let s_inv = tau_power_jet(m, p.r, 1);
    let phys = moyal_two_term(&s_inv2, &mper, p.lambda)?;
    let left = moyal_two_term(&s_inv, &mper, p.lambda)?;
    let resc = moyal_two_term_right(&left.jet, &s_inv, p.lambda)?;
    let closed_phys = eval_symbol_physical(p, m, ctx);
    let closed_resc = eval_symbol_rescaled(p, m, ctx)?;
    let second = moyal_second_order(&s_inv2, &mper);
    let eq_phys = symbol_equivariance_check(
        |k| eval_symbol_physical(&SymbolPoint { k, ..*p }, m, ctx).value(),
        p.k,
        shift,
        shift_vector,
        &ctx.basis,
    );
    let eq_resc = symbol_equivariance_check(
        |k| eval_symbol_rescaled(&SymbolPoint { k, ..*p }, m, ctx).expect("positive modulation").value(),
        p.k,
        shift,
        shift_vector,
        &ctx.basis,
    );
    Ok(SymbolResiduals {
        point: *p,
        physical: phys.symbol.max_diff(&closed_phys),
        rescaled: resc.symbol.max_diff(&closed_resc),
        second_order: max_abs(second.as_ref()),
        equivariance_physical: eq_phys,
        equivariance_rescaled: eq_resc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cutoff_modes, dual_basis, Lattice};
    use crate::linalg::max_abs_diff;
    use crate::material::{coefficients_from_primitives, GeometryPrimitive, Modulation};
    use std::f64::consts::PI;

    fn sphere_ctx(radius: f64) -> SymbolContext {
        let lattice = Lattice::cubic(1.0);
        let dual = dual_basis(&lattice).unwrap();
        let modes = cutoff_modes(&dual, radius);
        let prims = vec![
            GeometryPrimitive::Background { eps: 1.0.into(), mu: 1.0.into() },
            GeometryPrimitive::Sphere { center: [0.5; 3], radius: 0.3, eps: 5.0.into(), mu: 1.0.into() },
        ];
        let w = coefficients_from_primitives(&prims, &lattice, &modes.differences(&dual)).unwrap();
        SymbolContext::new(&w, FiberBasis::new(modes))
    }

    fn bumps() -> ModulationPair {
        ModulationPair {
            eps: Modulation::GaussianBump { alpha: 0.3, center: [0.4, -0.2, 0.1], sigma: 0.8 },
            mu: Modulation::Cosine { alpha: 0.2, q: [0.5, 1.0, -0.7] },
        }
    }

    #[test]
    fn unmodulated_symbol_is_periodic_operator() {
        let ctx = sphere_ctx(2.0 * PI);
        let p = SymbolPoint::new([0.3, 0.1, -0.2], [0.5, -1.0, 0.2], 0.4).unwrap();
        let m = ModulationPair::default();
        let s = eval_symbol_physical(&p, &m, &ctx);
        assert_eq!(max_abs(s.m1.as_ref()), 0.0);
        assert_eq!(max_abs_diff(s.m0.as_ref(), ctx.periodic_operator(p.k).as_ref()), 0.0);
        let r = eval_symbol_rescaled(&p, &m, &ctx).unwrap();
        assert_eq!(max_abs(r.m1.as_ref()), 0.0);
    }

    #[test]
    fn equal_modulations_cancel_rescaled_correction() {
        let ctx = sphere_ctx(2.0 * PI);
        let t = Modulation::GaussianBump { alpha: 0.3, center: [0.4, -0.2, 0.1], sigma: 0.8 };
        let m = ModulationPair { eps: t.clone(), mu: t };
        for i in 0..5 {
            let r = [0.2 * i as f64, -0.1 * i as f64, 0.3];
            let p = SymbolPoint::new(r, [0.1, 0.2, 0.3], 0.5).unwrap();
            assert_eq!(max_abs(eval_symbol_rescaled(&p, &m, &ctx).unwrap().m1.as_ref()), 0.0);
        }
    }

    #[test]
    fn bump_peak_has_no_first_order_term() {
        let ctx = sphere_ctx(2.0 * PI);
        let m = ModulationPair { eps: Modulation::GaussianBump { alpha: 0.3, center: [0.4, -0.2, 0.1], sigma: 0.8 }, mu: Modulation::Constant };
        let p = SymbolPoint::new([0.4, -0.2, 0.1], [0.3, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(max_abs(eval_symbol_physical(&p, &m, &ctx).m1.as_ref()), 0.0);
    }

    #[test]
    fn rescaled_first_order_matches_entrywise_formula() {
        // independent per-entry evaluation of W·[[0, c L^×], [c L^×, 0]]
        let ctx = sphere_ctx(2.0 * PI);
        let m = bumps();
        let p = SymbolPoint::new([0.2, 0.5, -0.3], [0.1, 0.0, 0.4], 0.3).unwrap();
        let s = eval_symbol_rescaled(&p, &m, &ctx).unwrap();
        let (te, th) = (m.eps.jet(p.r), m.mu.jet(p.r));
        let tau = te.value * th.value;
        let l: Vec3 = std::array::from_fn(|j| (te.grad[j] * th.value - th.grad[j] * te.value) / tau);
        let lx = cross_matrix(l);
        let n = ctx.basis.dim();
        for r in (0..n).step_by(7) {
            for c in 0..n {
                let (cm, cj) = (c / 6, c % 6);
                let mut acc = ZERO;
                for i in 0..6 {
                    let row = 6 * cm + i;
                    let block = match (i < 3, cj < 3) {
                        (true, false) => lx[i][cj - 3],
                        (false, true) => lx[i - 3][cj],
                        _ => 0.0,
                    };
                    acc += ctx.w[(r, row)] * c64::new(0.0, -0.5 * tau * block);
                }
                assert!((acc - s.m1[(r, c)]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn moyal_reproduces_both_symbols() {
        let ctx = sphere_ctx(2.0 * PI);
        let m = bumps();
        let dual = dual_basis(&Lattice::cubic(1.0)).unwrap();
        let p = SymbolPoint::new([0.25, -0.4, 0.6], [0.7, 0.3, -1.1], 0.35).unwrap();
        let res = symbol_residuals(&p, &m, &ctx, [1, 0, 0], dual.vector([1, 0, 0])).unwrap();
        assert!(res.physical <= 1e-12, "{res:?}");
        assert!(res.rescaled <= 1e-12, "{res:?}");
        assert_eq!(res.second_order, 0.0);
        assert!(res.equivariance_physical <= 1e-12 && res.equivariance_rescaled <= 1e-12);
    }

    #[test]
    fn zero_lambda_is_pointwise_product() {
        let ctx = sphere_ctx(2.0 * PI);
        let m = bumps();
        let p = SymbolPoint::new([0.1, 0.2, 0.3], [0.4, 0.5, 0.6], 0.0).unwrap();
        let prod = moyal_two_term(&tau_power_jet(&m, p.r, 2), &KJet::periodic(&ctx, p.k), 0.0).unwrap();
        let direct = scale_rows(&ctx.periodic_operator(p.k), tau_power_jet(&m, p.r, 2).value);
        assert_eq!(max_abs_diff(prod.symbol.value().as_ref(), direct.as_ref()), 0.0);
    }

    #[test]
    fn associativity_through_s() {
        // S ♯ (S⁻² ♯ Mper) ♯ S⁻¹ equals S⁻¹ ♯ Mper ♯ S⁻¹
        let ctx = sphere_ctx(2.0 * PI);
        let m = bumps();
        let p = SymbolPoint::new([0.3, 0.2, -0.5], [0.2, -0.6, 0.9], 0.3).unwrap();
        let mper = KJet::periodic(&ctx, p.k);
        let phys = moyal_two_term(&tau_power_jet(&m, p.r, 2), &mper, p.lambda).unwrap();
        let s = tau_power_jet(&m, p.r, -1);
        let s_inv = tau_power_jet(&m, p.r, 1);
        let via = moyal_two_term_right(&moyal_two_term(&s, &phys.jet, p.lambda).unwrap().jet, &s_inv, p.lambda).unwrap();
        let closed = eval_symbol_rescaled(&p, &m, &ctx).unwrap();
        assert!(max_abs_diff(via.symbol.value().as_ref(), closed.value().as_ref()) < 1e-12);
    }

    #[test]
    fn nonlinear_symbols_are_refused() {
        let ctx = sphere_ctx(0.0);
        let m = bumps();
        let mut g = KJet::periodic(&ctx, [0.1, 0.2, 0.3]);
        let curv = CMat::identity(6, 6);
        g.dkk = Some(std::array::from_fn(|_| std::array::from_fn(|_| curv.clone())));
        let f = tau_power_jet(&m, [0.1, 0.0, 0.0], 2);
        assert!(matches!(moyal_two_term(&f, &g, 0.1), Err(Error::NonLinearSymbol)));
        assert!(matches!(moyal_two_term_right(&g, &f, 0.1), Err(Error::NonLinearSymbol)));
        assert!(max_abs(moyal_second_order(&f, &g).as_ref()) > 0.0);
    }

    #[test]
    fn finite_difference_gradients_agree() {
        let ctx = sphere_ctx(2.0 * PI);
        let m = bumps();
        let p = SymbolPoint::new([0.15, 0.35, -0.25], [0.3, 0.1, -0.5], 0.5).unwrap();
        let mper = KJet::periodic(&ctx, p.k);
        let exact = moyal_two_term(&tau_power_jet(&m, p.r, 2), &mper, p.lambda).unwrap();
        let fd = moyal_two_term(&tau_power_jet_fd(&m, p.r, 2, 1e-5), &mper, p.lambda).unwrap();
        let v = exact.symbol.value();
        let rel = max_abs_diff(v.as_ref(), fd.symbol.value().as_ref()) / max_abs(v.as_ref());
        assert!(rel <= 1e-7, "{rel}");
    }
}
