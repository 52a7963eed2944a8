//! Nyström discretization of the surface operators and the scalar resonance
//! function `eta_l`.
//!
//! Every pairing between mode vectors and surface functions is the bilinear
//! form `sum_j u_j v_j w_j`. Since `omega_n(conj z) = conj(omega_n(z))` this
//! equals the conjugating inner product with the mode evaluated at `conj z`,
//! and it keeps all assembled quantities analytic in `z` on each sheet.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{build_quadrature, ParamDomain, QuadratureRule, Surface, SurfaceFamily};
use crate::greens::{omega_n, KernelEvalConfig, LayerKernel, PairStatic};
use crate::parallel::Execution;
use crate::quadrature::gauss_legendre_on;
use crate::specfun::{gamma_n, spectral_window, SheetContext, SpectralParams, SpectralPoint};

/// Condition estimates above this are reported as ill-conditioned.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `|Gamma_n(z)|` below this is a pole collision in rank sums.
pub const POLE_COLLISION: f64 = 1e-10;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Bilinear pairing `sum_j u_j v_j w_j`.
pub fn pair(u: &CVector, v: &CVector, weights: &[f64]) -> Complex64 {
    u.iter()
        .zip(v.iter())
        .zip(weights)
        .map(|((a, b), w)| a * b * *w)
        .sum()
}

/// Nyström representation of `f -> int K(x, x') f(x') dSigma'`: the matrix
/// acts on nodal values, `(A f)_i = sum_j K_ij w_j f_j`.
#[derive(Debug, Clone)]
pub struct DiscreteKernelOperator {
    matrix: CMatrix,
    weights: Vec<f64>,
}

impl DiscreteKernelOperator {
    /// Wraps an already weighted matrix.
    pub fn from_weighted(matrix: CMatrix, weights: Vec<f64>) -> Self {
        assert_eq!(matrix.nrows(), weights.len());
        assert_eq!(matrix.ncols(), weights.len());
        Self { matrix, weights }
    }

    /// Builds the operator from kernel values `K_ij`.
    pub fn from_kernel(kernel: CMatrix, weights: Vec<f64>) -> Self {
        let mut matrix = kernel;
        for (j, w) in weights.iter().enumerate() {
            matrix.column_mut(j).scale_mut(*w);
        }
        Self::from_weighted(matrix, weights)
    }

    pub fn zeros(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Self::from_weighted(CMatrix::zeros(n, n), weights)
    }

    /// The weighted matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Effective kernel value at a node pair.
    pub fn kernel(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)] / self.weights[j]
    }

    pub fn apply(&self, f: &CVector) -> CVector {
        &self.matrix * f
    }

    /// `self` followed by nothing else: `(self o other) f = self(other f)`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_weighted(&self.matrix * &other.matrix, self.weights.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_weighted(&self.matrix + &other.matrix, self.weights.clone())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_weighted(&self.matrix * c, self.weights.clone())
    }

    /// `W^(1/2) A W^(-1/2)`, the matrix of the operator in an orthonormal
    /// basis of `L^2(Sigma)`.
    pub fn symmetrized(&self) -> CMatrix {
        let n = self.len();
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        CMatrix::from_fn(n, n, |i, j| self.matrix[(i, j)] * (s[i] / s[j]))
    }

    /// `L^2(Sigma)` operator norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.symmetrized()
            .singular_values()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    /// `I - c A`.
    pub fn identity_minus(&self, c: Complex64) -> CMatrix {
        let n = self.len();
        CMatrix::identity(n, n) - &self.matrix * c
    }
}

/// `w_n(z) = omega_n(z)` restricted to the quadrature nodes.
#[derive(Debug, Clone)]
pub struct ModeVector {
    pub values: CVector,
    pub n: u32,
    pub z: SpectralPoint,
    pub ctx: SheetContext,
}

impl ModeVector {
    /// True when every entry is below `1e-15`, e.g. on a nodal plane of `chi_n`.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() < 1e-15)
    }

    /// `sum_j w_j^2 weight_j` (bilinear).
    pub fn square(&self, weights: &[f64]) -> Complex64 {
        pair(&self.values, &self.values, weights)
    }

    /// `sum_j |w_j|^2 weight_j`.
    pub fn norm_sq(&self, weights: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(weights)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum()
    }
}

pub fn mode_vector(
    z: impl Into<SpectralPoint>,
    n: u32,
    rule: &QuadratureRule,
    ctx: SheetContext,
) -> Result<ModeVector> {
    let z = z.into();
    let values = rule
        .nodes
        .iter()
        .map(|x| omega_n(z, n, x, ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeVector {
        values: CVector::from_vec(values),
        n,
        z,
        ctx,
    })
}

/// `z`-independent part of the free operator on one rule.
#[derive(Debug, Clone)]
pub struct FreeOperatorCache {
    kernel: LayerKernel,
    weights: Vec<f64>,
    /// Row `i` holds pairs `(i, j)` for `j > i`.
    pairs: Vec<Vec<PairStatic>>,
    diagonal: Vec<PairStatic>,
    /// Weighted correction added to `K_ij w_j` (off the diagonal) and to
    /// `(K - S)_ii w_i` on it, with `S = 1/(4 pi r)`.
    correction: DMatrix<f64>,
    /// Same for the `r` term of the local expansion; scaled by `-z/(8 pi)`.
    linear: Option<DMatrix<f64>>,
    exec: Execution,
}

impl FreeOperatorCache {
    pub fn new(
        surface: &Surface,
        rule: &QuadratureRule,
        z_ref: impl Into<SpectralPoint>,
        ctx: SheetContext,
        cfg: &KernelEvalConfig,
        exec: Execution,
    ) -> Result<Self> {
        let z_ref = z_ref.into();
        let kernel = LayerKernel::new(cfg, z_ref.value(), ctx);
        let nodes = &rule.nodes;
        let n = nodes.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if (nodes[i] - nodes[j]).norm() == 0.0 {
                    return Err(Error::Coincident);
                }
            }
        }
        let pairs = exec.map(n, |i| {
            ((i + 1)..n)
                .map(|j| kernel.pair_static(&nodes[i], &nodes[j]))
                .collect::<Vec<_>>()
        });
        let diagonal = exec.map_slice(nodes, |x| kernel.diagonal_static(x));
        let (correction, linear) = singular_correction(surface, rule, exec);
        Ok(Self {
            kernel,
            weights: rule.weights.clone(),
            pairs,
            diagonal,
            correction,
            linear,
            exec,
        })
    }

    pub fn kernel(&self) -> &LayerKernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Free operator `R_SigmaSigma(z)`.
    pub fn assemble(
        &self,
        z: impl Into<SpectralPoint>,
        ctx: SheetContext,
    ) -> Result<DiscreteKernelOperator> {
        let z = z.into();
        if ctx.k() >= self.kernel.modes() {
            return Err(Error::InvalidParameter {
                name: "k",
                detail: "window index exceeds the kernel's exact modes".into(),
            });
        }
        let at = self.kernel.at(z, ctx)?;
        let n = self.len();
        let rows = self.exec.map(n, |i| {
            self.pairs[i].iter().map(|p| at.eval(p)).collect::<Vec<_>>()
        });
        let diag = self.exec.map_slice(&self.diagonal, |p| at.eval(p));
        let w = &self.weights;
        let c = &self.correction;
        let mut m = CMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (off, value) in row.iter().enumerate() {
                let j = i + 1 + off;
                m[(i, j)] = value * w[j] + c[(i, j)];
                m[(j, i)] = value * w[i] + c[(j, i)];
            }
            m[(i, i)] = diag[i] * w[i] + c[(i, i)];
        }
        if let Some(lin) = &self.linear {
            // e^{-kr}/(4 pi r) = 1/(4 pi r) - k/(4 pi) + k^2 r/(8 pi) + ..., k^2 = -z
            let coeff = -z.value() / (8.0 * PI);
            m.zip_apply(lin, |a, b| *a += coeff * b);
        }
        Ok(DiscreteKernelOperator::from_weighted(m, w.clone()))
    }
}

/// One-shot free operator.
pub fn assemble_free(
    z: impl Into<SpectralPoint>,
    surface: &Surface,
    rule: &QuadratureRule,
    ctx: SheetContext,
    cfg: &KernelEvalConfig,
) -> Result<DiscreteKernelOperator> {
    let z = z.into();
    FreeOperatorCache::new(surface, rule, z, ctx, cfg, Execution::default())?.assemble(z, ctx)
}

/// Corrections turning the plain rule for `S = 1/(4 pi r)` and for `r` into
/// product integration against the tensor Lagrange basis of the rule.
/// Tabulated surfaces only get an equal-area disk self term.
fn singular_correction(
    surface: &Surface,
    rule: &QuadratureRule,
    exec: Execution,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let n = rule.len();
    let domain = match (surface.family(), surface.domain()) {
        (SurfaceFamily::Tabulated { .. }, _) | (_, None) => {
            // equal-area disk around each node
            let d: Vec<f64> = rule.weights.iter().map(|w| 0.5 * (w / PI).sqrt()).collect();
            return (DMatrix::from_diagonal(&DVector::from_vec(d)), None);
        }
        (_, Some(d)) => d,
    };
    let basis = LagrangeGrid::new(rule);
    let rows = exec.map(n, |i| {
        let mut acc = vec![0.0; 2 * n];
        let q0 = rule.param_nodes[i];
        let x0 = rule.nodes[i];
        let mut l1 = vec![0.0; basis.x1.len()];
        let mut l2 = vec![0.0; basis.x2.len()];
        let n2 = l2.len();
        let order = basis.x1.len().max(n2);
        duffy_points(surface, &domain, q0, order, |q, weight| {
            basis.eval(q, &mut l1, &mut l2);
            let r = (surface.point(q) - x0).norm();
            let weight_r = weight * 4.0 * PI * r * r;
            let (sing, lin) = acc.split_at_mut(n);
            for (a, la) in l1.iter().enumerate() {
                if *la == 0.0 {
                    continue;
                }
                let (f, g) = (weight * la, weight_r * la);
                let range = a * n2..(a + 1) * n2;
                for ((s, t), lb) in sing[range.clone()].iter_mut().zip(&mut lin[range]).zip(&l2) {
                    *s += f * lb;
                    *t += g * lb;
                }
            }
        });
        for j in 0..n {
            if j != i {
                let r = (x0 - rule.nodes[j]).norm();
                acc[j] -= rule.weights[j] / (4.0 * PI * r);
                acc[n + j] -= rule.weights[j] * r;
            }
        }
        acc
    });
    (
        DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        Some(DMatrix::from_fn(n, n, |i, j| rows[i][n + j])),
    )
}

/// Barycentric Lagrange basis on the tensor grid of a rule, node index
/// `a * n2 + b`.
struct LagrangeGrid {
    x1: Vec<f64>,
    x2: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl LagrangeGrid {
    fn new(rule: &QuadratureRule) -> Self {
        let p = rule.order;
        let x1: Vec<f64> = (0..p).map(|a| rule.param_nodes[a * p][0]).collect();
        let x2: Vec<f64> = (0..p).map(|b| rule.param_nodes[b][1]).collect();
        let bary = |x: &[f64]| -> Vec<f64> {
            (0..x.len())
                .map(|a| {
                    1.0 / (0..x.len())
                        .filter(|&b| b != a)
                        .map(|b| x[a] - x[b])
                        .product::<f64>()
                })
                .collect()
        };
        let (w1, w2) = (bary(&x1), bary(&x2));
        Self { x1, x2, w1, w2 }
    }

    fn eval(&self, q: [f64; 2], l1: &mut [f64], l2: &mut [f64]) {
        barycentric(&self.x1, &self.w1, q[0], l1);
        barycentric(&self.x2, &self.w2, q[1], l2);
    }
}

fn barycentric(x: &[f64], w: &[f64], t: f64, out: &mut [f64]) {
    if let Some(hit) = x.iter().position(|xa| *xa == t) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[hit] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for ((o, xa), wa) in out.iter_mut().zip(x).zip(w) {
        *o = wa / (t - xa);
        denom += *o;
    }
    out.iter_mut().for_each(|v| *v /= denom);
}

/// Quadrature for `int_Sigma g(x') / (4 pi |x(q0) - x'|) dSigma'`: the
/// parameter rectangle is split into four triangles with apex `q0` (Duffy
/// transform) and a sinh map along each edge resolves apexes close to the
/// boundary. Calls `visit(q, weight)` with the Coulomb factor included.
fn duffy_points(
    surface: &Surface,
    domain: &ParamDomain,
    q0: [f64; 2],
    order: usize,
    mut visit: impl FnMut([f64; 2], f64),
) {
    let (a1, b1) = domain.q1;
    let (mut a2, mut b2) = domain.q2;
    if domain.periodic_q2 {
        let half = 0.5 * (b2 - a2);
        a2 = q0[1] - half;
        b2 = q0[1] + half;
    }
    let corners = [[a1, a2], [b1, a2], [b1, b2], [a1, b2]];
    let (x0, t1, t2) = surface.eval(q0);
    let (sx, sw) = gauss_legendre_on(order.max(16) + 8, 0.0, 1.0);
    let n_angular = order / 2 + 20;
    for e in 0..4 {
        let ca = corners[e];
        let cb = corners[(e + 1) % 4];
        let da = [ca[0] - q0[0], ca[1] - q0[1]];
        let edge = [cb[0] - ca[0], cb[1] - ca[1]];
        let area = (da[0] * edge[1] - da[1] * edge[0]).abs();
        if area < 1e-300 {
            continue;
        }
        // closest edge point to the apex in the local metric
        let va = t1 * da[0] + t2 * da[1];
        let ve = t1 * edge[0] + t2 * edge[1];
        let foot = (-va.dot(&ve) / ve.norm_squared()).clamp(0.0, 1.0);
        let eps = ((va + ve * foot).norm() / ve.norm()).max(1e-14);
        for (lo, hi) in [(0.0, foot), (foot, 1.0)] {
            let len = hi - lo;
            if len <= 0.0 {
                continue;
            }
            let umax = (len / eps).asinh();
            let (ux, uw) = gauss_legendre_on(n_angular, 0.0, umax);
            for (u, wu) in ux.iter().zip(&uw) {
                let d = eps * u.sinh();
                let t = if lo == foot { foot + d } else { foot - d };
                let dt = eps * u.cosh() * wu;
                let dir = [da[0] + t * edge[0], da[1] + t * edge[1]];
                for (s, ws) in sx.iter().zip(&sw) {
                    let q = [q0[0] + s * dir[0], q0[1] + s * dir[1]];
                    let (x, u1, u2) = surface.eval(q);
                    let r = (x - x0).norm();
                    if r == 0.0 {
                        continue;
                    }
                    let jac = u1.cross(&u2).norm();
                    visit(q, jac * area * s / (4.0 * PI * r) * ws * dt);
                }
            }
        }
    }
}

/// `int_Sigma 1/(4 pi |x(q0) - x'|) dSigma'`.
#[cfg(test)]
pub(crate) fn coulomb_integral_at(surface: &Surface, domain: &ParamDomain, q0: [f64; 2]) -> f64 {
    let mut total = 0.0;
    duffy_points(surface, domain, q0, 16, |_, w| total += w);
    total
}

/// Rank-sum operator `A_l(z) = sum_{n != l, n <= n_max} Gamma_n(z)^-1 w_n <w_n, .>`
/// as factors `U V^T` with `U = [w_n / Gamma_n]`, `V = [w_n o weights]`.
#[derive(Debug, Clone)]
pub struct RankSum {
    pub u: CMatrix,
    pub v: CMatrix,
    pub modes: Vec<u32>,
}

impl RankSum {
    pub fn to_operator(&self, weights: Vec<f64>) -> DiscreteKernelOperator {
        DiscreteKernelOperator::from_weighted(&self.u * self.v.transpose(), weights)
    }
}

fn rank_sum(
    z: SpectralPoint,
    skip: Option<u32>,
    rule: &QuadratureRule,
    ctx: SheetContext,
    params: &SpectralParams,
    cfg: &KernelEvalConfig,
) -> Result<RankSum> {
    let mut us = Vec::new();
    let mut vs = Vec::new();
    let mut modes = Vec::new();
    for n in 1..=cfg.n_max {
        if Some(n) == skip {
            continue;
        }
        let w = mode_vector(z, n, rule, ctx)?;
        if w.is_zero() {
            continue;
        }
        let g = gamma_n(z, n, ctx, params)?;
        if g.norm() < POLE_COLLISION {
            return Err(Error::PoleCollision {
                n,
                magnitude: g.norm(),
            });
        }
        us.push(&w.values / g);
        vs.push(w.values.component_mul(&CVector::from_iterator(
            rule.len(),
            rule.weights.iter().map(|w| Complex64::new(*w, 0.0)),
        )));
        modes.push(n);
    }
    let n = rule.len();
    let (u, v) = if us.is_empty() {
        (CMatrix::zeros(n, 0), CMatrix::zeros(n, 0))
    } else {
        (CMatrix::from_columns(&us), CMatrix::from_columns(&vs))
    };
    Ok(RankSum { u, v, modes })
}

pub fn assemble_a_l(
    z: impl Into<SpectralPoint>,
    l: u32,
    rule: &QuadratureRule,
    ctx: SheetContext,
    params: &SpectralParams,
    cfg: &KernelEvalConfig,
) -> Result<DiscreteKernelOperator> {
    Ok(rank_sum(z.into(), Some(l), rule, ctx, params, cfg)?.to_operator(rule.weights.clone()))
}

/// LU factors with adjoint solves and a 1-norm condition estimate.
struct Factorized {
    lu: LU<Complex64, Dyn, Dyn>,
    l: CMatrix,
    u: CMatrix,
    norm1: f64,
}

impl Factorized {
    fn new(m: CMatrix) -> Self {
        let norm1 = (0..m.ncols())
            .map(|j| m.column(j).iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu = m.lu();
        let l = lu.l();
        let u = lu.u();
        Self { lu, l, u, norm1 }
    }

    fn solve(&self, b: &CMatrix) -> Option<CMatrix> {
        self.lu.solve(b)
    }

    fn solve_adjoint(&self, b: &CVector) -> Option<CVector> {
        let v = self.u.ad_solve_upper_triangular(b)?;
        let mut x = self.l.ad_solve_lower_triangular(&v)?;
        self.lu.p().inv_permute_rows(&mut x);
        Some(x)
    }

    /// Hager-Higham estimate of `||A||_1 ||A^-1||_1`.
    fn condition(&self) -> f64 {
        let n = self.l.nrows();
        if n == 0 {
            return 1.0;
        }
        let mut x = CVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
        let mut estimate = 0.0;
        for _ in 0..5 {
            let Some(y) = self.lu.solve(&x) else {
                return f64::INFINITY;
            };
            estimate = y.iter().map(|v| v.norm()).sum::<f64>();
            let sign = y.map(|v| {
                if v.norm() == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    v / v.norm()
                }
            });
            let Some(zv) = self.solve_adjoint(&sign) else {
                return f64::INFINITY;
            };
            let (jmax, zmax) = zv
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            let zx = zv.dotc(&x).re;
            if zmax <= zx {
                break;
            }
            x = CVector::zeros(n);
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        if !estimate.is_finite() {
            return f64::INFINITY;
        }
        estimate * self.norm1
    }
}

/// Value of `eta_l` with the conditioning of the two solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaValue {
    pub value: Complex64,
    /// Condition estimate of `I - beta R`.
    pub condition_free: f64,
    /// Condition estimate of the capacitance matrix of `I - beta G A_l`.
    pub condition_rank: f64,
}

/// Everything needed to evaluate `eta_l` for one impurity `Sigma_delta`.
#[derive(Debug, Clone)]
pub struct BsSystem {
    params: SpectralParams,
    surface: Surface,
    rule: QuadratureRule,
    l: u32,
    ctx: SheetContext,
    cfg: KernelEvalConfig,
    free: FreeOperatorCache,
}

impl BsSystem {
    /// `n_max` defaults to `max(k + 40, ceil(-ln(tail_tol) / r_min))`.
    pub fn new(
        params: SpectralParams,
        surface: &Surface,
        order: usize,
        l: u32,
        tail_tol: f64,
        n_max: Option<u32>,
        exec: Execution,
    ) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidParameter {
                name: "l",
                detail: "mode index must be >= 1".into(),
            });
        }
        let eps = params.eigenvalue(l);
        let Some(k) = spectral_window(eps)? else {
            return Err(Error::InvalidParameter {
                name: "l",
                detail: format!("eigenvalue {eps} lies below the continuum"),
            });
        };
        let ctx = SheetContext::second(k)?;
        surface.validate()?;
        let rule = build_quadrature(surface, order)?;
        let cfg = match n_max {
            Some(n) => KernelEvalConfig::new(n.max(l + 1), tail_tol)?,
            None => KernelEvalConfig::for_surface(surface.r_min(), k, tail_tol)?,
        };
        let free =
            FreeOperatorCache::new(surface, &rule, params.eigenvalue_point(l), ctx, &cfg, exec)?;
        Ok(Self {
            params,
            surface: surface.clone(),
            rule,
            l,
            ctx,
            cfg,
            free,
        })
    }

    pub fn params(&self) -> &SpectralParams {
        &self.params
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn k(&self) -> u32 {
        self.ctx.k()
    }

    pub fn ctx(&self) -> SheetContext {
        self.ctx
    }

    pub fn config(&self) -> &KernelEvalConfig {
        &self.cfg
    }

    pub fn free_cache(&self) -> &FreeOperatorCache {
        &self.free
    }

    /// `epsilon_l` as an exact anchor/offset pair.
    pub fn eigenvalue(&self) -> SpectralPoint {
        self.params.eigenvalue_point(self.l)
    }

    pub fn free_operator(&self, z: impl Into<SpectralPoint>) -> Result<DiscreteKernelOperator> {
        self.free.assemble(z, self.ctx)
    }

    pub fn mode(&self, z: impl Into<SpectralPoint>, n: u32) -> Result<ModeVector> {
        mode_vector(z, n, &self.rule, self.ctx)
    }

    pub fn a_l(&self, z: impl Into<SpectralPoint>) -> Result<RankSum> {
        rank_sum(
            z.into(),
            Some(self.l),
            &self.rule,
            self.ctx,
            &self.params,
            &self.cfg,
        )
    }

    pub fn gamma_l(&self, z: impl Into<SpectralPoint>) -> Result<Complex64> {
        gamma_n(z, self.l, self.ctx, &self.params)
    }

    /// `eta_l(z) = Gamma_l(z) - beta <w_l, T_l w_l>` with
    /// `T_l = (I - beta G A_l)^-1 G`, `G = (I - beta R)^-1`.
    pub fn eta(&self, z: impl Into<SpectralPoint>) -> Result<EtaValue> {
        let z = z.into();
        let beta = Complex64::new(self.params.beta(), 0.0);
        let r = self.free_operator(z)?;
        let a = self.a_l(z)?;
        let wl = self.mode(z, self.l)?;
        let gamma = self.gamma_l(z)?;
        let n = r.len();
        let fact = Factorized::new(r.identity_minus(beta));
        let condition_free = fact.condition();
        if condition_free > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                what: "I - beta R",
                condition: condition_free,
            });
        }
        let m = a.u.ncols();
        let mut rhs = CMatrix::zeros(n, m + 1);
        rhs.column_mut(0).copy_from(&wl.values);
        if m > 0 {
            rhs.columns_mut(1, m).copy_from(&a.u);
        }
        let solved = fact.solve(&rhs).ok_or(Error::IllConditioned {
            what: "I - beta R",
            condition: f64::INFINITY,
        })?;
        let g = solved.column(0).into_owned();
        let p = solved.columns(1, m).into_owned();
        // (I - beta G U V^T)^-1 g = g + beta P C^-1 V^T g, C = I - beta V^T P
        let mut tw = g.clone();
        let mut condition_rank = 1.0;
        if m > 0 {
            let vt = a.v.transpose();
            let cap = CMatrix::identity(m, m) - (&vt * &p) * beta;
            let inv = cap.clone().try_inverse().ok_or(Error::IllConditioned {
                what: "I - beta G A_l",
                condition: f64::INFINITY,
            })?;
            condition_rank = matrix_norm1(&cap) * matrix_norm1(&inv);
            if condition_rank > CONDITION_LIMIT {
                return Err(Error::IllConditioned {
                    what: "I - beta G A_l",
                    condition: condition_rank,
                });
            }
            tw += &p * (inv * (&vt * &g)) * beta;
        }
        let theta = pair(&wl.values, &tw, &self.rule.weights);
        Ok(EtaValue {
            value: gamma - beta * theta,
            condition_free,
            condition_rank,
        })
    }

    /// Dense `I - beta R_alpha(z)` with every mode `n <= n_max`, including `l`.
    pub fn dressed_matrix(&self, z: impl Into<SpectralPoint>) -> Result<CMatrix> {
        let z = z.into();
        let beta = Complex64::new(self.params.beta(), 0.0);
        let r = self.free_operator(z)?;
        let all = rank_sum(z, None, &self.rule, self.ctx, &self.params, &self.cfg)?;
        let dressed = r.matrix() + &all.u * all.v.transpose();
        let n = r.len();
        Ok(CMatrix::identity(n, n) - dressed * beta)
    }

    /// `det(I - beta R_alpha(z))` of the weighted Nyström matrix.
    pub fn determinant(&self, z: impl Into<SpectralPoint>) -> Result<Complex64> {
        Ok(self.dressed_matrix(z)?.lu().determinant())
    }
}

fn matrix_norm1(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(I - beta R)^-1` by dense solve.
pub fn resolvent_direct(r: &DiscreteKernelOperator, beta: f64) -> Result<CMatrix> {
    let fact = Factorized::new(r.identity_minus(Complex64::new(beta, 0.0)));
    let cond = fact.condition();
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            what: "I - beta R",
            condition: cond,
        });
    }
    let n = r.len();
    fact.solve(&CMatrix::identity(n, n))
        .ok_or(Error::IllConditioned {
            what: "I - beta R",
            condition: f64::INFINITY,
        })
}

/// `sum_{m=0}^{terms} (beta R)^m`.
pub fn resolvent_neumann(r: &DiscreteKernelOperator, beta: f64, terms: usize) -> CMatrix {
    let n = r.len();
    let step = r.matrix() * Complex64::new(beta, 0.0);
    let mut power = CMatrix::identity(n, n);
    let mut sum = power.clone();
    for _ in 0..terms {
        power = &step * power;
        sum += &power;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, SurfaceFamily};
    use crate::greens::layer_green;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn disk(center: Point, normal: Point, radius: f64, delta: f64) -> Surface {
        let f = SurfaceFamily::disk(center, normal, radius).unwrap();
        Surface::new("disk", f).unwrap().scale(delta).unwrap()
    }

    fn cfg() -> KernelEvalConfig {
        KernelEvalConfig::new(40, 1e-12).unwrap()
    }

    fn params() -> SpectralParams {
        SpectralParams::new(0.0, 0.4).unwrap()
    }

    /// `int_0^a int_0^b dx dy / sqrt(x^2 + y^2)`.
    fn corner_integral(a: f64, b: f64) -> f64 {
        a * (b / a).asinh() + b * (a / b).asinh()
    }

    #[test]
    fn coulomb_integral_on_rectangle() {
        let f = SurfaceFamily::rectangle(Point::new(2.0, 0.0, 1.5), Point::z(), 0.6, 0.4, None)
            .unwrap();
        let s = Surface::new("rect", f).unwrap();
        let d = s.domain().unwrap();
        for q in [[0.0, 0.0], [0.29, -0.19], [-0.1, 0.199_99], [0.2999, 0.0]] {
            let got = coulomb_integral_at(&s, &d, q);
            let (u1, u2) = (0.3 + q[0], 0.3 - q[0]);
            let (v1, v2) = (0.2 + q[1], 0.2 - q[1]);
            let exact = (corner_integral(u1, v1)
                + corner_integral(u1, v2)
                + corner_integral(u2, v1)
                + corner_integral(u2, v2))
                / (4.0 * PI);
            assert!(((got - exact) / exact).abs() < 1e-8, "{q:?} {got} {exact}");
        }
    }

    #[test]
    fn coulomb_integral_on_disk() {
        let radius = 0.5;
        let center = Point::new(1.5, 0.0, 1.0);
        let s = disk(center, Point::new(0.2, 0.3, 1.0), radius, 1.0);
        let d = s.domain().unwrap();
        for q in [[0.01, 0.03], [0.5, -0.4], [0.98, 0.9], [-0.999, 0.2]] {
            let got = coulomb_integral_at(&s, &d, q);
            // (1/4pi) int_0^{2pi} R(theta) dtheta, R the distance to the rim
            let p = (s.point(q) - center).norm();
            let (x, w) = gauss_legendre_on(2000, 0.0, 2.0 * PI);
            let exact: f64 = x
                .iter()
                .zip(&w)
                .map(|(t, w)| {
                    let pu = p * t.cos();
                    w * (-pu + (radius * radius - p * p + pu * pu).sqrt())
                })
                .sum::<f64>()
                / (4.0 * PI);
            assert!(((got - exact) / exact).abs() < 1e-8, "{q:?} {got} {exact}");
        }
    }

    #[test]
    fn product_weights_integrate_polynomials() {
        let s = disk(
            Point::new(1.5, 0.0, 1.0),
            Point::new(0.2, 0.3, 1.0),
            0.5,
            1.0,
        );
        let rule = build_quadrature(&s, 6).unwrap();
        let d = s.domain().unwrap();
        let (corr, _) = singular_correction(&s, &rule, Execution::Sequential);
        let f = |q: [f64; 2]| q[0].powi(3) * q[1] - 2.0 * q[1].powi(5) + 0.5;
        for i in [0, 7, 20] {
            let q0 = rule.param_nodes[i];
            let mut exact = 0.0;
            duffy_points(&s, &d, q0, 48, |q, w| exact += w * f(q));
            let mut got = 0.0;
            for j in 0..rule.len() {
                let mut wij = corr[(i, j)];
                if j != i {
                    wij += rule.weights[j] / (4.0 * PI * (rule.nodes[i] - rule.nodes[j]).norm());
                }
                got += wij * f(rule.param_nodes[j]);
            }
            assert!((got - exact).abs() < 1e-10 * exact.abs(), "{got} {exact}");
        }
    }

    #[test]
    fn far_single_nodes_match_kernel() {
        let nodes = vec![Point::new(1.0, 0.0, 1.0), Point::new(3.0, 1.0, 2.0)];
        let s = Surface::new(
            "two",
            SurfaceFamily::tabulated(nodes.clone(), vec![0.1, 0.2]).unwrap(),
        )
        .unwrap();
        let rule = build_quadrature(&s, 2).unwrap();
        let z = c(-2.0, 0.0);
        let op = assemble_free(z, &s, &rule, SheetContext::first(), &cfg()).unwrap();
        let g = layer_green(z, &nodes[0], &nodes[1], SheetContext::first(), &cfg()).unwrap();
        assert!((op.kernel(0, 1) - g).norm() < 1e-14);
        assert!((op.kernel(1, 0) - g).norm() < 1e-14);
    }

    #[test]
    fn free_operator_positive_below_spectrum() {
        let s = disk(Point::new(1.0, 0.0, 1.2), Point::z(), 0.5, 0.3);
        let rule = build_quadrature(&s, 12).unwrap();
        let op = assemble_free(-5.0, &s, &rule, SheetContext::first(), &cfg()).unwrap();
        let s = op.symmetrized().map(|v| v.re);
        assert!(op.symmetrized().iter().all(|v| v.im == 0.0));
        let eig = ((&s + s.transpose()) * 0.5).symmetric_eigen();
        assert!(
            eig.eigenvalues.iter().all(|e| *e > 0.0),
            "{}",
            eig.eigenvalues.min()
        );
    }

    #[test]
    fn free_operator_norm_converges() {
        let s = disk(Point::new(1.0, 0.0, 1.2), Point::z(), 0.5, 0.3);
        let norm = |p| {
            let rule = build_quadrature(&s, p).unwrap();
            assemble_free(-5.0, &s, &rule, SheetContext::first(), &cfg())
                .unwrap()
                .operator_norm()
        };
        let (a, b) = (norm(12), norm(24));
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn execution_modes_agree() {
        let s = disk(Point::new(1.0, 0.0, 1.2), Point::z(), 0.5, 0.2);
        let rule = build_quadrature(&s, 6).unwrap();
        let ctx = SheetContext::second(1).unwrap();
        let z = c(2.7, -0.01);
        let par = FreeOperatorCache::new(&s, &rule, z, ctx, &cfg(), Execution::Parallel).unwrap();
        let seq = par.clone().with_execution(Execution::Sequential);
        let a = par.assemble(z, ctx).unwrap();
        let b = seq.assemble(z, ctx).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn mode_vectors_vanish_on_nodal_plane() {
        let s = disk(Point::new(1.0, 0.0, PI / 2.0), Point::z(), 0.5, 0.1);
        let rule = build_quadrature(&s, 6).unwrap();
        for n in [2, 4, 6] {
            let w = mode_vector(c(2.7, 0.0), n, &rule, SheetContext::first()).unwrap();
            assert!(w.values.iter().all(|v| v.norm() < 1e-15));
        }
        let a = assemble_a_l(
            c(2.7, -0.01),
            1,
            &rule,
            SheetContext::second(1).unwrap(),
            &params(),
            &cfg(),
        )
        .unwrap();
        // odd modes survive, so only check that even ones were dropped
        let rs = rank_sum(
            c(2.7, -0.01).into(),
            Some(1),
            &rule,
            SheetContext::second(1).unwrap(),
            &params(),
            &cfg(),
        )
        .unwrap();
        assert!(rs.modes.iter().all(|n| n % 2 == 1));
        assert_eq!(a.len(), rule.len());
    }

    #[test]
    fn a_l_vanishes_when_all_modes_do() {
        // node on x3 = pi/2 keeping only mode 2 besides l = 1
        let nodes = vec![Point::new(1.0, 0.0, PI / 2.0)];
        let s = Surface::new("pt", SurfaceFamily::tabulated(nodes, vec![0.01]).unwrap()).unwrap();
        let rule = build_quadrature(&s, 2).unwrap();
        let cfg = KernelEvalConfig::new(2, 1e-12).unwrap();
        let a = assemble_a_l(
            c(2.7, -0.01),
            1,
            &rule,
            SheetContext::second(1).unwrap(),
            &params(),
            &cfg,
        )
        .unwrap();
        assert!(a.matrix().iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-15);
    }

    #[test]
    fn mode_vector_decay() {
        let s = disk(Point::new(1.0, 0.0, 1.2), Point::z(), 0.5, 0.2);
        let rule = build_quadrature(&s, 8).unwrap();
        let r_min = s.r_min();
        let z = c(2.7, -0.01);
        let ctx = SheetContext::second(1).unwrap();
        let norms: Vec<f64> = (2..=21)
            .map(|n| {
                mode_vector(z, n, &rule, ctx)
                    .unwrap()
                    .norm_sq(&rule.weights)
            })
            .collect();
        let cst = norms
            .iter()
            .enumerate()
            .map(|(i, v)| v * (2.0 * r_min * (i + 2) as f64).exp())
            .fold(0.0, f64::max);
        assert!(cst < 1.0, "{cst}");
    }

    #[test]
    fn mode_vector_scales_with_area() {
        let z = c(2.7, 0.0);
        let ctx = SheetContext::first();
        let base = disk(Point::new(1.0, 0.0, 1.2), Point::z(), 0.5, 1.0);
        let pts: Vec<(f64, f64)> = [0.02, 0.04, 0.08]
            .iter()
            .map(|d| {
                let s = base.scale(*d).unwrap();
                let rule = build_quadrature(&s, 8).unwrap();
                (
                    *d,
                    mode_vector(z, 2, &rule, ctx)
                        .unwrap()
                        .norm_sq(&rule.weights),
                )
            })
            .collect();
        let slope = (pts[2].1 / pts[0].1).ln() / (pts[2].0 / pts[0].0).ln();
        assert!((slope - 2.0).abs() < 0.05, "{slope}");
    }

    fn small_system(beta: f64) -> BsSystem {
        let s = disk(
            Point::new(1.0, 0.0, 1.2),
            Point::new(0.3, 0.1, 1.0),
            0.5,
            0.1,
        );
        BsSystem::new(
            SpectralParams::new(0.0, beta).unwrap(),
            &s,
            6,
            2,
            1e-12,
            None,
            Execution::default(),
        )
        .unwrap()
    }

    #[test]
    fn eta_without_surface_is_gamma() {
        let sys = small_system(0.4);
        let e = sys.eigenvalue();
        // scale the whole computation away: an impurity on the nodal plane of l = 2
        let s = disk(Point::new(1.0, 0.0, PI / 2.0), Point::z(), 0.5, 0.1);
        let sys2 =
            BsSystem::new(*sys.params(), &s, 6, 2, 1e-12, None, Execution::default()).unwrap();
        let eta = sys2.eta(e).unwrap().value;
        assert!(eta.norm() < 1e-15, "{eta}");
        let z = e.shifted(c(1e-3, -1e-3));
        let diff = sys2.eta(z).unwrap().value - sys2.gamma_l(z).unwrap();
        assert_eq!(diff, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn eta_is_analytic() {
        let sys = small_system(0.4);
        let z = sys.eigenvalue().shifted(c(2e-3, -1e-3));
        let h = 1e-6;
        let f = |dz: Complex64| sys.eta(z.shifted(dz)).unwrap().value;
        let dx = (f(c(h, 0.0)) - f(c(-h, 0.0))) / (2.0 * h);
        let dy = (f(c(0.0, h)) - f(c(0.0, -h))) / c(0.0, 2.0 * h);
        assert!((dx - dy).norm() / dx.norm() < 1e-5, "{dx} {dy}");
    }

    #[test]
    fn determinant_trivial_for_zero_beta_limit() {
        let sys = small_system(1e-300);
        let z = sys.eigenvalue().shifted(c(1e-3, -1e-3));
        let d = sys.determinant(z).unwrap();
        assert!((d - 1.0).norm() < 1e-12);
    }

    #[test]
    fn determinant_edge_of_wedge() {
        let s = disk(
            Point::new(1.0, 0.0, 1.2),
            Point::new(0.3, 0.1, 1.0),
            0.5,
            0.1,
        );
        let params = SpectralParams::new(0.0, 0.4).unwrap();
        let first = {
            let mut sys =
                BsSystem::new(params, &s, 6, 2, 1e-12, None, Execution::default()).unwrap();
            sys.ctx = SheetContext::first_with_window(1);
            sys
        };
        let second = BsSystem::new(params, &s, 6, 2, 1e-12, None, Execution::default()).unwrap();
        let lambda = 2.5;
        let eps = 1e-7;
        let a = first.determinant(c(lambda, eps)).unwrap();
        let b = second.determinant(c(lambda, -eps)).unwrap();
        assert!((a - b).norm() < 1e-5, "{a} {b}");
    }

    #[test]
    fn factorization_identity() {
        let sys = small_system(0.4);
        let z = sys.eigenvalue().shifted(c(2e-3, -1e-3));
        let beta = c(0.4, 0.0);
        let w = sys.rule().weights.clone();
        let n = w.len();
        let r = sys.free_operator(z).unwrap();
        let a = sys.a_l(z).unwrap().to_operator(w.clone());
        let wl = sys.mode(z, sys.l()).unwrap();
        let gl = sys.gamma_l(z).unwrap();
        let g = resolvent_direct(&r, 0.4).unwrap();
        let ga = &g * a.matrix();
        let t = (CMatrix::identity(n, n) - &ga * beta)
            .try_inverse()
            .unwrap()
            * &g;
        let tw = &t * &wl.values;
        let wv = wl
            .values
            .component_mul(&CVector::from_iterator(n, w.iter().map(|v| c(*v, 0.0))));
        let rank_one = &tw * wv.transpose() * (beta / gl);
        let lhs = r.identity_minus(beta)
            * (CMatrix::identity(n, n) - &ga * beta)
            * (CMatrix::identity(n, n) - rank_one);
        let dressed = r.matrix() + a.matrix() + &wl.values * wv.transpose() / gl;
        let rhs = CMatrix::identity(n, n) - dressed * beta;
        // apply both sides to fixed pseudo-random vectors
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let v = CVector::from_fn(n, |_, _| c(next(), next()));
            let x = &lhs * &v;
            let y = &rhs * &v;
            assert!((&x - &y).norm() / y.norm() < 1e-9);
        }
    }

    #[test]
    fn determinant_factorizes_through_eta() {
        let sys = small_system(0.4);
        let z = sys.eigenvalue().shifted(c(2e-3, -1e-3));
        let beta = c(0.4, 0.0);
        let r = sys.free_operator(z).unwrap();
        let a = sys.a_l(z).unwrap().to_operator(sys.rule().weights.clone());
        let m = CMatrix::identity(r.len(), r.len()) - (r.matrix() + a.matrix()) * beta;
        let eta = sys.eta(z).unwrap().value;
        let expected = m.lu().determinant() * eta / sys.gamma_l(z).unwrap();
        let det = sys.determinant(z).unwrap();
        assert!((det - expected).norm() / det.norm() < 1e-9);
    }

    #[test]
    fn bilinear_pairing_is_hermitian_below_spectrum() {
        let sys = small_system(0.4);
        let ctx = SheetContext::first();
        let z = c(-0.5, 0.0);
        let w = mode_vector(z, 2, sys.rule(), ctx).unwrap();
        let f = CVector::from_fn(w.values.len(), |i, _| c(i as f64, 1.0 - i as f64));
        let bil = pair(&w.values, &f, &sys.rule().weights);
        let herm: Complex64 = w
            .values
            .iter()
            .zip(f.iter())
            .zip(&sys.rule().weights)
            .map(|((a, b), wt)| a.conj() * b * *wt)
            .sum();
        assert!((bil - herm).norm() < 1e-15 * bil.norm().max(1.0));
    }

    #[test]
    fn neumann_matches_direct() {
        let s = disk(Point::new(1.0, 0.0, 1.2), Point::z(), 0.5, 0.2);
        let rule = build_quadrature(&s, 8).unwrap();
        let ctx = SheetContext::second(1).unwrap();
        let r = assemble_free(c(2.7, -0.01), &s, &rule, ctx, &cfg()).unwrap();
        let beta = 0.25 / r.operator_norm();
        let direct = resolvent_direct(&r, beta).unwrap();
        let series = resolvent_neumann(&r, beta, 40);
        assert!(
            (direct - series)
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max)
                < 1e-8
        );
    }

    #[test]
    fn composition_is_associative() {
        let s = disk(Point::new(1.0, 0.0, 1.2), Point::z(), 0.5, 0.2);
        let rule = build_quadrature(&s, 5).unwrap();
        let ctx = SheetContext::second(1).unwrap();
        let a = assemble_free(c(2.7, -0.01), &s, &rule, ctx, &cfg()).unwrap();
        let b = assemble_a_l(c(2.7, -0.01), 2, &rule, ctx, &params(), &cfg()).unwrap();
        let f = CVector::from_fn(rule.len(), |i, _| c((i as f64).sin(), 0.5));
        let lhs = a.compose(&b).apply(&f);
        let rhs = a.apply(&b.apply(&f));
        assert!((lhs - &rhs).norm() < 1e-12 * rhs.norm());
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let p = Point::new(1.0, 0.0, 1.0);
        let s = Surface::new(
            "dup",
            SurfaceFamily::tabulated(vec![p, p], vec![0.1, 0.1]).unwrap(),
        )
        .unwrap();
        let rule = build_quadrature(&s, 2).unwrap();
        assert!(matches!(
            assemble_free(-2.0, &s, &rule, SheetContext::first(), &cfg()),
            Err(Error::Coincident)
        ));
    }
}
