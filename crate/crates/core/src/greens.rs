//! The free layer kernel `G(z; x, x')` on both sheets, transverse modes and
//! the wire vectors `omega_n`.
//!
//! # Evaluation scheme
//!
//! The mode series `(1/2pi) sum_n K0(kappa_n rho) chi_n chi_n'` converges like
//! `1/n^2` near the diagonal, so it is never summed directly. With
//! `s = -z`, each term `K0(rho sqrt(n^2 + s))` is expanded in Taylor form
//! around a reference `s0 = c0^2`:
//!
//! ```text
//! d^j/ds^j K0(rho sqrt(n^2 + s)) = (-rho / (2 kappa))^j K_j(rho kappa)
//! ```
//!
//! Poisson summation turns the sum of each Taylor coefficient over modes into
//! a rapidly convergent image series of `d^j/ds^j exp(-sqrt(s) R) / R`. What
//! is left, term minus Taylor polynomial, decays like `n^-(2J+2)`, and the
//! first few modes (including every second-sheet correction) are evaluated
//! exactly. The only singular piece is the `m = 0` image `exp(-c0 r)/(4 pi r)`.
//!
//! The closed-form cosine sum [`k0_cosine_sum`] gives an independent route
//! ([`layer_green_split`]) used for cross-checks.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{wire_distance, Point};
use crate::specfun::{
    bessel_k_real_seq, kappa_n_on, z0_from_kappa, z0_kernel, SheetContext, SpectralPoint,
    EULER_GAMMA, PSI_1,
};

/// Order of the Taylor subtraction in `s = -z`.
pub const TAYLOR_ORDER: usize = 4;
const NJ: usize = TAYLOR_ORDER + 1;

/// Reference decay constant `c0` of the subtracted image series.
pub const REFERENCE_DECAY: f64 = 1.0;

/// Images `m = -IMAGE_COUNT..=IMAGE_COUNT`; `exp(-2 pi c0 m)` is negligible beyond.
const IMAGE_COUNT: i32 = 9;

/// Below this `|x_ - x_'|` the pair is treated as vertically aligned.
const RHO_EPS: f64 = 1e-12;

/// Terms used by the Euler-Maclaurin tail of the lattice sums.
const LATTICE_TERMS: usize = 200;

/// `chi_n(x3) = sqrt(2/pi) sin(n x3)`.
pub fn chi_n(n: u32, x3: f64) -> f64 {
    (2.0 / PI).sqrt() * (f64::from(n) * x3).sin()
}

/// Truncation controls for mode series.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KernelEvalConfig {
    /// Highest wire mode kept in rank-one sums.
    pub n_max: u32,
    /// Absolute target for every truncated tail.
    pub tail_tol: f64,
}

impl KernelEvalConfig {
    pub fn new(n_max: u32, tail_tol: f64) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidParameter {
                name: "n_max",
                detail: "must be >= 1".into(),
            });
        }
        if !(tail_tol.is_finite() && tail_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tail_tol",
                detail: format!("must be positive, got {tail_tol}"),
            });
        }
        Ok(Self { n_max, tail_tol })
    }

    /// `max(k + 40, ceil(-ln(tail_tol) / r_min))`, so `exp(-r_min n_max) < tail_tol`.
    pub fn for_surface(r_min: f64, k: u32, tail_tol: f64) -> Result<Self> {
        let by_decay = (-tail_tol.ln() / r_min).ceil().max(1.0) as u32;
        Self::new((k + 40).max(by_decay), tail_tol)
    }
}

/// Precomputed `z`-independent data of one point pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairStatic {
    rho: f64,
    x3: f64,
    x3p: f64,
    /// `1/2 (S_j(a-) - S_j(a+)) - sum_{n <= N} D_n^(j) chi_n chi_n'`.
    coeff: [f64; NJ],
}

/// Kernel evaluator with a fixed number of exactly summed modes.
#[derive(Debug, Clone)]
pub struct LayerKernel {
    modes: u32,
    tail_constant: f64,
}

impl LayerKernel {
    /// Chooses the mode count so the Taylor remainder tail at `z_ref` stays
    /// below `cfg.tail_tol`.
    pub fn new(cfg: &KernelEvalConfig, z_ref: Complex64, ctx: SheetContext) -> Self {
        let tail_constant = tail_constant();
        let delta = (-z_ref - REFERENCE_DECAY * REFERENCE_DECAY).norm();
        let mut modes = ctx.k() + 1;
        while modes < cfg.n_max.max(ctx.k() + 1)
            && taylor_tail_bound(tail_constant, delta, modes) > 0.1 * cfg.tail_tol
        {
            modes += 1;
        }
        Self {
            modes: modes.max(4),
            tail_constant,
        }
    }

    /// Number of modes summed exactly.
    pub fn modes(&self) -> u32 {
        self.modes
    }

    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    /// Bound on the neglected remainder at `z`.
    pub fn tail_bound(&self, z: Complex64) -> f64 {
        let delta = (-z - REFERENCE_DECAY * REFERENCE_DECAY).norm();
        taylor_tail_bound(self.tail_constant, delta, self.modes)
    }

    pub(crate) fn pair_static(&self, x: &Point, xp: &Point) -> PairStatic {
        let rho = (x.x - xp.x).hypot(x.y - xp.y);
        let a_minus = x.z - xp.z;
        let a_plus = x.z + xp.z;
        let mut coeff = [0.0; NJ];
        let sm = image_sums(rho, a_minus, false);
        let sp = image_sums(rho, a_plus, false);
        for j in 0..NJ {
            coeff[j] = 0.5 * (sm[j] - sp[j]);
        }
        subtract_taylor_modes(&mut coeff, rho, x.z, xp.z, self.modes);
        PairStatic {
            rho,
            x3: x.z,
            x3p: xp.z,
            coeff,
        }
    }

    /// Static data at coincident points, with `1/(4 pi r)` removed.
    pub(crate) fn diagonal_static(&self, x: &Point) -> PairStatic {
        let mut coeff = [0.0; NJ];
        let sm = image_sums(0.0, 0.0, true);
        let sp = image_sums(0.0, 2.0 * x.z, false);
        for j in 0..NJ {
            coeff[j] = 0.5 * (sm[j] - sp[j]);
        }
        subtract_taylor_modes(&mut coeff, 0.0, x.z, x.z, self.modes);
        PairStatic {
            rho: 0.0,
            x3: x.z,
            x3p: x.z,
            coeff,
        }
    }

    /// Per-`z` data shared by every pair.
    pub(crate) fn at(&self, z: SpectralPoint, ctx: SheetContext) -> Result<KernelAtZ> {
        let mut kappas = Vec::with_capacity(self.modes as usize);
        for n in 1..=self.modes {
            kappas.push((kappa_n_on(z, n, ctx)?, ctx.is_continued(n)));
        }
        let delta = -z.value() - REFERENCE_DECAY * REFERENCE_DECAY;
        let mut powers = [Complex64::new(0.0, 0.0); NJ];
        let mut p = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for (j, slot) in powers.iter_mut().enumerate() {
            if j > 0 {
                p *= delta;
                fact *= j as f64;
            }
            *slot = p / fact;
        }
        Ok(KernelAtZ { kappas, powers })
    }
}

/// `kappa_n(z)` and `Delta^j / j!` for one spectral point.
#[derive(Debug, Clone)]
pub(crate) struct KernelAtZ {
    kappas: Vec<(Complex64, bool)>,
    powers: [Complex64; NJ],
}

impl KernelAtZ {
    /// Kernel value from the pair's static data.
    pub(crate) fn eval(&self, pair: &PairStatic) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (c, p) in pair.coeff.iter().zip(&self.powers) {
            sum += p * *c;
        }
        let (s1, c1) = pair.x3.sin_cos();
        let (s1p, c1p) = pair.x3p.sin_cos();
        // sin(n x) by the three-term recurrence
        let (mut sa_prev, mut sa) = (0.0, s1);
        let (mut sb_prev, mut sb) = (0.0, s1p);
        let two_ca = 2.0 * c1;
        let two_cb = 2.0 * c1p;
        let vertical = pair.rho < RHO_EPS;
        for &(kappa, continued) in &self.kappas {
            let chi2 = (2.0 / PI) * sa * sb;
            let term = if vertical {
                let mut t = -(kappa * 0.5).ln() - EULER_GAMMA;
                if continued {
                    t += Complex64::new(0.0, PI);
                }
                t
            } else {
                z0_from_kappa(kappa, pair.rho, continued)
            };
            sum += term * chi2;
            let na = two_ca * sa - sa_prev;
            sa_prev = sa;
            sa = na;
            let nb = two_cb * sb - sb_prev;
            sb_prev = sb;
            sb = nb;
        }
        sum / (2.0 * PI)
    }
}

fn taylor_tail_bound(constant: f64, delta: f64, modes: u32) -> f64 {
    let j1 = (TAYLOR_ORDER + 1) as i32;
    let n = f64::from(modes);
    constant * delta.powi(j1) / (PI * PI * f64::from(2 * j1 - 1) * n.powi(2 * j1 - 1))
}

/// Remainder constant `C` in `|term - Taylor| <= C |Delta|^(J+1) / kappa0^(2J+2)`,
/// measured on the diagonal where the remainder is largest.
pub fn tail_constant() -> f64 {
    let delta: f64 = 1.5;
    let mut worst: f64 = 0.0;
    for n in 20..40u32 {
        let k0sq = f64::from(n * n) + REFERENCE_DECAY * REFERENCE_DECAY;
        let k0 = k0sq.sqrt();
        let kappa = (k0sq + delta).sqrt();
        let mut rem = (k0 / kappa).ln();
        let mut fact = 1.0;
        for j in 1..NJ {
            fact *= j as f64;
            let d = (-1f64).powi(j as i32) * fact / j as f64 / (2.0 * k0sq.powi(j as i32));
            rem -= delta.powi(j as i32) / fact * d;
        }
        worst = worst.max(rem.abs() * k0sq.powi(NJ as i32) / delta.powi(NJ as i32));
    }
    // margin over the asymptotic value 1/(2(J+1))
    1.5 * worst
}

/// `S_j(a) = sum_m d^j/ds^j [exp(-sqrt(s) R_m)/R_m]` at `s = c0^2`,
/// `R_m = sqrt(rho^2 + (a + 2 pi m)^2)`. With `regular`, the singular
/// `1/R_0` is removed from the `j = 0` entry.
fn image_sums(rho: f64, a: f64, regular: bool) -> [f64; NJ] {
    let c0 = REFERENCE_DECAY;
    let mut out = [0.0; NJ];
    for m in -IMAGE_COUNT..=IMAGE_COUNT {
        let shift = a + 2.0 * PI * f64::from(m);
        let r = rho.hypot(shift);
        let u = c0 * r;
        let e = (-u).exp();
        if m == 0 && regular {
            // (exp(-c0 r) - 1)/r -> -c0
            out[0] += if r > 0.0 { (e - 1.0) / r } else { -c0 };
        } else {
            out[0] += e / r;
        }
        out[1] += -e / (2.0 * c0);
        out[2] += e * (1.0 + u) / (4.0 * c0.powi(3));
        out[3] += -e * (3.0 + 3.0 * u + u * u) / (8.0 * c0.powi(5));
        out[4] += e * (15.0 + 15.0 * u + 6.0 * u * u + u * u * u) / (16.0 * c0.powi(7));
    }
    out
}

/// `coeff_j -= sum_{n <= modes} D_n^(j) chi_n chi_n'`.
fn subtract_taylor_modes(coeff: &mut [f64; NJ], rho: f64, x3: f64, x3p: f64, modes: u32) {
    let c0sq = REFERENCE_DECAY * REFERENCE_DECAY;
    let mut kj = [0.0; NJ];
    for n in 1..=modes {
        let chi2 = chi_n(n, x3) * chi_n(n, x3p);
        if chi2 == 0.0 {
            continue;
        }
        let k0sq = f64::from(n * n) + c0sq;
        let k0 = k0sq.sqrt();
        if rho < RHO_EPS {
            coeff[0] -= (-(k0 * 0.5).ln() - EULER_GAMMA) * chi2;
            let mut fact = 1.0;
            for (j, c) in coeff.iter_mut().enumerate().skip(1) {
                if j > 1 {
                    fact *= (j - 1) as f64;
                }
                let d = (-1f64).powi(j as i32) * fact / (2.0 * k0sq.powi(j as i32));
                *c -= d * chi2;
            }
        } else {
            bessel_k_real_seq(rho * k0, TAYLOR_ORDER, &mut kj);
            let ratio = -rho / (2.0 * k0);
            let mut p = 1.0;
            for j in 0..NJ {
                coeff[j] -= p * kj[j] * chi2;
                p *= ratio;
            }
        }
    }
}

/// Layer kernel `G(z; x, x')` on the sheet chosen by `ctx`.
pub fn layer_green(
    z: impl Into<SpectralPoint>,
    x: &Point,
    xp: &Point,
    ctx: SheetContext,
    cfg: &KernelEvalConfig,
) -> Result<Complex64> {
    let z = z.into();
    if x == xp {
        return Err(Error::Coincident);
    }
    let kernel = LayerKernel::new(cfg, z.value(), ctx);
    let pair = kernel.pair_static(x, xp);
    Ok(kernel.at(z, ctx)?.eval(&pair))
}

/// `G(z; x, x) - 1/(4 pi |x - x'|)` in the limit `x' -> x`.
pub fn layer_green_regular_diagonal(
    z: impl Into<SpectralPoint>,
    x: &Point,
    ctx: SheetContext,
    cfg: &KernelEvalConfig,
) -> Result<Complex64> {
    let z = z.into();
    let kernel = LayerKernel::new(cfg, z.value(), ctx);
    let pair = kernel.diagonal_static(x);
    Ok(kernel.at(z, ctx)?.eval(&pair))
}

/// `sum_{n>=1} K0(n rho) cos(n a)` in closed form.
pub fn k0_cosine_sum(rho: f64, a: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain {
            function: "k0_cosine_sum",
            detail: format!("rho must be positive, got {rho}"),
        });
    }
    let leading = PI / (2.0 * rho.hypot(a));
    let log_term = 0.5 * ((rho / (4.0 * PI)).ln() - PSI_1);
    let lattice = lattice_sum(rho, a) + lattice_sum(rho, -a);
    Ok(leading + log_term + 0.5 * PI * lattice)
}

/// `sum_{m>=1} [1/sqrt((2 pi m + a)^2 + rho^2) - 1/(2 pi m)]`, direct terms up
/// to `LATTICE_TERMS` plus an Euler-Maclaurin tail.
fn lattice_sum(rho: f64, a: f64) -> f64 {
    let term = |m: f64| {
        let y = 2.0 * PI * m + a;
        1.0 / y.hypot(rho) - 1.0 / (2.0 * PI * m)
    };
    let derivative = |m: f64| {
        let y = 2.0 * PI * m + a;
        let r2 = y * y + rho * rho;
        -2.0 * PI * y / (r2 * r2.sqrt()) + 1.0 / (2.0 * PI * m * m)
    };
    let big_m = LATTICE_TERMS as f64;
    let mut sum = 0.0;
    for m in 1..LATTICE_TERMS {
        sum += term(m as f64);
    }
    // int_M^inf term = -(1/2pi) ln((Y + sqrt(Y^2 + rho^2)) / (4 pi M))
    let base = 2.0 * PI * big_m;
    let y = base + a;
    let root = y.hypot(rho);
    let excess = (a + (a * (2.0 * base + a) + rho * rho) / (root + base)) / (2.0 * base);
    let integral = -excess.ln_1p() / (2.0 * PI);
    sum + integral + 0.5 * term(big_m) - derivative(big_m) / 12.0
}

/// Kernel through the closed cosine sum plus the difference series
/// `sum_{n <= terms} [Z0(kappa_n rho) - K0(n rho)] chi_n chi_n'`.
///
/// Accurate only when `terms * rho` is large (the difference series decays
/// like `1/n^2` until `n rho ~ 1`).
pub fn layer_green_split(
    z: impl Into<SpectralPoint>,
    x: &Point,
    xp: &Point,
    ctx: SheetContext,
    terms: u32,
) -> Result<Complex64> {
    let z = z.into();
    let rho = (x.x - xp.x).hypot(x.y - xp.y);
    if rho <= 0.0 {
        return Err(Error::Domain {
            function: "layer_green_split",
            detail: "requires horizontally separated points".into(),
        });
    }
    let mut diff = Complex64::new(0.0, 0.0);
    for n in 1..=terms {
        let chi2 = chi_n(n, x.z) * chi_n(n, xp.z);
        let k_free = crate::specfun::macdonald_k0(Complex64::new(f64::from(n) * rho, 0.0))?;
        diff += (z0_kernel(z, n, rho, ctx)? - k_free) * chi2;
    }
    let a_minus = (x.z - xp.z).abs();
    let a_plus = x.z + xp.z;
    let closed = (k0_cosine_sum(rho, a_minus)? - k0_cosine_sum(rho, a_plus)?) / PI;
    Ok((diff + closed) / (2.0 * PI))
}

/// `omega_n(z; x) = (1/2pi) Z0(kappa_n |x_|) chi_n(x3)`.
pub fn omega_n(
    z: impl Into<SpectralPoint>,
    n: u32,
    x: &Point,
    ctx: SheetContext,
) -> Result<Complex64> {
    let r = wire_distance(x);
    if r <= 0.0 {
        return Err(Error::Domain {
            function: "omega_n",
            detail: "point lies on the wire".into(),
        });
    }
    Ok(z0_kernel(z, n, r, ctx)? * chi_n(n, x.z) / (2.0 * PI))
}
