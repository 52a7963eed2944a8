//! Complex special functions and the scalar spectral functions of the wire.
//!
//! Branch bookkeeping lives here and nowhere else: every square root
//! `sqrt(z - n^2)` used by the crate goes through [`sheet_sqrt`], and the
//! second-sheet corrections of `K0` and `Gamma_n` are spelled out explicitly
//! in [`z0_kernel`] and [`gamma_n`] instead of winding a generic logarithm.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Euler-Mascheroni constant; `psi(1) = -EULER_GAMMA`.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Digamma at one.
pub const PSI_1: f64 = -EULER_GAMMA;

/// `|w|` at or below which the power series are used for `K0`/`K1`.
const K_SERIES_RADIUS: f64 = 2.0;

/// `|w|` at or below which the power series is used for `I0`.
const I_SERIES_RADIUS: f64 = 8.0;

/// `K0(w)` underflows double precision beyond this real part.
const K_UNDERFLOW_RE: f64 = 700.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A spectral parameter `z = anchor^2 + offset`.
///
/// Keeping the integer threshold separate lets `z - n^2` be formed without
/// cancellation; eigenvalues `xi_alpha + l^2` with tiny `|xi_alpha|` would
/// otherwise lose most of their digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    anchor: u32,
    offset: Complex64,
}

impl SpectralPoint {
    pub fn new(anchor: u32, offset: Complex64) -> Self {
        Self { anchor, offset }
    }

    pub fn anchor(&self) -> u32 {
        self.anchor
    }

    pub fn offset(&self) -> Complex64 {
        self.offset
    }

    pub fn value(&self) -> Complex64 {
        self.offset + square(self.anchor)
    }

    /// `z - n^2`, exact in the integer part.
    pub fn minus_threshold(&self, n: u32) -> Complex64 {
        let d = i64::from(self.anchor) * i64::from(self.anchor) - i64::from(n) * i64::from(n);
        self.offset + d as f64
    }

    pub fn shifted(&self, dz: Complex64) -> Self {
        Self {
            anchor: self.anchor,
            offset: self.offset + dz,
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            anchor: self.anchor,
            offset: self.offset.conj(),
        }
    }
}

impl From<Complex64> for SpectralPoint {
    fn from(z: Complex64) -> Self {
        Self::new(0, z)
    }
}

impl From<f64> for SpectralPoint {
    fn from(z: f64) -> Self {
        Self::new(0, Complex64::new(z, 0.0))
    }
}

#[inline]
fn square(n: u32) -> f64 {
    f64::from(n) * f64::from(n)
}

/// Physical couplings of the wire (`alpha`) and of the surface impurity (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpectralParams {
    alpha: f64,
    beta: f64,
    xi_alpha: f64,
}

impl SpectralParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                detail: format!("must be finite, got {alpha}"),
            });
        }
        if !beta.is_finite() || beta == 0.0 {
            return Err(Error::InvalidParameter {
                name: "beta",
                detail: format!("must be finite and nonzero, got {beta}"),
            });
        }
        Ok(Self {
            alpha,
            beta,
            xi_alpha: xi_alpha(alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Bound state energy of the two-dimensional point interaction.
    pub fn xi_alpha(&self) -> f64 {
        self.xi_alpha
    }

    /// Same wire, surface coupling replaced.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.alpha, beta)
    }

    /// `eps_n = xi_alpha + n^2`.
    pub fn eigenvalue(&self, n: u32) -> f64 {
        self.xi_alpha + square(n)
    }

    /// `eps_n` anchored at the threshold `n^2`.
    pub fn eigenvalue_point(&self, n: u32) -> SpectralPoint {
        SpectralPoint::new(n, Complex64::new(self.xi_alpha, 0.0))
    }
}

/// `xi_alpha = -4 exp(2(-2 pi alpha + psi(1)))`, always negative.
pub fn xi_alpha(alpha: f64) -> f64 {
    -4.0 * (2.0 * (-2.0 * PI * alpha + PSI_1)).exp()
}

/// Window index `k` with `k^2 < e < (k+1)^2`, or `None` below the continuum
/// (`e < 1`). Values within `1e-8` of a threshold are rejected.
pub fn spectral_window(e: f64) -> Result<Option<u32>> {
    let k = e.max(0.0).sqrt().round();
    if (e - k * k).abs() < 1e-8 {
        return Err(Error::ThresholdCollision {
            value: e,
            threshold: k * k,
        });
    }
    if e < 1.0 {
        return Ok(None);
    }
    Ok(Some(e.sqrt().floor() as u32))
}

/// Which Riemann sheet a spectral quantity is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    First,
    Second,
}

/// Sheet selector. On the second sheet the continuation runs through the
/// window `J_k = (k^2, (k+1)^2)` and only modes `n <= k` pick up corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct SheetContext {
    k: u32,
    sheet: Sheet,
}

impl SheetContext {
    pub fn first() -> Self {
        Self {
            k: 0,
            sheet: Sheet::First,
        }
    }

    pub fn second(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                detail: "second-sheet window index must be >= 1".into(),
            });
        }
        Ok(Self {
            k,
            sheet: Sheet::Second,
        })
    }

    /// First sheet, remembering the window index for later continuation.
    pub fn first_with_window(k: u32) -> Self {
        Self {
            k,
            sheet: Sheet::First,
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn sheet(&self) -> Sheet {
        self.sheet
    }

    /// `(k^2, (k+1)^2)`.
    pub fn window(&self) -> (f64, f64) {
        let k = f64::from(self.k);
        (k * k, (k + 1.0) * (k + 1.0))
    }

    /// True when mode `n` carries a second-sheet correction.
    pub fn is_continued(&self, n: u32) -> bool {
        self.sheet == Sheet::Second && n <= self.k
    }
}

/// `sqrt(z - n^2)` on the branch selected by `ctx`.
///
/// Off the real axis this is the root with `Im >= 0`. On the real axis above
/// the threshold the first sheet takes the `+i0` boundary value (`+sqrt`) and a
/// continued mode takes the `-i0` boundary value of the second sheet (`-sqrt`).
pub fn sheet_sqrt(z: impl Into<SpectralPoint>, n: u32, ctx: SheetContext) -> Result<Complex64> {
    let z = z.into();
    let threshold = square(n);
    let w = z.minus_threshold(n);
    if w.im == 0.0 {
        if w.re == 0.0 {
            return Err(Error::BranchPoint {
                z: format!("{}", z.value()),
                threshold,
            });
        }
        if w.re < 0.0 {
            return Ok(Complex64::new(0.0, (-w.re).sqrt()));
        }
        let root = w.re.sqrt();
        return Ok(if ctx.is_continued(n) {
            Complex64::new(-root, 0.0)
        } else {
            Complex64::new(root, 0.0)
        });
    }
    let p = w.sqrt();
    Ok(if p.im < 0.0 { -p } else { p })
}

/// `kappa_n(z) = -i sqrt(z - n^2)` on the first sheet.
pub fn kappa_n(z: impl Into<SpectralPoint>, n: u32) -> Result<Complex64> {
    kappa_n_on(z, n, SheetContext::first())
}

/// `kappa_n(z)` with the branch chosen by `ctx`.
pub fn kappa_n_on(z: impl Into<SpectralPoint>, n: u32, ctx: SheetContext) -> Result<Complex64> {
    Ok(-I * sheet_sqrt(z, n, ctx)?)
}

/// Scalar Birman-Schwinger function of the wire for mode `n`.
///
/// `(1/2pi)(2 pi alpha - psi(1) + ln(sqrt(z - n^2)/(2i)))`, minus `i/2` for
/// continued modes on the second sheet.
pub fn gamma_n(
    z: impl Into<SpectralPoint>,
    n: u32,
    ctx: SheetContext,
    params: &SpectralParams,
) -> Result<Complex64> {
    let root = sheet_sqrt(z, n, ctx)?;
    // sqrt/(2i) = kappa/2, which stays in the closed right half plane.
    let log_term = (-I * root * 0.5).ln();
    let mut s = Complex64::new(2.0 * PI * params.alpha - PSI_1, 0.0) + log_term;
    if ctx.is_continued(n) {
        s -= I * PI;
    }
    Ok(s / (2.0 * PI))
}

/// `Z0` kernel: `K0(kappa rho)`, plus `i pi I0(-kappa rho)` for continued modes.
pub fn z0_kernel(
    z: impl Into<SpectralPoint>,
    n: u32,
    rho: f64,
    ctx: SheetContext,
) -> Result<Complex64> {
    if rho <= 0.0 || !rho.is_finite() {
        return Err(Error::Domain {
            function: "z0_kernel",
            detail: format!("rho must be positive, got {rho}"),
        });
    }
    let kappa = kappa_n_on(z, n, ctx)?;
    Ok(z0_from_kappa(kappa, rho, ctx.is_continued(n)))
}

#[inline]
pub(crate) fn z0_from_kappa(kappa: Complex64, rho: f64, continued: bool) -> Complex64 {
    let w = kappa * rho;
    let mut value = k0_nonzero(w);
    if continued {
        value += I * PI * bessel_i0(-w);
    }
    value
}

/// Macdonald function `K0(w)` on the principal branch.
pub fn macdonald_k0(w: Complex64) -> Result<Complex64> {
    if w == Complex64::new(0.0, 0.0) {
        return Err(Error::Domain {
            function: "macdonald_k0",
            detail: "logarithmic singularity at w = 0".into(),
        });
    }
    Ok(k0_nonzero(w))
}

/// `K1(w)` on the principal branch.
pub fn macdonald_k1(w: Complex64) -> Result<Complex64> {
    if w == Complex64::new(0.0, 0.0) {
        return Err(Error::Domain {
            function: "macdonald_k1",
            detail: "pole at w = 0".into(),
        });
    }
    Ok(k01(w).1)
}

#[inline]
pub(crate) fn k0_nonzero(w: Complex64) -> Complex64 {
    if w.re > K_UNDERFLOW_RE {
        return Complex64::new(0.0, 0.0);
    }
    if w.norm() <= K_SERIES_RADIUS {
        k0_series(w)
    } else {
        k01(w).0
    }
}

/// `(K0(w), K1(w))`.
fn k01(w: Complex64) -> (Complex64, Complex64) {
    if w.re < 0.0 {
        // K_nu(w e^{+-i pi}) = K_nu(w) -+ i pi I_nu(w) applied to -w.
        let m = -w;
        let (k0, k1) = k01(m);
        let sign = if w.im >= 0.0 { 1.0 } else { -1.0 };
        let k0w = k0 - I * PI * sign * bessel_i0(m);
        // K1 is odd under the rotation: K1(w e^{i pi}) = -K1(w) - i pi I1(w).
        let k1w = -k1 - I * PI * sign * bessel_i1_series(m);
        return (k0w, k1w);
    }
    if w.re > K_UNDERFLOW_RE {
        return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    }
    if w.norm() <= K_SERIES_RADIUS {
        (k0_series(w), k1_series(w))
    } else {
        k01_continued_fraction(w)
    }
}

/// Ascending series, `|w| <= 2`.
fn k0_series(w: Complex64) -> Complex64 {
    let q = w * w * 0.25;
    let mut term = Complex64::new(1.0, 0.0);
    let mut i0 = term;
    let mut tail = Complex64::new(0.0, 0.0);
    let mut harmonic = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += term;
        tail += term * harmonic;
        if term.norm() * harmonic.max(1.0) < 1e-17 * tail.norm().max(1e-300) && k > 2 {
            break;
        }
    }
    -((w * 0.5).ln() + EULER_GAMMA) * i0 + tail
}

fn k1_series(w: Complex64) -> Complex64 {
    let q = w * w * 0.25;
    let i1 = bessel_i1_series(w);
    // psi(k+1) + psi(k+2) with psi(m+1) = -gamma + H_m
    let mut term = Complex64::new(1.0, 0.0); // q^k / (k! (k+1)!)
    let mut harmonic = 0.0; // H_k
    let mut sum = term * (2.0 * PSI_1 + 1.0);
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        let psis = 2.0 * PSI_1 + 2.0 * harmonic + 1.0 / (kf + 1.0);
        let add = term * psis;
        sum += add;
        if add.norm() < 1e-17 * sum.norm() && k > 2 {
            break;
        }
    }
    w.inv() + i1 * (w * 0.5).ln() - w * 0.25 * sum
}

/// Steed's continued fraction (Temme's CF2) for `Re w >= 0`, `|w| > 2`.
fn k01_continued_fraction(w: Complex64) -> (Complex64, Complex64) {
    const EPS: f64 = 1e-16;
    let one = Complex64::new(1.0, 0.0);
    let a1 = 0.25;
    let mut b = (one + w) * 2.0;
    let mut d = b.inv();
    let mut delh = d;
    let mut h = d;
    let mut q1 = Complex64::new(0.0, 0.0);
    let mut q2 = one;
    let mut q = Complex64::new(a1, 0.0);
    let mut c = Complex64::new(a1, 0.0);
    let mut a = -a1;
    let mut s = one + q * delh;
    for i in 1..20_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -c * a / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = (b + d * a).inv();
        delh = (b * d - one) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if dels.norm() < EPS * s.norm() {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * w)).sqrt() * (-w).exp() / s;
    let k1 = k0 * (w + 0.5 - h) / w;
    (k0, k1)
}

/// Modified Bessel function `I0(w)` (entire).
pub fn bessel_i0(w: Complex64) -> Complex64 {
    if w.norm() <= I_SERIES_RADIUS {
        i0_series(w)
    } else {
        i0_trapezoid(w)
    }
}

fn i0_series(w: Complex64) -> Complex64 {
    let q = w * w * 0.25;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.norm() < 1e-17 * sum.norm().max(1e-300) {
            break;
        }
    }
    sum
}

fn bessel_i1_series(w: Complex64) -> Complex64 {
    let q = w * w * 0.25;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (kf + 1.0));
        sum += term;
        if term.norm() < 1e-17 * sum.norm().max(1e-300) {
            break;
        }
    }
    w * 0.5 * sum
}

/// `I0(w) = (1/pi) int_0^pi exp(w cos t) dt`; the periodic trapezoid rule
/// converges geometrically once the node count exceeds `|w|`.
fn i0_trapezoid(w: Complex64) -> Complex64 {
    let m = (w.norm().ceil() as usize + 40).max(64);
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..m {
        let t = 2.0 * PI * j as f64 / m as f64;
        sum += (w * t.cos()).exp();
    }
    sum / m as f64
}

/// Real `K_0(x), ..., K_{order}(x)` for `x > 0` by upward recurrence.
pub(crate) fn bessel_k_real_seq(x: f64, order: usize, out: &mut [f64]) {
    debug_assert!(x > 0.0);
    debug_assert!(out.len() > order);
    let (k0, k1) = k01(Complex64::new(x, 0.0));
    out[0] = k0.re;
    if order == 0 {
        return;
    }
    out[1] = k1.re;
    for j in 1..order {
        out[j + 1] = out[j - 1] + 2.0 * j as f64 / x * out[j];
    }
}
