//! Embedded eigenvalues, resonance poles and their small-surface asymptotics.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::bs_operator::{pair, resolvent_neumann, BsSystem, CVector};
use crate::geometry::Surface;
use crate::greens::chi_n;
use crate::parallel::Execution;
use crate::specfun::{gamma_n, spectral_window, SpectralParams, SpectralPoint, PSI_1};
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-12;
/// Poles with `Im z` above this are rejected as unphysical.
pub const IMAG_SLACK: f64 = 1e-12;
/// Fewest successful sweep points for a power-law fit.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Discrete,
    Embedded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenvalueEntry {
    pub n: u32,
    pub value: f64,
    pub class: Classification,
    /// `k` with `k^2 < value < (k+1)^2` for embedded values.
    pub window: Option<u32>,
}

/// `epsilon_n = xi_alpha + n^2` for each `n` in `ns`, classified against the
/// continuum `[1, inf)`.
pub fn embedded_eigenvalues(
    params: &SpectralParams,
    ns: impl IntoIterator<Item = u32>,
) -> Result<Vec<EigenvalueEntry>> {
    ns.into_iter()
        .map(|n| {
            if n == 0 {
                return Err(Error::InvalidParameter {
                    name: "n",
                    detail: "mode index must be >= 1".into(),
                });
            }
            let value = params.eigenvalue(n);
            let window = spectral_window(value)?;
            let class = if window.is_some() {
                Classification::Embedded
            } else {
                Classification::Discrete
            };
            Ok(EigenvalueEntry {
                n,
                value,
                class,
                window,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RootMethod {
    Newton,
    Muller,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleResult {
    pub z: Complex64,
    /// `z - epsilon_l`.
    pub mu: Complex64,
    pub l: u32,
    pub k: u32,
    pub delta: f64,
    pub residual: f64,
    pub iterations: usize,
    pub method: RootMethod,
    pub condition_free: f64,
    pub condition_rank: f64,
    pub n_max: u32,
    pub kernel_modes: u32,
    pub nodes: usize,
}

/// Root of `f` in the offset from the anchor of `seed`.
struct Root {
    z: SpectralPoint,
    residual: f64,
    iterations: usize,
    method: RootMethod,
}

fn newton<F>(f: &F, seed: SpectralPoint, tol: f64) -> Result<Root>
where
    F: Fn(SpectralPoint) -> Result<Complex64>,
{
    let mut z = seed;
    let mut fz = f(z)?;
    let mut last = fz.norm();
    for it in 1..=MAX_ITERATIONS {
        let h = 1e-7 * z.value().norm().max(1.0);
        let dz = Complex64::new(h, 0.0);
        let d = (f(z.shifted(dz))? - f(z.shifted(-dz))?) / (2.0 * h);
        if d.norm() == 0.0 || !d.is_finite() {
            break;
        }
        let step = fz / d;
        z = z.shifted(-step);
        fz = f(z)?;
        last = fz.norm();
        if !last.is_finite() {
            break;
        }
        if last < tol && step.norm() < tol {
            return Ok(Root {
                z,
                residual: last,
                iterations: it,
                method: RootMethod::Newton,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: last,
    })
}

fn muller<F>(f: &F, seed: SpectralPoint, tol: f64) -> Result<Root>
where
    F: Fn(SpectralPoint) -> Result<Complex64>,
{
    let base = seed.offset();
    let at = |off: Complex64| SpectralPoint::new(seed.anchor(), off);
    let mut x = [
        base + Complex64::new(0.0, -1e-3),
        base + Complex64::new(1e-3, 0.0),
        base,
    ];
    let mut fx = [f(at(x[0]))?, f(at(x[1]))?, f(at(x[2]))?];
    let mut last = fx[2].norm();
    for it in 1..=MAX_ITERATIONS {
        let h1 = x[1] - x[0];
        let h2 = x[2] - x[1];
        let d1 = (fx[1] - fx[0]) / h1;
        let d2 = (fx[2] - fx[1]) / h2;
        let a = (d2 - d1) / (h2 + h1);
        let b = a * h2 + d2;
        let disc = (b * b - a * fx[2] * 4.0).sqrt();
        let denom = if (b + disc).norm() >= (b - disc).norm() {
            b + disc
        } else {
            b - disc
        };
        if denom.norm() == 0.0 || !denom.is_finite() {
            break;
        }
        let step = -fx[2] * 2.0 / denom;
        let next = x[2] + step;
        let fnext = f(at(next))?;
        x = [x[1], x[2], next];
        fx = [fx[1], fx[2], fnext];
        last = fnext.norm();
        if !last.is_finite() {
            break;
        }
        if last < tol && step.norm() < tol {
            return Ok(Root {
                z: at(next),
                residual: last,
                iterations: it,
                method: RootMethod::Muller,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: last,
    })
}

/// Newton, then Muller from the same seed if Newton fails.
fn solve<F>(f: F, seed: SpectralPoint, tol: f64) -> Result<Root>
where
    F: Fn(SpectralPoint) -> Result<Complex64>,
{
    match newton(&f, seed, tol) {
        Ok(root) => Ok(root),
        Err(first) => muller(&f, seed, tol).map_err(|_| first),
    }
}

fn check_root(system: &BsSystem, z: Complex64) -> Result<()> {
    if z.im > IMAG_SLACK {
        return Err(Error::RejectedRoot(format!(
            "Im z = {:e} lies in the upper half plane",
            z.im
        )));
    }
    let (lo, hi) = system.ctx().window();
    if !(z.re > lo && z.re < hi) {
        return Err(Error::RejectedRoot(format!(
            "Re z = {} left the window ({lo}, {hi})",
            z.re
        )));
    }
    Ok(())
}

/// `z - w` without cancellation when both share an anchor.
fn offset_from(z: SpectralPoint, w: SpectralPoint) -> Complex64 {
    if z.anchor() == w.anchor() {
        z.offset() - w.offset()
    } else {
        z.value() - w.value()
    }
}

/// Zero of `eta_l` on the second sheet, seeded at `epsilon_l` by default.
pub fn find_pole(system: &BsSystem, seed: Option<SpectralPoint>, tol: f64) -> Result<PoleResult> {
    let seed = seed.unwrap_or_else(|| system.eigenvalue());
    let root = solve(|z| system.eta(z).map(|e| e.value), seed, tol)?;
    let z = root.z.value();
    check_root(system, z)?;
    let eta = system.eta(root.z)?;
    Ok(PoleResult {
        z,
        mu: offset_from(root.z, system.eigenvalue()),
        l: system.l(),
        k: system.k(),
        delta: system.surface().delta(),
        residual: root.residual,
        iterations: root.iterations,
        method: root.method,
        condition_free: eta.condition_free,
        condition_rank: eta.condition_rank,
        n_max: system.config().n_max,
        kernel_modes: system.free_cache().kernel().modes(),
        nodes: system.rule().len(),
    })
}

/// Zero of `det(I - beta R_alpha(z))` near `seed`.
///
/// The determinant has a simple pole at `epsilon_l`, so the iteration runs on
/// the pole-free product `Gamma_l(z) det(z)`; a seed sitting on the pole is
/// moved by `-1e-6 i`.
pub fn find_determinant_root(
    system: &BsSystem,
    seed: Option<SpectralPoint>,
    tol: f64,
) -> Result<(Complex64, usize)> {
    let mut seed = seed.unwrap_or_else(|| system.eigenvalue());
    if system.gamma_l(seed)?.norm() < 1e-10 {
        seed = seed.shifted(Complex64::new(0.0, -1e-6));
    }
    let f = |z: SpectralPoint| Ok(system.gamma_l(z)? * system.determinant(z)?);
    // the product has no natural scale, so converge on the step alone
    let mut z = seed;
    for it in 1..=MAX_ITERATIONS {
        let h = 1e-7 * z.value().norm().max(1.0);
        let dz = Complex64::new(h, 0.0);
        let d = (f(z.shifted(dz))? - f(z.shifted(-dz))?) / (2.0 * h);
        let step = f(z)? / d;
        if !step.is_finite() {
            break;
        }
        z = z.shifted(-step);
        if step.norm() < tol * z.value().norm().max(1.0) {
            return Ok((z.value(), it));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: f64::NAN,
    })
}

/// Second-order approximation of the pole shift at `epsilon_l`:
/// `4 pi xi beta (int w_l^2 + beta sum_{n != l} Gamma_n^-1 (int w_l w_n)^2 + <w_l, Rt w_l>)`
/// with `Rt = sum_{m=1}^{terms} (beta R)^m` evaluated on the second sheet.
pub fn mu_lowest_order(system: &BsSystem, terms: usize) -> Result<Complex64> {
    let params = system.params();
    let beta = params.beta();
    let eps = system.eigenvalue();
    let weights = &system.rule().weights;
    let wl = system.mode(eps, system.l())?;
    let mut sum = wl.square(weights);
    for n in 1..=system.config().n_max {
        if n == system.l() {
            continue;
        }
        let wn = system.mode(eps, n)?;
        if wn.is_zero() {
            continue;
        }
        let c = pair(&wl.values, &wn.values, weights);
        let gamma = gamma_n(eps, n, system.ctx(), params)?;
        sum += c * c * beta / gamma;
    }
    if terms > 0 {
        let r = system.free_operator(eps)?;
        let neumann = resolvent_neumann(&r, beta, terms);
        // (I - beta R)^-1 w - w keeps only the m >= 1 terms
        let rw: CVector = &neumann * &wl.values - &wl.values;
        sum += pair(&wl.values, &rw, weights);
    }
    Ok(sum * (4.0 * PI * params.xi_alpha() * beta))
}

/// Closed-form imaginary part of the leading pole shift:
/// `pi xi beta^2 sum_{n <= k} [2 |(w_l, w_n)|^2 / (iota_n^2 + 1/4) + (int w_l chi_n)^2]`
/// with `iota_n = (1/2pi)(2 pi alpha + ln(sqrt(epsilon_l - n^2)/2) - psi(1))`.
pub fn im_mu_closed_form(system: &BsSystem) -> Result<f64> {
    let params = system.params();
    let eps = system.eigenvalue();
    let weights = &system.rule().weights;
    let nodes = &system.rule().nodes;
    let wl = system.mode(eps, system.l())?;
    let mut sum = 0.0;
    for n in 1..=system.k() {
        let wn = system.mode(eps, n)?;
        let overlap: Complex64 = wl
            .values
            .iter()
            .zip(wn.values.iter())
            .zip(weights)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum();
        let projection: Complex64 = wl
            .values
            .iter()
            .zip(nodes)
            .zip(weights)
            .map(|((a, x), w)| a * chi_n(n, x.z) * *w)
            .sum();
        let gap = eps.minus_threshold(n).re;
        let iota = (2.0 * PI * params.alpha() + (gap.sqrt() / 2.0).ln() - PSI_1) / (2.0 * PI);
        sum += 2.0 / (iota * iota + 0.25) * overlap.norm_sqr() + (projection * projection).re;
    }
    Ok(PI * params.xi_alpha() * params.beta().powi(2) * sum)
}

/// Everything needed to build a [`BsSystem`] at any `delta`.
#[derive(Debug, Clone)]
pub struct ResonanceProblem {
    pub params: SpectralParams,
    /// Undeformed surface; `system` scales it.
    pub surface: Surface,
    pub l: u32,
    pub order: usize,
    pub tail_tol: f64,
    pub n_max: Option<u32>,
    pub exec: Execution,
    pub tol: f64,
}

impl ResonanceProblem {
    pub fn new(params: SpectralParams, surface: Surface, l: u32, order: usize) -> Self {
        Self {
            params,
            surface,
            l,
            order,
            tail_tol: 1e-10,
            n_max: None,
            exec: Execution::default(),
            tol: DEFAULT_TOL,
        }
    }

    pub fn system(&self, delta: f64) -> Result<BsSystem> {
        let surface = self.surface.scale(delta)?;
        BsSystem::new(
            self.params,
            &surface,
            self.order,
            self.l,
            self.tail_tol,
            self.n_max,
            self.exec,
        )
    }

    pub fn pole(&self, delta: f64, seed: Option<SpectralPoint>) -> Result<PoleResult> {
        find_pole(&self.system(delta)?, seed, self.tol)
    }
}

/// `n` log-spaced values in `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn default_deltas() -> Vec<f64> {
    log_spaced(0.02, 0.12, 8)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub pole: Option<PoleResult>,
    pub im_mu_closed_form: Option<f64>,
    /// `"ok"` or the error message.
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// `|Re mu| ~ C delta^p`.
    pub fit_re: Option<PowerLawFit>,
    /// `|Im mu| ~ C delta^p`.
    pub fit_im: Option<PowerLawFit>,
    pub fit_error: Option<String>,
}

impl SweepResult {
    pub fn successes(&self) -> impl Iterator<Item = &PoleResult> {
        self.points.iter().filter_map(|p| p.pole.as_ref())
    }
}

/// Poles at each `delta`; individual failures are recorded, not fatal.
pub fn sweep_delta(problem: &ResonanceProblem, deltas: &[f64]) -> Result<SweepResult> {
    if deltas.is_empty() {
        return Err(Error::InvalidParameter {
            name: "deltas",
            detail: "empty sweep".into(),
        });
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "deltas",
            detail: "values must be positive".into(),
        });
    }
    let points = problem.exec.map_slice(deltas, |&delta| {
        let run = || -> Result<(PoleResult, f64)> {
            let system = problem.system(delta)?;
            let pole = find_pole(&system, None, problem.tol)?;
            let closed = im_mu_closed_form(&system)?;
            Ok((pole, closed))
        };
        match run() {
            Ok((pole, closed)) => SweepPoint {
                delta,
                pole: Some(pole),
                im_mu_closed_form: Some(closed),
                status: "ok".into(),
            },
            Err(e) => SweepPoint {
                delta,
                pole: None,
                im_mu_closed_form: None,
                status: e.to_string(),
            },
        }
    });
    let mut result = SweepResult {
        points,
        fit_re: None,
        fit_im: None,
        fit_error: None,
    };
    let ok: Vec<&PoleResult> = result.successes().collect();
    if ok.len() < MIN_FIT_POINTS {
        result.fit_error = Some(format!(
            "only {} of {} points converged; need {MIN_FIT_POINTS} for a fit",
            ok.len(),
            deltas.len()
        ));
        return Ok(result);
    }
    let re: Vec<(f64, f64)> = ok.iter().map(|p| (p.delta, p.mu.re.abs())).collect();
    let im: Vec<(f64, f64)> = ok.iter().map(|p| (p.delta, p.mu.im.abs())).collect();
    let mut errors = Vec::new();
    match fit_power_law(&re) {
        Ok(f) => result.fit_re = Some(f),
        Err(e) => errors.push(format!("Re mu: {e}")),
    }
    match fit_power_law(&im) {
        Ok(f) => result.fit_im = Some(f),
        Err(e) => errors.push(format!("Im mu: {e}")),
    }
    if !errors.is_empty() {
        result.fit_error = Some(errors.join("; "));
    }
    Ok(result)
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Fit("need at least three points".into()));
    }
    if points
        .iter()
        .any(|(x, y)| !(*x > 0.0 && *y > 0.0) || !x.is_finite() || !y.is_finite())
    {
        return Err(Error::Fit("log-log fit needs positive finite data".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx < 1e-300 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared,
        points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, SurfaceFamily};

    fn problem(center: Point, beta: f64, order: usize) -> ResonanceProblem {
        let family = SurfaceFamily::disk(center, Point::z(), 0.5).unwrap();
        let params = SpectralParams::new(0.0, beta).unwrap();
        ResonanceProblem::new(params, Surface::new("disk", family).unwrap(), 2, order)
    }

    #[test]
    fn classification() {
        let params = SpectralParams::new(0.0, 1.0).unwrap();
        let list = embedded_eigenvalues(&params, 1..=4).unwrap();
        assert_eq!(list[0].class, Classification::Discrete);
        assert_eq!(list[0].window, None);
        assert_eq!(list[1].class, Classification::Embedded);
        assert_eq!(list[1].window, Some(1));
        assert_eq!(list[3].window, Some(3));
        assert!(embedded_eigenvalues(&params, [0]).is_err());
    }

    #[test]
    fn threshold_collision_is_reported() {
        // xi = -3 puts epsilon_2 on the threshold 1
        let alpha = (PSI_1 - 0.75f64.ln() / 2.0) / (2.0 * PI);
        let params = SpectralParams::new(alpha, 1.0).unwrap();
        assert!((params.xi_alpha() + 3.0).abs() < 1e-12);
        let err = embedded_eigenvalues(&params, [2]).unwrap_err();
        assert!(matches!(err, Error::ThresholdCollision { .. }));
    }

    #[test]
    fn newton_and_muller_on_polynomial() {
        let w = Complex64::new(0.3, -0.2);
        let f = |z: SpectralPoint| Ok((z.value() - w) * (z.value() + 2.0));
        let seed = SpectralPoint::new(0, Complex64::new(0.1, 0.0));
        for root in [
            newton(&f, seed, 1e-13).unwrap(),
            muller(&f, seed, 1e-13).unwrap(),
        ] {
            assert!((root.z.value() - w).norm() < 1e-12);
        }
        let none = |_: SpectralPoint| Ok(Complex64::new(1.0, 0.0));
        assert!(matches!(
            solve(none, seed, 1e-12),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn symmetric_plane_keeps_the_eigenvalue() {
        let p = problem(Point::new(1.0, 0.0, PI / 2.0), 0.7, 8);
        let system = p.system(0.1).unwrap();
        let pole = find_pole(&system, None, DEFAULT_TOL).unwrap();
        assert!(pole.z.im.abs() < 1e-12);
        assert!((pole.z - system.eigenvalue().value()).norm() < 1e-12);
    }

    #[test]
    fn eta_and_determinant_roots_agree() {
        let p = problem(Point::new(1.0, 0.0, 1.0), 0.4, 8);
        let system = p.system(0.08).unwrap();
        let pole = find_pole(&system, None, DEFAULT_TOL).unwrap();
        let (z, _) = find_determinant_root(&system, None, DEFAULT_TOL).unwrap();
        assert!((pole.z.re - z.re).abs() < 1e-10);
        assert!((pole.z.im - z.im).abs() < 1e-10);
        assert!(pole.z.im < 0.0);
        assert_eq!(pole.k, 1);
        assert!(pole.residual < DEFAULT_TOL);
    }

    #[test]
    fn lowest_order_tracks_the_pole() {
        let p = problem(Point::new(1.0, 0.0, 1.0), 0.4, 8);
        let system = p.system(0.04).unwrap();
        let pole = find_pole(&system, None, DEFAULT_TOL).unwrap();
        let mu = mu_lowest_order(&system, 1).unwrap();
        assert!(
            (mu.re / pole.mu.re - 1.0).abs() < 1e-3,
            "{mu} vs {}",
            pole.mu
        );
        assert!(
            (mu.im / pole.mu.im - 1.0).abs() < 0.05,
            "{mu} vs {}",
            pole.mu
        );
    }

    #[test]
    fn closed_form_is_even_in_beta() {
        let a = problem(Point::new(1.0, 0.0, 1.0), 0.4, 8)
            .system(0.05)
            .unwrap();
        let b = problem(Point::new(1.0, 0.0, 1.0), -0.4, 8)
            .system(0.05)
            .unwrap();
        let (x, y) = (
            im_mu_closed_form(&a).unwrap(),
            im_mu_closed_form(&b).unwrap(),
        );
        assert!(x < 0.0);
        assert_eq!(x, y);
    }

    #[test]
    fn beta_sign_asymmetry_shrinks() {
        let gap = |delta: f64| {
            let plus = problem(Point::new(1.0, 0.0, 1.0), 0.4, 8)
                .pole(delta, None)
                .unwrap();
            let minus = problem(Point::new(1.0, 0.0, 1.0), -0.4, 8)
                .pole(delta, None)
                .unwrap();
            ((plus.mu.im - minus.mu.im) / plus.mu.im).abs()
        };
        let (coarse, fine) = (gap(0.08), gap(0.02));
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn power_law_fit() {
        let pts: Vec<(f64, f64)> = log_spaced(0.02, 0.12, 8)
            .into_iter()
            .map(|d| (d, 3.5 * d.powf(4.0)))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.exponent - 4.0).abs() < 1e-12);
        assert!((fit.prefactor - 3.5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_power_law(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(fit_power_law(&[(1.0, -1.0), (2.0, 2.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        let square = fit_power_law(&[(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)]).unwrap();
        assert!((square.exponent - 2.0).abs() < 1e-12);
        assert!((square.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let pts: Vec<(f64, f64)> = log_spaced(0.02, 0.12, 8)
            .into_iter()
            .enumerate()
            .map(|(i, d)| (d, d.powi(4) * (1.0 + if i % 2 == 0 { 0.01 } else { -0.01 })))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((3.95..=4.05).contains(&fit.exponent));
    }

    #[test]
    fn grid() {
        let d = default_deltas();
        assert_eq!(d.len(), 8);
        assert!((d[0] - 0.02).abs() < 1e-15 && (d[7] - 0.12).abs() < 1e-15);
        assert!((d[1] / d[0] - d[7] / d[6]).abs() < 1e-12);
    }

    #[test]
    fn sweep_records_failures() {
        let p = problem(Point::new(1.0, 0.0, 1.0), 0.4, 6);
        // delta = 3 pushes the disk across the wire
        let result = sweep_delta(&p, &[0.05, 0.1, 3.0]).unwrap();
        assert_eq!(result.successes().count(), 2);
        assert_ne!(result.points[2].status, "ok");
        assert!(result.fit_error.is_some());
        assert!(result.successes().all(|p| p.mu.im < 0.0));
        assert!(sweep_delta(&p, &[]).is_err());
    }
}
