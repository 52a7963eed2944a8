//! Built-in invariant suite run by `validate` mode.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::geometry::{build_quadrature, Point, Surface, SurfaceFamily};
use crate::greens::{chi_n, k0_cosine_sum, layer_green, layer_green_split, KernelEvalConfig};
use crate::quadrature::gauss_legendre_on;
use crate::specfun::{gamma_n, macdonald_k0, SheetContext, SpectralParams};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    /// Worst deviation observed.
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        value,
        tolerance,
        pass: value < tolerance,
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pairs() -> [(Point, Point); 4] {
    [
        (Point::new(1.0, 0.2, 1.1), Point::new(1.3, -0.2, 2.0)),
        (Point::new(0.5, 0.5, 0.4), Point::new(-0.7, 0.9, 2.6)),
        (Point::new(2.0, 0.0, 1.5), Point::new(2.1, 0.05, 1.45)),
        (Point::new(0.3, -1.2, 3.0), Point::new(0.8, 0.4, 0.2)),
    ]
}

fn gamma_zeros() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for alpha in [-1.0, 0.0, 0.5, 2.0] {
        let params = SpectralParams::new(alpha, 1.0)?;
        for n in 1..=20 {
            let g = gamma_n(
                params.eigenvalue_point(n),
                n,
                SheetContext::first(),
                &params,
            )?;
            worst = worst.max(g.norm());
        }
    }
    Ok(check("gamma_zeros", worst, 1e-12))
}

fn derivative_law() -> Result<Check> {
    let params = SpectralParams::new(0.0, 1.0)?;
    let target = 1.0 / (4.0 * PI * params.xi_alpha());
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for l in [2, 3] {
        let ctx = SheetContext::second(l - 1)?;
        let eps = params.eigenvalue_point(l);
        let d = (gamma_n(eps.shifted(c(h, 0.0)), l, ctx, &params)?
            - gamma_n(eps.shifted(c(-h, 0.0)), l, ctx, &params)?)
            / (2.0 * h);
        worst = worst.max((d - target).norm());
    }
    Ok(check("derivative_law", worst, 1e-8))
}

fn cosine_sum() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for rho in [0.01, 0.1, 0.5, 1.0] {
        for a in [0.0, 0.5, 1.0, 2.0, 3.0] {
            let mut brute = 0.0;
            for n in 1..=100_000 {
                brute += macdonald_k0(c(n as f64 * rho, 0.0))?.re * (n as f64 * a).cos();
            }
            worst = worst.max((k0_cosine_sum(rho, a)? - brute).abs());
        }
    }
    Ok(check("cosine_sum_brute_force", worst, 1e-8))
}

fn cosine_sum_reflection() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for rho in [0.05, 0.5, 1.0] {
        for a in [0.3, 1.0, 2.5] {
            worst = worst.max((k0_cosine_sum(rho, a)? - k0_cosine_sum(rho, 2.0 * PI - a)?).abs());
        }
    }
    Ok(check("cosine_sum_reflection", worst, 1e-12))
}

fn edge_of_the_wedge() -> Result<[Check; 2]> {
    let cfg = KernelEvalConfig::new(80, 1e-12)?;
    let params = SpectralParams::new(0.3, 1.0)?;
    let eps = 1e-8;
    let (mut g_worst, mut gamma_worst): (f64, f64) = (0.0, 0.0);
    for (lambda, k) in [(2.5, 1), (6.0, 2)] {
        let (first, second) = (SheetContext::first(), SheetContext::second(k)?);
        for (x, y) in pairs() {
            let above = layer_green(c(lambda, eps), &x, &y, first, &cfg)?;
            let below = layer_green(c(lambda, -eps), &x, &y, second, &cfg)?;
            g_worst = g_worst.max((above - below).norm());
        }
        for n in 1..=6 {
            let above = gamma_n(c(lambda, eps), n, first, &params)?;
            let below = gamma_n(c(lambda, -eps), n, second, &params)?;
            gamma_worst = gamma_worst.max((above - below).norm());
        }
    }
    Ok([
        check("kernel_edge_of_the_wedge", g_worst, 1e-6),
        check("gamma_edge_of_the_wedge", gamma_worst, 1e-8),
    ])
}

fn kernel_symmetry() -> Result<Check> {
    let cfg = KernelEvalConfig::new(80, 1e-12)?;
    let mut worst: f64 = 0.0;
    for (x, y) in pairs() {
        for (z, ctx) in [
            (c(-2.0, 0.0), SheetContext::first()),
            (c(2.7, -0.1), SheetContext::second(1)?),
        ] {
            let a = layer_green(z, &x, &y, ctx, &cfg)?;
            let b = layer_green(z, &y, &x, ctx, &cfg)?;
            worst = worst.max((a - b).norm() / a.norm().max(1.0));
        }
    }
    Ok(check("kernel_symmetry", worst, 1e-12))
}

fn kernel_routes_agree() -> Result<Check> {
    let cfg = KernelEvalConfig::new(80, 1e-12)?;
    let mut worst: f64 = 0.0;
    let (x, y) = (Point::new(1.0, 0.0, 1.1), Point::new(1.5, 0.0, 1.9));
    for (z, ctx) in [
        (c(-2.0, 0.0), SheetContext::first()),
        (c(2.5, -0.2), SheetContext::second(1)?),
    ] {
        let fast = layer_green(z, &x, &y, ctx, &cfg)?;
        let split = layer_green_split(z, &x, &y, ctx, 400)?;
        worst = worst.max((fast - split).norm());
    }
    Ok(check("kernel_accelerated_vs_split", worst, 1e-9))
}

fn chi_orthonormal() -> Check {
    let (x, w) = gauss_legendre_on(64, 0.0, PI);
    let mut worst: f64 = 0.0;
    for n in 1..=10 {
        for m in 1..=10 {
            let s: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| w * chi_n(n, *x) * chi_n(m, *x))
                .sum();
            let e = if n == m { 1.0 } else { 0.0 };
            worst = worst.max((s - e).abs());
        }
    }
    check("chi_orthonormality", worst, 1e-12)
}

fn disk_area() -> Result<Check> {
    let r = 0.3;
    let family = SurfaceFamily::disk(Point::new(1.0, 0.0, 1.0), Point::z(), r)?;
    let rule = build_quadrature(&Surface::new("disk", family)?, 16)?;
    Ok(check(
        "disk_area",
        (rule.total_weight() - PI * r * r).abs(),
        1e-12,
    ))
}

/// Every check in the suite, in a fixed order.
pub fn run_suite() -> Result<Vec<Check>> {
    let mut checks = vec![
        gamma_zeros()?,
        derivative_law()?,
        cosine_sum()?,
        cosine_sum_reflection()?,
    ];
    checks.extend(edge_of_the_wedge()?);
    checks.push(kernel_symmetry()?);
    checks.push(kernel_routes_agree()?);
    checks.push(chi_orthonormal());
    checks.push(disk_area()?);
    Ok(checks)
}
