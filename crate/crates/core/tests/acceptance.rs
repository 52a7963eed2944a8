//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion does.

use std::f64::consts::PI;
use std::time::Instant;

use layer_resonance::geometry::{Point, Surface, SurfaceFamily};
use layer_resonance::greens::{k0_cosine_sum, layer_green, KernelEvalConfig};
use layer_resonance::resonance::{
    default_deltas, find_determinant_root, find_pole, im_mu_closed_form, sweep_delta,
    ResonanceProblem, SweepResult, DEFAULT_TOL,
};
use layer_resonance::specfun::{gamma_n, macdonald_k0, SheetContext, SpectralParams};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Disk of radius 0.5 centred at `center`, normal along `x3`.
fn disk_problem(center: Point, beta: f64, order: usize) -> ResonanceProblem {
    let family = SurfaceFamily::disk(center, Point::z(), 0.5).unwrap();
    let surface = Surface::new("disk", family).unwrap();
    let params = SpectralParams::new(0.0, beta).unwrap();
    ResonanceProblem::new(params, surface, 2, order)
}

fn generic_disk(beta: f64, order: usize) -> ResonanceProblem {
    disk_problem(Point::new(1.0, 0.0, 1.0), beta, order)
}

fn criterion_1_embedded_eigenvalue_zeros() -> Verdict {
    let mut worst: f64 = 0.0;
    for alpha in [-1.0, 0.0, 0.5, 2.0] {
        let params = SpectralParams::new(alpha, 1.0).unwrap();
        for n in 1..=20 {
            let g = gamma_n(
                params.eigenvalue_point(n),
                n,
                SheetContext::first(),
                &params,
            )
            .unwrap();
            worst = worst.max(g.norm());
        }
    }
    let pass = worst < 1e-12;
    verdict(pass, format!("max |Gamma_n(eps_n)| = {worst:e}"))
}

fn criterion_2_cosine_sum() -> Verdict {
    let mut worst: f64 = 0.0;
    for rho in [0.01, 0.1, 0.5, 1.0] {
        for a in [0.0, 0.5, 1.0, 2.0, 3.0] {
            let brute: f64 = (1..=100_000)
                .map(|n| {
                    let x = n as f64 * rho;
                    macdonald_k0(c(x, 0.0)).unwrap().re * (n as f64 * a).cos()
                })
                .sum();
            let closed = k0_cosine_sum(rho, a).unwrap();
            worst = worst.max((closed - brute).abs());
        }
    }
    let pass = worst < 1e-8;
    verdict(pass, format!("max abs deviation = {worst:e}"))
}

fn criterion_3_edge_of_the_wedge() -> Verdict {
    let mut rng = StdRng::seed_from_u64(7);
    let mut point = || {
        let r = rng.random_range(0.2..2.0);
        let t = rng.random_range(0.0..2.0 * PI);
        let x3 = rng.random_range(0.1..PI - 0.1);
        Point::new(r * t.cos(), r * t.sin(), x3)
    };
    let pairs: Vec<(Point, Point)> = (0..5).map(|_| (point(), point())).collect();
    let cfg = KernelEvalConfig::new(80, 1e-12).unwrap();
    let params = SpectralParams::new(0.3, 1.0).unwrap();
    let eps = 1e-8;
    let (mut g_worst, mut gamma_worst): (f64, f64) = (0.0, 0.0);
    for (lambda, k) in [(2.5, 1), (6.0, 2)] {
        let first = SheetContext::first();
        let second = SheetContext::second(k).unwrap();
        for (x, y) in &pairs {
            let above = layer_green(c(lambda, eps), x, y, first, &cfg).unwrap();
            let below = layer_green(c(lambda, -eps), x, y, second, &cfg).unwrap();
            g_worst = g_worst.max((above - below).norm());
        }
        for n in 1..=6 {
            let above = gamma_n(c(lambda, eps), n, first, &params).unwrap();
            let below = gamma_n(c(lambda, -eps), n, second, &params).unwrap();
            gamma_worst = gamma_worst.max((above - below).norm());
        }
    }
    let pass = g_worst < 1e-6 && gamma_worst < 1e-8;
    verdict(
        pass,
        format!("kernel jump {g_worst:e}, Gamma jump {gamma_worst:e}"),
    )
}

fn criterion_4_scalar_determinant_equivalence() -> Verdict {
    let system = generic_disk(0.4, 16).system(0.08).unwrap();
    let pole = find_pole(&system, None, DEFAULT_TOL).unwrap();
    let (z, _) = find_determinant_root(&system, None, DEFAULT_TOL).unwrap();
    let (dre, dim) = ((pole.z.re - z.re).abs(), (pole.z.im - z.im).abs());
    let pass = dre < 1e-8 && dim < 1e-8;
    verdict(
        pass,
        format!(
            "z_eta = {}, z_det = {z}, |dRe| = {dre:e}, |dIm| = {dim:e}",
            pole.z
        ),
    )
}

/// Default sweep at order 14, which gives 196 nodes (inside the 200-node budget).
fn budget_sweep() -> (ResonanceProblem, SweepResult, f64) {
    let problem = generic_disk(0.4, 14);
    let start = Instant::now();
    let sweep = sweep_delta(&problem, &default_deltas()).unwrap();
    (problem, sweep, start.elapsed().as_secs_f64())
}

fn criterion_5_width_scaling() -> Verdict {
    let (problem, sweep, elapsed) = budget_sweep();
    let nodes = problem.system(0.12).unwrap().rule().len();

    let (fit_re, fit_im) = (sweep.fit_re, sweep.fit_im);
    let pass5 = match (fit_re, fit_im) {
        (Some(re), Some(im)) => {
            (3.8..=4.2).contains(&im.exponent)
                && im.r_squared > 0.999
                && (1.9..=2.1).contains(&re.exponent)
                && elapsed <= 300.0
                && nodes <= 200
        }
        _ => false,
    };
    verdict(pass5, format!(
            "Im slope {:?} (R^2 {:?}), Re slope {:?}, {nodes} nodes, {elapsed:.1} s, fit error {:?}",
            fit_im.map(|f| f.exponent),
            fit_im.map(|f| f.r_squared),
            fit_re.map(|f| f.exponent),
            sweep.fit_error
        ))
}

fn criterion_6_sign_and_closed_form() -> Verdict {
    let (problem, sweep, _) = budget_sweep();
    let all_negative = sweep
        .points
        .iter()
        .all(|p| p.pole.as_ref().is_some_and(|p| p.mu.im < 0.0));
    let smallest = &sweep.points[0];
    let ratio = match (&smallest.pole, smallest.im_mu_closed_form) {
        (Some(p), Some(cf)) => p.mu.im / cf,
        _ => f64::NAN,
    };
    let plus = problem.system(0.05).unwrap();
    let mut flipped = problem.clone();
    flipped.params = flipped.params.with_beta(-0.4).unwrap();
    let minus = flipped.system(0.05).unwrap();
    let even = im_mu_closed_form(&plus).unwrap() == im_mu_closed_form(&minus).unwrap();
    let pass6 = all_negative && (0.75..=1.25).contains(&ratio) && even;
    verdict(pass6, format!(
            "Im mu < 0 at all points: {all_negative}, Im mu / closed form at delta = {:.4}: {ratio:.4}, even in beta: {even}",
            smallest.delta
        ))
}

fn criterion_7_symmetry_persistence() -> Verdict {
    let problem = disk_problem(Point::new(1.0, 0.0, PI / 2.0), 0.4, 16);
    let system = problem.system(0.08).unwrap();
    let pole = find_pole(&system, None, DEFAULT_TOL).unwrap();
    let eps = system.eigenvalue().value();
    let shift = (pole.z - eps).norm();
    let pass = pole.z.im.abs() < 1e-12 && shift < 1e-12;
    verdict(
        pass,
        format!("|z - eps_2| = {shift:e}, |Im z| = {:e}", pole.z.im.abs()),
    )
}

fn criterion_8_discretization_convergence() -> Verdict {
    let base = generic_disk(0.4, 16);
    let z16 = base.pole(0.08, None).unwrap();
    let mut fine = base.clone();
    fine.order = 32;
    let z32 = fine.pole(0.08, None).unwrap();
    let mut wide = base.clone();
    wide.n_max = Some(2 * z16.n_max);
    let zn = wide.pole(0.08, None).unwrap();
    let order_move = (z32.z - z16.z).norm();
    let modes_move = (zn.z - z16.z).norm();
    let pass = order_move < 1e-6 && modes_move < base.tail_tol;
    verdict(
        pass,
        format!(
            "order 16 -> 32 moves {order_move:e}, n_max {} -> {} moves {modes_move:e}",
            z16.n_max, zn.n_max
        ),
    )
}

fn criterion_9_derivative_law() -> Verdict {
    let params = SpectralParams::new(0.0, 1.0).unwrap();
    let target = 1.0 / (4.0 * PI * params.xi_alpha());
    let mut worst: f64 = 0.0;
    for l in [2, 3] {
        let ctx = SheetContext::second(l - 1).unwrap();
        let eps = params.eigenvalue_point(l);
        let h = 1e-5;
        let d = (gamma_n(eps.shifted(c(h, 0.0)), l, ctx, &params).unwrap()
            - gamma_n(eps.shifted(c(-h, 0.0)), l, ctx, &params).unwrap())
            / (2.0 * h);
        worst = worst.max((d - target).norm());
    }
    let pass = worst < 1e-8;
    verdict(pass, format!("max |dGamma - 1/(4 pi xi)| = {worst:e}"))
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "Gamma_n zeros", criterion_1_embedded_eigenvalue_zeros),
        (2, "cosine sum", criterion_2_cosine_sum),
        (3, "edge of the wedge", criterion_3_edge_of_the_wedge),
        (
            4,
            "eta vs determinant",
            criterion_4_scalar_determinant_equivalence,
        ),
        (5, "width scaling", criterion_5_width_scaling),
        (6, "sign and closed form", criterion_6_sign_and_closed_form),
        (7, "symmetry persistence", criterion_7_symmetry_persistence),
        (
            8,
            "discretization convergence",
            criterion_8_discretization_convergence,
        ),
        (9, "derivative law", criterion_9_derivative_law),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let v = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {tag}: {}", v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
