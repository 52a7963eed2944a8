//! Command-line front end: config loading, run orchestration and output.

pub mod config;
pub mod output;
pub mod validate;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use num_complex::Complex64;

pub use config::{parse_config, ConfigError, Format, Mode, RunConfig};
use output::{Metadata, PoleReport};

use crate::parallel::{configure_threads, Execution};
use crate::resonance::{
    embedded_eigenvalues, find_pole, im_mu_closed_form, mu_lowest_order, sweep_delta,
    ResonanceProblem,
};
use crate::specfun::SpectralPoint;

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "layer-resonance",
    version,
    about = "Embedded eigenvalues and impurity resonances of a layer with a delta wire"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration (optional for `validate`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads for assembly and sweeps; 1 runs sequentially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Real part of the pole seed (default: epsilon_l).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub seed_re: Option<f64>,
    /// Imaginary part of the pole seed (default: 0).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub seed_im: Option<f64>,
    /// Gauss-Legendre points per parameter direction.
    #[arg(long, global = true)]
    pub quad_order: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Tabulate epsilon_n and classify them against the continuum.
    Eigenvalues,
    /// Locate one resonance pole.
    Pole,
    /// Poles over a delta grid with power-law fits.
    Sweep,
    /// Run the built-in invariant suite.
    Validate,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::Eigenvalues => Mode::Eigenvalues,
            Command::Pole => Mode::Pole,
            Command::Sweep => Mode::Sweep,
            Command::Validate => Mode::Validate,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Compute(#[from] crate::Error),
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            _ => EXIT_COMPUTATION,
        }
    }
}

/// Resolved config from the command line: file contents plus flag overrides.
pub fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mode = cli.command.mode();
    let mut raw: RunConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None if mode == Mode::Validate => RunConfig::validate_only(),
        None => {
            return Err(ConfigError::Invalid {
                key: "--config",
                detail: format!("`{mode}` needs a config file"),
            })
        }
    };
    if let Some(p) = &cli.output {
        raw.output.path = Some(p.display().to_string());
    }
    if let Some(q) = cli.quad_order {
        raw.numerics.quad_order = q;
    }
    if cli.seed_re.is_some() {
        raw.numerics.seed_re = cli.seed_re;
    }
    if cli.seed_im.is_some() {
        raw.numerics.seed_im = cli.seed_im;
    }
    raw.resolve(Some(mode))
}

/// Files produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub plot_script: Option<String>,
    /// False when a validate check failed.
    pub success: bool,
}

pub fn run(config: &RunConfig, exec: Execution) -> Result<Outcome, RunError> {
    let format = config.output.format;
    let render = |csv: String, json: String| match format {
        Format::Csv => csv,
        Format::Json => json,
    };
    let outcome = match config.mode() {
        Mode::Eigenvalues => {
            let params = config.spectral_params()?;
            let range = &config.eigenvalues;
            let list = embedded_eigenvalues(&params, range.n_from..=range.n_to)?;
            let meta = Metadata::new(config, Vec::new());
            Outcome {
                text: render(
                    output::eigenvalues_csv(&meta, &list),
                    output::json(&meta, &list),
                ),
                plot_script: None,
                success: true,
            }
        }
        Mode::Pole => {
            let problem = problem(config, exec)?;
            let system = problem.system(config.delta())?;
            let seed = seed(config);
            let pole = find_pole(&system, seed, problem.tol)?;
            let report = PoleReport {
                width: -2.0 * pole.z.im,
                im_mu_closed_form: im_mu_closed_form(&system)?,
                mu_lowest_order: mu_lowest_order(&system, config.numerics.neumann_terms)?,
                pole,
            };
            let meta = Metadata::new(config, vec![report.pole.n_max]);
            Outcome {
                text: render(
                    output::pole_csv(&meta, &report),
                    output::json(&meta, &report),
                ),
                plot_script: None,
                success: true,
            }
        }
        Mode::Sweep => {
            let problem = problem(config, exec)?;
            let sweep = sweep_delta(&problem, &config.deltas())?;
            let meta = Metadata::new(config, sweep.successes().map(|p| p.n_max).collect());
            let plot_script = match (&config.output.path, config.output.plot_script) {
                (Some(path), true) => Some(output::plot_script(path.as_ref())),
                _ => None,
            };
            Outcome {
                text: render(
                    output::sweep_csv(&meta, &sweep),
                    output::json(&meta, &sweep),
                ),
                plot_script,
                success: true,
            }
        }
        Mode::Validate => {
            let checks = validate::run_suite()?;
            let meta = Metadata::new(config, Vec::new());
            Outcome {
                text: render(
                    output::validate_csv(&meta, &checks),
                    output::json(&meta, &checks),
                ),
                plot_script: None,
                success: checks.iter().all(|c| c.pass),
            }
        }
    };
    Ok(outcome)
}

fn problem(config: &RunConfig, exec: Execution) -> crate::Result<ResonanceProblem> {
    let mut p = ResonanceProblem::new(
        config.spectral_params()?,
        config.surface()?,
        config.l(),
        config.numerics.quad_order,
    );
    p.tail_tol = config.numerics.tail_tol;
    p.n_max = config.numerics.n_max;
    p.tol = config.numerics.root_tol;
    p.exec = exec;
    Ok(p)
}

/// Seed from `seed_re`/`seed_im`, anchored at `l^2`; `None` keeps `epsilon_l`.
fn seed(config: &RunConfig) -> Option<SpectralPoint> {
    let n = &config.numerics;
    if n.seed_re.is_none() && n.seed_im.is_none() {
        return None;
    }
    let l = config.l();
    let params = config.spectral_params().ok()?;
    let anchor = f64::from(l * l);
    let re = n.seed_re.map_or(params.xi_alpha(), |r| r - anchor);
    Some(SpectralPoint::new(
        l * l,
        Complex64::new(re, n.seed_im.unwrap_or(0.0)),
    ))
}

fn write_outputs(config: &RunConfig, outcome: &Outcome) -> Result<(), RunError> {
    let write = |path: &str, text: &str| {
        fs::write(path, text).map_err(|source| RunError::Write {
            path: path.to_string(),
            source,
        })
    };
    match &config.output.path {
        Some(path) => {
            write(path, &outcome.text)?;
            if let Some(script) = &outcome.plot_script {
                let gp = PathBuf::from(path).with_extension("gp");
                write(&gp.display().to_string(), script)?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(outcome.text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| RunError::Write {
                    path: "<stdout>".into(),
                    source,
                })?;
        }
    }
    Ok(())
}

/// Parse `args`, run, write outputs and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let exec = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        Some(1) => Execution::Sequential,
        Some(n) => {
            configure_threads(n);
            Execution::default()
        }
        None => Execution::default(),
    };
    let result = load(&cli).map_err(RunError::from).and_then(|config| {
        let outcome = run(&config, exec)?;
        write_outputs(&config, &outcome)?;
        Ok(outcome.success)
    });
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("error: some validation checks failed");
            EXIT_COMPUTATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
