//! Run configuration: TOML text with `[params]`, `[surface]`, `[numerics]`,
//! `[eigenvalues]` and `[output]` sections. Unknown keys are rejected.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Surface, SurfaceFamily};
use crate::resonance::default_deltas;
use crate::specfun::SpectralParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Eigenvalues,
    Pole,
    Sweep,
    Validate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Eigenvalues => "eigenvalues",
            Mode::Pole => "pole",
            Mode::Sweep => "sweep",
            Mode::Validate => "validate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// Syntax errors and unknown keys; the message carries the line number.
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {detail}")]
    Invalid { key: &'static str, detail: String },
}

fn invalid(key: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub alpha: f64,
    /// Only needed by `pole` and `sweep`; the other modes default it to 1.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum SurfaceSpec {
    Rectangle {
        center: [f64; 3],
        normal: [f64; 3],
        width: f64,
        height: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        in_plane: Option<[f64; 3]>,
        #[serde(skip_serializing_if = "Option::is_none")]
        anchor: Option<[f64; 3]>,
    },
    Disk {
        center: [f64; 3],
        normal: [f64; 3],
        radius: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        anchor: Option<[f64; 3]>,
    },
    Cap {
        sphere_center: [f64; 3],
        radius: f64,
        axis: [f64; 3],
        polar_angle: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        anchor: Option<[f64; 3]>,
    },
}

fn point(p: [f64; 3]) -> Point {
    Point::new(p[0], p[1], p[2])
}

impl SurfaceSpec {
    /// Undeformed surface (`delta = 1`).
    pub fn build(&self) -> crate::Result<Surface> {
        let (family, anchor) = match *self {
            SurfaceSpec::Rectangle {
                center,
                normal,
                width,
                height,
                in_plane,
                anchor,
            } => (
                SurfaceFamily::rectangle(
                    point(center),
                    point(normal),
                    width,
                    height,
                    in_plane.map(point),
                )?,
                anchor,
            ),
            SurfaceSpec::Disk {
                center,
                normal,
                radius,
                anchor,
            } => (
                SurfaceFamily::disk(point(center), point(normal), radius)?,
                anchor,
            ),
            SurfaceSpec::Cap {
                sphere_center,
                radius,
                axis,
                polar_angle,
                anchor,
            } => (
                SurfaceFamily::spherical_cap(
                    point(sphere_center),
                    radius,
                    point(axis),
                    polar_angle,
                )?,
                anchor,
            ),
        };
        let name = family.name();
        match anchor {
            Some(a) => Surface::with_anchor(name, family, point(a)),
            None => Surface::new(name, family),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub quad_order: usize,
    pub tail_tol: f64,
    pub root_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u32>,
    /// Powers of `beta R` kept in the lowest-order pole shift.
    pub neumann_terms: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_re: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_im: Option<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            quad_order: 16,
            tail_tol: 1e-10,
            root_tol: 1e-12,
            n_max: None,
            neumann_terms: 1,
            seed_re: None,
            seed_im: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenvalueRange {
    pub n_from: u32,
    pub n_to: u32,
}

impl Default for EigenvalueRange {
    fn default() -> Self {
        Self {
            n_from: 1,
            n_to: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub format: Format,
    pub plot_script: bool,
}

/// Validated run configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Taken from the subcommand when absent.
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    /// Scale of the surface in pole mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Sweep grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSpec>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub eigenvalues: EigenvalueRange,
    #[serde(default)]
    pub output: OutputSection,
}

pub const DEFAULT_DELTA: f64 = 0.08;

impl RunConfig {
    /// Config of a bare `validate` run.
    pub fn validate_only() -> Self {
        Self {
            mode: Some(Mode::Validate),
            l: None,
            delta: None,
            deltas: None,
            params: None,
            surface: None,
            numerics: Numerics::default(),
            eigenvalues: EigenvalueRange::default(),
            output: OutputSection::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode.expect("resolved config has a mode")
    }

    pub fn spectral_params(&self) -> crate::Result<SpectralParams> {
        let p = self.params.as_ref().expect("validated config has params");
        SpectralParams::new(p.alpha, p.beta.unwrap_or(1.0))
    }

    pub fn surface(&self) -> crate::Result<Surface> {
        self.surface
            .as_ref()
            .expect("validated config has a surface")
            .build()
    }

    pub fn l(&self) -> u32 {
        self.l.expect("validated config has l")
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(DEFAULT_DELTA)
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.deltas.clone().unwrap_or_else(default_deltas)
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fill defaults that depend on the mode and check every invariant.
    pub fn resolve(mut self, requested: Option<Mode>) -> Result<Self, ConfigError> {
        let mode = match (self.mode, requested) {
            (Some(given), Some(m)) if given != m => {
                return Err(invalid(
                    "mode",
                    format!("config says `{given}` but `{m}` was requested"),
                ))
            }
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => return Err(invalid("mode", "no mode given")),
        };
        self.mode = Some(mode);
        let needs_geometry = matches!(mode, Mode::Pole | Mode::Sweep);
        if mode != Mode::Validate && self.params.is_none() {
            return Err(invalid("params", "section [params] is required"));
        }
        if let Some(p) = &mut self.params {
            if !p.alpha.is_finite() {
                return Err(invalid("params.alpha", "must be finite"));
            }
            match p.beta {
                None if needs_geometry => {
                    return Err(invalid("params.beta", "required in pole and sweep modes"))
                }
                None => p.beta = Some(1.0),
                Some(0.0) => {
                    return Err(invalid(
                        "params.beta",
                        "beta = 0 switches the impurity off; the coupling must be nonzero",
                    ))
                }
                Some(b) if !b.is_finite() => return Err(invalid("params.beta", "must be finite")),
                Some(_) => {}
            }
        }
        if needs_geometry {
            match self.l {
                None => return Err(invalid("l", "required in pole and sweep modes")),
                Some(0) => return Err(invalid("l", "mode index must be >= 1")),
                Some(_) => {}
            }
            let Some(spec) = &self.surface else {
                return Err(invalid("surface", "section [surface] is required"));
            };
            spec.build()
                .map_err(|e| invalid("surface", e.to_string()))?;
            if let Some(d) = self.delta {
                if !(d.is_finite() && d > 0.0) {
                    return Err(invalid("delta", "must be positive"));
                }
            }
            if let Some(ds) = &self.deltas {
                if ds.is_empty() || ds.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    return Err(invalid(
                        "deltas",
                        "must be a non-empty list of positive values",
                    ));
                }
            }
            if mode == Mode::Pole {
                if self.deltas.is_some() {
                    return Err(invalid("deltas", "only used in sweep mode"));
                }
                self.delta.get_or_insert(DEFAULT_DELTA);
            } else {
                if self.delta.is_some() {
                    return Err(invalid("delta", "sweep mode takes `deltas`"));
                }
                self.deltas.get_or_insert_with(default_deltas);
            }
        }
        let n = &self.numerics;
        if n.quad_order < 2 {
            return Err(invalid("numerics.quad_order", "must be at least 2"));
        }
        if !(n.tail_tol > 0.0 && n.tail_tol < 1.0) {
            return Err(invalid("numerics.tail_tol", "must lie in (0, 1)"));
        }
        if !(n.root_tol > 0.0 && n.root_tol < 1.0) {
            return Err(invalid("numerics.root_tol", "must lie in (0, 1)"));
        }
        if n.n_max == Some(0) {
            return Err(invalid("numerics.n_max", "must be >= 1"));
        }
        for (key, v) in [
            ("numerics.seed_re", n.seed_re),
            ("numerics.seed_im", n.seed_im),
        ] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(invalid(key, "must be finite"));
            }
        }
        let e = &self.eigenvalues;
        if e.n_from == 0 || e.n_to < e.n_from {
            return Err(invalid("eigenvalues", "need 1 <= n_from <= n_to"));
        }
        if self.output.plot_script && self.output.path.is_none() {
            return Err(invalid(
                "output.plot_script",
                "needs output.path for the CSV it plots",
            ));
        }
        Ok(self)
    }
}

/// Parse and validate config text; `requested` is the subcommand's mode.
pub fn parse_config(text: &str, requested: Option<Mode>) -> Result<RunConfig, ConfigError> {
    let raw: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    raw.resolve(requested)
}
