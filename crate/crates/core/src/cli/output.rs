//! CSV, JSON and gnuplot text produced by a run.

use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use super::validate::Check;
use crate::resonance::{EigenvalueEntry, PoleResult, PowerLawFit, SweepResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, so values round-trip exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    /// Mode truncation of each system solved; empty when none was built.
    pub n_max: Vec<u32>,
    pub tail_constant: f64,
}

impl Metadata {
    pub fn new(config: &RunConfig, mut n_max: Vec<u32>) -> Self {
        n_max.sort_unstable();
        n_max.dedup();
        Self {
            tool: "layer-resonance",
            version: VERSION,
            config: config.clone(),
            n_max,
            tail_constant: crate::greens::tail_constant(),
        }
    }

    /// `#`-prefixed header that opens every CSV file.
    pub fn comment_block(&self) -> String {
        let mut out = format!("# {} {}\n", self.tool, self.version);
        let n_max = if self.n_max.is_empty() {
            "none".to_string()
        } else {
            self.n_max
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        };
        out += &format!("# n_max = {n_max}\n");
        out += &format!("# tail_constant = {}\n", num(self.tail_constant));
        out += "# resolved config:\n";
        for line in self.config.to_toml().lines() {
            if line.is_empty() {
                out += "#\n";
            } else {
                out += &format!("#   {line}\n");
            }
        }
        out
    }
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn eigenvalues_csv(meta: &Metadata, list: &[EigenvalueEntry]) -> String {
    let rows: Vec<Vec<String>> = list
        .iter()
        .map(|e| {
            vec![
                e.n.to_string(),
                num(e.value),
                serde_json::to_value(e.class)
                    .unwrap()
                    .as_str()
                    .unwrap()
                    .to_string(),
                e.window.map(|k| k.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    meta.comment_block() + &csv_table(&["n", "epsilon", "class", "window"], &rows)
}

/// A located pole with the two asymptotic comparisons.
#[derive(Debug, Clone, Serialize)]
pub struct PoleReport {
    pub pole: PoleResult,
    pub width: f64,
    pub im_mu_closed_form: f64,
    pub mu_lowest_order: num_complex::Complex64,
}

pub const POLE_COLUMNS: [&str; 16] = [
    "delta",
    "l",
    "k",
    "re_z",
    "im_z",
    "re_mu",
    "im_mu",
    "width",
    "im_mu_closed_form",
    "re_mu_lowest_order",
    "im_mu_lowest_order",
    "residual",
    "iterations",
    "method",
    "condition_free",
    "condition_rank",
];

pub fn pole_csv(meta: &Metadata, r: &PoleReport) -> String {
    let p = &r.pole;
    let method = serde_json::to_value(p.method)
        .unwrap()
        .as_str()
        .unwrap()
        .to_string();
    let row = vec![
        num(p.delta),
        p.l.to_string(),
        p.k.to_string(),
        num(p.z.re),
        num(p.z.im),
        num(p.mu.re),
        num(p.mu.im),
        num(r.width),
        num(r.im_mu_closed_form),
        num(r.mu_lowest_order.re),
        num(r.mu_lowest_order.im),
        num(p.residual),
        p.iterations.to_string(),
        method,
        num(p.condition_free),
        num(p.condition_rank),
    ];
    meta.comment_block() + &csv_table(&POLE_COLUMNS, &[row])
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "delta",
    "re_z",
    "im_z",
    "re_mu",
    "im_mu",
    "im_mu_closed_form",
    "residual",
    "iterations",
    "status",
];

fn fit_line(label: &str, fit: Option<PowerLawFit>) -> String {
    match fit {
        Some(f) => format!(
            "# fit {label} = prefactor * delta^exponent: exponent = {}, prefactor = {}, r_squared = {}, points = {}\n",
            num(f.exponent),
            num(f.prefactor),
            num(f.r_squared),
            f.points
        ),
        None => format!("# fit {label}: not available\n"),
    }
}

pub fn sweep_csv(meta: &Metadata, sweep: &SweepResult) -> String {
    let rows: Vec<Vec<String>> = sweep
        .points
        .iter()
        .map(|pt| match &pt.pole {
            Some(p) => vec![
                num(pt.delta),
                num(p.z.re),
                num(p.z.im),
                num(p.mu.re),
                num(p.mu.im),
                opt(pt.im_mu_closed_form),
                num(p.residual),
                p.iterations.to_string(),
                pt.status.clone(),
            ],
            None => {
                let mut row = vec![num(pt.delta)];
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(pt.status.clone());
                row
            }
        })
        .collect();
    let mut out = meta.comment_block() + &csv_table(&SWEEP_COLUMNS, &rows);
    out += &fit_line("|im_mu|", sweep.fit_im);
    out += &fit_line("|re_mu|", sweep.fit_re);
    if let Some(e) = &sweep.fit_error {
        out += &format!("# fit error: {e}\n");
    }
    out
}

pub fn validate_csv(meta: &Metadata, checks: &[Check]) -> String {
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.to_string(),
                num(c.value),
                num(c.tolerance),
                if c.pass { "pass" } else { "fail" }.to_string(),
            ]
        })
        .collect();
    let passed = checks.iter().filter(|c| c.pass).count();
    meta.comment_block()
        + &csv_table(&["check", "value", "tolerance", "status"], &rows)
        + &format!("# {passed} of {} checks passed\n", checks.len())
}

pub fn json<T: Serialize>(meta: &Metadata, result: &T) -> String {
    #[derive(Serialize)]
    struct Document<'a, T> {
        metadata: &'a Metadata,
        result: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Document {
        metadata: meta,
        result,
    })
    .expect("results serialize");
    s.push('\n');
    s
}

/// Gnuplot script for a sweep CSV, addressing columns by header name.
pub fn plot_script(csv_path: &Path) -> String {
    let csv = csv_path.display();
    let png = csv_path.with_extension("png");
    format!(
        r##"# gnuplot script for {csv}
set datafile separator ","
set datafile commentschars "#"
set datafile columnheaders
set logscale xy
set key top left
set xlabel "delta"
set ylabel "|mu|"
set terminal pngcairo size 900,600
set output "{png}"
plot "{csv}" using (column("delta")):(abs(column("im_mu"))) with linespoints title "|Im mu|", \
     "{csv}" using (column("delta")):(abs(column("re_mu"))) with linespoints title "|Re mu|", \
     "{csv}" using (column("delta")):(abs(column("im_mu_closed_form"))) with lines title "|Im mu| closed form"
"##,
        png = png.display()
    )
}
