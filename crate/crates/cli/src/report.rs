//! Trajectory tables and diagnostic reports. Every float is written with 17
//! significant digits so that outputs are byte-stable and round-trip exactly.

use std::fmt::Write as _;

use contact_core::dynamics::Trajectory;

use crate::scenario::DiagnosticKind;

/// A float in `d.dddddddddddddddde±x` form; non-finite values use TOML spellings.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticResult {
    pub kind: DiagnosticKind,
    pub threshold: f64,
    pub observed: f64,
    pub pass: bool,
    pub details: Vec<(String, f64)>,
    pub samples: Vec<(String, Vec<f64>)>,
    pub plot: Option<PlotData>,
}

impl DiagnosticResult {
    pub fn new(kind: DiagnosticKind, threshold: f64, observed: f64) -> Self {
        Self {
            kind,
            threshold,
            observed,
            pass: observed.is_finite() && observed < threshold,
            details: Vec::new(),
            samples: Vec::new(),
            plot: None,
        }
    }

    pub fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.push((key.into(), value));
        self
    }

    pub fn samples(mut self, key: &str, values: Vec<f64>) -> Self {
        self.samples.push((key.into(), values));
        self
    }

    pub fn plot(mut self, plot: PlotData) -> Self {
        self.plot = Some(plot);
        self
    }

    /// Adds a secondary requirement `value < limit` that must also hold.
    pub fn require(mut self, key: &str, value: f64, limit: f64) -> Self {
        self.pass &= value.is_finite() && value < limit;
        self.details.push((key.into(), value));
        self.details.push((format!("{key}_limit"), limit));
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub model: String,
    pub seed: u64,
    pub diagnostics: Vec<DiagnosticResult>,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.diagnostics.iter().all(|d| d.pass)
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario = {}", quote(&self.scenario));
        let _ = writeln!(out, "model = {}", quote(&self.model));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "pass = {}", self.pass());
        for d in &self.diagnostics {
            let _ = writeln!(out, "\n[[diagnostics]]");
            let _ = writeln!(out, "name = {}", quote(d.name()));
            let _ = writeln!(out, "threshold = {}", format_float(d.threshold));
            let _ = writeln!(out, "observed = {}", format_float(d.observed));
            let _ = writeln!(out, "pass = {}", d.pass);
            if !d.details.is_empty() {
                let _ = writeln!(out, "\n[diagnostics.details]");
                for (k, v) in &d.details {
                    let _ = writeln!(out, "{k} = {}", format_float(*v));
                }
            }
            if !d.samples.is_empty() {
                let _ = writeln!(out, "\n[diagnostics.samples]");
                for (k, values) in &d.samples {
                    let items: Vec<String> = values.iter().map(|v| format_float(*v)).collect();
                    let _ = writeln!(out, "{k} = [{}]", items.join(", "));
                }
            }
        }
        out
    }

    /// One line per diagnostic, for terminals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for d in &self.diagnostics {
            let _ = writeln!(
                out,
                "{} {}: {}: observed {:.3e} (threshold {:.1e})",
                if d.pass { "PASS" } else { "FAIL" },
                self.scenario,
                d.name(),
                d.observed,
                d.threshold
            );
        }
        out
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Comma-separated table: `t, q.., p.., S, H, divergence, invariants..`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states().first().map_or(1, |s| s.dim());
    let mut header: Vec<String> = vec!["t".into()];
    if n == 1 {
        header.extend(["q".into(), "p".into()]);
    } else {
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("p{i}")));
    }
    header.extend(["S".into(), "H".into(), "divergence".into()]);
    header.extend(traj.invariant_names().iter().cloned());
    let mut out = header.join(",");
    out.push('\n');
    for ((t, state), diag) in traj.times().iter().zip(traj.states()).zip(traj.diagnostics()) {
        let mut row = vec![format_float(*t)];
        row.extend(state.q().iter().chain(state.p()).map(|v| format_float(*v)));
        row.push(format_float(state.s()));
        row.push(format_float(diag.hamiltonian));
        row.push(format_float(diag.divergence));
        row.extend(diag.invariants.iter().map(|v| format_float(*v)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
