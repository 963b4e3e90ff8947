//! Scenario files: strict TOML describing a model, an initial state, a time span,
//! integrator settings, the diagnostics to run and where to write results.
//!
//! ```toml
//! name = "damped_oscillator"
//!
//! [model]
//! kind = "linear_dissipation"   # linear_dissipation | damped_parametric | caldirola_kanai
//! m = 1.0
//! gamma = 0.1
//! potential = "q^2/2"           # V(q); damped_parametric takes frequency = "omega(t)"
//! # transform = "expanding"     # integrate the model pushed through a named map
//!
//! [initial]
//! q = 1.0
//! p = 0.0
//! s = 0.0
//!
//! [time]
//! end = 10.0
//!
//! [[diagnostics]]
//! kind = "hamiltonian_decay"
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use contact_core::dynamics::IntegratorOptions;
use contact_core::model::{
    make_caldirola_kanai, make_damped_parametric, make_linear_dissipation, ExtendedState, HamiltonianModel,
    ScalarFunction,
};
use contact_core::transforms::{self, ContactMap};

use crate::expr::{parse_expression, ExprError, Expression};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    LinearDissipation,
    DampedParametric,
    CaldirolaKanai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapName {
    Identity,
    Ck,
    Expanding,
    Invariants,
}

impl fmt::Display for MapName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Ck => "ck",
            Self::Expanding => "expanding",
            Self::Invariants => "invariants",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelName,
    pub m: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<MapName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q: f64,
    pub p: f64,
    pub s: f64,
    #[serde(default)]
    pub t: f64,
}

fn default_sample_interval() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub end: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Adaptive,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: MethodName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { method: MethodName::Adaptive, rel_tol: None, abs_tol: None, step: None, max_steps: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    HamiltonianDecay,
    EnergyConservation,
    EnergyDissipation,
    Divergence,
    Measure,
    Invariants,
    HjResidual,
    TransformVerify,
}

impl DiagnosticKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::HamiltonianDecay => "hamiltonian_decay",
            Self::EnergyConservation => "energy_conservation",
            Self::EnergyDissipation => "energy_dissipation",
            Self::Divergence => "divergence",
            Self::Measure => "measure",
            Self::Invariants => "invariants",
            Self::HjResidual => "hj_residual",
            Self::TransformVerify => "transform_verify",
        }
    }

    pub fn default_threshold(self) -> f64 {
        match self {
            Self::HamiltonianDecay => 1e-6,
            Self::EnergyConservation => 1e-8,
            Self::EnergyDissipation => 1e-5,
            Self::Divergence => 1e-5,
            Self::Measure => 1e-4,
            Self::Invariants => 1e-6,
            Self::HjResidual => 1e-8,
            Self::TransformVerify => 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticSpec {
    pub kind: DiagnosticKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Named map for `transform_verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapName>,
    /// Random points for `transform_verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Riccati initial value for `hj_residual`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    /// Grid size per axis for `hj_residual`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// `q` range for `hj_residual`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_range: Option<[f64; 2]>,
}

impl DiagnosticSpec {
    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or_else(|| self.kind.default_threshold())
    }
}

fn default_true() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub plots: bool,
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}

fn default_report() -> String {
    "report.toml".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { trajectory: default_trajectory(), report: default_report(), plots: true }
    }
}

/// The file as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub model: ModelSection,
    pub initial: InitialSection,
    pub time: TimeSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<DiagnosticSpec>,
    #[serde(default)]
    pub output: OutputSection,
}

/// A validated scenario with its model built and its expressions parsed.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub file: ScenarioFile,
    pub potential: Option<Expression>,
    pub frequency: Option<Expression>,
    pub model: HamiltonianModel,
    /// The model actually integrated: `model`, or its pushforward when a transform is set.
    pub integrated: HamiltonianModel,
    pub transform: Option<ContactMap>,
    pub initial: ExtendedState,
    pub options: IntegratorOptions,
}

impl ScenarioConfig {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn t_end(&self) -> f64 {
        self.file.time.end
    }

    pub fn mass(&self) -> f64 {
        self.file.model.m
    }

    pub fn gamma(&self) -> f64 {
        self.file.model.gamma
    }

    pub fn diagnostics(&self) -> &[DiagnosticSpec] {
        &self.file.diagnostics
    }

    /// Canonical TOML text; parsing it yields an equivalent scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario file serializes")
    }
}

fn expression_error(path: &str, text: &str, e: ExprError) -> ConfigError {
    invalid(path, format!("{e} in `{text}`"))
}

fn scalar_from(expr: &Expression) -> ScalarFunction {
    let (value, slope) = (expr.clone(), expr.derivative());
    ScalarFunction::new(expr.to_string(), move |x| value.eval(x).unwrap_or(f64::NAN), move |x| {
        slope.eval(x).unwrap_or(f64::NAN)
    })
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive (got {v})")))
    }
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be finite (got {v})")))
    }
}

fn build_map(map: MapName, m: f64, gamma: f64, frequency: Option<&ScalarFunction>, t0: f64, t1: f64) -> Result<ContactMap, ConfigError> {
    let wrap = |e: contact_core::ContactError| invalid("map", e.to_string());
    match map {
        MapName::Identity => Ok(transforms::identity(1)),
        MapName::Ck => transforms::map_ck(m, gamma).map_err(wrap),
        MapName::Expanding => transforms::map_expanding(m, gamma).map_err(wrap),
        MapName::Invariants => {
            let frequency = frequency
                .ok_or_else(|| invalid("map", "the invariants map needs a damped_parametric model"))?;
            let erm = crate::runner::ermakov_for(frequency, gamma, t0, t1).map_err(wrap)?;
            transforms::map_invariants(m, gamma, &erm).map_err(wrap)
        }
    }
}

/// Builds the named map for a validated scenario.
pub fn scenario_map(config: &ScenarioConfig, map: MapName) -> Result<ContactMap, ConfigError> {
    let frequency = config.frequency.as_ref().map(scalar_from);
    build_map(map, config.mass(), config.gamma(), frequency.as_ref(), config.initial.t(), config.t_end())
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    validate(file)
}

pub fn validate(file: ScenarioFile) -> Result<ScenarioConfig, ConfigError> {
    if file.name.trim().is_empty()
        || !file.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(invalid("name", "must be a non-empty identifier of letters, digits, `_` or `-`"));
    }
    let model_section = &file.model;
    positive("model.m", model_section.m)?;
    if !(model_section.gamma.is_finite() && model_section.gamma >= 0.0) {
        return Err(invalid("model.gamma", format!("must be non-negative (got {})", model_section.gamma)));
    }
    let init = &file.initial;
    for (path, v) in [("initial.q", init.q), ("initial.p", init.p), ("initial.s", init.s), ("initial.t", init.t)] {
        finite(path, v)?;
    }
    finite("time.end", file.time.end)?;
    if !(file.time.end > init.t) {
        return Err(invalid("time.end", format!("must exceed initial.t = {} (got {})", init.t, file.time.end)));
    }
    positive("time.sample_interval", file.time.sample_interval)?;

    let (m, gamma) = (model_section.m, model_section.gamma);
    let parse_in = |path: &str, text: &Option<String>, var: &str| -> Result<Expression, ConfigError> {
        let text = text.as_ref().ok_or_else(|| invalid(path, "is required for this model"))?;
        parse_expression(text, var).map_err(|e| expression_error(path, text, e))
    };
    let forbid = |path: &str, present: bool| -> Result<(), ConfigError> {
        if present {
            Err(invalid(path, "is not used by this model"))
        } else {
            Ok(())
        }
    };
    let (potential, frequency) = match model_section.kind {
        ModelName::LinearDissipation | ModelName::CaldirolaKanai => {
            forbid("model.frequency", model_section.frequency.is_some())?;
            (Some(parse_in("model.potential", &model_section.potential, "q")?), None)
        }
        ModelName::DampedParametric => {
            forbid("model.potential", model_section.potential.is_some())?;
            (None, Some(parse_in("model.frequency", &model_section.frequency, "t")?))
        }
    };
    if let Some(v) = &potential {
        v.eval(init.q).map_err(|e| invalid("model.potential", format!("{e} at initial q = {}", init.q)))?;
    }
    if let Some(w) = &frequency {
        w.eval(init.t).map_err(|e| invalid("model.frequency", format!("{e} at initial t = {}", init.t)))?;
    }

    let model_error = |e: contact_core::ContactError| invalid("model", e.to_string());
    let frequency_fn = frequency.as_ref().map(|w| {
        let f = scalar_from(w);
        if w.is_constant() {
            ScalarFunction::constant(f.eval(0.0))
        } else {
            f
        }
    });
    let model = match model_section.kind {
        ModelName::LinearDissipation => {
            make_linear_dissipation(m, gamma, scalar_from(potential.as_ref().expect("parsed"))).map_err(model_error)?
        }
        ModelName::CaldirolaKanai => {
            make_caldirola_kanai(m, gamma, scalar_from(potential.as_ref().expect("parsed"))).map_err(model_error)?
        }
        ModelName::DampedParametric => {
            make_damped_parametric(m, gamma, frequency_fn.clone().expect("parsed")).map_err(model_error)?
        }
    };
    let physical_initial =
        ExtendedState::from_parts(vec![init.q], vec![init.p], init.s, init.t).map_err(|e| invalid("initial", e.to_string()))?;

    let (integrated, transform, initial) = match model_section.transform {
        None => (model.clone(), None, physical_initial),
        Some(map_name) => {
            let map = build_map(map_name, m, gamma, frequency_fn.as_ref(), init.t, file.time.end)
                .map_err(|e| match e {
                    ConfigError::Invalid { message, .. } => invalid("model.transform", message),
                    other => other,
                })?;
            let pushed = transforms::pushforward_hamiltonian(&map, &model)
                .map_err(|e| invalid("model.transform", e.to_string()))?;
            let start = map.apply(&physical_initial).map_err(|e| invalid("model.transform", e.to_string()))?;
            (pushed, Some(map), start)
        }
    };

    let section = &file.integrator;
    let mut options = match section.method {
        MethodName::Adaptive => {
            if section.step.is_some() {
                return Err(invalid("integrator.step", "applies only to method = \"rk4\""));
            }
            let rel = section.rel_tol.unwrap_or(1e-10);
            let abs = section.abs_tol.unwrap_or(1e-12);
            positive("integrator.rel_tol", rel)?;
            positive("integrator.abs_tol", abs)?;
            IntegratorOptions::adaptive(rel, abs)
        }
        MethodName::Rk4 => {
            if section.rel_tol.is_some() || section.abs_tol.is_some() {
                return Err(invalid("integrator", "tolerances apply only to method = \"adaptive\""));
            }
            let step = section.step.ok_or_else(|| invalid("integrator.step", "is required for method = \"rk4\""))?;
            positive("integrator.step", step)?;
            IntegratorOptions::fixed(step)
        }
    };
    if let Some(max) = section.max_steps {
        if max == 0 {
            return Err(invalid("integrator.max_steps", "must be positive"));
        }
        options = options.with_max_steps(max);
    }
    options = options.with_sample_interval(file.time.sample_interval);

    for (key, value) in [("output.trajectory", &file.output.trajectory), ("output.report", &file.output.report)] {
        let plain = std::path::Path::new(value).file_name().is_some_and(|f| f == value.as_str());
        if !plain || value.ends_with(".svg") {
            return Err(invalid(key, "must be a plain file name (not a path, not .svg)"));
        }
    }
    if file.output.trajectory == file.output.report {
        return Err(invalid("output.report", "must differ from output.trajectory"));
    }

    for (i, d) in file.diagnostics.iter().enumerate() {
        let path = |key: &str| format!("diagnostics[{i}].{key}");
        if let Some(t) = d.threshold {
            positive(&path("threshold"), t)?;
        }
        let only = |key: &str, present: bool, kind: DiagnosticKind| -> Result<(), ConfigError> {
            if present && d.kind != kind {
                Err(invalid(path(key), format!("applies only to kind = \"{}\"", kind.name())))
            } else {
                Ok(())
            }
        };
        only("map", d.map.is_some(), DiagnosticKind::TransformVerify)?;
        only("points", d.points.is_some(), DiagnosticKind::TransformVerify)?;
        only("c0", d.c0.is_some(), DiagnosticKind::HjResidual)?;
        only("grid", d.grid.is_some(), DiagnosticKind::HjResidual)?;
        only("q_range", d.q_range.is_some(), DiagnosticKind::HjResidual)?;
        let needs_physical = transform.is_none();
        match d.kind {
            DiagnosticKind::TransformVerify => {
                let map = d.map.ok_or_else(|| invalid(path("map"), "is required for transform_verify"))?;
                if map == MapName::Invariants && frequency.is_none() {
                    return Err(invalid(path("map"), "the invariants map needs a damped_parametric model"));
                }
                if d.points == Some(0) {
                    return Err(invalid(path("points"), "must be positive"));
                }
            }
            DiagnosticKind::Invariants | DiagnosticKind::HjResidual => {
                if model_section.kind != ModelName::DampedParametric {
                    return Err(invalid(path("kind"), "requires a damped_parametric model"));
                }
                if !needs_physical {
                    return Err(invalid(path("kind"), "needs the untransformed model"));
                }
                if let Some(c0) = d.c0 {
                    finite(&path("c0"), c0)?;
                }
                if let Some(n) = d.grid {
                    if n < 2 {
                        return Err(invalid(path("grid"), "needs at least 2 points per axis"));
                    }
                }
                if let Some([lo, hi]) = d.q_range {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(invalid(path("q_range"), "must be an increasing pair"));
                    }
                }
            }
            DiagnosticKind::HamiltonianDecay => {
                if !needs_physical {
                    return Err(invalid(path("kind"), "needs the untransformed model"));
                }
                if model.depends_on_t() {
                    return Err(invalid(path("kind"), "needs a model without explicit time dependence"));
                }
            }
            DiagnosticKind::EnergyDissipation => {
                if !needs_physical {
                    return Err(invalid(path("kind"), "needs the untransformed model"));
                }
            }
            DiagnosticKind::Measure => {
                if integrated.depends_on_t() {
                    return Err(invalid(path("kind"), "needs a model without explicit time dependence"));
                }
            }
            DiagnosticKind::EnergyConservation | DiagnosticKind::Divergence => {}
        }
    }

    Ok(ScenarioConfig { file: file.clone(), potential, frequency, model, integrated, transform, initial, options })
}
