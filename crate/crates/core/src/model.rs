//! Contact states and contact Hamiltonian descriptors.
//!
//! A contact Hamiltonian is a function `H(q, p, S, t)` on the extended contact
//! phase space. Models carry the value function, optional closed-form partial
//! derivatives (central finite differences are used otherwise), and flags
//! declaring whether `H` depends on the contact variable `S` or on time.

use std::fmt;
use std::sync::Arc;

use crate::error::{ContactError, Result, StateLabel};

/// Relative step used by every finite-difference fallback in the crate.
pub const FD_RELATIVE_STEP: f64 = 1e-6;

/// Step for coordinate value `x`: `eps * max(1, |x|)`.
pub(crate) fn fd_step(x: f64) -> f64 {
    FD_RELATIVE_STEP * x.abs().max(1.0)
}

/// A point `(q, p, S)` of the contact phase space with `n` degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactState {
    q: Vec<f64>,
    p: Vec<f64>,
    s: f64,
}

impl ContactState {
    pub fn new(q: Vec<f64>, p: Vec<f64>, s: f64) -> Result<Self> {
        if q.is_empty() {
            return Err(ContactError::InvalidState("at least one degree of freedom is required".into()));
        }
        if q.len() != p.len() {
            return Err(ContactError::InvalidState(format!(
                "q has {} components but p has {}",
                q.len(),
                p.len()
            )));
        }
        if !(q.iter().chain(p.iter()).all(|v| v.is_finite()) && s.is_finite()) {
            return Err(ContactError::InvalidState(format!(
                "non-finite component in (q = {q:?}, p = {p:?}, S = {s})"
            )));
        }
        Ok(Self { q, p, s })
    }

    /// Rebuilds a state from the packed layout `[q.., p.., S]`.
    pub fn from_packed(y: &[f64]) -> Result<Self> {
        if y.len() < 3 || y.len().is_multiple_of(2) {
            return Err(ContactError::InvalidState(format!(
                "packed contact state must have odd length 2n + 1 >= 3, got {}",
                y.len()
            )));
        }
        let n = (y.len() - 1) / 2;
        Self::new(y[..n].to_vec(), y[n..2 * n].to_vec(), y[2 * n])
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Packs the state as `[q.., p.., S]`.
    pub fn packed(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.dim() + 1);
        y.extend_from_slice(&self.q);
        y.extend_from_slice(&self.p);
        y.push(self.s);
        y
    }
}

/// A contact state together with the time coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    state: ContactState,
    t: f64,
}

impl ExtendedState {
    pub fn new(state: ContactState, t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(ContactError::InvalidState(format!("non-finite time {t}")));
        }
        Ok(Self { state, t })
    }

    pub fn from_parts(q: Vec<f64>, p: Vec<f64>, s: f64, t: f64) -> Result<Self> {
        Self::new(ContactState::new(q, p, s)?, t)
    }

    pub fn from_packed(y: &[f64], t: f64) -> Result<Self> {
        Self::new(ContactState::from_packed(y)?, t)
    }

    /// One-degree-of-freedom point.
    ///
    /// # Panics
    ///
    /// Panics if any coordinate is non-finite; use [`ExtendedState::from_parts`]
    /// for fallible construction.
    pub fn point1(q: f64, p: f64, s: f64, t: f64) -> Self {
        Self::from_parts(vec![q], vec![p], s, t).expect("finite one-dimensional state")
    }

    pub fn state(&self) -> &ContactState {
        &self.state
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn q(&self) -> &[f64] {
        &self.state.q
    }

    pub fn p(&self) -> &[f64] {
        &self.state.p
    }

    pub fn s(&self) -> f64 {
        self.state.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// First position coordinate, convenient for `n = 1` systems.
    pub fn q1(&self) -> f64 {
        self.state.q[0]
    }

    pub fn p1(&self) -> f64 {
        self.state.p[0]
    }

    pub fn with_t(&self, t: f64) -> Self {
        Self { state: self.state.clone(), t }
    }

    pub(crate) fn label(&self) -> StateLabel {
        StateLabel {
            q: self.state.q.clone(),
            p: self.state.p.clone(),
            s: self.state.s,
            t: self.t,
        }
    }

    /// Copy with one packed coordinate (`[q.., p.., S, t]` indexing) shifted by `delta`.
    pub(crate) fn shifted(&self, index: usize, delta: f64) -> Self {
        let n = self.dim();
        let mut out = self.clone();
        match index {
            i if i < n => out.state.q[i] += delta,
            i if i < 2 * n => out.state.p[i - n] += delta,
            i if i == 2 * n => out.state.s += delta,
            _ => out.t += delta,
        }
        out
    }

    pub(crate) fn coordinate(&self, index: usize) -> f64 {
        let n = self.dim();
        match index {
            i if i < n => self.state.q[i],
            i if i < 2 * n => self.state.p[i - n],
            i if i == 2 * n => self.state.s,
            _ => self.t,
        }
    }
}

/// Partial derivatives of a phase-space function.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDerivatives {
    pub dh_dq: Vec<f64>,
    pub dh_dp: Vec<f64>,
    pub dh_ds: f64,
    pub dh_dt: f64,
}

impl PartialDerivatives {
    pub fn zero(n: usize) -> Self {
        Self { dh_dq: vec![0.0; n], dh_dp: vec![0.0; n], dh_ds: 0.0, dh_dt: 0.0 }
    }

    fn all_finite(&self) -> bool {
        self.dh_dq.iter().chain(self.dh_dp.iter()).all(|v| v.is_finite())
            && self.dh_ds.is_finite()
            && self.dh_dt.is_finite()
    }
}

pub type ValueFn = Arc<dyn Fn(&ExtendedState) -> Result<f64> + Send + Sync>;
pub type PartialsFn = Arc<dyn Fn(&ExtendedState) -> Result<PartialDerivatives> + Send + Sync>;

/// A real function of one variable carrying its derivative, used for
/// potentials `V(q)`, frequencies `omega(t)` and dissipation terms `h(S)`.
#[derive(Clone)]
pub struct ScalarFunction {
    label: String,
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    constant: Option<f64>,
}

impl ScalarFunction {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            constant: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            label: format!("{c}"),
            value: Arc::new(move |_| c),
            derivative: Arc::new(|_| 0.0),
            constant: Some(c),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `k x^2 / 2`.
    pub fn quadratic(k: f64) -> Self {
        Self::new(format!("{k}*x^2/2"), move |x| 0.5 * k * x * x, move |x| k * x)
    }

    /// `c x`.
    pub fn linear(c: f64) -> Self {
        Self::new(format!("{c}*x"), move |x| c * x, move |_| c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    /// The value if the function was declared constant.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction").field("label", &self.label).finish()
    }
}

/// A function `F(q, p, S, t)` with optional closed-form partial derivatives.
#[derive(Clone)]
pub struct PhaseFunction {
    n: usize,
    value: ValueFn,
    partials: Option<PartialsFn>,
    depends_on_s: bool,
    depends_on_t: bool,
}

impl PhaseFunction {
    pub fn new(n: usize, value: ValueFn) -> Self {
        Self { n, value, partials: None, depends_on_s: true, depends_on_t: true }
    }

    pub fn with_partials(mut self, partials: PartialsFn) -> Self {
        self.partials = Some(partials);
        self
    }

    pub fn with_dependence(mut self, depends_on_s: bool, depends_on_t: bool) -> Self {
        self.depends_on_s = depends_on_s;
        self.depends_on_t = depends_on_t;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn has_closed_partials(&self) -> bool {
        self.partials.is_some()
    }

    fn check_dim(&self, x: &ExtendedState) -> Result<()> {
        if x.dim() != self.n {
            return Err(ContactError::DimensionMismatch { expected: self.n, got: x.dim() });
        }
        Ok(())
    }

    pub fn eval(&self, x: &ExtendedState) -> Result<f64> {
        self.check_dim(x)?;
        let v = (self.value)(x)?;
        if !v.is_finite() {
            return Err(ContactError::NonFinite { what: "function value", at: x.label() });
        }
        Ok(v)
    }

    pub fn partials(&self, x: &ExtendedState) -> Result<PartialDerivatives> {
        self.check_dim(x)?;
        let mut d = match &self.partials {
            Some(f) => f(x)?,
            None => self.finite_difference_partials(x)?,
        };
        // Flag contract: declared independence is exact.
        if !self.depends_on_s {
            d.dh_ds = 0.0;
        }
        if !self.depends_on_t {
            d.dh_dt = 0.0;
        }
        if d.dh_dq.len() != self.n || d.dh_dp.len() != self.n {
            return Err(ContactError::DimensionMismatch { expected: self.n, got: d.dh_dq.len() });
        }
        if !d.all_finite() {
            return Err(ContactError::NonFinite { what: "partial derivative", at: x.label() });
        }
        Ok(d)
    }

    /// Central differences with step `1e-6 * max(1, |x_i|)` in every coordinate.
    pub fn finite_difference_partials(&self, x: &ExtendedState) -> Result<PartialDerivatives> {
        self.check_dim(x)?;
        let n = self.n;
        let mut grad = vec![0.0; 2 * n + 2];
        for (i, g) in grad.iter_mut().enumerate() {
            if (i == 2 * n && !self.depends_on_s) || (i == 2 * n + 1 && !self.depends_on_t) {
                continue;
            }
            let h = fd_step(x.coordinate(i));
            let fp = self.eval(&x.shifted(i, h))?;
            let fm = self.eval(&x.shifted(i, -h))?;
            *g = (fp - fm) / (2.0 * h);
        }
        Ok(PartialDerivatives {
            dh_dq: grad[..n].to_vec(),
            dh_dp: grad[n..2 * n].to_vec(),
            dh_ds: grad[2 * n],
            dh_dt: grad[2 * n + 1],
        })
    }
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseFunction")
            .field("n", &self.n)
            .field("closed_partials", &self.partials.is_some())
            .field("depends_on_s", &self.depends_on_s)
            .field("depends_on_t", &self.depends_on_t)
            .finish()
    }
}

/// Which constructor produced a model, with its physical parameters.
#[derive(Debug, Clone)]
pub enum ModelKind {
    /// `p^2/2m + V(q) + gamma S`.
    LinearDissipation { mass: f64, gamma: f64, potential: ScalarFunction },
    /// `p^2/2m + m omega(t)^2 q^2 / 2 + gamma S`.
    DampedParametric { mass: f64, gamma: f64, frequency: ScalarFunction },
    /// `exp(-gamma t) p^2/2m + exp(gamma t) V(q)`.
    CaldirolaKanai { mass: f64, gamma: f64, potential: ScalarFunction },
    Custom,
    /// Produced by pushing a model through a contact map.
    Transformed,
}

impl ModelKind {
    pub fn mass(&self) -> Option<f64> {
        match self {
            Self::LinearDissipation { mass, .. }
            | Self::DampedParametric { mass, .. }
            | Self::CaldirolaKanai { mass, .. } => Some(*mass),
            _ => None,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Self::LinearDissipation { gamma, .. }
            | Self::DampedParametric { gamma, .. }
            | Self::CaldirolaKanai { gamma, .. } => Some(*gamma),
            _ => None,
        }
    }
}

/// Split `H = H_mec(q, p, t) + h(S)` of a dissipative Hamiltonian.
#[derive(Debug, Clone)]
pub struct DissipativeSplit {
    pub mechanical: PhaseFunction,
    pub dissipation: ScalarFunction,
}

/// Independence flags for [`make_custom`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelFlags {
    pub depends_on_s: bool,
    pub depends_on_t: bool,
}

impl Default for ModelFlags {
    fn default() -> Self {
        Self { depends_on_s: true, depends_on_t: true }
    }
}

/// A contact Hamiltonian `H(q, p, S, t)`.
#[derive(Clone)]
pub struct HamiltonianModel {
    name: String,
    kind: ModelKind,
    function: PhaseFunction,
    split: Option<DissipativeSplit>,
}

impl HamiltonianModel {
    pub fn from_function(name: impl Into<String>, kind: ModelKind, function: PhaseFunction) -> Self {
        Self { name: name.into(), kind, function, split: None }
    }

    pub fn with_split(mut self, split: DissipativeSplit) -> Self {
        self.split = Some(split);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.function.n
    }

    pub fn depends_on_s(&self) -> bool {
        self.function.depends_on_s
    }

    pub fn depends_on_t(&self) -> bool {
        self.function.depends_on_t
    }

    pub fn function(&self) -> &PhaseFunction {
        &self.function
    }

    pub fn split(&self) -> Option<&DissipativeSplit> {
        self.split.as_ref()
    }

    pub fn has_closed_partials(&self) -> bool {
        self.function.has_closed_partials()
    }

    pub fn eval(&self, x: &ExtendedState) -> Result<f64> {
        self.function.eval(x)
    }

    pub fn partials(&self, x: &ExtendedState) -> Result<PartialDerivatives> {
        self.function.partials(x)
    }

    pub fn finite_difference_partials(&self, x: &ExtendedState) -> Result<PartialDerivatives> {
        self.function.finite_difference_partials(x)
    }
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("function", &self.function)
            .field("split", &self.split.is_some())
            .finish()
    }
}

/// `H(q, p, S, t)` at `x`.
pub fn eval(model: &HamiltonianModel, x: &ExtendedState) -> Result<f64> {
    model.eval(x)
}

pub fn partials(model: &HamiltonianModel, x: &ExtendedState) -> Result<PartialDerivatives> {
    model.partials(x)
}

fn check_mass_gamma(m: f64, gamma: f64) -> Result<()> {
    if !(m.is_finite() && m > 0.0) {
        return Err(ContactError::InvalidParameter { name: "m", value: m, reason: "mass must be positive" });
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(ContactError::InvalidParameter {
            name: "gamma",
            value: gamma,
            reason: "damping rate must be non-negative",
        });
    }
    Ok(())
}

fn mechanical_kinetic_plus(
    m: f64,
    potential: impl Fn(f64, f64) -> (f64, f64, f64) + Send + Sync + Clone + 'static,
    depends_on_t: bool,
) -> PhaseFunction {
    // potential(q, t) -> (V, dV/dq, dV/dt)
    let pv = potential.clone();
    let value: ValueFn = Arc::new(move |x: &ExtendedState| {
        let (q, p) = (x.q1(), x.p1());
        Ok(p * p / (2.0 * m) + pv(q, x.t()).0)
    });
    let partials: PartialsFn = Arc::new(move |x: &ExtendedState| {
        let (q, p) = (x.q1(), x.p1());
        let (_, dv_dq, dv_dt) = potential(q, x.t());
        Ok(PartialDerivatives { dh_dq: vec![dv_dq], dh_dp: vec![p / m], dh_ds: 0.0, dh_dt: dv_dt })
    });
    PhaseFunction::new(1, value).with_partials(partials).with_dependence(false, depends_on_t)
}

/// `H = p^2/2m + V(q) + gamma S`.
pub fn make_linear_dissipation(m: f64, gamma: f64, potential: ScalarFunction) -> Result<HamiltonianModel> {
    check_mass_gamma(m, gamma)?;
    let v = potential.clone();
    let value: ValueFn = Arc::new(move |x: &ExtendedState| {
        let (q, p) = (x.q1(), x.p1());
        Ok(p * p / (2.0 * m) + v.eval(q) + gamma * x.s())
    });
    let v = potential.clone();
    let partials: PartialsFn = Arc::new(move |x: &ExtendedState| {
        let (q, p) = (x.q1(), x.p1());
        Ok(PartialDerivatives { dh_dq: vec![v.derivative(q)], dh_dp: vec![p / m], dh_ds: gamma, dh_dt: 0.0 })
    });
    let function = PhaseFunction::new(1, value).with_partials(partials).with_dependence(gamma > 0.0, false);
    let v = potential.clone();
    let mechanical = mechanical_kinetic_plus(m, move |q, _| (v.eval(q), v.derivative(q), 0.0), false);
    Ok(HamiltonianModel::from_function(
        "linear_dissipation",
        ModelKind::LinearDissipation { mass: m, gamma, potential },
        function,
    )
    .with_split(DissipativeSplit { mechanical, dissipation: ScalarFunction::linear(gamma) }))
}

/// `H = p^2/2m + m omega(t)^2 q^2 / 2 + gamma S`.
pub fn make_damped_parametric(m: f64, gamma: f64, frequency: ScalarFunction) -> Result<HamiltonianModel> {
    check_mass_gamma(m, gamma)?;
    let time_dependent = frequency.constant_value().is_none();
    let w = frequency.clone();
    let value: ValueFn = Arc::new(move |x: &ExtendedState| {
        let (q, p) = (x.q1(), x.p1());
        let om = w.eval(x.t());
        Ok(p * p / (2.0 * m) + 0.5 * m * om * om * q * q + gamma * x.s())
    });
    let w = frequency.clone();
    let partials: PartialsFn = Arc::new(move |x: &ExtendedState| {
        let (q, p, t) = (x.q1(), x.p1(), x.t());
        let om = w.eval(t);
        Ok(PartialDerivatives {
            dh_dq: vec![m * om * om * q],
            dh_dp: vec![p / m],
            dh_ds: gamma,
            dh_dt: m * om * w.derivative(t) * q * q,
        })
    });
    let function = PhaseFunction::new(1, value).with_partials(partials).with_dependence(gamma > 0.0, time_dependent);
    let w = frequency.clone();
    let mechanical = mechanical_kinetic_plus(
        m,
        move |q, t| {
            let om = w.eval(t);
            (0.5 * m * om * om * q * q, m * om * om * q, m * om * w.derivative(t) * q * q)
        },
        time_dependent,
    );
    Ok(HamiltonianModel::from_function(
        "damped_parametric",
        ModelKind::DampedParametric { mass: m, gamma, frequency },
        function,
    )
    .with_split(DissipativeSplit { mechanical, dissipation: ScalarFunction::linear(gamma) }))
}

/// `H = exp(-gamma t) p^2/2m + exp(gamma t) V(q)`, independent of `S`.
pub fn make_caldirola_kanai(m: f64, gamma: f64, potential: ScalarFunction) -> Result<HamiltonianModel> {
    check_mass_gamma(m, gamma)?;
    let v = potential.clone();
    let value: ValueFn = Arc::new(move |x: &ExtendedState| {
        let (q, p, t) = (x.q1(), x.p1(), x.t());
        Ok((-gamma * t).exp() * p * p / (2.0 * m) + (gamma * t).exp() * v.eval(q))
    });
    let v = potential.clone();
    let partials: PartialsFn = Arc::new(move |x: &ExtendedState| {
        let (q, p, t) = (x.q1(), x.p1(), x.t());
        let (shrink, grow) = ((-gamma * t).exp(), (gamma * t).exp());
        Ok(PartialDerivatives {
            dh_dq: vec![grow * v.derivative(q)],
            dh_dp: vec![shrink * p / m],
            dh_ds: 0.0,
            dh_dt: gamma * (-shrink * p * p / (2.0 * m) + grow * v.eval(q)),
        })
    });
    let function = PhaseFunction::new(1, value).with_partials(partials).with_dependence(false, true);
    let mechanical = function.clone();
    Ok(HamiltonianModel::from_function(
        "caldirola_kanai",
        ModelKind::CaldirolaKanai { mass: m, gamma, potential },
        function,
    )
    .with_split(DissipativeSplit { mechanical, dissipation: ScalarFunction::zero() }))
}

/// Wraps user callables; finite-difference partials are used when none are given.
pub fn make_custom(
    n: usize,
    value: impl Fn(&ExtendedState) -> f64 + Send + Sync + 'static,
    partials: Option<PartialsFn>,
    flags: ModelFlags,
) -> Result<HamiltonianModel> {
    if n == 0 {
        return Err(ContactError::InvalidParameter {
            name: "n",
            value: 0.0,
            reason: "at least one degree of freedom is required",
        });
    }
    let value: ValueFn = Arc::new(move |x: &ExtendedState| Ok(value(x)));
    let mut function = PhaseFunction::new(n, value).with_dependence(flags.depends_on_s, flags.depends_on_t);
    if let Some(p) = partials {
        function = function.with_partials(p);
    }
    Ok(HamiltonianModel::from_function("custom", ModelKind::Custom, function))
}
