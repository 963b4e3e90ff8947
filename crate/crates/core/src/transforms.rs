//! Time-dependent contact transformations `(q, p, S, t) -> (Q, P, S~, t)`.
//!
//! A map is contact when `dS~ - P dQ = f (dS - p dq)` up to terms in `dt`, i.e.
//!
//! ```text
//! f      = dS~/dS   - P_a dQ^a/dS
//! f p_i  = -(dS~/dq^i - P_a dQ^a/dq^i)
//! 0      = dS~/dp_i - P_a dQ^a/dp_i
//! ```
//!
//! [`verify`] estimates `f` from the first line and reports the residuals of the
//! other two at every sample point.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ContactError, Result};
use crate::model::{fd_step, ExtendedState, HamiltonianModel, ModelKind, PartialDerivatives, PhaseFunction, ValueFn};
use crate::oscillator::ErmakovSolution;

/// Default tolerance for [`verify`].
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

pub type PointMap = Arc<dyn Fn(&ExtendedState) -> Result<ExtendedState> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&ExtendedState) -> Result<MapJacobian> + Send + Sync>;
pub type FactorFn = Arc<dyn Fn(&ExtendedState) -> Result<f64> + Send + Sync>;

/// Derivatives of `(Q.., P.., S~)` with respect to `(q.., p.., S)` (rows by columns)
/// together with the explicit time derivatives of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct MapJacobian {
    pub spatial: DMatrix<f64>,
    pub time: DVector<f64>,
}

impl MapJacobian {
    fn dim(&self) -> usize {
        (self.spatial.nrows() - 1) / 2
    }

    /// `d S~/d x_j - P_a d Q^a/d x_j` for packed column `j`.
    fn contact_row(&self, image: &ExtendedState, column: usize) -> f64 {
        let n = self.dim();
        let mut value = self.spatial[(2 * n, column)];
        for a in 0..n {
            value -= image.p()[a] * self.spatial[(a, column)];
        }
        value
    }
}

#[derive(Clone)]
pub struct ContactMap {
    name: String,
    n: usize,
    forward: PointMap,
    inverse: Option<PointMap>,
    jacobian: Option<JacobianFn>,
    declared_f: Option<FactorFn>,
    probes: Vec<ExtendedState>,
}

impl fmt::Debug for ContactMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactMap")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("inverse", &self.inverse.is_some())
            .field("jacobian", &self.jacobian.is_some())
            .field("declared_f", &self.declared_f.is_some())
            .finish()
    }
}

impl ContactMap {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        forward: impl Fn(&ExtendedState) -> Result<ExtendedState> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            forward: Arc::new(forward),
            inverse: None,
            jacobian: None,
            declared_f: None,
            probes: Vec::new(),
        }
    }

    pub fn with_inverse(
        mut self,
        inverse: impl Fn(&ExtendedState) -> Result<ExtendedState> + Send + Sync + 'static,
    ) -> Self {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn with_jacobian(mut self, jacobian: impl Fn(&ExtendedState) -> Result<MapJacobian> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_declared_factor(mut self, f: impl Fn(&ExtendedState) -> Result<f64> + Send + Sync + 'static) -> Self {
        self.declared_f = Some(Arc::new(f));
        self
    }

    /// Points at which [`pushforward_hamiltonian`] checks the map before accepting it.
    pub fn with_probes(mut self, probes: Vec<ExtendedState>) -> Self {
        self.probes = probes;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn has_closed_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn probes(&self) -> &[ExtendedState] {
        &self.probes
    }

    fn check_dim(&self, x: &ExtendedState) -> Result<()> {
        if x.dim() != self.n {
            return Err(ContactError::DimensionMismatch { expected: self.n, got: x.dim() });
        }
        Ok(())
    }

    pub fn apply(&self, x: &ExtendedState) -> Result<ExtendedState> {
        self.check_dim(x)?;
        let y = (self.forward)(x)?;
        if y.dim() != self.n {
            return Err(ContactError::DimensionMismatch { expected: self.n, got: y.dim() });
        }
        if y.t() != x.t() {
            return Err(ContactError::InvalidState(format!("map {} changed the time coordinate", self.name)));
        }
        Ok(y)
    }

    pub fn invert(&self, y: &ExtendedState) -> Result<ExtendedState> {
        self.check_dim(y)?;
        let inverse = self
            .inverse
            .as_ref()
            .ok_or_else(|| ContactError::Unsupported(format!("map {} has no inverse", self.name)))?;
        inverse(y)
    }

    pub fn declared_factor(&self, x: &ExtendedState) -> Option<Result<f64>> {
        self.declared_f.as_ref().map(|f| f(x))
    }

    /// Closed-form jacobian when supplied, central differences otherwise.
    pub fn jacobian(&self, x: &ExtendedState) -> Result<MapJacobian> {
        self.check_dim(x)?;
        match &self.jacobian {
            Some(j) => j(x),
            None => self.finite_difference_jacobian(x),
        }
    }

    /// Central differences with step `1e-6 max(1, |x_j|)`; one-sided second-order
    /// differences in `t` when the map is undefined on one side (e.g. at the start of an
    /// interpolated table).
    pub fn finite_difference_jacobian(&self, x: &ExtendedState) -> Result<MapJacobian> {
        let n = self.n;
        let size = 2 * n + 1;
        let mut spatial = DMatrix::zeros(size, size);
        let mut time = DVector::zeros(size);
        for column in 0..=size {
            let h = fd_step(x.coordinate(column));
            let plus = self.apply(&x.shifted(column, h));
            let minus = self.apply(&x.shifted(column, -h));
            let derivative: Vec<f64> = match (plus, minus) {
                (Ok(a), Ok(b)) => (0..size).map(|r| (a.coordinate(r) - b.coordinate(r)) / (2.0 * h)).collect(),
                (Ok(_), Err(ContactError::OutOfRange { .. })) if column == size => {
                    self.one_sided(x, column, h)?
                }
                (Err(ContactError::OutOfRange { .. }), Ok(_)) if column == size => {
                    self.one_sided(x, column, -h)?
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            for (r, d) in derivative.into_iter().enumerate() {
                if column == size {
                    time[r] = d;
                } else {
                    spatial[(r, column)] = d;
                }
            }
        }
        Ok(MapJacobian { spatial, time })
    }

    fn one_sided(&self, x: &ExtendedState, column: usize, h: f64) -> Result<Vec<f64>> {
        let y0 = self.apply(x)?;
        let y1 = self.apply(&x.shifted(column, h))?;
        let y2 = self.apply(&x.shifted(column, 2.0 * h))?;
        Ok((0..2 * self.n + 1)
            .map(|r| (-3.0 * y0.coordinate(r) + 4.0 * y1.coordinate(r) - y2.coordinate(r)) / (2.0 * h))
            .collect())
    }

    /// `then ∘ self`. The composite jacobian follows the chain rule when both parts have
    /// closed-form jacobians and falls back to finite differences otherwise.
    pub fn compose(&self, then: &ContactMap) -> Result<ContactMap> {
        if self.n != then.n {
            return Err(ContactError::DimensionMismatch { expected: self.n, got: then.n });
        }
        let (first, second) = (self.clone(), then.clone());
        let mut out = ContactMap::new(format!("{} then {}", self.name, then.name), self.n, move |x| {
            second.apply(&first.apply(x)?)
        });
        if self.has_inverse() && then.has_inverse() {
            let (first, second) = (self.clone(), then.clone());
            out = out.with_inverse(move |y| first.invert(&second.invert(y)?));
        }
        if self.has_closed_jacobian() && then.has_closed_jacobian() {
            let (first, second) = (self.clone(), then.clone());
            out = out.with_jacobian(move |x| {
                let inner = first.jacobian(x)?;
                let outer = second.jacobian(&first.apply(x)?)?;
                Ok(MapJacobian {
                    time: &outer.time + &outer.spatial * &inner.time,
                    spatial: outer.spatial * inner.spatial,
                })
            });
        }
        out.probes = self.probes.clone();
        Ok(out)
    }
}

/// The identity map on `n` degrees of freedom, with exact jacobian.
pub fn identity(n: usize) -> ContactMap {
    let size = 2 * n + 1;
    ContactMap::new("identity", n, |x| Ok(x.clone()))
        .with_inverse(|y| Ok(y.clone()))
        .with_jacobian(move |_| Ok(MapJacobian { spatial: DMatrix::identity(size, size), time: DVector::zeros(size) }))
        .with_declared_factor(|_| Ok(1.0))
        .with_probes(default_probes(n))
}

/// Residuals of the contact conditions at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCheck {
    pub point: ExtendedState,
    pub factor: f64,
    /// `-f p_i - dS~/dq^i + P_a dQ^a/dq^i`.
    pub momentum_residuals: Vec<f64>,
    /// `dS~/dp_i - P_a dQ^a/dp_i`.
    pub position_residuals: Vec<f64>,
    /// `|f - declared f|` when the map declares its factor.
    pub declared_mismatch: Option<f64>,
}

impl PointCheck {
    pub fn max_residual(&self) -> f64 {
        self.momentum_residuals
            .iter()
            .chain(&self.position_residuals)
            .chain(self.declared_mismatch.iter())
            .fold(0.0f64, |acc, r| acc.max(r.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformReport {
    pub map: String,
    pub points: Vec<PointCheck>,
    pub max_residual: f64,
    pub min_abs_factor: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl TransformReport {
    pub fn factors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.factor).collect()
    }
}

fn check_point(map: &ContactMap, x: &ExtendedState) -> Result<PointCheck> {
    let n = map.dim();
    let image = map.apply(x)?;
    let jac = map.jacobian(x)?;
    if jac.spatial.nrows() != 2 * n + 1 || jac.spatial.ncols() != 2 * n + 1 || jac.time.len() != 2 * n + 1 {
        return Err(ContactError::DimensionMismatch { expected: 2 * n + 1, got: jac.spatial.nrows() });
    }
    if jac.spatial.iter().chain(jac.time.iter()).any(|v| !v.is_finite()) {
        return Err(ContactError::NonFinite { what: "map jacobian", at: x.label() });
    }
    let factor = jac.contact_row(&image, 2 * n);
    let momentum_residuals = (0..n).map(|i| -factor * x.p()[i] - jac.contact_row(&image, i)).collect();
    let position_residuals = (0..n).map(|i| jac.contact_row(&image, n + i)).collect();
    let declared_mismatch = map.declared_factor(x).transpose()?.map(|d| (d - factor).abs());
    Ok(PointCheck { point: x.clone(), factor, momentum_residuals, position_residuals, declared_mismatch })
}

/// Checks the contact conditions at every sample point.
pub fn verify(map: &ContactMap, points: &[ExtendedState], tol: f64) -> Result<TransformReport> {
    if points.is_empty() {
        return Err(ContactError::TooFewSamples { needed: 1, got: 0 });
    }
    let checks = points.iter().map(|x| check_point(map, x)).collect::<Result<Vec<_>>>()?;
    let max_residual = checks.iter().fold(0.0f64, |acc, c| acc.max(c.max_residual()));
    let min_abs_factor = checks.iter().fold(f64::INFINITY, |acc, c| acc.min(c.factor.abs()));
    Ok(TransformReport {
        map: map.name().to_string(),
        points: checks,
        max_residual,
        min_abs_factor,
        tolerance: tol,
        pass: max_residual < tol && min_abs_factor > tol,
    })
}

/// `f = dS~/dS - P_a dQ^a/dS` at `x`.
pub fn conformal_factor(map: &ContactMap, x: &ExtendedState) -> Result<f64> {
    let image = map.apply(x)?;
    let jac = map.jacobian(x)?;
    Ok(jac.contact_row(&image, 2 * map.dim()))
}

/// The volume form scales by `f^{n+1}`.
pub fn volume_factor(f: f64, n: usize) -> f64 {
    f.powi(n as i32 + 1)
}

/// New Hamiltonian `K = f H - dS~/dt + P_a dQ^a/dt`, evaluated at the pre-image of
/// each point. Partial derivatives of `K` are taken by finite differences.
pub fn pushforward_hamiltonian(map: &ContactMap, model: &HamiltonianModel) -> Result<HamiltonianModel> {
    if map.dim() != model.dim() {
        return Err(ContactError::DimensionMismatch { expected: map.dim(), got: model.dim() });
    }
    if !map.has_inverse() {
        return Err(ContactError::Unsupported(format!("pushforward through {} needs an inverse map", map.name())));
    }
    let probes = if map.probes().is_empty() { default_probes(map.dim()) } else { map.probes().to_vec() };
    let report = verify(map, &probes, DEFAULT_TOLERANCE)?;
    if !report.pass {
        return Err(ContactError::NotContact(format!(
            "{} fails the contact conditions (max residual {:.3e})",
            map.name(),
            report.max_residual
        )));
    }
    let n = map.dim();
    let (map_c, model_c) = (map.clone(), model.clone());
    let value: ValueFn = Arc::new(move |y: &ExtendedState| {
        let x = map_c.invert(y)?;
        let jac = map_c.jacobian(&x)?;
        let f = jac.contact_row(y, 2 * n);
        let mut k = f * model_c.eval(&x)? - jac.time[2 * n];
        for a in 0..n {
            k += y.p()[a] * jac.time[a];
        }
        Ok(k)
    });
    let function = PhaseFunction::new(n, value);
    Ok(HamiltonianModel::from_function(
        format!("{} pushed through {}", model.name(), map.name()),
        ModelKind::Transformed,
        function,
    ))
}

/// Box from which random probe points are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeBox {
    pub q: (f64, f64),
    pub p: (f64, f64),
    pub s: (f64, f64),
    pub t: (f64, f64),
    /// Draw `q` with a random sign (the box then describes `|q|`).
    pub symmetric_q: bool,
}

impl Default for ProbeBox {
    fn default() -> Self {
        Self { q: (-2.0, 2.0), p: (-2.0, 2.0), s: (-2.0, 2.0), t: (0.0, 5.0), symmetric_q: false }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// `count` reproducible random points in `bounds`.
pub fn sample_points(n: usize, count: usize, bounds: &ProbeBox, seed: u64) -> Vec<ExtendedState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = (0..n)
                .map(|_| {
                    let v = draw(&mut rng, bounds.q);
                    if bounds.symmetric_q && rng.random_bool(0.5) {
                        -v
                    } else {
                        v
                    }
                })
                .collect();
            let p = (0..n).map(|_| draw(&mut rng, bounds.p)).collect();
            let s = draw(&mut rng, bounds.s);
            let t = draw(&mut rng, bounds.t);
            ExtendedState::from_parts(q, p, s, t).expect("finite sample")
        })
        .collect()
}

fn default_probes(n: usize) -> Vec<ExtendedState> {
    sample_points(n, 8, &ProbeBox::default(), 0x5eed)
}

fn single_dof(x: &ExtendedState) -> Result<(f64, f64, f64, f64)> {
    if x.dim() != 1 {
        return Err(ContactError::DimensionMismatch { expected: 1, got: x.dim() });
    }
    Ok((x.q1(), x.p1(), x.s(), x.t()))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(ContactError::InvalidParameter { name: "gamma", value: gamma, reason: "must be non-negative" });
    }
    Ok(())
}

fn check_mass(m: f64) -> Result<()> {
    if !(m.is_finite() && m > 0.0) {
        return Err(ContactError::InvalidParameter { name: "m", value: m, reason: "mass must be positive" });
    }
    Ok(())
}

fn jacobian3(rows: [[f64; 3]; 3], time: [f64; 3]) -> MapJacobian {
    MapJacobian {
        spatial: DMatrix::from_fn(3, 3, |r, c| rows[r][c]),
        time: DVector::from_column_slice(&time),
    }
}

/// `(q, p, S, t) -> (q, e^{gamma t} p, e^{gamma t} S, t)`, taking the contact model
/// `p^2/2m + V + gamma S` to the Caldirola-Kanai Hamiltonian plus `gamma S~`.
pub fn map_ck(m: f64, gamma: f64) -> Result<ContactMap> {
    check_mass(m)?;
    check_gamma(gamma)?;
    Ok(ContactMap::new("ck", 1, move |x| {
        let (q, p, s, t) = single_dof(x)?;
        let e = (gamma * t).exp();
        ExtendedState::from_parts(vec![q], vec![e * p], e * s, t)
    })
    .with_inverse(move |y| {
        let (q, p, s, t) = single_dof(y)?;
        let e = (-gamma * t).exp();
        ExtendedState::from_parts(vec![q], vec![e * p], e * s, t)
    })
    .with_jacobian(move |x| {
        let (_, p, s, t) = single_dof(x)?;
        let e = (gamma * t).exp();
        Ok(jacobian3([[1.0, 0.0, 0.0], [0.0, e, 0.0], [0.0, 0.0, e]], [0.0, gamma * e * p, gamma * e * s]))
    })
    .with_declared_factor(move |x| Ok((gamma * x.t()).exp()))
    .with_probes(default_probes(1)))
}

/// Expanding coordinates
/// `(q e^{gamma t/2}, (p + m gamma q/2) e^{gamma t/2}, (S + m gamma q^2/4) e^{gamma t}, t)`.
pub fn map_expanding(m: f64, gamma: f64) -> Result<ContactMap> {
    check_mass(m)?;
    check_gamma(gamma)?;
    Ok(ContactMap::new("expanding", 1, move |x| {
        let (q, p, s, t) = single_dof(x)?;
        let e = (0.5 * gamma * t).exp();
        ExtendedState::from_parts(
            vec![q * e],
            vec![(p + 0.5 * m * gamma * q) * e],
            (s + 0.25 * m * gamma * q * q) * e * e,
            t,
        )
    })
    .with_inverse(move |y| {
        let (qt, pt, st, t) = single_dof(y)?;
        let e = (0.5 * gamma * t).exp();
        let q = qt / e;
        ExtendedState::from_parts(vec![q], vec![pt / e - 0.5 * m * gamma * q], st / (e * e) - 0.25 * m * gamma * q * q, t)
    })
    .with_jacobian(move |x| {
        let (q, p, s, t) = single_dof(x)?;
        let e = (0.5 * gamma * t).exp();
        let e2 = e * e;
        let half = 0.5 * gamma;
        Ok(jacobian3(
            [[e, 0.0, 0.0], [0.5 * m * gamma * e, e, 0.0], [0.5 * m * gamma * q * e2, 0.0, e2]],
            [
                half * q * e,
                half * (p + 0.5 * m * gamma * q) * e,
                gamma * (s + 0.25 * m * gamma * q * q) * e2,
            ],
        ))
    })
    .with_declared_factor(move |x| Ok((gamma * x.t()).exp()))
    .with_probes(default_probes(1)))
}

/// Action-angle type coordinates built on an Ermakov solution: `Q~` is the principal
/// branch of `arctan(alpha (alpha' - gamma alpha / 2) - alpha^2 p/(m q))`, `P~` the
/// quadratic invariant and `S~ = e^{gamma t}(S - q p/2)`.
///
/// The inverse covers the chart `q > 0` (`cos Q~ > 0`). The jacobian is assembled in
/// closed form from `alpha`, `alpha'` and the Ermakov equation.
pub fn map_invariants(m: f64, gamma: f64, erm: &ErmakovSolution) -> Result<ContactMap> {
    check_mass(m)?;
    check_gamma(gamma)?;
    let (start, end) = (erm.start(), erm.end());
    let amplitude = {
        let erm = erm.clone();
        move |t: f64| -> Result<(f64, f64, f64)> { Ok((erm.alpha(t)?, erm.alpha_dot(t)?, erm.alpha_ddot(t)?)) }
    };

    let amp = amplitude.clone();
    let forward = move |x: &ExtendedState| {
        let (q, p, s, t) = single_dof(x)?;
        if q == 0.0 {
            return Err(ContactError::SingularChart(format!("angle coordinate undefined at q = 0 (t = {t})")));
        }
        let (a, ad, _) = amp(t)?;
        let shifted = ad - 0.5 * gamma * a;
        let angle = (a * shifted - a * a * p / (m * q)).atan();
        let grow = (gamma * t).exp();
        let w = a * p / m - shifted * q;
        let lewis = 0.5 * m * grow * (w * w + (q / a).powi(2));
        ExtendedState::from_parts(vec![angle], vec![lewis], grow * (s - 0.5 * q * p), t)
    };

    let amp = amplitude.clone();
    let inverse = move |y: &ExtendedState| {
        let (angle, lewis, g, t) = single_dof(y)?;
        if !(lewis > 0.0) {
            return Err(ContactError::SingularChart(format!("invariant chart needs I > 0, got {lewis}")));
        }
        let (a, ad, _) = amp(t)?;
        let shifted = ad - 0.5 * gamma * a;
        let envelope = (-0.5 * gamma * t).exp();
        let q = (2.0 * lewis / m).sqrt() * envelope * a * angle.cos();
        let p = (2.0 * m * lewis).sqrt() * envelope * (shifted * angle.cos() - angle.sin() / a);
        ExtendedState::from_parts(vec![q], vec![p], (-gamma * t).exp() * g + 0.5 * q * p, t)
    };

    let amp = amplitude;
    let jacobian = move |x: &ExtendedState| {
        let (q, p, s, t) = single_dof(x)?;
        if q == 0.0 {
            return Err(ContactError::SingularChart(format!("angle coordinate undefined at q = 0 (t = {t})")));
        }
        let (a, ad, add) = amp(t)?;
        let shifted = ad - 0.5 * gamma * a;
        let shifted_dot = add - 0.5 * gamma * ad;
        let grow = (gamma * t).exp();

        let u = a * shifted - a * a * p / (m * q);
        let du = [a * a * p / (m * q * q), -a * a / (m * q), 0.0];
        let du_dt = ad * shifted + a * shifted_dot - 2.0 * a * ad * p / (m * q);
        let scale = 1.0 / (1.0 + u * u);

        let w = a * p / m - shifted * q;
        let lewis = 0.5 * m * grow * (w * w + (q / a).powi(2));
        let dw_dt = ad * p / m - shifted_dot * q;
        let dlewis = [m * grow * (-w * shifted + q / (a * a)), grow * w * a, 0.0];
        let dlewis_dt = gamma * lewis + m * grow * (w * dw_dt - q * q * ad / a.powi(3));

        let g = grow * (s - 0.5 * q * p);
        Ok(jacobian3(
            [
                [scale * du[0], scale * du[1], scale * du[2]],
                dlewis,
                [-0.5 * grow * p, -0.5 * grow * q, grow],
            ],
            [scale * du_dt, dlewis_dt, gamma * g],
        ))
    };

    let probes = sample_points(
        1,
        8,
        &ProbeBox { q: (0.3, 1.5), p: (-1.5, 1.5), s: (-1.0, 1.0), t: (start, end), symmetric_q: false },
        0x1a7e,
    );
    Ok(ContactMap::new("invariants", 1, forward)
        .with_inverse(inverse)
        .with_jacobian(jacobian)
        .with_declared_factor(move |x| Ok((gamma * x.t()).exp()))
        .with_probes(probes))
}

/// Removes jumps of `period` multiples between consecutive samples of a continuous
/// angle (use `pi` for the principal branch of `arctan`).
pub fn unwrap_angle(values: &[f64], period: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut offset = 0.0;
    let mut previous: Option<f64> = None;
    for &v in values {
        if let Some(prev) = previous {
            offset -= ((v + offset - prev) / period).round() * period;
        }
        let unwrapped = v + offset;
        out.push(unwrapped);
        previous = Some(unwrapped);
    }
    out
}

/// Partials of a pushed-forward model, exposed for checks on which variables `K` involves.
pub fn pushforward_partials(model: &HamiltonianModel, y: &ExtendedState) -> Result<PartialDerivatives> {
    model.finite_difference_partials(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_damped_parametric, make_linear_dissipation, ScalarFunction};
    use crate::oscillator::{solve_ermakov, uniform_grid};
    use approx::assert_relative_eq;

    fn point(q: f64, p: f64, s: f64, t: f64) -> ExtendedState {
        ExtendedState::point1(q, p, s, t)
    }

    /// `(q, p, S) -> (q, p^2, S)`.
    fn squaring_map() -> ContactMap {
        ContactMap::new("squaring", 1, |x| ExtendedState::from_parts(vec![x.q1()], vec![x.p1() * x.p1()], x.s(), x.t()))
    }

    #[test]
    fn identity_is_exact() {
        let pts = sample_points(2, 10, &ProbeBox::default(), 1);
        let report = verify(&identity(2), &pts, DEFAULT_TOLERANCE).unwrap();
        assert!(report.pass);
        assert!(report.factors().iter().all(|&f| f == 1.0));
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn ck_factor_at_sample_point() {
        let map = map_ck(1.0, 0.1).unwrap();
        let x = point(1.0, 1.0, 1.0, 2.0);
        let report = verify(&map, std::slice::from_ref(&x), DEFAULT_TOLERANCE).unwrap();
        assert!(report.pass);
        assert_relative_eq!(report.points[0].factor, 0.2f64.exp(), max_relative = 1e-14);
        assert!((report.points[0].factor - 1.2214).abs() < 1e-4);
        assert_relative_eq!(conformal_factor(&map, &point(0.3, 0.4, 0.5, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn expanding_map_values() {
        let map = map_expanding(1.0, 0.2).unwrap();
        let y = map.apply(&point(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(y.q1(), 1.0);
        assert_relative_eq!(y.p1(), 0.1);
        assert_relative_eq!(y.s(), 0.05);
        assert_relative_eq!(conformal_factor(&map, &point(0.4, -1.0, 2.0, 3.0)).unwrap(), 0.6f64.exp(), max_relative = 1e-13);
        let fd = map.finite_difference_jacobian(&point(0.4, -1.0, 2.0, 3.0)).unwrap();
        let closed = map.jacobian(&point(0.4, -1.0, 2.0, 3.0)).unwrap();
        assert!((fd.spatial - closed.spatial).amax() < 1e-5);
        assert!((fd.time - closed.time).amax() < 1e-5);
    }

    #[test]
    fn zero_damping_maps_are_identity() {
        let x = point(0.7, -0.2, 1.1, 4.0);
        for map in [map_ck(1.0, 0.0).unwrap(), map_expanding(2.0, 0.0).unwrap()] {
            assert_eq!(map.apply(&x).unwrap(), x);
        }
    }

    #[test]
    fn squaring_map_fails_on_momentum_condition() {
        let report = verify(&squaring_map(), &[point(0.5, 2.0, 0.3, 0.0)], DEFAULT_TOLERANCE).unwrap();
        assert!(!report.pass);
        let check = &report.points[0];
        assert!(check.position_residuals[0].abs() < 1e-12);
        assert_relative_eq!(check.factor, 1.0, max_relative = 1e-9);
        // -f p - (dS~/dq - P dQ/dq) = -2 - (0 - 4)
        assert_relative_eq!(check.momentum_residuals[0], 2.0, max_relative = 1e-8);
        // at p = 1 the map agrees with the identity to first order and the conditions hold
        assert!(verify(&squaring_map(), &[point(0.5, 1.0, 0.3, 0.0)], DEFAULT_TOLERANCE).unwrap().pass);
    }

    #[test]
    fn declared_factor_is_cross_checked() {
        let lying = map_ck(1.0, 0.1).unwrap().with_declared_factor(|_| Ok(1.0));
        let report = verify(&lying, &[point(1.0, 1.0, 1.0, 2.0)], DEFAULT_TOLERANCE).unwrap();
        assert!(!report.pass);
        assert_relative_eq!(report.points[0].declared_mismatch.unwrap(), 0.2f64.exp() - 1.0, max_relative = 1e-12);
    }

    #[test]
    fn verify_rejects_empty_sample_and_dimension_errors() {
        assert!(matches!(verify(&identity(1), &[], 1e-8), Err(ContactError::TooFewSamples { .. })));
        let pts = sample_points(2, 1, &ProbeBox::default(), 0);
        assert!(matches!(verify(&identity(1), &pts, 1e-8), Err(ContactError::DimensionMismatch { .. })));
    }

    #[test]
    fn volume_factors() {
        assert_eq!(volume_factor(1.0, 7), 1.0);
        assert_eq!(volume_factor(2.0, 1), 4.0);
        assert_relative_eq!(volume_factor(1f64.exp(), 1), 2f64.exp().powi(1), max_relative = 1e-14);
    }

    #[test]
    fn pushforward_identity_reproduces_model() {
        let model = make_linear_dissipation(1.0, 0.1, ScalarFunction::quadratic(1.0)).unwrap();
        let pushed = pushforward_hamiltonian(&identity(1), &model).unwrap();
        for x in sample_points(1, 20, &ProbeBox::default(), 3) {
            assert_relative_eq!(pushed.eval(&x).unwrap(), model.eval(&x).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn pushforward_requirements() {
        let model = make_linear_dissipation(1.0, 0.1, ScalarFunction::quadratic(1.0)).unwrap();
        let no_inverse = ContactMap::new("forward only", 1, |x| Ok(x.clone()));
        assert!(matches!(pushforward_hamiltonian(&no_inverse, &model), Err(ContactError::Unsupported(_))));
        let squaring = squaring_map().with_inverse(|y| {
            ExtendedState::from_parts(vec![y.q1()], vec![y.p1().sqrt()], y.s(), y.t())
        });
        let positive = sample_points(1, 4, &ProbeBox { p: (0.5, 2.0), ..ProbeBox::default() }, 5);
        let squaring = squaring.with_probes(positive);
        assert!(matches!(pushforward_hamiltonian(&squaring, &model), Err(ContactError::NotContact(_))));
    }

    #[test]
    fn ck_pushforward_is_caldirola_kanai() {
        let (m, gamma) = (1.3, 0.1);
        let v = ScalarFunction::quadratic(0.8);
        let model = make_linear_dissipation(m, gamma, v.clone()).unwrap();
        let pushed = pushforward_hamiltonian(&map_ck(m, gamma).unwrap(), &model).unwrap();
        for y in sample_points(1, 50, &ProbeBox::default(), 11) {
            let t = y.t();
            // e^{gamma t} H at the pre-image minus dS~/dt = gamma e^{gamma t} S
            let expected = (-gamma * t).exp() * y.p1().powi(2) / (2.0 * m) + (gamma * t).exp() * v.eval(y.q1());
            assert!((pushed.eval(&y).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn expanding_pushforward_is_expanding_hamiltonian() {
        let (m, gamma) = (1.2, 0.3);
        let w = ScalarFunction::new("1 + 0.2 cos t", |t| 1.0 + 0.2 * t.cos(), |t| -0.2 * t.sin());
        let model = make_damped_parametric(m, gamma, w.clone()).unwrap();
        let pushed = pushforward_hamiltonian(&map_expanding(m, gamma).unwrap(), &model).unwrap();
        for y in sample_points(1, 50, &ProbeBox::default(), 12) {
            let om = w.eval(y.t());
            let expected = y.p1().powi(2) / (2.0 * m) + 0.5 * m * (om * om - 0.25 * gamma * gamma) * y.q1().powi(2);
            assert!((pushed.eval(&y).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn invariants_map_is_contact_with_trivial_hamiltonian() {
        let (m, gamma) = (1.0, 0.1);
        let w = ScalarFunction::new("1 + 0.1 sin 0.3t", |t| 1.0 + 0.1 * (0.3 * t).sin(), |t| 0.03 * (0.3 * t).cos());
        let erm = solve_ermakov(w.clone(), gamma, 1.0, 0.0, &uniform_grid(0.0, 5.0, 2001)).unwrap();
        let map = map_invariants(m, gamma, &erm).unwrap();
        let pts = sample_points(1, 30, &ProbeBox { q: (0.2, 2.0), t: (0.0, 5.0), symmetric_q: true, ..ProbeBox::default() }, 7);
        let report = verify(&map, &pts, DEFAULT_TOLERANCE).unwrap();
        assert!(report.pass, "max residual {}", report.max_residual);
        for x in &pts {
            let fd = map.finite_difference_jacobian(x).unwrap();
            let closed = map.jacobian(x).unwrap();
            assert!((fd.spatial - closed.spatial).amax() < 1e-5);
            assert!((fd.time - closed.time).amax() < 1e-5);
        }
        let model = make_damped_parametric(m, gamma, w).unwrap();
        let pushed = pushforward_hamiltonian(&map, &model).unwrap();
        let image_box = ProbeBox { q: (-1.2, 1.2), p: (0.2, 2.0), s: (-1.0, 1.0), t: (0.1, 4.9), symmetric_q: false };
        for y in sample_points(1, 20, &image_box, 8) {
            let alpha = erm.alpha(y.t()).unwrap();
            assert!((pushed.eval(&y).unwrap() - y.p1() / (alpha * alpha)).abs() < 1e-9);
            let d = pushforward_partials(&pushed, &y).unwrap();
            assert!(d.dh_dq[0].abs() < 1e-6 && d.dh_ds.abs() < 1e-6, "{d:?}");
        }
        assert!(matches!(map.apply(&point(0.0, 1.0, 0.0, 1.0)), Err(ContactError::SingularChart(_))));
    }

    #[test]
    fn invariants_map_round_trip_on_positive_chart() {
        let erm = solve_ermakov(ScalarFunction::constant(1.0), 0.2, 1.0, 0.1, &uniform_grid(0.0, 3.0, 601)).unwrap();
        let map = map_invariants(1.0, 0.2, &erm).unwrap();
        for x in sample_points(1, 20, &ProbeBox { q: (0.1, 2.0), t: (0.0, 3.0), ..ProbeBox::default() }, 9) {
            let back = map.invert(&map.apply(&x).unwrap()).unwrap();
            assert!((back.q1() - x.q1()).abs() < 1e-9);
            assert!((back.p1() - x.p1()).abs() < 1e-9);
            assert!((back.s() - x.s()).abs() < 1e-9);
        }
    }

    #[test]
    fn composition_multiplies_factors() {
        let ck = map_ck(1.0, 0.1).unwrap();
        let ex = map_expanding(1.0, 0.3).unwrap();
        let both = ck.compose(&ex).unwrap();
        let pts = sample_points(1, 20, &ProbeBox::default(), 4);
        let report = verify(&both, &pts, DEFAULT_TOLERANCE).unwrap();
        assert!(report.pass);
        for check in &report.points {
            let x = &check.point;
            let expected = conformal_factor(&ex, &ck.apply(x).unwrap()).unwrap() * conformal_factor(&ck, x).unwrap();
            assert!((check.factor - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn symplectic_maps_have_unit_factor() {
        // canonical rotation of (q, p), S untouched: f = 1 and all residuals vanish
        let theta = 0.7f64;
        let rotation = ContactMap::new("rotation", 1, move |x| {
            let (q, p) = (x.q1(), x.p1());
            let (qq, pp) = (q * theta.cos() + p * theta.sin(), -q * theta.sin() + p * theta.cos());
            // S~ = S + generating term keeps dS~ - P dQ = dS - p dq
            let s = x.s() + 0.5 * (qq * pp - q * p);
            ExtendedState::from_parts(vec![qq], vec![pp], s, x.t())
        });
        let pts = sample_points(1, 10, &ProbeBox::default(), 2);
        let report = verify(&rotation, &pts, DEFAULT_TOLERANCE).unwrap();
        assert!(report.pass, "{}", report.max_residual);
        assert!(report.factors().iter().all(|f| (f - 1.0).abs() < 1e-9));
        // non-symplectic stretch of q alone cannot be completed by any S~ shift
        let stretch = ContactMap::new("stretch", 1, |x| ExtendedState::from_parts(vec![2.0 * x.q1()], vec![x.p1()], x.s(), x.t()));
        assert!(!verify(&stretch, &pts, DEFAULT_TOLERANCE).unwrap().pass);
    }

    #[test]
    fn unwrap_removes_branch_jumps() {
        let raw: Vec<f64> = (0..100).map(|i| (0.1 * i as f64).tan().atan()).collect();
        let unwrapped = unwrap_angle(&raw, std::f64::consts::PI);
        for (i, u) in unwrapped.iter().enumerate() {
            assert!((u - 0.1 * i as f64).abs() < 1e-12);
        }
    }
}
