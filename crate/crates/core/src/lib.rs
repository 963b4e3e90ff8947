//! Simulation and verification engine for contact Hamiltonian mechanics.
//!
//! The crate integrates the contact Hamilton equations for dissipative and
//! conservative systems, checks structural properties of the flow (volume
//! contraction, the invariant measure, contact transformations, invariants,
//! Hamilton-Jacobi consistency) and provides semi-analytic solutions of the
//! damped parametric oscillator.

pub mod dynamics;
pub mod error;
pub mod hamilton_jacobi;
pub mod model;
pub mod ode;
pub mod oscillator;
pub mod transforms;

pub use dynamics::{
    divergence, flow_jacobian_determinant, integrate, integrate_at, measure_weight, observable_rate,
    predicted_hamiltonian, recover_s_linear, step_rk4, vector_field, IntegratorOptions, Method, Tangent, Trajectory,
};
pub use error::{ContactError, Result};
pub use model::{
    make_caldirola_kanai, make_custom, make_damped_parametric, make_linear_dissipation, ContactState, ExtendedState,
    HamiltonianModel, ModelFlags, ModelKind, PartialDerivatives, PhaseFunction, ScalarFunction,
};
pub use hamilton_jacobi::{
    characteristic_b, extended_f, hj_residual, verify_b_condition, ParameterFamily, PrincipalFunctionField,
};
pub use oscillator::{
    analytic_state, g_invariant, hj_principal_function, lewis_invariant, quadratic_invariant_coefficients,
    riccati_free_particle, solve_ermakov, solve_riccati, trajectory_from_hj, ErmakovSolution, RiccatiSolution,
};
pub use transforms::{
    conformal_factor, map_ck, map_expanding, map_invariants, pushforward_hamiltonian, verify, volume_factor,
    ContactMap, TransformReport,
};
