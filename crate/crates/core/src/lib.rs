//! Optimal control of switched systems by descent in relaxed (embedded)
//! controls.
//!
//! A [`HybridModel`] lists modes `f_i(t, x, u) = Φ_i(t, x)u + Ψ_i(t, x)` with
//! running costs `L_i`. Controls are [`EmbeddedControl`]s: mode weights on the
//! simplex plus one input per mode, held constant between grid nodes. Each
//! [`solver::solve`] iteration integrates the state and costate, minimizes
//! the Hamiltonian pointwise to get a switching control `u*`, line-searches
//! the relaxed combination `(1−λ)w ⊕ λu*`, and folds it back into a single
//! embedded control with [`control::blend`].
//!
//! ```
//! use relaxed_switch::{builtin_model, EmbeddedControl, Overrides, SolveConfig};
//!
//! let model = builtin_model::<f64>("double_tank", &Overrides::new()).unwrap();
//! let mut config = SolveConfig::new(0.1);
//! config.armijo_alpha = 0.5;
//! config.max_iters = 10;
//! let grid = config.grid(model.t_f()).unwrap();
//! let w0 = EmbeddedControl::one_hot(&model, grid, 1, vec![vec![], vec![]]).unwrap();
//! let out = relaxed_switch::solve(&model, &w0, &config).unwrap();
//! assert!(out.cost < out.initial_cost);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod hammin;
pub mod io;
pub mod linalg;
pub mod model;
mod scalar;
pub mod sim;
pub mod solver;

pub use control::{
    blend, pwm_project, validate, ControlNode, EmbeddedControl, OrdinaryControl, TimeGrid,
    ValidationReport,
};
pub use error::{Error, Result};
pub use hammin::{build_ustar, compute_theta, pointwise_min, PointwiseMin};
pub use linalg::Matrix;
pub use model::{
    affine_quadratic_model, builtin_model, builtin_names, ControlSet, HybridModel, ModeFunctions,
    ModeSpec, Overrides, TerminalCost,
};
pub use scalar::Scalar;
pub use sim::{eval_cost, integrate_costate, integrate_state, Method, ShootingConfig, Trajectory};
pub use solver::{solve, IterationRecord, SolveConfig, SolveOutcome, SolveStatus};

pub type Model = HybridModel<f64>;
pub type Control = EmbeddedControl<f64>;
pub type Switching = OrdinaryControl<f64>;
pub type Config = SolveConfig<f64>;
pub type Outcome = SolveOutcome<f64>;

pub type Model32 = HybridModel<f32>;
pub type Control32 = EmbeddedControl<f32>;
pub type Config32 = SolveConfig<f32>;
pub type Outcome32 = SolveOutcome<f32>;
