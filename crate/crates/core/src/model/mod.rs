//! Switched-mode hybrid systems with control-affine mode dynamics.
//!
//! Every mode `i` is described by `f_i(t, x, u) = Φ_i(t, x)·u + Ψ_i(t, x)` and a
//! running cost `L_i(t, x, u)` that is convex in `u`. The explicit time argument
//! carries time-varying references (tracking targets) and is ignored by
//! autonomous modes.

mod affine_quadratic;
mod builtin;
mod check;

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::Scalar;

pub use affine_quadratic::{
    affine_quadratic_model, AffineQuadraticMode, AffineQuadraticModeSpec, AffineQuadraticSpec,
    QuadraticTerminal,
};
pub use builtin::{builtin_model, builtin_names, BuiltinName, Overrides};
pub use check::{derivative_check, DerivativeReport};

/// Admissible input set of a single mode.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet<T> {
    /// No continuous input (`k_i = 0`): a pure switching mode.
    Empty,
    /// Compact box `lower ≤ u ≤ upper` with finite bounds.
    Box { lower: Vec<T>, upper: Vec<T> },
    /// Box whose bounds may be infinite. Only allowed for modes whose running
    /// cost is strictly convex in `u`.
    UnboundedBox { lower: Vec<T>, upper: Vec<T> },
}

impl<T: Scalar> ControlSet<T> {
    pub fn boxed(lower: Vec<T>, upper: Vec<T>) -> Self {
        ControlSet::Box { lower, upper }
    }

    pub fn unbounded(dim: usize) -> Self {
        ControlSet::UnboundedBox {
            lower: vec![T::neg_infinity(); dim],
            upper: vec![T::infinity(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Empty => 0,
            ControlSet::Box { lower, .. } | ControlSet::UnboundedBox { lower, .. } => lower.len(),
        }
    }

    /// Bounds as slices; empty for [`ControlSet::Empty`].
    pub fn bounds(&self) -> (&[T], &[T]) {
        match self {
            ControlSet::Empty => (&[], &[]),
            ControlSet::Box { lower, upper } | ControlSet::UnboundedBox { lower, upper } => {
                (lower, upper)
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        let (lo, hi) = self.bounds();
        lo.iter().chain(hi).all(|v| v.is_finite())
    }

    /// Largest amount by which `u` leaves the set (0 when inside).
    pub fn violation(&self, u: &[T]) -> T {
        let (lo, hi) = self.bounds();
        u.iter()
            .zip(lo.iter().zip(hi))
            .fold(T::zero(), |m, (&v, (&l, &h))| m.max(l - v).max(v - h))
    }

    /// Componentwise clamp into the set.
    pub fn project(&self, u: &[T]) -> Vec<T> {
        let (lo, hi) = self.bounds();
        u.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&v, (&l, &h))| v.max(l).min(h))
            .collect()
    }

    /// The point of the set closest to the origin.
    pub fn origin_projection(&self) -> Vec<T> {
        self.project(&vec![T::zero(); self.dim()])
    }

    fn validate(&self, expected_dim: usize) -> Result<()> {
        let (lo, hi) = self.bounds();
        if lo.len() != expected_dim || hi.len() != expected_dim {
            return Err(invalid(format!(
                "control set has dimension {}/{}, mode declares {}",
                lo.len(),
                hi.len(),
                expected_dim
            )));
        }
        for (k, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(invalid(format!("control bound {k}: lower {l} > upper {h}")));
            }
        }
        if let ControlSet::Box { .. } = self {
            if !self.is_bounded() {
                return Err(invalid(
                    "Box control set needs finite bounds; use UnboundedBox",
                ));
            }
        }
        Ok(())
    }
}

/// Quadratic structure of a running cost in the input:
/// `L(t, x, u) = Σ_k diag_k·u_k² + linear·u + (terms without u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInU<T> {
    pub weights: Matrix<T>,
    pub linear: Vec<T>,
}

/// Per-mode evaluators. Implementations must be pure.
pub trait ModeFunctions<T: Scalar>: Send + Sync {
    /// `Φ_i(t, x)`, an `n × k_i` matrix.
    fn phi(&self, t: T, x: &[T]) -> Matrix<T>;
    /// `Ψ_i(t, x)`.
    fn psi(&self, t: T, x: &[T]) -> Vec<T>;
    /// State Jacobian of `Φ_i(t, x)·u` for a fixed `u`.
    fn phi_jac(&self, t: T, x: &[T], u: &[T]) -> Matrix<T>;
    /// State Jacobian of `Ψ_i`.
    fn psi_jac(&self, t: T, x: &[T]) -> Matrix<T>;
    fn run_cost(&self, t: T, x: &[T], u: &[T]) -> T;
    fn run_cost_grad_x(&self, t: T, x: &[T], u: &[T]) -> Vec<T>;

    /// `f_i(t, x, u)`; override when a direct formula is cheaper.
    fn dynamics(&self, t: T, x: &[T], u: &[T]) -> Vec<T> {
        let mut out = self.psi(t, x);
        if !u.is_empty() {
            self.phi(t, x).mul_vec_acc(u, &mut out);
        }
        out
    }

    /// Quadratic-in-`u` description of the running cost, if it has one.
    fn quadratic_in_u(&self, _t: T, _x: &[T]) -> Option<QuadraticInU<T>> {
        None
    }

    /// Closed-form minimizer of `pᵀf_i + L_i` over the control set, if the
    /// mode provides one.
    fn closed_form_min(&self, _t: T, _x: &[T], _p: &[T], _set: &ControlSet<T>) -> Option<Vec<T>> {
        None
    }

    /// True when `x` is outside the natural domain of the evaluators and an
    /// argument had to be clamped.
    fn domain_violation(&self, _x: &[T]) -> bool {
        false
    }
}

/// Terminal cost `φ(x)`.
pub trait TerminalCost<T: Scalar>: Send + Sync {
    fn value(&self, x: &[T]) -> T;
    fn grad(&self, x: &[T]) -> Vec<T>;
}

/// `φ ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTerminal;

impl<T: Scalar> TerminalCost<T> for ZeroTerminal {
    fn value(&self, _x: &[T]) -> T {
        T::zero()
    }
    fn grad(&self, x: &[T]) -> Vec<T> {
        vec![T::zero(); x.len()]
    }
}

#[derive(Clone)]
pub struct ModeSpec<T: Scalar> {
    pub control_dim: usize,
    pub control_set: ControlSet<T>,
    pub functions: Arc<dyn ModeFunctions<T>>,
}

impl<T: Scalar> ModeSpec<T> {
    pub fn new(control_set: ControlSet<T>, functions: Arc<dyn ModeFunctions<T>>) -> Self {
        Self {
            control_dim: control_set.dim(),
            control_set,
            functions,
        }
    }
}

impl<T: Scalar> fmt::Debug for ModeSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeSpec")
            .field("control_dim", &self.control_dim)
            .field("control_set", &self.control_set)
            .finish_non_exhaustive()
    }
}

/// A switched-mode system together with its cost functional.
#[derive(Clone)]
pub struct HybridModel<T: Scalar> {
    pub name: String,
    state_dim: usize,
    modes: Vec<ModeSpec<T>>,
    terminal: Arc<dyn TerminalCost<T>>,
    /// Soft final-state constraint added on top of `terminal`.
    penalty: Option<Arc<dyn TerminalCost<T>>>,
    x0: Vec<T>,
    t_f: T,
}

impl<T: Scalar> fmt::Debug for HybridModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("modes", &self.modes)
            .field("x0", &self.x0)
            .field("t_f", &self.t_f)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> HybridModel<T> {
    pub fn new(
        name: impl Into<String>,
        modes: Vec<ModeSpec<T>>,
        terminal: Arc<dyn TerminalCost<T>>,
        x0: Vec<T>,
        t_f: T,
    ) -> Result<Self> {
        let state_dim = x0.len();
        if state_dim == 0 {
            return Err(invalid("state dimension must be at least 1"));
        }
        if modes.is_empty() {
            return Err(invalid("a hybrid model needs at least one mode"));
        }
        if !(t_f > T::zero()) || !t_f.is_finite() {
            return Err(invalid(format!("horizon must be positive, got {t_f}")));
        }
        for (i, mode) in modes.iter().enumerate() {
            mode.control_set
                .validate(mode.control_dim)
                .map_err(|e| invalid(format!("mode {}: {e}", i + 1)))?;
            let phi = mode.functions.phi(T::zero(), &x0);
            if phi.shape() != (state_dim, mode.control_dim) {
                return Err(invalid(format!(
                    "mode {}: Φ has shape {:?}, expected ({state_dim}, {})",
                    i + 1,
                    phi.shape(),
                    mode.control_dim
                )));
            }
            if let ControlSet::UnboundedBox { .. } = mode.control_set {
                if !mode_strictly_convex(mode, &x0) {
                    return Err(invalid(format!(
                        "mode {}: unbounded control set requires a running cost strictly convex in u",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            modes,
            terminal,
            penalty: None,
            x0,
            t_f,
        })
    }

    pub fn with_penalty(mut self, penalty: Arc<dyn TerminalCost<T>>) -> Self {
        self.penalty = Some(penalty);
        self
    }

    pub fn with_x0(mut self, x0: Vec<T>) -> Result<Self> {
        if x0.len() != self.state_dim {
            return Err(invalid("x0 dimension mismatch"));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ModeSpec<T>] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &ModeSpec<T> {
        &self.modes[i]
    }

    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn t_f(&self) -> T {
        self.t_f
    }

    pub fn control_dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.control_dim).collect()
    }

    pub(crate) fn check_args(&self, i: usize, x: &[T], u: &[T]) -> Result<()> {
        if i >= self.modes.len() {
            return Err(invalid(format!(
                "mode index {} out of range 1..={}",
                i + 1,
                self.modes.len()
            )));
        }
        if x.len() != self.state_dim {
            return Err(invalid(format!(
                "state has length {}, expected {}",
                x.len(),
                self.state_dim
            )));
        }
        let k = self.modes[i].control_dim;
        if u.len() != k {
            return Err(invalid(format!(
                "mode {} input has length {}, expected {k}",
                i + 1,
                u.len()
            )));
        }
        Ok(())
    }

    /// `Φ_i(x)·u + Ψ_i(x)` for the zero-based mode index `i`.
    pub fn eval_mode_dynamics(&self, i: usize, t: T, x: &[T], u: &[T]) -> Result<Vec<T>> {
        self.check_args(i, x, u)?;
        Ok(self.f(i, t, x, u))
    }

    /// `∂f_i/∂x`, an `n × n` matrix.
    pub fn eval_mode_dynamics_jac(&self, i: usize, t: T, x: &[T], u: &[T]) -> Result<Matrix<T>> {
        self.check_args(i, x, u)?;
        Ok(self.f_jac(i, t, x, u))
    }

    pub fn eval_run_cost(&self, i: usize, t: T, x: &[T], u: &[T]) -> Result<T> {
        self.check_args(i, x, u)?;
        Ok(self.l(i, t, x, u))
    }

    pub fn eval_run_cost_grad_x(&self, i: usize, t: T, x: &[T], u: &[T]) -> Result<Vec<T>> {
        self.check_args(i, x, u)?;
        Ok(self.l_grad(i, t, x, u))
    }

    /// Full terminal cost, penalty included.
    pub fn terminal_cost(&self, x: &[T]) -> T {
        let base = self.terminal.value(x);
        match &self.penalty {
            Some(p) => base + p.value(x),
            None => base,
        }
    }

    pub fn terminal_cost_grad(&self, x: &[T]) -> Vec<T> {
        let mut g = self.terminal.grad(x);
        if let Some(p) = &self.penalty {
            for (a, b) in g.iter_mut().zip(p.grad(x)) {
                *a += b;
            }
        }
        g
    }

    /// Penalty part of the terminal cost (0 when the model has none).
    pub fn terminal_penalty(&self, x: &[T]) -> T {
        self.penalty.as_ref().map_or(T::zero(), |p| p.value(x))
    }

    #[inline]
    pub(crate) fn f(&self, i: usize, t: T, x: &[T], u: &[T]) -> Vec<T> {
        self.modes[i].functions.dynamics(t, x, u)
    }

    #[inline]
    pub(crate) fn f_jac(&self, i: usize, t: T, x: &[T], u: &[T]) -> Matrix<T> {
        let fns = &self.modes[i].functions;
        let mut jac = fns.psi_jac(t, x);
        if !u.is_empty() {
            jac.add_scaled(&fns.phi_jac(t, x, u), T::one());
        }
        jac
    }

    #[inline]
    pub(crate) fn l(&self, i: usize, t: T, x: &[T], u: &[T]) -> T {
        self.modes[i].functions.run_cost(t, x, u)
    }

    #[inline]
    pub(crate) fn l_grad(&self, i: usize, t: T, x: &[T], u: &[T]) -> Vec<T> {
        self.modes[i].functions.run_cost_grad_x(t, x, u)
    }
}

fn mode_strictly_convex<T: Scalar>(mode: &ModeSpec<T>, x0: &[T]) -> bool {
    if mode.control_dim == 0 {
        return true;
    }
    let set = &mode.control_set;
    let p = vec![T::zero(); x0.len()];
    if mode
        .functions
        .closed_form_min(T::zero(), x0, &p, set)
        .is_some()
    {
        return true;
    }
    match mode.functions.quadratic_in_u(T::zero(), x0) {
        Some(q) => {
            let (lo, hi) = set.bounds();
            (0..mode.control_dim)
                .all(|k| (lo[k].is_finite() && hi[k].is_finite()) || q.weights[(k, k)] > T::zero())
                && q.weights.is_diagonal()
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_set_projection_and_violation() {
        let set = ControlSet::boxed(vec![-1.0, 0.0], vec![1.0, 2.0]);
        assert_eq!(set.project(&[3.0, -1.0]), vec![1.0, 0.0]);
        approx::assert_relative_eq!(set.violation(&[1.001, 1.0]), 0.001, epsilon = 1e-15);
        assert_eq!(set.violation(&[0.0, 1.0]), 0.0);
        assert_eq!(ControlSet::<f64>::Empty.dim(), 0);
        assert!(!ControlSet::<f64>::unbounded(1).is_bounded());
    }

    #[test]
    fn bad_bounds_rejected() {
        let set = ControlSet::boxed(vec![1.0], vec![-1.0]);
        assert!(set.validate(1).is_err());
        let inf = ControlSet::boxed(vec![f64::NEG_INFINITY], vec![1.0]);
        assert!(inf.validate(1).is_err());
        assert!(ControlSet::<f64>::unbounded(2).validate(1).is_err());
    }
}
