//! Hamiltonians, the pointwise minimizer over modes and inputs, the
//! minimizing switching control `u*`, and the optimality function `θ`.

use crate::control::{same_grid, ControlNode, EmbeddedControl, OrdinaryControl};
use crate::error::{invalid, Error, Result};
use crate::linalg::dot;
use crate::model::HybridModel;
use crate::sim::{CostateTrajectory, Method, Trajectory};
use crate::Scalar;

/// `pᵀf_i(t, x, u) + L_i(t, x, u)`.
pub fn eval_hamiltonian_mode<T: Scalar>(
    model: &HybridModel<T>,
    i: usize,
    t: T,
    x: &[T],
    u: &[T],
    p: &[T],
) -> Result<T> {
    model.check_args(i, x, u)?;
    check_costate(model, p)?;
    Ok(hamiltonian(model, i, t, x, u, p))
}

/// `Σ_i α_i [pᵀf_i(x, u_i) + L_i(x, u_i)]`.
pub fn eval_hamiltonian_embedded<T: Scalar>(
    model: &HybridModel<T>,
    node: &ControlNode<T>,
    t: T,
    x: &[T],
    p: &[T],
) -> Result<T> {
    if node.weights.len() != model.num_modes() || node.inputs.len() != model.num_modes() {
        return Err(invalid(
            "control node does not match the model's mode count",
        ));
    }
    check_costate(model, p)?;
    for (i, u) in node.inputs.iter().enumerate() {
        model.check_args(i, x, u)?;
    }
    Ok(embedded_hamiltonian(model, node, t, x, p))
}

fn check_costate<T: Scalar>(model: &HybridModel<T>, p: &[T]) -> Result<()> {
    if p.len() != model.state_dim() {
        return Err(invalid(format!(
            "costate has length {}, expected {}",
            p.len(),
            model.state_dim()
        )));
    }
    Ok(())
}

#[inline]
fn hamiltonian<T: Scalar>(model: &HybridModel<T>, i: usize, t: T, x: &[T], u: &[T], p: &[T]) -> T {
    dot(p, &model.f(i, t, x, u)) + model.l(i, t, x, u)
}

fn embedded_hamiltonian<T: Scalar>(
    model: &HybridModel<T>,
    node: &ControlNode<T>,
    t: T,
    x: &[T],
    p: &[T],
) -> T {
    node.weights
        .iter()
        .zip(&node.inputs)
        .enumerate()
        .filter(|(_, (&a, _))| a != T::zero())
        .map(|(i, (&a, u))| a * hamiltonian(model, i, t, x, u, p))
        .sum()
}

/// Exact minimizer of `pᵀΦ_i(x)u + L_i(x, u)` over mode `i`'s box when the
/// running cost is an axis-separable quadratic in `u`:
/// `u_k = clamp(−((Φᵀp)_k + q_k)/(2R_kk), lo_k, hi_k)`.
///
/// A zero `R_kk` gives the bang-bang choice by the sign of the linear
/// coefficient, and the point of the box closest to 0 when that is zero too.
pub fn box_quad_min<T: Scalar>(
    model: &HybridModel<T>,
    i: usize,
    t: T,
    x: &[T],
    p: &[T],
) -> Result<Vec<T>> {
    if i >= model.num_modes() {
        return Err(invalid(format!("mode index {} out of range", i + 1)));
    }
    check_costate(model, p)?;
    let mode = model.mode(i);
    if mode.control_dim == 0 {
        return Ok(Vec::new());
    }
    let quad = mode
        .functions
        .quadratic_in_u(t, x)
        .ok_or_else(|| Error::Unsupported(format!("mode {} has no quadratic-in-u cost", i + 1)))?;
    if !quad.weights.is_diagonal() {
        return Err(Error::Unsupported(format!(
            "mode {} has a non-diagonal input weight",
            i + 1
        )));
    }
    let phi_p = mode.functions.phi(t, x).tr_mul_vec(p);
    let (lo, hi) = mode.control_set.bounds();
    (0..mode.control_dim)
        .map(|k| {
            let c = phi_p[k] + quad.linear[k];
            let r = quad.weights[(k, k)];
            let v = if r > T::zero() {
                -c / (T::lit(2.0) * r)
            } else if c > T::zero() {
                lo[k]
            } else if c < T::zero() {
                hi[k]
            } else {
                T::zero()
            };
            if v.is_infinite() {
                return Err(Error::Unsupported(format!(
                    "mode {} input {} is unbounded with a flat cost",
                    i + 1,
                    k + 1
                )));
            }
            Ok(v.max(lo[k]).min(hi[k]))
        })
        .collect()
}

/// Minimizing mode, its input, and the minimal Hamiltonian value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseMin<T> {
    pub mode: usize,
    pub input: Vec<T>,
    pub value: T,
}

/// Minimizer of mode `i` alone.
pub fn mode_min<T: Scalar>(
    model: &HybridModel<T>,
    i: usize,
    t: T,
    x: &[T],
    p: &[T],
) -> Result<(Vec<T>, T)> {
    let mode = model.mode(i);
    let u = if mode.control_dim == 0 {
        Vec::new()
    } else if let Some(u) = mode.functions.closed_form_min(t, x, p, &mode.control_set) {
        u
    } else {
        box_quad_min(model, i, t, x, p).map_err(|e| {
            Error::Configuration(format!("mode {} has no usable minimizer: {e}", i + 1))
        })?
    };
    let value = hamiltonian(model, i, t, x, &u, p);
    Ok((u, value))
}

/// Minimizes the Hamiltonian over all modes and inputs; the lowest mode index
/// wins ties.
pub fn pointwise_min<T: Scalar>(
    model: &HybridModel<T>,
    t: T,
    x: &[T],
    p: &[T],
) -> Result<PointwiseMin<T>> {
    check_costate(model, p)?;
    if x.len() != model.state_dim() {
        return Err(invalid("state dimension mismatch"));
    }
    let mut best: Option<PointwiseMin<T>> = None;
    for i in 0..model.num_modes() {
        let (input, value) = mode_min(model, i, t, x, p)?;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(PointwiseMin {
                mode: i,
                input,
                value,
            });
        }
    }
    Ok(best.expect("model has at least one mode"))
}

/// Time, state and costate at which interval `j`'s Hamiltonian is sampled.
///
/// Euler: `(t_j, x_j, p_{j+1})`, the exact discrete gradient. Trapezoid: the
/// interval midpoint with the interval costate. The final node uses
/// `(t_N, x_N, p_N)`.
pub fn hamiltonian_sample<'a, T: Scalar>(
    traj: &'a Trajectory<T>,
    costate: &'a CostateTrajectory<T>,
    j: usize,
) -> (T, std::borrow::Cow<'a, [T]>, &'a [T]) {
    use std::borrow::Cow;
    let grid = traj.grid();
    if j == grid.steps() {
        return (
            grid.time(j),
            Cow::Borrowed(traj.state(j)),
            costate.costate(j),
        );
    }
    match traj.method() {
        Method::Euler => (
            grid.time(j),
            Cow::Borrowed(traj.state(j)),
            costate.interval_costate(j),
        ),
        Method::Trapezoid => {
            let half = T::lit(0.5);
            let mid = traj
                .state(j)
                .iter()
                .zip(traj.interval_end(j))
                .map(|(&a, &b)| half * (a + b))
                .collect();
            (
                grid.time(j) + half * grid.dt(),
                Cow::Owned(mid),
                costate.interval_costate(j),
            )
        }
    }
}

fn check_pair<T: Scalar>(traj: &Trajectory<T>, costate: &CostateTrajectory<T>) -> Result<()> {
    same_grid(traj.grid(), costate.grid())?;
    if traj.method() != costate.method() {
        return Err(invalid("trajectory and costate use different integrators"));
    }
    Ok(())
}

/// The minimizing switching control, one `pointwise_min` per grid node.
pub fn build_ustar<T: Scalar>(
    model: &HybridModel<T>,
    traj: &Trajectory<T>,
    costate: &CostateTrajectory<T>,
) -> Result<OrdinaryControl<T>> {
    check_pair(traj, costate)?;
    let grid = *traj.grid();
    let mut modes = Vec::with_capacity(grid.len());
    let mut inputs = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let (t, x, p) = hamiltonian_sample(traj, costate, j);
        let m = pointwise_min(model, t, &x, p)?;
        modes.push(m.mode);
        inputs.push(m.input);
    }
    OrdinaryControl::new(grid, modes, inputs)
}

/// `θ = Σ_j Δt·min(0, H(u*_j) − H(w_j))` over the grid intervals, each
/// sampled where the discrete cost gradient lives.
pub fn compute_theta<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    traj: &Trajectory<T>,
    costate: &CostateTrajectory<T>,
    u_star: &OrdinaryControl<T>,
) -> Result<T> {
    check_pair(traj, costate)?;
    same_grid(w.grid(), traj.grid())?;
    same_grid(w.grid(), u_star.grid())?;
    let grid = traj.grid();
    let mut acc = T::zero();
    for j in 0..grid.steps() {
        let (t, x, p) = hamiltonian_sample(traj, costate, j);
        let h_star = hamiltonian(model, u_star.mode(j), t, &x, u_star.input(j), p);
        let h_w = embedded_hamiltonian(model, w.node(j), t, &x, p);
        acc += (h_star - h_w).min(T::zero());
    }
    Ok(acc * grid.dt())
}
