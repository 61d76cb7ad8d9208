//! Forward state integration, backward costate integration, and cost
//! evaluation for embedded controls, with optional multiple shooting.
//!
//! Controls are held constant on each interval `[t_j, t_{j+1})`. The costate
//! recursion is the exact reverse-mode derivative of the discretized cost, so
//! `p(t_N) = ∇φ(x(t_N))` and, for forward Euler, first-order Hamiltonian
//! predictions match the discrete cost to rounding.

use crate::control::{same_grid, ControlNode, EmbeddedControl, OrdinaryControl, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, axpy, max_abs_diff, norm_sq, Matrix};
use crate::model::HybridModel;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Forward Euler with left-Riemann cost quadrature.
    #[default]
    Euler,
    /// Trapezoidal rule (fixed-point corrector) with trapezoidal quadrature.
    Trapezoid,
}

/// Maximum fixed-point sweeps of the trapezoidal corrector.
pub const CORRECTOR_SWEEPS: usize = 10;
/// Convergence threshold of the corrector, relative to `max(1, ‖x‖∞)`.
pub const CORRECTOR_TOL: f64 = 1e-10;

/// Multiple-shooting setup: `segments` equal pieces, each after the first
/// restarting from its own initial state `z_k`, tied together by the penalty
/// `penalty·Σ‖x(τ_k⁻) − z_k‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingConfig<T> {
    pub segments: usize,
    pub penalty: T,
    pub z: Vec<Vec<T>>,
}

impl<T: Scalar> ShootingConfig<T> {
    /// `2.5·(segments − 1)`.
    pub fn default_penalty(segments: usize) -> T {
        T::lit(2.5 * segments.saturating_sub(1) as f64)
    }

    /// `0.1/(segments − 1)`.
    pub fn default_dt(segments: usize) -> T {
        T::lit(0.1 / segments.saturating_sub(1).max(1) as f64)
    }

    /// Grid nodes of the interior segment boundaries `τ_1 … τ_{segments−1}`.
    pub fn boundaries(&self, grid: &TimeGrid<T>) -> Result<Vec<usize>> {
        segment_boundaries(self.segments, grid)
    }

    /// Takes `z_k = x(τ_k)` from a single-shooting trajectory, so the initial
    /// penalty is zero.
    pub fn from_trajectory(segments: usize, penalty: T, traj: &Trajectory<T>) -> Result<Self> {
        if penalty < T::zero() {
            return Err(invalid("shooting penalty must be non-negative"));
        }
        let z = segment_boundaries(segments, traj.grid())?
            .into_iter()
            .map(|b| traj.state(b).to_vec())
            .collect();
        Ok(Self {
            segments,
            penalty,
            z,
        })
    }

    /// Forward-simulates `w` without shooting and seeds `z` from it.
    pub fn initialize(
        model: &HybridModel<T>,
        w: &EmbeddedControl<T>,
        method: Method,
        segments: usize,
        penalty: T,
    ) -> Result<Self> {
        let traj = integrate_state(model, w, method, None)?;
        Self::from_trajectory(segments, penalty, &traj)
    }

    fn check(&self, grid: &TimeGrid<T>, n: usize) -> Result<Vec<usize>> {
        let b = self.boundaries(grid)?;
        if self.z.len() != b.len() || self.z.iter().any(|z| z.len() != n) {
            return Err(invalid(format!(
                "shooting needs {} initial states of length {n}",
                b.len()
            )));
        }
        Ok(b)
    }
}

fn segment_boundaries<T: Scalar>(segments: usize, grid: &TimeGrid<T>) -> Result<Vec<usize>> {
    if segments == 0 {
        return Err(invalid("shooting needs at least one segment"));
    }
    let n = grid.steps();
    (1..segments)
        .map(|k| {
            if !(k * n).is_multiple_of(segments) {
                Err(invalid(format!(
                    "segment boundary {k} of {segments} does not land on a grid node ({n} steps)"
                )))
            } else {
                Ok(k * n / segments)
            }
        })
        .collect()
}

/// State samples on the grid. At shooting boundaries `states` holds the
/// segment's restart value `z_k` and `segment_ends` the arriving value
/// `x(τ_k⁻)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    grid: TimeGrid<T>,
    method: Method,
    states: Vec<Vec<T>>,
    boundaries: Vec<usize>,
    segment_ends: Vec<Vec<T>>,
    pub domain_warnings: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }

    pub fn state(&self, j: usize) -> &[T] {
        &self.states[j]
    }

    pub fn final_state(&self) -> &[T] {
        &self.states[self.grid.steps()]
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn segment_ends(&self) -> &[Vec<T>] {
        &self.segment_ends
    }

    /// State reached at the end of interval `j`, i.e. `x(t_{j+1}⁻)`.
    pub fn interval_end(&self, j: usize) -> &[T] {
        match self.boundaries.binary_search(&(j + 1)) {
            Ok(k) => &self.segment_ends[k],
            Err(_) => &self.states[j + 1],
        }
    }

    /// Largest continuity defect `max_k ‖x(τ_k⁻) − z_k‖`.
    pub fn max_defect(&self) -> T {
        self.boundaries
            .iter()
            .zip(&self.segment_ends)
            .map(|(&b, end)| {
                end.iter()
                    .zip(&self.states[b])
                    .map(|(&a, &z)| (a - z) * (a - z))
                    .sum::<T>()
                    .sqrt()
            })
            .fold(T::zero(), T::max)
    }
}

/// `Σ_i α_i f_i(t, x, u_i)`, skipping modes without mass.
pub(crate) fn embedded_field<T: Scalar>(
    model: &HybridModel<T>,
    node: &ControlNode<T>,
    t: T,
    x: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (i, (&a, u)) in node.weights.iter().zip(&node.inputs).enumerate() {
        if a != T::zero() {
            axpy(a, &model.f(i, t, x, u), &mut out);
        }
    }
    out
}

/// `Σ_i α_i L_i(t, x, u_i)`.
pub(crate) fn embedded_run_cost<T: Scalar>(
    model: &HybridModel<T>,
    node: &ControlNode<T>,
    t: T,
    x: &[T],
) -> T {
    node.weights
        .iter()
        .zip(&node.inputs)
        .enumerate()
        .filter(|(_, (&a, _))| a != T::zero())
        .map(|(i, (&a, u))| a * model.l(i, t, x, u))
        .sum()
}

fn domain_warning<T: Scalar>(model: &HybridModel<T>, node: &ControlNode<T>, x: &[T]) -> bool {
    node.weights
        .iter()
        .enumerate()
        .any(|(i, &a)| a != T::zero() && model.mode(i).functions.domain_violation(x))
}

/// Generic fixed-step integration of `ẋ = field(j, t, x)` on interval `j`.
fn integrate_field<T, F, W>(
    grid: &TimeGrid<T>,
    method: Method,
    x0: &[T],
    shooting: Option<(&[usize], &[Vec<T>])>,
    mut field: F,
    mut warn: W,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    F: FnMut(usize, T, &[T]) -> Vec<T>,
    W: FnMut(usize, &[T]) -> bool,
{
    let n_steps = grid.steps();
    let h = grid.dt();
    let half = T::lit(0.5) * h;
    let tol = T::lit(CORRECTOR_TOL);
    let (boundaries, z) = shooting.unwrap_or((&[], &[]));
    let mut states = Vec::with_capacity(grid.len());
    let mut segment_ends = Vec::with_capacity(boundaries.len());
    let mut warnings = 0;
    states.push(x0.to_vec());
    let mut next_boundary = 0;

    for j in 0..n_steps {
        let x = &states[j];
        if warn(j, x) {
            warnings += 1;
        }
        let f0 = field(j, grid.time(j), x);
        let mut next = x.clone();
        match method {
            Method::Euler => axpy(h, &f0, &mut next),
            Method::Trapezoid => {
                axpy(h, &f0, &mut next);
                let t1 = grid.time(j + 1);
                for _ in 0..CORRECTOR_SWEEPS {
                    let f1 = field(j, t1, &next);
                    let mut corrected = x.clone();
                    for ((c, &a), &b) in corrected.iter_mut().zip(&f0).zip(&f1) {
                        *c += half * (a + b);
                    }
                    let change = max_abs_diff(&corrected, &next);
                    let scale = corrected.iter().fold(T::one(), |m, v| m.max(v.abs()));
                    next = corrected;
                    if !(change > tol * scale) {
                        break;
                    }
                }
            }
        }
        if !all_finite(&next) {
            return Err(Error::Divergence {
                node: j + 1,
                time: grid.time(j + 1).to_f64_lossy(),
            });
        }
        if next_boundary < boundaries.len() && boundaries[next_boundary] == j + 1 {
            segment_ends.push(next);
            states.push(z[next_boundary].clone());
            next_boundary += 1;
        } else {
            states.push(next);
        }
    }
    if warn(n_steps.saturating_sub(1), &states[n_steps]) {
        warnings += 1;
    }
    Ok(Trajectory {
        grid: *grid,
        method,
        states,
        boundaries: boundaries.to_vec(),
        segment_ends,
        domain_warnings: warnings,
    })
}

/// Integrates `ẋ = Σ_i α_i(t) f_i(x, u_i(t))` from `x0` (and from each `z_k`
/// under shooting).
pub fn integrate_state<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    method: Method,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<Trajectory<T>> {
    let grid = w.grid();
    let bounds = match shooting {
        Some(s) => Some(s.check(grid, model.state_dim())?),
        None => None,
    };
    let shoot = bounds
        .as_deref()
        .zip(shooting)
        .map(|(b, s)| (b, s.z.as_slice()));
    integrate_field(
        grid,
        method,
        model.x0(),
        shoot,
        |j, t, x| embedded_field(model, w.node(j), t, x),
        |j, x| domain_warning(model, w.node(j), x),
    )
}

/// Integrates the measure-level combination `(1−λ)w ⊕ λu*` directly, as
/// `2M` weighted mode terms.
pub fn integrate_combination<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    u_star: &OrdinaryControl<T>,
    lambda: T,
    method: Method,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<Trajectory<T>> {
    same_grid(w.grid(), u_star.grid())?;
    let grid = w.grid();
    let bounds = match shooting {
        Some(s) => Some(s.check(grid, model.state_dim())?),
        None => None,
    };
    let shoot = bounds
        .as_deref()
        .zip(shooting)
        .map(|(b, s)| (b, s.z.as_slice()));
    let keep = T::one() - lambda;
    integrate_field(
        grid,
        method,
        model.x0(),
        shoot,
        |j, t, x| {
            let mut out = embedded_field(model, w.node(j), t, x);
            for v in &mut out {
                *v *= keep;
            }
            if lambda != T::zero() {
                let i = u_star.mode(j);
                axpy(lambda, &model.f(i, t, x, u_star.input(j)), &mut out);
            }
            out
        },
        |_, _| false,
    )
}

/// Applies the quadrature paired with the integration method to a running
/// integrand `g(j, t, x)` evaluated with interval `j`'s control.
fn running_quadrature<T, G>(traj: &Trajectory<T>, mut g: G) -> T
where
    T: Scalar,
    G: FnMut(usize, T, &[T]) -> T,
{
    let grid = traj.grid();
    let h = grid.dt();
    let mut acc = T::zero();
    for j in 0..grid.steps() {
        acc += match traj.method() {
            Method::Euler => h * g(j, grid.time(j), traj.state(j)),
            Method::Trapezoid => {
                T::lit(0.5)
                    * h
                    * (g(j, grid.time(j), traj.state(j))
                        + g(j, grid.time(j + 1), traj.interval_end(j)))
            }
        };
    }
    acc
}

/// Cost split into its parts. `terminal` already contains `penalty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown<T> {
    pub running: T,
    pub terminal: T,
    /// Final-state penalty part of `terminal`.
    pub penalty: T,
    /// Multiple-shooting continuity penalty.
    pub shooting: T,
}

impl<T: Scalar> CostBreakdown<T> {
    pub fn total(&self) -> T {
        self.running + self.terminal + self.shooting
    }

    /// Cost with both the final-state and continuity penalties removed.
    pub fn without_penalties(&self) -> T {
        self.running + self.terminal - self.penalty
    }
}

fn shooting_penalty<T: Scalar>(traj: &Trajectory<T>, shooting: Option<&ShootingConfig<T>>) -> T {
    match shooting {
        Some(s) => {
            s.penalty
                * traj
                    .boundaries()
                    .iter()
                    .zip(traj.segment_ends())
                    .map(|(&b, end)| {
                        end.iter()
                            .zip(traj.state(b))
                            .map(|(&a, &z)| (a - z) * (a - z))
                            .sum::<T>()
                    })
                    .sum::<T>()
        }
        None => T::zero(),
    }
}

fn check_traj<T: Scalar>(w: &EmbeddedControl<T>, traj: &Trajectory<T>) -> Result<()> {
    same_grid(w.grid(), traj.grid())
}

pub fn cost_breakdown<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    traj: &Trajectory<T>,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<CostBreakdown<T>> {
    check_traj(w, traj)?;
    let running = running_quadrature(traj, |j, t, x| embedded_run_cost(model, w.node(j), t, x));
    let xf = traj.final_state();
    Ok(CostBreakdown {
        running,
        terminal: model.terminal_cost(xf),
        penalty: model.terminal_penalty(xf),
        shooting: shooting_penalty(traj, shooting),
    })
}

/// `Σ_i ∫ α_i L_i dt + φ(x(t_f))` (+ the shooting penalty).
pub fn eval_cost<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    traj: &Trajectory<T>,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<T> {
    Ok(cost_breakdown(model, w, traj, shooting)?.total())
}

/// Cost of the combination `(1−λ)w ⊕ λu*` along its trajectory `traj_y`:
/// `(1−λ)Σ_i∫α_i L_i(x,u_i) + λ∫L_{j*}(x,u*) + φ(x(t_f))`.
pub fn eval_cost_combination<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    u_star: &OrdinaryControl<T>,
    lambda: T,
    traj_y: &Trajectory<T>,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<T> {
    check_traj(w, traj_y)?;
    same_grid(w.grid(), u_star.grid())?;
    let keep = T::one() - lambda;
    let running = running_quadrature(traj_y, |j, t, x| {
        let mut v = keep * embedded_run_cost(model, w.node(j), t, x);
        if lambda != T::zero() {
            v += lambda * model.l(u_star.mode(j), t, x, u_star.input(j));
        }
        v
    });
    Ok(running + model.terminal_cost(traj_y.final_state()) + shooting_penalty(traj_y, shooting))
}

/// Costate samples. `costates[j]` is the sensitivity of the cost to the
/// state at node `j` (right limit at shooting boundaries); `segment_ends`
/// holds the left limits `p(τ_k⁻)`. `interval[j]` is the costate that
/// multiplies the dynamics of interval `j` in the discrete Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory<T> {
    grid: TimeGrid<T>,
    method: Method,
    costates: Vec<Vec<T>>,
    boundaries: Vec<usize>,
    segment_ends: Vec<Vec<T>>,
    interval: Vec<Vec<T>>,
}

impl<T: Scalar> CostateTrajectory<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn costates(&self) -> &[Vec<T>] {
        &self.costates
    }

    pub fn costate(&self, j: usize) -> &[T] {
        &self.costates[j]
    }

    pub fn segment_ends(&self) -> &[Vec<T>] {
        &self.segment_ends
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn interval_costate(&self, j: usize) -> &[T] {
        &self.interval[j]
    }
}

/// `Σ_i α_i ∂f_i/∂x` and `Σ_i α_i ∂L_i/∂x` at `(t, x)`.
fn linearize<T: Scalar>(
    model: &HybridModel<T>,
    node: &ControlNode<T>,
    t: T,
    x: &[T],
) -> (Matrix<T>, Vec<T>) {
    let n = x.len();
    let mut jac = Matrix::zeros(n, n);
    let mut grad = vec![T::zero(); n];
    for (i, (&a, u)) in node.weights.iter().zip(&node.inputs).enumerate() {
        if a != T::zero() {
            jac.add_scaled(&model.f_jac(i, t, x, u), a);
            axpy(a, &model.l_grad(i, t, x, u), &mut grad);
        }
    }
    (jac, grad)
}

/// `p + s·(Aᵀp + g)`
fn adjoint_update<T: Scalar>(p: &[T], s: T, jac: &Matrix<T>, grad: &[T]) -> Vec<T> {
    let mut out = jac.tr_mul_vec(p);
    for (o, &g) in out.iter_mut().zip(grad) {
        *o += g;
    }
    let mut res = p.to_vec();
    axpy(s, &out, &mut res);
    res
}

/// Backward integration of `ṗ = −Σ_i α_i[(∂f_i/∂x)ᵀp + (∂L_i/∂x)ᵀ]` from
/// `p(t_f) = ∇φ(x(t_f))`; under shooting each earlier segment ends at
/// `p(τ_k⁻) = 2K(x(τ_k⁻) − z_k)`.
///
/// Euler: `p_j = p_{j+1} + h(A_jᵀp_{j+1} + g_j)`.
/// Trapezoid: an implicit half step at the interval end (fixed-point
/// corrector) followed by an explicit half step at its start.
pub fn integrate_costate<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    traj: &Trajectory<T>,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<CostateTrajectory<T>> {
    check_traj(w, traj)?;
    if let Some(s) = shooting {
        let b = s.check(traj.grid(), model.state_dim())?;
        if b != traj.boundaries() {
            return Err(invalid(
                "trajectory was not integrated with this shooting setup",
            ));
        }
    } else if !traj.boundaries().is_empty() {
        return Err(invalid(
            "trajectory has shooting boundaries but no shooting setup was given",
        ));
    }
    let grid = traj.grid();
    let n_steps = grid.steps();
    let h = grid.dt();
    let half = T::lit(0.5) * h;
    let tol = T::lit(CORRECTOR_TOL);
    let two_k = shooting.map_or(T::zero(), |s| T::lit(2.0) * s.penalty);

    let mut costates = vec![Vec::new(); grid.len()];
    let mut interval = vec![Vec::new(); n_steps];
    let boundaries = traj.boundaries().to_vec();
    let mut segment_ends = vec![Vec::new(); boundaries.len()];
    costates[n_steps] = model.terminal_cost_grad(traj.final_state());

    for j in (0..n_steps).rev() {
        let end = match boundaries.binary_search(&(j + 1)) {
            Ok(k) => {
                let p: Vec<T> = traj.segment_ends()[k]
                    .iter()
                    .zip(traj.state(j + 1))
                    .map(|(&a, &z)| two_k * (a - z))
                    .collect();
                segment_ends[k] = p.clone();
                p
            }
            Err(_) => costates[j + 1].clone(),
        };
        let node = w.node(j);
        let (mid, start) = match traj.method() {
            Method::Euler => {
                let (jac, grad) = linearize(model, node, grid.time(j), traj.state(j));
                let start = adjoint_update(&end, h, &jac, &grad);
                (end, start)
            }
            Method::Trapezoid => {
                let (jac1, grad1) = linearize(model, node, grid.time(j + 1), traj.interval_end(j));
                let mut lam = end.clone();
                for _ in 0..CORRECTOR_SWEEPS {
                    let mut next = jac1.tr_mul_vec(&lam);
                    for ((v, &g), &e) in next.iter_mut().zip(&grad1).zip(&end) {
                        *v = e + half * (*v + g);
                    }
                    let change = max_abs_diff(&next, &lam);
                    let scale = next.iter().fold(T::one(), |m, v| m.max(v.abs()));
                    lam = next;
                    if !(change > tol * scale) {
                        break;
                    }
                }
                let (jac0, grad0) = linearize(model, node, grid.time(j), traj.state(j));
                let start = adjoint_update(&lam, half, &jac0, &grad0);
                (lam, start)
            }
        };
        if !all_finite(&start) {
            return Err(Error::Divergence {
                node: j,
                time: grid.time(j).to_f64_lossy(),
            });
        }
        interval[j] = mid;
        costates[j] = start;
    }
    Ok(CostateTrajectory {
        grid: *grid,
        method: traj.method(),
        costates,
        boundaries,
        segment_ends,
        interval,
    })
}

/// Gradient of the shooting-augmented cost with respect to each `z_k`:
/// `p(τ_k⁺) − 2K(x(τ_k⁻) − z_k)`.
pub fn shooting_z_gradient<T: Scalar>(
    traj: &Trajectory<T>,
    costate: &CostateTrajectory<T>,
    shooting: &ShootingConfig<T>,
) -> Result<Vec<Vec<T>>> {
    if shooting.segments < 2 || traj.boundaries().is_empty() {
        return Err(invalid("shooting is not active"));
    }
    if traj.boundaries() != costate.boundaries() {
        return Err(invalid(
            "trajectory and costate disagree on shooting boundaries",
        ));
    }
    let two_k = T::lit(2.0) * shooting.penalty;
    Ok(traj
        .boundaries()
        .iter()
        .zip(traj.segment_ends())
        .map(|(&b, end)| {
            costate
                .costate(b)
                .iter()
                .zip(end.iter().zip(traj.state(b)))
                .map(|(&p, (&a, &z))| p - two_k * (a - z))
                .collect()
        })
        .collect())
}

/// `Σ_k ‖g_k‖²`
pub fn gradient_norm_sq<T: Scalar>(g: &[Vec<T>]) -> T {
    g.iter().map(|v| norm_sq(v)).sum()
}
