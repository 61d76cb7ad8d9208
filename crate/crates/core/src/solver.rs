//! Relaxed-control descent: state and costate solve, minimizing switching
//! control, Armijo search on the relaxed combination, and the blend step.

use std::time::Instant;

use crate::control::{blend, same_grid, EmbeddedControl, OrdinaryControl, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::hammin::{build_ustar, compute_theta};
use crate::linalg::norm_sq;
use crate::model::HybridModel;
use crate::sim::{
    eval_cost, eval_cost_combination, gradient_norm_sq, integrate_combination, integrate_costate,
    integrate_state, shooting_z_gradient, Method, ShootingConfig, Trajectory,
};
use crate::Scalar;

/// Multiple-shooting options of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingParams<T> {
    pub segments: usize,
    /// Defaults to `2.5·(segments − 1)`.
    pub penalty: Option<T>,
    /// Maximum gradient steps on `z` after every control step.
    pub z_steps: usize,
    /// First trial step length of the `z` line search.
    pub z_step_init: T,
}

impl<T: Scalar> ShootingParams<T> {
    pub fn new(segments: usize) -> Self {
        Self {
            segments,
            penalty: None,
            z_steps: 10,
            z_step_init: T::one(),
        }
    }

    pub fn penalty(&self) -> T {
        self.penalty
            .unwrap_or_else(|| ShootingConfig::default_penalty(self.segments))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig<T> {
    pub armijo_alpha: T,
    pub armijo_beta: T,
    pub max_backtracks: usize,
    pub dt: T,
    pub integrator: Method,
    pub max_iters: usize,
    pub theta_tol: T,
    pub shooting: Option<ShootingParams<T>>,
    /// Run the line search on the blended control instead of the relaxed
    /// combination.
    pub armijo_on_blend: bool,
}

impl<T: Scalar> SolveConfig<T> {
    pub fn new(dt: T) -> Self {
        Self {
            armijo_alpha: T::lit(0.1),
            armijo_beta: T::lit(0.5),
            max_backtracks: 40,
            dt,
            integrator: Method::Euler,
            max_iters: 100,
            theta_tol: T::lit(1e-6),
            shooting: None,
            armijo_on_blend: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: T| v > T::zero() && v < T::one();
        if !open_unit(self.armijo_alpha) {
            return Err(invalid(format!(
                "armijo alpha {} outside (0, 1)",
                self.armijo_alpha
            )));
        }
        if !open_unit(self.armijo_beta) {
            return Err(invalid(format!(
                "armijo beta {} outside (0, 1)",
                self.armijo_beta
            )));
        }
        if !(self.dt > T::zero()) {
            return Err(invalid(format!("dt {} must be positive", self.dt)));
        }
        if !(self.theta_tol > T::zero()) {
            return Err(invalid(format!(
                "theta_tol {} must be positive",
                self.theta_tol
            )));
        }
        if let Some(s) = &self.shooting {
            if s.segments == 0 {
                return Err(invalid("shooting needs at least one segment"));
            }
            if s.penalty() < T::zero() {
                return Err(invalid("shooting penalty must be non-negative"));
            }
            if !(s.z_step_init > T::zero()) {
                return Err(invalid("z_step_init must be positive"));
            }
        }
        Ok(())
    }

    /// The integration grid on `[0, t_f]`.
    pub fn grid(&self, t_f: T) -> Result<TimeGrid<T>> {
        TimeGrid::new(t_f, self.dt)
    }
}

/// One accepted descent step. Values are stored in `f64` for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Zero-based step index; `cost` is the cost before the step.
    pub iter: usize,
    pub cost: f64,
    pub theta: f64,
    pub lambda: f64,
    pub backtracks: usize,
    pub wall_ms: f64,
    /// Cost of the accepted line-search candidate.
    pub combo_cost: f64,
    /// Cost of the blended control.
    pub blend_cost: f64,
    /// Cost after the step, including any shooting update.
    pub next_cost: f64,
    /// Largest shooting defect after the step (0 without shooting).
    pub defect: f64,
}

#[derive(Debug, Clone)]
pub struct ArmijoStep<T: Scalar> {
    pub lambda: T,
    pub backtracks: usize,
    pub combo_cost: T,
    pub trajectory: Trajectory<T>,
}

#[derive(Debug, Clone)]
pub enum ArmijoOutcome<T: Scalar> {
    Converged,
    Step(ArmijoStep<T>),
}

/// Largest `λ ∈ {1, β, …, β^max_backtracks}` with
/// `J((1−λ)w ⊕ λu*) − J(w) < αλθ`. Candidates whose integration diverges
/// are rejected.
pub fn armijo<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    cost_w: T,
    u_star: &OrdinaryControl<T>,
    theta: T,
    config: &SolveConfig<T>,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<ArmijoOutcome<T>> {
    if !(theta < -config.theta_tol) {
        return Ok(ArmijoOutcome::Converged);
    }
    let mut lambda = T::one();
    let mut last_gap = f64::INFINITY;
    for backtracks in 0..=config.max_backtracks {
        if backtracks > 0 {
            lambda *= config.armijo_beta;
        }
        let candidate = if config.armijo_on_blend {
            let y = blend(w, u_star, lambda)?;
            integrate_state(model, &y, config.integrator, shooting)
                .and_then(|traj| Ok((eval_cost(model, &y, &traj, shooting)?, traj)))
        } else {
            integrate_combination(model, w, u_star, lambda, config.integrator, shooting).and_then(
                |traj| {
                    let c = eval_cost_combination(model, w, u_star, lambda, &traj, shooting)?;
                    Ok((c, traj))
                },
            )
        };
        let (combo_cost, trajectory) = match candidate {
            Ok(v) => v,
            Err(Error::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        let gap = combo_cost - cost_w;
        last_gap = gap.to_f64_lossy();
        if gap < config.armijo_alpha * lambda * theta {
            return Ok(ArmijoOutcome::Step(ArmijoStep {
                lambda,
                backtracks,
                combo_cost,
                trajectory,
            }));
        }
    }
    Err(Error::StepFailure {
        theta: theta.to_f64_lossy(),
        last_lambda: lambda.to_f64_lossy(),
        last_gap,
        backtracks: config.max_backtracks,
    })
}

/// A control with its trajectory and cost.
#[derive(Debug, Clone)]
pub struct Iterate<T: Scalar> {
    pub control: EmbeddedControl<T>,
    pub trajectory: Trajectory<T>,
    pub cost: T,
}

impl<T: Scalar> Iterate<T> {
    pub fn new(
        model: &HybridModel<T>,
        control: EmbeddedControl<T>,
        method: Method,
        shooting: Option<&ShootingConfig<T>>,
    ) -> Result<Self> {
        let trajectory = integrate_state(model, &control, method, shooting)?;
        let cost = eval_cost(model, &control, &trajectory, shooting)?;
        Ok(Self {
            control,
            trajectory,
            cost,
        })
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum StepResult<T: Scalar> {
    Converged {
        theta: T,
    },
    Step {
        next: Iterate<T>,
        record: IterationRecord,
    },
}

/// One descent step from `current` with the shooting variables held fixed.
pub fn step_from<T: Scalar>(
    model: &HybridModel<T>,
    current: &Iterate<T>,
    config: &SolveConfig<T>,
    shooting: Option<&ShootingConfig<T>>,
    iter: usize,
) -> Result<StepResult<T>> {
    let start = Instant::now();
    let w = &current.control;
    let costate = integrate_costate(model, w, &current.trajectory, shooting)?;
    let u_star = build_ustar(model, &current.trajectory, &costate)?;
    let theta = compute_theta(model, w, &current.trajectory, &costate, &u_star)?;
    let found = match armijo(model, w, current.cost, &u_star, theta, config, shooting)? {
        ArmijoOutcome::Converged => return Ok(StepResult::Converged { theta }),
        ArmijoOutcome::Step(s) => s,
    };
    let y = blend(w, &u_star, found.lambda)?;
    let next = Iterate::new(model, y, config.integrator, shooting)?;
    let record = IterationRecord {
        iter,
        cost: current.cost.to_f64_lossy(),
        theta: theta.to_f64_lossy(),
        lambda: found.lambda.to_f64_lossy(),
        backtracks: found.backtracks,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        combo_cost: found.combo_cost.to_f64_lossy(),
        blend_cost: next.cost.to_f64_lossy(),
        next_cost: next.cost.to_f64_lossy(),
        defect: next.trajectory.max_defect().to_f64_lossy(),
    };
    Ok(StepResult::Step { next, record })
}

/// One descent step from `w` (integrating its trajectory first).
pub fn step<T: Scalar>(
    model: &HybridModel<T>,
    w: &EmbeddedControl<T>,
    config: &SolveConfig<T>,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<StepResult<T>> {
    config.validate()?;
    let current = Iterate::new(model, w.clone(), config.integrator, shooting)?;
    step_from(model, &current, config, shooting, 0)
}

/// Result of one gradient step on the shooting variables.
#[derive(Debug, Clone)]
pub struct ZStep<T> {
    /// Accepted step length, `None` when no trial decreased the cost.
    pub accepted: Option<T>,
    /// Variables and gradient at the start of the step.
    pub z: Vec<Vec<T>>,
    pub grad: Vec<Vec<T>>,
}

/// One Armijo gradient step on the shooting variables `z` with the control
/// held fixed. The first trial length is the Barzilai–Borwein length against
/// `prev` when available, `step_init` otherwise.
pub fn z_step<T: Scalar>(
    model: &HybridModel<T>,
    current: Iterate<T>,
    shooting: &mut ShootingConfig<T>,
    config: &SolveConfig<T>,
    step_init: T,
    prev: Option<&ZStep<T>>,
) -> Result<(Iterate<T>, ZStep<T>)> {
    let costate = integrate_costate(model, &current.control, &current.trajectory, Some(shooting))?;
    let grad = shooting_z_gradient(&current.trajectory, &costate, shooting)?;
    let g2 = gradient_norm_sq(&grad);
    let mut info = ZStep {
        accepted: None,
        z: shooting.z.clone(),
        grad,
    };
    if !(g2 > T::zero()) {
        return Ok((current, info));
    }
    let mut s = prev
        .and_then(|p| bb_length(p, &info.z, &info.grad))
        .unwrap_or(step_init);
    for _ in 0..=config.max_backtracks {
        let mut trial = shooting.clone();
        for (z, g) in trial.z.iter_mut().zip(&info.grad) {
            for (zi, &gi) in z.iter_mut().zip(g) {
                *zi -= s * gi;
            }
        }
        if let Ok(next) = Iterate::new(
            model,
            current.control.clone(),
            config.integrator,
            Some(&trial),
        ) {
            if next.cost - current.cost < -config.armijo_alpha * s * g2 {
                *shooting = trial;
                info.accepted = Some(s);
                return Ok((next, info));
            }
        }
        s *= config.armijo_beta;
    }
    Ok((current, info))
}

/// Barzilai–Borwein length `‖Δz‖²/⟨Δz, Δg⟩` between two gradient samples,
/// if the curvature estimate is positive.
fn bb_length<T: Scalar>(prev: &ZStep<T>, z: &[Vec<T>], grad: &[Vec<T>]) -> Option<T> {
    let mut ss = T::zero();
    let mut sy = T::zero();
    for ((zp, gp), (zn, gn)) in prev.z.iter().zip(&prev.grad).zip(z.iter().zip(grad)) {
        for ((&a, &b), (&c, &d)) in zp.iter().zip(gp).zip(zn.iter().zip(gn)) {
            let dz = c - a;
            ss += dz * dz;
            sy += dz * (d - b);
        }
    }
    let s = ss / sy;
    (sy > T::zero() && s.is_finite()).then_some(s)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    StepFailure {
        theta: f64,
        last_lambda: f64,
        last_gap: f64,
        backtracks: usize,
    },
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::StepFailure { .. } => "step_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome<T: Scalar> {
    pub control: EmbeddedControl<T>,
    pub trajectory: Trajectory<T>,
    pub cost: T,
    /// Optimality function at the final iterate.
    pub theta: T,
    pub initial_cost: T,
    pub history: Vec<IterationRecord>,
    pub status: SolveStatus,
    pub shooting: Option<ShootingConfig<T>>,
}

/// Iterates descent steps from `w0` until `θ ≥ −theta_tol`, `max_iters`
/// steps, or a failed line search. Under shooting, every control step is
/// followed by `z_steps` gradient steps on the segment initial states.
pub fn solve<T: Scalar>(
    model: &HybridModel<T>,
    w0: &EmbeddedControl<T>,
    config: &SolveConfig<T>,
) -> Result<SolveOutcome<T>> {
    config.validate()?;
    same_grid(w0.grid(), &config.grid(model.t_f())?)?;
    let report = crate::control::validate(w0, model);
    if let Some(v) = report.worst {
        return Err(invalid(format!("initial control is invalid: {v:?}")));
    }
    let mut shooting = match &config.shooting {
        Some(p) => Some(ShootingConfig::initialize(
            model,
            w0,
            config.integrator,
            p.segments,
            p.penalty(),
        )?),
        None => None,
    };
    let z_steps = config.shooting.as_ref().map_or(0, |p| p.z_steps);
    let z_init = config.shooting.as_ref().map_or(T::one(), |p| p.z_step_init);
    let mut z_prev: Option<ZStep<T>> = None;

    let mut current = Iterate::new(model, w0.clone(), config.integrator, shooting.as_ref())?;
    let initial_cost = current.cost;
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIters;
    let mut theta = None;

    for iter in 0..config.max_iters {
        match step_from(model, &current, config, shooting.as_ref(), iter) {
            Ok(StepResult::Converged { theta: t }) => {
                theta = Some(t);
                status = SolveStatus::Converged;
                break;
            }
            Ok(StepResult::Step {
                mut next,
                mut record,
            }) => {
                if let Some(sh) = shooting.as_mut() {
                    if sh.segments > 1 {
                        let started = Instant::now();
                        for _ in 0..z_steps {
                            let (it, info) =
                                z_step(model, next, sh, config, z_init, z_prev.as_ref())?;
                            next = it;
                            let stalled = info.accepted.is_none();
                            z_prev = Some(info);
                            if stalled {
                                break;
                            }
                        }
                        record.wall_ms += started.elapsed().as_secs_f64() * 1e3;
                        record.next_cost = next.cost.to_f64_lossy();
                        record.defect = next.trajectory.max_defect().to_f64_lossy();
                    }
                }
                history.push(record);
                current = next;
            }
            Err(Error::StepFailure {
                theta: t,
                last_lambda,
                last_gap,
                backtracks,
            }) => {
                theta = Some(T::lit(t));
                status = SolveStatus::StepFailure {
                    theta: t,
                    last_lambda,
                    last_gap,
                    backtracks,
                };
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let theta = match theta {
        Some(t) => t,
        None => final_theta(model, &current, shooting.as_ref())?,
    };
    Ok(SolveOutcome {
        control: current.control,
        trajectory: current.trajectory,
        cost: current.cost,
        theta,
        initial_cost,
        history,
        status,
        shooting,
    })
}

/// `θ` of an iterate without taking a step.
pub fn final_theta<T: Scalar>(
    model: &HybridModel<T>,
    current: &Iterate<T>,
    shooting: Option<&ShootingConfig<T>>,
) -> Result<T> {
    let costate = integrate_costate(model, &current.control, &current.trajectory, shooting)?;
    let u_star = build_ustar(model, &current.trajectory, &costate)?;
    compute_theta(
        model,
        &current.control,
        &current.trajectory,
        &costate,
        &u_star,
    )
}

/// `‖z_a − z_b‖²` summed over segments; handy for tests and diagnostics.
pub fn z_distance_sq<T: Scalar>(a: &ShootingConfig<T>, b: &ShootingConfig<T>) -> T {
    a.z.iter()
        .zip(&b.z)
        .map(|(x, y)| {
            let d: Vec<T> = x.iter().zip(y).map(|(&p, &q)| p - q).collect();
            norm_sq(&d)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Overrides};

    fn tank() -> HybridModel<f64> {
        builtin_model("double_tank", &Overrides::new()).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = SolveConfig::new(0.1);
        assert!(c.validate().is_ok());
        c.armijo_alpha = 1.0;
        assert!(c.validate().is_err());
        c.armijo_alpha = 0.5;
        c.armijo_beta = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn converged_needs_no_integration() {
        let m = tank();
        let grid = TimeGrid::new(30.0, 0.1).unwrap();
        let w = EmbeddedControl::one_hot(&m, grid, 1, vec![vec![], vec![]]).unwrap();
        let us = OrdinaryControl::new(grid, vec![0; grid.len()], vec![vec![]; grid.len()]).unwrap();
        let c = SolveConfig::new(0.1);
        let out = armijo(&m, &w, 1.0, &us, -1e-7, &c, None).unwrap();
        assert!(matches!(out, ArmijoOutcome::Converged));
    }

    #[test]
    fn tank_first_step_decreases() {
        let m = tank();
        let mut c = SolveConfig::new(0.1);
        c.armijo_alpha = 0.5;
        let grid = c.grid(30.0).unwrap();
        let w = EmbeddedControl::one_hot(&m, grid, 1, vec![vec![], vec![]]).unwrap();
        match step(&m, &w, &c, None).unwrap() {
            StepResult::Step { record, .. } => {
                assert!(record.blend_cost < record.cost);
                assert!(record.blend_cost <= record.combo_cost + 1e-9);
                assert!(record.combo_cost - record.cost < 0.5 * record.lambda * record.theta);
            }
            StepResult::Converged { .. } => panic!("expected a step"),
        }
    }

    #[test]
    fn impossible_search_fails() {
        let m = tank();
        let mut c = SolveConfig::new(0.1);
        c.max_backtracks = 3;
        let grid = c.grid(30.0).unwrap();
        let w = EmbeddedControl::one_hot(&m, grid, 1, vec![vec![], vec![]]).unwrap();
        let us = OrdinaryControl::new(grid, vec![1; grid.len()], vec![vec![]; grid.len()]).unwrap();
        let err = armijo(&m, &w, 0.0, &us, -1.0, &c, None).unwrap_err();
        assert!(
            matches!(err, Error::StepFailure { backtracks: 3, .. }),
            "{err}"
        );
    }

    #[test]
    fn solve_short_run() {
        let m = tank();
        let mut c = SolveConfig::new(0.1);
        c.armijo_alpha = 0.5;
        c.max_iters = 5;
        let grid = c.grid(30.0).unwrap();
        let w = EmbeddedControl::one_hot(&m, grid, 1, vec![vec![], vec![]]).unwrap();
        let out = solve(&m, &w, &c).unwrap();
        assert_eq!(out.history.len(), 5);
        assert_eq!(out.status, SolveStatus::MaxIters);
        assert!(out.cost < out.initial_cost);
        assert!(out.theta <= 0.0);
        for pair in out.history.windows(2) {
            assert!(pair[1].cost < pair[0].cost);
        }
    }
}
