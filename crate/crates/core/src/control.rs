//! Embedded controls on a uniform grid, the mixing step that folds a one-hot
//! control into an embedded control, and PWM projection back to switching
//! controls.

use crate::error::{invalid, Result};
use crate::model::HybridModel;
use crate::Scalar;

/// Uniform grid `t_j = j·t_f/N`, `j = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    t_f: T,
    steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    /// Grid with step `dt`; `t_f` must be an integer multiple of `dt` to 1e-9.
    pub fn new(t_f: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !(t_f > T::zero()) {
            return Err(invalid(format!(
                "grid needs t_f > 0 and dt > 0 (t_f = {t_f}, dt = {dt})"
            )));
        }
        let steps = (t_f / dt).round();
        let tol = T::lit(1e-9) * t_f.max(T::one());
        if steps < T::one() || (steps * dt - t_f).abs() > tol {
            return Err(invalid(format!("dt = {dt} does not divide t_f = {t_f}")));
        }
        Self::from_steps(t_f, steps.to_usize().expect("step count fits usize"))
    }

    pub fn from_steps(t_f: T, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_f > T::zero()) {
            return Err(invalid("grid needs at least one step and t_f > 0"));
        }
        Ok(Self { t_f, steps })
    }

    /// Number of intervals `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_f(&self) -> T {
        self.t_f
    }

    pub fn dt(&self) -> T {
        self.t_f / T::from_usize(self.steps).unwrap()
    }

    pub fn time(&self, j: usize) -> T {
        if j == self.steps {
            self.t_f
        } else {
            self.t_f * T::from_usize(j).unwrap() / T::from_usize(self.steps).unwrap()
        }
    }

    /// Index of the zero-order-hold interval containing `t`; `t_f` maps to
    /// the last node.
    pub fn node_at(&self, t: T) -> Result<usize> {
        if !(t >= T::zero() && t <= self.t_f) {
            return Err(invalid(format!("time {t} outside [0, {}]", self.t_f)));
        }
        let pos = (t / self.dt() + T::lit(1e-9)).floor();
        Ok(pos.to_usize().unwrap_or(0).min(self.steps))
    }
}

/// Mode weights on the simplex and one input vector per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlNode<T> {
    pub weights: Vec<T>,
    pub inputs: Vec<Vec<T>>,
}

impl<T: Scalar> ControlNode<T> {
    pub fn one_hot(num_modes: usize, active: usize, inputs: Vec<Vec<T>>) -> Self {
        let mut weights = vec![T::zero(); num_modes];
        weights[active] = T::one();
        Self { weights, inputs }
    }

    /// Rescales the weights to sum to one, clipping tiny negatives.
    pub fn renormalize(&mut self) {
        for w in &mut self.weights {
            *w = w.max(T::zero());
        }
        let s: T = self.weights.iter().copied().sum();
        if s > T::zero() {
            for w in &mut self.weights {
                *w /= s;
            }
        }
    }
}

/// Zero-order-hold embedded control.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedControl<T> {
    grid: TimeGrid<T>,
    nodes: Vec<ControlNode<T>>,
}

impl<T: Scalar> EmbeddedControl<T> {
    pub fn new(grid: TimeGrid<T>, nodes: Vec<ControlNode<T>>) -> Result<Self> {
        if nodes.len() != grid.len() {
            return Err(invalid(format!(
                "{} control nodes for a grid of {} nodes",
                nodes.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, nodes })
    }

    pub fn constant(grid: TimeGrid<T>, node: ControlNode<T>) -> Self {
        Self {
            nodes: vec![node; grid.len()],
            grid,
        }
    }

    /// Mode `active` (zero-based) everywhere with the given per-mode inputs.
    pub fn one_hot(
        model: &HybridModel<T>,
        grid: TimeGrid<T>,
        active: usize,
        inputs: Vec<Vec<T>>,
    ) -> Result<Self> {
        if active >= model.num_modes() {
            return Err(invalid(format!("mode {} out of range", active + 1)));
        }
        check_inputs(model, &inputs)?;
        Ok(Self::constant(
            grid,
            ControlNode::one_hot(model.num_modes(), active, inputs),
        ))
    }

    /// Equal weights `1/M`, inputs at the point of each set nearest the origin.
    pub fn uniform(model: &HybridModel<T>, grid: TimeGrid<T>) -> Self {
        let m = model.num_modes();
        let node = ControlNode {
            weights: vec![T::one() / T::from_usize(m).unwrap(); m],
            inputs: default_inputs(model),
        };
        Self::constant(grid, node)
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn nodes(&self) -> &[ControlNode<T>] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> &ControlNode<T> {
        &self.nodes[j]
    }

    pub fn num_modes(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.weights.len())
    }

    /// Node whose hold interval contains `t`.
    pub fn sample(&self, t: T) -> Result<&ControlNode<T>> {
        Ok(&self.nodes[self.grid.node_at(t)?])
    }
}

pub(crate) fn default_inputs<T: Scalar>(model: &HybridModel<T>) -> Vec<Vec<T>> {
    model
        .modes()
        .iter()
        .map(|m| m.control_set.origin_projection())
        .collect()
}

fn check_inputs<T: Scalar>(model: &HybridModel<T>, inputs: &[Vec<T>]) -> Result<()> {
    if inputs.len() != model.num_modes() {
        return Err(invalid(format!(
            "{} input vectors for {} modes",
            inputs.len(),
            model.num_modes()
        )));
    }
    for (i, (u, mode)) in inputs.iter().zip(model.modes()).enumerate() {
        if u.len() != mode.control_dim {
            return Err(invalid(format!(
                "mode {} input has length {}, expected {}",
                i + 1,
                u.len(),
                mode.control_dim
            )));
        }
    }
    Ok(())
}

/// A switching control: one active mode and its input per node.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinaryControl<T> {
    grid: TimeGrid<T>,
    modes: Vec<usize>,
    inputs: Vec<Vec<T>>,
}

impl<T: Scalar> OrdinaryControl<T> {
    /// `modes` are zero-based; `inputs[j]` is the input of mode `modes[j]`.
    pub fn new(grid: TimeGrid<T>, modes: Vec<usize>, inputs: Vec<Vec<T>>) -> Result<Self> {
        if modes.len() != grid.len() || inputs.len() != grid.len() {
            return Err(invalid("ordinary control length does not match grid"));
        }
        Ok(Self {
            grid,
            modes,
            inputs,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn mode(&self, j: usize) -> usize {
        self.modes[j]
    }

    pub fn input(&self, j: usize) -> &[T] {
        &self.inputs[j]
    }

    /// One-hot embedded control; inactive modes carry the set point nearest
    /// the origin (they have zero weight).
    pub fn to_embedded(&self, model: &HybridModel<T>) -> Result<EmbeddedControl<T>> {
        let defaults = default_inputs(model);
        let nodes = self
            .modes
            .iter()
            .zip(&self.inputs)
            .map(|(&i, u)| {
                if i >= model.num_modes() || u.len() != model.mode(i).control_dim {
                    return Err(invalid(format!("mode {} / input mismatch", i + 1)));
                }
                let mut inputs = defaults.clone();
                inputs[i] = u.clone();
                Ok(ControlNode::one_hot(model.num_modes(), i, inputs))
            })
            .collect::<Result<Vec<_>>>()?;
        EmbeddedControl::new(self.grid, nodes)
    }
}

pub(crate) fn same_grid<T: Scalar>(a: &TimeGrid<T>, b: &TimeGrid<T>) -> Result<()> {
    if a.steps() != b.steps() || (a.t_f() - b.t_f()).abs() > T::lit(1e-12) * a.t_f() {
        return Err(invalid(format!(
            "grid mismatch: {} steps on [0, {}] vs {} steps on [0, {}]",
            a.steps(),
            a.t_f(),
            b.steps(),
            b.t_f()
        )));
    }
    Ok(())
}

/// Folds the one-hot control `u_star` into `w` with step `lambda`:
/// `γ_i = (1−λ)α_i + λα*_i`, `ε_i = λα*_i/γ_i` (0 when `γ_i = 0`),
/// `ũ_i = (1−ε_i)u_i + ε_i u*_i`.
///
/// By affinity of the mode dynamics in `u`, the result has the same state
/// trajectory as the measure-level combination `(1−λ)w ⊕ λu*`, and by
/// convexity of the running costs its cost is no larger.
pub fn blend<T: Scalar>(
    w: &EmbeddedControl<T>,
    u_star: &OrdinaryControl<T>,
    lambda: T,
) -> Result<EmbeddedControl<T>> {
    same_grid(w.grid(), u_star.grid())?;
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(invalid(format!("step {lambda} outside [0, 1]")));
    }
    if lambda == T::zero() {
        return Ok(w.clone());
    }
    let nodes = w
        .nodes
        .iter()
        .enumerate()
        .map(|(j, node)| {
            let active = u_star.mode(j);
            let mut out = node.clone();
            for (i, g) in out.weights.iter_mut().enumerate() {
                *g = (T::one() - lambda) * *g;
                if i == active {
                    *g += lambda;
                }
            }
            let gamma = out.weights[active];
            let eps = if gamma > T::zero() {
                lambda / gamma
            } else {
                T::zero()
            };
            if eps > T::zero() {
                let target = u_star.input(j);
                for (u, &us) in out.inputs[active].iter_mut().zip(target) {
                    *u = (T::one() - eps) * *u + eps * us;
                }
            }
            out.renormalize();
            out
        })
        .collect();
    EmbeddedControl::new(*w.grid(), nodes)
}

/// Turns mode weights into a deterministic switching schedule.
///
/// Each cycle of `cycle` time units is split into consecutive slots, modes in
/// ascending index order, with slot lengths proportional to the cycle-average
/// weights and rounded to whole grid steps by largest remainder. Slot nodes
/// carry the input of `w` at the same node.
pub fn pwm_project<T: Scalar>(w: &EmbeddedControl<T>, cycle: T) -> Result<OrdinaryControl<T>> {
    let grid = *w.grid();
    let dt = grid.dt();
    if !(cycle >= dt * (T::one() - T::lit(1e-9))) {
        return Err(invalid(format!(
            "PWM cycle {cycle} shorter than grid step {dt}"
        )));
    }
    let per_cycle = (cycle / dt).round().to_usize().unwrap_or(1).max(1);
    let m = w.num_modes();
    let n_steps = grid.steps();
    let mut modes = vec![0usize; grid.len()];
    let mut inputs = vec![Vec::new(); grid.len()];

    let mut start = 0;
    while start < n_steps {
        let end = (start + per_cycle).min(n_steps);
        let len = end - start;
        let mut mean = vec![T::zero(); m];
        for node in &w.nodes[start..end] {
            for (acc, &a) in mean.iter_mut().zip(&node.weights) {
                *acc += a;
            }
        }
        let slots = largest_remainder(&mean, len);
        let mut j = start;
        for (i, &count) in slots.iter().enumerate() {
            for _ in 0..count {
                modes[j] = i;
                inputs[j] = w.nodes[j].inputs[i].clone();
                j += 1;
            }
        }
        start = end;
    }
    // The final node is outside every hold interval; repeat the last slot.
    let last = n_steps;
    modes[last] = modes[last - 1];
    inputs[last] = w.nodes[last].inputs[modes[last]].clone();
    OrdinaryControl::new(grid, modes, inputs)
}

/// Integer counts summing to `total`, proportional to `shares`
/// (ties go to the lower index).
fn largest_remainder<T: Scalar>(shares: &[T], total: usize) -> Vec<usize> {
    let sum: T = shares.iter().copied().sum();
    if !(sum > T::zero()) {
        let mut counts = vec![0; shares.len()];
        if let Some(c) = counts.first_mut() {
            *c = total;
        }
        return counts;
    }
    let tot = T::from_usize(total).unwrap();
    let quotas: Vec<T> = shares.iter().map(|&s| s / sum * tot).collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .map(|q| q.floor().to_usize().unwrap_or(0))
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Weights do not sum to one.
    SimplexSum,
    NegativeWeight,
    InputOutOfBounds,
    /// Weight or input vector has the wrong length.
    Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub node: usize,
    /// Zero-based mode index, when the violation belongs to one mode.
    pub mode: Option<usize>,
    pub magnitude: f64,
}

/// Outcome of [`validate`]: the worst violation found, if any.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub worst: Option<Violation>,
    pub count: usize,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.worst.is_none()
    }
}

/// Tolerance on simplex and box membership.
pub fn validation_tolerance<T: Scalar>() -> f64 {
    (64.0 * T::epsilon().to_f64_lossy()).max(1e-12)
}

/// Checks simplex and control-set membership of every node.
pub fn validate<T: Scalar>(w: &EmbeddedControl<T>, model: &HybridModel<T>) -> ValidationReport {
    let tol = validation_tolerance::<T>();
    let mut report = ValidationReport::default();
    let mut note = |v: Violation| {
        report.count += 1;
        if report
            .worst
            .as_ref()
            .is_none_or(|w| v.magnitude > w.magnitude)
        {
            report.worst = Some(v);
        }
    };
    for (j, node) in w.nodes().iter().enumerate() {
        if node.weights.len() != model.num_modes() || node.inputs.len() != model.num_modes() {
            note(Violation {
                kind: ViolationKind::Shape,
                node: j,
                mode: None,
                magnitude: f64::INFINITY,
            });
            continue;
        }
        let sum: T = node.weights.iter().copied().sum();
        let gap = (sum - T::one()).abs().to_f64_lossy();
        if gap > tol {
            note(Violation {
                kind: ViolationKind::SimplexSum,
                node: j,
                mode: None,
                magnitude: gap,
            });
        }
        for (i, (&a, (u, mode))) in node
            .weights
            .iter()
            .zip(node.inputs.iter().zip(model.modes()))
            .enumerate()
        {
            if -a.to_f64_lossy() > tol {
                note(Violation {
                    kind: ViolationKind::NegativeWeight,
                    node: j,
                    mode: Some(i),
                    magnitude: -a.to_f64_lossy(),
                });
            }
            if u.len() != mode.control_dim {
                note(Violation {
                    kind: ViolationKind::Shape,
                    node: j,
                    mode: Some(i),
                    magnitude: f64::INFINITY,
                });
                continue;
            }
            let out = mode.control_set.violation(u).to_f64_lossy();
            if out > tol {
                note(Violation {
                    kind: ViolationKind::InputOutOfBounds,
                    node: j,
                    mode: Some(i),
                    magnitude: out,
                });
            }
        }
    }
    report
}
