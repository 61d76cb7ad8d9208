//! Benchmark systems: a double-tank tracking problem, an unstable two-mode
//! LQR system, and a mass-spring damper with two viscosity levels.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use super::{
    ControlSet, HybridModel, ModeFunctions, ModeSpec, QuadraticInU, TerminalCost, ZeroTerminal,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::Scalar;

/// Parameter overrides for [`builtin_model`], keyed by parameter name.
pub type Overrides = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinName {
    DoubleTank,
    UnstableLqr,
    MassSpringDamper,
}

impl BuiltinName {
    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinName::DoubleTank => "double_tank",
            BuiltinName::UnstableLqr => "unstable_lqr",
            BuiltinName::MassSpringDamper => "mass_spring_damper",
        }
    }
}

impl FromStr for BuiltinName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double_tank" => Ok(BuiltinName::DoubleTank),
            "unstable_lqr" => Ok(BuiltinName::UnstableLqr),
            "mass_spring_damper" => Ok(BuiltinName::MassSpringDamper),
            other => Err(Error::NotFound(format!(
                "unknown builtin model {other:?} (available: {})",
                builtin_names().join(", ")
            ))),
        }
    }
}

pub fn builtin_names() -> Vec<&'static str> {
    vec!["double_tank", "unstable_lqr", "mass_spring_damper"]
}

/// Named parameter table with defaults; overrides may only touch known keys.
struct Params(Vec<(&'static str, f64)>);

impl Params {
    fn apply(mut self, model: &str, overrides: &Overrides) -> Result<Self> {
        for (key, &value) in overrides {
            match self.0.iter_mut().find(|(k, _)| k == key) {
                Some(slot) => slot.1 = value,
                None => {
                    let known: Vec<_> = self.0.iter().map(|(k, _)| *k).collect();
                    return Err(invalid(format!(
                        "{model} has no parameter {key:?} (known: {})",
                        known.join(", ")
                    )));
                }
            }
        }
        Ok(self)
    }

    fn get<T: Scalar>(&self, key: &str) -> T {
        let v = self
            .0
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .expect("parameter declared in table");
        T::lit(v)
    }
}

/// Instantiates one of the shipped benchmark systems.
pub fn builtin_model<T: Scalar>(name: &str, overrides: &Overrides) -> Result<HybridModel<T>> {
    match name.parse::<BuiltinName>()? {
        BuiltinName::DoubleTank => double_tank(overrides),
        BuiltinName::UnstableLqr => unstable_lqr(overrides),
        BuiltinName::MassSpringDamper => mass_spring_damper(overrides),
    }
}

// ---------------------------------------------------------------------------
// Double tank

/// One valve setting of the two-tank system. No continuous input.
#[derive(Debug, Clone)]
pub struct TankMode<T> {
    flow: T,
    weight: T,
    ref_amplitude: T,
    ref_frequency: T,
    ref_offset: T,
}

impl<T: Scalar> TankMode<T> {
    /// Tracking target `r(t) = a·sin(ω·π·t) + c`.
    pub fn reference(&self, t: T) -> T {
        self.ref_amplitude * (self.ref_frequency * T::lit(PI) * t).sin() + self.ref_offset
    }
}

fn clamped_sqrt<T: Scalar>(v: T) -> T {
    v.max(T::zero()).sqrt()
}

fn sqrt_slope<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::lit(0.5) / v.sqrt()
    } else {
        T::zero()
    }
}

impl<T: Scalar> ModeFunctions<T> for TankMode<T> {
    fn phi(&self, _t: T, x: &[T]) -> Matrix<T> {
        Matrix::zeros(x.len(), 0)
    }

    fn psi(&self, _t: T, x: &[T]) -> Vec<T> {
        let (s1, s2) = (clamped_sqrt(x[0]), clamped_sqrt(x[1]));
        vec![self.flow - s1, s1 - s2]
    }

    fn phi_jac(&self, _t: T, x: &[T], _u: &[T]) -> Matrix<T> {
        Matrix::zeros(x.len(), x.len())
    }

    fn psi_jac(&self, _t: T, x: &[T]) -> Matrix<T> {
        let (d1, d2) = (sqrt_slope(x[0]), sqrt_slope(x[1]));
        Matrix::from_rows(&[vec![-d1, T::zero()], vec![d1, -d2]])
    }

    fn dynamics(&self, t: T, x: &[T], _u: &[T]) -> Vec<T> {
        self.psi(t, x)
    }

    fn run_cost(&self, t: T, x: &[T], _u: &[T]) -> T {
        let e = x[1] - self.reference(t);
        self.weight * e * e
    }

    fn run_cost_grad_x(&self, t: T, x: &[T], _u: &[T]) -> Vec<T> {
        let e = x[1] - self.reference(t);
        vec![T::zero(), T::lit(2.0) * self.weight * e]
    }

    fn domain_violation(&self, x: &[T]) -> bool {
        x[0] < T::zero() || x[1] < T::zero()
    }
}

fn double_tank<T: Scalar>(overrides: &Overrides) -> Result<HybridModel<T>> {
    let p = Params(vec![
        ("x0_1", 2.0),
        ("x0_2", 2.0),
        ("t_f", 30.0),
        ("flow_1", 1.0),
        ("flow_2", 2.0),
        ("weight", 2.0),
        ("ref_amplitude", 0.5),
        ("ref_frequency", 0.1),
        ("ref_offset", 2.5),
    ])
    .apply("double_tank", overrides)?;
    let mode = |flow: &str| -> ModeSpec<T> {
        ModeSpec::new(
            ControlSet::Empty,
            Arc::new(TankMode {
                flow: p.get(flow),
                weight: p.get("weight"),
                ref_amplitude: p.get("ref_amplitude"),
                ref_frequency: p.get("ref_frequency"),
                ref_offset: p.get("ref_offset"),
            }),
        )
    };
    HybridModel::new(
        "double_tank",
        vec![mode("flow_1"), mode("flow_2")],
        Arc::new(ZeroTerminal),
        vec![p.get("x0_1"), p.get("x0_2")],
        p.get("t_f"),
    )
}

// ---------------------------------------------------------------------------
// Unstable LQR

/// `f = A x + b u`, `L = ½(x₂ − x₂ref)² + ½u²`.
#[derive(Debug, Clone)]
pub struct LqrMode<T> {
    a: Matrix<T>,
    b: Vec<T>,
    x2_track: T,
}

impl<T: Scalar> ModeFunctions<T> for LqrMode<T> {
    fn phi(&self, _t: T, _x: &[T]) -> Matrix<T> {
        Matrix::from_rows(&[vec![self.b[0]], vec![self.b[1]]])
    }

    fn psi(&self, _t: T, x: &[T]) -> Vec<T> {
        self.a.mul_vec(x)
    }

    fn phi_jac(&self, _t: T, _x: &[T], _u: &[T]) -> Matrix<T> {
        Matrix::zeros(2, 2)
    }

    fn psi_jac(&self, _t: T, _x: &[T]) -> Matrix<T> {
        self.a.clone()
    }

    fn dynamics(&self, _t: T, x: &[T], u: &[T]) -> Vec<T> {
        let mut out = self.a.mul_vec(x);
        out[0] += self.b[0] * u[0];
        out[1] += self.b[1] * u[0];
        out
    }

    fn run_cost(&self, _t: T, x: &[T], u: &[T]) -> T {
        let e = x[1] - self.x2_track;
        T::lit(0.5) * (e * e + u[0] * u[0])
    }

    fn run_cost_grad_x(&self, _t: T, x: &[T], _u: &[T]) -> Vec<T> {
        vec![T::zero(), x[1] - self.x2_track]
    }

    fn quadratic_in_u(&self, _t: T, _x: &[T]) -> Option<QuadraticInU<T>> {
        Some(QuadraticInU {
            weights: Matrix::diagonal(&[T::lit(0.5)]),
            linear: vec![T::zero()],
        })
    }
}

/// `½(x₁ − a)² + ½(x₂ − b)²`.
#[derive(Debug, Clone)]
pub struct HalfSquaredDistance<T> {
    target: Vec<T>,
}

impl<T: Scalar> TerminalCost<T> for HalfSquaredDistance<T> {
    fn value(&self, x: &[T]) -> T {
        x.iter()
            .zip(&self.target)
            .map(|(&a, &b)| T::lit(0.5) * (a - b) * (a - b))
            .sum()
    }

    fn grad(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.target).map(|(&a, &b)| a - b).collect()
    }
}

fn unstable_lqr<T: Scalar>(overrides: &Overrides) -> Result<HybridModel<T>> {
    let p = Params(vec![
        ("x0_1", 0.0),
        ("x0_2", 2.0),
        ("t_f", 2.0),
        ("x1_target", 4.0),
        ("x2_target", 2.0),
        ("x2_track", 2.0),
    ])
    .apply("unstable_lqr", overrides)?;
    let x2_track = p.get("x2_track");
    let modes = [
        ([[0.6, 1.2], [-0.8, 3.4]], [1.0, 1.0]),
        ([[4.0, 3.0], [-1.0, 0.0]], [2.0, -1.0]),
    ]
    .into_iter()
    .map(|(a, b)| {
        ModeSpec::new(
            ControlSet::unbounded(1),
            Arc::new(LqrMode {
                a: Matrix::from_f64_rows(&[&a[0], &a[1]]),
                b: b.iter().map(|&v| T::lit(v)).collect(),
                x2_track,
            }) as Arc<dyn ModeFunctions<T>>,
        )
    })
    .collect();
    HybridModel::new(
        "unstable_lqr",
        modes,
        Arc::new(HalfSquaredDistance {
            target: vec![p.get("x1_target"), p.get("x2_target")],
        }),
        vec![p.get("x0_1"), p.get("x0_2")],
        p.get("t_f"),
    )
}

// ---------------------------------------------------------------------------
// Mass-spring damper

/// `ẋ₁ = x₂`, `m ẋ₂ = −k(x₁) − b x₂ + u` with a piecewise-linear spring and
/// running cost `‖x‖² + r u² + c`.
#[derive(Debug, Clone)]
pub struct SpringDamperMode<T> {
    mass: T,
    damping: T,
    input_weight: T,
    offset_cost: T,
}

/// Spring force: `x + 1` for `x ≤ 1`, `3x + 7.5` above.
pub fn spring_force<T: Scalar>(x1: T) -> T {
    if x1 <= T::one() {
        x1 + T::one()
    } else {
        T::lit(3.0) * x1 + T::lit(7.5)
    }
}

/// Slope of [`spring_force`]; the left branch is used at the kink.
pub fn spring_slope<T: Scalar>(x1: T) -> T {
    if x1 <= T::one() {
        T::one()
    } else {
        T::lit(3.0)
    }
}

impl<T: Scalar> ModeFunctions<T> for SpringDamperMode<T> {
    fn phi(&self, _t: T, _x: &[T]) -> Matrix<T> {
        Matrix::from_rows(&[vec![T::zero()], vec![self.mass.recip()]])
    }

    fn psi(&self, _t: T, x: &[T]) -> Vec<T> {
        vec![
            x[1],
            (-spring_force(x[0]) - self.damping * x[1]) / self.mass,
        ]
    }

    fn phi_jac(&self, _t: T, _x: &[T], _u: &[T]) -> Matrix<T> {
        Matrix::zeros(2, 2)
    }

    fn psi_jac(&self, _t: T, x: &[T]) -> Matrix<T> {
        Matrix::from_rows(&[
            vec![T::zero(), T::one()],
            vec![-spring_slope(x[0]) / self.mass, -self.damping / self.mass],
        ])
    }

    fn dynamics(&self, _t: T, x: &[T], u: &[T]) -> Vec<T> {
        vec![
            x[1],
            (-spring_force(x[0]) - self.damping * x[1] + u[0]) / self.mass,
        ]
    }

    fn run_cost(&self, _t: T, x: &[T], u: &[T]) -> T {
        x[0] * x[0] + x[1] * x[1] + self.input_weight * u[0] * u[0] + self.offset_cost
    }

    fn run_cost_grad_x(&self, _t: T, x: &[T], _u: &[T]) -> Vec<T> {
        vec![T::lit(2.0) * x[0], T::lit(2.0) * x[1]]
    }

    fn quadratic_in_u(&self, _t: T, _x: &[T]) -> Option<QuadraticInU<T>> {
        Some(QuadraticInU {
            weights: Matrix::diagonal(&[self.input_weight]),
            linear: vec![T::zero()],
        })
    }
}

/// `Σ w_k x_k²`.
#[derive(Debug, Clone)]
pub struct WeightedSquares<T> {
    weights: Vec<T>,
}

impl<T: Scalar> WeightedSquares<T> {
    pub fn new(weights: Vec<T>) -> Self {
        Self { weights }
    }
}

impl<T: Scalar> TerminalCost<T> for WeightedSquares<T> {
    fn value(&self, x: &[T]) -> T {
        x.iter().zip(&self.weights).map(|(&v, &w)| w * v * v).sum()
    }

    fn grad(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.weights)
            .map(|(&v, &w)| T::lit(2.0) * w * v)
            .collect()
    }
}

fn mass_spring_damper<T: Scalar>(overrides: &Overrides) -> Result<HybridModel<T>> {
    let p = Params(vec![
        ("x0_1", 3.0),
        ("x0_2", 4.0),
        ("t_f", 12.0),
        ("mass", 1.0),
        ("b_1", 1.0),
        ("b_2", 50.0),
        ("u_max", 10.0),
        ("input_weight", 0.2),
        ("mode2_cost", 1.0),
        ("penalty_x1", 5.0),
        ("penalty_x2", 30.0),
    ])
    .apply("mass_spring_damper", overrides)?;
    let u_max: T = p.get("u_max");
    let mode = |b: &str, offset: T| {
        ModeSpec::new(
            ControlSet::boxed(vec![-u_max], vec![u_max]),
            Arc::new(SpringDamperMode {
                mass: p.get("mass"),
                damping: p.get(b),
                input_weight: p.get("input_weight"),
                offset_cost: offset,
            }) as Arc<dyn ModeFunctions<T>>,
        )
    };
    let model = HybridModel::new(
        "mass_spring_damper",
        vec![mode("b_1", T::zero()), mode("b_2", p.get("mode2_cost"))],
        Arc::new(WeightedSquares::new(vec![T::one(), T::one()])),
        vec![p.get("x0_1"), p.get("x0_2")],
        p.get("t_f"),
    )?;
    Ok(model.with_penalty(Arc::new(WeightedSquares::new(vec![
        p.get("penalty_x1"),
        p.get("penalty_x2"),
    ]))))
}
