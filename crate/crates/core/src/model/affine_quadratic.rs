//! Config-defined systems with linear mode dynamics and quadratic costs.
//!
//! Mode `i`: `f_i = A_i x + B_i u + d_i` and
//! `L_i = (x − x̄_i)ᵀ Q_i (x − x̄_i) + Σ_k r_{i,k} (u_k − ū_{i,k})² + c_i`.
//! Terminal cost: `(x − x̄_f)ᵀ Q_f (x − x̄_f)`.

use std::sync::Arc;

use super::{ControlSet, HybridModel, ModeFunctions, ModeSpec, QuadraticInU, TerminalCost};
use crate::error::{invalid, Result};
use crate::linalg::{dot, Matrix};
use crate::Scalar;

/// Declarative description of one mode. Empty `b` means `k_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineQuadraticModeSpec<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
    pub d: Vec<T>,
    pub q: Vec<Vec<T>>,
    pub x_ref: Vec<T>,
    pub r: Vec<T>,
    pub u_ref: Vec<T>,
    pub c: T,
    /// Per-coordinate bounds; infinite entries make the set an unbounded box.
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTerminal<T> {
    pub q: Vec<Vec<T>>,
    pub x_ref: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineQuadraticSpec<T> {
    pub x0: Vec<T>,
    pub t_f: T,
    pub modes: Vec<AffineQuadraticModeSpec<T>>,
    pub terminal: QuadraticTerminal<T>,
}

#[derive(Debug, Clone)]
pub struct AffineQuadraticMode<T> {
    a: Matrix<T>,
    b: Matrix<T>,
    d: Vec<T>,
    q: Matrix<T>,
    x_ref: Vec<T>,
    r: Vec<T>,
    u_ref: Vec<T>,
    c: T,
}

fn quad_form_grad<T: Scalar>(q: &Matrix<T>, e: &[T]) -> Vec<T> {
    let qe = q.mul_vec(e);
    let qte = q.tr_mul_vec(e);
    qe.iter().zip(&qte).map(|(&a, &b)| a + b).collect()
}

impl<T: Scalar> ModeFunctions<T> for AffineQuadraticMode<T> {
    fn phi(&self, _t: T, _x: &[T]) -> Matrix<T> {
        self.b.clone()
    }

    fn psi(&self, _t: T, x: &[T]) -> Vec<T> {
        let mut out = self.a.mul_vec(x);
        for (o, &d) in out.iter_mut().zip(&self.d) {
            *o += d;
        }
        out
    }

    fn phi_jac(&self, _t: T, x: &[T], _u: &[T]) -> Matrix<T> {
        Matrix::zeros(x.len(), x.len())
    }

    fn psi_jac(&self, _t: T, _x: &[T]) -> Matrix<T> {
        self.a.clone()
    }

    fn dynamics(&self, t: T, x: &[T], u: &[T]) -> Vec<T> {
        let mut out = self.psi(t, x);
        if !u.is_empty() {
            self.b.mul_vec_acc(u, &mut out);
        }
        out
    }

    fn run_cost(&self, _t: T, x: &[T], u: &[T]) -> T {
        let e: Vec<T> = x.iter().zip(&self.x_ref).map(|(&a, &b)| a - b).collect();
        let state = dot(&e, &self.q.mul_vec(&e));
        let input: T = u
            .iter()
            .zip(self.r.iter().zip(&self.u_ref))
            .map(|(&v, (&r, &v0))| r * (v - v0) * (v - v0))
            .sum();
        state + input + self.c
    }

    fn run_cost_grad_x(&self, _t: T, x: &[T], _u: &[T]) -> Vec<T> {
        let e: Vec<T> = x.iter().zip(&self.x_ref).map(|(&a, &b)| a - b).collect();
        quad_form_grad(&self.q, &e)
    }

    fn quadratic_in_u(&self, _t: T, _x: &[T]) -> Option<QuadraticInU<T>> {
        Some(QuadraticInU {
            weights: Matrix::diagonal(&self.r),
            linear: self
                .r
                .iter()
                .zip(&self.u_ref)
                .map(|(&r, &v0)| -T::lit(2.0) * r * v0)
                .collect(),
        })
    }
}

#[derive(Debug, Clone)]
struct QuadraticTerminalCost<T> {
    q: Matrix<T>,
    x_ref: Vec<T>,
}

impl<T: Scalar> TerminalCost<T> for QuadraticTerminalCost<T> {
    fn value(&self, x: &[T]) -> T {
        let e: Vec<T> = x.iter().zip(&self.x_ref).map(|(&a, &b)| a - b).collect();
        dot(&e, &self.q.mul_vec(&e))
    }

    fn grad(&self, x: &[T]) -> Vec<T> {
        let e: Vec<T> = x.iter().zip(&self.x_ref).map(|(&a, &b)| a - b).collect();
        quad_form_grad(&self.q, &e)
    }
}

fn matrix<T: Scalar>(name: &str, rows: &[Vec<T>], r: usize, c: usize) -> Result<Matrix<T>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(invalid(format!("{name} must be {r}x{c}")));
    }
    if r == 0 {
        return Ok(Matrix::zeros(0, c));
    }
    Ok(Matrix::from_rows(rows))
}

fn vector<T: Scalar>(name: &str, v: &[T], n: usize) -> Result<Vec<T>> {
    if v.len() != n {
        return Err(invalid(format!(
            "{name} must have length {n}, got {}",
            v.len()
        )));
    }
    Ok(v.to_vec())
}

/// Positive semidefiniteness of the symmetric part, via a pivoted
/// Cholesky-style elimination with a small tolerance.
fn is_psd<T: Scalar>(q: &Matrix<T>) -> bool {
    let n = q.rows();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = T::lit(0.5) * (q[(i, j)] + q[(j, i)]);
        }
    }
    let scale = (0..n).fold(T::one(), |m, i| m.max(s[(i, i)].abs()));
    let tol = T::lit(1e-12) * scale;
    for k in 0..n {
        let piv = s[(k, k)];
        if piv < -tol {
            return false;
        }
        if piv.abs() <= tol {
            if (k + 1..n).any(|j| s[(k, j)].abs() > tol.sqrt() * scale.sqrt()) {
                return false;
            }
            continue;
        }
        for i in k + 1..n {
            let f = s[(i, k)] / piv;
            for j in k..n {
                let v = s[(k, j)];
                s[(i, j)] -= f * v;
            }
        }
    }
    true
}

/// Builds a [`HybridModel`] from a declarative affine-quadratic description.
/// The closed-form box-quadratic Hamiltonian minimizer applies to every mode.
pub fn affine_quadratic_model<T: Scalar>(spec: &AffineQuadraticSpec<T>) -> Result<HybridModel<T>> {
    let n = spec.x0.len();
    if spec.modes.is_empty() {
        return Err(invalid("at least one mode is required"));
    }
    let mut modes = Vec::with_capacity(spec.modes.len());
    for (i, m) in spec.modes.iter().enumerate() {
        let ctx = |e: crate::Error| invalid(format!("mode {}: {e}", i + 1));
        let k = m.r.len();
        let b = if k == 0 && m.b.iter().all(Vec::is_empty) {
            Matrix::zeros(n, 0)
        } else {
            matrix("B", &m.b, n, k).map_err(ctx)?
        };
        let q = matrix("Q", &m.q, n, n).map_err(ctx)?;
        if !is_psd(&q) {
            return Err(invalid(format!(
                "mode {}: Q must be positive semidefinite",
                i + 1
            )));
        }
        let lower = vector("lower", &m.lower, k).map_err(ctx)?;
        let upper = vector("upper", &m.upper, k).map_err(ctx)?;
        for kk in 0..k {
            let unbounded = !(lower[kk].is_finite() && upper[kk].is_finite());
            if m.r[kk] < T::zero() || (unbounded && m.r[kk] <= T::zero()) {
                return Err(invalid(format!(
                    "mode {}: input weight r[{kk}] = {} must be positive when the bound is infinite \
                     (and non-negative otherwise)",
                    i + 1,
                    m.r[kk]
                )));
            }
        }
        let set = if k == 0 {
            ControlSet::Empty
        } else if lower.iter().chain(&upper).all(|v| v.is_finite()) {
            ControlSet::Box { lower, upper }
        } else {
            ControlSet::UnboundedBox { lower, upper }
        };
        let mode = AffineQuadraticMode {
            a: matrix("A", &m.a, n, n).map_err(ctx)?,
            b,
            d: vector("d", &m.d, n).map_err(ctx)?,
            q,
            x_ref: vector("x_ref", &m.x_ref, n).map_err(ctx)?,
            r: m.r.clone(),
            u_ref: vector("u_ref", &m.u_ref, k).map_err(ctx)?,
            c: m.c,
        };
        modes.push(ModeSpec::new(
            set,
            Arc::new(mode) as Arc<dyn ModeFunctions<T>>,
        ));
    }
    let qf = matrix("terminal Q", &spec.terminal.q, n, n)?;
    if !is_psd(&qf) {
        return Err(invalid("terminal Q must be positive semidefinite"));
    }
    let terminal = QuadraticTerminalCost {
        q: qf,
        x_ref: vector("terminal x_ref", &spec.terminal.x_ref, n)?,
    };
    HybridModel::new(
        "affine_quadratic",
        modes,
        Arc::new(terminal),
        spec.x0.clone(),
        spec.t_f,
    )
}

impl<T: Scalar> AffineQuadraticModeSpec<T> {
    /// A mode with zero dynamics, zero cost, and no continuous input.
    pub fn zeros(n: usize) -> Self {
        Self {
            a: vec![vec![T::zero(); n]; n],
            b: vec![Vec::new(); n],
            d: vec![T::zero(); n],
            q: vec![vec![T::zero(); n]; n],
            x_ref: vec![T::zero(); n],
            r: Vec::new(),
            u_ref: Vec::new(),
            c: T::zero(),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }
}
