//! Finite-difference self-check of analytic Jacobians and gradients.

use super::HybridModel;
use crate::linalg::Matrix;
use crate::Scalar;

/// Worst norm-wise relative errors found by [`derivative_check`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerivativeReport {
    pub dynamics_jac: f64,
    pub run_cost_grad: f64,
    pub terminal_grad: f64,
}

impl DerivativeReport {
    pub fn max(&self) -> f64 {
        self.dynamics_jac
            .max(self.run_cost_grad)
            .max(self.terminal_grad)
    }
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diff / scale.max(1e-8)
}

/// Compares every mode's state Jacobian and running-cost gradient, and the
/// terminal-cost gradient, against central differences at `(t, x, inputs[i])`.
pub fn derivative_check<T: Scalar>(
    model: &HybridModel<T>,
    t: T,
    x: &[T],
    inputs: &[Vec<T>],
) -> DerivativeReport {
    let n = model.state_dim();
    let mut report = DerivativeReport::default();
    let step = |v: T| T::lit(1e-6) * v.abs().max(T::one());

    for (i, u) in inputs.iter().enumerate().take(model.num_modes()) {
        let jac = model.f_jac(i, t, x, u);
        let grad = model.l_grad(i, t, x, u);
        let mut fd_jac = Matrix::<f64>::zeros(n, n);
        let mut fd_grad = vec![0.0; n];
        for k in 0..n {
            let h = step(x[k]);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let two_h = (xp[k] - xm[k]).to_f64_lossy();
            let fp = model.f(i, t, &xp, u);
            let fm = model.f(i, t, &xm, u);
            for r in 0..n {
                fd_jac[(r, k)] = (fp[r] - fm[r]).to_f64_lossy() / two_h;
            }
            fd_grad[k] = (model.l(i, t, &xp, u) - model.l(i, t, &xm, u)).to_f64_lossy() / two_h;
        }
        let analytic: Vec<f64> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|rc| jac[rc].to_f64_lossy())
            .collect();
        let numeric: Vec<f64> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|rc| fd_jac[rc])
            .collect();
        report.dynamics_jac = report.dynamics_jac.max(rel_err(&analytic, &numeric));
        let g: Vec<f64> = grad.iter().map(|v| v.to_f64_lossy()).collect();
        report.run_cost_grad = report.run_cost_grad.max(rel_err(&g, &fd_grad));
    }

    let tg: Vec<f64> = model
        .terminal_cost_grad(x)
        .iter()
        .map(|v| v.to_f64_lossy())
        .collect();
    let fd_tg: Vec<f64> = (0..n)
        .map(|k| {
            let h = step(x[k]);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            (model.terminal_cost(&xp) - model.terminal_cost(&xm)).to_f64_lossy()
                / (xp[k] - xm[k]).to_f64_lossy()
        })
        .collect();
    report.terminal_grad = rel_err(&tg, &fd_tg);
    report
}
