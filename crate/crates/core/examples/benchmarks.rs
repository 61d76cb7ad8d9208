//! Runs the three shipped models with their reference settings and prints
//! initial and final costs.

use std::time::Instant;

use relaxed_switch::solver::ShootingParams;
use relaxed_switch::{builtin_model, EmbeddedControl, Method, Overrides, SolveConfig};

fn run(name: &str, config: SolveConfig<f64>, active: usize, inputs: Vec<Vec<f64>>) {
    let model = builtin_model::<f64>(name, &Overrides::new()).unwrap();
    let grid = config.grid(model.t_f()).unwrap();
    let w0 = EmbeddedControl::one_hot(&model, grid, active, inputs).unwrap();
    let start = Instant::now();
    let out = relaxed_switch::solve(&model, &w0, &config).unwrap();
    let xf = out.trajectory.final_state();
    println!(
        "{name:<20} dt={:<8.5} iters={:<4} J0={:.4} J={:.4} theta={:.3e} x(tf)=({:.4}, {:.4}) defect={:.2e} status={} {:.0} ms",
        config.dt,
        out.history.len(),
        out.initial_cost,
        out.cost,
        out.theta,
        xf[0],
        xf[1],
        out.trajectory.max_defect(),
        out.status.label(),
        start.elapsed().as_secs_f64() * 1e3
    );
}

fn main() {
    for (dt, iters) in [(0.01, 100), (0.01, 50), (0.1, 100), (0.1, 50)] {
        let mut c = SolveConfig::new(dt);
        c.armijo_alpha = 0.5;
        c.max_iters = iters;
        run("double_tank", c, 1, vec![vec![], vec![]]);
    }

    let mut c = SolveConfig::new(0.01);
    c.armijo_alpha = 0.01;
    c.max_iters = 50;
    run("mass_spring_damper", c, 0, vec![vec![0.0], vec![0.0]]);

    let mut c = SolveConfig::new(0.1 / 9.0);
    c.integrator = Method::Trapezoid;
    c.max_iters = 400;
    c.shooting = Some(ShootingParams::new(10));
    run("unstable_lqr", c, 0, vec![vec![0.0], vec![0.0]]);
}
