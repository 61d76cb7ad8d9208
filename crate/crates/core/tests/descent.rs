mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relaxed_switch::solver::{step, StepResult};
use relaxed_switch::{
    builtin_model, solve, EmbeddedControl, IterationRecord, Method, Overrides, SolveConfig,
    SolveStatus, TimeGrid,
};

fn certify(history: &[IterationRecord], alpha: f64) {
    for r in history {
        assert!(r.theta <= 0.0, "iter {}: theta {}", r.iter, r.theta);
        assert!(r.blend_cost < r.cost, "iter {}: no decrease", r.iter);
        assert!(
            r.combo_cost - r.cost < alpha * r.lambda * r.theta,
            "iter {}: Armijo",
            r.iter
        );
        assert!(
            r.combo_cost - r.blend_cost >= -1e-9,
            "iter {}: blend above combination",
            r.iter
        );
    }
    for pair in history.windows(2) {
        assert!(pair[1].cost < pair[0].cost);
    }
}

#[test]
fn random_instances_descend() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for case in 0..12 {
        let model = common::random_model(
            &mut rng,
            2 + case % 2,
            [2, 4][(case / 2) % 2],
            case % 3 != 0,
        );
        let mut config = SolveConfig::new(0.02);
        config.max_iters = 15;
        config.integrator = if case % 2 == 0 {
            Method::Euler
        } else {
            Method::Trapezoid
        };
        config.armijo_on_blend = case % 4 == 3;
        let grid = config.grid(1.0).unwrap();
        let w0 = common::random_control(&mut rng, &model, grid);
        let out = solve(&model, &w0, &config).unwrap();
        assert_ne!(out.status.label(), "step_failure", "case {case}");
        certify(&out.history, config.armijo_alpha);
        assert!(out.cost <= out.initial_cost);
    }
}

#[test]
fn stopping_rule_uses_final_theta() {
    let model = builtin_model("double_tank", &Overrides::new()).unwrap();
    let mut config = SolveConfig::new(0.5);
    config.max_iters = 40;
    config.armijo_alpha = 0.5;
    let grid = config.grid(30.0).unwrap();
    let w0 = EmbeddedControl::one_hot(&model, grid, 1, vec![vec![], vec![]]).unwrap();
    let out = solve(&model, &w0, &config).unwrap();
    assert_eq!(out.status, SolveStatus::MaxIters);
    assert!(out.theta < 0.0);
    config.theta_tol = -out.theta * 1.01;
    match step(&model, &out.control, &config, None).unwrap() {
        StepResult::Converged { theta } => assert_eq!(theta, out.theta),
        StepResult::Step { .. } => panic!("theta above tolerance still stepped"),
    }
    let again = solve(&model, &out.control, &config).unwrap();
    assert_eq!(again.status, SolveStatus::Converged);
    assert!(again.history.is_empty());
}

#[test]
fn single_precision_solve() {
    let model = builtin_model::<f32>("double_tank", &Overrides::new()).unwrap();
    let mut config = SolveConfig::<f32>::new(0.1);
    config.max_iters = 10;
    config.armijo_alpha = 0.5;
    config.theta_tol = 1e-3;
    let grid = TimeGrid::new(30.0f32, 0.1).unwrap();
    let w0 = EmbeddedControl::one_hot(&model, grid, 1, vec![vec![], vec![]]).unwrap();
    let out = solve(&model, &w0, &config).unwrap();
    assert!(out.cost < out.initial_cost);
    assert!((out.initial_cost - 84.44).abs() < 0.05);
}

#[test]
fn shooting_run_reduces_penalized_cost() {
    let model = builtin_model("unstable_lqr", &Overrides::new()).unwrap();
    let mut config = SolveConfig::new(0.1 / 9.0);
    config.integrator = Method::Trapezoid;
    config.max_iters = 20;
    config.shooting = Some(relaxed_switch::solver::ShootingParams::new(10));
    let grid = config.grid(2.0).unwrap();
    let w0 = EmbeddedControl::one_hot(&model, grid, 0, vec![vec![0.0], vec![0.0]]).unwrap();
    let out = solve(&model, &w0, &config).unwrap();
    certify(&out.history, config.armijo_alpha);
    for pair in out.history.windows(2) {
        assert!(pair[1].cost <= pair[0].next_cost + 1e-9);
    }
    assert!(out.cost < out.initial_cost);
    assert!(out.shooting.is_some());
}
