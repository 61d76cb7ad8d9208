mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxed_switch::sim::{eval_cost_combination, integrate_combination};
use relaxed_switch::{blend, eval_cost, integrate_state, Method, TimeGrid};

#[test]
fn blend_has_the_combination_trajectory_and_no_larger_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let m = [2, 3][case % 2];
        let n = [2, 4][(case / 2) % 2];
        let method = if case % 4 < 2 {
            Method::Euler
        } else {
            Method::Trapezoid
        };
        let model = common::random_model(&mut rng, m, n, case % 3 != 0);
        let grid = TimeGrid::new(1.0, 0.02).unwrap();
        let w = common::random_control(&mut rng, &model, grid);
        let u_star = common::random_switching(&mut rng, &model, grid);
        let lambda = rng.gen_range(0.0..=1.0);

        let y = blend(&w, &u_star, lambda).unwrap();
        let traj_y = integrate_state(&model, &y, method, None).unwrap();
        let traj_c = integrate_combination(&model, &w, &u_star, lambda, method, None).unwrap();
        for (a, b) in traj_y.states().iter().zip(traj_c.states()) {
            for (p, q) in a.iter().zip(b) {
                worst = worst.max((p - q).abs());
            }
        }

        let j_blend = eval_cost(&model, &y, &traj_y, None).unwrap();
        let j_combo = eval_cost_combination(&model, &w, &u_star, lambda, &traj_c, None).unwrap();
        assert!(
            j_blend <= j_combo + 1e-9,
            "case {case}: {j_blend} > {j_combo}"
        );
    }
    assert!(worst <= 1e-9, "max node discrepancy {worst:e}");
}

#[test]
fn combination_cost_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = common::random_model(&mut rng, 2, 2, true);
    let grid = TimeGrid::new(1.0, 0.05).unwrap();
    let w = common::random_control(&mut rng, &model, grid);
    let u_star = common::random_switching(&mut rng, &model, grid);
    for method in [Method::Euler, Method::Trapezoid] {
        let traj0 = integrate_combination(&model, &w, &u_star, 0.0, method, None).unwrap();
        let direct = integrate_state(&model, &w, method, None).unwrap();
        assert_eq!(
            eval_cost_combination(&model, &w, &u_star, 0.0, &traj0, None).unwrap(),
            eval_cost(&model, &w, &direct, None).unwrap()
        );
        let traj1 = integrate_combination(&model, &w, &u_star, 1.0, method, None).unwrap();
        let star = u_star.to_embedded(&model).unwrap();
        let traj_star = integrate_state(&model, &star, method, None).unwrap();
        approx::assert_relative_eq!(
            eval_cost_combination(&model, &w, &u_star, 1.0, &traj1, None).unwrap(),
            eval_cost(&model, &star, &traj_star, None).unwrap(),
            max_relative = 1e-12
        );
    }
}
