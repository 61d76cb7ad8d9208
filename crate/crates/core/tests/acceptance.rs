//! Reference runs on the three shipped models plus the randomized checks.
//! Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxed_switch::hammin::eval_hamiltonian_mode;
use relaxed_switch::model::derivative_check;
use relaxed_switch::sim::{
    cost_breakdown, eval_cost_combination, integrate_combination, shooting_z_gradient,
};
use relaxed_switch::solver::ShootingParams;
use relaxed_switch::{
    blend, build_ustar, builtin_model, compute_theta, eval_cost, integrate_costate,
    integrate_state, pointwise_min, pwm_project, EmbeddedControl, HybridModel, IterationRecord,
    Method, Overrides, SolveConfig, SolveOutcome, TimeGrid,
};

struct Criterion {
    name: &'static str,
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Criterion {
            name,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.checks.push((ok, detail));
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.0)
    }

    fn report(&self) {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        println!("{tag} {}", self.name);
        for (ok, detail) in &self.checks {
            println!("    [{}] {detail}", if *ok { "ok" } else { "x" });
        }
    }
}

struct Run {
    label: String,
    model: HybridModel<f64>,
    config: SolveConfig<f64>,
    out: SolveOutcome<f64>,
    secs: f64,
}

fn run(
    label: &str,
    name: &str,
    config: SolveConfig<f64>,
    mode: usize,
    inputs: Vec<Vec<f64>>,
) -> Run {
    let model = builtin_model(name, &Overrides::new()).unwrap();
    let grid = config.grid(model.t_f()).unwrap();
    let w0 = EmbeddedControl::one_hot(&model, grid, mode, inputs).unwrap();
    let start = Instant::now();
    let out = relaxed_switch::solve(&model, &w0, &config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Run {
        label: label.to_string(),
        model,
        config,
        out,
        secs,
    }
}

fn tank(dt: f64, iters: usize) -> Run {
    let mut c = SolveConfig::new(dt);
    c.armijo_alpha = 0.5;
    c.armijo_beta = 0.5;
    c.max_iters = iters;
    run(
        &format!("tank dt={dt} k={iters}"),
        "double_tank",
        c,
        1,
        vec![vec![], vec![]],
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b) / b
}

fn pwm_cost(model: &HybridModel<f64>, w: &EmbeddedControl<f64>, cycle: f64) -> (f64, f64) {
    let s = pwm_project(w, cycle).unwrap().to_embedded(model).unwrap();
    let traj = integrate_state(model, &s, Method::Euler, None).unwrap();
    let b = cost_breakdown(model, &s, &traj, None).unwrap();
    (b.total(), b.without_penalties())
}

fn tank_reproduction(c: &mut Criterion, long: &Run, short: &Run) {
    let j0 = long.out.initial_cost;
    c.check(
        rel(j0, 84.185).abs() <= 0.005,
        format!(
            "initial cost {j0:.4} vs 84.185 ({:+.3}%, tol 0.5%)",
            100.0 * rel(j0, 84.185)
        ),
    );
    c.check(
        long.out.cost <= 2.70,
        format!("100 iterations: J = {:.4} <= 2.70", long.out.cost),
    );
    c.check(
        short.out.cost <= 2.85,
        format!("50 iterations: J = {:.4} <= 2.85", short.out.cost),
    );
    c.check(
        long.secs < 20.0,
        format!("runtime {:.2} s < 20 s", long.secs),
    );
    let (pwm, _) = pwm_cost(&long.model, &long.out.control, 0.1);
    println!(
        "    info: PWM (cycle 0.1) cost of the 100-iteration control {pwm:.4} (reference 2.7051)"
    );
}

fn table_sweep(c: &mut Criterion, rows: &[&Run; 4]) {
    let reference = [2.627, 2.7482, 2.662, 2.7382];
    for (r, p) in rows.iter().zip(reference) {
        let e = rel(r.out.cost, p);
        c.check(
            e.abs() <= 0.05,
            format!(
                "{}: J = {:.4} vs {p} ({:+.2}%, tol 5%), {:.3} s",
                r.label,
                r.out.cost,
                100.0 * e,
                r.secs
            ),
        );
    }
    for (fine, coarse) in [(rows[0], rows[2]), (rows[1], rows[3])] {
        let ratio = fine.secs / coarse.secs;
        c.check(
            ratio >= 5.0,
            format!(
                "{} / {}: speedup {ratio:.1}x >= 5x",
                fine.label, coarse.label
            ),
        );
    }
}

fn spring_damper(c: &mut Criterion, r: &Run) {
    let j0 = r.out.initial_cost;
    c.check(
        rel(j0, 94.0906).abs() <= 0.01,
        format!(
            "initial cost {j0:.4} vs 94.0906 ({:+.2}%, tol 1%)",
            100.0 * rel(j0, 94.0906)
        ),
    );
    c.check(
        r.out.cost <= 16.0,
        format!("final cost {:.4} <= 16.0", r.out.cost),
    );
    let xf = r.out.trajectory.final_state();
    c.check(
        xf[0].abs() <= 0.02,
        format!("|x1(tf)| = {:.4} <= 0.02", xf[0].abs()),
    );
    c.check(
        xf[1].abs() <= 0.02,
        format!("|x2(tf)| = {:.4} <= 0.02", xf[1].abs()),
    );
    let (_, pwm) = pwm_cost(&r.model, &r.out.control, 0.1);
    c.check(
        pwm <= 16.7,
        format!("PWM (cycle 0.1) cost excluding penalty {pwm:.4} <= 16.7"),
    );
}

fn lqr(c: &mut Criterion, r: &Run) {
    c.check(
        r.out.cost <= 9.8,
        format!("penalty-augmented cost {:.4} <= 9.8", r.out.cost),
    );
    let defect = r.out.trajectory.max_defect();
    c.check(
        defect <= 0.05,
        format!("max shooting defect {defect:.4} <= 0.05"),
    );

    let shoot = r.out.shooting.clone().unwrap();
    let method = r.config.integrator;
    let w = &r.out.control;
    let cost = |s: &relaxed_switch::ShootingConfig<f64>| {
        let traj = integrate_state(&r.model, w, method, Some(s)).unwrap();
        eval_cost(&r.model, w, &traj, Some(s)).unwrap()
    };
    let traj = integrate_state(&r.model, w, method, Some(&shoot)).unwrap();
    let p = integrate_costate(&r.model, w, &traj, Some(&shoot)).unwrap();
    let g = shooting_z_gradient(&traj, &p, &shoot).unwrap();
    let h = 1e-6;
    let mut num = 0.0;
    let mut den = 0.0;
    for seg in 0..shoot.z.len() {
        for k in 0..shoot.z[seg].len() {
            let mut plus = shoot.clone();
            let mut minus = shoot.clone();
            plus.z[seg][k] += h;
            minus.z[seg][k] -= h;
            let fd = (cost(&plus) - cost(&minus)) / (2.0 * h);
            num += (fd - g[seg][k]).powi(2);
            den += fd * fd;
        }
    }
    let e = (num / den).sqrt();
    c.check(
        e < 1e-3,
        format!("z-gradient vs central differences: rel. err {e:.2e} < 1e-3"),
    );
}

fn certificates(c: &mut Criterion, runs: &[&Run]) {
    for r in runs {
        let h: &[IterationRecord] = &r.out.history;
        let alpha = r.config.armijo_alpha;
        let decrease =
            h.iter().all(|s| s.blend_cost < s.cost) && h.windows(2).all(|p| p[1].cost < p[0].cost);
        let armijo = h
            .iter()
            .all(|s| s.combo_cost - s.cost < alpha * s.lambda * s.theta);
        let theta = h.iter().all(|s| s.theta <= 0.0) && r.out.theta <= 0.0;
        let gap = h
            .iter()
            .map(|s| s.combo_cost - s.blend_cost)
            .fold(f64::INFINITY, f64::min);
        c.check(
            decrease && armijo && theta && gap >= -1e-9,
            format!(
                "{} ({} steps): decrease {decrease}, Armijo {armijo}, theta <= 0 {theta}, min combo-blend gap {gap:.2e}",
                r.label,
                h.len()
            ),
        );
    }
}

fn blend_identity(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut cost_ok = true;
    for case in 0..100 {
        let model = common::random_model(
            &mut rng,
            [2, 3][case % 2],
            [2, 4][(case / 2) % 2],
            case % 3 != 0,
        );
        let grid = TimeGrid::new(1.0, 0.02).unwrap();
        let w = common::random_control(&mut rng, &model, grid);
        let u = common::random_switching(&mut rng, &model, grid);
        let lambda = rng.gen_range(0.0..=1.0);
        let method = if case % 4 < 2 {
            Method::Euler
        } else {
            Method::Trapezoid
        };
        let y = blend(&w, &u, lambda).unwrap();
        let ty = integrate_state(&model, &y, method, None).unwrap();
        let tc = integrate_combination(&model, &w, &u, lambda, method, None).unwrap();
        for (a, b) in ty.states().iter().zip(tc.states()) {
            for (p, q) in a.iter().zip(b) {
                worst = worst.max((p - q).abs());
            }
        }
        let jy = eval_cost(&model, &y, &ty, None).unwrap();
        let jc = eval_cost_combination(&model, &w, &u, lambda, &tc, None).unwrap();
        cost_ok &= jy <= jc + 1e-9;
    }
    c.check(
        worst <= 1e-9,
        format!("100 instances: max node discrepancy {worst:.2e} <= 1e-9"),
    );
    c.check(
        cost_ok,
        "J(blend) <= J(combination) on every instance".to_string(),
    );
}

fn grid_min(model: &HybridModel<f64>, t: f64, x: &[f64], p: &[f64]) -> f64 {
    const POINTS: usize = 50;
    let mut best = f64::INFINITY;
    for i in 0..model.num_modes() {
        let (lo, hi) = model.mode(i).control_set.bounds();
        for idx in 0..POINTS.pow(lo.len() as u32) {
            let mut rest = idx;
            let u: Vec<f64> = (0..lo.len())
                .map(|k| {
                    let s = rest % POINTS;
                    rest /= POINTS;
                    lo[k] + (hi[k] - lo[k]) * s as f64 / (POINTS - 1) as f64
                })
                .collect();
            best = best.min(eval_hamiltonian_mode(model, i, t, x, &u, p).unwrap());
        }
    }
    best
}

fn oracle(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let models: Vec<HybridModel<f64>> = (0..10)
        .map(|k| common::random_model(&mut rng, 2 + k % 2, [2, 4][k % 2], true))
        .chain(
            ["mass_spring_damper", "double_tank"]
                .map(|n| builtin_model(n, &Overrides::new()).unwrap()),
        )
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for draw in 0..1000 {
        let model = &models[draw % models.len()];
        let n = model.state_dim();
        let x: Vec<f64> = if model.name == "double_tank" {
            (0..n).map(|_| rng.gen_range(0.1..4.0)).collect()
        } else {
            common::random_state(&mut rng, n, 3.0)
        };
        let p = common::random_state(&mut rng, n, 3.0);
        let t = rng.gen_range(0.0..model.t_f());
        let best = pointwise_min(model, t, &x, &p).unwrap().value;
        worst = worst.max(best - grid_min(model, t, &x, &p));
    }
    c.check(
        worst <= 1e-9,
        format!("1000 draws: max H(pointwise_min) - H(grid) = {worst:.2e} <= 1e-9"),
    );
}

fn derivatives(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut models: Vec<HybridModel<f64>> = ["double_tank", "unstable_lqr", "mass_spring_damper"]
        .iter()
        .map(|n| builtin_model(n, &Overrides::new()).unwrap())
        .collect();
    for k in 0..6 {
        models.push(common::random_model(
            &mut rng,
            2 + k % 2,
            [2, 4][k % 2],
            k % 3 != 0,
        ));
    }
    let mut worst = 0.0f64;
    for model in &models {
        for _ in 0..100 {
            let x: Vec<f64> = match model.name.as_str() {
                "double_tank" => (0..2).map(|_| rng.gen_range(0.2..4.0)).collect(),
                _ => loop {
                    let x = common::random_state(&mut rng, model.state_dim(), 5.0);
                    if model.name != "mass_spring_damper" || (x[0] - 1.0).abs() > 1e-3 {
                        break x;
                    }
                },
            };
            let t = rng.gen_range(0.0..model.t_f());
            let inputs: Vec<Vec<f64>> = (0..model.num_modes())
                .map(|i| common::random_input(&mut rng, model, i))
                .collect();
            worst = worst.max(derivative_check(model, t, &x, &inputs).max());
        }
    }
    c.check(
        worst < 1e-4,
        format!("Jacobians/gradients vs central differences: max rel. err {worst:.2e} < 1e-4"),
    );

    let mut worst = 0.0f64;
    for case in 0..40 {
        let model = common::random_model(
            &mut rng,
            2 + case % 2,
            [2, 4][(case / 2) % 2],
            case % 3 != 0,
        );
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let w = common::random_control(&mut rng, &model, grid);
        for method in [Method::Euler, Method::Trapezoid] {
            let traj = integrate_state(&model, &w, method, None).unwrap();
            let j = eval_cost(&model, &w, &traj, None).unwrap();
            let p = integrate_costate(&model, &w, &traj, None).unwrap();
            let us = build_ustar(&model, &traj, &p).unwrap();
            let theta = compute_theta(&model, &w, &traj, &p, &us).unwrap();
            let lambda = 1e-4;
            let tl = integrate_combination(&model, &w, &us, lambda, method, None).unwrap();
            let jl = eval_cost_combination(&model, &w, &us, lambda, &tl, None).unwrap();
            worst = worst.max(((jl - j) / lambda - theta).abs() / theta.abs());
        }
    }
    c.check(
        worst < 0.05,
        format!("[J(combo) - J(w)]/lambda vs theta at lambda=1e-4: max rel. err {worst:.2e} < 5%"),
    );
}

fn main() -> ExitCode {
    let t100 = tank(0.01, 100);
    let t50 = tank(0.01, 50);
    let c100 = tank(0.1, 100);
    let c50 = tank(0.1, 50);

    let mut msd_config = SolveConfig::new(0.01);
    msd_config.armijo_alpha = 0.01;
    msd_config.armijo_beta = 0.5;
    msd_config.max_iters = 50;
    let msd = run(
        "spring-damper",
        "mass_spring_damper",
        msd_config,
        0,
        vec![vec![0.0], vec![0.0]],
    );

    let mut lqr_config = SolveConfig::new(0.1 / 9.0);
    lqr_config.integrator = Method::Trapezoid;
    lqr_config.max_iters = 400;
    let mut params = ShootingParams::new(10);
    params.penalty = Some(22.5);
    lqr_config.shooting = Some(params);
    let lqr_run = run(
        "unstable LQR",
        "unstable_lqr",
        lqr_config,
        0,
        vec![vec![0.0], vec![0.0]],
    );

    let mut criteria = vec![
        Criterion::new("1 double-tank reproduction"),
        Criterion::new("2 table sweep"),
        Criterion::new("3 mass-spring damper"),
        Criterion::new("4 unstable LQR with multiple shooting"),
        Criterion::new("5 descent certificates"),
        Criterion::new("6 blend trajectory identity"),
        Criterion::new("7 pointwise minimizer vs enumeration"),
        Criterion::new("8 derivative checks"),
    ];
    tank_reproduction(&mut criteria[0], &t100, &t50);
    table_sweep(&mut criteria[1], &[&t100, &t50, &c100, &c50]);
    spring_damper(&mut criteria[2], &msd);
    lqr(&mut criteria[3], &lqr_run);
    certificates(
        &mut criteria[4],
        &[&t100, &t50, &c100, &c50, &msd, &lqr_run],
    );
    blend_identity(&mut criteria[5]);
    oracle(&mut criteria[6]);
    derivatives(&mut criteria[7]);

    for c in &criteria {
        c.report();
    }
    let failed = criteria.iter().filter(|c| !c.passed()).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
