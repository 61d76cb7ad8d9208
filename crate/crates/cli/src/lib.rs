//! Library side of the `relaxed-switch` command: manifest parsing, the `run`
//! pipeline and the double-tank `table1` sweep.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxed_switch::io::{
    read_control_file, write_control, write_costate, write_file, write_iterations, write_switching,
    write_trajectory,
};
use relaxed_switch::sim::cost_breakdown;
use relaxed_switch::{
    integrate_costate, integrate_state, pwm_project, ControlNode, EmbeddedControl, HybridModel,
    SolveConfig, SolveStatus, TimeGrid,
};
use thiserror::Error;

pub mod manifest;

pub use manifest::{parse_manifest, InitKind, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] relaxed_switch::Error),
}

impl CliError {
    /// 2 for manifest and configuration problems, 3 for a failed line
    /// search, 4 for I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use relaxed_switch::Error as E;
        match self {
            CliError::Manifest(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Solver(e) => match e {
                E::InvalidArgument(_)
                | E::NotFound(_)
                | E::Configuration(_)
                | E::Unsupported(_) => 2,
                E::StepFailure { .. } => 3,
                E::Io(_) | E::Csv(_) => 4,
                E::Divergence { .. } => 1,
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(relaxed_switch::Error) -> CliError + '_ {
    move |e| match e {
        relaxed_switch::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        relaxed_switch::Error::Csv(c) => CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(c),
        },
        other => CliError::Solver(other),
    }
}

/// Initial control described by the `[init]` section.
pub fn initial_control(
    run: &RunManifest,
    model: &HybridModel<f64>,
    grid: TimeGrid<f64>,
) -> Result<EmbeddedControl<f64>, CliError> {
    let init = &run.manifest.init;
    let bad = |m: String| CliError::Manifest(format!("[init]: {m}"));
    let m = model.num_modes();
    let inputs = match &init.inputs {
        Some(v) => {
            if v.len() != m {
                return Err(bad(format!("inputs needs one vector per mode ({m})")));
            }
            for (i, (u, mode)) in v.iter().zip(model.modes()).enumerate() {
                if u.len() != mode.control_dim {
                    return Err(bad(format!(
                        "input of mode {} has length {}, expected {}",
                        i + 1,
                        u.len(),
                        mode.control_dim
                    )));
                }
                if mode.control_set.violation(u) > 0.0 {
                    return Err(bad(format!(
                        "input of mode {} is outside its control set",
                        i + 1
                    )));
                }
            }
            Some(v.clone())
        }
        None => None,
    };
    let defaults = || {
        model
            .modes()
            .iter()
            .map(|s| s.control_set.origin_projection())
            .collect::<Vec<_>>()
    };
    let w = match init.kind {
        InitKind::OneHot => {
            let mode = init.mode.unwrap_or(1);
            if mode == 0 || mode > m {
                return Err(bad(format!("mode {mode} outside 1..={m}")));
            }
            EmbeddedControl::one_hot(model, grid, mode - 1, inputs.unwrap_or_else(defaults))?
        }
        InitKind::Uniform => {
            let node = ControlNode {
                weights: vec![1.0 / m as f64; m],
                inputs: inputs.unwrap_or_else(defaults),
            };
            EmbeddedControl::constant(grid, node)
        }
        InitKind::Csv => {
            let path = run.resolve(init.path.as_ref().expect("checked at parse time"));
            let w = read_control_file(model, &path).map_err(io_err(&path))?;
            if w.grid().steps() != grid.steps() {
                return Err(bad(format!(
                    "{} has {} intervals, the solve grid has {}",
                    path.display(),
                    w.grid().steps(),
                    grid.steps()
                )));
            }
            w
        }
        InitKind::Random => random_control(model, grid, init.seed.expect("checked at parse time"))?,
    };
    Ok(w)
}

/// Seeded random embedded control: weights from normalized exponentials,
/// inputs uniform in each box (in [-1, 1] on unbounded coordinates).
pub fn random_control(
    model: &HybridModel<f64>,
    grid: TimeGrid<f64>,
    seed: u64,
) -> Result<EmbeddedControl<f64>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..grid.len())
        .map(|_| {
            let mut node = ControlNode {
                weights: (0..model.num_modes())
                    .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                    .collect(),
                inputs: model
                    .modes()
                    .iter()
                    .map(|s| {
                        let (lo, hi) = s.control_set.bounds();
                        lo.iter()
                            .zip(hi)
                            .map(|(&l, &h)| {
                                let (l, h) = if l.is_finite() && h.is_finite() {
                                    (l, h)
                                } else {
                                    (l.max(-1.0), h.min(1.0))
                                };
                                if h > l {
                                    rng.gen_range(l..=h)
                                } else {
                                    l
                                }
                            })
                            .collect()
                    })
                    .collect(),
            };
            node.renormalize();
            node
        })
        .collect();
    Ok(EmbeddedControl::new(grid, nodes)?)
}

/// What a run produced, for the terminal summary.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub model: String,
    pub status: SolveStatus,
    pub iterations: usize,
    pub initial_cost: f64,
    pub cost: f64,
    pub theta: f64,
    pub final_state: Vec<f64>,
    pub defect: Option<f64>,
    /// Re-simulated cost of the PWM projection, with and without the
    /// final-state penalty.
    pub pwm: Option<(f64, f64)>,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model        {}", self.model)?;
        writeln!(f, "status       {}", self.status.label())?;
        writeln!(f, "iterations   {}", self.iterations)?;
        writeln!(f, "initial J    {:.6}", self.initial_cost)?;
        writeln!(f, "final J      {:.6}", self.cost)?;
        writeln!(f, "theta        {:.6e}", self.theta)?;
        let xf: Vec<String> = self.final_state.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(f, "x(t_f)       ({})", xf.join(", "))?;
        if let Some(d) = self.defect {
            writeln!(f, "defect       {d:.6e}")?;
        }
        if let Some((j, jn)) = self.pwm {
            writeln!(f, "pwm J        {j:.6}")?;
            writeln!(f, "pwm J - pen  {jn:.6}")?;
        }
        if let SolveStatus::StepFailure {
            theta,
            last_lambda,
            last_gap,
            backtracks,
        } = &self.status
        {
            writeln!(
                f,
                "step failure after {backtracks} backtracks: theta = {theta:e}, last lambda = {last_lambda:e}, last gap = {last_gap:e}"
            )?;
        }
        for p in &self.files {
            writeln!(f, "wrote        {}", p.display())?;
        }
        Ok(())
    }
}

/// Solves the manifest's problem and writes the output files.
pub fn run(manifest: &RunManifest, out_dir: Option<&Path>) -> Result<RunReport, CliError> {
    let model = manifest.build_model()?;
    let config: SolveConfig<f64> = manifest.solve_config(Some(model.t_f()))?;
    let grid = config.grid(model.t_f())?;
    let w0 = initial_control(manifest, &model, grid)?;
    let out = relaxed_switch::solve(&model, &w0, &config)?;

    let dir = out_dir.map_or_else(|| manifest.output_dir(), Path::to_path_buf);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io {
        path: dir.clone(),
        source: e,
    })?;
    let timing = manifest.manifest.output.timing;
    let mut files = Vec::new();
    let mut emit =
        |name: &str,
         f: &dyn Fn(&mut std::io::BufWriter<std::fs::File>) -> relaxed_switch::Result<()>| {
            let path = dir.join(name);
            write_file(&path, |w| f(w)).map_err(io_err(&path))?;
            files.push(path);
            Ok::<_, CliError>(())
        };
    emit("iterations.csv", &|w| {
        write_iterations(&out.history, timing, w)
    })?;
    emit("control.csv", &|w| write_control(&out.control, w))?;
    emit("trajectory.csv", &|w| write_trajectory(&out.trajectory, w))?;
    let costate = integrate_costate(&model, &out.control, &out.trajectory, out.shooting.as_ref())?;
    emit("costate.csv", &|w| write_costate(&costate, w))?;

    let pwm = match manifest.manifest.output.pwm_cycle {
        Some(cycle) => {
            let switching = pwm_project(&out.control, cycle)?;
            let embedded = switching.to_embedded(&model)?;
            let traj = integrate_state(&model, &embedded, config.integrator, None)?;
            let parts = cost_breakdown(&model, &embedded, &traj, None)?;
            emit("pwm.csv", &|w| write_switching(&model, &switching, w))?;
            emit("pwm_trajectory.csv", &|w| write_trajectory(&traj, w))?;
            Some((parts.total(), parts.without_penalties()))
        }
        None => None,
    };

    Ok(RunReport {
        model: model.name.clone(),
        status: out.status.clone(),
        iterations: out.history.len(),
        initial_cost: out.initial_cost,
        cost: out.cost,
        theta: out.theta,
        final_state: out.trajectory.final_state().to_vec(),
        defect: out.shooting.as_ref().map(|_| out.trajectory.max_defect()),
        pwm,
        files,
    })
}

/// The four (Δt, iterations) settings of the double-tank sweep.
pub const TABLE1_ROWS: [(f64, usize); 4] = [(0.01, 100), (0.01, 50), (0.1, 100), (0.1, 50)];

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub dt: f64,
    pub iters: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub wall_ms: f64,
}

/// Runs the double-tank sweep. `base` supplies model overrides and the
/// Armijo constants (α = β = 0.5 when absent); its dt and max_iters are
/// replaced row by row.
pub fn table1(base: Option<&RunManifest>, parallel: bool) -> Result<Vec<Table1Row>, CliError> {
    let overrides = match base {
        Some(m) => {
            if m.manifest.model.name.as_deref() != Some("double_tank") {
                return Err(CliError::Manifest(
                    "table1 needs model name = \"double_tank\"".into(),
                ));
            }
            m.manifest.model.overrides.clone()
        }
        None => Default::default(),
    };
    let model = relaxed_switch::builtin_model::<f64>("double_tank", &overrides)?;
    let template = {
        let mut c = match base {
            Some(m) => m.solve_config(None)?,
            None => SolveConfig::new(0.01),
        };
        let s = base.map(|m| &m.manifest.solve);
        c.armijo_alpha = s.and_then(|s| s.alpha).unwrap_or(0.5);
        c.armijo_beta = s.and_then(|s| s.beta).unwrap_or(0.5);
        c.shooting = None;
        c
    };
    let one = |(dt, iters): (f64, usize)| -> Result<Table1Row, CliError> {
        let mut c = template.clone();
        c.dt = dt;
        c.max_iters = iters;
        let grid = c.grid(model.t_f())?;
        let w0 = EmbeddedControl::one_hot(&model, grid, 1, vec![vec![]; model.num_modes()])?;
        let start = std::time::Instant::now();
        let out = relaxed_switch::solve(&model, &w0, &c)?;
        Ok(Table1Row {
            dt,
            iters,
            initial_cost: out.initial_cost,
            final_cost: out.cost,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    };
    if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = TABLE1_ROWS
                .iter()
                .map(|&r| s.spawn(move || one(r)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("table1 worker panicked"))
                .collect()
        })
    } else {
        TABLE1_ROWS.iter().map(|&r| one(r)).collect()
    }
}

pub fn write_table1<W: std::io::Write>(rows: &[Table1Row], out: W) -> std::io::Result<()> {
    let mut out = out;
    writeln!(out, "dt,iters,J_initial,J_final,wall_ms")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.3}",
            r.dt, r.iters, r.initial_cost, r.final_cost, r.wall_ms
        )?;
    }
    Ok(())
}
