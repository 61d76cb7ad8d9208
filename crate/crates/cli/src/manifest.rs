//! Run manifest: a TOML file with `[model]`, `[solve]`, `[init]` and
//! `[output]` sections.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use relaxed_switch::model::{AffineQuadraticModeSpec, AffineQuadraticSpec, QuadraticTerminal};
use relaxed_switch::solver::ShootingParams;
use relaxed_switch::{affine_quadratic_model, builtin_model, HybridModel, Method, SolveConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Builtin model name.
    pub name: Option<String>,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    pub affine_quadratic: Option<AffineQuadraticSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineQuadraticSection {
    pub x0: Vec<f64>,
    pub t_f: f64,
    pub modes: Vec<AqMode>,
    pub terminal: Option<AqTerminal>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AqMode {
    pub a: Vec<Vec<f64>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub d: Option<Vec<f64>>,
    pub q: Option<Vec<Vec<f64>>>,
    pub x_ref: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub u_ref: Option<Vec<f64>>,
    #[serde(default)]
    pub c: f64,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AqTerminal {
    pub q: Vec<Vec<f64>>,
    pub x_ref: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Trapezoid,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub dt: Option<f64>,
    #[serde(default)]
    pub integrator: Integrator,
    pub max_iters: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub max_backtracks: Option<usize>,
    pub theta_tol: Option<f64>,
    #[serde(default)]
    pub armijo_on_blend: bool,
    pub shooting_segments: Option<usize>,
    pub shooting_penalty: Option<f64>,
    pub z_steps: Option<usize>,
    pub z_step_init: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    OneHot,
    Uniform,
    Csv,
    Random,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default)]
    pub kind: InitKind,
    /// One-based mode for `one_hot` (default 1).
    pub mode: Option<usize>,
    /// Constant input per mode; defaults to the set point nearest 0.
    pub inputs: Option<Vec<Vec<f64>>>,
    pub path: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    pub pwm_cycle: Option<f64>,
    #[serde(default)]
    pub timing: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            pwm_cycle: None,
            timing: false,
        }
    }
}

/// A parsed manifest with relative paths resolved against its directory.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub manifest: Manifest,
    pub base: PathBuf,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Manifest(msg.into())
}

impl RunManifest {
    pub fn parse_str(text: &str, base: &Path) -> Result<Self, CliError> {
        let manifest: Manifest = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let run = Self {
            manifest,
            base: base.to_path_buf(),
        };
        run.check()?;
        Ok(run)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.manifest.output.dir)
    }

    fn check(&self) -> Result<(), CliError> {
        let m = &self.manifest;
        match (&m.model.name, &m.model.affine_quadratic) {
            (Some(_), Some(_)) => {
                return Err(bad(
                    "[model]: give either name or affine_quadratic, not both",
                ))
            }
            (None, None) => return Err(bad("[model]: name or affine_quadratic required")),
            (None, Some(_)) if !m.model.overrides.is_empty() => {
                return Err(bad("[model]: overrides only apply to builtin models"))
            }
            _ => {}
        }
        let s = &m.solve;
        let segments = s.shooting_segments.unwrap_or(1);
        if s.dt.is_none() && segments < 2 {
            return Err(bad("[solve]: dt required"));
        }
        if segments == 0 {
            return Err(bad("[solve]: shooting_segments must be at least 1"));
        }
        if segments < 2
            && (s.shooting_penalty.is_some() || s.z_steps.is_some() || s.z_step_init.is_some())
        {
            return Err(bad("[solve]: shooting options need shooting_segments >= 2"));
        }
        match m.init.kind {
            InitKind::Csv => {
                let p = m
                    .init
                    .path
                    .as_ref()
                    .ok_or_else(|| bad("[init]: path required for kind = \"csv\""))?;
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(bad(format!(
                        "[init]: control file {} does not exist",
                        full.display()
                    )));
                }
            }
            InitKind::Random if m.init.seed.is_none() => {
                return Err(bad("[init]: seed required for kind = \"random\""));
            }
            _ => {}
        }
        if let Some(c) = m.output.pwm_cycle {
            if !(c > 0.0) {
                return Err(bad("[output]: pwm_cycle must be positive"));
            }
        }
        self.solve_config(None)?
            .validate()
            .map_err(|e| bad(format!("[solve]: {e}")))?;
        Ok(())
    }

    /// Solver settings; `t_f` is only needed to check the grid.
    pub fn solve_config(&self, t_f: Option<f64>) -> Result<SolveConfig<f64>, CliError> {
        let s = &self.manifest.solve;
        let segments = s.shooting_segments.unwrap_or(1);
        let dt = match s.dt {
            Some(dt) => dt,
            None => relaxed_switch::ShootingConfig::<f64>::default_dt(segments),
        };
        let mut c = SolveConfig::new(dt);
        c.integrator = match s.integrator {
            Integrator::Euler => Method::Euler,
            Integrator::Trapezoid => Method::Trapezoid,
        };
        if let Some(v) = s.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = s.alpha {
            c.armijo_alpha = v;
        }
        if let Some(v) = s.beta {
            c.armijo_beta = v;
        }
        if let Some(v) = s.max_backtracks {
            c.max_backtracks = v;
        }
        if let Some(v) = s.theta_tol {
            c.theta_tol = v;
        }
        c.armijo_on_blend = s.armijo_on_blend;
        if segments >= 2 {
            let mut p = ShootingParams::new(segments);
            p.penalty = s.shooting_penalty;
            if let Some(v) = s.z_steps {
                p.z_steps = v;
            }
            if let Some(v) = s.z_step_init {
                p.z_step_init = v;
            }
            c.shooting = Some(p);
        }
        if let Some(t_f) = t_f {
            c.grid(t_f).map_err(|e| bad(format!("[solve]: {e}")))?;
        }
        Ok(c)
    }

    pub fn build_model(&self) -> Result<HybridModel<f64>, CliError> {
        let m = &self.manifest.model;
        let model = match (&m.name, &m.affine_quadratic) {
            (Some(name), _) => builtin_model(name, &m.overrides),
            (None, Some(aq)) => affine_quadratic_model(&aq.to_spec()),
            (None, None) => unreachable!("checked at parse time"),
        };
        model.map_err(|e| bad(format!("[model]: {e}")))
    }
}

impl AffineQuadraticSection {
    pub fn to_spec(&self) -> AffineQuadraticSpec<f64> {
        let n = self.x0.len();
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let zero = AffineQuadraticModeSpec::<f64>::zeros(n);
                let r = m.r.clone().unwrap_or_default();
                let k = r.len();
                AffineQuadraticModeSpec {
                    a: m.a.clone(),
                    b: m.b.clone().unwrap_or(zero.b),
                    d: m.d.clone().unwrap_or(zero.d),
                    q: m.q.clone().unwrap_or(zero.q),
                    x_ref: m.x_ref.clone().unwrap_or(zero.x_ref),
                    u_ref: m.u_ref.clone().unwrap_or_else(|| vec![0.0; k]),
                    lower: m
                        .lower
                        .clone()
                        .unwrap_or_else(|| vec![f64::NEG_INFINITY; k]),
                    upper: m.upper.clone().unwrap_or_else(|| vec![f64::INFINITY; k]),
                    r,
                    c: m.c,
                }
            })
            .collect();
        let terminal = match &self.terminal {
            Some(t) => QuadraticTerminal {
                q: t.q.clone(),
                x_ref: t.x_ref.clone().unwrap_or_else(|| vec![0.0; n]),
            },
            None => QuadraticTerminal {
                q: vec![vec![0.0; n]; n],
                x_ref: vec![0.0; n],
            },
        };
        AffineQuadraticSpec {
            x0: self.x0.clone(),
            t_f: self.t_f,
            modes,
            terminal,
        }
    }
}

pub fn parse_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunManifest::parse_str(&text, &base).map_err(|e| match e {
        CliError::Manifest(msg) => CliError::Manifest(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunManifest, CliError> {
        RunManifest::parse_str(text, Path::new("."))
    }

    #[test]
    fn tank_manifest() {
        let m = parse(
            "[model]\nname = \"double_tank\"\n[solve]\ndt = 0.01\nmax_iters = 100\nalpha = 0.5\nbeta = 0.5\n",
        )
        .unwrap();
        let c = m.solve_config(Some(30.0)).unwrap();
        assert_eq!(c.max_iters, 100);
        assert_eq!(c.armijo_alpha, 0.5);
        assert_eq!(m.build_model().unwrap().num_modes(), 2);
    }

    #[test]
    fn missing_dt() {
        let err = parse("[model]\nname = \"double_tank\"\n[solve]\nmax_iters = 3\n").unwrap_err();
        assert!(err.to_string().contains("dt required"), "{err}");
    }

    #[test]
    fn unknown_key_lists_accepted() {
        let err =
            parse("[model]\nname = \"double_tank\"\n[solve]\ndt = 0.1\ngamma = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma") && msg.contains("theta_tol"), "{msg}");
    }

    #[test]
    fn type_mismatch_names_line() {
        let err = parse("[model]\nname = \"double_tank\"\n[solve]\ndt = \"fast\"\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn shooting_defaults_dt() {
        let m =
            parse("[model]\nname = \"unstable_lqr\"\n[solve]\nshooting_segments = 10\n").unwrap();
        let c = m.solve_config(Some(2.0)).unwrap();
        assert!((c.dt - 0.1 / 9.0).abs() < 1e-15);
        assert_eq!(c.shooting.unwrap().penalty(), 22.5);
    }

    #[test]
    fn affine_quadratic_section() {
        let m = parse(
            r#"
[model.affine_quadratic]
x0 = [1.0]
t_f = 1.0
[[model.affine_quadratic.modes]]
a = [[-1.0]]
b = [[1.0]]
r = [1.0]
lower = [-1.0]
upper = [1.0]
[[model.affine_quadratic.modes]]
a = [[0.5]]
[model.affine_quadratic.terminal]
q = [[1.0]]
[solve]
dt = 0.1
"#,
        )
        .unwrap();
        let model = m.build_model().unwrap();
        assert_eq!(model.control_dims(), vec![1, 0]);
    }
}
