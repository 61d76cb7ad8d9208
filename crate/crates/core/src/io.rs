//! CSV readers and writers for controls, trajectories, costates, iteration
//! logs and switching schedules.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! written control reloads bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::control::{ControlNode, EmbeddedControl, OrdinaryControl, TimeGrid};
use crate::error::{invalid, Result};
use crate::model::HybridModel;
use crate::sim::{CostateTrajectory, Trajectory};
use crate::solver::IterationRecord;
use crate::Scalar;

fn num<T: Scalar>(v: T) -> String {
    format!("{v}")
}

/// Header of the control CSV: `t, alpha_1..alpha_M, u{i}_{k}...`.
pub fn control_header(control_dims: &[usize]) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=control_dims.len()).map(|i| format!("alpha_{i}")));
    for (i, &k) in control_dims.iter().enumerate() {
        h.extend((1..=k).map(|c| format!("u{}_{c}", i + 1)));
    }
    h
}

pub fn write_control<T: Scalar, W: Write>(w: &EmbeddedControl<T>, out: W) -> Result<()> {
    let dims: Vec<usize> = w.node(0).inputs.iter().map(Vec::len).collect();
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(control_header(&dims))?;
    for (j, node) in w.nodes().iter().enumerate() {
        let mut row = vec![num(w.grid().time(j))];
        row.extend(node.weights.iter().map(|&a| num(a)));
        row.extend(node.inputs.iter().flatten().map(|&u| num(u)));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

fn parse<T: Scalar>(s: &str, line: usize, col: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| invalid(format!("line {line}: column {col}: cannot parse {s:?}")))
}

/// Reads a control CSV written by [`write_control`] for `model`. Rows must
/// sit on a uniform grid over `[0, t_f]`.
pub fn read_control<T: Scalar, R: Read>(
    model: &HybridModel<T>,
    input: R,
) -> Result<EmbeddedControl<T>> {
    let dims = model.control_dims();
    let expected = control_header(&dims);
    let mut csv = csv::Reader::from_reader(input);
    let header: Vec<String> = csv
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header != expected {
        return Err(invalid(format!(
            "control CSV header {header:?} does not match the model ({expected:?})"
        )));
    }
    let mut times = Vec::new();
    let mut nodes = Vec::new();
    for (r, rec) in csv.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        let vals = rec
            .iter()
            .zip(&expected)
            .map(|(s, col)| parse::<T>(s, line, col))
            .collect::<Result<Vec<T>>>()?;
        times.push(vals[0]);
        let m = dims.len();
        let weights = vals[1..=m].to_vec();
        let mut at = m + 1;
        let inputs = dims
            .iter()
            .map(|&k| {
                let u = vals[at..at + k].to_vec();
                at += k;
                u
            })
            .collect();
        nodes.push(ControlNode { weights, inputs });
    }
    if times.len() < 2 {
        return Err(invalid("control CSV needs at least two rows"));
    }
    let grid = TimeGrid::from_steps(model.t_f(), times.len() - 1)?;
    let tol = T::lit(1e-9) * model.t_f().max(T::one());
    for (j, &t) in times.iter().enumerate() {
        if (t - grid.time(j)).abs() > tol {
            return Err(invalid(format!(
                "line {}: time {t} is off the uniform grid (expected {})",
                j + 2,
                grid.time(j)
            )));
        }
    }
    EmbeddedControl::new(grid, nodes)
}

pub fn read_control_file<T: Scalar>(
    model: &HybridModel<T>,
    path: &Path,
) -> Result<EmbeddedControl<T>> {
    read_control(model, File::open(path)?)
}

fn write_series<T: Scalar, W: Write>(
    grid: &TimeGrid<T>,
    prefix: &str,
    rows: &[Vec<T>],
    out: W,
) -> Result<()> {
    let n = rows.first().map_or(0, Vec::len);
    let mut csv = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    csv.write_record(&header)?;
    for (j, row) in rows.iter().enumerate() {
        let mut rec = vec![num(grid.time(j))];
        rec.extend(row.iter().map(|&v| num(v)));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

/// `t, x_1..x_n`; shooting boundaries show the segment restart value.
pub fn write_trajectory<T: Scalar, W: Write>(traj: &Trajectory<T>, out: W) -> Result<()> {
    write_series(traj.grid(), "x", traj.states(), out)
}

/// `t, p_1..p_n`.
pub fn write_costate<T: Scalar, W: Write>(costate: &CostateTrajectory<T>, out: W) -> Result<()> {
    write_series(costate.grid(), "p", costate.costates(), out)
}

pub const ITERATION_HEADER: [&str; 6] = ["iter", "J", "theta", "lambda", "backtracks", "wall_ms"];

/// One row per step. With `timing` off, `wall_ms` is written as 0 so logs
/// are reproducible byte for byte.
pub fn write_iterations<W: Write>(history: &[IterationRecord], timing: bool, out: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(ITERATION_HEADER)?;
    for r in history {
        let wall = if timing { r.wall_ms } else { 0.0 };
        csv.write_record(&[
            r.iter.to_string(),
            r.cost.to_string(),
            r.theta.to_string(),
            r.lambda.to_string(),
            r.backtracks.to_string(),
            format!("{wall:.3}"),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// `t, mode, u_1..u_K` with one-based modes; `K` is the largest input
/// dimension and unused columns stay empty.
pub fn write_switching<T: Scalar, W: Write>(
    model: &HybridModel<T>,
    control: &OrdinaryControl<T>,
    out: W,
) -> Result<()> {
    let k_max = model.control_dims().into_iter().max().unwrap_or(0);
    let mut csv = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "mode".to_string()];
    header.extend((1..=k_max).map(|k| format!("u_{k}")));
    csv.write_record(&header)?;
    let grid = control.grid();
    for j in 0..grid.len() {
        let mut rec = vec![num(grid.time(j)), (control.mode(j) + 1).to_string()];
        let u = control.input(j);
        rec.extend((0..k_max).map(|k| u.get(k).map_or(String::new(), |&v| num(v))));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<File>) -> Result<()>,
{
    let mut w = std::io::BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Overrides};

    #[test]
    fn control_round_trip_is_exact() {
        let m: HybridModel<f64> = builtin_model("unstable_lqr", &Overrides::new()).unwrap();
        let grid = TimeGrid::new(2.0, 0.5).unwrap();
        let nodes = (0..grid.len())
            .map(|j| ControlNode {
                weights: vec![1.0 / 3.0, 2.0 / 3.0],
                inputs: vec![vec![0.1 * j as f64], vec![-1.0 / 7.0]],
            })
            .collect();
        let w = EmbeddedControl::new(grid, nodes).unwrap();
        let mut buf = Vec::new();
        write_control(&w, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,alpha_1,alpha_2,u1_1,u2_1\n"));
        let back = read_control(&m, buf.as_slice()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let m: HybridModel<f64> = builtin_model("unstable_lqr", &Overrides::new()).unwrap();
        let err = read_control(&m, "t,alpha_1\n0,1\n2,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn switching_columns_are_padded() {
        let m: HybridModel<f64> = builtin_model("double_tank", &Overrides::new()).unwrap();
        let grid = TimeGrid::new(30.0, 15.0).unwrap();
        let c = OrdinaryControl::new(grid, vec![0, 1, 1], vec![vec![]; 3]).unwrap();
        let mut buf = Vec::new();
        write_switching(&m, &c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,mode\n0,1\n15,2\n30,2\n");
    }

    #[test]
    fn iteration_log_without_timing() {
        let rec = IterationRecord {
            iter: 0,
            cost: 2.5,
            theta: -1.0,
            lambda: 0.5,
            backtracks: 1,
            wall_ms: 12.3,
            combo_cost: 2.0,
            blend_cost: 1.9,
            next_cost: 1.9,
            defect: 0.0,
        };
        let mut buf = Vec::new();
        write_iterations(&[rec], false, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iter,J,theta,lambda,backtracks,wall_ms\n0,2.5,-1,0.5,1,0.000\n"
        );
    }
}
