#![allow(dead_code)]

use rand::Rng;
use relaxed_switch::model::{AffineQuadraticModeSpec, AffineQuadraticSpec, QuadraticTerminal};
use relaxed_switch::{
    affine_quadratic_model, ControlNode, EmbeddedControl, HybridModel, OrdinaryControl, TimeGrid,
};

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn matrix<R: Rng>(rng: &mut R, r: usize, c: usize, s: f64) -> Vec<Vec<f64>> {
    (0..r)
        .map(|_| (0..c).map(|_| uniform(rng, -s, s)).collect())
        .collect()
}

fn gram<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let l = matrix(rng, n, n, 0.7);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| l[i][k] * l[j][k]).sum())
                .collect()
        })
        .collect()
}

/// Random affine-quadratic problem with `m` modes and `n` states. Input
/// dimensions are drawn from {0, 1, 2} (at least one mode has inputs). With
/// `bounded` every input lives in a finite box; otherwise some coordinates
/// are unbounded with a positive weight.
pub fn random_spec<R: Rng>(
    rng: &mut R,
    m: usize,
    n: usize,
    bounded: bool,
) -> AffineQuadraticSpec<f64> {
    let mut dims: Vec<usize> = (0..m).map(|_| rng.gen_range(0..=2)).collect();
    if dims.iter().all(|&k| k == 0) {
        dims[0] = 1;
    }
    let modes = dims
        .iter()
        .map(|&k| {
            let lower: Vec<f64> = (0..k)
                .map(|_| {
                    if bounded || rng.gen_bool(0.5) {
                        uniform(rng, -2.0, -0.5)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let upper: Vec<f64> = (0..k)
                .map(|_| {
                    if bounded || rng.gen_bool(0.5) {
                        uniform(rng, 0.5, 2.0)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            AffineQuadraticModeSpec {
                a: matrix(rng, n, n, 0.8),
                b: if k == 0 {
                    vec![Vec::new(); n]
                } else {
                    matrix(rng, n, k, 1.0)
                },
                d: (0..n).map(|_| uniform(rng, -0.5, 0.5)).collect(),
                q: gram(rng, n),
                x_ref: (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect(),
                r: (0..k).map(|_| uniform(rng, 0.1, 1.0)).collect(),
                u_ref: (0..k).map(|_| uniform(rng, -0.5, 0.5)).collect(),
                c: uniform(rng, 0.0, 1.0),
                lower,
                upper,
            }
        })
        .collect();
    AffineQuadraticSpec {
        x0: (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect(),
        t_f: 1.0,
        modes,
        terminal: QuadraticTerminal {
            q: gram(rng, n),
            x_ref: (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect(),
        },
    }
}

pub fn random_model<R: Rng>(rng: &mut R, m: usize, n: usize, bounded: bool) -> HybridModel<f64> {
    affine_quadratic_model(&random_spec(rng, m, n, bounded)).unwrap()
}

/// A point of mode `i`'s control set; unbounded coordinates are drawn from
/// [-2, 2].
pub fn random_input<R: Rng>(rng: &mut R, model: &HybridModel<f64>, i: usize) -> Vec<f64> {
    let (lo, hi) = model.mode(i).control_set.bounds();
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| uniform(rng, l.max(-2.0), h.min(2.0)))
        .collect()
}

pub fn random_node<R: Rng>(rng: &mut R, model: &HybridModel<f64>) -> ControlNode<f64> {
    let mut node = ControlNode {
        weights: (0..model.num_modes())
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect(),
        inputs: (0..model.num_modes())
            .map(|i| random_input(rng, model, i))
            .collect(),
    };
    node.renormalize();
    node
}

pub fn random_control<R: Rng>(
    rng: &mut R,
    model: &HybridModel<f64>,
    grid: TimeGrid<f64>,
) -> EmbeddedControl<f64> {
    let nodes = (0..grid.len()).map(|_| random_node(rng, model)).collect();
    EmbeddedControl::new(grid, nodes).unwrap()
}

pub fn random_switching<R: Rng>(
    rng: &mut R,
    model: &HybridModel<f64>,
    grid: TimeGrid<f64>,
) -> OrdinaryControl<f64> {
    let modes: Vec<usize> = (0..grid.len())
        .map(|_| rng.gen_range(0..model.num_modes()))
        .collect();
    let inputs = modes.iter().map(|&i| random_input(rng, model, i)).collect();
    OrdinaryControl::new(grid, modes, inputs).unwrap()
}

pub fn random_state<R: Rng>(rng: &mut R, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, -s, s)).collect()
}
