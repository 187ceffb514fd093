#![allow(dead_code)]

use mpcproto::linalg::Matrix;
use mpcproto::model::{augment_delta, discretize_euler, AugmentedModel, CtLinearModel, Feedthrough, OperatingPoint};
use mpcproto::mpc::{build_condensed_qp, MpcConfig};
use mpcproto::solvers::{solve_condensed_activeset, ActiveSetSettings, ActiveSetWorkspace, SolveStatus};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Random continuous-time model linearized at a random point.
pub fn random_ct(rng: &mut impl Rng, nx: usize, nu: usize, ny: usize) -> CtLinearModel {
    let mut a = random_matrix(rng, nx, nx, 1.0 / (nx as f64).sqrt());
    for i in 0..nx {
        a[(i, i)] -= rng.gen_range(0.2..1.0);
    }
    let b = random_matrix(rng, nx, nu, 1.0);
    let c = random_matrix(rng, ny, nx, 1.0);
    let op = OperatingPoint {
        x_c: random_vec(rng, nx, 1.0),
        u_c: random_vec(rng, nu, 1.0),
        y_c: random_vec(rng, ny, 1.0),
        xdot_c: random_vec(rng, nx, 0.2),
    };
    CtLinearModel::new(a, b, c, Matrix::zeros(ny, nu), op).unwrap()
}

pub fn random_aug(rng: &mut impl Rng, nx: usize, nu: usize, ny: usize, ts: f64) -> AugmentedModel {
    let ct = random_ct(rng, nx, nu, ny);
    augment_delta(&discretize_euler(&ct, ts).unwrap(), Feedthrough::Reject).unwrap()
}

/// Random tracking problem. Each bound family is present with probability
/// one half, sized so that some bounds bind and others do not.
pub fn random_problem(rng: &mut impl Rng, aug: &AugmentedModel, horizon: usize) -> (MpcConfig, Vec<f64>) {
    let (nu, ny) = (aug.n_u, aug.n_y);
    let w_y: Vec<f64> = (0..ny).map(|_| rng.gen_range(0.5..10.0)).collect();
    let w_du: Vec<f64> = (0..nu).map(|_| rng.gen_range(0.1..2.0)).collect();
    let mut cfg = MpcConfig::new(horizon, 0.1, &w_y, &w_du);
    cfg.r = aug.op.y_c.iter().map(|y| y + rng.gen_range(-1.0..1.0)).collect();
    if rng.gen_bool(0.7) {
        for j in 0..nu {
            let w = rng.gen_range(0.02..0.5);
            cfg.du_min[j] = -w;
            cfg.du_max[j] = w * rng.gen_range(0.5..1.5);
        }
    }
    let x0: Vec<f64> = random_vec(rng, aug.n_aug(), 0.5);
    if rng.gen_bool(0.5) {
        for j in 0..nu {
            let u_prev = aug.op.u_c[j] + x0[aug.n_x + j];
            cfg.u_min[j] = u_prev - rng.gen_range(0.05..1.0);
            cfg.u_max[j] = u_prev + rng.gen_range(0.05..1.0);
        }
    }
    if rng.gen_bool(0.3) {
        for o in 0..ny {
            if rng.gen_bool(0.5) {
                cfg.y_max[o] = cfg.r[o] + rng.gen_range(0.0..0.5);
            } else {
                cfg.y_min[o] = cfg.r[o] - rng.gen_range(0.0..0.5);
            }
        }
    }
    if cfg.y_min.iter().chain(&cfg.y_max).any(|v| v.is_finite()) {
        let qp = build_condensed_qp(aug, &cfg, &x0).unwrap();
        let probe = solve_condensed_activeset(&qp, &mut ActiveSetWorkspace::new(), &ActiveSetSettings::default());
        if probe.status == SolveStatus::Infeasible {
            cfg.y_min = vec![f64::NEG_INFINITY; ny];
            cfg.y_max = vec![f64::INFINITY; ny];
        }
    }
    (cfg, x0)
}
