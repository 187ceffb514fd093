//! CDAL on the AFTI-16 sparse QP: a cold solve, then warm-started solves as
//! the initial state drifts, as they would inside a closed loop.

use mpcproto::model::{augment_delta, discretize_euler, linearize, Feedthrough, OperatingPoint};
use mpcproto::mpc::{build_sparse_qp, MpcConfig};
use mpcproto::plants;
use mpcproto::solvers::{solve_sparse_cdal_stage, CdalSettings, CdalWorkspace};

fn main() {
    let plant = plants::afti16();
    let op = OperatingPoint::at(&plant, &[0.0; 4], &[0.0; 2]).unwrap();
    let ct = linearize(&plant, &op, 1e-6).unwrap();
    let aug = augment_delta(&discretize_euler(&ct, 0.05).unwrap(), Feedthrough::Reject).unwrap();

    let mut cfg = MpcConfig::new(10, 0.05, &[10.0, 10.0], &[0.1, 0.1]);
    cfg.r = vec![0.0, 10.0];
    cfg.u_min = vec![-25.0; 2];
    cfg.u_max = vec![25.0; 2];
    cfg.du_min = vec![-5.0; 2];
    cfg.du_max = vec![5.0; 2];
    cfg.y_min = vec![-0.5, f64::NEG_INFINITY];
    cfg.y_max = vec![0.5, f64::INFINITY];

    let settings = CdalSettings::default();
    let mut ws = CdalWorkspace::new();
    for k in 0..5 {
        let x0 = aug.initial_state(&[0.0, 0.02 * k as f64, 0.0, 0.1 * k as f64], &[0.0, 0.0], None);
        let qp = build_sparse_qp(&aug, &cfg, &x0).unwrap();
        let sol = solve_sparse_cdal_stage(&qp, &mut ws, &settings);
        println!(
            "solve {k}: {} after {} outer / {} sweeps, objective {:.6}, first move {:.4?}, residuals {:.1e} / {:.1e}",
            sol.status,
            sol.iterations.outer,
            sol.iterations.inner,
            sol.objective,
            &sol.z[..2],
            sol.primal_residual,
            sol.dual_residual
        );
    }
}
