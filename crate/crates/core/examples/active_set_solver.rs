//! Active-set solve of a condensed QP, checked against brute-force KKT
//! enumeration, and a warm-started re-solve reusing the working set.

use mpcproto::model::{augment_delta, discretize_euler, linearize, Feedthrough, OperatingPoint};
use mpcproto::mpc::{build_condensed_qp, MpcConfig};
use mpcproto::plants;
use mpcproto::solvers::{solve_condensed_activeset, solve_oracle_bruteforce, ActiveSetSettings, ActiveSetWorkspace};

fn main() {
    let plant = plants::linear_tank();
    let op = OperatingPoint::at(&plant, &[0.0, 0.0], &[0.0]).unwrap();
    let ct = linearize(&plant, &op, 1e-6).unwrap();
    let aug = augment_delta(&discretize_euler(&ct, 0.2).unwrap(), Feedthrough::Reject).unwrap();

    let mut cfg = MpcConfig::new(5, 0.2, &[10.0], &[0.2]);
    cfg.r = vec![1.0];
    cfg.du_min = vec![-0.4];
    cfg.du_max = vec![0.4];
    cfg.u_max = vec![1.0];

    let settings = ActiveSetSettings::default();
    let mut ws = ActiveSetWorkspace::new();
    let x0 = aug.initial_state(&[0.0, 0.0], &[0.0], None);
    let qp = build_condensed_qp(&aug, &cfg, &x0).unwrap();
    let sol = solve_condensed_activeset(&qp, &mut ws, &settings);
    println!("active set: {} in {} iterations, z = {:.6?}", sol.status, sol.iterations.outer, sol.z);
    println!("working set: {:?}", ws.working_set());

    let oracle = solve_oracle_bruteforce(&qp).unwrap();
    let diff = sol.z.iter().zip(&oracle.z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("oracle: z = {:.6?}, max difference {diff:.2e}", oracle.z);

    let x1 = aug.initial_state(&[0.01, 0.0], &[0.0], None);
    let qp1 = build_condensed_qp(&aug, &cfg, &x1).unwrap();
    let warm = solve_condensed_activeset(&qp1, &mut ws, &settings);
    let cold = solve_condensed_activeset(&qp1, &mut ActiveSetWorkspace::new(), &settings);
    println!(
        "next instant: warm start {} iterations, cold start {} iterations",
        warm.iterations.outer, cold.iterations.outer
    );
}
