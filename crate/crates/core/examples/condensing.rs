//! Condensed and sparse QPs for the same tank problem, and a check that
//! both describe the same optimization.

use mpcproto::linalg::is_positive_semidefinite;
use mpcproto::model::{augment_delta, discretize_euler, linearize, Feedthrough, OperatingPoint};
use mpcproto::mpc::{build_condensed_qp, build_sparse_qp, MpcConfig};
use mpcproto::plants;

fn main() {
    let plant = plants::linear_tank();
    let op = OperatingPoint::at(&plant, &[0.0, 0.0], &[0.0]).unwrap();
    let ct = linearize(&plant, &op, 1e-6).unwrap();
    let aug = augment_delta(&discretize_euler(&ct, 0.1).unwrap(), Feedthrough::Reject).unwrap();

    let mut cfg = MpcConfig::new(4, 0.1, &[10.0], &[0.5]);
    cfg.r = vec![1.0];
    cfg.du_min = vec![-0.3];
    cfg.du_max = vec![0.3];
    cfg.y_max = vec![1.05];
    let x0 = aug.initial_state(&[0.0, 0.0], &[0.0], None);

    let cond = build_condensed_qp(&aug, &cfg, &x0).unwrap();
    println!("condensed: {} variables, {} inequality rows", cond.n_vars(), cond.n_rows());
    println!("H_c = {:?}", cond.h_mat);
    println!("h_c = {:?}", cond.h_vec);
    println!("H_c symmetric: {}", cond.h_mat.is_symmetric(1e-12));
    println!("H_c positive semidefinite: {}", is_positive_semidefinite(&cond.h_mat, 0.0));

    let sparse = build_sparse_qp(&aug, &cfg, &x0).unwrap();
    println!("sparse: {} variables in {} stages", sparse.n_vars(), cfg.horizon);
    let du = vec![0.3, 0.2, 0.1, 0.0];
    let z = sparse.rollout(&du);
    println!(
        "objective at a feasible move sequence: condensed {:.12}, sparse {:.12}",
        cond.objective(&du),
        sparse.objective(&z)
    );
}
