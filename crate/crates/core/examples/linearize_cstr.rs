//! Linearize the CSTR at its nominal point, compare analytic and
//! finite-difference Jacobians, then discretize and build the Δ-model.

use mpcproto::model::{augment_delta, discretize_euler, linearize, reduce_minimal_subset, Feedthrough, OperatingPoint};
use mpcproto::plants;

fn main() {
    let entry = plants::lookup("cstr").unwrap();
    let plant = (entry.build)();
    let (x, u) = (entry.nominal)();
    let op = OperatingPoint::at(&plant, &x, &u).unwrap();
    println!("operating point x = {:?}, u = {:?}, xdot = {:?}", op.x_c, op.u_c, op.xdot_c);

    let analytic = linearize(&plant, &op, 1e-6).unwrap();
    let fd = linearize(&plant.clone().without_jacobians(), &op, 1e-6).unwrap();
    println!("A = {:?}", analytic.a);
    println!("B = {:?}", analytic.b);
    println!(
        "analytic vs finite difference: |dA| = {:.2e}, |dB| = {:.2e}",
        analytic.a.max_abs_diff(&fd.a),
        analytic.b.max_abs_diff(&fd.b)
    );

    let (reduced, keep) = reduce_minimal_subset(&analytic, 0.0).unwrap();
    println!("minimal state subset: {keep:?}");
    let dt = discretize_euler(&reduced, 0.02).unwrap();
    println!("A_d = {:?}", dt.a_d);
    println!("e = {:?}", dt.e);
    let aug = augment_delta(&dt, Feedthrough::Reject).unwrap();
    println!("augmented A = {:?}", aug.a);
    println!("augmented B = {:?}", aug.b);
    println!("augmented C = {:?}", aug.c);
}
