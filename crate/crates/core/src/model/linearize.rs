use std::collections::VecDeque;

use super::{CtLinearModel, JacobianMap, ModelError, OperatingPoint, PlantModel};
use crate::linalg::Matrix;

/// Default finite-difference step, scaled per component by `max(1, |v|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Jacobians of the plant at `op`: `A = ∂f/∂x`, `B = ∂f/∂u`, `C = ∂g/∂x`,
/// `D = ∂g/∂u`. Analytic callbacks take precedence; missing ones are
/// replaced by central differences.
pub fn linearize(model: &PlantModel, op: &OperatingPoint, fd_step: f64) -> Result<CtLinearModel, ModelError> {
    if !(fd_step > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());
    let (x, u) = (&op.x_c, &op.u_c);
    let jac = model.jacobians();

    let a = match &jac.dfdx {
        Some(f) => analytic("A", f, x, u, (n_x, n_x))?,
        None => central_difference(model, x, u, Wrt::State, Map::Dynamics, fd_step)?,
    };
    let b = match &jac.dfdu {
        Some(f) => analytic("B", f, x, u, (n_x, n_u))?,
        None => central_difference(model, x, u, Wrt::Input, Map::Dynamics, fd_step)?,
    };
    let c = match &jac.dgdx {
        Some(f) => analytic("C", f, x, u, (n_y, n_x))?,
        None => central_difference(model, x, u, Wrt::State, Map::Output, fd_step)?,
    };
    let d = match &jac.dgdu {
        Some(f) => analytic("D", f, x, u, (n_y, n_u))?,
        None => central_difference(model, x, u, Wrt::Input, Map::Output, fd_step)?,
    };
    CtLinearModel::new(a, b, c, d, op.clone())
}

#[derive(Clone, Copy)]
enum Wrt {
    State,
    Input,
}

#[derive(Clone, Copy)]
enum Map {
    Dynamics,
    Output,
}

fn analytic(
    name: &'static str,
    f: &JacobianMap,
    x: &[f64],
    u: &[f64],
    shape: (usize, usize),
) -> Result<Matrix, ModelError> {
    let m = f(x, u);
    if m.shape() != shape {
        return Err(ModelError::Shape {
            what: name,
            expected: shape,
            got: m.shape(),
        });
    }
    if let Some(column) = (0..m.ncols()).find(|&j| (0..m.nrows()).any(|i| !m[(i, j)].is_finite())) {
        return Err(ModelError::NonFiniteJacobian { matrix: name, column });
    }
    Ok(m)
}

fn central_difference(
    model: &PlantModel,
    x: &[f64],
    u: &[f64],
    wrt: Wrt,
    map: Map,
    fd_step: f64,
) -> Result<Matrix, ModelError> {
    let name = match (map, wrt) {
        (Map::Dynamics, Wrt::State) => "A",
        (Map::Dynamics, Wrt::Input) => "B",
        (Map::Output, Wrt::State) => "C",
        (Map::Output, Wrt::Input) => "D",
    };
    let eval = |x: &[f64], u: &[f64]| match map {
        Map::Dynamics => model.dynamics(x, u),
        Map::Output => model.output(x, u),
    };
    let rows = match map {
        Map::Dynamics => model.n_x(),
        Map::Output => model.n_y(),
    };
    let base = match wrt {
        Wrt::State => x,
        Wrt::Input => u,
    };
    let mut jac = Matrix::zeros(rows, base.len());
    let mut pert = base.to_vec();
    for j in 0..base.len() {
        let h = fd_step * base[j].abs().max(1.0);
        pert[j] = base[j] + h;
        let plus = match wrt {
            Wrt::State => eval(&pert, u)?,
            Wrt::Input => eval(x, &pert)?,
        };
        pert[j] = base[j] - h;
        let minus = match wrt {
            Wrt::State => eval(&pert, u)?,
            Wrt::Input => eval(x, &pert)?,
        };
        pert[j] = base[j];
        for i in 0..rows {
            let v = (plus[i] - minus[i]) / (2.0 * h);
            if !v.is_finite() {
                return Err(ModelError::NonFiniteJacobian { matrix: name, column: j });
            }
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

/// Keeps the states that are both driven by some input and seen by some
/// output through the sparsity graph of `A` (edge `j → i` when
/// `|A[i][j]| > tol`). Returns the restricted model and the kept indices in
/// ascending order.
pub fn reduce_minimal_subset(ct: &CtLinearModel, tol: f64) -> Result<(CtLinearModel, Vec<usize>), ModelError> {
    if !(tol >= 0.0) {
        return Err(ModelError::InvalidArgument(format!("tolerance must be nonnegative, got {tol}")));
    }
    let n = ct.n_x();
    let edge = |from: usize, to: usize| ct.a[(to, from)].abs() > tol;

    let mut reachable = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&i| (0..ct.n_u()).any(|j| ct.b[(i, j)].abs() > tol))
        .collect();
    for &i in &queue {
        reachable[i] = true;
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !reachable[i] && edge(j, i) {
                reachable[i] = true;
                queue.push_back(i);
            }
        }
    }

    let mut observable = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&j| (0..ct.n_y()).any(|i| ct.c[(i, j)].abs() > tol))
        .collect();
    for &j in &queue {
        observable[j] = true;
    }
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !observable[j] && edge(j, i) {
                observable[j] = true;
                queue.push_back(j);
            }
        }
    }

    let keep: Vec<usize> = (0..n).filter(|&i| reachable[i] && observable[i]).collect();
    if keep.is_empty() {
        return Err(ModelError::EmptyReduction);
    }
    let inputs: Vec<usize> = (0..ct.n_u()).collect();
    let outputs: Vec<usize> = (0..ct.n_y()).collect();
    let reduced = CtLinearModel {
        a: ct.a.select(&keep, &keep),
        b: ct.b.select(&keep, &inputs),
        c: ct.c.select(&outputs, &keep),
        d: ct.d.clone(),
        op: ct.op.restrict_states(&keep),
    };
    Ok((reduced, keep))
}
