//! Primal active-set method for the condensed QP, warm-started from the
//! previous working set.

use std::time::Instant;

use super::{ConstraintRef, Iterations, OneSided, QpSolution, SolveStatus};
use crate::linalg::{dot, norm_inf, Cholesky, Matrix};
use crate::mpc::CondensedQp;

/// Working sets whose reduced matrix `NᵀH⁻¹N` exceeds this condition
/// estimate are refused.
const MAX_WORKING_CONDITION: f64 = 1e12;

/// Curvature of the feasibility subproblem.
const PHASE1_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSetSettings {
    /// Multiplier sign and primal feasibility tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ActiveSetSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 1000 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ActiveSetWorkspace {
    working: Vec<ConstraintRef>,
    hessian: Option<(Matrix, Cholesky)>,
    previous: Vec<f64>,
}

impl ActiveSetWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn working_set(&self) -> &[ConstraintRef] {
        &self.working
    }

    pub fn previous_solution(&self) -> &[f64] {
        &self.previous
    }

    /// Reuses the cached factor when the Hessian is unchanged.
    fn factor(&mut self, h: &Matrix) -> Option<&Cholesky> {
        let stale = !matches!(&self.hessian, Some((cached, _)) if cached == h);
        if stale {
            self.hessian = Cholesky::new(h).map(|c| (h.clone(), c));
        }
        self.hessian.as_ref().map(|(_, c)| c)
    }
}

struct Outcome {
    status: SolveStatus,
    iterations: usize,
    lambda: Vec<f64>,
}

/// `Y = H⁻¹N_W` column by column and the Cholesky factor of `N_Wᵀ Y`.
fn reduced_factor(cons: &OneSided, working: &[usize], cols: &[Vec<f64>]) -> Option<Cholesky> {
    let k = working.len();
    let s = Matrix::from_fn(k, k, |a, b| dot(cons.normals.row(working[a]), &cols[b]));
    let s = Matrix::from_fn(k, k, |a, b| 0.5 * (s[(a, b)] + s[(b, a)]));
    let chol = Cholesky::new(&s)?;
    (chol.condition_estimate() <= MAX_WORKING_CONDITION).then_some(chol)
}

/// Minimizes `½ zᵀHz + cᵀz` over `cons` from the feasible point `z`,
/// updating `z` and `working` in place.
fn iterate(
    h: &Matrix,
    chol: &Cholesky,
    c: &[f64],
    cons: &OneSided,
    z: &mut [f64],
    working: &mut Vec<usize>,
    tol: f64,
    max_iter: usize,
) -> Outcome {
    let m = cons.len();
    let row_norms: Vec<f64> = (0..m).map(|i| norm_inf(cons.normals.row(i))).collect();
    let mut cols: Vec<Vec<f64>> = working.iter().map(|&i| chol.solve(cons.normals.row(i))).collect();
    let mut factor = None;
    while !working.is_empty() {
        factor = reduced_factor(cons, working, &cols);
        if factor.is_some() {
            break;
        }
        working.pop();
        cols.pop();
    }

    for iter in 1..=max_iter {
        let mut g = h.mul_vec(z);
        for (gi, ci) in g.iter_mut().zip(c) {
            *gi += ci;
        }
        let hg = chol.solve(&g);
        let lam_w = match &factor {
            Some(f) if !working.is_empty() => f.solve(&cols.iter().map(|y| dot(y, &g)).collect::<Vec<_>>()),
            _ => Vec::new(),
        };
        let mut p: Vec<f64> = hg.iter().map(|v| -v).collect();
        for (l, y) in lam_w.iter().zip(&cols) {
            for (pi, yi) in p.iter_mut().zip(y) {
                *pi += l * yi;
            }
        }

        let p_norm = norm_inf(&p);
        let mut at_minimizer = p_norm <= 1e-11 * (1.0 + norm_inf(z) + norm_inf(&hg));
        if !at_minimizer {
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let np = dot(cons.normals.row(i), &p);
                if np < -1e-14 * row_norms[i] * p_norm {
                    let step = cons.slack(i, z).max(0.0) / -np;
                    if step < alpha {
                        alpha = step;
                        blocking = Some(i);
                    }
                }
            }
            for (zi, pi) in z.iter_mut().zip(&p) {
                *zi += alpha * pi;
            }
            match blocking {
                // A full step lands on the working-set minimizer, whose
                // multipliers are the ones just computed.
                None => at_minimizer = true,
                Some(i) => {
                    working.push(i);
                    cols.push(chol.solve(cons.normals.row(i)));
                    match reduced_factor(cons, working, &cols) {
                        Some(f) => factor = Some(f),
                        None => {
                            working.pop();
                            cols.pop();
                        }
                    }
                }
            }
        }
        if !at_minimizer {
            continue;
        }

        let worst = lam_w.iter().enumerate().fold(None, |acc: Option<(usize, f64)>, (j, &l)| match acc {
            Some((_, best)) if best <= l => acc,
            _ => Some((j, l)),
        });
        match worst {
            Some((j, l)) if l < -tol => {
                working.remove(j);
                cols.remove(j);
                factor = if working.is_empty() { None } else { reduced_factor(cons, working, &cols) };
            }
            _ => {
                let mut lambda = vec![0.0; m];
                for (&i, &l) in working.iter().zip(&lam_w) {
                    lambda[i] = l.max(0.0);
                }
                return Outcome {
                    status: SolveStatus::Converged,
                    iterations: iter,
                    lambda,
                };
            }
        }
    }
    Outcome {
        status: SolveStatus::MaxIterations,
        iterations: max_iter,
        lambda: vec![0.0; m],
    }
}

/// Elastic feasibility problem `min ½ε‖z − z0‖² + ½εs² + s` with every
/// general row relaxed by `s ≥ 0` and the boxes kept hard. Returns the
/// point and the smallest uniform relaxation found.
fn phase_one(cons: &OneSided, z0: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64, usize) {
    let n = z0.len();
    let m = cons.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut rhs = Vec::with_capacity(m + 1);
    let mut s0: f64 = 0.0;
    for i in 0..m {
        let mut r = cons.normals.row(i).to_vec();
        if matches!(cons.refs[i], ConstraintRef::Row { .. }) {
            r.push(1.0);
            s0 = s0.max(-cons.slack(i, z0));
        } else {
            r.push(0.0);
        }
        rows.push(r);
        rhs.push(cons.rhs[i]);
    }
    let mut e = vec![0.0; n + 1];
    e[n] = 1.0;
    rows.push(e);
    rhs.push(0.0);
    let elastic = OneSided {
        normals: Matrix::from_rows(&rows),
        rhs,
        refs: Vec::new(),
        partner: Vec::new(),
    };

    let h = Matrix::from_diag(&vec![PHASE1_WEIGHT; n + 1]);
    let chol = Cholesky::new(&h).expect("positive diagonal");
    let mut c: Vec<f64> = z0.iter().map(|v| -PHASE1_WEIGHT * v).collect();
    c.push(1.0);
    let mut w: Vec<f64> = z0.to_vec();
    w.push(s0);
    let mut working = Vec::new();
    let out = iterate(&h, &chol, &c, &elastic, &mut w, &mut working, tol, max_iter);
    let s = w.pop().unwrap_or(0.0).max(0.0);
    (w, s, out.iterations)
}

/// Equality-constrained minimizer on the given working set, if the
/// reduced system is well conditioned.
fn solve_on_working_set(chol: &Cholesky, h_vec: &[f64], cons: &OneSided, working: &[usize]) -> Option<Vec<f64>> {
    let cols: Vec<Vec<f64>> = working.iter().map(|&i| chol.solve(cons.normals.row(i))).collect();
    let f = reduced_factor(cons, working, &cols)?;
    let rhs: Vec<f64> = working.iter().zip(&cols).map(|(&i, y)| cons.rhs[i] + dot(y, h_vec)).collect();
    let lam = f.solve(&rhs);
    let mut z: Vec<f64> = chol.solve(h_vec).iter().map(|v| -v).collect();
    for (l, y) in lam.iter().zip(&cols) {
        for (zi, yi) in z.iter_mut().zip(y) {
            *zi += l * yi;
        }
    }
    Some(z)
}

/// Primal active-set method on `min ½ zᵀHz + hᵀz` subject to the condensed
/// boxes and rows. Starts from the workspace's working set when its
/// equality-constrained minimizer is feasible; otherwise from the box
/// projection of zero, with an elastic phase one when that violates a row.
pub fn solve_condensed_activeset(qp: &CondensedQp, ws: &mut ActiveSetWorkspace, settings: &ActiveSetSettings) -> QpSolution {
    let start = Instant::now();
    let n = qp.n_vars();
    let tol = settings.tol;
    let cons = OneSided::from_condensed(qp);
    let Some(chol) = ws.factor(&qp.h_mat).cloned() else {
        let mut sol = QpSolution::new(vec![0.0; n], f64::NAN, SolveStatus::Infeasible);
        sol.solve_time = start.elapsed().as_secs_f64();
        return sol;
    };

    let feas_tol = tol.max(1e-12) * (1.0 + norm_inf(&cons.rhs).min(1e6));
    let mut working: Vec<usize> = ws
        .working
        .iter()
        .filter_map(|r| cons.refs.iter().position(|c| c == r))
        .collect();
    let mut extra_iters = 0;
    let mut z = None;
    if !working.is_empty() {
        if let Some(cand) = solve_on_working_set(&chol, &qp.h_vec, &cons, &working) {
            if cons.max_violation(&cand) <= feas_tol {
                z = Some(cand);
            }
        }
    }
    let mut z = match z {
        Some(z) => z,
        None => {
            working.clear();
            let z0: Vec<f64> = (0..n).map(|i| 0.0f64.max(qp.z_l[i]).min(qp.z_u[i])).collect();
            if cons.max_violation(&z0) <= feas_tol {
                z0
            } else {
                let (zf, s, it) = phase_one(&cons, &z0, tol, settings.max_iter);
                extra_iters = it;
                if s > feas_tol {
                    ws.working.clear();
                    let objective = qp.objective(&zf);
                    let mut sol = QpSolution::new(zf, objective, SolveStatus::Infeasible);
                    sol.iterations.outer = it;
                    sol.primal_residual = s;
                    sol.solve_time = start.elapsed().as_secs_f64();
                    return sol;
                }
                zf
            }
        }
    };

    let out = iterate(&qp.h_mat, &chol, &qp.h_vec, &cons, &mut z, &mut working, tol, settings.max_iter);

    let (y_box, y_rows) = cons.signed_multipliers(&out.lambda, n, qp.n_rows());
    let mut stat = qp.h_mat.mul_vec(&z);
    for i in 0..n {
        stat[i] += qp.h_vec[i] + y_box[i];
    }
    for (r, y) in y_rows.iter().enumerate() {
        if *y != 0.0 {
            for (s, g) in stat.iter_mut().zip(qp.g_mat.row(r)) {
                *s += y * g;
            }
        }
    }

    ws.working = working.iter().map(|&i| cons.refs[i]).collect();
    ws.previous = z.clone();
    let objective = qp.objective(&z);
    QpSolution {
        objective,
        status: out.status,
        iterations: Iterations {
            outer: out.iterations + extra_iters,
            inner: 0,
        },
        solve_time: start.elapsed().as_secs_f64(),
        primal_residual: qp.max_violation(&z),
        dual_residual: norm_inf(&stat),
        y_box,
        y_rows,
        y_eq: Vec::new(),
        z,
    }
}
