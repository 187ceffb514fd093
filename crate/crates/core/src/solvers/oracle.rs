//! Exhaustive active-set enumeration. Exponential; tests only.

use std::time::Instant;

use thiserror::Error;

use super::{Iterations, OneSided, QpSolution, SolveStatus};
use crate::linalg::{norm_inf, Lu, Matrix};
use crate::mpc::CondensedQp;

pub const ORACLE_MAX_CONSTRAINTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{count} one-sided constraints exceed the enumeration bound of {ORACLE_MAX_CONSTRAINTS}")]
    TooManyConstraints { count: usize },
}

/// Solves the KKT system of every subset of the finite one-sided
/// constraints (at most `n_vars` of them, never both sides of one bound),
/// keeps the primal-feasible candidates with nonnegative multipliers and
/// returns the one with least objective.
pub fn solve_oracle_bruteforce(qp: &CondensedQp) -> Result<QpSolution, OracleError> {
    let start = Instant::now();
    let cons = OneSided::from_condensed(qp);
    let m = cons.len();
    if m > ORACLE_MAX_CONSTRAINTS {
        return Err(OracleError::TooManyConstraints { count: m });
    }
    let n = qp.n_vars();
    let scale = 1.0 + norm_inf(&cons.rhs) + qp.h_mat.max_abs() + norm_inf(&qp.h_vec);
    let tol = 1e-9 * scale;

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut visited = 0usize;
    for mask in 0u32..(1u32 << m) {
        let set: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        if set.len() > n || set.iter().any(|&i| cons.partner[i].is_some_and(|p| mask & (1 << p) != 0)) {
            continue;
        }
        visited += 1;
        let k = set.len();
        // [H  −Nᵀ_S; N_S  0] [z; λ] = [−h; b_S]
        let mut kkt = Matrix::zeros(n + k, n + k);
        let mut rhs = vec![0.0; n + k];
        kkt.set_block(0, 0, &qp.h_mat);
        for i in 0..n {
            rhs[i] = -qp.h_vec[i];
        }
        for (a, &c) in set.iter().enumerate() {
            for (j, v) in cons.normals.row(c).iter().enumerate() {
                kkt[(j, n + a)] = -v;
                kkt[(n + a, j)] = *v;
            }
            rhs[n + a] = cons.rhs[c];
        }
        let Some(sol) = Lu::new(&kkt).map(|lu| lu.solve(&rhs)) else {
            continue;
        };
        let (z, lam) = sol.split_at(n);
        if lam.iter().any(|&l| l < -tol) || cons.max_violation(z) > tol {
            continue;
        }
        let obj = qp.objective(z);
        if best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
            let mut lambda = vec![0.0; m];
            for (&c, &l) in set.iter().zip(lam) {
                lambda[c] = l.max(0.0);
            }
            best = Some((obj, z.to_vec(), lambda));
        }
    }

    let mut out = match best {
        Some((obj, z, lambda)) => {
            let (y_box, y_rows) = cons.signed_multipliers(&lambda, n, qp.n_rows());
            let mut sol = QpSolution::new(z, obj, SolveStatus::Converged);
            sol.primal_residual = qp.max_violation(&sol.z);
            sol.y_box = y_box;
            sol.y_rows = y_rows;
            sol
        }
        None => QpSolution::new(vec![0.0; n], f64::NAN, SolveStatus::Infeasible),
    };
    out.iterations = Iterations { outer: visited, inner: 0 };
    out.solve_time = start.elapsed().as_secs_f64();
    Ok(out)
}
