//! QP solvers for the two MPC formulations.
//!
//! * [`solve_sparse_cdal`]: coordinate-descent augmented Lagrangian working
//!   directly on the stage blocks of a [`SparseQp`](crate::mpc::SparseQp).
//! * [`solve_condensed_activeset`]: primal active-set method with
//!   working-set warm start for a [`CondensedQp`](crate::mpc::CondensedQp).
//! * [`solve_oracle_bruteforce`]: exhaustive KKT enumeration, for tests.

mod active_set;
mod cdal;
mod oracle;

pub use active_set::{solve_condensed_activeset, ActiveSetSettings, ActiveSetWorkspace};
pub use cdal::{solve_sparse_cdal, solve_sparse_cdal_stage, CdalSettings, CdalWorkspace};
pub use oracle::{solve_oracle_bruteforce, OracleError, ORACLE_MAX_CONSTRAINTS};

use std::fmt;

use crate::linalg::{self, Matrix};
use crate::mpc::CondensedQp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Iterations {
    /// Outer iterations (AL multiplier updates, or active-set pivots).
    pub outer: usize,
    /// Inner iterations (coordinate-descent sweeps); zero for active-set.
    pub inner: usize,
}

impl Iterations {
    /// Single work figure reported in traces: sweeps for CDAL, pivots for
    /// the active-set method.
    pub fn work(&self) -> usize {
        if self.inner > 0 {
            self.inner
        } else {
            self.outer
        }
    }
}

/// Solver output. Multipliers follow the sign convention
/// `∇f(z) + Gᵀ y_rows + y_box (+ Bᵀ y_eq) = 0`, positive at an active
/// upper bound and negative at an active lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: Iterations,
    pub solve_time: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub y_box: Vec<f64>,
    pub y_rows: Vec<f64>,
    pub y_eq: Vec<f64>,
}

impl QpSolution {
    pub fn new(z: Vec<f64>, objective: f64, status: SolveStatus) -> Self {
        Self {
            z,
            objective,
            status,
            iterations: Iterations::default(),
            solve_time: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            y_box: Vec::new(),
            y_rows: Vec::new(),
            y_eq: Vec::new(),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Which side of a two-sided bound a working constraint sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// A single one-sided constraint of a condensed QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintRef {
    /// `z_index` against its box.
    Box { index: usize, side: BoundSide },
    /// General row `G_index · z`.
    Row { index: usize, side: BoundSide },
}

/// Finite constraints of a condensed QP rewritten as `n_iᵀ z ≥ b_i`.
pub(crate) struct OneSided {
    pub normals: Matrix,
    pub rhs: Vec<f64>,
    pub refs: Vec<ConstraintRef>,
    /// Index of the opposite side of the same bound, if finite.
    pub partner: Vec<Option<usize>>,
}

impl OneSided {
    pub fn from_condensed(qp: &CondensedQp) -> Self {
        let n = qp.n_vars();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs = Vec::new();
        let mut refs = Vec::new();
        let mut partner = Vec::new();
        let mut push = |normal: Vec<f64>, b: f64, r: ConstraintRef, paired: bool| {
            let i = rows.len();
            rows.push(normal);
            rhs.push(b);
            refs.push(r);
            partner.push(None);
            if paired {
                partner[i - 1] = Some(i);
                partner[i] = Some(i - 1);
            }
        };
        for i in 0..n {
            let lo = qp.z_l[i].is_finite();
            if lo {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                push(e, qp.z_l[i], ConstraintRef::Box { index: i, side: BoundSide::Lower }, false);
            }
            if qp.z_u[i].is_finite() {
                let mut e = vec![0.0; n];
                e[i] = -1.0;
                push(e, -qp.z_u[i], ConstraintRef::Box { index: i, side: BoundSide::Upper }, lo);
            }
        }
        for i in 0..qp.n_rows() {
            let g = qp.g_mat.row(i);
            let lo = qp.g_l[i].is_finite();
            if lo {
                push(g.to_vec(), qp.g_l[i], ConstraintRef::Row { index: i, side: BoundSide::Lower }, false);
            }
            if qp.g_u[i].is_finite() {
                push(g.iter().map(|v| -v).collect(), -qp.g_u[i], ConstraintRef::Row { index: i, side: BoundSide::Upper }, lo);
            }
        }
        let normals = if rows.is_empty() { Matrix::zeros(0, n) } else { Matrix::from_rows(&rows) };
        Self { normals, rhs, refs, partner }
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    /// `n_iᵀ z − b_i`; nonnegative when satisfied.
    pub fn slack(&self, i: usize, z: &[f64]) -> f64 {
        linalg::dot(self.normals.row(i), z) - self.rhs[i]
    }

    pub fn max_violation(&self, z: &[f64]) -> f64 {
        (0..self.len()).map(|i| -self.slack(i, z)).fold(0.0, f64::max)
    }

    /// Splits per-constraint multipliers `λ ≥ 0` of `∇f = Σ λ_i n_i` into
    /// signed box and row multipliers.
    pub fn signed_multipliers(&self, lambda: &[f64], n_vars: usize, n_rows: usize) -> (Vec<f64>, Vec<f64>) {
        let mut y_box = vec![0.0; n_vars];
        let mut y_rows = vec![0.0; n_rows];
        for (r, l) in self.refs.iter().zip(lambda) {
            let (slot, side) = match *r {
                ConstraintRef::Box { index, side } => (&mut y_box[index], side),
                ConstraintRef::Row { index, side } => (&mut y_rows[index], side),
            };
            *slot += match side {
                BoundSide::Lower => -l,
                BoundSide::Upper => *l,
            };
        }
        (y_box, y_rows)
    }
}
