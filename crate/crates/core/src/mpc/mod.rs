//! Δ-input tracking MPC problem and its two QP forms.
//!
//! The condensed form eliminates the predicted states and keeps only the
//! input increments `z = [Û_0, …, Û_{T-1}]`; the sparse form keeps the
//! augmented states as decision variables, ordered
//! `[Û_0, X̂_1, Û_1, X̂_2, …, Û_{T-1}, X̂_T]`, with the dynamics as stage
//! equalities. Input and increment bounds apply at `t = 0..T-1`, output
//! bounds at `t = 1..T`.

mod condensed;
mod sparse;

pub use condensed::{build_condensed_qp, build_prediction_matrices, CondensedQp, PredictionMatrices, RowKind};
pub use sparse::{build_sparse_qp, DenseQp, SparseQp};

use thiserror::Error;

use crate::linalg::{is_positive_semidefinite, Cholesky, Matrix};
use crate::model::AugmentedModel;
use crate::solvers::{QpSolution, SolveStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver did not converge (status {0:?})")]
    NotConverged(SolveStatus),
}

/// Horizon, weights, bounds and setpoint of the tracking problem.
///
/// Bounds are absolute (not deviations); an infinite entry means the side
/// is unbounded and produces no constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub ts: f64,
    pub w_y: Matrix,
    pub w_du: Matrix,
    pub du_min: Vec<f64>,
    pub du_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
    pub r: Vec<f64>,
}

impl MpcConfig {
    /// Unbounded problem with diagonal weights.
    pub fn new(horizon: usize, ts: f64, w_y: &[f64], w_du: &[f64]) -> Self {
        let (n_y, n_u) = (w_y.len(), w_du.len());
        Self {
            horizon,
            ts,
            w_y: Matrix::from_diag(w_y),
            w_du: Matrix::from_diag(w_du),
            du_min: vec![f64::NEG_INFINITY; n_u],
            du_max: vec![f64::INFINITY; n_u],
            u_min: vec![f64::NEG_INFINITY; n_u],
            u_max: vec![f64::INFINITY; n_u],
            y_min: vec![f64::NEG_INFINITY; n_y],
            y_max: vec![f64::INFINITY; n_y],
            r: vec![0.0; n_y],
        }
    }

    pub fn n_u(&self) -> usize {
        self.w_du.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.w_y.nrows()
    }

    /// Checks dimensions against `(n_u, n_y)`, weight definiteness and
    /// bound ordering.
    pub fn validate(&self, n_u: usize, n_y: usize) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::Config("horizon must be at least 1".into()));
        }
        if !(self.ts > 0.0) || !self.ts.is_finite() {
            return Err(MpcError::Config(format!("sampling time must be positive, got {}", self.ts)));
        }
        let dims: [(&'static str, usize, usize); 9] = [
            ("w_y rows", n_y, self.w_y.nrows()),
            ("w_du rows", n_u, self.w_du.nrows()),
            ("du_min", n_u, self.du_min.len()),
            ("du_max", n_u, self.du_max.len()),
            ("u_min", n_u, self.u_min.len()),
            ("u_max", n_u, self.u_max.len()),
            ("y_min", n_y, self.y_min.len()),
            ("y_max", n_y, self.y_max.len()),
            ("r", n_y, self.r.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(MpcError::Dimension { what, expected, got });
            }
        }
        if !self.w_y.is_square() || !self.w_du.is_square() {
            return Err(MpcError::Config("weights must be square".into()));
        }
        if !is_positive_semidefinite(&self.w_y, 1e-12) {
            return Err(MpcError::Config("w_y must be symmetric positive semidefinite".into()));
        }
        if !self.w_du.is_symmetric(1e-12 * (1.0 + self.w_du.max_abs())) || Cholesky::new(&self.w_du).is_none() {
            return Err(MpcError::Config("w_du must be symmetric positive definite".into()));
        }
        for (name, lo, hi) in [
            ("du", &self.du_min, &self.du_max),
            ("u", &self.u_min, &self.u_max),
            ("y", &self.y_min, &self.y_max),
        ] {
            if lo.iter().zip(hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                return Err(MpcError::Config(format!("{name} bounds must satisfy min <= max")));
            }
        }
        if self.r.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::Config("setpoint must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn check_against(&self, aug: &AugmentedModel, x0_aug: &[f64]) -> Result<(), MpcError> {
        self.validate(aug.n_u, aug.n_y)?;
        if x0_aug.len() != aug.n_aug() {
            return Err(MpcError::Dimension {
                what: "initial augmented state",
                expected: aug.n_aug(),
                got: x0_aug.len(),
            });
        }
        Ok(())
    }

    /// `δr = r − y_c`.
    pub(crate) fn delta_r(&self, aug: &AugmentedModel) -> Vec<f64> {
        self.r.iter().zip(&aug.op.y_c).map(|(r, yc)| r - yc).collect()
    }
}

/// Shifts absolute bounds into deviation coordinates, keeping infinities.
pub(crate) fn shifted(bound: &[f64], center: &[f64]) -> Vec<f64> {
    bound
        .iter()
        .zip(center)
        .map(|(b, c)| if b.is_finite() { b - c } else { *b })
        .collect()
}

/// Receding-horizon update `u_prev + Û_0`, clipped to the input box.
pub fn extract_first_move(
    sol: &QpSolution,
    aug: &AugmentedModel,
    cfg: &MpcConfig,
    u_prev: &[f64],
) -> Result<Vec<f64>, MpcError> {
    if sol.status != SolveStatus::Converged {
        return Err(MpcError::NotConverged(sol.status));
    }
    if u_prev.len() != aug.n_u || sol.z.len() < aug.n_u {
        return Err(MpcError::Dimension {
            what: "previous input",
            expected: aug.n_u,
            got: u_prev.len(),
        });
    }
    Ok(u_prev
        .iter()
        .zip(&sol.z[..aug.n_u])
        .enumerate()
        .map(|(i, (u, du))| (u + du).max(cfg.u_min[i]).min(cfg.u_max[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OperatingPoint;

    fn scalar_aug() -> AugmentedModel {
        AugmentedModel {
            a: Matrix::from_rows(&[[0.9, 0.1], [0.0, 1.0]]),
            b: Matrix::from_rows(&[[0.1], [1.0]]),
            c: Matrix::from_rows(&[[1.0, 0.0]]),
            e: vec![0.0, 0.0],
            n_x: 1,
            n_u: 1,
            n_y: 1,
            op: OperatingPoint {
                x_c: vec![0.0],
                u_c: vec![0.0],
                y_c: vec![0.0],
                xdot_c: vec![0.0],
            },
        }
    }

    fn solution(z: Vec<f64>) -> QpSolution {
        QpSolution::new(z, 0.0, SolveStatus::Converged)
    }

    #[test]
    fn zero_increment_returns_previous_input() {
        let mut cfg = MpcConfig::new(2, 0.1, &[1.0], &[1.0]);
        cfg.u_min = vec![0.0];
        cfg.u_max = vec![1.0];
        let u = extract_first_move(&solution(vec![0.0, 0.3]), &scalar_aug(), &cfg, &[0.5]).unwrap();
        assert_eq!(u, vec![0.5]);
    }

    #[test]
    fn interior_increment_is_added() {
        let mut cfg = MpcConfig::new(2, 0.1, &[1.0], &[1.0]);
        cfg.u_min = vec![0.0];
        cfg.u_max = vec![1.0];
        let u = extract_first_move(&solution(vec![0.1, 0.0]), &scalar_aug(), &cfg, &[0.5]).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15);
        let clipped = extract_first_move(&solution(vec![0.9, 0.0]), &scalar_aug(), &cfg, &[0.5]).unwrap();
        assert_eq!(clipped, vec![1.0]);
    }

    #[test]
    fn unconverged_solution_is_rejected() {
        let cfg = MpcConfig::new(2, 0.1, &[1.0], &[1.0]);
        let sol = QpSolution::new(vec![0.0, 0.0], 0.0, SolveStatus::MaxIterations);
        assert_eq!(
            extract_first_move(&sol, &scalar_aug(), &cfg, &[0.0]).unwrap_err(),
            MpcError::NotConverged(SolveStatus::MaxIterations)
        );
    }

    #[test]
    fn validation_catches_bad_weights_and_bounds() {
        let mut cfg = MpcConfig::new(3, 0.1, &[1.0, 0.0], &[1.0]);
        assert!(cfg.validate(1, 2).is_ok());
        cfg.w_du = Matrix::from_diag(&[0.0]);
        assert!(matches!(cfg.validate(1, 2), Err(MpcError::Config(_))));
        cfg.w_du = Matrix::from_diag(&[1.0]);
        cfg.u_min = vec![2.0];
        cfg.u_max = vec![1.0];
        assert!(matches!(cfg.validate(1, 2), Err(MpcError::Config(_))));
        cfg.u_min = vec![0.0, 0.0];
        assert!(matches!(cfg.validate(1, 2), Err(MpcError::Dimension { what: "u_min", .. })));
    }
}
