//! Nonlinear plant models and the chain of linear models derived from them:
//! continuous linearization, Euler discretization and the Δ-input
//! augmented form consumed by the MPC assembly.

mod discrete;
mod integrate;
mod linearize;

pub use discrete::{augment_delta, discretize_euler, Feedthrough};
pub use integrate::{integrate_plant, rk4_step, InputProfile, Trajectory};
pub use linearize::{linearize, reduce_minimal_subset, DEFAULT_FD_STEP};

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::Matrix;

pub type VectorMap = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianMap = Arc<dyn Fn(&[f64], &[f64]) -> Matrix + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("state became non-finite at t = {time}")]
    Divergence { time: f64 },
    #[error("non-finite entry in {matrix} column {column}")]
    NonFiniteJacobian { matrix: &'static str, column: usize },
    #[error("no state lies on an input-to-output path")]
    EmptyReduction,
    #[error("direct feedthrough D_d is nonzero (max |entry| {max_abs:e}); enable folding to accept it")]
    Feedthrough { max_abs: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Optional user-supplied Jacobians. Any missing entry falls back to
/// central finite differences.
#[derive(Clone, Default)]
pub struct AnalyticJacobians {
    pub dfdx: Option<JacobianMap>,
    pub dfdu: Option<JacobianMap>,
    pub dgdx: Option<JacobianMap>,
    pub dgdu: Option<JacobianMap>,
}

/// Continuous-time plant `ẋ = f(x, u)`, `y = g(x, u)`.
#[derive(Clone)]
pub struct PlantModel {
    name: String,
    n_x: usize,
    n_u: usize,
    n_y: usize,
    dynamics: VectorMap,
    output: VectorMap,
    jacobians: AnalyticJacobians,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("n_y", &self.n_y)
            .field("analytic_dfdx", &self.jacobians.dfdx.is_some())
            .field("analytic_dfdu", &self.jacobians.dfdu.is_some())
            .field("analytic_dgdx", &self.jacobians.dgdx.is_some())
            .field("analytic_dgdu", &self.jacobians.dgdu.is_some())
            .finish()
    }
}

impl PlantModel {
    pub fn new<F, G>(name: impl Into<String>, n_x: usize, n_u: usize, n_y: usize, dynamics: F, output: G) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            n_x,
            n_u,
            n_y,
            dynamics: Arc::new(dynamics),
            output: Arc::new(output),
            jacobians: AnalyticJacobians::default(),
        }
    }

    /// Affine plant `ẋ = A x + B u + c`, `y = C x + D u` with exact Jacobians.
    pub fn affine(name: impl Into<String>, a: Matrix, b: Matrix, c: Matrix, d: Matrix, drift: Vec<f64>) -> Self {
        let (n_x, n_u, n_y) = (a.nrows(), b.ncols(), c.nrows());
        assert_eq!(a.shape(), (n_x, n_x));
        assert_eq!(b.nrows(), n_x);
        assert_eq!(c.ncols(), n_x);
        assert_eq!(d.shape(), (n_y, n_u));
        assert_eq!(drift.len(), n_x);
        let (a1, b1, c1, d1) = (a.clone(), b.clone(), c.clone(), d.clone());
        let f = move |x: &[f64], u: &[f64]| {
            let mut dx = a1.mul_vec(x);
            for (v, (bu, k)) in dx.iter_mut().zip(b1.mul_vec(u).into_iter().zip(&drift)) {
                *v += bu + k;
            }
            dx
        };
        let g = move |x: &[f64], u: &[f64]| {
            let mut y = c1.mul_vec(x);
            for (v, du) in y.iter_mut().zip(d1.mul_vec(u)) {
                *v += du;
            }
            y
        };
        Self::new(name, n_x, n_u, n_y, f, g).with_jacobians(AnalyticJacobians {
            dfdx: Some(Arc::new(move |_, _| a.clone())),
            dfdu: Some(Arc::new(move |_, _| b.clone())),
            dgdx: Some(Arc::new(move |_, _| c.clone())),
            dgdu: Some(Arc::new(move |_, _| d.clone())),
        })
    }

    pub fn with_jacobians(mut self, jacobians: AnalyticJacobians) -> Self {
        self.jacobians = jacobians;
        self
    }

    /// Same plant with analytic Jacobians dropped, forcing finite differences.
    pub fn without_jacobians(mut self) -> Self {
        self.jacobians = AnalyticJacobians::default();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn jacobians(&self) -> &AnalyticJacobians {
        &self.jacobians
    }

    fn check_args(&self, x: &[f64], u: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.n_x {
            return Err(ModelError::Dimension {
                what: "state",
                expected: self.n_x,
                got: x.len(),
            });
        }
        if u.len() != self.n_u {
            return Err(ModelError::Dimension {
                what: "input",
                expected: self.n_u,
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_args(x, u)?;
        let dx = (self.dynamics)(x, u);
        if dx.len() != self.n_x {
            return Err(ModelError::Dimension {
                what: "dynamics result",
                expected: self.n_x,
                got: dx.len(),
            });
        }
        Ok(dx)
    }

    pub fn output(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_args(x, u)?;
        let y = (self.output)(x, u);
        if y.len() != self.n_y {
            return Err(ModelError::Dimension {
                what: "output result",
                expected: self.n_y,
                got: y.len(),
            });
        }
        Ok(y)
    }
}

/// Point `(x_c, u_c)` on a trajectory together with `y_c` and `ẋ_c` there.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub x_c: Vec<f64>,
    pub u_c: Vec<f64>,
    pub y_c: Vec<f64>,
    pub xdot_c: Vec<f64>,
}

impl OperatingPoint {
    /// Evaluates the plant at `(x_c, u_c)`.
    pub fn at(model: &PlantModel, x_c: &[f64], u_c: &[f64]) -> Result<Self, ModelError> {
        Ok(Self {
            y_c: model.output(x_c, u_c)?,
            xdot_c: model.dynamics(x_c, u_c)?,
            x_c: x_c.to_vec(),
            u_c: u_c.to_vec(),
        })
    }

    /// Restricts the state-indexed fields to `keep`.
    pub fn restrict_states(&self, keep: &[usize]) -> Self {
        Self {
            x_c: keep.iter().map(|&i| self.x_c[i]).collect(),
            xdot_c: keep.iter().map(|&i| self.xdot_c[i]).collect(),
            u_c: self.u_c.clone(),
            y_c: self.y_c.clone(),
        }
    }
}

/// `δẋ = A δx + B δu + ẋ_c`, `δy = C δx + D δu` around `op`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtLinearModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub op: OperatingPoint,
}

impl CtLinearModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, op: OperatingPoint) -> Result<Self, ModelError> {
        let n_x = a.nrows();
        let n_u = b.ncols();
        let n_y = c.nrows();
        expect_shape("A", &a, (n_x, n_x))?;
        expect_shape("B", &b, (n_x, n_u))?;
        expect_shape("C", &c, (n_y, n_x))?;
        expect_shape("D", &d, (n_y, n_u))?;
        if op.x_c.len() != n_x || op.xdot_c.len() != n_x {
            return Err(ModelError::Dimension {
                what: "operating point state",
                expected: n_x,
                got: op.x_c.len(),
            });
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if !m.is_finite() {
                let column = (0..m.ncols())
                    .find(|&j| m.column(j).iter().any(|v| !v.is_finite()))
                    .unwrap_or(0);
                return Err(ModelError::NonFiniteJacobian { matrix: name, column });
            }
        }
        Ok(Self { a, b, c, d, op })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
}

/// `δX⁺ = A_d δX + B_d δU + e`, `δY = C_d δX + D_d δU`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtLinearModel {
    pub a_d: Matrix,
    pub b_d: Matrix,
    pub c_d: Matrix,
    pub d_d: Matrix,
    pub e: Vec<f64>,
    pub ts: f64,
    pub op: OperatingPoint,
}

impl DtLinearModel {
    pub fn n_x(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b_d.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c_d.nrows()
    }
}

/// Δ-input model with state `X̂ = [δX; δU_prev]` and input `Û = δU − δU_prev`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub e: Vec<f64>,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub op: OperatingPoint,
}

impl AugmentedModel {
    /// Augmented state dimension `n_x + n_u`.
    pub fn n_aug(&self) -> usize {
        self.n_x + self.n_u
    }

    /// One step of `X̂⁺ = Â X̂ + B̂ Û + ê`.
    pub fn step(&self, x_aug: &[f64], du: &[f64]) -> Vec<f64> {
        let mut next = self.a.mul_vec(x_aug);
        for (v, (bu, e)) in next.iter_mut().zip(self.b.mul_vec(du).into_iter().zip(&self.e)) {
            *v += bu + e;
        }
        next
    }

    /// Augmented initial state for a measured plant state and the input
    /// applied over the previous interval, both in absolute coordinates.
    /// `states` selects the model's states inside the full plant state.
    pub fn initial_state(&self, x: &[f64], u_prev: &[f64], states: Option<&[usize]>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_aug());
        match states {
            Some(keep) => out.extend(keep.iter().zip(&self.op.x_c).map(|(&i, xc)| x[i] - xc)),
            None => out.extend(x.iter().zip(&self.op.x_c).map(|(v, xc)| v - xc)),
        }
        out.extend(u_prev.iter().zip(&self.op.u_c).map(|(v, uc)| v - uc));
        out
    }
}

fn expect_shape(what: &'static str, m: &Matrix, expected: (usize, usize)) -> Result<(), ModelError> {
    if m.shape() != expected {
        return Err(ModelError::Shape {
            what,
            expected,
            got: m.shape(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_checks_dimensions() {
        let p = PlantModel::new("t", 2, 1, 1, |x, u| vec![x[1], u[0]], |x, _| vec![x[0]]);
        assert_eq!(p.dynamics(&[1.0, 2.0], &[3.0]).unwrap(), vec![2.0, 3.0]);
        assert!(matches!(
            p.dynamics(&[1.0], &[3.0]),
            Err(ModelError::Dimension { what: "state", .. })
        ));
        let bad = PlantModel::new("bad", 1, 1, 1, |_, _| vec![0.0, 0.0], |_, _| vec![0.0]);
        assert!(matches!(
            bad.dynamics(&[0.0], &[0.0]),
            Err(ModelError::Dimension { what: "dynamics result", .. })
        ));
    }

    #[test]
    fn operating_point_is_consistent() {
        let p = PlantModel::new("sq", 1, 1, 1, |x, u| vec![x[0] * x[0] + u[0]], |x, _| vec![2.0 * x[0]]);
        let op = OperatingPoint::at(&p, &[3.0], &[1.0]).unwrap();
        assert_eq!(op.xdot_c, vec![10.0]);
        assert_eq!(op.y_c, vec![6.0]);
    }

    #[test]
    fn augmented_initial_state_offsets() {
        let op = OperatingPoint {
            x_c: vec![1.0, 2.0],
            u_c: vec![0.5],
            y_c: vec![1.0],
            xdot_c: vec![0.0, 0.0],
        };
        let aug = AugmentedModel {
            a: Matrix::identity(3),
            b: Matrix::zeros(3, 1),
            c: Matrix::zeros(1, 3),
            e: vec![0.0; 3],
            n_x: 2,
            n_u: 1,
            n_y: 1,
            op,
        };
        assert_eq!(aug.initial_state(&[1.5, 2.0], &[1.0], None), vec![0.5, 0.0, 0.5]);
    }
}
