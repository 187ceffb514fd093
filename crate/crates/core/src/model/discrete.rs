use super::{AugmentedModel, CtLinearModel, DtLinearModel, ModelError};
use crate::linalg::Matrix;

/// How `augment_delta` treats a nonzero direct feedthrough `D_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Feedthrough {
    /// Reject models with `|D_d| > 1e-12`.
    #[default]
    Reject,
    /// Use `Ĉ = [C_d, D_d]`. The output then sees the previous input
    /// increment one sample late.
    Fold,
}

const FEEDTHROUGH_TOL: f64 = 1e-12;

/// One-step Euler discretization: `A_d = I + Ts·A`, `B_d = Ts·B`,
/// `C_d = C`, `D_d = D`, `e = Ts·ẋ_c`.
pub fn discretize_euler(ct: &CtLinearModel, ts: f64) -> Result<DtLinearModel, ModelError> {
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(ModelError::InvalidArgument(format!("sampling time must be positive, got {ts}")));
    }
    let n = ct.n_x();
    Ok(DtLinearModel {
        a_d: Matrix::identity(n).add(&ct.a.scale(ts)),
        b_d: ct.b.scale(ts),
        c_d: ct.c.clone(),
        d_d: ct.d.clone(),
        e: ct.op.xdot_c.iter().map(|v| ts * v).collect(),
        ts,
        op: ct.op.clone(),
    })
}

/// Builds `Â = [[A_d, B_d], [0, I]]`, `B̂ = [B_d; I]`, `ê = [e; 0]` and
/// `Ĉ = [C_d, 0]` (or `[C_d, D_d]` when folding).
pub fn augment_delta(dt: &DtLinearModel, feedthrough: Feedthrough) -> Result<AugmentedModel, ModelError> {
    let (n_x, n_u, n_y) = (dt.n_x(), dt.n_u(), dt.n_y());
    let d_max = dt.d_d.max_abs();
    if feedthrough == Feedthrough::Reject && d_max > FEEDTHROUGH_TOL {
        return Err(ModelError::Feedthrough { max_abs: d_max });
    }
    let na = n_x + n_u;

    let mut a = Matrix::zeros(na, na);
    a.set_block(0, 0, &dt.a_d);
    a.set_block(0, n_x, &dt.b_d);
    a.set_block(n_x, n_x, &Matrix::identity(n_u));

    let mut b = Matrix::zeros(na, n_u);
    b.set_block(0, 0, &dt.b_d);
    b.set_block(n_x, 0, &Matrix::identity(n_u));

    let mut c = Matrix::zeros(n_y, na);
    c.set_block(0, 0, &dt.c_d);
    if feedthrough == Feedthrough::Fold {
        c.set_block(0, n_x, &dt.d_d);
    }

    let mut e = dt.e.clone();
    e.resize(na, 0.0);

    Ok(AugmentedModel {
        a,
        b,
        c,
        e,
        n_x,
        n_u,
        n_y,
        op: dt.op.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OperatingPoint;

    fn ct(a: Matrix, b: Matrix, c: Matrix, xdot: Vec<f64>) -> CtLinearModel {
        let (n_x, n_u, n_y) = (a.nrows(), b.ncols(), c.nrows());
        let op = OperatingPoint {
            x_c: vec![0.0; n_x],
            u_c: vec![0.0; n_u],
            y_c: vec![0.0; n_y],
            xdot_c: xdot,
        };
        CtLinearModel::new(a, b, c, Matrix::zeros(n_y, n_u), op).unwrap()
    }

    #[test]
    fn integrator_at_twenty_milliseconds() {
        let m = ct(Matrix::from_rows(&[[0.0]]), Matrix::from_rows(&[[1.0]]), Matrix::from_rows(&[[1.0]]), vec![0.0]);
        let d = discretize_euler(&m, 0.02).unwrap();
        assert_eq!(d.a_d, Matrix::from_rows(&[[1.0]]));
        assert_eq!(d.b_d, Matrix::from_rows(&[[0.02]]));
        assert_eq!(d.e, vec![0.0]);
    }

    #[test]
    fn stable_pole_hand_value() {
        let m = ct(Matrix::from_rows(&[[-2.0]]), Matrix::from_rows(&[[1.0]]), Matrix::from_rows(&[[1.0]]), vec![0.3]);
        let d = discretize_euler(&m, 0.1).unwrap();
        assert!((d.a_d[(0, 0)] - 0.8).abs() < 1e-15);
        assert!((d.e[0] - 0.03).abs() < 1e-15);
        assert!(discretize_euler(&m, 0.0).is_err());
    }

    #[test]
    fn augmented_block_shapes() {
        let m = ct(
            Matrix::from_rows(&[[-1.0, 0.2], [0.1, -0.5]]),
            Matrix::from_rows(&[[1.0], [0.5]]),
            Matrix::from_rows(&[[1.0, 0.0]]),
            vec![5.0, -5.0],
        );
        let aug = augment_delta(&discretize_euler(&m, 0.1).unwrap(), Feedthrough::Reject).unwrap();
        assert_eq!(aug.a.shape(), (3, 3));
        assert_eq!(aug.a[(2, 0)], 0.0);
        assert_eq!(aug.a[(2, 1)], 0.0);
        assert_eq!(aug.a[(2, 2)], 1.0);
        assert_eq!(aug.e, vec![0.5, -0.5, 0.0]);
        assert_eq!(aug.c, Matrix::from_rows(&[[1.0, 0.0, 0.0]]));
        assert_eq!(aug.b.column(0), vec![0.1, 0.05, 1.0]);
    }

    #[test]
    fn feedthrough_rejected_unless_folded() {
        let mut m = ct(Matrix::from_rows(&[[-1.0]]), Matrix::from_rows(&[[1.0]]), Matrix::from_rows(&[[1.0]]), vec![0.0]);
        m.d = Matrix::from_rows(&[[0.5]]);
        let d = discretize_euler(&m, 0.1).unwrap();
        assert!(matches!(augment_delta(&d, Feedthrough::Reject), Err(ModelError::Feedthrough { .. })));
        let aug = augment_delta(&d, Feedthrough::Fold).unwrap();
        assert_eq!(aug.c, Matrix::from_rows(&[[1.0, 0.5]]));
    }
}
