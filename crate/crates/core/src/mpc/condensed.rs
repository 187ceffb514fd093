use super::{shifted, MpcConfig, MpcError};
use crate::linalg::{dot, Matrix};
use crate::model::AugmentedModel;

/// Stacked prediction `X̂_{1..T} = M·Û + m` (for `X̂_0 = 0`) and the
/// block-diagonal output map `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    pub horizon: usize,
    /// `(T·n_aug) × (T·n_u)`, block `(i, j)` is `Â^{i−j}·B̂` for `i ≥ j`.
    pub m_mat: Matrix,
    /// `T·n_aug`, block `i` is `Σ_{k=0..i} Â^k·ê`.
    pub m_vec: Vec<f64>,
    /// `(T·n_y) × (T·n_aug)`, block-diagonal copies of `Ĉ`.
    pub g: Matrix,
}

/// Builds `M`, `m` and `G` by the block recursion
/// `block(i, j) = Â · block(i−1, j)`, `m_i = Â·m_{i−1} + ê`.
pub fn build_prediction_matrices(aug: &AugmentedModel, horizon: usize) -> Result<PredictionMatrices, MpcError> {
    if horizon == 0 {
        return Err(MpcError::Config("horizon must be at least 1".into()));
    }
    let (na, nu, ny) = (aug.n_aug(), aug.n_u, aug.n_y);
    let t = horizon;

    let mut m_mat = Matrix::zeros(t * na, t * nu);
    let mut power_b = aug.b.clone();
    for k in 0..t {
        // Toeplitz structure: Â^k·B̂ fills every block on the k-th subdiagonal.
        for j in 0..t - k {
            m_mat.set_block((j + k) * na, j * nu, &power_b);
        }
        if k + 1 < t {
            power_b = aug.a.mul(&power_b);
        }
    }

    let mut m_vec = Vec::with_capacity(t * na);
    let mut acc = aug.e.clone();
    for i in 0..t {
        if i > 0 {
            let next = aug.a.mul_vec(&acc);
            acc = next.iter().zip(&aug.e).map(|(a, e)| a + e).collect();
        }
        m_vec.extend_from_slice(&acc);
    }

    let mut g = Matrix::zeros(t * ny, t * na);
    for i in 0..t {
        g.set_block(i * ny, i * na, &aug.c);
    }
    Ok(PredictionMatrices { horizon, m_mat, m_vec, g })
}

impl PredictionMatrices {
    /// Free response `m̃`: stacked `X̂_{1..T}` with all increments zero,
    /// starting from `x0_aug`.
    pub fn free_response(&self, aug: &AugmentedModel, x0_aug: &[f64]) -> Vec<f64> {
        let na = aug.n_aug();
        let mut out = self.m_vec.clone();
        let mut prop = x0_aug.to_vec();
        for i in 0..self.horizon {
            prop = aug.a.mul_vec(&prop);
            for (o, p) in out[i * na..(i + 1) * na].iter_mut().zip(&prop) {
                *o += p;
            }
        }
        out
    }
}

/// Origin of a general constraint row of the condensed QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `δU_t` for input component `input`, `t = 0..T-1`.
    InputAccumulation { t: usize, input: usize },
    /// `δY_t` for output component `output`, `t = 1..T`.
    Output { t: usize, output: usize },
}

/// `min ½ zᵀ H z + hᵀ z + constant` s.t. `g_l ≤ G z ≤ g_u`, `z_l ≤ z ≤ z_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub h_mat: Matrix,
    pub h_vec: Vec<f64>,
    pub constant: f64,
    pub g_mat: Matrix,
    pub g_l: Vec<f64>,
    pub g_u: Vec<f64>,
    pub z_l: Vec<f64>,
    pub z_u: Vec<f64>,
    pub row_kinds: Vec<RowKind>,
    /// `GM`, the output prediction sensitivity.
    pub gm: Matrix,
    /// `G m̃`, the output free response.
    pub gm_free: Vec<f64>,
    pub n_u: usize,
}

impl CondensedQp {
    pub fn n_vars(&self) -> usize {
        self.h_vec.len()
    }

    pub fn n_rows(&self) -> usize {
        self.g_mat.nrows()
    }

    /// Tracking cost of the input-increment sequence `z`, constant included.
    pub fn objective(&self, z: &[f64]) -> f64 {
        0.5 * dot(z, &self.h_mat.mul_vec(z)) + dot(&self.h_vec, z) + self.constant
    }

    /// Largest violation of the box and row bounds at `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, zi) in z.iter().enumerate() {
            worst = worst.max(self.z_l[i] - zi).max(zi - self.z_u[i]);
        }
        for (i, gz) in self.g_mat.mul_vec(z).iter().enumerate() {
            worst = worst.max(self.g_l[i] - gz).max(gz - self.g_u[i]);
        }
        worst
    }

    /// Predicted `δY_{1..T}` for increments `z`.
    pub fn predicted_outputs(&self, z: &[f64]) -> Vec<f64> {
        let mut y = self.gm.mul_vec(z);
        for (v, f) in y.iter_mut().zip(&self.gm_free) {
            *v += f;
        }
        y
    }
}

/// Condensed QP for initial augmented state `x0_aug`.
///
/// `H = (GM)ᵀ W̄_y (GM) + W̄_Δu`, `h = (GM)ᵀ W̄_y (G m̃ − δr̄)`. General
/// rows are the input accumulations `δU_t = δU_{-1} + Σ_{k≤t} Û_k` and the
/// output predictions, each emitted only when at least one side is finite.
pub fn build_condensed_qp(aug: &AugmentedModel, cfg: &MpcConfig, x0_aug: &[f64]) -> Result<CondensedQp, MpcError> {
    cfg.check_against(aug, x0_aug)?;
    let (nx, nu, ny) = (aug.n_x, aug.n_u, aug.n_y);
    let t = cfg.horizon;
    let n = t * nu;

    let pred = build_prediction_matrices(aug, t)?;
    let gm = pred.g.mul(&pred.m_mat);
    let gm_free = pred.g.mul_vec(&pred.free_response(aug, x0_aug));
    let dr = cfg.delta_r(aug);

    // W̄_y·GM and W̄_y·(G m̃ − δr̄), block by block.
    let mut wgm = Matrix::zeros(t * ny, n);
    let mut wres = vec![0.0; t * ny];
    let mut constant = 0.0;
    for i in 0..t {
        let rows = i * ny..(i + 1) * ny;
        let gm_i = gm.block(i * ny, 0, ny, n);
        wgm.set_block(i * ny, 0, &cfg.w_y.mul(&gm_i));
        let res: Vec<f64> = gm_free[rows.clone()].iter().zip(&dr).map(|(f, r)| f - r).collect();
        let w_res = cfg.w_y.mul_vec(&res);
        constant += 0.5 * dot(&res, &w_res);
        wres[rows].copy_from_slice(&w_res);
    }

    let mut h_mat = gm.tr_mul(&wgm);
    for k in 0..t {
        for a in 0..nu {
            for b in 0..nu {
                h_mat[(k * nu + a, k * nu + b)] += cfg.w_du[(a, b)];
            }
        }
    }
    // Symmetrize away roundoff from the two-sided product.
    for a in 0..n {
        for b in a + 1..n {
            let s = 0.5 * (h_mat[(a, b)] + h_mat[(b, a)]);
            h_mat[(a, b)] = s;
            h_mat[(b, a)] = s;
        }
    }
    let h_vec = gm.tr_mul_vec(&wres);

    let du_prev = &x0_aug[nx..];
    let u_lo = shifted(&cfg.u_min, &aug.op.u_c);
    let u_hi = shifted(&cfg.u_max, &aug.op.u_c);
    let y_lo = shifted(&cfg.y_min, &aug.op.y_c);
    let y_hi = shifted(&cfg.y_max, &aug.op.y_c);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut g_l = Vec::new();
    let mut g_u = Vec::new();
    let mut row_kinds = Vec::new();
    for step in 0..t {
        for c in 0..nu {
            if !(u_lo[c].is_finite() || u_hi[c].is_finite()) {
                continue;
            }
            let mut row = vec![0.0; n];
            for k in 0..=step {
                row[k * nu + c] = 1.0;
            }
            rows.push(row);
            g_l.push(u_lo[c] - du_prev[c]);
            g_u.push(u_hi[c] - du_prev[c]);
            row_kinds.push(RowKind::InputAccumulation { t: step, input: c });
        }
    }
    for i in 0..t {
        for c in 0..ny {
            if !(y_lo[c].is_finite() || y_hi[c].is_finite()) {
                continue;
            }
            let r = i * ny + c;
            rows.push(gm.row(r).to_vec());
            g_l.push(y_lo[c] - gm_free[r]);
            g_u.push(y_hi[c] - gm_free[r]);
            row_kinds.push(RowKind::Output { t: i + 1, output: c });
        }
    }
    let g_mat = if rows.is_empty() {
        Matrix::zeros(0, n)
    } else {
        Matrix::from_rows(&rows)
    };

    let z_l = (0..n).map(|k| cfg.du_min[k % nu]).collect();
    let z_u = (0..n).map(|k| cfg.du_max[k % nu]).collect();

    Ok(CondensedQp {
        h_mat,
        h_vec,
        constant,
        g_mat,
        g_l,
        g_u,
        z_l,
        z_u,
        row_kinds,
        gm,
        gm_free,
        n_u: nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_inf, Cholesky};
    use crate::model::OperatingPoint;

    fn aug(a: Matrix, b: Matrix, c: Matrix, e: Vec<f64>, nx: usize) -> AugmentedModel {
        let (nu, ny) = (b.ncols(), c.nrows());
        AugmentedModel {
            a,
            b,
            c,
            e,
            n_x: nx,
            n_u: nu,
            n_y: ny,
            op: OperatingPoint {
                x_c: vec![0.0; nx],
                u_c: vec![0.0; nu],
                y_c: vec![0.0; ny],
                xdot_c: vec![0.0; nx],
            },
        }
    }

    fn sample() -> AugmentedModel {
        aug(
            Matrix::from_rows(&[[0.9, 0.2, 0.1], [0.0, 0.8, 0.3], [0.0, 0.0, 1.0]]),
            Matrix::from_rows(&[[0.1], [0.3], [1.0]]),
            Matrix::from_rows(&[[1.0, 0.5, 0.0]]),
            vec![0.01, -0.02, 0.0],
            2,
        )
    }

    #[test]
    fn single_step_horizon() {
        let a = sample();
        let p = build_prediction_matrices(&a, 1).unwrap();
        assert_eq!(p.m_mat, a.b);
        assert_eq!(p.m_vec, a.e);
        assert_eq!(p.g, a.c);
    }

    #[test]
    fn identity_dynamics_accumulate_drift() {
        let a = aug(Matrix::identity(2), Matrix::from_rows(&[[0.0], [1.0]]), Matrix::from_rows(&[[1.0, 0.0]]), vec![1.0, 0.0], 1);
        let p = build_prediction_matrices(&a, 3).unwrap();
        assert_eq!(p.m_vec, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn no_output_cost_leaves_increment_weight() {
        let a = sample();
        let mut cfg = MpcConfig::new(3, 0.1, &[0.0], &[2.0]);
        cfg.r = vec![1.0];
        let qp = build_condensed_qp(&a, &cfg, &[0.1, 0.2, 0.3]).unwrap();
        assert!(qp.h_mat.max_abs_diff(&Matrix::from_diag(&[2.0, 2.0, 2.0])) == 0.0);
        assert!(norm_inf(&qp.h_vec) == 0.0);
    }

    #[test]
    fn unbounded_minimizer_satisfies_stationarity() {
        let a = sample();
        let mut cfg = MpcConfig::new(4, 0.1, &[10.0], &[1.0]);
        cfg.r = vec![0.7];
        let qp = build_condensed_qp(&a, &cfg, &[0.0; 3]).unwrap();
        assert_eq!(qp.n_rows(), 0);
        let chol = Cholesky::new(&qp.h_mat).unwrap();
        let z: Vec<f64> = chol.solve(&qp.h_vec).iter().map(|v| -v).collect();
        let mut res = qp.h_mat.mul_vec(&z);
        for (r, h) in res.iter_mut().zip(&qp.h_vec) {
            *r += h;
        }
        assert!(norm_inf(&res) <= 1e-8);
    }

    #[test]
    fn rows_follow_finite_bounds_only() {
        let a = sample();
        let mut cfg = MpcConfig::new(3, 0.1, &[1.0], &[1.0]);
        cfg.u_max = vec![0.5];
        cfg.y_min = vec![-1.0];
        let qp = build_condensed_qp(&a, &cfg, &[0.0, 0.0, 0.2]).unwrap();
        assert_eq!(qp.n_rows(), 6);
        assert_eq!(qp.row_kinds[2], RowKind::InputAccumulation { t: 2, input: 0 });
        assert_eq!(qp.g_mat.row(2), &[1.0, 1.0, 1.0]);
        assert!((qp.g_u[0] - 0.3).abs() < 1e-15);
        assert_eq!(qp.g_l[0], f64::NEG_INFINITY);
        assert_eq!(qp.row_kinds[3], RowKind::Output { t: 1, output: 0 });
        assert_eq!(qp.g_u[3], f64::INFINITY);
    }
}
