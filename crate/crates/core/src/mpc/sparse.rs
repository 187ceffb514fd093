use super::{shifted, MpcConfig, MpcError};
use crate::linalg::{dot, Matrix};
use crate::model::AugmentedModel;

/// Sparse (state-keeping) form of the tracking problem, stored as stage
/// blocks only. Every stage shares the same blocks, so the memory
/// footprint does not grow with the horizon beyond the initial state.
///
/// Variables per stage `t = 0..T-1`: `Û_t` then `X̂_{t+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseQp {
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub e: Vec<f64>,
    pub x0: Vec<f64>,
    /// `Ĉᵀ W_y Ĉ`, the stage state weight.
    pub q: Matrix,
    /// `−Ĉᵀ W_y δr`.
    pub q_lin: Vec<f64>,
    pub w_y: Matrix,
    pub w_du: Matrix,
    pub dr: Vec<f64>,
    pub du_l: Vec<f64>,
    pub du_u: Vec<f64>,
    /// Bounds on the `δU` block of each `X̂_{t+1}`.
    pub u_l: Vec<f64>,
    pub u_u: Vec<f64>,
    /// Bounds on `Ĉ X̂_t`, `t = 1..T`.
    pub y_l: Vec<f64>,
    pub y_u: Vec<f64>,
}

/// Explicit matrices of a QP `min ½ zᵀHz + hᵀz + c` s.t. `B z = b`,
/// `g_l ≤ G z ≤ g_u`, `z_l ≤ z ≤ z_u`. Used as a reference only.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h_mat: Matrix,
    pub h_vec: Vec<f64>,
    pub constant: f64,
    pub b_eq: Matrix,
    pub b_rhs: Vec<f64>,
    pub g_mat: Matrix,
    pub g_l: Vec<f64>,
    pub g_u: Vec<f64>,
    pub z_l: Vec<f64>,
    pub z_u: Vec<f64>,
}

/// Collects the stage blocks of the sparse QP.
pub fn build_sparse_qp(aug: &AugmentedModel, cfg: &MpcConfig, x0_aug: &[f64]) -> Result<SparseQp, MpcError> {
    cfg.check_against(aug, x0_aug)?;
    let dr = cfg.delta_r(aug);
    let wc = cfg.w_y.mul(&aug.c);
    let q = aug.c.tr_mul(&wc);
    let q_lin = wc.tr_mul_vec(&dr).into_iter().map(|v| -v).collect();
    Ok(SparseQp {
        horizon: cfg.horizon,
        n_x: aug.n_x,
        n_u: aug.n_u,
        n_y: aug.n_y,
        a: aug.a.clone(),
        b: aug.b.clone(),
        c: aug.c.clone(),
        e: aug.e.clone(),
        x0: x0_aug.to_vec(),
        q,
        q_lin,
        w_y: cfg.w_y.clone(),
        w_du: cfg.w_du.clone(),
        dr,
        du_l: cfg.du_min.clone(),
        du_u: cfg.du_max.clone(),
        u_l: shifted(&cfg.u_min, &aug.op.u_c),
        u_u: shifted(&cfg.u_max, &aug.op.u_c),
        y_l: shifted(&cfg.y_min, &aug.op.y_c),
        y_u: shifted(&cfg.y_max, &aug.op.y_c),
    })
}

impl SparseQp {
    pub fn n_aug(&self) -> usize {
        self.n_x + self.n_u
    }

    pub fn stage_len(&self) -> usize {
        self.n_u + self.n_aug()
    }

    pub fn n_vars(&self) -> usize {
        self.horizon * self.stage_len()
    }

    /// Offset of `Û_t` in `z`.
    pub fn u_offset(&self, t: usize) -> usize {
        t * self.stage_len()
    }

    /// Offset of `X̂_t` in `z`, `t = 1..T`.
    pub fn x_offset(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.horizon);
        (t - 1) * self.stage_len() + self.n_u
    }

    /// `X̂_t` for `t = 0..T` (`X̂_0` is the fixed initial state).
    pub fn state<'a>(&'a self, z: &'a [f64], t: usize) -> &'a [f64] {
        if t == 0 {
            &self.x0
        } else {
            let o = self.x_offset(t);
            &z[o..o + self.n_aug()]
        }
    }

    pub fn increment<'a>(&self, z: &'a [f64], t: usize) -> &'a [f64] {
        let o = self.u_offset(t);
        &z[o..o + self.n_u]
    }

    /// Stacked `Û_0..Û_{T-1}` extracted from a full decision vector.
    pub fn increments(&self, z: &[f64]) -> Vec<f64> {
        (0..self.horizon).flat_map(|t| self.increment(z, t).to_vec()).collect()
    }

    /// Decision vector generated by the augmented recursion from `du`.
    pub fn rollout(&self, du: &[f64]) -> Vec<f64> {
        assert_eq!(du.len(), self.horizon * self.n_u);
        let mut z = Vec::with_capacity(self.n_vars());
        let mut x = self.x0.clone();
        for t in 0..self.horizon {
            let u = &du[t * self.n_u..(t + 1) * self.n_u];
            let mut next = self.a.mul_vec(&x);
            for (v, (bu, e)) in next.iter_mut().zip(self.b.mul_vec(u).into_iter().zip(&self.e)) {
                *v += bu + e;
            }
            z.extend_from_slice(u);
            z.extend_from_slice(&next);
            x = next;
        }
        z
    }

    /// `X̂_{t+1} − Â X̂_t − B̂ Û_t − ê`, stacked over `t`.
    pub fn equality_residual(&self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.horizon * self.n_aug());
        for t in 0..self.horizon {
            let ax = self.a.mul_vec(self.state(z, t));
            let bu = self.b.mul_vec(self.increment(z, t));
            let next = self.state(z, t + 1);
            out.extend((0..self.n_aug()).map(|i| next[i] - ax[i] - bu[i] - self.e[i]));
        }
        out
    }

    /// Tracking cost `½ Σ ‖Ĉ X̂_{t+1} − δr‖²_{W_y} + ‖Û_t‖²_{W_Δu}`.
    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut cost = 0.0;
        for t in 0..self.horizon {
            let u = self.increment(z, t);
            cost += 0.5 * dot(u, &self.w_du.mul_vec(u));
            let res: Vec<f64> = self
                .c
                .mul_vec(self.state(z, t + 1))
                .iter()
                .zip(&self.dr)
                .map(|(y, r)| y - r)
                .collect();
            cost += 0.5 * dot(&res, &self.w_y.mul_vec(&res));
        }
        cost
    }

    /// `½ δrᵀ W_y δr` summed over the horizon; the part of the objective not
    /// captured by the quadratic and linear terms.
    pub fn constant(&self) -> f64 {
        0.5 * self.horizon as f64 * dot(&self.dr, &self.w_y.mul_vec(&self.dr))
    }

    /// Output rows kept: components with at least one finite bound.
    pub fn constrained_outputs(&self) -> Vec<usize> {
        (0..self.n_y)
            .filter(|&i| self.y_l[i].is_finite() || self.y_u[i].is_finite())
            .collect()
    }

    /// Materializes the horizon-wide matrices. Reference and testing only.
    pub fn to_dense(&self) -> DenseQp {
        let (nu, na, t_h) = (self.n_u, self.n_aug(), self.horizon);
        let n = self.n_vars();
        let mut h_mat = Matrix::zeros(n, n);
        let mut h_vec = vec![0.0; n];
        let mut b_eq = Matrix::zeros(t_h * na, n);
        let mut b_rhs = vec![0.0; t_h * na];
        let mut z_l = vec![f64::NEG_INFINITY; n];
        let mut z_u = vec![f64::INFINITY; n];
        let outs = self.constrained_outputs();
        let mut g_mat = Matrix::zeros(t_h * outs.len(), n);
        let mut g_l = Vec::with_capacity(t_h * outs.len());
        let mut g_u = Vec::with_capacity(t_h * outs.len());
        let ax0 = self.a.mul_vec(&self.x0);
        let neg_a = self.a.scale(-1.0);
        let neg_b = self.b.scale(-1.0);

        for t in 0..t_h {
            let uo = self.u_offset(t);
            let xo = self.x_offset(t + 1);
            h_mat.set_block(uo, uo, &self.w_du);
            h_mat.set_block(xo, xo, &self.q);
            h_vec[xo..xo + na].copy_from_slice(&self.q_lin);
            for j in 0..nu {
                z_l[uo + j] = self.du_l[j];
                z_u[uo + j] = self.du_u[j];
                z_l[xo + self.n_x + j] = self.u_l[j];
                z_u[xo + self.n_x + j] = self.u_u[j];
            }

            let r0 = t * na;
            b_eq.set_block(r0, xo, &Matrix::identity(na));
            b_eq.set_block(r0, uo, &neg_b);
            if t > 0 {
                b_eq.set_block(r0, self.x_offset(t), &neg_a);
            }
            for i in 0..na {
                b_rhs[r0 + i] = self.e[i] + if t == 0 { ax0[i] } else { 0.0 };
            }

            for (k, &o) in outs.iter().enumerate() {
                let row = t * outs.len() + k;
                for j in 0..na {
                    g_mat[(row, xo + j)] = self.c[(o, j)];
                }
                g_l.push(self.y_l[o]);
                g_u.push(self.y_u[o]);
            }
        }
        DenseQp {
            h_mat,
            h_vec,
            constant: self.constant(),
            b_eq,
            b_rhs,
            g_mat,
            g_l,
            g_u,
            z_l,
            z_u,
        }
    }
}

impl DenseQp {
    pub fn objective(&self, z: &[f64]) -> f64 {
        0.5 * dot(z, &self.h_mat.mul_vec(z)) + dot(&self.h_vec, z) + self.constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_inf;
    use crate::model::OperatingPoint;

    fn sample_aug() -> AugmentedModel {
        AugmentedModel {
            a: Matrix::from_rows(&[[0.95, 0.1, 0.05], [-0.1, 0.9, 0.2], [0.0, 0.0, 1.0]]),
            b: Matrix::from_rows(&[[0.05], [0.2], [1.0]]),
            c: Matrix::from_rows(&[[1.0, 0.3, 0.0]]),
            e: vec![0.02, -0.01, 0.0],
            n_x: 2,
            n_u: 1,
            n_y: 1,
            op: OperatingPoint {
                x_c: vec![0.0; 2],
                u_c: vec![0.5],
                y_c: vec![0.1],
                xdot_c: vec![0.2, -0.1],
            },
        }
    }

    #[test]
    fn single_stage_layout() {
        let aug = sample_aug();
        let cfg = MpcConfig::new(1, 0.1, &[1.0], &[1.0]);
        let x0 = [0.1, -0.2, 0.05];
        let qp = build_sparse_qp(&aug, &cfg, &x0).unwrap();
        assert_eq!(qp.n_vars(), 4);
        let d = qp.to_dense();
        assert_eq!(d.b_eq.shape(), (3, 4));
        let expect: Vec<f64> = aug.a.mul_vec(&x0).iter().zip(&aug.e).map(|(a, e)| a + e).collect();
        assert!(norm_inf(&crate::linalg::sub_vec(&d.b_rhs, &expect)) < 1e-15);
        assert_eq!(d.b_eq.row(0), &[-0.05, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rollout_satisfies_dynamics() {
        let aug = sample_aug();
        let cfg = MpcConfig::new(5, 0.1, &[1.0], &[1.0]);
        let qp = build_sparse_qp(&aug, &cfg, &[0.3, 0.1, -0.2]).unwrap();
        let z = qp.rollout(&[0.1, -0.3, 0.7, 0.0, 0.25]);
        assert!(norm_inf(&qp.equality_residual(&z)) <= 1e-12);
        let d = qp.to_dense();
        let bz = d.b_eq.mul_vec(&z);
        assert!(norm_inf(&crate::linalg::sub_vec(&bz, &d.b_rhs)) <= 1e-12);
        assert!((d.objective(&z) - qp.objective(&z)).abs() <= 1e-12);
    }

    #[test]
    fn input_bounds_land_on_state_block() {
        let aug = sample_aug();
        let mut cfg = MpcConfig::new(2, 0.1, &[1.0], &[1.0]);
        cfg.u_min = vec![0.0];
        cfg.u_max = vec![1.0];
        let qp = build_sparse_qp(&aug, &cfg, &[0.0; 3]).unwrap();
        let d = qp.to_dense();
        // z = [Û0, δX1(2), δU0, Û1, δX2(2), δU1]
        assert_eq!(d.z_l[3], -0.5);
        assert_eq!(d.z_u[7], 0.5);
        assert_eq!(d.z_l[1], f64::NEG_INFINITY);
        assert_eq!(d.g_mat.nrows(), 0);
    }
}
