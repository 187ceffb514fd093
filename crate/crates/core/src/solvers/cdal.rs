//! Coordinate-descent augmented Lagrangian (CDAL) for the sparse MPC QP.
//!
//! The stage dynamics `X̂_{t+1} = Â X̂_t + B̂ Û_t + ê` are dualized with an
//! augmented Lagrangian; output bounds `y_l ≤ Ĉ X̂_t ≤ y_u` enter through
//! clamped multipliers. Each AL subproblem is minimized by forward cyclic
//! coordinate descent over `Û_0, X̂_1, Û_1, …`, where every coordinate step
//! is an exact one-dimensional minimization followed by clipping to the
//! variable box. Only the stage blocks `Â, B̂, Ĉ, ê` and vectors of length
//! `T·n` are touched; nothing horizon-sized squared is ever formed.

use std::time::Instant;

use super::{Iterations, QpSolution, SolveStatus};
use crate::linalg::{dot, norm_inf, Matrix};
use crate::mpc::{build_sparse_qp, MpcConfig, MpcError, SparseQp};
use crate::model::AugmentedModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdalSettings {
    /// Primal (equality and output bound) residual tolerance; the dual
    /// residual is held to this times `max(1, largest stage weight)`.
    pub tol: f64,
    pub max_outer: usize,
    /// Coordinate-descent sweeps per AL subproblem.
    pub max_sweeps: usize,
    /// Early exit when the largest coordinate change in a sweep drops below this.
    pub sweep_tol: f64,
    /// Initial penalty, relative to the largest stage weight.
    pub rho_init: f64,
    /// Penalty cap, relative to the largest stage weight.
    pub rho_max: f64,
    /// Inner sweeps also stop once the coordinate change falls below this
    /// fraction of the previous primal residual (capped at one).
    pub inner_rel: f64,
    /// Nesterov-type extrapolation of the multipliers.
    pub accelerate: bool,
}

impl Default for CdalSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_outer: 200,
            max_sweeps: 500,
            sweep_tol: 1e-8,
            rho_init: 1.0,
            rho_max: 10.0,
            inner_rel: 0.1,
            accelerate: true,
        }
    }
}

/// Multipliers, penalty and primal iterate carried between sampling
/// instants. One workspace per controller.
#[derive(Debug, Clone, Default)]
pub struct CdalWorkspace {
    shape: Option<(usize, usize, usize, usize)>,
    /// Stage-equality multipliers, one `n_aug` block per transition.
    eq_mult: Vec<f64>,
    /// Nonnegative multipliers of `Ĉ X̂_t ≤ y_u`, one `n_y` block per stage.
    out_upper: Vec<f64>,
    /// Nonnegative multipliers of `Ĉ X̂_t ≥ y_l`.
    out_lower: Vec<f64>,
    rho: f64,
    z: Vec<f64>,
    /// Inverse smooth curvature per stage coordinate (`Û` block then `X̂`
    /// block), for interior and final stage.
    precond: Vec<f64>,
    precond_last: Vec<f64>,
    precond_rho: f64,
}

impl CdalWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_fresh(&self) -> bool {
        self.shape.is_none()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eq_multipliers(&self) -> &[f64] {
        &self.eq_mult
    }

    pub fn output_multipliers(&self) -> (&[f64], &[f64]) {
        (&self.out_lower, &self.out_upper)
    }

    pub fn previous_iterate(&self) -> &[f64] {
        &self.z
    }
}

/// Builds the stage data from the model and configuration and runs CDAL.
pub fn solve_sparse_cdal(
    aug: &AugmentedModel,
    cfg: &MpcConfig,
    x0_aug: &[f64],
    ws: &mut CdalWorkspace,
    settings: &CdalSettings,
) -> Result<QpSolution, MpcError> {
    let qp = build_sparse_qp(aug, cfg, x0_aug)?;
    Ok(solve_sparse_cdal_stage(&qp, ws, settings))
}

/// Stage data plus the propagated blocks `Â^m`, `Â^m B̂` (and their images
/// under `Q` and `Ĉ`) for `m < T`. These are the only precomputed
/// matrices; each is stage-sized.
struct Problem<'a> {
    qp: &'a SparseQp,
    t_h: usize,
    nx: usize,
    nu: usize,
    na: usize,
    ny: usize,
    outs: Vec<usize>,
    /// `‖B̂_{:,j}‖²`
    b_col_sq: Vec<f64>,
    /// `‖Â_{:,k}‖²`
    a_col_sq: Vec<f64>,
    pa: Vec<Matrix>,
    qpa: Vec<Matrix>,
    cpa: Vec<Matrix>,
    pb: Vec<Matrix>,
    qpb: Vec<Matrix>,
    cpb: Vec<Matrix>,
    /// State response to moving one unit of increment from stage `s + 1`
    /// to stage `s`: `B̂` at `X̂_{s+1}`, then `Â^m B̂ − Â^{m−1} B̂`.
    db: Vec<Matrix>,
    qdb: Vec<Matrix>,
    cdb: Vec<Matrix>,
    shift_curv: Vec<f64>,
    shift_lin: Vec<f64>,
    /// Cost curvature and constant gradient of the rollout directions,
    /// indexed `(t − 1)·n_aug + k` for states and `s·n_u + j` for increments.
    roll_x_curv: Vec<f64>,
    roll_x_lin: Vec<f64>,
    roll_u_curv: Vec<f64>,
    roll_u_lin: Vec<f64>,
}

/// Column `k` of `m` dotted with `v`.
fn col_dot(m: &Matrix, k: usize, v: &[f64]) -> f64 {
    v.iter().enumerate().map(|(i, vi)| m[(i, k)] * vi).sum()
}

impl<'a> Problem<'a> {
    fn new(qp: &'a SparseQp) -> Self {
        let na = qp.n_aug();
        let (t_h, nu) = (qp.horizon, qp.n_u);
        let b_col_sq = (0..nu).map(|j| (0..na).map(|i| qp.b[(i, j)].powi(2)).sum()).collect();
        let a_col_sq = (0..na).map(|k| (0..na).map(|i| qp.a[(i, k)].powi(2)).sum()).collect();

        let mut pa = Vec::with_capacity(t_h);
        let mut pb = Vec::with_capacity(t_h);
        pa.push(Matrix::identity(na));
        pb.push(qp.b.clone());
        for m in 1..t_h {
            pa.push(qp.a.mul(&pa[m - 1]));
            pb.push(qp.a.mul(&pb[m - 1]));
        }
        let qpa: Vec<Matrix> = pa.iter().map(|p| qp.q.mul(p)).collect();
        let qpb: Vec<Matrix> = pb.iter().map(|p| qp.q.mul(p)).collect();
        let cpa = pa.iter().map(|p| qp.c.mul(p)).collect();
        let cpb = pb.iter().map(|p| qp.c.mul(p)).collect();
        let db: Vec<Matrix> = (0..t_h).map(|m| if m == 0 { pb[0].clone() } else { pb[m].sub(&pb[m - 1]) }).collect();
        let qdb: Vec<Matrix> = db.iter().map(|p| qp.q.mul(p)).collect();
        let cdb = db.iter().map(|p| qp.c.mul(p)).collect();

        // Suffix sums over the propagation length: a direction started at
        // stage t reaches m = 0..T−t.
        let mut roll_x_curv = vec![0.0; t_h * na];
        let mut roll_x_lin = vec![0.0; t_h * na];
        for k in 0..na {
            let (mut curv, mut lin) = (0.0, 0.0);
            for m in 0..t_h {
                curv += col_dot(&pa[m], k, &qpa[m].column(k));
                lin += col_dot(&pa[m], k, &qp.q_lin);
                let t = t_h - m;
                roll_x_curv[(t - 1) * na + k] = curv;
                roll_x_lin[(t - 1) * na + k] = lin;
            }
        }
        let mut roll_u_curv = vec![0.0; t_h * nu];
        let mut roll_u_lin = vec![0.0; t_h * nu];
        for j in 0..nu {
            let (mut curv, mut lin) = (qp.w_du[(j, j)], 0.0);
            for m in 0..t_h {
                curv += col_dot(&pb[m], j, &qpb[m].column(j));
                lin += col_dot(&pb[m], j, &qp.q_lin);
                let s = t_h - 1 - m;
                roll_u_curv[s * nu + j] = curv;
                roll_u_lin[s * nu + j] = lin;
            }
        }

        let mut shift_curv = vec![0.0; t_h * nu];
        let mut shift_lin = vec![0.0; t_h * nu];
        for j in 0..nu {
            let (mut curv, mut lin) = (2.0 * qp.w_du[(j, j)], 0.0);
            for m in 0..t_h {
                curv += col_dot(&db[m], j, &qdb[m].column(j));
                lin += col_dot(&db[m], j, &qp.q_lin);
                let s = t_h - 1 - m;
                shift_curv[s * nu + j] = curv;
                shift_lin[s * nu + j] = lin;
            }
        }

        Self {
            qp,
            t_h,
            nx: qp.n_x,
            nu,
            na,
            ny: qp.n_y,
            outs: qp.constrained_outputs(),
            b_col_sq,
            a_col_sq,
            pa,
            qpa,
            cpa,
            pb,
            qpb,
            cpb,
            db,
            qdb,
            cdb,
            shift_curv,
            shift_lin,
            roll_x_curv,
            roll_x_lin,
            roll_u_curv,
            roll_u_lin,
        }
    }

    fn stage(&self) -> usize {
        self.nu + self.na
    }

    fn u_at(&self, t: usize) -> usize {
        t * self.stage()
    }

    /// Offset of `X̂_t`, `t = 1..T`.
    fn x_at(&self, t: usize) -> usize {
        (t - 1) * self.stage() + self.nu
    }

    fn x_box(&self, k: usize) -> (f64, f64) {
        if k < self.nx {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (self.qp.u_l[k - self.nx], self.qp.u_u[k - self.nx])
        }
    }

    fn weight_scale(&self) -> f64 {
        let q = self.qp.q.diagonal().into_iter().fold(0.0, f64::max);
        let r = self.qp.w_du.diagonal().into_iter().fold(0.0, f64::max);
        q.max(r).max(1e-12)
    }

    /// `c_t = X̂_{t+1} − Â X̂_t − B̂ Û_t − ê` for all `t`.
    fn residuals(&self, z: &[f64], c: &mut [f64]) {
        let qp = self.qp;
        for t in 0..self.t_h {
            let prev = if t == 0 { &qp.x0[..] } else { &z[self.x_at(t)..self.x_at(t) + self.na] };
            let u = &z[self.u_at(t)..self.u_at(t) + self.nu];
            let next = &z[self.x_at(t + 1)..self.x_at(t + 1) + self.na];
            for i in 0..self.na {
                let mut v = next[i] - qp.e[i];
                for (k, p) in prev.iter().enumerate() {
                    v -= qp.a[(i, k)] * p;
                }
                for (j, uj) in u.iter().enumerate() {
                    v -= qp.b[(i, j)] * uj;
                }
                c[t * self.na + i] = v;
            }
        }
    }

    /// `v_t = Ĉ X̂_t` for `t = 1..T`, stored at block `t − 1`.
    fn outputs(&self, z: &[f64], v: &mut [f64]) {
        for t in 1..=self.t_h {
            let x = &z[self.x_at(t)..self.x_at(t) + self.na];
            for o in 0..self.ny {
                v[(t - 1) * self.ny + o] = dot(self.qp.c.row(o), x);
            }
        }
    }

    fn output_violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.t_h {
            for &o in &self.outs {
                let val = v[t * self.ny + o];
                worst = worst.max(val - self.qp.y_u[o]).max(self.qp.y_l[o] - val);
            }
        }
        worst
    }

    /// Inverse diagonal of the AL Hessian for the plain coordinates of an
    /// interior and of the final stage.
    fn refresh_precond(&self, ws: &mut CdalWorkspace, rho: f64) {
        let (nu, na) = (self.nu, self.na);
        ws.precond.resize(nu + na, 0.0);
        ws.precond_last.resize(nu + na, 0.0);
        for j in 0..nu {
            let d = self.qp.w_du[(j, j)] + rho * self.b_col_sq[j];
            ws.precond[j] = 1.0 / d;
            ws.precond_last[j] = 1.0 / d;
        }
        for k in 0..na {
            let base = self.qp.q[(k, k)] + rho;
            ws.precond[nu + k] = 1.0 / (base + rho * self.a_col_sq[k]);
            ws.precond_last[nu + k] = 1.0 / base;
        }
        ws.precond_rho = rho;
    }
}

/// Primal iterate with the residuals `c` and outputs `v` kept in sync.
struct Iterate {
    z: Vec<f64>,
    c: Vec<f64>,
    v: Vec<f64>,
}

/// Multipliers the AL subproblem is built from.
struct Duals<'p> {
    lam: &'p [f64],
    lam_out: &'p [f64],
    rho: f64,
}

struct Scratch {
    terms: Vec<(f64, f64, f64, f64)>,
    breaks: Vec<f64>,
}

/// Minimizes `g0·δ + ½ a δ² + Σ ψ_i(w_i + coef_i δ)` over `δ` where
/// `ψ_i'(w) = ρ (w − clip(w, lo_i, hi_i))`, then clips `θ + δ` to
/// `[lb, ub]`. Every piece is convex, so the derivative is monotone and
/// piecewise linear with breakpoints where some `w_i` crosses a bound.
#[allow(clippy::too_many_arguments)]
fn piecewise_step(g0: f64, a: f64, rho: f64, terms: &[(f64, f64, f64, f64)], theta: f64, lb: f64, ub: f64, scratch: &mut Vec<f64>) -> f64 {
    let deriv = |d: f64| {
        let mut s = g0 + a * d;
        for &(coef, w, lo, hi) in terms {
            let wd = w + coef * d;
            s += coef * rho * (wd - wd.max(lo).min(hi));
        }
        s
    };
    let slope = |d: f64| {
        let mut s = a;
        for &(coef, w, lo, hi) in terms {
            let wd = w + coef * d;
            if wd < lo || wd > hi {
                s += coef * coef * rho;
            }
        }
        s
    };
    scratch.clear();
    for &(coef, w, lo, hi) in terms {
        if coef == 0.0 {
            continue;
        }
        if lo.is_finite() {
            scratch.push((lo - w) / coef);
        }
        if hi.is_finite() {
            scratch.push((hi - w) / coef);
        }
    }
    let delta = if scratch.is_empty() {
        -deriv(0.0) / slope(0.0)
    } else {
        scratch.sort_by(|x, y| x.total_cmp(y));
        let first = scratch[0];
        let f_first = deriv(first);
        if f_first >= 0.0 {
            first - f_first / slope(first - 1.0)
        } else {
            let mut lo_pt = first;
            let mut f_lo = f_first;
            let mut found = None;
            for &bp in scratch.iter().skip(1) {
                let f_bp = deriv(bp);
                if f_bp >= 0.0 {
                    found = Some(if f_bp > f_lo { lo_pt - f_lo * (bp - lo_pt) / (f_bp - f_lo) } else { bp });
                    break;
                }
                lo_pt = bp;
                f_lo = f_bp;
            }
            found.unwrap_or_else(|| lo_pt - f_lo / slope(lo_pt + 1.0))
        }
    };
    (theta + delta).max(lb).min(ub) - theta
}

impl Problem<'_> {
    /// Step along a direction whose only effect on the output penalty is
    /// through `terms`; plain quadratic otherwise.
    #[allow(clippy::too_many_arguments)]
    fn line_step(&self, g: f64, a: f64, rho: f64, theta: f64, lb: f64, ub: f64, sc: &mut Scratch) -> f64 {
        if sc.terms.is_empty() {
            (theta - g / a).max(lb).min(ub) - theta
        } else {
            piecewise_step(g, a, rho, &sc.terms, theta, lb, ub, &mut sc.breaks)
        }
    }

    /// One forward cyclic pass over the stages. Within stage `s` it visits
    /// the coordinates of `Û_s`, then the same coordinates propagated
    /// through the dynamics, then the coordinates of `X̂_{s+1}` and their
    /// propagated counterparts. Returns the largest coordinate change.
    fn sweep(&self, d: &Duals<'_>, ws: &CdalWorkspace, it: &mut Iterate, sc: &mut Scratch) -> f64 {
        let qp = self.qp;
        let (nu, na, ny, t_h) = (self.nu, self.na, self.ny, self.t_h);
        let rho = d.rho;
        let mut max_change: f64 = 0.0;
        for s in 0..t_h {
            let uo = self.u_at(s);
            let cs = s * na;

            // Plain Û_s coordinates.
            for j in 0..nu {
                let mut g = 0.0;
                for l in 0..nu {
                    g += qp.w_du[(j, l)] * it.z[uo + l];
                }
                for i in 0..na {
                    g -= qp.b[(i, j)] * (d.lam[cs + i] + rho * it.c[cs + i]);
                }
                let old = it.z[uo + j];
                let new = (old - g * ws.precond[j]).max(qp.du_l[j]).min(qp.du_u[j]);
                let step = new - old;
                if step != 0.0 {
                    it.z[uo + j] = new;
                    for i in 0..na {
                        it.c[cs + i] -= qp.b[(i, j)] * step;
                    }
                    max_change = max_change.max(step.abs());
                }
            }

            // Û_s[j] together with its effect on X̂_{s+1..T}; leaves every
            // residual unchanged.
            for j in 0..nu {
                let mut g = self.roll_u_lin[s * nu + j];
                for l in 0..nu {
                    g += qp.w_du[(j, l)] * it.z[uo + l];
                }
                let old = it.z[uo + j];
                let (mut lb, mut ub) = (qp.du_l[j] - old, qp.du_u[j] - old);
                sc.terms.clear();
                for m in 0..t_h - s {
                    let t = s + 1 + m;
                    let xo = self.x_at(t);
                    g += col_dot(&self.qpb[m], j, &it.z[xo..xo + na]);
                    let du = it.z[xo + self.nx + j];
                    lb = lb.max(qp.u_l[j] - du);
                    ub = ub.min(qp.u_u[j] - du);
                    for &o in &self.outs {
                        let coef = self.cpb[m][(o, j)];
                        if coef != 0.0 {
                            let idx = (t - 1) * ny + o;
                            sc.terms.push((coef, it.v[idx] + d.lam_out[idx] / rho, qp.y_l[o], qp.y_u[o]));
                        }
                    }
                }
                if !(lb <= ub) {
                    continue;
                }
                let step = self.line_step(g, self.roll_u_curv[s * nu + j], rho, 0.0, lb.min(0.0), ub.max(0.0), sc);
                if step != 0.0 {
                    it.z[uo + j] += step;
                    for m in 0..t_h - s {
                        let t = s + 1 + m;
                        let xo = self.x_at(t);
                        for i in 0..na {
                            it.z[xo + i] += step * self.pb[m][(i, j)];
                        }
                        for o in 0..ny {
                            it.v[(t - 1) * ny + o] += step * self.cpb[m][(o, j)];
                        }
                    }
                    max_change = max_change.max(step.abs());
                }
            }

            // Û_s[j] += δ, Û_{s+1}[j] −= δ with the states following; only
            // δU_s moves, so later input bounds cannot block it.
            if s + 1 < t_h {
                let un = self.u_at(s + 1);
                for j in 0..nu {
                    let mut g = self.shift_lin[s * nu + j];
                    for l in 0..nu {
                        g += qp.w_du[(j, l)] * (it.z[uo + l] - it.z[un + l]);
                    }
                    let (a_old, b_old) = (it.z[uo + j], it.z[un + j]);
                    let du = it.z[self.x_at(s + 1) + self.nx + j];
                    let lb = (qp.du_l[j] - a_old).max(b_old - qp.du_u[j]).max(qp.u_l[j] - du);
                    let ub = (qp.du_u[j] - a_old).min(b_old - qp.du_l[j]).min(qp.u_u[j] - du);
                    sc.terms.clear();
                    for m in 0..t_h - s {
                        let t = s + 1 + m;
                        let xo = self.x_at(t);
                        g += col_dot(&self.qdb[m], j, &it.z[xo..xo + na]);
                        for &o in &self.outs {
                            let coef = self.cdb[m][(o, j)];
                            if coef != 0.0 {
                                let idx = (t - 1) * ny + o;
                                sc.terms.push((coef, it.v[idx] + d.lam_out[idx] / rho, qp.y_l[o], qp.y_u[o]));
                            }
                        }
                    }
                    if !(lb <= ub) {
                        continue;
                    }
                    let step = self.line_step(g, self.shift_curv[s * nu + j], rho, 0.0, lb.min(0.0), ub.max(0.0), sc);
                    if step != 0.0 {
                        it.z[uo + j] += step;
                        it.z[un + j] -= step;
                        for m in 0..t_h - s {
                            let t = s + 1 + m;
                            let xo = self.x_at(t);
                            for i in 0..na {
                                it.z[xo + i] += step * self.db[m][(i, j)];
                            }
                            for o in 0..ny {
                                it.v[(t - 1) * ny + o] += step * self.cdb[m][(o, j)];
                            }
                        }
                        max_change = max_change.max(step.abs());
                    }
                }
            }

            let t = s + 1;
            let last = t == t_h;
            let xo = self.x_at(t);
            let cn = t * na;
            let vo = s * ny;
            let pre = if last { &ws.precond_last } else { &ws.precond };

            // Plain X̂_{s+1} coordinates.
            for k in 0..na {
                let mut g = qp.q_lin[k] + d.lam[cs + k] + rho * it.c[cs + k];
                for l in 0..na {
                    g += qp.q[(k, l)] * it.z[xo + l];
                }
                if !last {
                    for i in 0..na {
                        g -= qp.a[(i, k)] * (d.lam[cn + i] + rho * it.c[cn + i]);
                    }
                }
                let old = it.z[xo + k];
                let (lb, ub) = self.x_box(k);
                sc.terms.clear();
                for &o in &self.outs {
                    let coef = qp.c[(o, k)];
                    if coef != 0.0 {
                        sc.terms.push((coef, it.v[vo + o] + d.lam_out[vo + o] / rho, qp.y_l[o], qp.y_u[o]));
                    }
                }
                let step = self.line_step(g, 1.0 / pre[nu + k], rho, old, lb, ub, sc);
                if step != 0.0 {
                    it.z[xo + k] = old + step;
                    it.c[cs + k] += step;
                    if !last {
                        for i in 0..na {
                            it.c[cn + i] -= qp.a[(i, k)] * step;
                        }
                    }
                    for o in 0..ny {
                        it.v[vo + o] += qp.c[(o, k)] * step;
                    }
                    max_change = max_change.max(step.abs());
                }
            }

            // X̂_{s+1}[k] together with its effect on X̂_{s+2..T}; changes
            // only the residual c_s[k].
            if last {
                continue;
            }
            for k in 0..na {
                let mut g = self.roll_x_lin[s * na + k] + d.lam[cs + k] + rho * it.c[cs + k];
                let (mut lb, mut ub) = (f64::NEG_INFINITY, f64::INFINITY);
                sc.terms.clear();
                for m in 0..t_h - s {
                    let tt = t + m;
                    let xt = self.x_at(tt);
                    g += col_dot(&self.qpa[m], k, &it.z[xt..xt + na]);
                    if k >= self.nx {
                        let (bl, bu) = self.x_box(k);
                        lb = lb.max(bl - it.z[xt + k]);
                        ub = ub.min(bu - it.z[xt + k]);
                    }
                    for &o in &self.outs {
                        let coef = self.cpa[m][(o, k)];
                        if coef != 0.0 {
                            let idx = (tt - 1) * ny + o;
                            sc.terms.push((coef, it.v[idx] + d.lam_out[idx] / rho, qp.y_l[o], qp.y_u[o]));
                        }
                    }
                }
                if !(lb <= ub) {
                    continue;
                }
                let a = self.roll_x_curv[s * na + k] + rho;
                let step = self.line_step(g, a, rho, 0.0, lb.min(0.0), ub.max(0.0), sc);
                if step != 0.0 {
                    it.c[cs + k] += step;
                    for m in 0..t_h - s {
                        let tt = t + m;
                        let xt = self.x_at(tt);
                        for i in 0..na {
                            it.z[xt + i] += step * self.pa[m][(i, k)];
                        }
                        for o in 0..ny {
                            it.v[(tt - 1) * ny + o] += step * self.cpa[m][(o, k)];
                        }
                    }
                    max_change = max_change.max(step.abs());
                }
            }
        }
        max_change
    }

    /// Projected-gradient norm of the Lagrangian at `z` with multipliers
    /// `lam` (equalities) and `lam_out` (signed output multipliers).
    fn dual_residual(&self, z: &[f64], lam: &[f64], lam_out: &[f64]) -> f64 {
        let qp = self.qp;
        let (nu, na, ny) = (self.nu, self.na, self.ny);
        let mut worst: f64 = 0.0;
        for s in 0..self.t_h {
            let uo = self.u_at(s);
            let cs = s * na;
            for j in 0..nu {
                let mut g = 0.0;
                for l in 0..nu {
                    g += qp.w_du[(j, l)] * z[uo + l];
                }
                for i in 0..na {
                    g -= qp.b[(i, j)] * lam[cs + i];
                }
                let x = z[uo + j];
                let p = x - (x - g).max(qp.du_l[j]).min(qp.du_u[j]);
                worst = worst.max(p.abs());
            }
            let t = s + 1;
            let xo = self.x_at(t);
            let cn = t * na;
            for k in 0..na {
                let mut g = qp.q_lin[k] + lam[cs + k];
                for l in 0..na {
                    g += qp.q[(k, l)] * z[xo + l];
                }
                if t < self.t_h {
                    for i in 0..na {
                        g -= qp.a[(i, k)] * lam[cn + i];
                    }
                }
                for o in 0..ny {
                    g += qp.c[(o, k)] * lam_out[s * ny + o];
                }
                let x = z[xo + k];
                let (lb, ub) = self.x_box(k);
                let p = x - (x - g).max(lb).min(ub);
                worst = worst.max(p.abs());
            }
        }
        worst
    }
}

/// Warm-start primal guess: increments shifted one stage forward, states
/// regenerated by the current dynamics and clipped to their boxes.
fn warm_primal(prob: &Problem<'_>, prev: &[f64]) -> Vec<f64> {
    let qp = prob.qp;
    let nu = prob.nu;
    let mut du = vec![0.0; prob.t_h * nu];
    if prev.len() == qp.n_vars() {
        for t in 0..prob.t_h {
            let src = (t + 1).min(prob.t_h - 1);
            let u = &prev[prob.u_at(src)..prob.u_at(src) + nu];
            for j in 0..nu {
                du[t * nu + j] = if t + 1 < prob.t_h { u[j] } else { 0.0 };
            }
        }
    }
    for (k, d) in du.iter_mut().enumerate() {
        *d = d.max(qp.du_l[k % nu]).min(qp.du_u[k % nu]);
    }
    let mut z = qp.rollout(&du);
    for t in 1..=prob.t_h {
        let xo = prob.x_at(t);
        for k in prob.nx..prob.na {
            let (lb, ub) = prob.x_box(k);
            z[xo + k] = z[xo + k].max(lb).min(ub);
        }
    }
    z
}

fn shift_blocks(v: &mut [f64], block: usize) {
    let n = v.len();
    if n <= block {
        return;
    }
    v.copy_within(block..n, 0);
}

/// CDAL on stage data. The workspace supplies the warm start (multipliers,
/// penalty, previous iterate) and receives the final state.
pub fn solve_sparse_cdal_stage(qp: &SparseQp, ws: &mut CdalWorkspace, settings: &CdalSettings) -> QpSolution {
    let start = Instant::now();
    let prob = Problem::new(qp);
    let (t_h, na, ny) = (prob.t_h, prob.na, prob.ny);
    let shape = (t_h, prob.nx, prob.nu, ny);
    let scale = prob.weight_scale();
    let rho_max = settings.rho_max * scale;

    if ws.shape != Some(shape) {
        ws.reset();
        ws.shape = Some(shape);
        ws.eq_mult = vec![0.0; t_h * na];
        ws.out_upper = vec![0.0; t_h * ny];
        ws.out_lower = vec![0.0; t_h * ny];
        ws.rho = settings.rho_init * scale;
    } else {
        shift_blocks(&mut ws.eq_mult, na);
        shift_blocks(&mut ws.out_upper, ny);
        shift_blocks(&mut ws.out_lower, ny);
        ws.rho = ws.rho.min(rho_max).max(1e-12);
    }
    let mut rho = ws.rho;
    prob.refresh_precond(ws, rho);

    let mut lam = ws.eq_mult.clone();
    let mut lam_out: Vec<f64> = ws.out_upper.iter().zip(&ws.out_lower).map(|(u, l)| u - l).collect();
    let mut lam_prev = lam.clone();
    let mut lam_out_prev = lam_out.clone();
    let mut lam_hat = lam.clone();
    let mut lam_out_hat = lam_out.clone();
    let mut alpha: f64 = 1.0;

    let mut it = Iterate {
        c: vec![0.0; t_h * na],
        v: vec![0.0; t_h * ny],
        z: warm_primal(&prob, &ws.z),
    };
    let mut sc = Scratch {
        terms: Vec::with_capacity(t_h * ny),
        breaks: Vec::with_capacity(2 * t_h * ny),
    };

    let mut iters = Iterations::default();
    let mut status = SolveStatus::MaxIterations;
    let mut prev_eq_res = f64::INFINITY;
    let mut prev_primal = f64::INFINITY;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    for _ in 0..settings.max_outer {
        iters.outer += 1;
        prob.residuals(&it.z, &mut it.c);
        prob.outputs(&it.z, &mut it.v);
        let duals = Duals {
            lam: &lam_hat,
            lam_out: &lam_out_hat,
            rho,
        };
        let inner_tol = settings.sweep_tol.max(settings.inner_rel * prev_primal.min(1.0));
        for _ in 0..settings.max_sweeps {
            iters.inner += 1;
            if prob.sweep(&duals, ws, &mut it, &mut sc) <= inner_tol {
                break;
            }
        }
        // Recompute to keep incremental drift out of the residuals.
        prob.residuals(&it.z, &mut it.c);
        prob.outputs(&it.z, &mut it.v);
        let (z, c, v) = (&it.z, &it.c, &it.v);

        lam_prev.copy_from_slice(&lam);
        lam_out_prev.copy_from_slice(&lam_out);
        for i in 0..lam.len() {
            lam[i] = lam_hat[i] + rho * c[i];
        }
        for t in 0..t_h {
            for o in 0..ny {
                let idx = t * ny + o;
                let w = v[idx] + lam_out_hat[idx] / rho;
                lam_out[idx] = rho * (w - w.max(qp.y_l[o]).min(qp.y_u[o]));
            }
        }

        let eq_res = norm_inf(c);
        primal = eq_res.max(prob.output_violation(v));
        dual = prob.dual_residual(z, &lam, &lam_out);
        if primal <= settings.tol && dual <= settings.tol * scale.max(1.0) {
            status = SolveStatus::Converged;
            break;
        }

        let mut restart = primal > prev_primal;
        if eq_res > 0.1 * prev_eq_res && rho < rho_max {
            rho = (rho * 10.0).min(rho_max);
            prob.refresh_precond(ws, rho);
            restart = true;
        }
        prev_eq_res = eq_res;
        prev_primal = primal;

        if settings.accelerate && !restart {
            let alpha_next = 0.5 * (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt());
            let beta = (alpha - 1.0) / alpha_next;
            for i in 0..lam.len() {
                lam_hat[i] = lam[i] + beta * (lam[i] - lam_prev[i]);
            }
            for i in 0..lam_out.len() {
                lam_out_hat[i] = lam_out[i] + beta * (lam_out[i] - lam_out_prev[i]);
            }
            alpha = alpha_next;
        } else {
            alpha = 1.0;
            lam_hat.copy_from_slice(&lam);
            lam_out_hat.copy_from_slice(&lam_out);
        }
    }

    ws.rho = rho;
    ws.eq_mult.copy_from_slice(&lam);
    for (i, l) in lam_out.iter().enumerate() {
        ws.out_upper[i] = l.max(0.0);
        ws.out_lower[i] = (-l).max(0.0);
    }
    ws.z = it.z.clone();

    let objective = qp.objective(&it.z);
    QpSolution {
        objective,
        status,
        iterations: iters,
        solve_time: start.elapsed().as_secs_f64(),
        primal_residual: primal,
        dual_residual: dual,
        y_box: Vec::new(),
        y_rows: lam_out,
        y_eq: lam,
        z: it.z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Cholesky, Matrix};
    use crate::mpc::{build_condensed_qp, MpcConfig};
    use crate::model::OperatingPoint;

    fn scalar_aug(e: f64) -> AugmentedModel {
        // δx⁺ = 0.9 δx + 0.2 δu + e
        AugmentedModel {
            a: Matrix::from_rows(&[[0.9, 0.2], [0.0, 1.0]]),
            b: Matrix::from_rows(&[[0.2], [1.0]]),
            c: Matrix::from_rows(&[[1.0, 0.0]]),
            e: vec![e, 0.0],
            n_x: 1,
            n_u: 1,
            n_y: 1,
            op: OperatingPoint {
                x_c: vec![0.0],
                u_c: vec![0.0],
                y_c: vec![0.0],
                xdot_c: vec![e / 0.1],
            },
        }
    }

    #[test]
    fn unconstrained_matches_dense_solution() {
        let aug = scalar_aug(0.01);
        let mut cfg = MpcConfig::new(2, 0.1, &[5.0], &[1.0]);
        cfg.r = vec![1.0];
        let x0 = [0.2, -0.1];
        let dense = build_condensed_qp(&aug, &cfg, &x0).unwrap();
        let z_ref: Vec<f64> = Cholesky::new(&dense.h_mat).unwrap().solve(&dense.h_vec).iter().map(|v| -v).collect();
        let settings = CdalSettings {
            tol: 1e-8,
            ..CdalSettings::default()
        };
        let sol = solve_sparse_cdal(&aug, &cfg, &x0, &mut CdalWorkspace::new(), &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        let qp = build_sparse_qp(&aug, &cfg, &x0).unwrap();
        let du = qp.increments(&sol.z);
        for (a, b) in du.iter().zip(&z_ref) {
            assert!((a - b).abs() < 1e-6, "{du:?} vs {z_ref:?}");
        }
    }

    #[test]
    fn at_setpoint_solution_is_zero() {
        let aug = scalar_aug(0.0);
        let cfg = MpcConfig::new(4, 0.1, &[1.0], &[1.0]);
        let mut ws = CdalWorkspace::new();
        let sol = solve_sparse_cdal(&aug, &cfg, &[0.0, 0.0], &mut ws, &CdalSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!(norm_inf(&sol.z) == 0.0);
        assert!(sol.objective == 0.0);
    }

    #[test]
    fn piecewise_step_finds_kink_minimum() {
        // min ½ δ² − 2δ with an upper output bound at w = 1 (coef 1, ρ = 100):
        // the bound term pulls the minimizer to just above 1.
        let mut scratch = Vec::new();
        let d = piecewise_step(-2.0, 1.0, 100.0, &[(1.0, 0.0, f64::NEG_INFINITY, 1.0)], 0.0, f64::NEG_INFINITY, f64::INFINITY, &mut scratch);
        let expect = (2.0 + 100.0) / 101.0;
        assert!((d - expect).abs() < 1e-12, "{d}");
        // Same problem with a box at 0.5 on θ.
        let d = piecewise_step(-2.0, 1.0, 100.0, &[(1.0, 0.0, f64::NEG_INFINITY, 1.0)], 0.0, f64::NEG_INFINITY, 0.5, &mut scratch);
        assert_eq!(d, 0.5);
    }

    #[test]
    fn max_outer_reports_best_iterate() {
        let aug = scalar_aug(0.01);
        let mut cfg = MpcConfig::new(6, 0.1, &[5.0], &[1.0]);
        cfg.r = vec![1.0];
        let settings = CdalSettings {
            max_outer: 1,
            ..CdalSettings::default()
        };
        let sol = solve_sparse_cdal(&aug, &cfg, &[0.0, 0.0], &mut CdalWorkspace::new(), &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::MaxIterations);
        assert!(sol.primal_residual.is_finite());
        assert_eq!(sol.iterations.outer, 1);
    }
}
