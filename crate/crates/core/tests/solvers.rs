mod common;

use common::{random_aug, random_problem, rng};
use mpcproto::linalg::norm_inf;
use mpcproto::mpc::{build_condensed_qp, build_sparse_qp, extract_first_move, MpcConfig};
use mpcproto::solvers::{
    solve_condensed_activeset, solve_oracle_bruteforce, solve_sparse_cdal, ActiveSetSettings, ActiveSetWorkspace,
    CdalSettings, CdalWorkspace, SolveStatus,
};
use rand::Rng;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn cdal_matches_oracle_on_two_step_single_input() {
    let mut r = rng(11);
    let settings = CdalSettings {
        tol: 1e-8,
        max_outer: 2000,
        ..CdalSettings::default()
    };
    for i in 0..40 {
        let nx = r.gen_range(1..=4);
        let aug = random_aug(&mut r, nx, 1, 1, 0.1);
        let (cfg, x0) = random_problem(&mut r, &aug, 2);
        let qp = build_condensed_qp(&aug, &cfg, &x0).unwrap();
        let oracle = solve_oracle_bruteforce(&qp).unwrap();
        let sol = solve_sparse_cdal(&aug, &cfg, &x0, &mut CdalWorkspace::new(), &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged, "instance {i}");
        let du = build_sparse_qp(&aug, &cfg, &x0).unwrap().increments(&sol.z);
        assert!(max_abs_diff(&du, &oracle.z) <= 1e-5, "instance {i}: {du:?} vs {:?}", oracle.z);
    }
}

#[test]
fn active_set_matches_oracle_on_whole_sequence() {
    let mut r = rng(12);
    let mut checked = 0;
    for i in 0..60 {
        let (nx, nu, ny) = (r.gen_range(1..=5), r.gen_range(1..=2), r.gen_range(1..=2));
        let aug = random_aug(&mut r, nx, nu, ny, 0.1);
        let horizon = r.gen_range(1..=4);
        let (cfg, x0) = random_problem(&mut r, &aug, horizon);
        let qp = build_condensed_qp(&aug, &cfg, &x0).unwrap();
        let Ok(oracle) = solve_oracle_bruteforce(&qp) else { continue };
        let sol = solve_condensed_activeset(&qp, &mut ActiveSetWorkspace::new(), &ActiveSetSettings::default());
        assert!(sol.converged(), "instance {i}: {}", sol.status);
        assert!(max_abs_diff(&sol.z, &oracle.z) <= 1e-7, "instance {i}");
        assert!((sol.objective - oracle.objective).abs() <= 1e-8 * (1.0 + oracle.objective.abs()));
        assert!(qp.max_violation(&sol.z) <= 1e-9);
        checked += 1;
    }
    assert!(checked >= 30);
}

#[test]
fn warm_and_cold_starts_reach_the_same_optimum() {
    let mut r = rng(13);
    for _ in 0..20 {
        let aug = random_aug(&mut r, 3, 2, 2, 0.1);
        let (cfg, x0) = random_problem(&mut r, &aug, 6);
        let mut ws = ActiveSetWorkspace::new();
        let mut cdal_ws = CdalWorkspace::new();
        let cdal = CdalSettings {
            tol: 1e-9,
            max_outer: 5000,
            ..CdalSettings::default()
        };
        let mut x = x0.clone();
        for _ in 0..4 {
            let qp = build_condensed_qp(&aug, &cfg, &x).unwrap();
            let warm = solve_condensed_activeset(&qp, &mut ws, &ActiveSetSettings::default());
            let cold = solve_condensed_activeset(&qp, &mut ActiveSetWorkspace::new(), &ActiveSetSettings::default());
            assert!(warm.converged() && cold.converged());
            assert!(max_abs_diff(&warm.z, &cold.z) <= 1e-8);
            let c = solve_sparse_cdal(&aug, &cfg, &x, &mut cdal_ws, &cdal).unwrap();
            assert!(c.converged());
            let du = build_sparse_qp(&aug, &cfg, &x).unwrap().increments(&c.z);
            assert!(max_abs_diff(&du, &cold.z) <= 1e-5);
            x = aug.step(&x, &cold.z[..aug.n_u]);
        }
    }
}

#[test]
fn first_move_respects_input_box() {
    let mut r = rng(14);
    for _ in 0..30 {
        let aug = random_aug(&mut r, 3, 2, 1, 0.1);
        let (mut cfg, x0) = random_problem(&mut r, &aug, 5);
        let u_prev: Vec<f64> = (0..2).map(|j| aug.op.u_c[j] + x0[aug.n_x + j]).collect();
        cfg.u_min = u_prev.iter().map(|u| u - 0.1).collect();
        cfg.u_max = u_prev.iter().map(|u| u + 0.1).collect();
        let qp = build_condensed_qp(&aug, &cfg, &x0).unwrap();
        let sol = solve_condensed_activeset(&qp, &mut ActiveSetWorkspace::new(), &ActiveSetSettings::default());
        if !sol.converged() {
            continue;
        }
        let u = extract_first_move(&sol, &aug, &cfg, &u_prev).unwrap();
        for j in 0..2 {
            assert!(u[j] >= cfg.u_min[j] - 1e-12 && u[j] <= cfg.u_max[j] + 1e-12);
        }
    }
}

#[test]
fn unconstrained_cdal_is_stationary() {
    let mut r = rng(15);
    let aug = random_aug(&mut r, 4, 2, 2, 0.1);
    let mut cfg = MpcConfig::new(8, 0.1, &[5.0, 2.0], &[0.5, 0.5]);
    cfg.r = vec![1.0, -1.0];
    let x0 = vec![0.1; aug.n_aug()];
    let sol = solve_sparse_cdal(
        &aug,
        &cfg,
        &x0,
        &mut CdalWorkspace::new(),
        &CdalSettings {
            tol: 1e-10,
            max_outer: 5000,
            ..CdalSettings::default()
        },
    )
    .unwrap();
    assert!(sol.converged());
    let qp = build_condensed_qp(&aug, &cfg, &x0).unwrap();
    let du = build_sparse_qp(&aug, &cfg, &x0).unwrap().increments(&sol.z);
    let mut grad = qp.h_mat.mul_vec(&du);
    for (g, h) in grad.iter_mut().zip(&qp.h_vec) {
        *g += h;
    }
    assert!(norm_inf(&grad) <= 1e-6 * (1.0 + norm_inf(&qp.h_vec)), "gradient {grad:?}");
}
