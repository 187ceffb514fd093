mod common;

use common::{random_aug, random_problem, rng};
use mpcproto::config::RunSpec;
use mpcproto::linalg::is_positive_semidefinite;
use mpcproto::mpc::{build_condensed_qp, build_sparse_qp};
use mpcproto::report::{trace_from_csv, trace_to_csv};
use mpcproto::sim::{compute_metrics, step_pid, Action, PidParams, Scheme, Trace, TraceRow};
use mpcproto::solvers::SolveStatus;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn condensed_and_sparse_objectives_agree(seed in any::<u64>(), nx in 1usize..6, nu in 1usize..3, ny in 1usize..3, t in 1usize..8) {
        let mut r = rng(seed);
        let aug = random_aug(&mut r, nx, nu, ny, 0.1);
        let (cfg, x0) = random_problem(&mut r, &aug, t);
        let cond = build_condensed_qp(&aug, &cfg, &x0).unwrap();
        let sparse = build_sparse_qp(&aug, &cfg, &x0).unwrap();
        let du: Vec<f64> = (0..t * nu).map(|_| r.gen_range(-1.0..1.0)).collect();
        let z = sparse.rollout(&du);
        let (a, b) = (cond.objective(&du), sparse.objective(&z));
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        prop_assert!(sparse.equality_residual(&z).iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn condensed_hessian_is_symmetric_psd(seed in any::<u64>(), nx in 1usize..6, nu in 1usize..4, t in 1usize..10) {
        let mut r = rng(seed);
        let aug = random_aug(&mut r, nx, nu, 2, 0.05);
        let (cfg, x0) = random_problem(&mut r, &aug, t);
        let qp = build_condensed_qp(&aug, &cfg, &x0).unwrap();
        prop_assert!(qp.h_mat.is_symmetric(0.0));
        prop_assert!(is_positive_semidefinite(&qp.h_mat, 0.0));
    }

    #[test]
    fn pid_output_stays_within_limits(
        gain in -50.0f64..50.0,
        ti in 0.01f64..10.0,
        reverse in any::<bool>(),
        lo in -10.0f64..0.0,
        width in 0.0f64..20.0,
        errors in prop::collection::vec(-5.0f64..5.0, 1..50),
    ) {
        let p = PidParams {
            gain,
            integral_time: ti,
            action: if reverse { Action::Reverse } else { Action::Direct },
            out_min: lo,
            out_max: lo + width,
            bias: 0.0,
        };
        let mut acc = 0.0;
        for e in errors {
            let (out, next) = step_pid(&p, 0.0, e, acc, 0.1);
            prop_assert!(out >= p.out_min && out <= p.out_max);
            prop_assert!(next.is_finite());
            acc = next;
        }
    }

    #[test]
    fn metrics_ignore_a_time_shift(
        ys in prop::collection::vec(-2.0f64..2.0, 20..60),
        offset in -100.0f64..100.0,
        switch in 1usize..19,
    ) {
        let ts = 0.1;
        let schedule = vec![(0.0, vec![1.0]), (switch as f64 * ts, vec![-0.5])];
        let build = |shift: f64, schedule: &[(f64, Vec<f64>)]| {
            let mut trace = Trace::new(Scheme::LtiMpc, ts, 0, 0, 1);
            for (k, y) in ys.iter().enumerate() {
                let time = shift + k as f64 * ts;
                let r = if k >= switch { -0.5 } else { 1.0 };
                trace.rows.push(TraceRow { time, x: vec![], y: vec![*y], u: vec![], r: vec![r], status: None, iters: 0, solve_ms: 0.0 });
            }
            compute_metrics(&trace, schedule, &[-1.5], &[1.5])
        };
        let shifted: Vec<(f64, Vec<f64>)> = schedule.iter().map(|(t, r)| (t + offset, r.clone())).collect();
        prop_assert_eq!(build(0.0, &schedule), build(offset, &shifted));
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((any::<f64>(), any::<f64>(), 0usize..1000, 0u8..4), 1..30)) {
        let mut trace = Trace::new(Scheme::SlMpc, 0.02, 1, 1, 1);
        for (k, (a, b, iters, st)) in rows.into_iter().enumerate() {
            let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
            trace.rows.push(TraceRow {
                time: k as f64 * 0.02,
                x: vec![finite(a)],
                y: vec![finite(b)],
                u: vec![finite(a) - finite(b)],
                r: vec![f64::MIN_POSITIVE],
                status: [None, Some(SolveStatus::Converged), Some(SolveStatus::MaxIterations), Some(SolveStatus::Infeasible)][st as usize],
                iters,
                solve_ms: 0.0,
            });
        }
        let text = trace_to_csv(&trace);
        prop_assert_eq!(trace_from_csv(&text, trace.scheme, trace.ts).unwrap(), trace);
    }

    #[test]
    fn config_round_trip(
        horizon in 1usize..40,
        ts in 0.001f64..1.0,
        wy in 0.0f64..1e5,
        wdu in 1e-6f64..1e3,
        du in 0.01f64..100.0,
        relin in 0usize..5,
        seed in any::<u64>(),
        noise in prop::option::of(1e-6f64..1.0),
    ) {
        let mut text = format!(
            "[plant]\nname = tank\n[mpc]\nhorizon = {horizon}\nts = {ts}\nw_y = {wy}\nw_du = {wdu}\ndu_min = -{du}\ndu_max = {du}\n\
             [scenario]\nscheme = lti-mpc\nrelin_period = {relin}\nduration = 2\nschedule = 0: 0.5; 1: -0.25\n[run]\nseed = {seed}\n"
        );
        if let Some(n) = noise {
            text = text.replace("duration = 2", &format!("duration = 2\nnoise_std = {n}"));
        }
        let spec = RunSpec::parse_str(&text).unwrap();
        let emitted = spec.emit();
        let back = RunSpec::parse_str(&emitted).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(back.emit(), emitted);
    }
}
