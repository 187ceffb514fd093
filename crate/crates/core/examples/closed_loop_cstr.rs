//! Concentration steps on the CSTR under the three control schemes, built
//! directly through the library API.

use mpcproto::mpc::MpcConfig;
use mpcproto::plants;
use mpcproto::sim::{
    compute_metrics, run_closed_loop, Action, MpcSetup, PidLoop, PidParams, Scenario, Scheme, SetpointSource, Signal,
};

fn main() {
    let plant = (plants::lookup("cstr").unwrap().build)();
    let u0 = vec![298.0];
    let x0 = plants::find_equilibrium(&plant, &[0.9, 322.0], &u0, 1e-12).unwrap();
    println!("initial equilibrium: C_A = {:.5}, T = {:.4}", x0[0], x0[1]);

    let mut cfg = MpcConfig::new(10, 0.02, &[1e4], &[1e-3]);
    cfg.u_min = vec![280.0];
    cfg.u_max = vec![320.0];
    cfg.du_min = vec![-40.0];
    cfg.du_max = vec![40.0];
    let mpc = MpcSetup::new(cfg.clone());

    let loops = vec![
        PidLoop {
            name: "conc".into(),
            params: PidParams {
                gain: 400.0,
                integral_time: 1.0,
                action: Action::Direct,
                out_min: 300.0,
                out_max: 350.0,
                bias: x0[1],
            },
            measure: Signal::Output(0),
            setpoint: SetpointSource::Schedule(0),
            drives: None,
        },
        PidLoop {
            name: "temp".into(),
            params: PidParams {
                gain: 5.0,
                integral_time: 1.0,
                action: Action::Reverse,
                out_min: cfg.u_min[0],
                out_max: cfg.u_max[0],
                bias: u0[0],
            },
            measure: Signal::State(1),
            setpoint: SetpointSource::Cascade("conc".into()),
            drives: Some(0),
        },
    ];
    let schedule = vec![(0.0, vec![0.87]), (2.0, vec![0.92]), (4.0, vec![0.87])];

    for scheme in Scheme::ALL {
        let scenario = Scenario::new(6.0, schedule.clone(), scheme, x0.clone(), u0.clone());
        match run_closed_loop(&plant, &mpc, &loops, &scenario) {
            Ok(trace) => {
                let m = compute_metrics(&trace, &schedule, &cfg.y_min, &cfg.y_max);
                let c = &m.channels[0];
                let last = trace.rows.last().unwrap();
                let (lo, hi) = trace
                    .input(0)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), u| (a.min(u), b.max(u)));
                println!(
                    "{:<10} ISE {:.4e}  overshoot {:.4}  settling {:.3} min  final error {:.2e}  T_c in [{lo:.2}, {hi:.2}]",
                    scheme.as_str(),
                    c.ise,
                    c.max_overshoot(),
                    c.max_settling_time(),
                    last.r[0] - last.y[0],
                );
            }
            Err(e) => println!("{:<10} aborted: {e}", scheme.as_str()),
        }
    }
}
