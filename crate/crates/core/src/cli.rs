//! Command-line front end: `run` one scheme or `compare` several on the
//! same scenario.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunSpec;
use crate::plants;
use crate::report::{gnuplot_script, summary_csv, trace_to_csv, RunOutcome};
use crate::sim::{run_closed_loop, Scheme, SimAbort, SolverChoice, Trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mpcproto", version, about = "Prototype and compare MPC schemes on nonlinear plants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scheme named in the spec (or --scheme).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Simulate several schemes in parallel on the same scenario.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated scheme list.
        #[arg(long, value_delimiter = ',', default_values_t = Scheme::ALL.to_vec())]
        schemes: Vec<Scheme>,
    },
    /// Print the spec with every default filled in.
    Show {
        spec: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    spec: PathBuf,
    /// Output directory; must already exist.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    solver: Option<SolverChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    relin_period: Option<usize>,
    /// Also write a gnuplot script.
    #[arg(long)]
    plot: bool,
}

impl Common {
    fn load(&self) -> Result<RunSpec, String> {
        let mut spec = RunSpec::parse_file(&self.spec).map_err(|e| format!("{}: {e}", self.spec.display()))?;
        if let Some(out) = &self.out {
            spec.out_dir = out.clone();
        }
        if let Some(s) = self.solver {
            spec.mpc.solver = s;
        }
        if let Some(seed) = self.seed {
            spec.set_seed(seed);
        }
        if let Some(p) = self.relin_period {
            spec.scenario.relin_period = p;
        }
        spec.plot |= self.plot;
        Ok(spec)
    }
}

/// Simulates `scheme` on the spec's plant and scenario.
pub fn run_scheme(spec: &RunSpec, scheme: Scheme) -> Result<Trace, SimAbort> {
    let entry = plants::lookup(&spec.plant).expect("plant name validated at parse time");
    let plant = (entry.build)();
    let mut scenario = spec.scenario.clone();
    scenario.scheme = scheme;
    run_closed_loop(&plant, &spec.mpc, &spec.pid, &scenario)
}

/// Runs every scheme on its own thread; results come back in input order.
pub fn run_compare(spec: &RunSpec, schemes: &[Scheme]) -> Vec<RunOutcome> {
    let results: Vec<Result<Trace, SimAbort>> = std::thread::scope(|s| {
        let handles: Vec<_> = schemes.iter().map(|&sc| s.spawn(move || run_scheme(spec, sc))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let cfg = &spec.mpc.cfg;
    results
        .into_iter()
        .map(|r| match r {
            Ok(trace) => RunOutcome::new(trace, &spec.scenario.schedule, &cfg.y_min, &cfg.y_max, None),
            Err(abort) => {
                let msg = abort.to_string();
                RunOutcome::new(abort.trace, &spec.scenario.schedule, &cfg.y_min, &cfg.y_max, Some(msg))
            }
        })
        .collect()
}

/// Writes `<scheme>.csv` per outcome, `summary.csv` and optionally
/// `plot.gp`. Returns the paths written.
pub fn write_outputs(dir: &Path, spec: &RunSpec, outcomes: &[RunOutcome]) -> std::io::Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", dir.display()),
        ));
    }
    let mut files: Vec<(PathBuf, String)> = outcomes
        .iter()
        .map(|o| (dir.join(format!("{}.csv", o.trace.scheme)), trace_to_csv(&o.trace)))
        .collect();
    files.push((dir.join("summary.csv"), summary_csv(outcomes)));
    if spec.plot {
        let schemes: Vec<Scheme> = outcomes.iter().map(|o| o.trace.scheme).collect();
        let t = outcomes.first().map(|o| &o.trace);
        let (n_x, n_y, n_u) = t.map_or((0, 0, 0), |t| (t.n_x, t.n_y, t.n_u));
        files.push((dir.join("plot.gp"), gnuplot_script(&schemes, n_x, n_y, n_u)));
    }
    for (path, body) in &files {
        std::fs::write(path, body)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn print_table(outcomes: &[RunOutcome]) {
    println!("{:<20} {:>4} {:>14} {:>12} {:>10} {:>6} {:>10}", "scheme", "ch", "ISE", "overshoot", "settling", "viol", "mean iters");
    for o in outcomes {
        let iters = o.trace.iterations();
        let mean = if iters.is_empty() {
            0.0
        } else {
            iters.iter().sum::<usize>() as f64 / iters.len() as f64
        };
        match &o.metrics {
            Some(m) => {
                for (c, ch) in m.channels.iter().enumerate() {
                    println!(
                        "{:<20} {c:>4} {:>14.6e} {:>12.4e} {:>10.4} {:>6} {mean:>10.2}",
                        o.trace.scheme.as_str(),
                        ch.ise,
                        ch.max_overshoot(),
                        ch.max_settling_time(),
                        ch.violations
                    );
                }
            }
            None => println!("{:<20} (no samples)", o.trace.scheme.as_str()),
        }
        if let Some(msg) = &o.abort {
            eprintln!("error: {msg}");
        }
    }
}

fn execute(common: &Common, schemes: &[Scheme], override_scheme: bool) -> i32 {
    let spec = match common.load() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let schemes: Vec<Scheme> = if override_scheme { schemes.to_vec() } else { vec![spec.scenario.scheme] };
    if !spec.out_dir.is_dir() {
        eprintln!("error: output directory {} does not exist", spec.out_dir.display());
        return EXIT_IO;
    }
    let outcomes = run_compare(&spec, &schemes);
    print_table(&outcomes);
    match write_outputs(&spec.out_dir, &spec, &outcomes) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
    }
    if outcomes.iter().any(|o| o.abort.is_some()) {
        EXIT_ABORT
    } else {
        EXIT_OK
    }
}

/// Entry point shared by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { common, scheme } => match scheme {
            Some(s) => execute(&common, &[s], true),
            None => execute(&common, &[], false),
        },
        Command::Compare { common, schemes } => execute(&common, &schemes, true),
        Command::Show { spec } => match RunSpec::parse_file(&spec) {
            Ok(s) => {
                print!("{}", s.emit());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {}: {e}", spec.display());
                EXIT_PARSE
            }
        },
    }
}
