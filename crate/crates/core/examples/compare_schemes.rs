//! Load a run specification and compare all schemes in parallel, printing
//! the summary table that `mpcproto compare` writes to summary.csv.

use std::path::Path;

use mpcproto::cli::run_compare;
use mpcproto::config::RunSpec;
use mpcproto::report::summary_csv;
use mpcproto::sim::Scheme;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/cstr_step.cfg");
    let spec = RunSpec::parse_file(&path).unwrap();
    let outcomes = run_compare(&spec, &Scheme::ALL);
    print!("{}", summary_csv(&outcomes));
    for o in &outcomes {
        if let Some(msg) = &o.abort {
            eprintln!("{msg}");
        }
    }
}
