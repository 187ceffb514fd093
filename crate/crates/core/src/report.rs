//! CSV traces, summary tables and gnuplot scripts.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly, so a trace read back from disk reproduces the metrics of
//! the in-memory run bit for bit.

use std::fmt::Write as _;

use thiserror::Error;

use crate::sim::{compute_metrics, Metrics, Scheme, Trace, TraceRow};
use crate::solvers::SolveStatus;

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("empty CSV")]
    Empty,
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(n_x: usize, n_y: usize, n_u: usize) -> String {
    let mut cols = vec!["time".to_string()];
    for (p, n) in [("x", n_x), ("y", n_y), ("u", n_u), ("r", n_y)] {
        cols.extend((0..n).map(|i| format!("{p}{i}")));
    }
    cols.extend(["status", "iters", "solve_ms"].map(String::from));
    cols.join(",")
}

/// `time,x0..,y0..,u0..,r0..,status,iters,solve_ms`; status is `none` for
/// rows without a QP solve.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut s = trace_header(trace.n_x, trace.n_y, trace.n_u);
    s.push('\n');
    for row in &trace.rows {
        s.push_str(&num(row.time));
        for v in row.x.iter().chain(&row.y).chain(&row.u).chain(&row.r) {
            s.push(',');
            s.push_str(&num(*v));
        }
        let status = row.status.map_or("none", SolveStatus::as_str);
        let _ = writeln!(s, ",{status},{},{}", row.iters, num(row.solve_ms));
    }
    s
}

fn parse_status(s: &str) -> Option<Option<SolveStatus>> {
    Some(match s {
        "none" => None,
        "converged" => Some(SolveStatus::Converged),
        "max-iterations" => Some(SolveStatus::MaxIterations),
        "infeasible" => Some(SolveStatus::Infeasible),
        _ => return None,
    })
}

/// Inverse of [`trace_to_csv`]. Dimensions are taken from the header.
pub fn trace_from_csv(text: &str, scheme: Scheme, ts: f64) -> Result<Trace, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(CsvError::Empty)?;
    let cols: Vec<&str> = header.split(',').collect();
    let count = |p: char| {
        cols.iter()
            .filter(|c| c.starts_with(p) && c[1..].parse::<usize>().is_ok())
            .count()
    };
    let (n_x, n_y, n_u) = (count('x'), count('y'), count('u'));
    if header != trace_header(n_x, n_y, n_u) {
        return Err(CsvError::Header(header.to_string()));
    }
    let mut trace = Trace::new(scheme, ts, n_x, n_u, n_y);
    let n_num = 1 + n_x + 2 * n_y + n_u;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let err = |message: String| CsvError::Row { line: line_no, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_num + 3 {
            return Err(err(format!("expected {} fields, got {}", n_num + 3, fields.len())));
        }
        let vals = fields[..n_num]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| err(format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        let status = parse_status(fields[n_num]).ok_or_else(|| err(format!("unknown status `{}`", fields[n_num])))?;
        let iters = fields[n_num + 1]
            .parse()
            .map_err(|_| err(format!("`{}` is not an iteration count", fields[n_num + 1])))?;
        let solve_ms = fields[n_num + 2]
            .parse()
            .map_err(|_| err(format!("`{}` is not a number", fields[n_num + 2])))?;
        let mut at = 1;
        let mut take = |n: usize| {
            let v = vals[at..at + n].to_vec();
            at += n;
            v
        };
        let (x, y, u, r) = (take(n_x), take(n_y), take(n_u), take(n_y));
        trace.rows.push(TraceRow {
            time: vals[0],
            x,
            y,
            u,
            r,
            status,
            iters,
            solve_ms,
        });
    }
    Ok(trace)
}

/// One scheme's result as it goes into `summary.csv`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    /// `None` when the trace is empty.
    pub metrics: Option<Metrics>,
    /// Abort message for runs that did not finish.
    pub abort: Option<String>,
}

impl RunOutcome {
    pub fn new(trace: Trace, schedule: &[(f64, Vec<f64>)], y_min: &[f64], y_max: &[f64], abort: Option<String>) -> Self {
        let metrics = (!trace.rows.is_empty()).then(|| compute_metrics(&trace, schedule, y_min, y_max));
        Self { trace, metrics, abort }
    }
}

pub const SUMMARY_HEADER: &str =
    "scheme,channel,ise,max_overshoot,max_settling_time,violations,max_violation,solves,mean_iters,failed_solves,completed";

/// One row per scheme and output channel.
pub fn summary_csv(outcomes: &[RunOutcome]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for o in outcomes {
        let t = &o.trace;
        let iters = t.iterations();
        let mean_iters = if iters.is_empty() {
            0.0
        } else {
            iters.iter().sum::<usize>() as f64 / iters.len() as f64
        };
        let failed = t
            .rows
            .iter()
            .filter(|r| matches!(r.status, Some(st) if st != SolveStatus::Converged))
            .count();
        for c in 0..t.n_y {
            let (ise, os, st, viol, maxv) = match &o.metrics {
                Some(m) => {
                    let ch = &m.channels[c];
                    (ch.ise, ch.max_overshoot(), ch.max_settling_time(), ch.violations, ch.max_violation)
                }
                None => (f64::NAN, f64::NAN, f64::NAN, 0, 0.0),
            };
            let _ = writeln!(
                s,
                "{},{c},{},{},{},{viol},{},{},{},{failed},{}",
                t.scheme,
                num(ise),
                num(os),
                num(st),
                num(maxv),
                iters.len(),
                num(mean_iters),
                o.abort.is_none()
            );
        }
    }
    s
}

/// gnuplot script plotting outputs against setpoints and the inputs of
/// every scheme; expects the trace CSVs next to it.
pub fn gnuplot_script(schemes: &[Scheme], n_x: usize, n_y: usize, n_u: usize) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 'time'\n");
    let _ = writeln!(s, "set terminal pngcairo size 1000,{}", 300 * (n_y + n_u));
    s.push_str("set output 'traces.png'\n");
    let _ = writeln!(s, "set multiplot layout {},1", n_y + n_u);
    let y_col = |i: usize| 2 + n_x + i;
    let u_col = |j: usize| 2 + n_x + n_y + j;
    let r_col = |i: usize| 2 + n_x + n_y + n_u + i;
    for i in 0..n_y {
        let _ = writeln!(s, "set ylabel 'y{i}'");
        let mut parts: Vec<String> = schemes
            .iter()
            .map(|sc| format!("'{sc}.csv' using 1:{} with lines title '{sc}'", y_col(i)))
            .collect();
        if let Some(first) = schemes.first() {
            parts.push(format!("'{first}.csv' using 1:{} with lines dt 2 title 'r{i}'", r_col(i)));
        }
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    for j in 0..n_u {
        let _ = writeln!(s, "set ylabel 'u{j}'");
        let parts: Vec<String> = schemes
            .iter()
            .map(|sc| format!("'{sc}.csv' using 1:{} with steps title '{sc}'", u_col(j)))
            .collect();
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    s.push_str("unset multiplot\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let mut t = Trace::new(Scheme::LtiMpc, 0.1, 2, 1, 1);
        for k in 0..3 {
            t.rows.push(TraceRow {
                time: k as f64 * 0.1,
                x: vec![1.0 / 3.0, -2.5e-17],
                y: vec![std::f64::consts::PI * k as f64],
                u: vec![300.0],
                r: vec![0.1],
                status: (k > 0).then_some(SolveStatus::Converged),
                iters: k,
                solve_ms: 0.0,
            });
        }
        t
    }

    #[test]
    fn header_layout() {
        assert_eq!(trace_header(2, 1, 1), "time,x0,x1,y0,u0,r0,status,iters,solve_ms");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let text = trace_to_csv(&t);
        assert!(text.lines().nth(1).unwrap().contains(",none,"));
        let back = trace_from_csv(&text, t.scheme, t.ts).unwrap();
        assert_eq!(back, t);
        assert_eq!(trace_to_csv(&back), text);
    }

    #[test]
    fn malformed_rows_are_reported() {
        let mut text = trace_to_csv(&sample());
        text.push_str("1,2,3\n");
        assert!(matches!(trace_from_csv(&text, Scheme::SlMpc, 0.1), Err(CsvError::Row { line: 5, .. })));
        assert!(matches!(trace_from_csv("a,b\n", Scheme::SlMpc, 0.1), Err(CsvError::Header(_))));
    }

    #[test]
    fn summary_has_row_per_channel() {
        let t = sample();
        let o = RunOutcome::new(t, &[(0.0, vec![0.1])], &[], &[], None);
        let s = summary_csv(&[o]);
        assert_eq!(s.lines().count(), 2);
        assert!(s.lines().nth(1).unwrap().starts_with("lti-mpc,0,"));
    }
}
