use super::Trace;

/// Bound excursions at or below this (scaled by `1 + |bound|`) are not
/// counted as violations.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Response to one setpoint change.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMetrics {
    /// Start relative to the first trace row.
    pub start: f64,
    /// Setpoint change; for the first segment, measured from the initial output.
    pub step: f64,
    /// Largest excursion past the new setpoint in the direction of the step.
    pub overshoot: f64,
    /// Time after the segment start from which the output stays within 2 %
    /// of the step around the setpoint. `None` for a zero step or when the
    /// output is still outside the band at the end of the segment.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMetrics {
    /// `Σ (r − y)² Ts`.
    pub ise: f64,
    pub segments: Vec<SegmentMetrics>,
    pub violations: usize,
    pub max_violation: f64,
}

impl ChannelMetrics {
    pub fn max_overshoot(&self) -> f64 {
        self.segments.iter().map(|s| s.overshoot).fold(0.0, f64::max)
    }

    /// Longest settling time over the segments with a nonzero step; `NaN`
    /// when one of them never settles.
    pub fn max_settling_time(&self) -> f64 {
        let mut worst = 0.0f64;
        for s in self.segments.iter().filter(|s| s.step != 0.0) {
            match s.settling_time {
                Some(t) => worst = worst.max(t),
                None => return f64::NAN,
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub channels: Vec<ChannelMetrics>,
}

impl Metrics {
    pub fn total_ise(&self) -> f64 {
        self.channels.iter().map(|c| c.ise).sum()
    }

    pub fn total_violations(&self) -> usize {
        self.channels.iter().map(|c| c.violations).sum()
    }
}

/// Tracking metrics per output channel. Segment boundaries are the
/// schedule times taken relative to the first schedule entry and mapped to
/// the nearest sample after the first trace row, so shifting all trace
/// times by a constant leaves every metric unchanged.
///
/// # Panics
/// If the trace is empty.
pub fn compute_metrics(trace: &Trace, schedule: &[(f64, Vec<f64>)], y_min: &[f64], y_max: &[f64]) -> Metrics {
    assert!(!trace.rows.is_empty(), "metrics of an empty trace");
    let ts = trace.ts;
    let n = trace.rows.len();
    let s0 = schedule.first().map_or(0.0, |s| s.0);
    let mut starts: Vec<usize> = schedule
        .iter()
        .map(|(t, _)| (((t - s0) / ts).round().max(0.0) as usize).min(n))
        .collect();
    if starts.is_empty() {
        starts.push(0);
    }
    starts.push(n);

    let channels = (0..trace.n_y)
        .map(|c| {
            let y: Vec<f64> = trace.output(c).collect();
            let ise = trace.rows.iter().map(|r| (r.r[c] - r.y[c]).powi(2)).sum::<f64>() * ts;

            let mut segments = Vec::new();
            for (i, w) in starts.windows(2).enumerate() {
                let (a, b) = (w[0], w[1]);
                if a >= b {
                    continue;
                }
                let target = schedule.get(i).map_or(trace.rows[a].r[c], |s| s.1[c]);
                let before = if i == 0 { y[0] } else { schedule[i - 1].1[c] };
                let step = target - before;
                let dir = step.signum();
                let overshoot = if step == 0.0 {
                    0.0
                } else {
                    y[a..b].iter().map(|v| dir * (v - target)).fold(0.0, f64::max)
                };
                let settling_time = if step == 0.0 {
                    None
                } else {
                    let band = 0.02 * step.abs();
                    let outside = y[a..b].iter().rposition(|v| (v - target).abs() > band);
                    match outside {
                        None => Some(0.0),
                        Some(k) if a + k + 1 < b => Some((k + 1) as f64 * ts),
                        Some(_) => None,
                    }
                };
                segments.push(SegmentMetrics {
                    start: a as f64 * ts,
                    step,
                    overshoot,
                    settling_time,
                });
            }

            let (mut violations, mut max_violation) = (0usize, 0.0f64);
            let lo = y_min.get(c).copied().unwrap_or(f64::NEG_INFINITY);
            let hi = y_max.get(c).copied().unwrap_or(f64::INFINITY);
            for v in &y {
                let excess = (lo - v).max(v - hi);
                let tol = |b: f64| VIOLATION_TOL * (1.0 + b.abs());
                if (v - hi > tol(hi)) || (lo - v > tol(lo)) {
                    violations += 1;
                    max_violation = max_violation.max(excess);
                }
            }
            ChannelMetrics {
                ise,
                segments,
                violations,
                max_violation,
            }
        })
        .collect();
    Metrics { channels }
}

#[cfg(test)]
mod tests {
    use super::super::{Scheme, TraceRow};
    use super::*;

    fn trace(ts: f64, y: &[f64], r: &[f64]) -> Trace {
        let mut t = Trace::new(Scheme::SlMpc, ts, 0, 0, 1);
        for (k, (y, r)) in y.iter().zip(r).enumerate() {
            t.rows.push(TraceRow {
                time: k as f64 * ts,
                x: vec![],
                y: vec![*y],
                u: vec![],
                r: vec![*r],
                status: None,
                iters: 0,
                solve_ms: 0.0,
            });
        }
        t
    }

    #[test]
    fn perfect_tracking() {
        let r = [0.0, 0.0, 1.0, 1.0, 2.0];
        let m = compute_metrics(&trace(1.0, &r, &r), &[(0.0, vec![0.0]), (2.0, vec![1.0]), (4.0, vec![2.0])], &[], &[]);
        let c = &m.channels[0];
        assert_eq!(c.ise, 0.0);
        assert_eq!(c.max_overshoot(), 0.0);
        assert_eq!(c.max_settling_time(), 0.0);
        assert_eq!(c.violations, 0);
    }

    #[test]
    fn first_order_settling() {
        let ts = 0.01;
        let y: Vec<f64> = (0..1000).map(|k| 1.0 - (-(k as f64) * ts).exp()).collect();
        let m = compute_metrics(&trace(ts, &y, &vec![1.0; 1000]), &[(0.0, vec![1.0])], &[], &[]);
        let seg = &m.channels[0].segments[0];
        assert_eq!(seg.step, 1.0);
        assert!((seg.settling_time.unwrap() - 50f64.ln()).abs() <= ts);
        assert_eq!(seg.overshoot, 0.0);
    }

    #[test]
    fn single_violation() {
        let y = [0.5, 1.01, 0.9, 1.0];
        let m = compute_metrics(&trace(0.1, &y, &[1.0; 4]), &[(0.0, vec![1.0])], &[f64::NEG_INFINITY], &[1.0]);
        assert_eq!(m.channels[0].violations, 1);
        assert!((m.channels[0].max_violation - 0.01).abs() < 1e-15);
        assert!((m.channels[0].segments[0].overshoot - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unsettled_segment() {
        let y = [0.0, 0.5, 0.9];
        let m = compute_metrics(&trace(1.0, &y, &[1.0; 3]), &[(0.0, vec![1.0])], &[], &[]);
        assert_eq!(m.channels[0].segments[0].settling_time, None);
        assert!(m.channels[0].max_settling_time().is_nan());
    }
}
