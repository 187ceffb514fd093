//! Run specifications: a flat `key = value` format with section headers.
//!
//! ```text
//! [plant]
//! name = cstr
//!
//! [mpc]
//! horizon = 10
//! w_y = 1e4
//!
//! [scenario]
//! scheme = sl-mpc
//! schedule = 0: 0.87; 2: 0.92
//!
//! [pid.conc]
//! gain = 400
//! integral_time = 1
//! action = direct
//! measure = y0
//! setpoint = r0
//! ```
//!
//! Arrays are comma-separated. Every omitted key is filled with its default
//! at parse time, and [`RunSpec::emit`] writes every key back, so
//! `parse(emit(spec)) == spec`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::mpc::MpcConfig;
use crate::plants::{self, find_equilibrium};
use crate::sim::{
    Action, MpcSetup, Noise, PidLoop, PidParams, Scenario, Scheme, SetpointSource, Signal, SolverChoice,
};

pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_TS: f64 = 0.02;
pub const DEFAULT_DURATION: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}, key `{key}`: {message}")]
    Key { line: usize, key: String, message: String },
    #[error("missing required key `{key}` in [{section}]")]
    Missing { section: String, key: String },
}

/// Everything a `run` or `compare` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub plant: String,
    pub mpc: MpcSetup,
    /// Scheme, schedule and initial condition; `scenario.scheme` is the
    /// scheme used by `run`.
    pub scenario: Scenario,
    /// Refine `scenario.x0` to an equilibrium at `scenario.u0`.
    pub equilibrate: bool,
    pub noise_std: f64,
    pub pid: Vec<PidLoop>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub plot: bool,
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

const PLANT_KEYS: &[&str] = &["name"];
const MPC_KEYS: &[&str] = &[
    "horizon", "ts", "w_y", "w_du", "du_min", "du_max", "u_min", "u_max", "y_min", "y_max", "solver", "tol",
    "max_iter", "fd_step",
];
const SCENARIO_KEYS: &[&str] = &[
    "scheme",
    "duration",
    "schedule",
    "relin_period",
    "x0",
    "u0",
    "equilibrate",
    "substeps",
    "noise_std",
    "timing",
];
const PID_KEYS: &[&str] = &[
    "gain",
    "integral_time",
    "action",
    "out_min",
    "out_max",
    "bias",
    "measure",
    "setpoint",
    "drives",
];
const RUN_KEYS: &[&str] = &["out", "seed", "plot"];

fn tokenize(text: &str) -> Result<Vec<Section>, ParseError> {
    let mut sections: Vec<Section> = Vec::new();
    let mut seen_sections = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ParseError::Syntax {
                    line,
                    message: format!("unterminated section header `{content}`"),
                })?
                .trim()
                .to_string();
            let valid = matches!(name.as_str(), "plant" | "mpc" | "scenario" | "run")
                || name.strip_prefix("pid.").is_some_and(|n| {
                    !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                });
            if !valid {
                return Err(ParseError::Syntax {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            if !seen_sections.insert(name.clone()) {
                return Err(ParseError::Syntax {
                    line,
                    message: format!("section [{name}] appears twice"),
                });
            }
            sections.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ParseError::Syntax {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value)
            .to_string();
        let section = sections.last_mut().ok_or_else(|| ParseError::Key {
            line,
            key: key.clone(),
            message: "key outside of any section".into(),
        })?;
        let allowed = match section.name.as_str() {
            "plant" => PLANT_KEYS,
            "mpc" => MPC_KEYS,
            "scenario" => SCENARIO_KEYS,
            "run" => RUN_KEYS,
            _ => PID_KEYS,
        };
        if !allowed.contains(&key.as_str()) {
            return Err(ParseError::Key {
                line,
                key,
                message: format!("unknown key in [{}]", section.name),
            });
        }
        if section.entries.iter().any(|e| e.key == key) {
            return Err(ParseError::Key {
                line,
                key,
                message: "duplicate key".into(),
            });
        }
        section.entries.push(Entry { key, value, line });
    }
    Ok(sections)
}

/// Typed access to one section with line-accurate errors.
struct Fields<'a> {
    name: &'a str,
    entries: &'a [Entry],
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Option<&'a Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn err(e: &Entry, message: impl Into<String>) -> ParseError {
        ParseError::Key {
            line: e.line,
            key: e.key.clone(),
            message: message.into(),
        }
    }

    fn required(&self, key: &str) -> Result<&'a Entry, ParseError> {
        self.get(key).ok_or_else(|| ParseError::Missing {
            section: self.name.to_string(),
            key: key.to_string(),
        })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ParseError> {
        self.get(key)
            .map(|e| e.value.parse().map_err(|_| Self::err(e, format!("expected {what}, got `{}`", e.value))))
            .transpose()
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ParseError> {
        match self.parse::<f64>(key, "a number")? {
            Some(v) if v.is_nan() => Err(Self::err(self.get(key).unwrap(), "NaN is not allowed")),
            v => Ok(v),
        }
    }

    fn floats(&self, key: &str, len: usize) -> Result<Option<Vec<f64>>, ParseError> {
        let Some(e) = self.get(key) else { return Ok(None) };
        let v = parse_list(&e.value).map_err(|m| Self::err(e, m))?;
        if v.len() != len {
            return Err(Self::err(e, format!("expected {len} value(s), got {}", v.len())));
        }
        Ok(Some(v))
    }

    fn choice<T: std::str::FromStr<Err = String>>(&self, key: &str) -> Result<Option<T>, ParseError> {
        self.get(key).map(|e| e.value.parse().map_err(|m: String| Self::err(e, m))).transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, ParseError> {
        self.parse::<bool>(key, "true or false")
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(v) if !v.is_nan() => Ok(v),
                _ => Err(format!("`{t}` is not a number")),
            }
        })
        .collect()
}

fn parse_schedule(s: &str, n_y: usize) -> Result<Vec<(f64, Vec<f64>)>, String> {
    let mut out = Vec::new();
    for seg in s.split(';').map(str::trim).filter(|x| !x.is_empty()) {
        let (t, vals) = seg
            .split_once(':')
            .ok_or_else(|| format!("segment `{seg}` is not `time: values`"))?;
        let t: f64 = t.trim().parse().map_err(|_| format!("`{}` is not a time", t.trim()))?;
        let vals = parse_list(vals)?;
        if vals.len() != n_y {
            return Err(format!("segment at t = {t} has {} value(s), expected {n_y}", vals.len()));
        }
        out.push((t, vals));
    }
    if out.is_empty() {
        return Err("schedule is empty".into());
    }
    Ok(out)
}

fn parse_index(s: &str, prefix: char) -> Option<usize> {
    s.strip_prefix(prefix).and_then(|i| i.parse().ok())
}

fn parse_signal(s: &str) -> Result<Signal, String> {
    parse_index(s, 'y')
        .map(Signal::Output)
        .or_else(|| parse_index(s, 'x').map(Signal::State))
        .ok_or_else(|| format!("expected y<i> or x<i>, got `{s}`"))
}

fn parse_setpoint(s: &str) -> Result<SetpointSource, String> {
    if let Some(i) = parse_index(s, 'r') {
        return Ok(SetpointSource::Schedule(i));
    }
    if let Some(name) = s.strip_prefix("pid.") {
        return Ok(SetpointSource::Cascade(name.to_string()));
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(SetpointSource::Constant)
        .ok_or_else(|| format!("expected r<i>, pid.<name> or a number, got `{s}`"))
}

impl RunSpec {
    pub fn parse_file(path: &Path) -> Result<Self, ParseError> {
        let text = std::fs::read_to_string(path).map_err(|e| ParseError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ParseError> {
        let sections = tokenize(text)?;
        let empty: &[Entry] = &[];
        let fields = |name: &'static str| Fields {
            name,
            entries: sections.iter().find(|s| s.name == name).map_or(empty, |s| &s.entries[..]),
        };

        let plant_f = fields("plant");
        let name_entry = plant_f.required("name")?;
        let entry = plants::lookup(&name_entry.value).ok_or_else(|| {
            Fields::err(
                name_entry,
                format!("unknown plant (available: {})", plants::names().collect::<Vec<_>>().join(", ")),
            )
        })?;
        let model = (entry.build)();
        let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());

        // [mpc]
        let m = fields("mpc");
        let horizon = m.parse::<usize>("horizon", "a positive integer")?.unwrap_or(DEFAULT_HORIZON);
        if horizon == 0 {
            return Err(Fields::err(m.get("horizon").unwrap(), "horizon must be at least 1"));
        }
        let ts = m.float("ts")?.unwrap_or(DEFAULT_TS);
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Fields::err(m.get("ts").unwrap(), "sampling time must be positive"));
        }
        let w_y = m.floats("w_y", n_y)?.unwrap_or_else(|| vec![1.0; n_y]);
        let w_du = m.floats("w_du", n_u)?.unwrap_or_else(|| vec![1.0; n_u]);
        let mut cfg = MpcConfig::new(horizon, ts, &w_y, &w_du);
        for (key, len, slot) in [
            ("du_min", n_u, &mut cfg.du_min),
            ("du_max", n_u, &mut cfg.du_max),
            ("u_min", n_u, &mut cfg.u_min),
            ("u_max", n_u, &mut cfg.u_max),
            ("y_min", n_y, &mut cfg.y_min),
            ("y_max", n_y, &mut cfg.y_max),
        ] {
            if let Some(v) = m.floats(key, len)? {
                *slot = v;
            }
        }
        for (lo, hi) in [("du_min", "du_max"), ("u_min", "u_max"), ("y_min", "y_max")] {
            let (l, h) = match lo {
                "du_min" => (&cfg.du_min, &cfg.du_max),
                "u_min" => (&cfg.u_min, &cfg.u_max),
                _ => (&cfg.y_min, &cfg.y_max),
            };
            if l.iter().zip(h).any(|(a, b)| a > b) {
                let e = m.get(hi).or_else(|| m.get(lo)).unwrap();
                return Err(Fields::err(e, format!("{lo} must not exceed {hi}")));
            }
        }
        for (key, w) in [("w_y", &w_y), ("w_du", &w_du)] {
            let strict = key == "w_du";
            if w.iter().any(|v| !v.is_finite() || *v < 0.0 || (strict && *v == 0.0)) {
                let e = m.get(key).unwrap();
                let need = if strict { "positive" } else { "nonnegative" };
                return Err(Fields::err(e, format!("weights must be finite and {need}")));
            }
        }
        let mut mpc = MpcSetup::new(cfg);
        if let Some(s) = m.choice::<SolverChoice>("solver")? {
            mpc.solver = s;
        }
        for (key, slot) in [("tol", &mut mpc.tol), ("fd_step", &mut mpc.fd_step)] {
            if let Some(v) = m.float(key)? {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Fields::err(m.get(key).unwrap(), "must be positive"));
                }
                *slot = v;
            }
        }
        if let Some(v) = m.parse::<usize>("max_iter", "a positive integer")? {
            if v == 0 {
                return Err(Fields::err(m.get("max_iter").unwrap(), "must be at least 1"));
            }
            mpc.max_iter = v;
        }

        // [scenario]
        let s = fields("scenario");
        let (x_nom, u_nom) = (entry.nominal)();
        let u0 = s.floats("u0", n_u)?.unwrap_or(u_nom);
        let x_given = s.floats("x0", n_x)?;
        let equilibrate = s.flag("equilibrate")?.unwrap_or(false);
        let mut x0 = x_given.unwrap_or(x_nom);
        if equilibrate {
            x0 = find_equilibrium(&model, &x0, &u0, 1e-12).map_err(|e| {
                let entry = s.get("equilibrate").unwrap();
                Fields::err(entry, format!("no equilibrium found near x0 at u0: {e}"))
            })?;
        }
        let model_err = |key: &str, e: String| match s.get(key) {
            Some(entry) => Fields::err(entry, e),
            None => ParseError::Syntax {
                line: 0,
                message: format!("{key}: {e}"),
            },
        };
        let y_init = model.output(&x0, &u0).map_err(|e| model_err("x0", e.to_string()))?;
        let schedule = match s.get("schedule") {
            Some(e) => parse_schedule(&e.value, n_y).map_err(|m| Fields::err(e, m))?,
            None => vec![(0.0, y_init.clone())],
        };
        let duration = s.float("duration")?.unwrap_or(DEFAULT_DURATION);
        let scheme = s.choice::<Scheme>("scheme")?.unwrap_or(Scheme::SlMpc);
        let mut scenario = Scenario::new(duration, schedule, scheme, x0, u0);
        if let Some(v) = s.parse::<usize>("relin_period", "a nonnegative integer")? {
            scenario.relin_period = v;
        }
        if let Some(v) = s.parse::<usize>("substeps", "a positive integer")? {
            scenario.substeps = v;
        }
        scenario.record_timing = s.flag("timing")?.unwrap_or(false);
        let noise_std = s.float("noise_std")?.unwrap_or(0.0);
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Fields::err(s.get("noise_std").unwrap(), "must be finite and nonnegative"));
        }
        mpc.cfg.r = scenario.schedule[0].1.clone();

        // [run]
        let r = fields("run");
        let out_dir = PathBuf::from(r.get("out").map_or(".", |e| e.value.as_str()));
        let seed = r.parse::<u64>("seed", "a nonnegative integer")?.unwrap_or(0);
        let plot = r.flag("plot")?.unwrap_or(false);

        // [pid.*]
        let mut pid = Vec::new();
        for sec in sections.iter().filter(|s| s.name.starts_with("pid.")) {
            let f = Fields {
                name: &sec.name,
                entries: &sec.entries,
            };
            let name = sec.name["pid.".len()..].to_string();
            let req_float = |key: &str| -> Result<f64, ParseError> {
                f.required(key)?;
                f.float(key).map(|v| v.unwrap())
            };
            let gain = req_float("gain")?;
            let integral_time = req_float("integral_time")?;
            let action: Action = f.required("action").and_then(|_| f.choice("action")).map(|v| v.unwrap())?;
            let measure = {
                let e = f.required("measure")?;
                parse_signal(&e.value).map_err(|m| Fields::err(e, m))?
            };
            let setpoint = {
                let e = f.required("setpoint")?;
                parse_setpoint(&e.value).map_err(|m| Fields::err(e, m))?
            };
            let drives = match f.get("drives") {
                None => None,
                Some(e) if e.value == "none" => None,
                Some(e) => Some(
                    parse_index(&e.value, 'u').ok_or_else(|| Fields::err(e, format!("expected u<i> or none, got `{}`", e.value)))?,
                ),
            };
            let (default_min, default_max) = match drives {
                Some(j) if j < n_u => (mpc.cfg.u_min[j], mpc.cfg.u_max[j]),
                _ => (f64::NEG_INFINITY, f64::INFINITY),
            };
            let params = PidParams {
                gain,
                integral_time,
                action,
                out_min: f.float("out_min")?.unwrap_or(default_min),
                out_max: f.float("out_max")?.unwrap_or(default_max),
                bias: f.float("bias")?.unwrap_or(f64::NAN),
            };
            let probe = PidParams {
                bias: if params.bias.is_nan() { 0.0 } else { params.bias },
                ..params.clone()
            };
            probe.validate().map_err(|m| {
                let key = if m.contains("integral_time") {
                    "integral_time"
                } else if m.contains("bounds") {
                    "out_min"
                } else {
                    "gain"
                };
                match f.get(key).or_else(|| f.get("out_max")).or_else(|| f.get("bias")) {
                    Some(e) => Fields::err(e, m),
                    None => ParseError::Syntax { line: sec.line, message: m },
                }
            })?;
            let check_index = |key: &str, i: usize, n: usize| {
                if i >= n {
                    Err(Fields::err(f.get(key).unwrap(), format!("index {i} out of range (dimension {n})")))
                } else {
                    Ok(())
                }
            };
            match measure {
                Signal::Output(i) => check_index("measure", i, n_y)?,
                Signal::State(i) => check_index("measure", i, n_x)?,
            }
            if let SetpointSource::Schedule(i) = setpoint {
                check_index("setpoint", i, n_y)?;
            }
            if let Some(j) = drives {
                check_index("drives", j, n_u)?;
            }
            pid.push((
                PidLoop {
                    name,
                    params,
                    measure,
                    setpoint,
                    drives,
                },
                sec.line,
            ));
        }
        for (l, line) in &pid {
            if let SetpointSource::Cascade(src) = &l.setpoint {
                if !pid.iter().any(|(o, _)| &o.name == src) {
                    return Err(ParseError::Key {
                        line: *line,
                        key: "setpoint".into(),
                        message: format!("[pid.{}] cascades from unknown loop `{src}`", l.name),
                    });
                }
            }
        }
        // Bumpless default bias: the initial value of whatever the loop feeds.
        let initial = |sig: Signal| match sig {
            Signal::Output(i) => y_init[i],
            Signal::State(i) => scenario.x0[i],
        };
        let biases: Vec<f64> = pid
            .iter()
            .map(|(l, _)| {
                if !l.params.bias.is_nan() {
                    return l.params.bias;
                }
                if let Some(j) = l.drives {
                    return scenario.u0[j];
                }
                pid.iter()
                    .find(|(inner, _)| inner.setpoint == SetpointSource::Cascade(l.name.clone()))
                    .map_or(0.0, |(inner, _)| initial(inner.measure))
            })
            .collect();
        let pid: Vec<PidLoop> = pid
            .into_iter()
            .zip(biases)
            .map(|((mut l, _), b)| {
                l.params.bias = b;
                l
            })
            .collect();

        scenario.noise = (noise_std > 0.0).then_some(Noise { std_dev: noise_std, seed });
        Ok(Self {
            plant: entry.name.to_string(),
            mpc,
            scenario,
            equilibrate,
            noise_std,
            pid,
            out_dir,
            seed,
            plot,
        })
    }

    /// Applies a new noise seed, keeping the scenario consistent.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.scenario.noise = (self.noise_std > 0.0).then_some(Noise {
            std_dev: self.noise_std,
            seed,
        });
    }

    /// Serializes every field, defaults included.
    pub fn emit(&self) -> String {
        fn list(v: &[f64]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        let cfg = &self.mpc.cfg;
        let sc = &self.scenario;
        let mut s = String::new();
        let _ = writeln!(s, "[plant]\nname = {}\n", self.plant);
        let _ = writeln!(s, "[mpc]");
        let _ = writeln!(s, "horizon = {}", cfg.horizon);
        let _ = writeln!(s, "ts = {}", cfg.ts);
        let _ = writeln!(s, "w_y = {}", list(&cfg.w_y.diagonal()));
        let _ = writeln!(s, "w_du = {}", list(&cfg.w_du.diagonal()));
        for (k, v) in [
            ("du_min", &cfg.du_min),
            ("du_max", &cfg.du_max),
            ("u_min", &cfg.u_min),
            ("u_max", &cfg.u_max),
            ("y_min", &cfg.y_min),
            ("y_max", &cfg.y_max),
        ] {
            let _ = writeln!(s, "{k} = {}", list(v));
        }
        let _ = writeln!(s, "solver = {}", self.mpc.solver);
        let _ = writeln!(s, "tol = {}", self.mpc.tol);
        let _ = writeln!(s, "max_iter = {}", self.mpc.max_iter);
        let _ = writeln!(s, "fd_step = {}\n", self.mpc.fd_step);

        let schedule = sc
            .schedule
            .iter()
            .map(|(t, r)| format!("{t}: {}", list(r)))
            .collect::<Vec<_>>()
            .join("; ");
        let _ = writeln!(s, "[scenario]");
        let _ = writeln!(s, "scheme = {}", sc.scheme);
        let _ = writeln!(s, "duration = {}", sc.duration);
        let _ = writeln!(s, "schedule = {schedule}");
        let _ = writeln!(s, "relin_period = {}", sc.relin_period);
        let _ = writeln!(s, "x0 = {}", list(&sc.x0));
        let _ = writeln!(s, "u0 = {}", list(&sc.u0));
        let _ = writeln!(s, "equilibrate = {}", self.equilibrate);
        let _ = writeln!(s, "substeps = {}", sc.substeps);
        let _ = writeln!(s, "noise_std = {}", self.noise_std);
        let _ = writeln!(s, "timing = {}\n", sc.record_timing);

        for l in &self.pid {
            let p = &l.params;
            let _ = writeln!(s, "[pid.{}]", l.name);
            let _ = writeln!(s, "gain = {}", p.gain);
            let _ = writeln!(s, "integral_time = {}", p.integral_time);
            let _ = writeln!(s, "action = {}", p.action);
            let _ = writeln!(s, "out_min = {}", p.out_min);
            let _ = writeln!(s, "out_max = {}", p.out_max);
            let _ = writeln!(s, "bias = {}", p.bias);
            let measure = match l.measure {
                Signal::Output(i) => format!("y{i}"),
                Signal::State(i) => format!("x{i}"),
            };
            let setpoint = match &l.setpoint {
                SetpointSource::Constant(v) => v.to_string(),
                SetpointSource::Schedule(i) => format!("r{i}"),
                SetpointSource::Cascade(n) => format!("pid.{n}"),
            };
            let _ = writeln!(s, "measure = {measure}");
            let _ = writeln!(s, "setpoint = {setpoint}");
            let drives = l.drives.map_or("none".to_string(), |j| format!("u{j}"));
            let _ = writeln!(s, "drives = {drives}\n");
        }

        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "plot = {}", self.plot);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let spec = RunSpec::parse_str("[plant]\nname = \"cstr\"\n[mpc]\nhorizon = 10\n").unwrap();
        assert_eq!(spec.mpc.cfg.horizon, 10);
        assert_eq!(spec.mpc.cfg.ts, 0.02);
        assert_eq!(spec.mpc.solver, SolverChoice::CdalSparse);
        assert_eq!(spec.scenario.scheme, Scheme::SlMpc);
        assert_eq!(spec.scenario.schedule.len(), 1);
        assert!(spec.pid.is_empty());
        let echoed = spec.emit();
        assert!(echoed.contains("ts = 0.02"));
        assert!(echoed.contains("solver = cdal-sparse"));
    }

    #[test]
    fn wrong_weight_length_names_key_and_line() {
        let err = RunSpec::parse_str("[plant]\nname = cstr\n[mpc]\nw_y = 1, 2\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::Key {
                line: 4,
                key: "w_y".into(),
                message: "expected 1 value(s), got 2".into()
            }
        );
        assert!(err.to_string().contains("w_y"));
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = RunSpec::parse_str("[plant]\nname = cstr\n[mpc]\nhorizn = 3\n").unwrap_err();
        assert!(matches!(err, ParseError::Key { line: 4, ref key, .. } if key == "horizn"));
        let err = RunSpec::parse_str("[mpc]\nhorizon = 3\n").unwrap_err();
        assert!(matches!(err, ParseError::Missing { ref key, .. } if key == "name"));
        let err = RunSpec::parse_str("[plant]\nname = cstr\n[pid.a]\ngain = 1\n").unwrap_err();
        assert!(matches!(err, ParseError::Missing { ref key, .. } if key == "integral_time"));
    }

    #[test]
    fn cascade_bias_defaults_to_inner_measurement() {
        let text = "[plant]\nname = cstr\n\
            [pid.outer]\ngain = 1\nintegral_time = 1\naction = direct\nmeasure = y0\nsetpoint = r0\n\
            [pid.inner]\ngain = 1\nintegral_time = 1\naction = reverse\nmeasure = x1\nsetpoint = pid.outer\ndrives = u0\n";
        let spec = RunSpec::parse_str(text).unwrap();
        assert_eq!(spec.pid[0].params.bias, spec.scenario.x0[1]);
        assert_eq!(spec.pid[1].params.bias, spec.scenario.u0[0]);
        assert_eq!(spec.pid[1].params.out_min, f64::NEG_INFINITY);
        let again = RunSpec::parse_str(&spec.emit()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn unknown_cascade_source_is_rejected() {
        let text = "[plant]\nname = cstr\n[pid.a]\ngain = 1\nintegral_time = 1\naction = direct\nmeasure = y0\nsetpoint = pid.b\n";
        assert!(matches!(RunSpec::parse_str(text), Err(ParseError::Key { ref key, .. }) if key == "setpoint"));
    }
}
