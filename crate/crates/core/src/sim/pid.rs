use std::fmt;
use std::str::FromStr;

/// Controller action. With `err = setpoint − measurement`, a reverse-acting
/// loop raises its output when the error grows; a direct-acting loop
/// lowers it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Direct,
    Reverse,
}

impl Action {
    pub fn sign(self) -> f64 {
        match self {
            Action::Direct => -1.0,
            Action::Reverse => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Direct => "direct",
            Action::Reverse => "reverse",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Action::Direct),
            "reverse" => Ok(Action::Reverse),
            other => Err(format!("unknown action `{other}` (expected direct or reverse)")),
        }
    }
}

/// PI law `out = bias + sign·K·(err + I/Ti)`, clamped to
/// `[out_min, out_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PidParams {
    pub gain: f64,
    pub integral_time: f64,
    pub action: Action,
    pub out_min: f64,
    pub out_max: f64,
    pub bias: f64,
}

impl PidParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.integral_time > 0.0) || !self.integral_time.is_finite() {
            return Err(format!("integral_time must be positive, got {}", self.integral_time));
        }
        if !self.gain.is_finite() || !self.bias.is_finite() {
            return Err("gain and bias must be finite".into());
        }
        if self.out_min.is_nan() || self.out_max.is_nan() || self.out_min > self.out_max {
            return Err(format!("output bounds out of order: [{}, {}]", self.out_min, self.out_max));
        }
        Ok(())
    }
}

/// One PI update. The integral of the error is only advanced when doing
/// so does not push an already saturated output further past its bound.
pub fn step_pid(p: &PidParams, measurement: f64, setpoint: f64, integral: f64, dt: f64) -> (f64, f64) {
    let err = setpoint - measurement;
    let law = |acc: f64| p.bias + p.action.sign() * p.gain * (err + acc / p.integral_time);
    let candidate = integral + err * dt;
    let raw = law(candidate);
    let growth = p.action.sign() * p.gain * err;
    let winding = (raw > p.out_max && growth > 0.0) || (raw < p.out_min && growth < 0.0);
    let acc = if winding { integral } else { candidate };
    (law(acc).max(p.out_min).min(p.out_max), acc)
}
