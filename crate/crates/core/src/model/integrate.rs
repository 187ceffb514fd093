use super::{ModelError, PlantModel};

/// Piecewise-constant input schedule. Segment `k` holds `inputs[k]` from
/// `starts[k]` until the next start; the first segment begins at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputProfile {
    starts: Vec<f64>,
    inputs: Vec<Vec<f64>>,
}

impl InputProfile {
    pub fn constant(u: Vec<f64>) -> Self {
        Self {
            starts: vec![0.0],
            inputs: vec![u],
        }
    }

    pub fn new(segments: Vec<(f64, Vec<f64>)>) -> Result<Self, ModelError> {
        if segments.is_empty() || segments[0].0 != 0.0 {
            return Err(ModelError::InvalidArgument(
                "input profile must start with a segment at t = 0".into(),
            ));
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ModelError::InvalidArgument(
                "input segment start times must be strictly increasing".into(),
            ));
        }
        let (starts, inputs) = segments.into_iter().unzip();
        Ok(Self { starts, inputs })
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let k = self.starts.partition_point(|&s| s <= t).saturating_sub(1);
        &self.inputs[k]
    }

    pub fn segment_starts(&self) -> &[f64] {
        &self.starts
    }
}

/// Samples of an integrated trajectory, one entry per multiple of `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial sample")
    }
}

/// One classic fourth-order Runge–Kutta step with `u` held constant.
pub fn rk4_step(model: &PlantModel, x: &[f64], u: &[f64], h: f64) -> Result<Vec<f64>, ModelError> {
    let k1 = model.dynamics(x, u)?;
    let x2: Vec<f64> = x.iter().zip(&k1).map(|(xi, k)| xi + 0.5 * h * k).collect();
    let k2 = model.dynamics(&x2, u)?;
    let x3: Vec<f64> = x.iter().zip(&k2).map(|(xi, k)| xi + 0.5 * h * k).collect();
    let k3 = model.dynamics(&x3, u)?;
    let x4: Vec<f64> = x.iter().zip(&k3).map(|(xi, k)| xi + h * k).collect();
    let k4 = model.dynamics(&x4, u)?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn is_multiple(value: f64, step: f64) -> bool {
    let q = value / step;
    (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0)
}

/// Integrates the plant with fixed-step RK4 and samples every `dt`.
pub fn integrate_plant(
    model: &PlantModel,
    x0: &[f64],
    profile: &InputProfile,
    t_span: f64,
    dt: f64,
) -> Result<Trajectory, ModelError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::InvalidArgument(format!("step dt must be positive, got {dt}")));
    }
    if !(t_span >= 0.0) || !is_multiple(t_span, dt) {
        return Err(ModelError::InvalidArgument(format!(
            "t_span {t_span} is not a nonnegative multiple of dt {dt}"
        )));
    }
    if let Some(s) = profile.segment_starts().iter().find(|&&s| !is_multiple(s, dt)) {
        return Err(ModelError::InvalidArgument(format!(
            "input segment boundary {s} is not a multiple of dt {dt}"
        )));
    }
    if x0.len() != model.n_x() {
        return Err(ModelError::Dimension {
            what: "initial state",
            expected: model.n_x(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Divergence { time: 0.0 });
    }

    let steps = (t_span / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    for k in 0..=steps {
        let t = k as f64 * dt;
        // Sample midpoint lookup keeps boundary roundoff from picking the wrong segment.
        let u = profile.at(t + 0.5 * dt);
        times.push(t);
        outputs.push(model.output(&x, u)?);
        states.push(x.clone());
        if k == steps {
            break;
        }
        x = rk4_step(model, &x, u, dt)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Divergence { time: (k + 1) as f64 * dt });
        }
    }
    Ok(Trajectory { times, states, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> PlantModel {
        PlantModel::new("decay", 1, 0, 1, |x, _| vec![-x[0]], |x, _| vec![x[0]])
    }

    #[test]
    fn zero_dynamics_hold_state() {
        let p = PlantModel::new("still", 1, 1, 1, |_, _| vec![0.0], |x, _| vec![x[0]]);
        let tr = integrate_plant(&p, &[1.0], &InputProfile::constant(vec![3.0]), 1.0, 0.1).unwrap();
        assert_eq!(tr.states.len(), 11);
        assert!(tr.states.iter().all(|s| s == &vec![1.0]));
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let tr = integrate_plant(&decay(), &[1.0], &InputProfile::constant(vec![]), 1.0, 0.001).unwrap();
        let exact = (-1.0f64).exp();
        assert!((tr.final_state()[0] - exact).abs() < 1e-9);
        assert!((exact - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn ramp_under_constant_input() {
        let p = PlantModel::new("int", 1, 1, 1, |_, u| vec![u[0]], |x, _| vec![x[0]]);
        let tr = integrate_plant(&p, &[0.0], &InputProfile::constant(vec![2.0]), 0.5, 0.01).unwrap();
        assert!((tr.final_state()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn piecewise_profile_switches_at_boundaries() {
        let p = PlantModel::new("int", 1, 1, 1, |_, u| vec![u[0]], |x, _| vec![x[0]]);
        let prof = InputProfile::new(vec![(0.0, vec![1.0]), (0.3, vec![-1.0])]).unwrap();
        let tr = integrate_plant(&p, &[0.0], &prof, 0.5, 0.1).unwrap();
        assert!((tr.final_state()[0] - 0.1).abs() < 1e-12);
        assert!(integrate_plant(&p, &[0.0], &prof, 0.5, 0.2).is_err());
    }

    #[test]
    fn divergence_reports_time() {
        let p = PlantModel::new("blow", 1, 0, 1, |x, _| vec![x[0] * x[0]], |x, _| vec![x[0]]);
        match integrate_plant(&p, &[1.0], &InputProfile::constant(vec![]), 2.0, 0.1) {
            Err(ModelError::Divergence { time }) => assert!(time > 0.9 && time <= 2.0, "{time}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
