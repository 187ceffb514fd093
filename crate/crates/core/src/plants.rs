//! Benchmark plants and the name → constructor registry used by run specs.

use std::sync::Arc;

use crate::linalg::{norm_inf, solve, Matrix};
use crate::model::{linearize, AnalyticJacobians, ModelError, OperatingPoint, PlantModel, DEFAULT_FD_STEP};

/// Exothermic CSTR parameters (minutes and
/// Kelvin). `C_A = 0.5 mol/L`, `T = 350 K` at `T_c = 300 K` is within
/// 1e-2 of equilibrium; the registry refines it with Newton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CstrParams {
    /// Feed flow rate, L/min.
    pub q: f64,
    /// Reactor volume, L.
    pub v: f64,
    /// Density, g/L.
    pub rho: f64,
    /// Heat capacity, J/(g K).
    pub cp: f64,
    /// Heat of reaction, J/mol.
    pub dh: f64,
    /// Activation temperature E/R, K.
    pub e_over_r: f64,
    /// Pre-exponential factor, 1/min.
    pub k0: f64,
    /// Heat-transfer coefficient times area, J/(min K).
    pub ua: f64,
    /// Feed concentration, mol/L.
    pub caf: f64,
    /// Feed temperature, K.
    pub tf: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        Self {
            q: 100.0,
            v: 100.0,
            rho: 1000.0,
            cp: 0.239,
            dh: -5.0e4,
            e_over_r: 8750.0,
            k0: 7.2e10,
            ua: 5.0e4,
            caf: 1.0,
            tf: 350.0,
        }
    }
}

pub const CSTR_NOMINAL_STATE: [f64; 2] = [0.5, 350.0];
pub const CSTR_NOMINAL_INPUT: [f64; 1] = [300.0];

/// States `[C_A, T]`, input `[T_c]`, output `[C_A]`.
pub fn cstr(p: CstrParams) -> PlantModel {
    let rate = move |t: f64| p.k0 * (-p.e_over_r / t).exp();
    let beta = -p.dh / (p.rho * p.cp);
    let gamma = p.ua / (p.v * p.rho * p.cp);
    let flow = p.q / p.v;

    let f = move |x: &[f64], u: &[f64]| {
        let (ca, t, tc) = (x[0], x[1], u[0]);
        let k = rate(t);
        vec![
            flow * (p.caf - ca) - k * ca,
            flow * (p.tf - t) + beta * k * ca + gamma * (tc - t),
        ]
    };
    let g = |x: &[f64], _: &[f64]| vec![x[0]];

    let dfdx = move |x: &[f64], _: &[f64]| {
        let (ca, t) = (x[0], x[1]);
        let k = rate(t);
        let dk = k * p.e_over_r / (t * t);
        Matrix::from_rows(&[
            [-flow - k, -ca * dk],
            [beta * k, -flow + beta * ca * dk - gamma],
        ])
    };
    let dfdu = move |_: &[f64], _: &[f64]| Matrix::from_rows(&[[0.0], [gamma]]);
    let dgdx = |_: &[f64], _: &[f64]| Matrix::from_rows(&[[1.0, 0.0]]);
    let dgdu = |_: &[f64], _: &[f64]| Matrix::zeros(1, 1);

    PlantModel::new("cstr", 2, 1, 1, f, g).with_jacobians(AnalyticJacobians {
        dfdx: Some(Arc::new(dfdx)),
        dfdu: Some(Arc::new(dfdu)),
        dgdx: Some(Arc::new(dgdx)),
        dgdu: Some(Arc::new(dgdu)),
    })
}

/// Linearized AFTI-16 longitudinal dynamics: 4 states, 2 elevator/flaperon
/// inputs (deg), outputs attack angle and pitch angle. Open-loop unstable
/// and ill-conditioned.
pub fn afti16() -> PlantModel {
    let a = Matrix::from_rows(&[
        [-0.0151, -60.5651, 0.0, -32.174],
        [-0.0001, -1.3411, 0.9929, 0.0],
        [0.00018, 43.2541, -0.86939, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]);
    let b = Matrix::from_rows(&[
        [-2.516, -13.136],
        [-0.1689, -0.2514],
        [-17.251, -1.5766],
        [0.0, 0.0],
    ]);
    let c = Matrix::from_rows(&[[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
    PlantModel::affine("afti16", a, b, c, Matrix::zeros(2, 2), vec![0.0; 4])
}

/// Stable two-tank style linear plant with one input and one output.
pub fn linear_tank() -> PlantModel {
    let a = Matrix::from_rows(&[[-0.5, 0.0], [0.5, -0.25]]);
    let b = Matrix::from_rows(&[[1.0], [0.0]]);
    let c = Matrix::from_rows(&[[0.0, 1.0]]);
    PlantModel::affine("tank", a, b, c, Matrix::zeros(1, 1), vec![0.0, 0.0])
}

/// Newton iteration on `f(x, u) = 0` for fixed `u`, starting at `x_guess`.
pub fn find_equilibrium(model: &PlantModel, x_guess: &[f64], u: &[f64], tol: f64) -> Result<Vec<f64>, ModelError> {
    let mut x = x_guess.to_vec();
    for _ in 0..50 {
        let op = OperatingPoint::at(model, &x, u)?;
        if norm_inf(&op.xdot_c) <= tol {
            return Ok(x);
        }
        let ct = linearize(model, &op, DEFAULT_FD_STEP)?;
        let step = solve(&ct.a, &op.xdot_c)
            .ok_or_else(|| ModelError::InvalidArgument("singular Jacobian in equilibrium search".into()))?;
        for (xi, s) in x.iter_mut().zip(step) {
            *xi -= s;
        }
    }
    Err(ModelError::InvalidArgument("equilibrium search did not converge".into()))
}

/// Registry entry: constructor plus a nominal equilibrium to start from.
#[derive(Debug, Clone, Copy)]
pub struct PlantEntry {
    pub name: &'static str,
    pub build: fn() -> PlantModel,
    /// Nominal `(x, u)` with `f(x, u) = 0`.
    pub nominal: fn() -> (Vec<f64>, Vec<f64>),
}

fn cstr_nominal() -> (Vec<f64>, Vec<f64>) {
    let p = cstr(CstrParams::default());
    let x = find_equilibrium(&p, &CSTR_NOMINAL_STATE, &CSTR_NOMINAL_INPUT, 1e-13)
        .expect("CSTR nominal equilibrium");
    (x, CSTR_NOMINAL_INPUT.to_vec())
}

static REGISTRY: &[PlantEntry] = &[
    PlantEntry {
        name: "cstr",
        build: || cstr(CstrParams::default()),
        nominal: cstr_nominal,
    },
    PlantEntry {
        name: "afti16",
        build: afti16,
        nominal: || (vec![0.0; 4], vec![0.0; 2]),
    },
    PlantEntry {
        name: "tank",
        build: linear_tank,
        nominal: || (vec![0.0; 2], vec![0.0]),
    },
];

pub fn lookup(name: &str) -> Option<&'static PlantEntry> {
    REGISTRY.iter().find(|e| e.name == name)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|e| e.name)
}
