//! Fixed-step RK4 integration and assembly of the `X`, `U`, `Xdot` matrices.

mod schedule;
mod systems;
mod trajectory;

pub use schedule::{
    FaultSpec, InputSource, PiecewiseConstant, ReferenceSchedule, Signal, SWITCH_TOLERANCE,
};
pub use systems::{
    ControlledPlant, ControllerSetup, InputProvider, Observation, OpenLoopPlant, OpenLoopReplay,
    PhysicalPlant, SampledInputs, ScheduleInputs, SimulatedSystem,
};
pub use trajectory::Trajectory;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pv_plant::{idx, ActivePowerMode, PlantParameters, Schema};

/// How the `Xdot` matrix is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Right-hand side evaluated at every sample.
    #[default]
    Exact,
    /// Finite differences of the sampled states.
    Numeric,
}

/// One classical RK4 step of `xdot = f(t, x)`.
pub fn rk4_step<F>(f: &F, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { (0..n).map(|i| x[i] + a * k[i]).collect() };
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k2))?;
    let k4 = f(t + dt, &axpy(dt, &k3))?;
    Ok((0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `steps` RK4 steps; returns `steps + 1` states including `x0`.
pub fn rk4<F>(f: F, x0: &[f64], t0: f64, dt: f64, steps: usize) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.to_vec());
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let next = rk4_step(&f, t, &out[k], dt).map_err(|e| e.at(t))?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: t + dt });
        }
        out.push(next);
    }
    Ok(out)
}

fn sample_count(dt: f64, duration: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(duration >= dt) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} must be at least dt {dt}"
        )));
    }
    Ok((duration / dt).round() as usize + 1)
}

/// Integrates any [`SimulatedSystem`] from `state0` and records a trajectory
/// sampled every `dt`.
pub fn integrate_system<S: SimulatedSystem + ?Sized>(
    sys: &S,
    state0: &[f64],
    t0: f64,
    dt: f64,
    duration: f64,
    mode: DerivativeMode,
) -> Result<Trajectory> {
    if state0.len() != sys.dim() {
        return Err(Error::SchemaMismatch(format!(
            "initial state has {} entries, system needs {}",
            state0.len(),
            sys.dim()
        )));
    }
    if state0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { time: t0 });
    }
    let n_samples = sample_count(dt, duration)?;
    let schema = sys.schema();
    let (n, m) = (schema.n_states(), schema.n_inputs());
    let mut times = Vec::with_capacity(n_samples);
    let mut xs = Vec::with_capacity(n_samples * n);
    let mut us = Vec::with_capacity(n_samples * m);
    let mut ds = Vec::with_capacity(n_samples * n);

    let f = |t: f64, s: &[f64]| sys.derivative(t, s);
    let mut state = state0.to_vec();
    for k in 0..n_samples {
        let t = t0 + k as f64 * dt;
        let obs = sys.observe(t, &state).map_err(|e| e.at(t))?;
        times.push(t);
        xs.extend_from_slice(&obs.x);
        us.extend_from_slice(&obs.u);
        ds.extend_from_slice(&obs.xdot);
        if k + 1 == n_samples {
            break;
        }
        state = rk4_step(&f, t, &state, dt).map_err(|e| e.at(t))?;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: t + dt });
        }
    }
    let mut traj = Trajectory::from_rows(schema, dt, times, &xs, &us, &ds)?;
    if mode == DerivativeMode::Numeric {
        traj.xdot = numeric_derivatives(&traj.x, dt)?;
    }
    Ok(traj)
}

/// Central differences in the interior, second-order one-sided at both ends.
pub fn numeric_derivatives(x: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let mut d = DMatrix::zeros(n, x.ncols());
    for j in 0..x.ncols() {
        d[(0, j)] = (-3.0 * x[(0, j)] + 4.0 * x[(1, j)] - x[(2, j)]) / (2.0 * dt);
        for k in 1..n - 1 {
            d[(k, j)] = (x[(k + 1, j)] - x[(k - 1, j)]) / (2.0 * dt);
        }
        d[(n - 1, j)] =
            (3.0 * x[(n - 1, j)] - 4.0 * x[(n - 2, j)] + x[(n - 3, j)]) / (2.0 * dt);
    }
    Ok(d)
}

/// Contiguous split: the first `floor(ratio * N)` samples train.
pub fn split_train_test(traj: &Trajectory, ratio: f64) -> Result<(Trajectory, Trajectory)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n_train = (ratio * traj.len() as f64).floor() as usize;
    Ok((traj.slice(0, n_train), traj.slice(n_train, traj.len())))
}

/// A complete physical simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub schema: Schema,
    pub params: PlantParameters,
    /// Model state at `t0`.
    pub x0: Vec<f64>,
    /// Controller integrator states for open-loop schemas; empty means zero.
    pub integrators: Vec<f64>,
    pub schedule: ReferenceSchedule,
    pub fault: Option<FaultSpec>,
    pub t0: f64,
    pub dt: f64,
    pub duration: f64,
    pub derivatives: DerivativeMode,
    pub power_mode: ActivePowerMode,
}

impl Simulation {
    pub fn new(schema: Schema, params: PlantParameters, x0: Vec<f64>, schedule: ReferenceSchedule) -> Self {
        Self {
            schema,
            params,
            x0,
            integrators: Vec::new(),
            schedule,
            fault: None,
            t0: 0.0,
            dt: 1e-4,
            duration: 5.0,
            derivatives: DerivativeMode::Exact,
            power_mode: ActivePowerMode::DcLink,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.schema.check_state(&self.x0)?;
        if !(self.x0[idx::V_DC] > 0.0) {
            return Err(Error::SingularState(format!(
                "initial v_dc must be positive, got {}",
                self.x0[idx::V_DC]
            )));
        }
        self.schedule.validate(self.t0)?;
        if let Some(f) = &self.fault {
            f.validate(self.t0, self.duration)?;
        }
        sample_count(self.dt, self.duration)?;
        Ok(())
    }

    /// The system and its full initial state (model state plus hidden
    /// controller integrators).
    pub fn system(&self) -> Result<(Box<dyn SimulatedSystem>, Vec<f64>)> {
        self.validate()?;
        let inputs = InputSource::new(self.schedule.clone(), self.fault);
        let plant = PhysicalPlant::new(self.schema, self.params)?;
        match self.schema {
            Schema::ClosedLoop => Ok((
                Box::new(OpenLoopReplay {
                    plant,
                    inputs: ScheduleInputs::closed_loop(inputs)?,
                }),
                self.x0.clone(),
            )),
            Schema::SingleStage | Schema::TwoStage => {
                let setup = ControllerSetup::from_plant(self.schema, &self.params, self.power_mode);
                let sys = ControlledPlant::new(plant, setup, inputs, self.params.omega0)?;
                let mut s0 = self.x0.clone();
                let ni = sys.n_integrators();
                if self.integrators.is_empty() {
                    s0.extend(std::iter::repeat(0.0).take(ni));
                } else if self.integrators.len() == ni {
                    s0.extend_from_slice(&self.integrators);
                } else {
                    return Err(Error::SchemaMismatch(format!(
                        "{} controller integrators given, {ni} expected",
                        self.integrators.len()
                    )));
                }
                Ok((Box::new(sys), s0))
            }
        }
    }
}

/// Runs a physical scenario.
pub fn integrate(sim: &Simulation) -> Result<Trajectory> {
    let (sys, s0) = sim.system()?;
    integrate_system(sys.as_ref(), &s0, sim.t0, sim.dt, sim.duration, sim.derivatives)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Decay;

    impl SimulatedSystem for Decay {
        fn schema(&self) -> Schema {
            Schema::SingleStage
        }
        fn dim(&self) -> usize {
            7
        }
        fn derivative(&self, _t: f64, s: &[f64]) -> Result<Vec<f64>> {
            Ok(s.iter().map(|v| -v).collect())
        }
        fn observe(&self, t: f64, s: &[f64]) -> Result<Observation> {
            Ok(Observation {
                x: s.to_vec(),
                u: vec![0.0; 6],
                xdot: self.derivative(t, s)?,
            })
        }
    }

    struct Frozen;

    impl SimulatedSystem for Frozen {
        fn schema(&self) -> Schema {
            Schema::SingleStage
        }
        fn dim(&self) -> usize {
            7
        }
        fn derivative(&self, _t: f64, s: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; s.len()])
        }
        fn observe(&self, _t: f64, s: &[f64]) -> Result<Observation> {
            Ok(Observation {
                x: s.to_vec(),
                u: vec![0.0; 6],
                xdot: vec![0.0; 7],
            })
        }
    }

    fn decay_error(dt: f64) -> f64 {
        let steps = (1.0 / dt).round() as usize;
        let xs = rk4(|_t, x: &[f64]| Ok(vec![-x[0]]), &[1.0], 0.0, dt, steps).unwrap();
        (xs[steps][0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        assert!(decay_error(1e-3) < 1e-9);
        let traj = integrate_system(&Decay, &[1.0; 7], 0.0, 1e-3, 1.0, DerivativeMode::Exact).unwrap();
        assert_eq!(traj.len(), 1001);
        assert!((traj.x[(1000, 0)] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let ratio = decay_error(0.02) / decay_error(0.01);
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_dynamics_hold_initial_state() {
        let x0 = [1.0, -2.0, 3.0, 0.5, 800.0, 1.0, 1000.0];
        let traj = integrate_system(&Frozen, &x0, 0.0, 1e-3, 1.0, DerivativeMode::Exact).unwrap();
        for k in 0..traj.len() {
            assert_eq!(traj.state_row(k), x0.to_vec());
        }
    }

    #[test]
    fn numeric_derivative_examples() {
        let n = 20;
        let x = DMatrix::from_fn(n, 2, |k, j| if j == 0 { 7.0 } else { 2.0 * 0.1 * k as f64 });
        let d = numeric_derivatives(&x, 0.1).unwrap();
        for k in 0..n {
            assert_eq!(d[(k, 0)], 0.0);
            assert!((d[(k, 1)] - 2.0).abs() < 1e-12);
        }
        // Quadratic is differentiated exactly everywhere, endpoints included.
        let q = DMatrix::from_fn(n, 1, |k, _| (0.1 * k as f64).powi(2));
        let dq = numeric_derivatives(&q, 0.1).unwrap();
        for k in 0..n {
            assert!((dq[(k, 0)] - 2.0 * 0.1 * k as f64).abs() < 1e-10);
        }
        let dt = 1e-3;
        let s = DMatrix::from_fn(2000, 1, |k, _| (k as f64 * dt).sin());
        let ds = numeric_derivatives(&s, dt).unwrap();
        let worst = (0..2000)
            .map(|k| (ds[(k, 0)] - (k as f64 * dt).cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "{worst}");
        assert!(matches!(
            numeric_derivatives(&DMatrix::zeros(2, 1), 0.1),
            Err(Error::TooShort { needed: 3, got: 2 })
        ));
    }

    fn ramp_trajectory(n: usize) -> Trajectory {
        let s = Schema::SingleStage;
        let times = (0..n).map(|k| k as f64 * 0.1).collect();
        let x = DMatrix::from_fn(n, s.n_states(), |k, j| (k * 10 + j) as f64);
        let u = DMatrix::from_fn(n, s.n_inputs(), |k, j| (k + j) as f64);
        let d = DMatrix::zeros(n, s.n_states());
        Trajectory::new(s, 0.1, times, x, u, d).unwrap()
    }

    #[test]
    fn split_sizes_and_round_trip() {
        let t = ramp_trajectory(100);
        let (a, b) = split_train_test(&t, 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        assert_eq!(a.concat(&b).unwrap(), t);
        let t = ramp_trajectory(11);
        let (a, b) = split_train_test(&t, 0.5).unwrap();
        assert_eq!((a.len(), b.len()), (5, 6));
        assert!(split_train_test(&t, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = ramp_trajectory(5);
        t.x[(2, 3)] = 0.1 + 0.2;
        t.xdot[(4, 0)] = -1.0 / 3.0;
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back.x, t.x);
        assert_eq!(back.u, t.u);
        assert_eq!(back.xdot, t.xdot);
        assert_eq!(back.times, t.times);
        assert!((back.dt - t.dt).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn integration_is_deterministic(x0 in prop::collection::vec(-5.0f64..5.0, 7)) {
            let a = integrate_system(&Decay, &x0, 0.0, 1e-2, 0.5, DerivativeMode::Exact).unwrap();
            let b = integrate_system(&Decay, &x0, 0.0, 1e-2, 0.5, DerivativeMode::Exact).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
