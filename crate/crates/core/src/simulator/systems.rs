//! Simulatable systems: plants driven by recorded or scheduled inputs, and
//! plants wrapped in the cascaded inverter controller.

use nalgebra::DMatrix;

use super::schedule::{InputSource, Signal};
use crate::error::{Error, Result};
use crate::pv_plant::{
    self, idx, ActivePowerMode, CascadeGains, ControlReferences, ControllerIntegrators,
    PiGains, PlantParameters, Schema,
};

/// Right-hand side `xdot = f(x, u)` of an open-loop model.
pub trait OpenLoopPlant: Send + Sync {
    fn schema(&self) -> Schema;
    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;
}

/// The physical models of [`crate::pv_plant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalPlant {
    pub schema: Schema,
    pub params: PlantParameters,
}

impl PhysicalPlant {
    pub fn new(schema: Schema, params: PlantParameters) -> Result<Self> {
        params.validate()?;
        Ok(Self { schema, params })
    }
}

impl OpenLoopPlant for PhysicalPlant {
    fn schema(&self) -> Schema {
        self.schema
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        match self.schema {
            Schema::SingleStage => pv_plant::single_stage_rhs(x, u, &self.params),
            Schema::TwoStage => pv_plant::two_stage_rhs(x, u, &self.params),
            Schema::ClosedLoop => pv_plant::closed_loop_rhs(x, u, &self.params),
        }
    }
}

/// One recorded sample: model states, model inputs, state derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub xdot: Vec<f64>,
}

/// A system that can be stepped by the integrator and sampled into a
/// [`super::Trajectory`]. Its internal state may be larger than the recorded
/// model state (controller integrators are hidden).
pub trait SimulatedSystem: Send + Sync {
    fn schema(&self) -> Schema;
    fn dim(&self) -> usize;
    fn derivative(&self, t: f64, state: &[f64]) -> Result<Vec<f64>>;
    fn observe(&self, t: f64, state: &[f64]) -> Result<Observation>;
}

/// Model input vector as a function of time.
pub trait InputProvider: Send + Sync {
    fn n_inputs(&self) -> usize;
    fn input_at(&self, t: f64) -> Vec<f64>;
}

/// Inputs replayed from a recorded input matrix.
///
/// Controller-generated columns are interpolated linearly between samples;
/// exogenous columns are held (they switch on sample instants).
#[derive(Debug, Clone)]
pub struct SampledInputs {
    t0: f64,
    dt: f64,
    u: DMatrix<f64>,
    continuous: Vec<bool>,
}

impl SampledInputs {
    pub fn new(t0: f64, dt: f64, u: DMatrix<f64>, continuous: Vec<bool>) -> Self {
        assert_eq!(u.ncols(), continuous.len());
        Self {
            t0,
            dt,
            u,
            continuous,
        }
    }

    pub fn from_trajectory(traj: &super::Trajectory) -> Self {
        let continuous = (0..traj.schema.n_inputs())
            .map(|j| traj.schema.input_is_continuous(j))
            .collect();
        Self::new(traj.start_time(), traj.dt, traj.u.clone(), continuous)
    }
}

impl InputProvider for SampledInputs {
    fn n_inputs(&self) -> usize {
        self.u.ncols()
    }

    fn input_at(&self, t: f64) -> Vec<f64> {
        let last = self.u.nrows() - 1;
        let tau = ((t - self.t0) / self.dt).max(0.0);
        let k = ((tau + 1e-6).floor() as usize).min(last);
        let frac = (tau - k as f64).clamp(0.0, 1.0);
        (0..self.u.ncols())
            .map(|j| {
                let a = self.u[(k, j)];
                if self.continuous[j] && k < last && frac > 0.0 {
                    a + frac * (self.u[(k + 1, j)] - a)
                } else {
                    a
                }
            })
            .collect()
    }
}

/// `U3` inputs of the closed-loop model read from a schedule.
#[derive(Debug, Clone)]
pub struct ScheduleInputs {
    source: InputSource,
}

impl ScheduleInputs {
    pub fn closed_loop(source: InputSource) -> Result<Self> {
        source.require(&[Signal::VDcref, Signal::VGd, Signal::IPv])?;
        Ok(Self { source })
    }
}

impl InputProvider for ScheduleInputs {
    fn n_inputs(&self) -> usize {
        Schema::ClosedLoop.n_inputs()
    }

    fn input_at(&self, t: f64) -> Vec<f64> {
        let s = &self.source;
        vec![
            s.value_or(Signal::VDcref, t, 0.0),
            s.value_or(Signal::IQref, t, 0.0),
            s.value_or(Signal::VGd, t, 0.0),
            s.value_or(Signal::VGq, t, 0.0),
            s.value_or(Signal::IPv, t, 0.0),
        ]
    }
}

/// A plant driven directly by an input provider.
pub struct OpenLoopReplay<P, I> {
    pub plant: P,
    pub inputs: I,
}

impl<P: OpenLoopPlant, I: InputProvider> SimulatedSystem for OpenLoopReplay<P, I> {
    fn schema(&self) -> Schema {
        self.plant.schema()
    }

    fn dim(&self) -> usize {
        self.plant.schema().n_states()
    }

    fn derivative(&self, t: f64, state: &[f64]) -> Result<Vec<f64>> {
        self.plant.rhs(state, &self.inputs.input_at(t))
    }

    fn observe(&self, t: f64, state: &[f64]) -> Result<Observation> {
        let u = self.inputs.input_at(t);
        let xdot = self.plant.rhs(state, &u)?;
        Ok(Observation {
            x: state.to_vec(),
            u,
            xdot,
        })
    }
}

/// Gains and mode of the inverter controller (plus the boost PV power loop
/// for two-stage plants).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSetup {
    pub cascade: CascadeGains,
    pub pv_power: Option<PiGains>,
    pub mode: ActivePowerMode,
}

impl ControllerSetup {
    /// Gains taken from a physical configuration.
    pub fn from_plant(schema: Schema, p: &PlantParameters, mode: ActivePowerMode) -> Self {
        Self {
            cascade: CascadeGains::from_plant(p),
            pv_power: (schema == Schema::TwoStage).then_some(PiGains {
                kp: p.k_p3,
                ki: p.k_i3,
            }),
            mode,
        }
    }
}

/// An open-loop plant (`X1` or `X2`) under the cascaded controller.
///
/// Internal state: plant states, then the DC-link, d-current and q-current
/// integrators, then (two-stage) the PV power integrator.
pub struct ControlledPlant<P> {
    plant: P,
    controller: ControllerSetup,
    inputs: InputSource,
    omega0: f64,
}

impl<P: OpenLoopPlant> ControlledPlant<P> {
    pub fn new(
        plant: P,
        controller: ControllerSetup,
        inputs: InputSource,
        omega0: f64,
    ) -> Result<Self> {
        let schema = plant.schema();
        let mut required = vec![Signal::VGd];
        match controller.mode {
            ActivePowerMode::DcLink => required.push(Signal::VDcref),
            ActivePowerMode::PowerReference => required.push(Signal::PRef),
        }
        match schema {
            Schema::SingleStage => required.push(Signal::IPv),
            Schema::TwoStage => {
                required.extend([Signal::VPv, Signal::PPvref]);
                if controller.pv_power.is_none() {
                    return Err(Error::MissingGain("PV power loop".into()));
                }
            }
            Schema::ClosedLoop => {
                return Err(Error::SchemaMismatch(
                    "the closed-loop model already contains its controllers".into(),
                ))
            }
        }
        inputs.require(&required)?;
        Ok(Self {
            plant,
            controller,
            inputs,
            omega0,
        })
    }

    pub fn plant(&self) -> &P {
        &self.plant
    }

    pub fn n_integrators(&self) -> usize {
        match self.plant.schema() {
            Schema::TwoStage => 4,
            _ => 3,
        }
    }

    /// Returns (model inputs, plant derivative, integrator rates).
    fn evaluate(&self, t: f64, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let schema = self.plant.schema();
        let n = schema.n_states();
        let (x, integ) = state.split_at(n);
        let src = &self.inputs;
        let omega = src.value_or(Signal::Omega0, t, self.omega0);
        let refs = ControlReferences {
            v_dcref: src.value_or(Signal::VDcref, t, 0.0),
            p_ref: src.value_or(Signal::PRef, t, 0.0),
            q_ref: src.value_or(Signal::QRef, t, 0.0),
            omega,
            mode: self.controller.mode,
        };
        let integrators = ControllerIntegrators {
            dc_link: integ[0],
            d_current: integ[1],
            q_current: integ[2],
        };
        let out = pv_plant::controller_outputs(x, &refs, &self.controller.cascade, &integrators)?;
        let v_gd = src.value_or(Signal::VGd, t, 0.0);
        let v_gq = src.value_or(Signal::VGq, t, 0.0);
        let mut rates = vec![out.rates.dc_link, out.rates.d_current, out.rates.q_current];

        let u = match schema {
            Schema::SingleStage => {
                vec![out.v_cd, out.v_cq, v_gd, v_gq, omega, src.value_or(Signal::IPv, t, 0.0)]
            }
            Schema::TwoStage => {
                let v_pv = src.value_or(Signal::VPv, t, 0.0);
                let p_pvref = src.value_or(Signal::PPvref, t, 0.0);
                let gains = self
                    .controller
                    .pv_power
                    .ok_or_else(|| Error::MissingGain("PV power loop".into()))?;
                let (d_ref, rate) =
                    pv_plant::pv_power_controller(x[idx::I_PV], v_pv, p_pvref, &gains, integ[3])?;
                rates.push(rate);
                vec![out.v_cd, out.v_cq, v_gd, v_gq, omega, v_pv, d_ref]
            }
            Schema::ClosedLoop => unreachable!("rejected in ControlledPlant::new"),
        };
        let xdot = self.plant.rhs(x, &u)?;
        Ok((u, xdot, rates))
    }
}

impl<P: OpenLoopPlant> SimulatedSystem for ControlledPlant<P> {
    fn schema(&self) -> Schema {
        self.plant.schema()
    }

    fn dim(&self) -> usize {
        self.plant.schema().n_states() + self.n_integrators()
    }

    fn derivative(&self, t: f64, state: &[f64]) -> Result<Vec<f64>> {
        let (_, mut xdot, rates) = self.evaluate(t, state)?;
        xdot.extend(rates);
        Ok(xdot)
    }

    fn observe(&self, t: f64, state: &[f64]) -> Result<Observation> {
        let (u, xdot, _) = self.evaluate(t, state)?;
        let n = self.plant.schema().n_states();
        Ok(Observation {
            x: state[..n].to_vec(),
            u,
            xdot,
        })
    }
}
