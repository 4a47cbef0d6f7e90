//! Current-loop design from identified coefficients and assembly of the
//! data-driven closed loop.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pv_plant::{ActivePowerMode, CascadeGains, PiGains, PlantParameters, Schema};
use crate::regression::{IdentifiedPlant, SparseModel};
use crate::simulator::{
    integrate_system, rk4, ControlledPlant, ControllerSetup, InputSource, Simulation, Trajectory,
};

/// Default current-loop time constant. It equals `L_c / K_p1` of the default
/// physical configuration, so both loops respond alike.
pub const DEFAULT_TAU_I: f64 = 5e-4;

/// PI gains of a current loop designed by pole-zero cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k_p: f64,
    pub k_i: f64,
    pub tau_i: f64,
    pub l_hat: f64,
    pub r_hat: f64,
}

impl ControllerGains {
    pub fn pi(&self) -> PiGains {
        PiGains {
            kp: self.k_p,
            ki: self.k_i,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "l_hat,{}", self.l_hat);
        let _ = writeln!(s, "r_hat,{}", self.r_hat);
        let _ = writeln!(s, "tau_i,{}", self.tau_i);
        let _ = writeln!(s, "k_p,{}", self.k_p);
        let _ = writeln!(s, "k_i,{}", self.k_i);
        s
    }
}

/// Filter inductance and resistance read off the identified `i_cd` equation.
pub fn extract_plant_params(model: &SparseModel) -> Result<(f64, f64)> {
    if model.schema == Schema::ClosedLoop {
        return Err(Error::SchemaMismatch(
            "plant parameters come from an open-loop model".into(),
        ));
    }
    let coef = |term: &str| -> Result<f64> {
        let c = model.coefficient("i_cd", term)?;
        if c == 0.0 {
            return Err(Error::MissingTerm {
                state: "i_cd".into(),
                term: term.into(),
            });
        }
        Ok(c)
    };
    let l_hat = 1.0 / coef("v_cd")?;
    let r_hat = -coef("i_cd")? * l_hat;
    Ok((l_hat, r_hat))
}

pub fn design_current_controller(l_hat: f64, r_hat: f64, tau_i: f64) -> Result<ControllerGains> {
    if !(tau_i > 0.0 && tau_i.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau_i must be positive, got {tau_i}")));
    }
    if !(l_hat > 0.0 && l_hat.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "identified inductance must be positive, got {l_hat}"
        )));
    }
    if !r_hat.is_finite() {
        return Err(Error::InvalidParameter("identified resistance is not finite".into()));
    }
    Ok(ControllerGains {
        k_p: l_hat / tau_i,
        k_i: r_hat / tau_i,
        tau_i,
        l_hat,
        r_hat,
    })
}

/// Unit reference step through the PI controller and the first-order
/// plant `1 / (L s + r)`. Returns `(t, i)` samples.
pub fn closed_loop_step_response(
    gains: &ControllerGains,
    l_hat: f64,
    r_hat: f64,
    dt: f64,
    duration: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(dt > 0.0 && duration > 0.0) {
        return Err(Error::InvalidArgument("dt and duration must be positive".into()));
    }
    let steps = (duration / dt).round() as usize;
    let (kp, ki) = (gains.k_p, gains.k_i);
    // state: [current, integrator]
    let rhs = |_t: f64, s: &[f64]| -> Result<Vec<f64>> {
        let e = 1.0 - s[0];
        let v = kp * e + s[1];
        Ok(vec![(v - r_hat * s[0]) / l_hat, ki * e])
    };
    let states = rk4(rhs, &[0.0, 0.0], 0.0, dt, steps)?;
    Ok(states
        .iter()
        .enumerate()
        .map(|(k, s)| (k as f64 * dt, s[0]))
        .collect())
}

/// Gains of every loop of the data-driven controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub current: Option<ControllerGains>,
    pub dc_link: Option<PiGains>,
    pub pv_power: Option<PiGains>,
    pub mode: ActivePowerMode,
}

impl GainSet {
    /// Designed current gains with the outer loops copied from the physical
    /// configuration.
    pub fn mirrored(schema: Schema, current: ControllerGains, p: &PlantParameters) -> Self {
        let phys = ControllerSetup::from_plant(schema, p, ActivePowerMode::DcLink);
        Self {
            current: Some(current),
            dc_link: Some(phys.cascade.dc_link),
            pv_power: phys.pv_power,
            mode: ActivePowerMode::DcLink,
        }
    }

    fn setup(&self, schema: Schema) -> Result<ControllerSetup> {
        let current = self
            .current
            .ok_or_else(|| Error::MissingGain("current loop".into()))?;
        let dc_link = match (self.mode, self.dc_link) {
            (ActivePowerMode::DcLink, None) => {
                return Err(Error::MissingGain("DC-link voltage loop".into()))
            }
            // unused in power-reference mode
            (_, g) => g.unwrap_or(PiGains { kp: 0.0, ki: 0.0 }),
        };
        if schema == Schema::TwoStage && self.pv_power.is_none() {
            return Err(Error::MissingGain("PV power loop".into()));
        }
        Ok(ControllerSetup {
            cascade: CascadeGains {
                d_current: current.pi(),
                q_current: current.pi(),
                dc_link,
                l_f: current.l_hat,
            },
            pv_power: self.pv_power,
            mode: self.mode,
        })
    }
}

/// The identified open-loop plant under the synthesized controller.
pub fn assemble_data_driven_system(
    model: &SparseModel,
    gains: &GainSet,
    inputs: InputSource,
    omega0: f64,
) -> Result<ControlledPlant<IdentifiedPlant>> {
    if model.schema == Schema::ClosedLoop {
        return Err(Error::SchemaMismatch(
            "controllers are assembled around an open-loop model".into(),
        ));
    }
    let setup = gains.setup(model.schema)?;
    ControlledPlant::new(IdentifiedPlant::new(model), setup, inputs, omega0)
}

/// Runs a scenario with the data-driven closed loop in place of the
/// physical one: same schedule, fault, initial state and time grid.
pub fn simulate_data_driven(model: &SparseModel, gains: &GainSet, sim: &Simulation) -> Result<Trajectory> {
    if sim.schema != model.schema {
        return Err(Error::SchemaMismatch(format!(
            "scenario is {}, model is {}",
            sim.schema, model.schema
        )));
    }
    sim.validate()?;
    let inputs = InputSource::new(sim.schedule.clone(), sim.fault);
    let sys = assemble_data_driven_system(model, gains, inputs, sim.params.omega0)?;
    let ni = sys.n_integrators();
    let mut s0 = sim.x0.clone();
    if sim.integrators.is_empty() {
        s0.extend(std::iter::repeat(0.0).take(ni));
    } else if sim.integrators.len() == ni {
        s0.extend_from_slice(&sim.integrators);
    } else {
        return Err(Error::SchemaMismatch(format!(
            "{} controller integrators given, {ni} expected",
            sim.integrators.len()
        )));
    }
    integrate_system(&sys, &s0, sim.t0, sim.dt, sim.duration, sim.derivatives)
}
