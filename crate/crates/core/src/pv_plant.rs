//! Averaged dq-frame models of grid-connected PV plants.
//!
//! Three physical models are provided:
//!
//! * open-loop single-stage: LC-filtered VSC plus DC link fed by a PV current,
//! * open-loop two-stage: the same AC side with a boost converter between the
//!   PV array and the DC link,
//! * closed-loop single-stage: the single-stage plant with its cascaded PI
//!   controllers folded in, the three integrator outputs carried as states.
//!
//! The controller equations (current loops with decoupling, power-to-current
//! conversion, DC-link loop and the PV power loop of the boost stage) are
//! evaluated in continuous time; integrator states are owned by the caller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index constants for the state and input layouts of every schema.
pub mod idx {
    pub const I_CD: usize = 0;
    pub const I_CQ: usize = 1;
    pub const I_GD: usize = 2;
    pub const I_GQ: usize = 3;
    pub const V_SD: usize = 4;
    pub const V_SQ: usize = 5;
    pub const V_DC: usize = 6;
    /// PV current, two-stage only.
    pub const I_PV: usize = 7;
    /// DC-link integrator, closed-loop only.
    pub const DELTA: usize = 7;
    /// d-axis current integrator, closed-loop only.
    pub const EPSILON: usize = 8;
    /// q-axis current integrator, closed-loop only.
    pub const ETA: usize = 9;

    /// Single-stage inputs.
    pub mod u1 {
        pub const V_CD: usize = 0;
        pub const V_CQ: usize = 1;
        pub const V_GD: usize = 2;
        pub const V_GQ: usize = 3;
        pub const OMEGA0: usize = 4;
        pub const I_PV: usize = 5;
    }

    /// Two-stage inputs.
    pub mod u2 {
        pub const V_CD: usize = 0;
        pub const V_CQ: usize = 1;
        pub const V_GD: usize = 2;
        pub const V_GQ: usize = 3;
        pub const OMEGA0: usize = 4;
        pub const V_PV: usize = 5;
        pub const D_REF: usize = 6;
    }

    /// Closed-loop single-stage inputs.
    pub mod u3 {
        pub const V_DCREF: usize = 0;
        pub const I_QREF: usize = 1;
        pub const V_GD: usize = 2;
        pub const V_GQ: usize = 3;
        pub const I_PV: usize = 4;
    }
}

const X1_NAMES: [&str; 7] = ["i_cd", "i_cq", "i_gd", "i_gq", "v_sd", "v_sq", "v_dc"];
const X2_NAMES: [&str; 8] = ["i_cd", "i_cq", "i_gd", "i_gq", "v_sd", "v_sq", "v_dc", "i_pv"];
const X3_NAMES: [&str; 10] = [
    "i_cd", "i_cq", "i_gd", "i_gq", "v_sd", "v_sq", "v_dc", "delta", "epsilon", "eta",
];
const U1_NAMES: [&str; 6] = ["v_cd", "v_cq", "v_gd", "v_gq", "omega0", "i_pv"];
const U2_NAMES: [&str; 7] = ["v_cd", "v_cq", "v_gd", "v_gq", "omega0", "v_pv", "d_ref"];
const U3_NAMES: [&str; 5] = ["v_dcref", "i_qref", "v_gd", "v_gq", "i_pv"];

/// Which model a state/input vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    SingleStage,
    TwoStage,
    #[serde(rename = "closed-loop-single-stage")]
    ClosedLoop,
}

impl Schema {
    pub fn state_names(self) -> &'static [&'static str] {
        match self {
            Schema::SingleStage => &X1_NAMES,
            Schema::TwoStage => &X2_NAMES,
            Schema::ClosedLoop => &X3_NAMES,
        }
    }

    pub fn input_names(self) -> &'static [&'static str] {
        match self {
            Schema::SingleStage => &U1_NAMES,
            Schema::TwoStage => &U2_NAMES,
            Schema::ClosedLoop => &U3_NAMES,
        }
    }

    pub fn n_states(self) -> usize {
        self.state_names().len()
    }

    pub fn n_inputs(self) -> usize {
        self.input_names().len()
    }

    pub fn state_index(self, name: &str) -> Option<usize> {
        self.state_names().iter().position(|n| *n == name)
    }

    pub fn input_index(self, name: &str) -> Option<usize> {
        self.input_names().iter().position(|n| *n == name)
    }

    /// States first, then inputs.
    pub fn variable_names(self) -> Vec<String> {
        self.state_names()
            .iter()
            .chain(self.input_names())
            .map(|s| s.to_string())
            .collect()
    }

    /// Variables that stay strictly positive on every admissible trajectory and
    /// may therefore appear as a denominator.
    pub fn is_positive_definite(self, name: &str) -> bool {
        name == "v_dc"
    }

    /// Inputs produced by a feedback controller, i.e. continuous in time, as
    /// opposed to piecewise-constant exogenous signals.
    pub fn input_is_continuous(self, j: usize) -> bool {
        match self {
            Schema::SingleStage => j == idx::u1::V_CD || j == idx::u1::V_CQ,
            Schema::TwoStage => {
                j == idx::u2::V_CD || j == idx::u2::V_CQ || j == idx::u2::D_REF
            }
            Schema::ClosedLoop => false,
        }
    }

    pub fn check_state(self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_states() {
            return Err(Error::SchemaMismatch(format!(
                "{self:?} state vector needs {} entries, got {}",
                self.n_states(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn check_input(self, u: &[f64]) -> Result<()> {
        if u.len() != self.n_inputs() {
            return Err(Error::SchemaMismatch(format!(
                "{self:?} input vector needs {} entries, got {}",
                self.n_inputs(),
                u.len()
            )));
        }
        Ok(())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Schema::SingleStage => "single-stage",
            Schema::TwoStage => "two-stage",
            Schema::ClosedLoop => "closed-loop-single-stage",
        }
    }
}

impl std::str::FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-stage" => Ok(Schema::SingleStage),
            "two-stage" => Ok(Schema::TwoStage),
            "closed-loop-single-stage" => Ok(Schema::ClosedLoop),
            other => Err(Error::Parse(format!("unknown schema `{other}`"))),
        }
    }
}

impl std::fmt::Display for Schema {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Electrical constants and PI gains of one plant configuration.
///
/// `k_p3`/`k_i3` name the third PI loop: the q-axis current loop of the
/// closed-loop single-stage model, or the PV power loop of the two-stage
/// plant. Both uses share the symbol, so a configuration carries one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParameters {
    pub r_c: f64,
    pub l_c: f64,
    pub c_f: f64,
    pub l_g: f64,
    pub r_g: f64,
    pub c_dc: f64,
    pub l_b: f64,
    pub omega0: f64,
    pub k_p1: f64,
    pub k_i1: f64,
    pub k_p2: f64,
    pub k_i2: f64,
    pub k_p3: f64,
    pub k_i3: f64,
}

impl PlantParameters {
    /// Default single-stage plant: 800 V grid, 1 kV DC link, current loops
    /// designed for a 0.5 ms time constant.
    ///
    /// The DC-link gains are negative: a positive d-axis current exports power
    /// and lowers `v_dc`, so the loop `(v_dcref - v_dc) * K` needs `K < 0`.
    pub fn single_stage_default() -> Self {
        Self {
            r_c: 0.25,
            l_c: 2.5e-3,
            c_f: 20e-6,
            l_g: 1.0e-3,
            r_g: 0.1,
            c_dc: 5.0e-3,
            l_b: 5.0e-3,
            omega0: 2.0 * std::f64::consts::PI * 60.0,
            k_p1: 5.0,
            k_i1: 500.0,
            k_p2: -1.0,
            k_i2: -0.01,
            k_p3: 5.0,
            k_i3: 500.0,
        }
    }

    /// Default two-stage plant; the third PI pair drives the boost duty cycle.
    pub fn two_stage_default() -> Self {
        Self {
            k_p3: 0.005,
            k_i3: 0.5,
            ..Self::single_stage_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_c", self.r_c),
            ("l_c", self.l_c),
            ("c_f", self.c_f),
            ("l_g", self.l_g),
            ("r_g", self.r_g),
            ("c_dc", self.c_dc),
            ("l_b", self.l_b),
            ("omega0", self.omega0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        let gains = [
            ("k_p1", self.k_p1),
            ("k_i1", self.k_i1),
            ("k_p2", self.k_p2),
            ("k_i2", self.k_i2),
            ("k_p3", self.k_p3),
            ("k_i3", self.k_i3),
        ];
        for (name, v) in gains {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

fn check_vdc(v_dc: f64) -> Result<()> {
    if v_dc > 0.0 {
        Ok(())
    } else {
        Err(Error::SingularState(format!(
            "DC-link voltage must be positive, got {v_dc}"
        )))
    }
}

/// AC-side filter and grid dynamics in the rotating frame.
///
/// Row order follows the state layout `[i_cd, i_cq, i_gd, i_gq, v_sd, v_sq]`:
/// converter-side inductor, grid-side inductor, filter capacitor.
#[allow(clippy::too_many_arguments)]
pub fn ac_dynamics(
    ac: &[f64],
    v_cd: f64,
    v_cq: f64,
    v_gd: f64,
    v_gq: f64,
    omega: f64,
    p: &PlantParameters,
) -> [f64; 6] {
    let (i_cd, i_cq, i_gd, i_gq, v_sd, v_sq) = (ac[0], ac[1], ac[2], ac[3], ac[4], ac[5]);
    let rl_c = p.r_c / p.l_c;
    let rl_g = p.r_g / p.l_g;
    [
        -rl_c * i_cd + omega * i_cq - v_sd / p.l_c + v_cd / p.l_c,
        -omega * i_cd - rl_c * i_cq - v_sq / p.l_c + v_cq / p.l_c,
        -rl_g * i_gd + omega * i_gq + v_sd / p.l_g - v_gd / p.l_g,
        -omega * i_gd - rl_g * i_gq + v_sq / p.l_g - v_gq / p.l_g,
        i_cd / p.c_f - i_gd / p.c_f + omega * v_sq,
        i_cq / p.c_f - i_gq / p.c_f - omega * v_sd,
    ]
}

/// Open-loop single-stage plant, `X1`/`U1` layout.
pub fn single_stage_rhs(x: &[f64], u: &[f64], p: &PlantParameters) -> Result<Vec<f64>> {
    use idx::u1;
    Schema::SingleStage.check_state(x)?;
    Schema::SingleStage.check_input(u)?;
    let v_dc = x[idx::V_DC];
    check_vdc(v_dc)?;

    let ac = ac_dynamics(
        &x[..6],
        u[u1::V_CD],
        u[u1::V_CQ],
        u[u1::V_GD],
        u[u1::V_GQ],
        u[u1::OMEGA0],
        p,
    );
    let dv_dc = u[u1::I_PV] / p.c_dc - 1.5 * u[u1::V_GD] * x[idx::I_GD] / (p.c_dc * v_dc);

    let mut dx = ac.to_vec();
    dx.push(dv_dc);
    Ok(dx)
}

/// Open-loop two-stage plant, `X2`/`U2` layout.
///
/// The PCC currents of the power balance are the grid-side currents
/// `i_gd`, `i_gq`.
pub fn two_stage_rhs(x: &[f64], u: &[f64], p: &PlantParameters) -> Result<Vec<f64>> {
    use idx::u2;
    Schema::TwoStage.check_state(x)?;
    Schema::TwoStage.check_input(u)?;
    let v_dc = x[idx::V_DC];
    check_vdc(v_dc)?;
    let d_ref = u[u2::D_REF];
    if !(0.0..=1.0).contains(&d_ref) {
        return Err(Error::DomainError(format!(
            "duty cycle reference must lie in [0, 1], got {d_ref}"
        )));
    }

    let ac = ac_dynamics(
        &x[..6],
        u[u2::V_CD],
        u[u2::V_CQ],
        u[u2::V_GD],
        u[u2::V_GQ],
        u[u2::OMEGA0],
        p,
    );
    let i_pv = x[idx::I_PV];
    let off = 1.0 - d_ref;
    let di_pv = u[u2::V_PV] / p.l_b - off * v_dc / p.l_b;
    let p_pcc = x[idx::V_SD] * x[idx::I_GD] + x[idx::V_SQ] * x[idx::I_GQ];
    let dv_dc = off * i_pv / p.c_dc - 1.5 / (p.c_dc * v_dc) * p_pcc;

    let mut dx = ac.to_vec();
    dx.push(dv_dc);
    dx.push(di_pv);
    Ok(dx)
}

/// Converter voltages commanded by the closed-loop single-stage controllers,
/// as functions of the `X3`/`U3` vectors.
pub fn closed_loop_voltages(x: &[f64], u: &[f64], p: &PlantParameters) -> (f64, f64) {
    use idx::u3;
    let dc_err = u[u3::V_DCREF] - x[idx::V_DC];
    let d_err = dc_err * p.k_p2 + x[idx::DELTA] - x[idx::I_CD];
    let q_err = u[u3::I_QREF] - x[idx::I_CQ];
    let v_cd = d_err * p.k_p1 + x[idx::EPSILON] - p.l_c * p.omega0 * x[idx::I_CQ] + x[idx::V_SD];
    let v_cq = q_err * p.k_p3 + x[idx::ETA] + p.l_c * p.omega0 * x[idx::I_CD] + x[idx::V_SQ];
    (v_cd, v_cq)
}

/// Closed-loop single-stage model, `X3`/`U3` layout.
pub fn closed_loop_rhs(x: &[f64], u: &[f64], p: &PlantParameters) -> Result<Vec<f64>> {
    use idx::u3;
    Schema::ClosedLoop.check_state(x)?;
    Schema::ClosedLoop.check_input(u)?;
    let v_dc = x[idx::V_DC];
    check_vdc(v_dc)?;

    let dc_err = u[u3::V_DCREF] - v_dc;
    let d_err = dc_err * p.k_p2 + x[idx::DELTA] - x[idx::I_CD];
    let q_err = u[u3::I_QREF] - x[idx::I_CQ];
    let (v_cd, v_cq) = closed_loop_voltages(x, u, p);

    let ac = ac_dynamics(&x[..6], v_cd, v_cq, u[u3::V_GD], u[u3::V_GQ], p.omega0, p);
    let dv_dc = u[u3::I_PV] / p.c_dc - 1.5 * u[u3::V_GD] * x[idx::I_GD] / (p.c_dc * v_dc);

    let mut dx = ac.to_vec();
    dx.push(dv_dc);
    dx.push(dc_err * p.k_i2);
    dx.push(d_err * p.k_i1);
    dx.push(q_err * p.k_i3);
    Ok(dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

/// How the d-axis current reference is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ActivePowerMode {
    /// PI loop on the DC-link voltage.
    #[default]
    DcLink,
    /// Open-loop conversion of an active power reference.
    PowerReference,
}

/// Gains of the cascaded inverter controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeGains {
    pub d_current: PiGains,
    pub q_current: PiGains,
    pub dc_link: PiGains,
    /// Filter inductance used by the dq decoupling terms.
    pub l_f: f64,
}

impl CascadeGains {
    /// Both current axes use `K_p1`/`K_i1`; decoupling uses `L_c`.
    pub fn from_plant(p: &PlantParameters) -> Self {
        let current = PiGains {
            kp: p.k_p1,
            ki: p.k_i1,
        };
        Self {
            d_current: current,
            q_current: current,
            dc_link: PiGains {
                kp: p.k_p2,
                ki: p.k_i2,
            },
            l_f: p.l_c,
        }
    }
}

/// Reference sample seen by the controller at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlReferences {
    pub v_dcref: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub omega: f64,
    pub mode: ActivePowerMode,
}

/// Outputs of the DC-link (`dc_link`) and current-loop integrators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerIntegrators {
    pub dc_link: f64,
    pub d_current: f64,
    pub q_current: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput {
    pub v_cd: f64,
    pub v_cq: f64,
    pub i_dref: f64,
    pub i_qref: f64,
    /// Time derivatives of the integrators; the caller advances them.
    pub rates: ControllerIntegrators,
}

/// Cascaded inverter controller: power/DC-link outer loop, dq current loops
/// with cross-coupling compensation and PCC voltage feed-forward.
///
/// `x` only needs the first seven entries of an `X1`/`X2` state.
pub fn controller_outputs(
    x: &[f64],
    refs: &ControlReferences,
    gains: &CascadeGains,
    integ: &ControllerIntegrators,
) -> Result<ControllerOutput> {
    if x.len() < 7 {
        return Err(Error::SchemaMismatch(format!(
            "controller needs at least 7 plant states, got {}",
            x.len()
        )));
    }
    let (i_cd, i_cq, v_sd, v_sq, v_dc) = (
        x[idx::I_CD],
        x[idx::I_CQ],
        x[idx::V_SD],
        x[idx::V_SQ],
        x[idx::V_DC],
    );
    if v_sd == 0.0 {
        return Err(Error::DivisionByZero(
            "power-to-current conversion with v_sd = 0".into(),
        ));
    }

    let mut rates = ControllerIntegrators::default();
    let i_dref = match refs.mode {
        ActivePowerMode::DcLink => {
            let e = refs.v_dcref - v_dc;
            rates.dc_link = gains.dc_link.ki * e;
            gains.dc_link.kp * e + integ.dc_link
        }
        ActivePowerMode::PowerReference => 2.0 * refs.p_ref / (3.0 * v_sd),
    };
    let i_qref = -2.0 * refs.q_ref / (3.0 * v_sd);

    let e_d = i_dref - i_cd;
    let e_q = i_qref - i_cq;
    rates.d_current = gains.d_current.ki * e_d;
    rates.q_current = gains.q_current.ki * e_q;
    let cross = refs.omega * gains.l_f;
    let v_cd = gains.d_current.kp * e_d + integ.d_current - cross * i_cq + v_sd;
    let v_cq = gains.q_current.kp * e_q + integ.q_current + cross * i_cd + v_sq;

    Ok(ControllerOutput {
        v_cd,
        v_cq,
        i_dref,
        i_qref,
        rates,
    })
}

/// PV power loop of the boost stage: duty cycle from the PV current error,
/// with `i_PVref = P_PVref / v_PV`. Returns `(d_ref, integrator rate)`.
pub fn pv_power_controller(
    i_pv: f64,
    v_pv: f64,
    p_pvref: f64,
    gains: &PiGains,
    integrator: f64,
) -> Result<(f64, f64)> {
    if v_pv == 0.0 {
        return Err(Error::DivisionByZero("PV current reference with v_PV = 0".into()));
    }
    let e = p_pvref / v_pv - i_pv;
    Ok((gains.kp * e + integrator, gains.ki * e))
}
