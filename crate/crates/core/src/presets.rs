//! Operating points and the stock scenarios used for identification,
//! reference tracking and fault studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pv_plant::{PlantParameters, Schema};
use crate::simulator::{FaultSpec, ReferenceSchedule, Signal, Simulation};

/// Steady operating conditions of a PV system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingConditions {
    pub v_gd: f64,
    pub v_gq: f64,
    pub v_dc: f64,
    /// PV current of a single-stage plant.
    pub i_pv: f64,
    /// PV voltage and power of a two-stage plant.
    pub v_pv: f64,
    pub p_pv: f64,
    pub q: f64,
}

impl Default for OperatingConditions {
    fn default() -> Self {
        Self {
            v_gd: 800.0,
            v_gq: 0.0,
            v_dc: 1000.0,
            i_pv: 30.0,
            v_pv: 600.0,
            p_pv: 30e3,
            q: 0.0,
        }
    }
}

/// Model state, model input and controller integrators at an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub integrators: Vec<f64>,
}

/// Equilibrium of the controlled plant with zero tracking error.
pub fn operating_point(
    schema: Schema,
    p: &PlantParameters,
    c: &OperatingConditions,
) -> Result<OperatingPoint> {
    p.validate()?;
    if !(c.v_dc > 0.0) || c.v_gd == 0.0 {
        return Err(Error::InvalidArgument(
            "operating point needs v_dc > 0 and v_gd != 0".into(),
        ));
    }
    let w = p.omega0;
    let (mut i_gd, mut i_gq) = (0.0, 0.0);
    let mut ac = [0.0; 6];
    // The grid-current and reactive-power conditions are weakly coupled
    // through the filter; a short fixed-point iteration settles them.
    for _ in 0..100 {
        let v_sd = c.v_gd + p.r_g * i_gd - w * p.l_g * i_gq;
        let v_sq = c.v_gq + p.r_g * i_gq + w * p.l_g * i_gd;
        let i_cd = i_gd - w * p.c_f * v_sq;
        let i_cq = i_gq + w * p.c_f * v_sd;
        ac = [i_cd, i_cq, i_gd, i_gq, v_sd, v_sq];
        let i_cq_target = -2.0 * c.q / (3.0 * v_sd);
        i_gq = i_cq_target - w * p.c_f * v_sd;
        i_gd = match schema {
            Schema::TwoStage => (c.p_pv / 1.5 - v_sq * i_gq) / v_sd,
            _ => c.v_dc * c.i_pv / (1.5 * c.v_gd),
        };
    }
    let [i_cd, i_cq, _, _, v_sd, v_sq] = ac;
    let v_cd = v_sd + p.r_c * i_cd - w * p.l_c * i_cq;
    let v_cq = v_sq + p.r_c * i_cq + w * p.l_c * i_cd;
    let mut x = ac.to_vec();
    x.push(c.v_dc);
    let integrators = vec![i_cd, p.r_c * i_cd, p.r_c * i_cq];
    match schema {
        Schema::SingleStage => Ok(OperatingPoint {
            x,
            u: vec![v_cd, v_cq, c.v_gd, c.v_gq, w, c.i_pv],
            integrators,
        }),
        Schema::TwoStage => {
            if !(c.v_pv > 0.0 && c.v_pv <= c.v_dc) {
                return Err(Error::InvalidArgument(
                    "two-stage operating point needs 0 < v_pv <= v_dc".into(),
                ));
            }
            let d = 1.0 - c.v_pv / c.v_dc;
            x.push(c.p_pv / c.v_pv);
            let mut integrators = integrators;
            integrators.push(d);
            Ok(OperatingPoint {
                x,
                u: vec![v_cd, v_cq, c.v_gd, c.v_gq, w, c.v_pv, d],
                integrators,
            })
        }
        Schema::ClosedLoop => {
            x.extend_from_slice(&integrators);
            Ok(OperatingPoint {
                x,
                u: vec![c.v_dc, i_cq, c.v_gd, c.v_gq, c.i_pv],
                integrators: Vec::new(),
            })
        }
    }
}

fn steps(start: f64, period: f64, duration: f64, cycle: &[f64], offset: f64) -> Vec<(f64, f64)> {
    let n = (duration / period).round() as usize;
    (0..n.max(1))
        .map(|k| (start + k as f64 * period, offset + cycle[k % cycle.len()]))
        .collect()
}

/// Like [`steps`] but the switches after the first are delayed by `shift`.
fn shifted_steps(period: f64, shift: f64, duration: f64, cycle: &[f64], offset: f64) -> Vec<(f64, f64)> {
    let mut pts = steps(0.0, period, duration, cycle, offset);
    for p in pts.iter_mut().skip(1) {
        p.0 += shift;
    }
    pts
}

/// Identification excitation: reference steps every second (reactive power
/// half a second after the DC-link voltage) and small grid and source
/// disturbances every 0.1 s. The disturbance cycles have
/// coprime lengths so products of piecewise-constant inputs stay linearly
/// independent of each other.
pub fn identification_schedule(
    schema: Schema,
    c: &OperatingConditions,
    duration: f64,
) -> ReferenceSchedule {
    let mut s = ReferenceSchedule::new();
    let pc = |pts: Vec<(f64, f64)>| {
        crate::simulator::PiecewiseConstant::new(pts).expect("generated points are increasing")
    };
    let v_dc_cycle = [0.0, 30.0, -20.0, 10.0, -10.0];
    let q_cycle = [0.0, 2e3, -1.5e3, 1e3, -2.5e3];
    let v_gd_cycle = [0.0, 8.0, -5.0, 3.0, -9.0, 6.0, -2.0];
    let v_gq_cycle = [0.0, -6.0, 4.0, 9.0, -3.0];
    let i_cycle = [0.0, -4.0, 3.0, -2.0, 5.0, -5.0];
    let dist = 0.1;
    match schema {
        Schema::SingleStage | Schema::TwoStage => {
            s.insert(Signal::VDcref, pc(steps(0.0, 1.0, duration, &v_dc_cycle, c.v_dc)));
            s.insert(Signal::QRef, pc(shifted_steps(1.0, 0.5, duration, &q_cycle, c.q)));
        }
        Schema::ClosedLoop => {
            s.insert(Signal::VDcref, pc(steps(0.0, 1.0, duration, &v_dc_cycle, c.v_dc)));
            let i_q = |q: f64| -2.0 * q / (3.0 * c.v_gd);
            let iq: Vec<f64> = q_cycle.iter().map(|q| i_q(*q + c.q)).collect();
            s.insert(Signal::IQref, pc(shifted_steps(1.0, 0.5, duration, &iq, 0.0)));
        }
    }
    s.insert(Signal::VGd, pc(steps(0.0, dist, duration, &v_gd_cycle, c.v_gd)));
    s.insert(Signal::VGq, pc(steps(0.0, dist, duration, &v_gq_cycle, c.v_gq)));
    match schema {
        Schema::SingleStage | Schema::ClosedLoop => {
            s.insert(Signal::IPv, pc(steps(0.0, dist, duration, &i_cycle, c.i_pv)));
        }
        Schema::TwoStage => {
            let p_cycle: Vec<f64> = i_cycle.iter().map(|i| i * 500.0).collect();
            let v_cycle = [0.0, 15.0, -10.0, 5.0, -20.0, 10.0, -5.0, 20.0, -15.0, 0.0, 25.0];
            s.insert(Signal::PPvref, pc(steps(0.0, dist, duration, &p_cycle, c.p_pv)));
            s.insert(Signal::VPv, pc(steps(0.0, dist, duration, &v_cycle, c.v_pv)));
        }
    }
    s
}

/// Constant references with one `v_dcref` step and one reactive power step.
pub fn tracking_schedule(schema: Schema, c: &OperatingConditions) -> ReferenceSchedule {
    let mut s = constant_schedule(schema, c);
    s.insert(
        Signal::VDcref,
        crate::simulator::PiecewiseConstant::new(vec![(0.0, c.v_dc), (0.2, c.v_dc + 50.0)])
            .expect("valid"),
    );
    match schema {
        Schema::ClosedLoop => s.insert(
            Signal::IQref,
            crate::simulator::PiecewiseConstant::new(vec![
                (0.0, -2.0 * c.q / (3.0 * c.v_gd)),
                (0.6, -2.0 * (c.q + 5e3) / (3.0 * c.v_gd)),
            ])
            .expect("valid"),
        ),
        _ => s.insert(
            Signal::QRef,
            crate::simulator::PiecewiseConstant::new(vec![(0.0, c.q), (0.6, c.q + 5e3)])
                .expect("valid"),
        ),
    }
    s
}

/// Every signal the schema needs, held at the operating conditions.
pub fn constant_schedule(schema: Schema, c: &OperatingConditions) -> ReferenceSchedule {
    let s = ReferenceSchedule::new()
        .with_constant(Signal::VDcref, c.v_dc)
        .with_constant(Signal::VGd, c.v_gd)
        .with_constant(Signal::VGq, c.v_gq);
    match schema {
        Schema::SingleStage => s
            .with_constant(Signal::QRef, c.q)
            .with_constant(Signal::IPv, c.i_pv),
        Schema::TwoStage => s
            .with_constant(Signal::QRef, c.q)
            .with_constant(Signal::VPv, c.v_pv)
            .with_constant(Signal::PPvref, c.p_pv),
        Schema::ClosedLoop => s
            .with_constant(Signal::IQref, -2.0 * c.q / (3.0 * c.v_gd))
            .with_constant(Signal::IPv, c.i_pv),
    }
}

/// Grid voltage disturbances studied in the fault scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    /// `v_gd` drops from 800 V to 500 V.
    Undervoltage,
    /// `v_gd` collapses to zero.
    ThreePhase,
}

impl FaultKind {
    pub fn spec(self, c: &OperatingConditions, time: f64) -> FaultSpec {
        FaultSpec {
            target: Signal::VGd,
            pre_fault: c.v_gd,
            fault_value: match self {
                FaultKind::Undervoltage => 500.0,
                FaultKind::ThreePhase => 0.0,
            },
            time,
        }
    }
}

fn scenario(
    schema: Schema,
    p: &PlantParameters,
    c: &OperatingConditions,
    schedule: ReferenceSchedule,
    duration: f64,
) -> Result<Simulation> {
    let op = operating_point(schema, p, c)?;
    let mut sim = Simulation::new(schema, *p, op.x, schedule);
    sim.integrators = op.integrators;
    sim.duration = duration;
    Ok(sim)
}

/// 5 s of rich excitation at `dt = 1e-4`, starting at equilibrium.
pub fn identification_scenario(
    schema: Schema,
    p: &PlantParameters,
    c: &OperatingConditions,
) -> Result<Simulation> {
    scenario(schema, p, c, identification_schedule(schema, c, 5.0), 5.0)
}

/// 1 s with a DC-link voltage step at 0.2 s and a reactive power step at 0.6 s.
pub fn tracking_scenario(
    schema: Schema,
    p: &PlantParameters,
    c: &OperatingConditions,
) -> Result<Simulation> {
    scenario(schema, p, c, tracking_schedule(schema, c), 1.0)
}

/// Constant references for 5 s with a grid fault at 3 s.
pub fn fault_scenario(
    schema: Schema,
    p: &PlantParameters,
    c: &OperatingConditions,
    kind: FaultKind,
) -> Result<Simulation> {
    let mut sim = scenario(schema, p, c, constant_schedule(schema, c), 5.0)?;
    sim.fault = Some(kind.spec(c, 3.0));
    Ok(sim)
}
