//! Piecewise-constant reference and disturbance signals, plus fault overrides.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Switch times closer than this (in seconds) to a sample instant count as
/// reached, so that `k * dt` rounding never delays a step by one sample.
pub const SWITCH_TOLERANCE: f64 = 1e-9;

/// Exogenous signals a scenario can schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    VDcref,
    QRef,
    PRef,
    PPvref,
    IQref,
    VGd,
    VGq,
    IPv,
    VPv,
    Omega0,
}

impl Signal {
    pub const ALL: [Signal; 10] = [
        Signal::VDcref,
        Signal::QRef,
        Signal::PRef,
        Signal::PPvref,
        Signal::IQref,
        Signal::VGd,
        Signal::VGq,
        Signal::IPv,
        Signal::VPv,
        Signal::Omega0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::VDcref => "v_dcref",
            Signal::QRef => "q_ref",
            Signal::PRef => "p_ref",
            Signal::PPvref => "p_pvref",
            Signal::IQref => "i_qref",
            Signal::VGd => "v_gd",
            Signal::VGq => "v_gq",
            Signal::IPv => "i_pv",
            Signal::VPv => "v_pv",
            Signal::Omega0 => "omega0",
        }
    }
}

impl std::str::FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Signal::ALL
            .into_iter()
            .find(|sig| sig.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown signal `{s}`")))
    }
}

impl std::fmt::Display for Signal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A list of `(switch time, value)` pairs; the value holds until the next switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseConstant {
    points: Vec<(f64, f64)>,
}

impl PiecewiseConstant {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least one point".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidArgument("signal points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(
                "switch times must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn constant(start: f64, value: f64) -> Self {
        Self {
            points: vec![(start, value)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points[0].0
    }

    /// Value at `t`; before the first switch the first value applies.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self
            .points
            .partition_point(|(ts, _)| *ts <= t + SWITCH_TOLERANCE);
        self.points[k.saturating_sub(1)].1
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseConstant {
    type Error = Error;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PiecewiseConstant> for Vec<(f64, f64)> {
    fn from(p: PiecewiseConstant) -> Self {
        p.points
    }
}

/// Named piecewise-constant signals over one simulation horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceSchedule {
    signals: BTreeMap<Signal, PiecewiseConstant>,
}

impl ReferenceSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, signal: Signal, points: &[(f64, f64)]) -> Result<Self> {
        self.signals
            .insert(signal, PiecewiseConstant::new(points.to_vec())?);
        Ok(self)
    }

    pub fn with_constant(mut self, signal: Signal, value: f64) -> Self {
        self.signals
            .insert(signal, PiecewiseConstant::constant(0.0, value));
        self
    }

    pub fn insert(&mut self, signal: Signal, pc: PiecewiseConstant) {
        self.signals.insert(signal, pc);
    }

    pub fn get(&self, signal: Signal) -> Option<&PiecewiseConstant> {
        self.signals.get(&signal)
    }

    pub fn signals(&self) -> impl Iterator<Item = (Signal, &PiecewiseConstant)> {
        self.signals.iter().map(|(s, p)| (*s, p))
    }

    pub fn value_at(&self, signal: Signal, t: f64) -> Option<f64> {
        self.signals.get(&signal).map(|p| p.value_at(t))
    }

    /// Every signal must start exactly at the simulation start time.
    pub fn validate(&self, start: f64) -> Result<()> {
        for (sig, pc) in &self.signals {
            if pc.start() != start {
                return Err(Error::InvalidArgument(format!(
                    "signal {sig} starts at {} instead of the simulation start {start}",
                    pc.start()
                )));
            }
        }
        Ok(())
    }

    pub fn require(&self, signals: &[Signal]) -> Result<()> {
        for s in signals {
            if !self.signals.contains_key(s) {
                return Err(Error::MissingSignal(s.name().to_string()));
            }
        }
        Ok(())
    }
}

/// A step change of one exogenous signal.
///
/// Before `time` the target equals `pre_fault`, at and after it `fault_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub target: Signal,
    pub pre_fault: f64,
    pub fault_value: f64,
    pub time: f64,
}

impl FaultSpec {
    pub fn validate(&self, start: f64, duration: f64) -> Result<()> {
        if !(self.time >= start && self.time <= start + duration) {
            return Err(Error::InvalidArgument(format!(
                "fault time {} outside the horizon [{start}, {}]",
                self.time,
                start + duration
            )));
        }
        Ok(())
    }

    pub fn value_at(&self, t: f64) -> f64 {
        if t + SWITCH_TOLERANCE >= self.time {
            self.fault_value
        } else {
            self.pre_fault
        }
    }
}

/// Schedule with an optional fault override applied on top.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSource {
    pub schedule: ReferenceSchedule,
    pub fault: Option<FaultSpec>,
}

impl InputSource {
    pub fn new(schedule: ReferenceSchedule, fault: Option<FaultSpec>) -> Self {
        Self { schedule, fault }
    }

    pub fn value_at(&self, signal: Signal, t: f64) -> Option<f64> {
        match &self.fault {
            Some(f) if f.target == signal => Some(f.value_at(t)),
            _ => self.schedule.value_at(signal, t),
        }
    }

    pub fn value_or(&self, signal: Signal, t: f64, default: f64) -> f64 {
        self.value_at(signal, t).unwrap_or(default)
    }

    /// Like [`ReferenceSchedule::require`] but a fault target also counts.
    pub fn require(&self, signals: &[Signal]) -> Result<()> {
        for s in signals {
            let faulted = self.fault.map(|f| f.target == *s).unwrap_or(false);
            if !faulted && self.schedule.get(*s).is_none() {
                return Err(Error::MissingSignal(s.name().to_string()));
            }
        }
        Ok(())
    }
}
