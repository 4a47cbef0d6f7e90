//! Physical versus data-driven comparisons: RMSE per state and per output,
//! fault studies, CSV reports and plot data.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pv_plant::{idx, Schema};
use crate::simulator::{FaultSpec, Trajectory};

/// Header line stating how outputs are computed.
pub const OUTPUT_CONVENTION: &str =
    "# Q = 1.5*(v_sq*i_gd - v_sd*i_gq) at the PCC; P_PV = v_pv*i_pv; RMSE = sqrt(mean(err^2))";

/// Controller-facing quantities compared between models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Output {
    #[serde(rename = "v_dc")]
    VDc,
    #[serde(rename = "Q")]
    Q,
    #[serde(rename = "P_PV")]
    PPv,
}

impl Output {
    pub fn name(self) -> &'static str {
        match self {
            Output::VDc => "v_dc",
            Output::Q => "Q",
            Output::PPv => "P_PV",
        }
    }

    /// Outputs tracked by the controllers of `schema`.
    pub fn for_schema(schema: Schema) -> Vec<Output> {
        match schema {
            Schema::TwoStage => vec![Output::VDc, Output::Q, Output::PPv],
            _ => vec![Output::VDc, Output::Q],
        }
    }

    pub fn series(self, traj: &Trajectory) -> Result<Vec<f64>> {
        let x = &traj.x;
        match self {
            Output::VDc => Ok(x.column(idx::V_DC).iter().copied().collect()),
            Output::Q => Ok((0..traj.len())
                .map(|k| {
                    1.5 * (x[(k, idx::V_SQ)] * x[(k, idx::I_GD)]
                        - x[(k, idx::V_SD)] * x[(k, idx::I_GQ)])
                })
                .collect()),
            Output::PPv => {
                if traj.schema != Schema::TwoStage {
                    return Err(Error::SchemaMismatch(format!(
                        "P_PV is not defined for {}",
                        traj.schema
                    )));
                }
                Ok((0..traj.len())
                    .map(|k| traj.u[(k, idx::u2::V_PV)] * x[(k, idx::I_PV)])
                    .collect())
            }
        }
    }
}

impl std::fmt::Display for Output {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sum of squared differences.
pub fn sse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sqrt(sum((a - b)^2) / P)`; zero for empty input.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (sse(a, b) / a.len() as f64).sqrt()
}

fn check_grids(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.schema != b.schema {
        return Err(Error::GridMismatch(format!("schemas {} and {}", a.schema, b.schema)));
    }
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    let tol = 1e-9 * a.dt.max(b.dt);
    if (a.dt - b.dt).abs() > tol || (a.start_time() - b.start_time()).abs() > tol {
        return Err(Error::GridMismatch("time grids differ".into()));
    }
    Ok(())
}

/// RMSE of every state between a reference and a candidate trajectory.
pub fn per_state_rmse(reference: &Trajectory, candidate: &Trajectory) -> Result<Vec<f64>> {
    check_grids(reference, candidate)?;
    Ok((0..reference.schema.n_states())
        .map(|j| {
            let a: Vec<f64> = reference.x.column(j).iter().copied().collect();
            let b: Vec<f64> = candidate.x.column(j).iter().copied().collect();
            rmse(&a, &b)
        })
        .collect())
}

/// RMSE of each output between two trajectories.
pub fn per_output_rmse(
    reference: &Trajectory,
    candidate: &Trajectory,
    outputs: &[Output],
) -> Result<Vec<f64>> {
    check_grids(reference, candidate)?;
    outputs
        .iter()
        .map(|o| Ok(rmse(&o.series(reference)?, &o.series(candidate)?)))
        .collect()
}

/// Part of the horizon an RMSE refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Whole,
    PreFault,
    PostFault,
}

impl Window {
    pub fn name(self) -> &'static str {
        match self {
            Window::Whole => "whole",
            Window::PreFault => "pre_fault",
            Window::PostFault => "post_fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseEntry {
    pub output: String,
    pub window: Window,
    pub rmse: f64,
    pub sse: f64,
    pub samples: usize,
}

/// Outcome of running one model through a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed(Trajectory),
    /// The run stopped early; the error is kept for the report.
    Failed(Error),
}

impl RunOutcome {
    pub fn from_result(r: Result<Trajectory>) -> Self {
        match r {
            Ok(t) => RunOutcome::Completed(t),
            Err(e) => RunOutcome::Failed(e),
        }
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        match self {
            RunOutcome::Completed(t) => Some(t),
            RunOutcome::Failed(_) => None,
        }
    }
}

/// Physical versus data-driven comparison over one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub scenario: String,
    pub outputs: Vec<Output>,
    pub entries: Vec<RmseEntry>,
    pub state_rmse: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub physical: RunOutcome,
    pub data_driven: RunOutcome,
}

impl ComparisonReport {
    pub fn rmse(&self, output: &str, window: Window) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.output == output && e.window == window)
            .map(|e| e.rmse)
    }

    pub fn completed(&self) -> bool {
        self.physical.trajectory().is_some() && self.data_driven.trajectory().is_some()
    }

    /// Rows `scenario,output,rmse,window`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,output,rmse,window\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{}", self.scenario, e.output, e.rmse, e.window.name());
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{OUTPUT_CONVENTION}\nscenario: {}\n", self.scenario);
        for (name, run) in [("physical", &self.physical), ("data-driven", &self.data_driven)] {
            if let RunOutcome::Failed(e) = run {
                let _ = writeln!(s, "{name} run failed: {e}");
            }
        }
        if !self.lambdas.is_empty() {
            let l: Vec<String> = self.lambdas.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "lambda: {}", l.join(", "));
        }
        for e in &self.entries {
            let _ = writeln!(s, "{:>6} {:>10} rmse {:.6e}", e.output, e.window.name(), e.rmse);
        }
        let names = self
            .physical
            .trajectory()
            .or(self.data_driven.trajectory())
            .map(|t| t.schema.state_names());
        if let (Some(names), false) = (names, self.state_rmse.is_empty()) {
            let _ = writeln!(s, "state rmse:");
            for (n, r) in names.iter().zip(&self.state_rmse) {
                let _ = writeln!(s, "{n:>8} {r:.6e}");
            }
        }
        s
    }
}

fn windowed_entries(
    phys: &Trajectory,
    dd: &Trajectory,
    outputs: &[Output],
    fault_time: Option<f64>,
) -> Result<Vec<RmseEntry>> {
    let split = fault_time.map(|t| {
        phys.times
            .partition_point(|s| *s + crate::simulator::SWITCH_TOLERANCE < t)
    });
    let mut entries = Vec::new();
    for o in outputs {
        let a = o.series(phys)?;
        let b = o.series(dd)?;
        let mut push = |window, lo: usize, hi: usize| {
            let e = sse(&a[lo..hi], &b[lo..hi]);
            entries.push(RmseEntry {
                output: o.name().to_string(),
                window,
                rmse: rmse(&a[lo..hi], &b[lo..hi]),
                sse: e,
                samples: hi - lo,
            });
        };
        push(Window::Whole, 0, a.len());
        if let Some(k) = split {
            push(Window::PreFault, 0, k);
            push(Window::PostFault, k, a.len());
        }
    }
    Ok(entries)
}

/// Compares two runs of the same scenario over the full horizon.
pub fn compare_models(
    scenario: &str,
    physical: &Trajectory,
    data_driven: &Trajectory,
    outputs: &[Output],
    lambdas: &[f64],
) -> Result<ComparisonReport> {
    let state_rmse = per_state_rmse(physical, data_driven)?;
    let entries = windowed_entries(physical, data_driven, outputs, None)?;
    Ok(ComparisonReport {
        scenario: scenario.to_string(),
        outputs: outputs.to_vec(),
        entries,
        state_rmse,
        lambdas: lambdas.to_vec(),
        physical: RunOutcome::Completed(physical.clone()),
        data_driven: RunOutcome::Completed(data_driven.clone()),
    })
}

/// Fault study: whole-horizon, pre-fault and post-fault RMSE. Failed runs
/// are reported rather than returned as errors.
pub fn fault_study(
    scenario: &str,
    physical: RunOutcome,
    data_driven: RunOutcome,
    fault: &FaultSpec,
    outputs: &[Output],
    lambdas: &[f64],
) -> Result<ComparisonReport> {
    let (entries, state_rmse) = match (physical.trajectory(), data_driven.trajectory()) {
        (Some(p), Some(d)) => (
            windowed_entries(p, d, outputs, Some(fault.time))?,
            per_state_rmse(p, d)?,
        ),
        _ => (Vec::new(), Vec::new()),
    };
    Ok(ComparisonReport {
        scenario: scenario.to_string(),
        outputs: outputs.to_vec(),
        entries,
        state_rmse,
        lambdas: lambdas.to_vec(),
        physical,
        data_driven,
    })
}

/// Two-column `t,value` text.
pub fn plot_data(times: &[f64], values: &[f64]) -> String {
    let mut s = String::from("t,value\n");
    for (t, v) in times.iter().zip(values) {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

/// Writes `<prefix>_<output>_<label>.csv` for every output of both runs.
pub fn write_plot_data(dir: &Path, prefix: &str, report: &ComparisonReport) -> Result<Vec<String>> {
    let mut written = Vec::new();
    for (label, run) in [("physical", &report.physical), ("data_driven", &report.data_driven)] {
        let Some(t) = run.trajectory() else { continue };
        for o in &report.outputs {
            let name = format!("{prefix}_{}_{label}.csv", o.name());
            std::fs::write(dir.join(&name), plot_data(&t.times, &o.series(t)?))?;
            written.push(name);
        }
    }
    Ok(written)
}
