//! Adaptive per-state threshold search: sweep the threshold of the state
//! with the largest replay error, keep the best value, lock the state in,
//! and move on to the next-worst state.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{self, Output};
use crate::features::LibrarySpec;
use crate::regression::{
    simulate_identified, Identification, SparseModel, StateFit, StlsqOptions,
};
use crate::simulator::{SampledInputs, Trajectory};

pub use crate::evaluation::per_state_rmse;

/// What a candidate threshold is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    /// Replay RMSE of the swept state.
    #[default]
    States,
    /// Sum of output RMSEs, each divided by the output's range on the test
    /// data. States are still visited in order of their own RMSE.
    Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArsrConfig {
    pub lambda_init: Vec<f64>,
    pub lambda_max: Vec<f64>,
    pub steps: Vec<f64>,
    #[serde(default)]
    pub stlsq: StlsqOptions,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    #[serde(default)]
    pub metric: SelectionMetric,
}

fn default_split() -> f64 {
    0.8
}

impl ArsrConfig {
    /// Same start, limit and step for all `n` states.
    pub fn uniform(n: usize, init: f64, max: f64, step: f64) -> Self {
        Self {
            lambda_init: vec![init; n],
            lambda_max: vec![max; n],
            steps: vec![step; n],
            stlsq: StlsqOptions::default(),
            split_ratio: default_split(),
            metric: SelectionMetric::States,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lambda_init.len() != n || self.lambda_max.len() != n || self.steps.len() != n {
            return Err(Error::InvalidArgument(format!(
                "threshold vectors must have one entry per state ({n})"
            )));
        }
        for k in 0..n {
            let (a, b, s) = (self.lambda_init[k], self.lambda_max[k], self.steps[k]);
            if !(a >= 0.0 && a <= b && b.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "state {k}: need 0 <= lambda_init ({a}) <= lambda_max ({b})"
                )));
            }
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!("state {k}: step must be positive")));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidArgument("split ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Replay errors of one model on the test trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayScore {
    pub state_rmse: Vec<f64>,
    pub output_rmse: Vec<f64>,
    pub diverged: bool,
}

/// Simulates candidate models over the test trajectory with its recorded
/// inputs and scores them against it.
pub struct TestReplay<'a> {
    test: &'a Trajectory,
    outputs: Vec<Output>,
    output_scale: Vec<f64>,
    test_outputs: Vec<Vec<f64>>,
}

impl<'a> TestReplay<'a> {
    pub fn new(test: &'a Trajectory) -> Result<Self> {
        if test.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: test.len(),
            });
        }
        let outputs = Output::for_schema(test.schema);
        let test_outputs: Vec<Vec<f64>> = outputs
            .iter()
            .map(|o| o.series(test))
            .collect::<Result<_>>()?;
        let output_scale = test_outputs
            .iter()
            .map(|s| {
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo { hi - lo } else { 1.0 }
            })
            .collect();
        Ok(Self {
            test,
            outputs,
            output_scale,
            test_outputs,
        })
    }

    pub fn outputs(&self) -> &[Output] {
        &self.outputs
    }

    pub fn simulate(&self, model: &SparseModel) -> Result<Trajectory> {
        let t = self.test;
        simulate_identified(
            model,
            &t.state_row(0),
            SampledInputs::from_trajectory(t),
            t.start_time(),
            t.dt,
            (t.len() - 1) as f64 * t.dt,
        )
    }

    /// A failed or non-finite replay scores infinity everywhere.
    pub fn score(&self, model: &SparseModel) -> ReplayScore {
        let n = model.schema.n_states();
        let diverged = || ReplayScore {
            state_rmse: vec![f64::INFINITY; n],
            output_rmse: vec![f64::INFINITY; self.outputs.len()],
            diverged: true,
        };
        let Ok(sim) = self.simulate(model) else {
            return diverged();
        };
        let Ok(state_rmse) = evaluation::per_state_rmse(self.test, &sim) else {
            return diverged();
        };
        let output_rmse: Vec<f64> = self
            .outputs
            .iter()
            .zip(&self.test_outputs)
            .map(|(o, reference)| {
                o.series(&sim)
                    .map(|s| evaluation::rmse(reference, &s))
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        ReplayScore {
            state_rmse,
            output_rmse,
            diverged: false,
        }
    }

    fn objective(&self, metric: SelectionMetric, state: usize, s: &ReplayScore) -> f64 {
        let v = match metric {
            SelectionMetric::States => s.state_rmse[state],
            SelectionMetric::Outputs => s
                .output_rmse
                .iter()
                .zip(&self.output_scale)
                .map(|(r, sc)| r / sc)
                .sum(),
        };
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// One evaluated candidate threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub iteration: usize,
    pub state: usize,
    pub lambda: f64,
    /// Selection objective of the candidate (the swept state's RMSE by default).
    pub rmse: f64,
    pub accepted: bool,
}

/// Summary of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LockIn {
    pub state: usize,
    pub lambda: f64,
    pub start_rmse: f64,
    pub final_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArsrReport {
    pub model: SparseModel,
    pub lambdas: Vec<f64>,
    /// Per-state replay RMSE of the final model.
    pub rmse: Vec<f64>,
    pub output_rmse: Vec<f64>,
    pub outputs: Vec<Output>,
    /// Optimized states in lock-in order.
    pub order: Vec<usize>,
    /// Per-state RMSE at the start of each outer iteration, then the final one.
    pub history: Vec<Vec<f64>>,
    pub lock_ins: Vec<LockIn>,
    pub candidates: Vec<CandidateRecord>,
    pub stlsq_calls: usize,
}

impl ArsrReport {
    pub fn to_text(&self) -> String {
        let names = self.model.state_names();
        let mut s = String::from("adaptive threshold search\n");
        let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "lambda: {}", fmt(&self.lambdas));
        let order: Vec<&str> = self.order.iter().map(|&k| names[k]).collect();
        let _ = writeln!(s, "order: {}", order.join(", "));
        for l in &self.lock_ins {
            let _ = writeln!(
                s,
                "{:>8}: lambda {} rmse {:.6e} -> {:.6e}",
                names[l.state], l.lambda, l.start_rmse, l.final_rmse
            );
        }
        let _ = writeln!(s, "state rmse:");
        for (k, r) in self.rmse.iter().enumerate() {
            let _ = writeln!(s, "{:>8} {:.6e}", names[k], r);
        }
        let _ = writeln!(s, "output rmse:");
        for (o, r) in self.outputs.iter().zip(&self.output_rmse) {
            let _ = writeln!(s, "{:>8} {:.6e}", o.name(), r);
        }
        let _ = writeln!(s, "stlsq calls: {}", self.stlsq_calls);
        s
    }

    /// `iteration,state,lambda,rmse,accepted` per evaluated candidate.
    pub fn to_csv(&self) -> String {
        let names = self.model.state_names();
        let mut s = String::from("iteration,state,lambda,rmse,accepted\n");
        for c in &self.candidates {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.iteration, names[c.state], c.lambda, c.rmse, c.accepted
            );
        }
        s
    }
}

/// Index of the largest value among `allowed`; NaN counts as infinite and
/// ties go to the lowest index.
fn argmax_remaining(err: &[f64], done: &[bool]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (k, &e) in err.iter().enumerate() {
        if done[k] {
            continue;
        }
        let e = if e.is_nan() { f64::INFINITY } else { e };
        match best {
            Some((_, b)) if e <= b => {}
            _ => best = Some((k, e)),
        }
    }
    best.expect("at least one state left").0
}

/// Candidate thresholds above `start`, up to `max` inclusive.
pub fn sweep_values(start: f64, max: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 1u32;
    loop {
        let v = start + j as f64 * step;
        if v > max + 1e-9 * step {
            break;
        }
        out.push(v);
        j += 1;
    }
    out
}

/// Runs the search on a prepared identification problem.
pub fn adaptive_sindy_with(
    id: &Identification,
    test: &Trajectory,
    cfg: &ArsrConfig,
) -> Result<ArsrReport> {
    let n = id.schema.n_states();
    cfg.validate(n)?;
    if test.schema != id.schema {
        return Err(Error::SchemaMismatch("train and test schemas differ".into()));
    }
    let replay = TestReplay::new(test)?;
    let opts = &cfg.stlsq;

    let mut lambdas = cfg.lambda_init.clone();
    let mut fits: Vec<StateFit> = id.problem.fit(&lambdas, opts)?;
    let mut stlsq_calls = n;
    let mut score = replay.score(&id.model(&fits, &lambdas));
    let mut any_finite = !score.diverged;

    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut history = Vec::with_capacity(n + 1);
    let mut lock_ins = Vec::with_capacity(n);
    let mut candidates = Vec::new();

    for iteration in 1..=n {
        history.push(score.state_rmse.clone());
        let ind = argmax_remaining(&score.state_rmse, &done);
        let start = replay.objective(cfg.metric, ind, &score);
        let values = sweep_values(lambdas[ind], cfg.lambda_max[ind], cfg.steps[ind]);
        stlsq_calls += values.len();

        let evaluated: Vec<(f64, StateFit, ReplayScore)> = values
            .par_iter()
            .map(|&lam| {
                let fit = id.problem.fit_state(ind, lam, opts);
                let mut trial = fits.clone();
                trial[ind] = fit.clone();
                let mut trial_l = lambdas.clone();
                trial_l[ind] = lam;
                let sc = replay.score(&id.model(&trial, &trial_l));
                (lam, fit, sc)
            })
            .collect();

        // Serial best-so-far reduction: strict improvement only, so the
        // smallest threshold wins ties.
        let mut best = start;
        let mut best_idx = None;
        for (i, (_, _, sc)) in evaluated.iter().enumerate() {
            any_finite |= !sc.diverged;
            let e = replay.objective(cfg.metric, ind, sc);
            if e < best {
                best = e;
                best_idx = Some(i);
            }
        }
        for (i, (lam, _, sc)) in evaluated.iter().enumerate() {
            candidates.push(CandidateRecord {
                iteration,
                state: ind,
                lambda: *lam,
                rmse: replay.objective(cfg.metric, ind, sc),
                accepted: Some(i) == best_idx,
            });
        }
        if let Some(i) = best_idx {
            let (lam, fit, sc) = evaluated.into_iter().nth(i).expect("index in range");
            lambdas[ind] = lam;
            fits[ind] = fit;
            score = sc;
        }
        log::info!(
            "{}: lambda {} rmse {:.4e} -> {:.4e}",
            id.schema.state_names()[ind],
            lambdas[ind],
            start,
            best
        );
        lock_ins.push(LockIn {
            state: ind,
            lambda: lambdas[ind],
            start_rmse: start,
            final_rmse: best,
        });
        done[ind] = true;
        order.push(ind);
    }
    if !any_finite {
        return Err(Error::AllDiverged);
    }
    history.push(score.state_rmse.clone());
    Ok(ArsrReport {
        model: id.model(&fits, &lambdas),
        lambdas,
        rmse: score.state_rmse,
        output_rmse: score.output_rmse,
        outputs: replay.outputs().to_vec(),
        order,
        history,
        lock_ins,
        candidates,
        stlsq_calls,
    })
}

/// Builds the library on `train` and runs the adaptive search, scoring
/// candidates on `test`.
pub fn adaptive_sindy(
    train: &Trajectory,
    test: &Trajectory,
    spec: &LibrarySpec,
    cfg: &ArsrConfig,
) -> Result<ArsrReport> {
    if train.schema != test.schema {
        return Err(Error::SchemaMismatch("train and test schemas differ".into()));
    }
    let id = Identification::new(train, spec)?;
    adaptive_sindy_with(&id, test, cfg)
}

/// One row of a scalar threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub state_rmse: Vec<f64>,
    pub output_rmse: Vec<f64>,
    pub n_active: usize,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub state_names: Vec<String>,
    pub outputs: Vec<Output>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Smallest value of each output over the grid.
    pub fn best_outputs(&self) -> Vec<f64> {
        (0..self.outputs.len())
            .map(|o| {
                self.rows
                    .iter()
                    .map(|r| r.output_rmse[o])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// `lambda,<outputs>,<states>,active_terms`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda");
        for o in &self.outputs {
            let _ = write!(s, ",{}", o.name());
        }
        for n in &self.state_names {
            let _ = write!(s, ",{n}");
        }
        s.push_str(",active_terms\n");
        for r in &self.rows {
            let _ = write!(s, "{}", r.lambda);
            for v in r.output_rmse.iter().chain(&r.state_rmse) {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{}", r.n_active);
        }
        s
    }
}

/// Fits `Lambda = lambda * 1` for every grid value and replays each model.
pub fn scalar_lambda_sweep_with(
    id: &Identification,
    test: &Trajectory,
    grid: &[f64],
    opts: &StlsqOptions,
) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty threshold grid".into()));
    }
    let replay = TestReplay::new(test)?;
    let n = id.schema.n_states();
    let rows = grid
        .par_iter()
        .map(|&lam| {
            let lambdas = vec![lam; n];
            let model = id.fit(&lambdas, opts)?;
            let sc = replay.score(&model);
            Ok(SweepRow {
                lambda: lam,
                state_rmse: sc.state_rmse,
                output_rmse: sc.output_rmse,
                n_active: model.n_active(),
                diverged: sc.diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        state_names: id.schema.state_names().iter().map(|s| s.to_string()).collect(),
        outputs: replay.outputs().to_vec(),
        rows,
    })
}

pub fn scalar_lambda_sweep(
    train: &Trajectory,
    test: &Trajectory,
    spec: &LibrarySpec,
    grid: &[f64],
    opts: &StlsqOptions,
) -> Result<SweepTable> {
    let id = Identification::new(train, spec)?;
    scalar_lambda_sweep_with(&id, test, grid, opts)
}

/// The grid `{1, 5, 10, ..., 40}`.
pub fn default_grid() -> Vec<f64> {
    let mut g = vec![1.0];
    g.extend((1..=8).map(|k| 5.0 * k as f64));
    g
}
