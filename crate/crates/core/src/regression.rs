//! Sequentially thresholded least squares with one threshold per state.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, term_name, FeatureLibrary, LibrarySpec, TermDescriptor};
use crate::pv_plant::Schema;
use crate::simulator::{
    integrate_system, DerivativeMode, InputProvider, OpenLoopPlant, OpenLoopReplay, Trajectory,
};

/// Least-squares solution on a subset of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    /// Full-length vector; inactive entries are zero.
    pub coefficients: Vec<f64>,
    /// Numerical rank of the active columns.
    pub rank: usize,
    pub n_active: usize,
    /// `||b - Theta c||_2`.
    pub residual_norm: f64,
}

impl LstsqSolution {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.n_active
    }
}

/// R factor of `[a | b]` computed chunk by chunk over the rows, padded to
/// a square matrix.
fn tsqr(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
    let p = k + m;
    let chunk = 2048.max(8 * p);
    let mut r = DMatrix::<f64>::zeros(0, p);
    let mut start = 0;
    while start < n {
        let len = chunk.min(n - start);
        let top = r.nrows();
        let mut block = DMatrix::zeros(top + len, p);
        block.view_mut((0, 0), (top, p)).copy_from(&r);
        block.view_mut((top, 0), (len, k)).copy_from(&a.rows(start, len));
        block.view_mut((top, k), (len, m)).copy_from(&b.rows(start, len));
        r = block.qr().r();
        start += len;
    }
    let mut out = DMatrix::zeros(p, p);
    let rows = r.nrows();
    out.view_mut((0, 0), (rows, p)).copy_from(&r);
    out
}

/// Minimum-norm solution of `min ||z - r_a c||` for each right-hand side
/// column of `z`, with columns of `r_a` equilibrated before the SVD.
/// Returns coefficients (`|A| x rhs`) and the numerical rank.
fn solve_reduced(r_a: &DMatrix<f64>, z: &DMatrix<f64>, n_rows: usize) -> (DMatrix<f64>, usize) {
    let na = r_a.ncols();
    let mut coef = DMatrix::zeros(na, z.ncols());
    if na == 0 {
        return (coef, 0);
    }
    let scale: Vec<f64> = (0..na).map(|j| r_a.column(j).norm()).collect();
    let live: Vec<usize> = (0..na).filter(|&j| scale[j] > 0.0).collect();
    if live.is_empty() {
        return (coef, 0);
    }
    let mut b = DMatrix::zeros(r_a.nrows(), live.len());
    for (c, &j) in live.iter().enumerate() {
        b.set_column(c, &(r_a.column(j) / scale[j]));
    }
    let svd = b.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let smax = s.max();
    let tol = smax * (n_rows.max(live.len()) as f64) * f64::EPSILON;
    let rank = s.iter().filter(|&&x| x > tol).count();
    for col in 0..z.ncols() {
        let mut y = DVector::zeros(live.len());
        for i in 0..s.len() {
            if s[i] > tol {
                let proj = u.column(i).dot(&z.column(col)) / s[i];
                y += v_t.row(i).transpose() * proj;
            }
        }
        for (c, &j) in live.iter().enumerate() {
            coef[(j, col)] = y[c] / scale[j];
        }
    }
    (coef, rank)
}

/// Solves `min ||b - theta[:, active] c||_2`; inactive coefficients are zero.
/// Rank deficiency is reported in the result, with the minimum-norm solution.
pub fn least_squares(theta: &DMatrix<f64>, b: &[f64], active: &[bool]) -> Result<LstsqSolution> {
    if b.len() != theta.nrows() || active.len() != theta.ncols() {
        return Err(Error::InvalidArgument("least squares dimensions disagree".into()));
    }
    let idx: Vec<usize> = (0..active.len()).filter(|&j| active[j]).collect();
    if theta.nrows() < idx.len() {
        return Err(Error::TooShort {
            needed: idx.len(),
            got: theta.nrows(),
        });
    }
    let sub = theta.select_columns(&idx);
    let rhs = DMatrix::from_column_slice(b.len(), 1, b);
    let r = tsqr(&sub, &rhs);
    let k = idx.len();
    let r_a = r.view((0, 0), (k, k)).into_owned();
    let z = r.view((0, k), (k, 1)).into_owned();
    let perp = r[(k, k)];
    let (c, rank) = solve_reduced(&r_a, &z, theta.nrows());
    let fit = &r_a * &c;
    let residual_norm = ((&z - fit).norm_squared() + perp * perp).sqrt();
    let mut coefficients = vec![0.0; theta.ncols()];
    for (i, &j) in idx.iter().enumerate() {
        coefficients[j] = c[(i, 0)];
    }
    Ok(LstsqSolution {
        coefficients,
        rank,
        n_active: k,
        residual_norm,
    })
}

/// How a coefficient is compared with its state's threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// `|c_j| >= lambda`.
    #[default]
    Magnitude,
    /// `|c_j| * rms(theta_j) >= lambda`.
    ColumnScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StlsqOptions {
    pub max_iters: usize,
    pub threshold: ThresholdMode,
}

impl Default for StlsqOptions {
    fn default() -> Self {
        Self {
            max_iters: 10,
            threshold: ThresholdMode::Magnitude,
        }
    }
}

/// Outcome of thresholded regression for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rank: usize,
    pub rank_deficient: bool,
    /// Every coefficient was thresholded away.
    pub empty: bool,
    pub residual_norm: f64,
}

/// Data of a regression problem reduced to `K x K` by one orthogonal
/// factorization, so that refits on column subsets are cheap.
pub struct RegressionProblem {
    n_rows: usize,
    r: DMatrix<f64>,
    z: DMatrix<f64>,
    perp2: Vec<f64>,
    col_rms: Vec<f64>,
    full_fit: OnceLock<Vec<LstsqSolution>>,
}

impl RegressionProblem {
    pub fn new(theta: &DMatrix<f64>, xdot: &DMatrix<f64>) -> Result<Self> {
        if theta.nrows() != xdot.nrows() {
            return Err(Error::InvalidArgument(format!(
                "library has {} rows, derivatives {}",
                theta.nrows(),
                xdot.nrows()
            )));
        }
        let (k, n) = (theta.ncols(), xdot.ncols());
        let full = tsqr(theta, xdot);
        let r = full.view((0, 0), (k, k)).into_owned();
        let z = full.view((0, k), (k, n)).into_owned();
        let perp2 = (0..n)
            .map(|s| full.view((k, k + s), (n, 1)).norm_squared())
            .collect();
        let rows = theta.nrows().max(1) as f64;
        let col_rms = (0..k).map(|j| theta.column(j).norm() / rows.sqrt()).collect();
        Ok(Self {
            n_rows: theta.nrows(),
            r,
            z,
            perp2,
            col_rms,
            full_fit: OnceLock::new(),
        })
    }

    pub fn n_terms(&self) -> usize {
        self.r.ncols()
    }

    pub fn n_states(&self) -> usize {
        self.z.ncols()
    }

    /// Root-mean-square of each library column.
    pub fn column_rms(&self) -> &[f64] {
        &self.col_rms
    }

    fn solve_many(&self, states: &[usize], active: &[bool]) -> Vec<LstsqSolution> {
        let idx: Vec<usize> = (0..active.len()).filter(|&j| active[j]).collect();
        let r_a = self.r.select_columns(&idx);
        let z = self.z.select_columns(states);
        let (c, rank) = solve_reduced(&r_a, &z, self.n_rows);
        let fit = &r_a * &c;
        states
            .iter()
            .enumerate()
            .map(|(col, &s)| {
                let res = (z.column(col) - fit.column(col)).norm_squared() + self.perp2[s];
                let mut coefficients = vec![0.0; self.n_terms()];
                for (i, &j) in idx.iter().enumerate() {
                    coefficients[j] = c[(i, col)];
                }
                LstsqSolution {
                    coefficients,
                    rank,
                    n_active: idx.len(),
                    residual_norm: res.sqrt(),
                }
            })
            .collect()
    }

    /// Least squares of state `state` on the columns in `active`.
    pub fn solve(&self, state: usize, active: &[bool]) -> LstsqSolution {
        if active.iter().all(|a| *a) {
            return self.full_solution(state).clone();
        }
        self.solve_many(&[state], active).remove(0)
    }

    fn full_solution(&self, state: usize) -> &LstsqSolution {
        &self.full_fit.get_or_init(|| {
            let states: Vec<usize> = (0..self.n_states()).collect();
            self.solve_many(&states, &vec![true; self.n_terms()])
        })[state]
    }

    fn keeps(&self, c: f64, j: usize, lambda: f64, mode: ThresholdMode) -> bool {
        match mode {
            ThresholdMode::Magnitude => c.abs() >= lambda,
            ThresholdMode::ColumnScaled => c.abs() * self.col_rms[j] >= lambda,
        }
    }

    /// Thresholded least squares for one state.
    pub fn fit_state(&self, state: usize, lambda: f64, opts: &StlsqOptions) -> StateFit {
        let k = self.n_terms();
        let mut active = vec![true; k];
        let mut sol = self.solve(state, &active);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iters {
            iterations += 1;
            let next: Vec<bool> = (0..k)
                .map(|j| active[j] && self.keeps(sol.coefficients[j], j, lambda, opts.threshold))
                .collect();
            if next == active {
                converged = true;
                break;
            }
            active = next;
            sol = self.solve(state, &active);
        }
        let mut coefficients = sol.coefficients;
        if !converged {
            for j in 0..k {
                if !self.keeps(coefficients[j], j, lambda, opts.threshold) {
                    coefficients[j] = 0.0;
                }
            }
        }
        let empty = coefficients.iter().all(|c| *c == 0.0);
        StateFit {
            coefficients,
            iterations,
            converged,
            rank: sol.rank,
            rank_deficient: sol.rank < sol.n_active,
            empty,
            residual_norm: sol.residual_norm,
        }
    }

    /// Thresholded least squares for every state, one threshold each.
    pub fn fit(&self, lambdas: &[f64], opts: &StlsqOptions) -> Result<Vec<StateFit>> {
        if lambdas.len() != self.n_states() {
            return Err(Error::InvalidArgument(format!(
                "{} thresholds for {} states",
                lambdas.len(),
                self.n_states()
            )));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidArgument("thresholds must be non-negative".into()));
        }
        if opts.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        // Warm the shared full fit before fanning out.
        self.full_solution(0);
        Ok(lambdas
            .par_iter()
            .enumerate()
            .map(|(s, &l)| self.fit_state(s, l, opts))
            .collect())
    }
}

/// Thresholded regression on an explicit library matrix; column `k` of the
/// returned `K x n` matrix belongs to state `k`.
pub fn stlsq(
    theta: &DMatrix<f64>,
    xdot: &DMatrix<f64>,
    lambdas: &[f64],
    opts: &StlsqOptions,
) -> Result<(DMatrix<f64>, Vec<StateFit>)> {
    let problem = RegressionProblem::new(theta, xdot)?;
    let fits = problem.fit(lambdas, opts)?;
    Ok((coefficient_matrix(&fits, problem.n_terms()), fits))
}

fn coefficient_matrix(fits: &[StateFit], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, fits.len(), |j, s| fits[s].coefficients[j])
}

/// Per-state diagnostics kept with an identified model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    pub empty: bool,
    pub residual_norm: f64,
}

/// An identified model `xdot = Theta(x, u) Xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub schema: Schema,
    pub library: LibrarySpec,
    pub descriptors: Vec<TermDescriptor>,
    pub variable_names: Vec<String>,
    /// `K x n`.
    pub xi: DMatrix<f64>,
    pub lambdas: Vec<f64>,
    /// Empty for models loaded from file.
    pub fits: Vec<FitInfo>,
}

impl SparseModel {
    /// A model with every coefficient zero.
    pub fn zeros(schema: Schema, library: &LibrarySpec) -> Result<Self> {
        let descriptors = features::schema_terms(schema, library)?;
        let k = descriptors.len();
        Ok(Self {
            schema,
            library: library.clone(),
            descriptors,
            variable_names: schema.variable_names(),
            xi: DMatrix::zeros(k, schema.n_states()),
            lambdas: vec![0.0; schema.n_states()],
            fits: Vec::new(),
        })
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        self.schema.state_names()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.descriptors
            .iter()
            .map(|d| term_name(d, &self.variable_names))
            .collect()
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.descriptors
            .iter()
            .position(|d| term_name(d, &self.variable_names) == term)
    }

    /// Names of the nonzero terms of one state equation.
    pub fn active_terms(&self, state: usize) -> Vec<String> {
        (0..self.descriptors.len())
            .filter(|&j| self.xi[(j, state)] != 0.0)
            .map(|j| term_name(&self.descriptors[j], &self.variable_names))
            .collect()
    }

    /// Coefficient of `term` in the equation of `state`; zero if absent.
    pub fn coefficient(&self, state: &str, term: &str) -> Result<f64> {
        let s = self
            .schema
            .state_index(state)
            .ok_or_else(|| Error::SchemaMismatch(format!("no state `{state}`")))?;
        Ok(self.term_index(term).map(|j| self.xi[(j, s)]).unwrap_or(0.0))
    }

    pub fn n_active(&self) -> usize {
        self.xi.iter().filter(|c| **c != 0.0).count()
    }

    pub fn evaluator(&self) -> ModelEvaluator {
        ModelEvaluator::new(self)
    }

    /// Plain-text export: header lines, then `state,term,coefficient` rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("schema,{}\n", self.schema));
        s.push_str(&format!("library,{}\n", self.library.to_line()));
        let l: Vec<String> = self.lambdas.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("lambda,{}\n", l.join(",")));
        s.push_str("state,term,coefficient\n");
        let names = self.term_names();
        for (k, state) in self.state_names().iter().enumerate() {
            for (j, name) in names.iter().enumerate() {
                let c = self.xi[(j, k)];
                if c != 0.0 {
                    s.push_str(&format!("{state},{name},{c}\n"));
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("model file ends before `{key}`")))?;
            line.strip_prefix(&format!("{key},"))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("expected `{key}` line, got `{line}`")))
        };
        let schema: Schema = header("schema")?.parse()?;
        let library = LibrarySpec::from_line(&header("library")?)?;
        let lambdas: Vec<f64> = header("lambda")?
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("lambda line: {e}")))?;
        if lambdas.len() != schema.n_states() {
            return Err(Error::SchemaMismatch(format!(
                "{} thresholds for {} states",
                lambdas.len(),
                schema.n_states()
            )));
        }
        match lines.next() {
            Some("state,term,coefficient") => {}
            other => return Err(Error::Parse(format!("expected table header, got {other:?}"))),
        }
        let mut model = SparseModel::zeros(schema, &library)?;
        model.lambdas = lambdas;
        let names = model.term_names();
        for line in lines {
            let mut it = line.splitn(3, ',');
            let (Some(state), Some(term), Some(coef)) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad model row `{line}`")));
            };
            let s = schema
                .state_index(state)
                .ok_or_else(|| Error::Parse(format!("unknown state `{state}`")))?;
            let j = names
                .iter()
                .position(|n| n == term)
                .ok_or_else(|| Error::Parse(format!("unknown term `{term}`")))?;
            model.xi[(j, s)] = coef
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("coefficient `{coef}`: {e}")))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Fast evaluation of `Theta(x, u) Xi` using only the nonzero terms.
#[derive(Debug, Clone)]
pub struct ModelEvaluator {
    schema: Schema,
    terms: Vec<TermDescriptor>,
    /// Per state: `(index into terms, coefficient)`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl ModelEvaluator {
    fn new(model: &SparseModel) -> Self {
        let n = model.schema.n_states();
        let used: Vec<usize> = (0..model.descriptors.len())
            .filter(|&j| (0..n).any(|s| model.xi[(j, s)] != 0.0))
            .collect();
        let rows = (0..n)
            .map(|s| {
                used.iter()
                    .enumerate()
                    .filter(|(_, &j)| model.xi[(j, s)] != 0.0)
                    .map(|(t, &j)| (t, model.xi[(j, s)]))
                    .collect()
            })
            .collect();
        Self {
            schema: model.schema,
            terms: used.iter().map(|&j| model.descriptors[j].clone()).collect(),
            rows,
        }
    }

    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.schema.check_state(x)?;
        self.schema.check_input(u)?;
        let vals = features::evaluate_library(&self.terms, x, u)?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(t, c)| c * vals[t]).sum())
            .collect())
    }
}

/// An identified model used as an open-loop plant.
#[derive(Debug, Clone)]
pub struct IdentifiedPlant {
    evaluator: ModelEvaluator,
}

impl IdentifiedPlant {
    pub fn new(model: &SparseModel) -> Self {
        Self {
            evaluator: model.evaluator(),
        }
    }
}

impl OpenLoopPlant for IdentifiedPlant {
    fn schema(&self) -> Schema {
        self.evaluator.schema
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.evaluator.rhs(x, u)
    }
}

/// RK4 simulation of an identified model driven by `inputs`.
pub fn simulate_identified<I: InputProvider>(
    model: &SparseModel,
    x0: &[f64],
    inputs: I,
    t0: f64,
    dt: f64,
    duration: f64,
) -> Result<Trajectory> {
    model.schema.check_state(x0)?;
    if inputs.n_inputs() != model.schema.n_inputs() {
        return Err(Error::SchemaMismatch(format!(
            "input provider has {} columns, {} needs {}",
            inputs.n_inputs(),
            model.schema,
            model.schema.n_inputs()
        )));
    }
    let sys = OpenLoopReplay {
        plant: IdentifiedPlant::new(model),
        inputs,
    };
    integrate_system(&sys, x0, t0, dt, duration, DerivativeMode::Exact)
}

/// A library and its reduced regression problem for one training trajectory.
pub struct Identification {
    pub schema: Schema,
    pub spec: LibrarySpec,
    pub descriptors: Vec<TermDescriptor>,
    pub variable_names: Vec<String>,
    pub degenerate: Vec<usize>,
    pub problem: RegressionProblem,
}

impl Identification {
    pub fn new(train: &Trajectory, spec: &LibrarySpec) -> Result<Self> {
        let lib = features::build_library(train, spec)?;
        Self::from_library(train.schema, lib, &train.xdot)
    }

    pub fn from_library(schema: Schema, lib: FeatureLibrary, xdot: &DMatrix<f64>) -> Result<Self> {
        if xdot.ncols() != schema.n_states() {
            return Err(Error::SchemaMismatch("derivative columns do not match schema".into()));
        }
        let problem = RegressionProblem::new(&lib.theta, xdot)?;
        Ok(Self {
            schema,
            spec: lib.spec,
            descriptors: lib.descriptors,
            variable_names: lib.variable_names,
            degenerate: lib.degenerate,
            problem,
        })
    }

    pub fn model(&self, fits: &[StateFit], lambdas: &[f64]) -> SparseModel {
        SparseModel {
            schema: self.schema,
            library: self.spec.clone(),
            descriptors: self.descriptors.clone(),
            variable_names: self.variable_names.clone(),
            xi: coefficient_matrix(fits, self.descriptors.len()),
            lambdas: lambdas.to_vec(),
            fits: fits
                .iter()
                .map(|f| FitInfo {
                    iterations: f.iterations,
                    converged: f.converged,
                    rank_deficient: f.rank_deficient,
                    empty: f.empty,
                    residual_norm: f.residual_norm,
                })
                .collect(),
        }
    }

    pub fn fit(&self, lambdas: &[f64], opts: &StlsqOptions) -> Result<SparseModel> {
        let fits = self.problem.fit(lambdas, opts)?;
        for (k, f) in fits.iter().enumerate() {
            if f.rank_deficient {
                log::debug!(
                    "{} equation: active columns are rank deficient (rank {})",
                    self.schema.state_names()[k],
                    f.rank
                );
            }
        }
        Ok(self.model(&fits, lambdas))
    }
}

/// Builds the library on `train` and fits it with the given thresholds.
pub fn identify(
    train: &Trajectory,
    spec: &LibrarySpec,
    lambdas: &[f64],
    opts: &StlsqOptions,
) -> Result<SparseModel> {
    Identification::new(train, spec)?.fit(lambdas, opts)
}
