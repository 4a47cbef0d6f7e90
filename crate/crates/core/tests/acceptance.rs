//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use pv_sindy::arsr::{
    adaptive_sindy_with, default_grid, scalar_lambda_sweep_with, ArsrConfig, ArsrReport,
};
use pv_sindy::control::{
    closed_loop_step_response, design_current_controller, extract_plant_params,
    simulate_data_driven, GainSet, DEFAULT_TAU_I,
};
use pv_sindy::evaluation::{self, fault_study, Output, RunOutcome, Window};
use pv_sindy::features::{build_library, LibrarySpec};
use pv_sindy::presets::{
    fault_scenario, identification_scenario, tracking_scenario, FaultKind, OperatingConditions,
};
use pv_sindy::pv_plant::{PlantParameters, Schema};
use pv_sindy::regression::{
    Identification, RegressionProblem, SparseModel, StlsqOptions,
};
use pv_sindy::simulator::{integrate, numeric_derivatives, rk4, split_train_test, Trajectory};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// Nonzero entries of the AC filter equations, written out from the
/// circuit: converter-side RL, shunt capacitor, grid-side RL.
fn ac_truth(p: &PlantParameters) -> Vec<(&'static str, Vec<(&'static str, f64)>)> {
    let w = p.omega0;
    vec![
        ("i_cd", vec![("i_cd", -p.r_c / p.l_c), ("i_cq", w), ("v_sd", -1.0 / p.l_c), ("v_cd", 1.0 / p.l_c)]),
        ("i_cq", vec![("i_cd", -w), ("i_cq", -p.r_c / p.l_c), ("v_sq", -1.0 / p.l_c), ("v_cq", 1.0 / p.l_c)]),
        ("i_gd", vec![("i_gd", -p.r_g / p.l_g), ("i_gq", w), ("v_sd", 1.0 / p.l_g), ("v_gd", -1.0 / p.l_g)]),
        ("i_gq", vec![("i_gd", -w), ("i_gq", -p.r_g / p.l_g), ("v_sq", 1.0 / p.l_g), ("v_gq", -1.0 / p.l_g)]),
        ("v_sd", vec![("i_cd", 1.0 / p.c_f), ("i_gd", -1.0 / p.c_f), ("v_sq", w)]),
        ("v_sq", vec![("i_cq", 1.0 / p.c_f), ("i_gq", -1.0 / p.c_f), ("v_sd", -w)]),
    ]
}

/// Compares one identified equation with its expected terms: same active
/// set, every coefficient within `tol` relative error.
fn compare_equation(
    model: &SparseModel,
    state: &str,
    expected: &[(&str, f64)],
    tol: f64,
) -> Result<f64, String> {
    let k = model
        .state_names()
        .iter()
        .position(|s| *s == state)
        .ok_or(format!("no state {state}"))?;
    let mut got: Vec<String> = model.active_terms(k);
    got.sort();
    let mut want: Vec<String> = expected.iter().map(|(t, _)| t.to_string()).collect();
    want.sort();
    if got != want {
        return Err(format!("d{state}: active {got:?}, expected {want:?}"));
    }
    let mut worst = 0.0f64;
    for (term, value) in expected {
        let c = model.coefficient(state, term).map_err(|e| e.to_string())?;
        let e = rel_err(c, *value);
        if e > tol {
            return Err(format!("d{state}/{term}: {c} vs {value} (rel {e:.2e})"));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

struct Data {
    params: PlantParameters,
    traj: Trajectory,
    build_time: Duration,
}

fn collect(schema: Schema, params: PlantParameters) -> Data {
    let t = Instant::now();
    let c = OperatingConditions::default();
    let sim = identification_scenario(schema, &params, &c).expect("scenario");
    let traj = integrate(&sim).expect("physical simulation");
    Data {
        params,
        traj,
        build_time: t.elapsed(),
    }
}

fn criterion_1(single: &Data) -> Outcome {
    let t = Instant::now();
    let spec = LibrarySpec::for_schema(Schema::SingleStage);
    let id = Identification::new(&single.traj, &spec).map_err(|e| e.to_string())?;
    // smallest true magnitude is r/L = 100
    let model = id
        .fit(&[10.0; 7], &StlsqOptions::default())
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed() + single.build_time;
    let mut worst = 0.0f64;
    for (state, terms) in ac_truth(&single.params) {
        worst = worst.max(compare_equation(&model, state, &terms, 1e-6)?);
    }
    check(
        elapsed < Duration::from_secs(60),
        format!("six AC equations exact, worst rel err {worst:.2e}, {}", fmt_secs(elapsed)),
    )
}

fn criterion_2(single: &Data, two: &Data) -> Outcome {
    let t = Instant::now();
    let opts = StlsqOptions::default();
    let p1 = &single.params;
    let m1 = Identification::new(&single.traj, &LibrarySpec::for_schema(Schema::SingleStage))
        .and_then(|id| id.fit(&[10.0; 7], &opts))
        .map_err(|e| e.to_string())?;
    // dv_dc = i_pv / C - 1.5 v_gd i_gd / (C v_dc)
    let e1 = compare_equation(
        &m1,
        "v_dc",
        &[("i_pv", 1.0 / p1.c_dc), ("v_gd*i_gd/v_dc", -1.5 / p1.c_dc)],
        1e-4,
    )?;

    let p2 = &two.params;
    let m2 = Identification::new(&two.traj, &LibrarySpec::for_schema(Schema::TwoStage))
        .and_then(|id| id.fit(&[10.0; 8], &opts))
        .map_err(|e| e.to_string())?;
    // dv_dc = (1 - d) i_pv / C - 1.5 (v_sd i_gd + v_sq i_gq) / (C v_dc)
    let e2 = compare_equation(
        &m2,
        "v_dc",
        &[
            ("i_pv", 1.0 / p2.c_dc),
            ("d_ref*i_pv", -1.0 / p2.c_dc),
            ("i_gd*v_sd/v_dc", -1.5 / p2.c_dc),
            ("i_gq*v_sq/v_dc", -1.5 / p2.c_dc),
        ],
        1e-4,
    )?;
    // di_pv = (v_pv - (1 - d) v_dc) / L_b
    let e3 = compare_equation(
        &m2,
        "i_pv",
        &[
            ("v_pv", 1.0 / p2.l_b),
            ("v_dc", -1.0 / p2.l_b),
            ("d_ref*v_dc", 1.0 / p2.l_b),
        ],
        1e-4,
    )?;
    let elapsed = t.elapsed() + single.build_time + two.build_time;
    check(
        elapsed < Duration::from_secs(120),
        format!(
            "rational DC-link and boost equations exact, worst rel err {:.2e}, {}",
            e1.max(e2).max(e3),
            fmt_secs(elapsed)
        ),
    )
}

struct ArsrRun {
    report: ArsrReport,
    rerun: ArsrReport,
    n: usize,
    cfg: ArsrConfig,
}

fn criterion_3(two: &Data) -> (Outcome, Option<ArsrRun>) {
    let run = || -> Result<(ArsrRun, String, bool), String> {
        let (train, test) = split_train_test(&two.traj, 0.8).map_err(|e| e.to_string())?;
        // Without rational candidates the power balance over v_dc is only
        // approximated, so the threshold choice matters.
        let mut spec = LibrarySpec::for_schema(Schema::TwoStage);
        spec.rational = false;
        let id = Identification::new(&train, &spec).map_err(|e| e.to_string())?;
        let opts = StlsqOptions::default();
        let sweep = scalar_lambda_sweep_with(&id, &test, &default_grid(), &opts)
            .map_err(|e| e.to_string())?;
        let best = sweep.best_outputs();
        let cfg = ArsrConfig::uniform(8, 1.0, 40.0, 1.0);
        let report = adaptive_sindy_with(&id, &test, &cfg).map_err(|e| e.to_string())?;
        let rerun = adaptive_sindy_with(&id, &test, &cfg).map_err(|e| e.to_string())?;
        let mut all_le = true;
        let mut any_lt = false;
        let mut parts = Vec::new();
        for (o, (a, b)) in sweep.outputs.iter().zip(report.output_rmse.iter().zip(&best)) {
            all_le &= a <= b;
            any_lt |= a < b;
            parts.push(format!("{} {:.4} vs {:.4}", o.name(), a, b));
        }
        Ok((
            ArsrRun {
                report,
                rerun,
                n: 8,
                cfg,
            },
            format!("adaptive vs best scalar: {}", parts.join(", ")),
            all_le && any_lt,
        ))
    };
    match run() {
        Ok((r, detail, ok)) => (check(ok, detail), Some(r)),
        Err(e) => (Err(e), None),
    }
}

fn mechanics(run: &ArsrRun) -> Result<String, String> {
    let r = &run.report;
    if r.lock_ins.len() != run.n {
        return Err(format!("{} lock-ins for {} states", r.lock_ins.len(), run.n));
    }
    for (k, l) in r.lock_ins.iter().enumerate() {
        if !(l.final_rmse <= l.start_rmse) {
            return Err(format!("lock-in {k}: {} > {}", l.final_rmse, l.start_rmse));
        }
        // the locked state was the worst remaining one at iteration start
        let start = &r.history[k];
        let worst = (0..run.n)
            .filter(|s| !r.order[..k].contains(s))
            .map(|s| start[s])
            .fold(f64::NEG_INFINITY, f64::max);
        if start[l.state] != worst {
            return Err(format!("lock-in {k} did not pick the worst remaining state"));
        }
    }
    let mut order = r.order.clone();
    order.sort();
    if order != (0..run.n).collect::<Vec<_>>() {
        return Err(format!("order {:?} is not a permutation", r.order));
    }
    let bound: usize = run.n
        * (0..run.n)
            .map(|k| {
                ((run.cfg.lambda_max[k] - run.cfg.lambda_init[k]) / run.cfg.steps[k]).floor() as usize + 1
            })
            .max()
            .unwrap_or(0)
        + run.n;
    if r.stlsq_calls > bound {
        return Err(format!("{} stlsq calls exceed bound {bound}", r.stlsq_calls));
    }
    let same = r.lambdas == run.rerun.lambdas
        && r.order == run.rerun.order
        && r.rmse.iter().zip(&run.rerun.rmse).all(|(a, b)| a.to_bits() == b.to_bits())
        && r.model.xi.iter().zip(run.rerun.model.xi.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
        && r.candidates == run.rerun.candidates;
    if !same {
        return Err("rerun differs".into());
    }
    Ok(format!("{} lock-ins, {} stlsq calls (bound {bound})", run.n, r.stlsq_calls))
}

fn criterion_4(runs: &[&ArsrRun]) -> Outcome {
    if runs.is_empty() {
        return Err("no adaptive runs available".into());
    }
    let mut parts = Vec::new();
    for r in runs {
        parts.push(mechanics(r)?);
    }
    Ok(format!("monotone lock-ins, permutations, bit-identical reruns: {}", parts.join("; ")))
}

fn residual_norm(theta: &DMatrix<f64>, c: &[f64], b: &[f64]) -> f64 {
    (theta * DVector::from_column_slice(c) - DVector::from_column_slice(b)).norm()
}

/// Random well-conditioned systems with a sparse truth and small noise.
fn random_system() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, 200 * 12),
        prop::collection::vec((0.5f64..3.0, prop::bool::ANY, prop::bool::ANY), 12 * 2),
        prop::collection::vec(-1e-3f64..1e-3, 200 * 2),
    )
        .prop_map(|(a, c, e)| {
            let theta = DMatrix::from_vec(200, 12, a);
            let xi = DMatrix::from_fn(12, 2, |j, s| {
                let (m, on, neg) = c[j * 2 + s];
                if on { if neg { -m } else { m } } else { 0.0 }
            });
            let xdot = &theta * xi + DMatrix::from_vec(200, 2, e);
            (theta, xdot)
        })
}

/// Largest residual-norm gap between lambda = 0 and the normal equations.
fn zero_threshold_gap(problem: &RegressionProblem, theta: &DMatrix<f64>, xdot: &DMatrix<f64>) -> Result<f64, String> {
    let gram = theta.transpose() * theta;
    let chol = gram.cholesky().ok_or("gram matrix not positive definite")?;
    let mut worst = 0.0f64;
    for s in 0..xdot.ncols() {
        let b: Vec<f64> = xdot.column(s).iter().copied().collect();
        let oracle = chol.solve(&(theta.transpose() * xdot.column(s)));
        let fit = problem.fit_state(s, 0.0, &StlsqOptions::default());
        worst = worst.max(
            (residual_norm(theta, &fit.coefficients, &b) - residual_norm(theta, oracle.as_slice(), &b)).abs(),
        );
    }
    Ok(worst)
}

/// Sparsity, threshold and fixpoint invariants over an increasing grid.
fn stlsq_invariants(problem: &RegressionProblem, n_states: usize, grid: &[f64]) -> Result<(), String> {
    let opts = StlsqOptions::default();
    for s in 0..n_states {
        let mut prev = usize::MAX;
        for &lam in grid {
            let fit = problem.fit_state(s, lam, &opts);
            let active: Vec<bool> = fit.coefficients.iter().map(|c| *c != 0.0).collect();
            let n = active.iter().filter(|a| **a).count();
            if n > prev {
                return Err(format!("state {s}: active set grew at lambda {lam}"));
            }
            prev = n;
            if let Some(c) = fit.coefficients.iter().find(|c| **c != 0.0 && c.abs() < lam) {
                return Err(format!("state {s}: coefficient {c} below lambda {lam}"));
            }
            // refitting on the surviving set changes nothing
            if n > 0 {
                let again = problem.solve(s, &active);
                for (a, b) in fit.coefficients.iter().zip(&again.coefficients) {
                    if (a - b).abs() > 1e-8 * a.abs().max(1.0) {
                        return Err(format!("state {s}, lambda {lam}: refit moved {a} -> {b}"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn criterion_5(single: &Data) -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        ProptestConfig { cases: 64, ..ProptestConfig::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let worst_random = std::cell::Cell::new(0.0f64);
    runner
        .run(&random_system(), |(theta, xdot)| {
            let problem = RegressionProblem::new(&theta, &xdot)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            stlsq_invariants(&problem, 2, &[0.0, 0.1, 0.4, 1.0, 2.0, 5.0]).map_err(TestCaseError::fail)?;
            let w = zero_threshold_gap(&problem, &theta, &xdot).map_err(TestCaseError::fail)?;
            worst_random.set(worst_random.get().max(w));
            prop_assert!(w <= 1e-10, "lambda = 0 residual differs from least squares by {w:.2e}");
            Ok(())
        })
        .map_err(|e| format!("random systems: {e}"))?;

    let lib = build_library(&single.traj, &LibrarySpec::for_schema(Schema::SingleStage))
        .map_err(|e| e.to_string())?;
    let id = Identification::from_library(Schema::SingleStage, lib, &single.traj.xdot)
        .map_err(|e| e.to_string())?;
    let grid = [0.0, 0.5, 1.0, 5.0, 10.0, 50.0, 150.0, 500.0, 2000.0, 1e5];
    stlsq_invariants(&id.problem, 7, &grid).map_err(|e| format!("plant data: {e}"))?;
    Ok(format!(
        "64 random systems: lambda = 0 residual within {:.1e} of the normal equations, monotone sparsity, threshold and fixpoint hold; sparsity, threshold and fixpoint also hold on the single-stage record",
        worst_random.get()
    ))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let p = PlantParameters::single_stage_default();
    let tau = DEFAULT_TAU_I;
    let g = design_current_controller(p.l_c, p.r_c, tau).map_err(|e| e.to_string())?;
    let dt = tau / 1000.0;
    let y = closed_loop_step_response(&g, p.l_c, p.r_c, dt, 5.0 * tau).map_err(|e| e.to_string())?;
    let at_tau = y[1000].1;
    let peak = y.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let elapsed = t.elapsed();
    check(
        (at_tau - 0.6321).abs() <= 0.002 && peak <= 1.0 && elapsed < Duration::from_secs(1),
        format!("y(tau) = {at_tau:.5}, peak {peak:.6}, {}", fmt_secs(elapsed)),
    )
}

fn identified_gains(data: &Data, schema: Schema) -> Result<(SparseModel, GainSet), String> {
    let model = Identification::new(&data.traj, &LibrarySpec::for_schema(schema))
        .and_then(|id| id.fit(&vec![10.0; schema.n_states()], &StlsqOptions::default()))
        .map_err(|e| e.to_string())?;
    let (l, r) = extract_plant_params(&model).map_err(|e| e.to_string())?;
    let g = design_current_controller(l, r, DEFAULT_TAU_I).map_err(|e| e.to_string())?;
    Ok((model, GainSet::mirrored(schema, g, &data.params)))
}

fn criterion_7(single: &Data, two: &Data) -> Outcome {
    let t = Instant::now();
    let c = OperatingConditions::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (schema, data) in [(Schema::SingleStage, single), (Schema::TwoStage, two)] {
        let (model, gains) = identified_gains(data, schema)?;
        let sim = tracking_scenario(schema, &data.params, &c).map_err(|e| e.to_string())?;
        let phys = integrate(&sim).map_err(|e| e.to_string())?;
        let dd = simulate_data_driven(&model, &gains, &sim).map_err(|e| e.to_string())?;
        for o in Output::for_schema(schema) {
            let a = o.series(&phys).map_err(|e| e.to_string())?;
            let b = o.series(&dd).map_err(|e| e.to_string())?;
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let frac = evaluation::rmse(&a, &b) / (hi - lo);
            ok &= frac < 0.01;
            parts.push(format!("{schema} {} {:.1e}", o.name(), frac));
        }
    }
    let elapsed = t.elapsed() + single.build_time + two.build_time;
    check(
        ok && elapsed < Duration::from_secs(120),
        format!("RMSE / range: {}, {}", parts.join(", "), fmt_secs(elapsed)),
    )
}

fn criterion_8(closed: &Data) -> (Outcome, Option<ArsrRun>) {
    let run = || -> Result<(ArsrRun, String, bool), String> {
        let (train, test) = split_train_test(&closed.traj, 0.8).map_err(|e| e.to_string())?;
        let id = Identification::new(&train, &LibrarySpec::for_schema(Schema::ClosedLoop))
            .map_err(|e| e.to_string())?;
        let opts = StlsqOptions::default();
        let mut cfg = ArsrConfig::uniform(10, 1.0, 40.0, 1.0);
        // the DC-link integrator equation carries coefficients of size K_i2
        let delta = Schema::ClosedLoop.state_index("delta").ok_or("no delta state")?;
        cfg.lambda_init[delta] = 0.1 * closed.params.k_i2.abs();
        let report = adaptive_sindy_with(&id, &test, &cfg).map_err(|e| e.to_string())?;
        let rerun = adaptive_sindy_with(&id, &test, &cfg).map_err(|e| e.to_string())?;
        let sweep = scalar_lambda_sweep_with(&id, &test, &default_grid(), &opts)
            .map_err(|e| e.to_string())?;
        let total: f64 = report.rmse.iter().sum();
        let grid_totals: Vec<f64> = sweep.rows.iter().map(|r| r.state_rmse.iter().sum()).collect();
        let best_grid = grid_totals.iter().copied().fold(f64::INFINITY, f64::min);
        let low = report.lambdas.iter().any(|l| *l < 0.1);
        let high = report.lambdas.iter().any(|l| *l > 5.0);
        let beats = grid_totals.iter().all(|g| *g > total);
        let lambdas: Vec<String> = report.lambdas.iter().map(|l| l.to_string()).collect();
        Ok((
            ArsrRun {
                report,
                rerun,
                n: 10,
                cfg,
            },
            format!(
                "Lambda = [{}], total state RMSE {total:.3e} vs best scalar {best_grid:.3e}",
                lambdas.join(", ")
            ),
            low && high && beats && lambdas.len() == 10,
        ))
    };
    match run() {
        Ok((r, detail, ok)) => (check(ok, detail), Some(r)),
        Err(e) => (Err(e), None),
    }
}

fn criterion_9(single: &Data, two: &Data) -> Outcome {
    let c = OperatingConditions::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (schema, data) in [(Schema::SingleStage, single), (Schema::TwoStage, two)] {
        let (model, gains) = identified_gains(data, schema)?;
        for kind in [FaultKind::Undervoltage, FaultKind::ThreePhase] {
            let sim = fault_scenario(schema, &data.params, &c, kind).map_err(|e| e.to_string())?;
            let phys = RunOutcome::from_result(integrate(&sim));
            let dd = RunOutcome::from_result(simulate_data_driven(&model, &gains, &sim));
            let finite = |r: &RunOutcome| {
                r.trajectory().is_some_and(|t| {
                    Output::for_schema(schema)
                        .iter()
                        .all(|o| o.series(t).is_ok_and(|s| s.iter().all(|v| v.is_finite())))
                })
            };
            let both = finite(&phys) && finite(&dd);
            let report = fault_study("fault", phys, dd, sim.fault.as_ref().ok_or("no fault")?, &Output::for_schema(schema), &[10.0])
                .map_err(|e| e.to_string())?;
            let v = report.rmse("v_dc", Window::Whole).unwrap_or(f64::INFINITY);
            ok &= both && report.completed() && v < 0.01 * c.v_dc;
            parts.push(format!("{schema} {kind:?} v_dc {v:.1e} V"));
        }
    }
    check(ok, format!("all runs finite; data-driven v_dc RMSE: {}", parts.join(", ")))
}

fn criterion_10() -> Outcome {
    let exact = (-1.0f64).exp();
    let err = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let x = rk4(|_, x: &[f64]| Ok(vec![-x[0]]), &[1.0], 0.0, dt, steps).expect("rk4");
        (x[steps][0] - exact).abs()
    };
    let ratio = err(0.1) / err(0.05);

    let dt = 1e-3;
    let n = 10_001;
    let sine = DMatrix::from_fn(n, 1, |k, _| (k as f64 * dt).sin());
    let d = numeric_derivatives(&sine, dt).map_err(|e| e.to_string())?;
    let max_err = (0..n)
        .map(|k| (d[(k, 0)] - (k as f64 * dt).cos()).abs())
        .fold(0.0, f64::max);

    let a = [1.0, 2.0, 3.0];
    let b = [2.0, 2.0, 5.0];
    let hand = (5.0f64 / 3.0).sqrt();
    let rmse_ok = evaluation::rmse(&a, &b) == hand && evaluation::rmse(&[0.0, 0.0, 0.0], &[3.0, -3.0, 3.0]) == 3.0;

    check(
        (14.0..=18.0).contains(&ratio) && max_err < 1e-5 && rmse_ok,
        format!("RK4 halving ratio {ratio:.3}, derivative max err {max_err:.2e}, RMSE fixtures exact: {rmse_ok}"),
    )
}

fn main() {
    let started = Instant::now();
    let single = collect(Schema::SingleStage, PlantParameters::single_stage_default());
    let two = collect(Schema::TwoStage, PlantParameters::two_stage_default());
    let closed = collect(Schema::ClosedLoop, PlantParameters::single_stage_default());

    let mut results: BTreeMap<usize, (&str, Outcome)> = BTreeMap::new();
    results.insert(1, ("exact recovery, linear block", criterion_1(&single)));
    results.insert(2, ("exact recovery, rational terms", criterion_2(&single, &two)));
    let (c3, run3) = criterion_3(&two);
    results.insert(3, ("adaptive thresholds dominate scalar sweep", c3));
    let (c8, run8) = criterion_8(&closed);
    let runs: Vec<&ArsrRun> = run3.iter().chain(run8.iter()).collect();
    results.insert(4, ("adaptive search mechanics", criterion_4(&runs)));
    results.insert(5, ("thresholded least squares invariants", criterion_5(&single)));
    results.insert(6, ("current controller step response", criterion_6()));
    results.insert(7, ("data-driven closed loop fidelity", criterion_7(&single, &two)));
    results.insert(8, ("closed-loop identification", c8));
    results.insert(9, ("fault replay boundedness", criterion_9(&single, &two)));
    results.insert(10, ("numerics", criterion_10()));

    let mut failed = 0;
    for (k, (name, outcome)) in &results {
        match outcome {
            Ok(d) => println!("criterion {k:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {k:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed, {}",
        results.len() - failed,
        fmt_secs(started.elapsed())
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
