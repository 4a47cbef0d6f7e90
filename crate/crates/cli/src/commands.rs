use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pv_sindy::arsr::{adaptive_sindy_with, scalar_lambda_sweep_with};
use pv_sindy::control::{
    closed_loop_step_response, design_current_controller, extract_plant_params,
    simulate_data_driven, ControllerGains, GainSet,
};
use pv_sindy::evaluation::{compare_models, fault_study, write_plot_data, ComparisonReport, Output, RunOutcome};
use pv_sindy::pv_plant::Schema;
use pv_sindy::regression::{Identification, IdentifiedPlant, SparseModel};
use pv_sindy::simulator::{
    integrate, integrate_system, split_train_test, InputSource, OpenLoopReplay, ScheduleInputs,
    Simulation, Trajectory,
};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum IdentifyMode {
    ScalarSweep,
    Arsr,
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Output {
            path: dir.display().to_string(),
            source,
        })?;
        let out = Self(dir);
        out.write("manifest.toml", &cfg.to_toml())?;
        Ok(out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })
    }

    fn io(&self, name: &str, e: pv_sindy::Error) -> CliError {
        let path = self.path(name).display().to_string();
        CliError::Output {
            path,
            source: std::io::Error::other(e.to_string()),
        }
    }
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<SparseModel, CliError> {
    let model = SparseModel::load(path)
        .map_err(|e| CliError::Config(format!("model {}: {e}", path.display())))?;
    if model.schema != cfg.plant {
        return Err(CliError::Config(format!(
            "model is {}, configuration selects {}",
            model.schema, cfg.plant
        )));
    }
    Ok(model)
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = OutDir::create(cfg)?;
    let traj = integrate(&cfg.simulation()).map_err(CliError::Simulation)?;
    traj.save_csv(&out.path("trajectory.csv"))
        .map_err(|e| out.io("trajectory.csv", e))?;
    log::info!("{} samples written to {}", traj.len(), out.0.display());
    Ok(())
}

fn training_data(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    match &cfg.identify.trajectory {
        Some(path) => {
            let t = Trajectory::load_csv(path)
                .map_err(|e| CliError::Config(format!("trajectory {}: {e}", path.display())))?;
            if t.schema != cfg.plant {
                return Err(CliError::Config(format!(
                    "trajectory is {}, configuration selects {}",
                    t.schema, cfg.plant
                )));
            }
            Ok(t)
        }
        None => integrate(&cfg.nominal_simulation()).map_err(CliError::Simulation),
    }
}

pub fn identify(cfg: &RunConfig, mode: IdentifyMode) -> Result<(), CliError> {
    let out = OutDir::create(cfg)?;
    let traj = training_data(cfg)?;
    let (train, test) =
        split_train_test(&traj, cfg.arsr.split_ratio).map_err(CliError::Regression)?;
    let id = Identification::new(&train, &cfg.library).map_err(CliError::Regression)?;
    if !id.degenerate.is_empty() {
        log::warn!("{} library columns are identically zero", id.degenerate.len());
    }
    match mode {
        IdentifyMode::ScalarSweep => {
            let table = scalar_lambda_sweep_with(&id, &test, &cfg.identify.grid, &cfg.arsr.stlsq)
                .map_err(CliError::Regression)?;
            out.write("sweep.csv", &table.to_csv())?;
            // keep the grid value with the smallest total state error
            let best = table
                .rows
                .iter()
                .filter(|r| !r.diverged)
                .min_by(|a, b| {
                    let ta: f64 = a.state_rmse.iter().sum();
                    let tb: f64 = b.state_rmse.iter().sum();
                    ta.total_cmp(&tb)
                })
                .ok_or(CliError::Regression(pv_sindy::Error::AllDiverged))?;
            let model = id
                .fit(&vec![best.lambda; cfg.plant.n_states()], &cfg.arsr.stlsq)
                .map_err(CliError::Regression)?;
            model.save(&out.path("model.txt")).map_err(|e| out.io("model.txt", e))?;
            log::info!("best scalar threshold {}", best.lambda);
        }
        IdentifyMode::Arsr => {
            let report = adaptive_sindy_with(&id, &test, &cfg.arsr).map_err(CliError::Regression)?;
            report
                .model
                .save(&out.path("model.txt"))
                .map_err(|e| out.io("model.txt", e))?;
            out.write("arsr_report.txt", &report.to_text())?;
            out.write("arsr_candidates.csv", &report.to_csv())?;
            let mut table = String::from("method");
            for o in &report.outputs {
                let _ = write!(table, ",{}", o.name());
            }
            table.push_str("\narsr");
            for r in &report.output_rmse {
                let _ = write!(table, ",{r}");
            }
            table.push('\n');
            out.write("arsr.csv", &table)?;
        }
    }
    Ok(())
}

fn designed_gains(cfg: &RunConfig, model: &SparseModel) -> Result<ControllerGains, CliError> {
    let (l_hat, r_hat) = extract_plant_params(model).map_err(|e| match e {
        pv_sindy::Error::SchemaMismatch(_) => CliError::Config(e.to_string()),
        other => CliError::regression(other),
    })?;
    design_current_controller(l_hat, r_hat, cfg.control.tau_i).map_err(CliError::regression)
}

fn write_report(out: &OutDir, prefix: &str, report: &ComparisonReport) -> Result<(), CliError> {
    out.write(&format!("{prefix}_report.csv"), &report.to_csv())?;
    out.write(&format!("{prefix}_report.txt"), &report.to_text())?;
    write_plot_data(&out.0, prefix, report).map_err(|e| out.io(prefix, e))?;
    Ok(())
}

pub fn control(cfg: &RunConfig, model_path: &Path) -> Result<(), CliError> {
    let model = load_model(model_path, cfg)?;
    let gains = designed_gains(cfg, &model)?;
    let out = OutDir::create(cfg)?;
    out.write("gains.txt", &gains.to_text())?;

    let tau = gains.tau_i;
    let step = closed_loop_step_response(&gains, gains.l_hat, gains.r_hat, tau / 1000.0, 5.0 * tau)
        .map_err(CliError::Simulation)?;
    let mut csv = String::from("t,i\n");
    for (t, i) in step {
        let _ = writeln!(csv, "{t},{i}");
    }
    out.write("step_response.csv", &csv)?;

    let sim = cfg.control_run()?;
    let physical = integrate(&sim).map_err(CliError::Simulation)?;
    let set = GainSet::mirrored(cfg.plant, gains, &cfg.parameters);
    let data_driven = simulate_data_driven(&model, &set, &sim).map_err(CliError::Simulation)?;
    let report = compare_models(
        "tracking",
        &physical,
        &data_driven,
        &Output::for_schema(cfg.plant),
        &model.lambdas,
    )
    .map_err(CliError::Simulation)?;
    write_report(&out, "tracking", &report)
}

fn data_driven_run(cfg: &RunConfig, model: &SparseModel, sim: &Simulation) -> Result<Trajectory, CliError> {
    match model.schema {
        // the identified model already contains the controllers
        Schema::ClosedLoop => {
            let inputs = ScheduleInputs::closed_loop(InputSource::new(sim.schedule.clone(), sim.fault))
                .map_err(|e| CliError::Config(e.to_string()))?;
            let sys = OpenLoopReplay {
                plant: IdentifiedPlant::new(model),
                inputs,
            };
            integrate_system(&sys, &sim.x0, sim.t0, sim.dt, sim.duration, sim.derivatives)
                .map_err(CliError::Simulation)
        }
        _ => {
            let gains = designed_gains(cfg, model)?;
            let set = GainSet::mirrored(cfg.plant, gains, &cfg.parameters);
            simulate_data_driven(model, &set, sim).map_err(CliError::Simulation)
        }
    }
}

pub fn fault(cfg: &RunConfig, model_path: &Path) -> Result<(), CliError> {
    let sim = cfg.fault_run()?;
    let model = load_model(model_path, cfg)?;
    let out = OutDir::create(cfg)?;
    let physical = RunOutcome::from_result(integrate(&sim));
    let data_driven = match data_driven_run(cfg, &model, &sim) {
        Ok(t) => RunOutcome::Completed(t),
        Err(CliError::Simulation(e)) => RunOutcome::Failed(e),
        Err(e) => return Err(e),
    };
    let spec = sim.fault.expect("fault run carries its fault");
    let report = fault_study(
        "fault",
        physical,
        data_driven,
        &spec,
        &Output::for_schema(cfg.plant),
        &model.lambdas,
    )
    .map_err(CliError::Simulation)?;
    write_report(&out, "fault", &report)?;
    if !report.completed() {
        log::warn!("at least one model did not complete the fault scenario");
    }
    Ok(())
}
