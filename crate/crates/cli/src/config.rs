//! Run configuration: a sectioned TOML file. Every section is optional and
//! overlays the defaults of the selected plant key by key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pv_sindy::arsr::{default_grid, ArsrConfig};
use pv_sindy::control::DEFAULT_TAU_I;
use pv_sindy::features::LibrarySpec;
use pv_sindy::presets::{self, FaultKind, OperatingConditions};
use pv_sindy::pv_plant::{ActivePowerMode, PlantParameters, Schema};
use pv_sindy::simulator::{
    DerivativeMode, FaultSpec, PiecewiseConstant, ReferenceSchedule, Signal, Simulation,
};

use crate::error::CliError;

/// Environment variable that may replace the configured output directory.
pub const OUT_ENV: &str = "PVSINDY_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioPreset {
    /// Staggered reference steps and grid/PV disturbances.
    Identification,
    /// One DC-link voltage step and one reactive power step.
    Tracking,
    /// All signals held at the operating conditions.
    Constant,
}

impl ScenarioPreset {
    fn default_duration(self) -> f64 {
        match self {
            ScenarioPreset::Tracking => 1.0,
            _ => 5.0,
        }
    }

    pub fn schedule(self, schema: Schema, c: &OperatingConditions, duration: f64) -> ReferenceSchedule {
        match self {
            ScenarioPreset::Identification => presets::identification_schedule(schema, c, duration),
            ScenarioPreset::Tracking => presets::tracking_schedule(schema, c),
            ScenarioPreset::Constant => presets::constant_schedule(schema, c),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    plant: Schema,
    parameters: Option<toml::Table>,
    conditions: Option<toml::Table>,
    simulation: Option<RawSimulation>,
    schedule: Option<BTreeMap<Signal, PiecewiseConstant>>,
    library: Option<toml::Table>,
    identify: Option<toml::Table>,
    arsr: Option<toml::Table>,
    control: Option<toml::Table>,
    fault: Option<RawFault>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    scenario: Option<ScenarioPreset>,
    dt: Option<f64>,
    duration: Option<f64>,
    derivatives: Option<DerivativeMode>,
    power_mode: Option<ActivePowerMode>,
    x0: Option<Vec<f64>>,
    integrators: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    kind: Option<FaultKind>,
    target: Option<Signal>,
    pre_fault: Option<f64>,
    fault_value: Option<f64>,
    time: Option<f64>,
    duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scenario: ScenarioPreset,
    pub dt: f64,
    pub duration: f64,
    pub derivatives: DerivativeMode,
    pub power_mode: ActivePowerMode,
    pub x0: Vec<f64>,
    pub integrators: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    /// Scalar thresholds tried in `scalar-sweep` mode.
    pub grid: Vec<f64>,
    /// Trajectory CSV to identify from; simulated in-run when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            trajectory: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub tau_i: f64,
    /// Comparison scenario of the `control` command.
    pub scenario: ScenarioPreset,
    pub duration: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            tau_i: DEFAULT_TAU_I,
            scenario: ScenarioPreset::Tracking,
            duration: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub spec: FaultSpec,
    pub duration: f64,
}

/// Fully resolved configuration; echoed into every artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub plant: Schema,
    pub output_dir: PathBuf,
    pub parameters: PlantParameters,
    pub conditions: OperatingConditions,
    pub simulation: SimulationConfig,
    pub schedule: ReferenceSchedule,
    pub library: LibrarySpec,
    pub identify: IdentifyConfig,
    pub arsr: ArsrConfig,
    pub control: ControlConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultConfig>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Deserializes `base` with the keys of `over` replaced, reporting the
/// offending field as `section.path`.
fn overlay<T: Serialize + DeserializeOwned + Clone>(
    section: &str,
    base: &T,
    over: Option<toml::Table>,
) -> Result<T, CliError> {
    let Some(over) = over else {
        return Ok(base.clone());
    };
    let mut table = toml::Table::try_from(base)
        .map_err(|e| config_err(format!("{section}: {e}")))?;
    for (k, v) in over {
        table.insert(k, v);
    }
    serde_path_to_error::deserialize(table)
        .map_err(|e| config_err(format!("{section}.{}: {}", e.path(), e.inner())))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err(e.to_string()))?;
        let raw: RawConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| config_err(format!("{}: {}", e.path(), e.inner())))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let schema = raw.plant;
        let base_params = match schema {
            Schema::TwoStage => PlantParameters::two_stage_default(),
            _ => PlantParameters::single_stage_default(),
        };
        let parameters: PlantParameters = overlay("parameters", &base_params, raw.parameters)?;
        parameters
            .validate()
            .map_err(|e| config_err(format!("parameters: {e}")))?;
        let conditions: OperatingConditions =
            overlay("conditions", &OperatingConditions::default(), raw.conditions)?;
        let library: LibrarySpec = overlay("library", &LibrarySpec::for_schema(schema), raw.library)?;
        let identify: IdentifyConfig = overlay("identify", &IdentifyConfig::default(), raw.identify)?;
        let n = schema.n_states();
        let arsr: ArsrConfig = overlay("arsr", &ArsrConfig::uniform(n, 1.0, 40.0, 1.0), raw.arsr)?;
        arsr.validate(n).map_err(|e| config_err(format!("arsr: {e}")))?;
        let control: ControlConfig = overlay("control", &ControlConfig::default(), raw.control)?;
        if !(control.tau_i > 0.0) {
            return Err(config_err("control.tau_i: must be positive"));
        }

        let s = raw.simulation.unwrap_or_default();
        let scenario = s.scenario.unwrap_or(ScenarioPreset::Identification);
        let duration = s.duration.unwrap_or(scenario.default_duration());
        let op = presets::operating_point(schema, &parameters, &conditions)
            .map_err(|e| config_err(format!("conditions: {e}")))?;
        let simulation = SimulationConfig {
            scenario,
            dt: s.dt.unwrap_or(1e-4),
            duration,
            derivatives: s.derivatives.unwrap_or_default(),
            power_mode: s.power_mode.unwrap_or_default(),
            x0: s.x0.unwrap_or(op.x),
            integrators: s.integrators.unwrap_or(op.integrators),
        };
        schema
            .check_state(&simulation.x0)
            .map_err(|e| config_err(format!("simulation.x0: {e}")))?;

        let mut schedule = scenario.schedule(schema, &conditions, duration);
        for (sig, pc) in raw.schedule.unwrap_or_default() {
            schedule.insert(sig, pc);
        }

        let fault = match raw.fault {
            None => None,
            Some(f) => {
                let time = f.time.unwrap_or(3.0);
                let base = f.kind.map(|k| k.spec(&conditions, time));
                let target = f
                    .target
                    .or(base.map(|b| b.target))
                    .ok_or_else(|| config_err("fault: needs `kind` or `target`"))?;
                let fault_value = f
                    .fault_value
                    .or(base.map(|b| b.fault_value))
                    .ok_or_else(|| config_err("fault: needs `kind` or `fault_value`"))?;
                let pre_fault = match f.pre_fault.or(base.map(|b| b.pre_fault)) {
                    Some(v) => v,
                    None => presets::constant_schedule(schema, &conditions)
                        .value_at(target, 0.0)
                        .ok_or_else(|| {
                            config_err(format!("fault.pre_fault: no default for {target}"))
                        })?,
                };
                Some(FaultConfig {
                    spec: FaultSpec {
                        target,
                        pre_fault,
                        fault_value,
                        time,
                    },
                    duration: f.duration.unwrap_or(5.0),
                })
            }
        };

        let cfg = Self {
            plant: schema,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            parameters,
            conditions,
            simulation,
            schedule,
            library,
            identify,
            arsr,
            control,
            fault,
        };
        cfg.simulation()
            .validate()
            .map_err(|e| config_err(format!("simulation: {e}")))?;
        Ok(cfg)
    }

    /// Applies the `--out` flag, then the environment override.
    pub fn resolve_output(&mut self, flag: Option<PathBuf>) {
        if let Some(dir) = flag {
            self.output_dir = dir;
        } else if let Some(dir) = std::env::var_os(OUT_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    /// The configured run, including the fault block when present.
    pub fn simulation(&self) -> Simulation {
        let mut sim = self.nominal_simulation();
        sim.fault = self.fault.as_ref().map(|f| f.spec);
        sim
    }

    /// The configured run without any fault; identification data are nominal.
    pub fn nominal_simulation(&self) -> Simulation {
        let mut sim = Simulation::new(
            self.plant,
            self.parameters,
            self.simulation.x0.clone(),
            self.schedule.clone(),
        );
        sim.integrators = self.simulation.integrators.clone();
        sim.dt = self.simulation.dt;
        sim.duration = self.simulation.duration;
        sim.derivatives = self.simulation.derivatives;
        sim.power_mode = self.simulation.power_mode;
        sim
    }

    fn preset_run(&self, preset: ScenarioPreset, duration: f64) -> Result<Simulation, CliError> {
        let op = presets::operating_point(self.plant, &self.parameters, &self.conditions)
            .map_err(|e| config_err(format!("conditions: {e}")))?;
        let mut sim = Simulation::new(
            self.plant,
            self.parameters,
            op.x,
            preset.schedule(self.plant, &self.conditions, duration),
        );
        sim.integrators = op.integrators;
        sim.dt = self.simulation.dt;
        sim.duration = duration;
        sim.power_mode = self.simulation.power_mode;
        Ok(sim)
    }

    /// The comparison run of the `control` command.
    pub fn control_run(&self) -> Result<Simulation, CliError> {
        self.preset_run(self.control.scenario, self.control.duration)
    }

    /// Constant references with the configured fault.
    pub fn fault_run(&self) -> Result<Simulation, CliError> {
        let f = self.fault.as_ref().ok_or(CliError::MissingFault)?;
        let mut sim = self.preset_run(ScenarioPreset::Constant, f.duration)?;
        sim.fault = Some(f.spec);
        sim.validate()
            .map_err(|e| config_err(format!("fault: {e}")))?;
        Ok(sim)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# unserializable config: {e}\n"))
    }
}
