use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pvsindy"));
    c.env_remove("PVSINDY_OUT");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

const SHORT: &str = "plant = \"single-stage\"\n[simulation]\nduration = 0.2\n";

/// Identifies a single-stage model by scalar sweep into `dir`.
fn single_stage_model(dir: &Path) -> PathBuf {
    let out = dir.join("model_run");
    let o = run(&[
        "identify",
        "--mode",
        "scalar-sweep",
        "--config",
        configs().join("single_stage.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("model.txt")
}

#[test]
fn simulate_writes_trajectory_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let out = tmp.path().join("sim");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = csv_column(&out.join("trajectory.csv"), "t");
    assert_eq!(t.len(), 2001);
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("plant = \"single-stage\""));
    assert!(manifest.contains("duration = 0.2"));
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let mut files = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        files.push(std::fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let out = tmp.path().join("from_env");
    let o = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("PVSINDY_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let tmp = TempDir::new().unwrap();
    let missing = write_config(tmp.path(), "a.toml", "[simulation]\ndt = 1e-4\n");
    let o = run(&["simulate", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("plant"), "{}", stderr(&o));

    let bad = write_config(
        tmp.path(),
        "b.toml",
        "plant = \"single-stage\"\n[parameters]\nl_c = \"big\"\n",
    );
    let o = run(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("parameters.l_c"), "{}", stderr(&o));

    let bad_x0 = write_config(
        tmp.path(),
        "c.toml",
        "plant = \"single-stage\"\n[simulation]\nx0 = [0.0, 0.0]\n",
    );
    let o = run(&["simulate", "--config", bad_x0.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("simulation.x0"), "{}", stderr(&o));
}

#[test]
fn simulation_failure_exits_3() {
    let tmp = TempDir::new().unwrap();
    // an unstable DC-link loop drives v_dc through zero
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "plant = \"single-stage\"\n[parameters]\nk_p2 = 5.0\nk_i2 = 500.0\n[simulation]\nduration = 2.0\n",
    );
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn fault_block_shows_in_simulated_inputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "plant = \"single-stage\"\n[simulation]\nscenario = \"constant\"\nduration = 0.5\n\
         [fault]\nkind = \"undervoltage\"\ntime = 0.25\n",
    );
    let out = tmp.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = csv_column(&out.join("trajectory.csv"), "t");
    let v = csv_column(&out.join("trajectory.csv"), "v_gd");
    let k = v.iter().position(|x| *x == 500.0).unwrap();
    assert!((t[k] - 0.25).abs() < 1e-9);
    assert!(v[..k].iter().all(|x| *x == 800.0));
    assert!(v[k..].iter().all(|x| *x == 500.0));
}

#[test]
fn scalar_sweep_table_and_model() {
    let tmp = TempDir::new().unwrap();
    let model = single_stage_model(tmp.path());
    let dir = model.parent().unwrap();
    let table = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 9);
    let active = csv_column(&dir.join("sweep.csv"), "active_terms");
    assert!(active.windows(2).all(|w| w[1] <= w[0]));
    let text = std::fs::read_to_string(&model).unwrap();
    assert!(text.lines().any(|l| l.starts_with("lambda,")));
    assert!(dir.join("manifest.toml").exists());
}

#[test]
fn arsr_mode_writes_lambda_line() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("arsr");
    let o = run(&[
        "identify",
        "--config",
        configs().join("single_stage.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("model.txt")).unwrap();
    let line = text.lines().find(|l| l.starts_with("lambda,")).unwrap();
    assert_eq!(line.split(',').count(), 1 + 7);
    assert!(out.join("arsr_report.txt").exists());
    let candidates = std::fs::read_to_string(out.join("arsr_candidates.csv")).unwrap();
    assert!(candidates.starts_with("iteration,state,lambda,rmse,accepted"));
}

#[test]
fn control_designs_gains_and_compares() {
    let tmp = TempDir::new().unwrap();
    let model = single_stage_model(tmp.path());
    let out = tmp.path().join("ctl");
    let o = run(&[
        "control",
        "--config",
        configs().join("single_stage.toml").to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let gains = std::fs::read_to_string(out.join("gains.txt")).unwrap();
    let get = |k: &str| -> f64 {
        gains
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{k},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("k_p") * get("tau_i") - get("l_hat")).abs() < 1e-15);
    assert!((get("l_hat") - 2.5e-3).abs() < 2.5e-6);

    let t = csv_column(&out.join("step_response.csv"), "t");
    let i = csv_column(&out.join("step_response.csv"), "i");
    let k = t.iter().position(|x| (x - get("tau_i")).abs() < 1e-12).unwrap();
    assert!((i[k] - 0.6321).abs() < 0.002);

    let report = std::fs::read_to_string(out.join("tracking_report.csv")).unwrap();
    assert!(report.starts_with("scenario,output,rmse,window"));
    assert!(out.join("tracking_v_dc_physical.csv").exists());
    assert!(out.join("tracking_v_dc_data_driven.csv").exists());
}

#[test]
fn control_without_inductance_term_exits_5() {
    let tmp = TempDir::new().unwrap();
    let model = single_stage_model(tmp.path());
    let text = std::fs::read_to_string(&model).unwrap();
    let pruned: String = text
        .lines()
        .filter(|l| !l.starts_with("i_cd,v_cd,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let pruned_path = tmp.path().join("pruned.txt");
    std::fs::write(&pruned_path, pruned).unwrap();
    let o = run(&[
        "control",
        "--config",
        configs().join("single_stage.toml").to_str().unwrap(),
        "--model",
        pruned_path.to_str().unwrap(),
        "--out",
        tmp.path().join("ctl").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("v_cd"));
}

#[test]
fn fault_without_block_exits_6() {
    let tmp = TempDir::new().unwrap();
    let model = single_stage_model(tmp.path());
    let cfg = write_config(tmp.path(), "c.toml", SHORT);
    let o = run(&[
        "fault",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--out",
        tmp.path().join("f").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 6, "{}", stderr(&o));
}

#[test]
fn fault_reports_and_null_fault() {
    let tmp = TempDir::new().unwrap();
    let model = single_stage_model(tmp.path());

    let three = write_config(
        tmp.path(),
        "three.toml",
        "plant = \"single-stage\"\n[fault]\nkind = \"three-phase\"\n",
    );
    let out = tmp.path().join("three");
    let o = run(&["fault", "--config", three.to_str().unwrap(), "--model", model.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("fault_report.csv")).unwrap();
    assert!(report.contains(",pre_fault"));
    assert!(report.contains(",post_fault"));
    assert!(out.join("fault_v_dc_physical.csv").exists());

    // a fault that keeps the pre-fault value must reproduce the nominal run
    let null = write_config(
        tmp.path(),
        "null.toml",
        "plant = \"single-stage\"\n[fault]\ntarget = \"v_gd\"\nfault_value = 800.0\n",
    );
    let out = tmp.path().join("null");
    let o = run(&["fault", "--config", null.to_str().unwrap(), "--model", model.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nominal = write_config(
        tmp.path(),
        "nominal.toml",
        "plant = \"single-stage\"\n[simulation]\nscenario = \"constant\"\nduration = 5.0\n",
    );
    let nom_out = tmp.path().join("nominal");
    let o = run(&["simulate", "--config", nominal.to_str().unwrap(), "--out", nom_out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nom = csv_column(&nom_out.join("trajectory.csv"), "v_dc");
    let faulted = csv_column(&out.join("fault_v_dc_physical.csv"), "value");
    assert_eq!(nom, faulted);
}

#[test]
fn closed_loop_fault_replays_identified_model() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "plant = \"closed-loop-single-stage\"\n[fault]\nkind = \"undervoltage\"\n",
    );
    let id_out = tmp.path().join("id");
    let o = run(&["identify", "--mode", "scalar-sweep", "--config", cfg.to_str().unwrap(), "--out", id_out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = tmp.path().join("f");
    let o = run(&[
        "fault",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        id_out.join("model.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("fault_report.txt")).unwrap();
    assert!(!text.contains("failed"), "{text}");
}
