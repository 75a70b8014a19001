use std::fs;
use std::path::Path;

use asyncel::config::RunConfig;
use asyncel_cli::{run, CliError};

fn cli(args: &[&str]) -> Result<String, CliError> {
    let mut out = Vec::new();
    run(std::iter::once("asyncel").chain(args.iter().copied()), &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn small_chamber(out: &Path) -> Vec<String> {
    [
        "--case",
        "mini-chamber",
        "--set",
        "mesh.dims=[16,16,16]",
        "--set",
        "mesh.extent=[3.0,3.0,3.0]",
        "--set",
        "n_steps=10",
        "--set",
        "particles.init.count=2000",
        "--set",
        "particles.init.region={lo=[0.05,0.05,0.05], hi=[2.95,2.95,2.95]}",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

#[test]
fn inspect_prints_a_loadable_config() {
    let text = cli(&["inspect", "--case", "mini-chamber", "--set", "n_steps=7", "--seed", "3"]).unwrap();
    let cfg = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.n_steps, 7);
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.to_toml_string(), text);
}

#[test]
fn cases_lists_the_shipped_cases() {
    let text = cli(&["cases"]).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["analytical-momentum", "mini-chamber", "overlap-bench"]);
}

#[test]
fn bad_input_is_reported_with_exit_code_two() {
    let e = cli(&["run", "--case", "no-such-case"]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    let e = cli(&["inspect", "--set", "mesh.dims=[0,4,4]"]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("mesh"), "{e}");
    let e = cli(&["inspect", "--mode", "quadratic"]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(cli(&["frobnicate"]).is_err());
}

#[test]
fn validate_all_writes_one_series_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    cli(&["validate", "--mode", "all", "--deterministic", "--out", &out]).unwrap();
    for mode in ["synchronous", "zero", "constant", "linear"] {
        let text = fs::read_to_string(dir.path().join(format!("validation_{mode}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,time_s,mode,e_rel_euler,e_rel_lagrange");
        assert_eq!(lines.count(), 100);
    }
    assert!(dir.path().join("validation_plot.dat").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 4);
}

#[test]
fn run_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let args = small_chamber(dir.path());
    let mut argv = vec!["run"];
    argv.extend(args.iter().map(String::as_str));
    let report = cli(&argv).unwrap();
    assert!(report.contains("10 steps"), "{report}");
    for f in ["timeseries.csv", "timing.csv", "conservativity.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.lines().count() > 10, "{f}");
    }
    let timing = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 11);
    assert_eq!(
        timing.lines().next().unwrap(),
        "step,euler_compute_s,lagrange_compute_s,wall_s,backlog_steps,partners_count"
    );
    let saved = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(saved.n_steps, 10);
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let args = small_chamber(d);
        let mut argv = vec!["run", "--deterministic", "--seed", "7", "--set", "coupling=linear"];
        argv.extend(args.iter().map(String::as_str));
        cli(&argv).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}
