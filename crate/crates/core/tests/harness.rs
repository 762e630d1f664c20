use std::fs;
use std::path::Path;

use ctax_core::harness::{
    bundle_from_report, compare_to_reference, load_bundle, run_experiment, run_scenarios, ExperimentConfig,
    ScenarioSpec, Tolerances,
};
use ctax_core::reference::TableId;
use ctax_core::Error;

fn config(preset: &str, out: &Path) -> ExperimentConfig {
    ExperimentConfig { output: out.to_path_buf(), ..ExperimentConfig::preset(preset).unwrap() }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn rerun_with_same_seed_writes_identical_csvs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let cfg = ExperimentConfig { horizon: 5_000, burn_in: 100, ..config("baseline", dir.path()) };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.failures().count(), 0);
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 9);
    assert_eq!(fa, fb);
}

#[test]
fn every_artifact_records_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { horizon: 2_000, burn_in: 100, seed: 4242, ..config("baseline", dir.path()) };
    run_experiment(&cfg).unwrap();
    for (name, bytes) in csv_files(dir.path()) {
        assert!(String::from_utf8(bytes).unwrap().starts_with("# seed = 4242\n"), "{name}");
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.lines().any(|l| l == "seed = 4242"));
}

#[test]
fn bundle_on_disk_matches_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { horizon: 2_000, burn_in: 100, ..config("baseline", dir.path()) };
    let report = run_experiment(&cfg).unwrap();
    let disk = load_bundle(dir.path()).unwrap();
    let memory = bundle_from_report(&report);
    assert_eq!(disk.preset(), Some("baseline"));
    for ((file, row, col), v) in &memory.tables {
        let d = disk.cell(file, row, col).unwrap();
        let tol = 5e-6 * v.abs().max(1e-300);
        assert!((d - v).abs() <= tol || (d.is_nan() && v.is_nan()), "{file} {row} {col}: {d} vs {v}");
    }
}

#[test]
fn baseline_means_match_published_table() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenarios(&config("baseline", dir.path())).unwrap();
    let bundle = bundle_from_report(&report);
    for table in [TableId::Means, TableId::Welfare, TableId::Stds] {
        let c = compare_to_reference(&bundle, "baseline", table, &Tolerances::default()).unwrap();
        assert!(c.pass(), "{}", c.listing());
    }
    let mean = |row| report.mean("unconstrained", row).unwrap();
    assert!((mean("tau_t") - 0.020).abs() < 0.002);
    assert!((mean("mu_t") - 0.322).abs() < 0.0035);
    assert!((mean("E_t") - 0.676).abs() < 0.007);
    assert!((mean("X_t") - 321.79).abs() < 3.3);
}

fn means_with_chi(chi: f64) -> ctax_core::harness::Comparison {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        overrides: vec![("chi".into(), chi)],
        horizon: 20_000,
        ..config("baseline", dir.path())
    };
    let bundle = bundle_from_report(&run_scenarios(&cfg).unwrap());
    compare_to_reference(&bundle, "baseline", TableId::Means, &Tolerances::default()).unwrap()
}

#[test]
fn zero_externality_fails_on_tax_abatement_and_emissions() {
    // abatement sits at its corner, where the policy is not differentiable,
    // so only the business-as-usual column survives
    let c = means_with_chi(0.0);
    for row in ["tau_t", "mu_t", "E_t"] {
        assert!(c.failures().any(|f| f.row == row), "{row} did not fail");
    }
    assert!(c.cells.iter().filter(|f| f.column == "bau").all(|f| f.value.is_some()));
}

#[test]
fn weakened_externality_fails_on_computed_cells() {
    let c = means_with_chi(1e-4);
    assert!(c.cells.iter().all(|f| f.value.is_some()));
    for row in ["tau_t", "mu_t", "E_t"] {
        let failed: Vec<_> = c.failures().filter(|f| f.row == row).map(|f| f.column).collect();
        assert_eq!(failed, ["unconstrained", "constrained:0", "constrained:gamma", "constrained:1"], "{row}");
    }
}

#[test]
fn missing_scenarios_are_reported_as_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        scenarios: vec![ScenarioSpec::Bau],
        horizon: 2_000,
        ..config("baseline", dir.path())
    };
    let bundle = bundle_from_report(&run_scenarios(&cfg).unwrap());
    let c = compare_to_reference(&bundle, "baseline", TableId::Means, &Tolerances::default()).unwrap();
    let missing = c.failures().filter(|f| f.value.is_none()).count();
    assert_eq!(missing, c.cells.iter().filter(|f| f.column != "bau").count());
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let err = ExperimentConfig::from_toml_str("[experiment]\nscenarios = [\"bau\", \"planner\"]").unwrap_err();
    assert!(err.is_config(), "{err}");
    let err = ExperimentConfig::from_toml_str("[overrides]\nbeta = 1.5").unwrap_err();
    assert!(matches!(err, Error::Validation { field: "beta", .. }), "{err}");
}

#[test]
fn sensitivity_presets_reproduce_headline_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let unc = ["unconstrained"];
    let run = |preset: &str| {
        let cfg = ExperimentConfig { scenarios: vec![ScenarioSpec::Unconstrained], ..config(preset, dir.path()) };
        run_scenarios(&cfg).unwrap()
    };
    let theta = run("theta1_high");
    assert!((theta.mean(unc[0], "mu_t").unwrap() - 0.161).abs() < 0.002);
    let chi = run("chi_high");
    assert!((chi.mean(unc[0], "tau_t").unwrap() - 0.045).abs() < 0.003);
    assert!((chi.mean(unc[0], "mu_t").unwrap() - 0.498).abs() < 0.005);
    let eps = run("eps_high");
    let std_i = eps.run(unc[0]).unwrap().report.log_std("log(I_t)").unwrap().value;
    assert!((std_i - 5.23).abs() < 0.15 * 5.23, "{std_i}");
}
