use std::path::Path;
use std::process::Command;

use genorisk::io::{read_dataset, write_dataset, ColumnSpec, PhenotypeCoding};
use genorisk::report::SCHEMA;
use genorisk::run::{self, Job};
use genorisk_core::synth::{generate, GenSpec};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genorisk"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn validate(report: &Value) {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    if let Err(errors) = compiled.validate(report) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:#?}");
    };
}

#[test]
fn csv_round_trip() {
    let ds = generate(&GenSpec { external: vec![2], ..GenSpec::parity_pair(60, 4, [0, 1], 0.8, 0.2, 3) }).unwrap();
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf, "status", ';').unwrap();
    let spec = ColumnSpec { separator: ';', external: vec!["x3".into()], ..ColumnSpec::new("status") };
    let back = read_dataset(&buf[..], &spec, "mem").unwrap();
    assert_eq!(back, ds);

    // binary phenotype coding reads 0/1
    let text = "y,a,b\n1,0,2\n0,1,1\n";
    let spec = ColumnSpec { phenotype_coding: PhenotypeCoding::Binary, ..ColumnSpec::new("y") };
    let ds = read_dataset(text.as_bytes(), &spec, "mem").unwrap();
    assert_eq!(ds.labels().iter().map(|l| l.as_i8()).collect::<Vec<_>>(), [1, -1]);
}

#[test]
fn planted_pair_tops_mdr_report() {
    let text = r#"
        seed = 11
        [synth]
        rows = 400
        predictors = 8
        effects = [{ combo = [2, 5], penetrance = [0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9] }]
        seed = 5
        [method]
        kind = "mdr"
        max_order = 2
        max_cell_updates = 1000000000
    "#;
    let job = Job::from_text(text, ".").unwrap();
    let report = run::evaluate(&job).unwrap().report;
    assert_eq!(report.results["best"], serde_json::json!(["x3", "x6"]));
    assert!(report.cv.as_ref().unwrap().value < 0.3);
    assert_eq!(report.config, text);
    validate(&serde_json::to_value(&report).unwrap());
}

#[test]
fn permtest_reports_accuracy_bound() {
    let text = r#"
        [synth]
        rows = 120
        predictors = 3
        [permutation]
        replicates = 100
        [method]
        kind = "permtest"
        [method.target]
        kind = "cart"
        d_max = 3
    "#;
    let report = run::evaluate(&Job::from_text(text, ".").unwrap()).unwrap().report;
    let p = report.perm_test.as_ref().unwrap();
    assert_eq!(p.accuracy_bound, 0.05);
    assert_eq!(p.null_errors.len(), 100);
    assert_eq!(report.results["target"], "cart");
    validate(&serde_json::to_value(&report).unwrap());
}

const METHODS: [&str; 8] = [
    "kind = \"mdr\"\nmax_order = 2",
    "kind = \"mdrir\"\nmax_order = 2\nsmoothing = \"add_one\"",
    "kind = \"logicreg\"\ns = 2\nr_max = 3\nsteps = 150",
    "kind = \"cart\"\nd_max = 4",
    "kind = \"rf\"\ntrees = 40\ntree = { d_max = 4 }",
    "kind = \"sgb\"\nstages = 20\nleaves = 3\n[[method.grid]]\nstages = 10\n[[method.grid]]\nstages = 20\nrho = 0.5",
    "kind = \"cvim\"\nreplicates = 30",
    "kind = \"permtest\"\ntarget = { kind = \"mdr\", max_order = 1 }",
];

fn job(method: &str) -> Job {
    let text = format!(
        "seed = 21\n[synth]\nrows = 150\npredictors = 5\nseed = 2\neffects = [{{ combo = [0, 1], penetrance = [0.8, 0.2, 0.8, 0.2, 0.8, 0.2, 0.8, 0.2, 0.8] }}]\n[balance]\nrepeats = {}\n[permutation]\nreplicates = 20\n[method]\n{method}\n",
        if method.contains("cvim") { 0 } else { 3 }
    );
    let text = text.replace("[balance]\nrepeats = 0\n[permutation]\nreplicates = 20\n", "");
    Job::from_text(&text, ".").unwrap()
}

#[test]
fn reports_identical_across_worker_counts() {
    for method in METHODS {
        let job = job(method);
        let runs: Vec<String> = [1, 8, 1, 8]
            .iter()
            .map(|&w| run::with_workers(w, || run::evaluate(&job)).unwrap().unwrap().report.deterministic_json().unwrap())
            .collect();
        assert!(runs.windows(2).all(|w| w[0] == w[1]), "{method}");
        validate(&serde_json::from_str(&runs[0]).unwrap());
    }
}

#[test]
fn errors_name_module_and_config_path() {
    let text = "[synth]\nrows = 60\npredictors = 3\n[method]\nkind = \"cart\"\nd_max = 0\n";
    let err = run::evaluate(&Job::from_text(text, ".").unwrap()).unwrap_err().to_string();
    assert!(err.starts_with("cart (config method)"), "{err}");

    let text = "[synth]\npredictors = 3\n[method]\nkind = \"mdr\"\npredictors = [\"x9\"]\n";
    let err = run::evaluate(&Job::from_text(text, ".").unwrap()).unwrap_err().to_string();
    assert!(err.contains("method.predictors") && err.contains("x9"), "{err}");

    let text = "[synth]\n[permutation]\n[method]\nkind = \"cvim\"\n";
    assert!(run::evaluate(&Job::from_text(text, ".").unwrap()).is_err());
}

#[test]
fn cli_round_trip_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = write(
        d,
        "synth.toml",
        "[synth]\nrows = 200\npredictors = 4\nseed = 9\neffects = [{ combo = [1, 2], penetrance = [0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9] }]\n[method]\nkind = \"synth\"\ndata_output = \"cohort.csv\"\nphenotype = \"status\"\n",
    );
    let out = bin().arg("synth").arg(&synth).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("cohort.csv").exists());

    let cfg = write(
        d,
        "run.toml",
        "seed = 4\noutput = \"report.json\"\nmodel_output = \"model.json\"\n[dataset]\npath = \"cohort.csv\"\nphenotype = \"status\"\n[method]\nkind = \"mdr\"\nmax_order = 2\n",
    );
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert!(out.status.success());

    let out = bin().args(["run", "--workers", "2"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    validate(&report);
    assert_eq!(report["results"]["best"], serde_json::json!(["x2", "x3"]));
    let model: Value = serde_json::from_str(&std::fs::read_to_string(d.join("model.json")).unwrap()).unwrap();
    assert_eq!((model["format"].as_str(), model["version"].as_u64()), (Some("genorisk-model"), Some(1)));

    let out = bin().arg("report").arg(d.join("report.json")).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("cv error"));

    // seed flag overrides the config and changes the folds
    let out = bin().args(["run", "--seed", "5", "--output", "-"]).arg(&cfg).env("GENORISK_WORKERS", "3").output().unwrap();
    assert!(out.status.success());
    let other: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(other["seed"], 5);

    // failures exit nonzero and leave no report
    let bad = write(d, "bad.toml", "output = \"none.json\"\n[dataset]\npath = \"missing.csv\"\nphenotype = \"status\"\n[method]\nkind = \"cart\"\n");
    let out = bin().arg("run").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(!d.join("none.json").exists());
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let typo = write(d, "typo.toml", "[synth]\n[method]\nkind = \"cart\"\ndepth = 2\n");
    let out = bin().arg("validate").arg(&typo).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));
    let out = bin().args(["run", "--workers", "2"]).arg(&cfg).env("GENORISK_WORKERS", "x").output().unwrap();
    assert!(out.status.success(), "flag wins over a bad env value");
}
