use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_excursion"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_design(dir: &Path) -> PathBuf {
    let mut s = String::from("x1,x2,y\n");
    for i in 0..12 {
        let a = (i as f64 * 0.618_033_988_7).fract();
        let b = (i as f64 * 0.754_877_666_2 + 0.1).fract();
        s.push_str(&format!("{a},{b},{}\n", (5.0 * a).sin() + b));
    }
    let p = dir.join("design.csv");
    fs::write(&p, s).unwrap();
    p
}

fn run(cmd: &mut Command) -> i32 {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap()
}

fn fit(dir: &Path) -> PathBuf {
    let design = write_design(dir);
    let model = dir.join("model.json");
    let code = run(bin()
        .args(["fit", "--lower", "0,0", "--upper", "1,1", "--design"])
        .arg(&design)
        .arg("--out")
        .arg(&model));
    assert_eq!(code, 0);
    model
}

const PROBLEM: [&str; 8] = ["--threshold", "1", "--lower", "0,0", "--upper", "1,1", "--grid-size", "400"];

#[test]
fn estimate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit(dir.path());
    let out = dir.path().join("est");
    let code = run(bin().arg("estimate").arg("--model").arg(&model).args(PROBLEM).arg("--out").arg(&out));
    assert_eq!(code, 0);
    let cov = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert_eq!(cov.lines().count(), 401);
    assert!(cov.starts_with("x1,x2,weight,p,member_median"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["rho_alpha"].as_f64().unwrap() >= 0.95);
    assert!(summary["conservative_measure"].as_f64().unwrap() <= summary["vorobev_measure"].as_f64().unwrap() + 1e-12);
}

#[test]
fn criterion_map_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit(dir.path());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("map{k}.csv"));
        let code = run(bin()
            .arg("criterion-map")
            .arg("--model")
            .arg(&model)
            .args(PROBLEM)
            .args(["--criterion", "jt2", "--resolution", "12", "--seed", "5", "--out"])
            .arg(&out));
        assert_eq!(code, 0);
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 145);
}

#[test]
fn run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let text = fs::read_to_string(config("criticality_run.toml")).unwrap().replace("iterations = 10", "iterations = 2");
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, text).unwrap();
    assert_eq!(run(bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&out)), 0);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3);
    let rep = dir.path().join("rep");
    assert_eq!(run(bin().arg("report").arg("--records").arg(out.join("record.json")).arg("--out").arg(&rep)), 0);
    assert_eq!(fs::read_to_string(rep.join("metrics.csv")).unwrap(), metrics);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(bin().arg("nonsense")), 2);
    assert_eq!(run(bin().args(["fit", "--design", "missing.csv", "--out"]).arg(dir.path().join("m.json"))), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[problem]\nthreshold = \"high\"\n").unwrap();
    assert_eq!(run(bin().arg("run").arg("--config").arg(&bad).arg("--out").arg(dir.path())), 2);
    let model = fit(dir.path());
    let code = run(bin()
        .arg("estimate")
        .arg("--model")
        .arg(&model)
        .args(["--threshold", "1", "--alpha", "1.5", "--lower", "0,0", "--upper", "1,1", "--out"])
        .arg(dir.path().join("e")));
    assert_eq!(code, 2);
}

#[test]
fn non_finite_objective_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    fs::write(&table, "x1,x2,y\n0.5,0.5,1\n1.5,2.5,NaN\n3,4,0.2\n4,1,0.7\n").unwrap();
    let text = fs::read_to_string(config("criticality_run.toml"))
        .unwrap()
        .replace("kind = \"criticality\"", &format!("kind = \"table\"\npath = {:?}", table.to_str().unwrap()));
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&out)), 3);
    // The partial record is still persisted.
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("record.json")).unwrap()).unwrap();
    assert_eq!(record[0]["status"]["status"], "aborted");
}
