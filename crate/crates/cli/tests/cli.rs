//! End-to-end runs of the binary: exit codes, output files and columns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn neqrad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neqrad"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn header(csv: &str) -> Vec<String> {
    csv.lines().next().unwrap().split(',').map(String::from).collect()
}

#[test]
fn eos_check_passes_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = neqrad(tmp.path(), &["eos-check", "--seed", "7"]);
    let b = neqrad(tmp.path(), &["eos-check", "--seed", "7"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let r = stdout_json(&a);
    assert_eq!(r["pass"], true);
    assert_eq!(r["points"], 100);
}

#[test]
fn eos_check_rejects_bad_ranges() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"rho_range": [2.0, 1.0]}"#);
    assert_eq!(code(&neqrad(tmp.path(), &["eos-check", "--config", &cfg])), 4);
}

#[test]
fn assemble_prints_one_matrix_as_csv() {
    let tmp = TempDir::new().unwrap();
    let o = neqrad(tmp.path(), &["assemble", "--matrix", "A0_t", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(header(&text), ["c0", "c1", "c2", "c3"]);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    // the entropy-frame matrix is symmetric
    for (i, row) in rows.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            assert!((x - rows[j][i]).abs() < 1e-14);
        }
    }
    assert_eq!(code(&neqrad(tmp.path(), &["assemble", "--matrix", "nope"])), 4);
    assert_eq!(code(&neqrad(tmp.path(), &["assemble", "--matrix", "omega"])), 4);
}

#[test]
fn assemble_writes_the_whole_bundle() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("m");
    let o = neqrad(tmp.path(), &["assemble", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("matrices.json")).unwrap()).unwrap();
    for key in ["A0", "A", "L", "B", "S", "A0_bar", "A_bar", "L_bar", "B_bar", "A0_t", "A1_t", "L_t", "B_t"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    let csv = fs::read_to_string(out.join("matrices.csv")).unwrap();
    assert!(csv.contains("# L_bar\n"));
}

#[test]
fn coupling_exit_code_follows_the_verdict() {
    let tmp = TempDir::new().unwrap();
    let one = neqrad(tmp.path(), &["coupling"]);
    assert_eq!(code(&one), 0);
    let v = stdout_json(&one);
    assert_eq!(v["coupled"], true);
    assert!(v["lambda_min"].as_f64().unwrap() > 0.0);
    assert_eq!(v["K"].as_array().unwrap().len(), 4);

    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"eq": {"rho_bar": 1, "u_bar": [0.3, 0, 0], "theta_bar": 1, "eta_bar": 1, "sigma_a": 1, "sigma_s": 1}}"#,
    );
    let three = neqrad(tmp.path(), &["coupling", "--config", &cfg]);
    assert_eq!(code(&three), 2);
    let v = stdout_json(&three);
    assert_eq!(v["coupled"], false);
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
    assert!((v["witness"]["mu"].as_f64().unwrap() + 0.3).abs() < 1e-12);
}

#[test]
fn bad_configs_exit_with_four() {
    let tmp = TempDir::new().unwrap();
    let unknown = write(tmp.path(), "u.json", r#"{"bogus": 1}"#);
    let broken = write(tmp.path(), "b.json", "{");
    let off = write(
        tmp.path(),
        "o.json",
        r#"{"eq": {"rho_bar": 1, "u_bar": [0], "theta_bar": 1, "eta_bar": 2, "sigma_a": 1, "sigma_s": 1}}"#,
    );
    let missing = tmp.path().join("missing.json");
    for cfg in [unknown.as_str(), broken.as_str(), off.as_str(), missing.to_str().unwrap()] {
        for cmd in ["coupling", "assemble"] {
            let o = neqrad(tmp.path(), &[cmd, "--config", cfg]);
            assert_eq!(code(&o), 4, "{cmd} {cfg}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let bad_sim = write(tmp.path(), "s.json", r#"{"sim": {"cfl": 1.5}}"#);
    assert_eq!(code(&neqrad(tmp.path(), &["simulate", "--config", &bad_sim])), 4);
}

#[test]
fn spectrum_csv_has_all_branches() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.json", r#"{"n_xi": 60}"#);
    let o = neqrad(tmp.path(), &["spectrum", "--config", &cfg, "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let want = [
        "xi", "re_lambda_1", "re_lambda_2", "re_lambda_3", "re_lambda_4", "im_lambda_1", "im_lambda_2", "im_lambda_3",
        "im_lambda_4", "gap",
    ];
    assert_eq!(header(&text), want);
    assert_eq!(text.lines().count(), 61);
    // gap is the largest real part on each row
    for line in text.lines().skip(1) {
        let x: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let max_re = x[1..5].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((x[9] - max_re).abs() <= 1e-15 * max_re.abs().max(1.0));
        assert!(x[9] < 0.0);
    }
}

#[test]
fn linear_decay_reports_slope_and_interval() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "l.json",
        r#"{"n": 4096, "length": 800, "t_min": 10, "t_max": 1000, "samples": 21, "window": [10, 1000]}"#,
    );
    let out = tmp.path().join("ld");
    let o = neqrad(tmp.path(), &["linear-decay", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("linear_decay.csv")).unwrap();
    assert_eq!(header(&csv), ["t", "l2_norm", "h1_seminorm", "mperp_l2_norm"]);
    assert_eq!(csv.lines().count(), 22);
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("linear_decay.json")).unwrap()).unwrap();
    let slope = doc["slope"].as_f64().unwrap();
    let ci: Vec<f64> = doc["slope_ci"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(ci[0] < slope && slope < ci[1]);
    assert!((slope + 0.25).abs() < 0.05);
    assert!(out.join("plot_linear_decay.py").exists());
}

#[test]
fn simulate_writes_trajectory_and_resumes_from_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let ck = tmp.path().join("state.bin");
    let first = write(
        tmp.path(),
        "a.json",
        &format!(
            r#"{{"sim": {{"t_final": 2.0}}, "n": 128, "length": 20, "output_dt": 0.5, "checkpoint": {:?}}}"#,
            ck.to_str().unwrap()
        ),
    );
    let out = tmp.path().join("run");
    let o = neqrad(tmp.path(), &["simulate", "--config", &first, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("simulate.csv")).unwrap();
    assert_eq!(
        header(&csv),
        ["t", "mass", "momentum", "energy", "entropy", "l2", "h1", "h2", "h3", "P_plus_norm"]
    );
    assert_eq!(csv.lines().count(), 6);
    assert!(out.join("plot_simulate.py").exists());
    assert!(ck.exists());

    let second = write(
        tmp.path(),
        "b.json",
        &format!(
            r#"{{"sim": {{"t_final": 3.0}}, "output_dt": 0.5, "restore": {:?}}}"#,
            ck.to_str().unwrap()
        ),
    );
    let o = neqrad(tmp.path(), &["simulate", "--config", &second, "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let times: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(times, [2.0, 2.5, 3.0]);
    // mass carried over from the first run
    let mass = |t: &str| -> f64 { t.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap() };
    let last_first = csv.lines().last().unwrap().split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!((mass(&text) - last_first).abs() <= 1e-12 * last_first);
}

#[test]
fn simulate_reports_positivity_loss_as_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "p.json",
        r#"{"sim": {"t_final": 2.0}, "n": 64, "length": 10, "perturbation": {"amplitude": 1, "components": [0, 20, 0, 0]}}"#,
    );
    let o = neqrad(tmp.path(), &["simulate", "--config", &cfg]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("positivity"));
    // the partial trajectory is still reported
    let doc = stdout_json(&o);
    assert!(!doc["diagnostics"].as_array().unwrap().is_empty());
    assert!(doc["error"].is_string());

    let init = write(
        tmp.path(),
        "i.json",
        r#"{"n": 64, "length": 10, "perturbation": {"amplitude": 5, "components": [-1, 0, 0, 0]}}"#,
    );
    assert_eq!(code(&neqrad(tmp.path(), &["simulate", "--config", &init])), 4);
}

#[test]
fn small_nonlinear_decay_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "d.json",
        r#"{"sim": {"t_final": 60, "cfl": 0.8}, "n": 2048, "length": 400, "output_dt": 2, "window": [10, 60]}"#,
    );
    let out = tmp.path().join("d");
    let o = neqrad(tmp.path(), &["decay", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("decay.csv")).unwrap();
    let h = header(&csv);
    assert_eq!(h[0], "t");
    for col in ["l2", "mass", "energy", "h1", "P_plus_norm"] {
        assert!(h.iter().any(|c| c == col), "missing {col}");
    }
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("decay.json")).unwrap()).unwrap();
    assert_eq!(doc["verdict"], true);
}

#[test]
fn empty_report_passes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "e.json", "[]");
    let o = neqrad(tmp.path(), &["report", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let md = fs::read_to_string(tmp.path().join("report.md")).unwrap();
    assert!(md.contains("No experiments were configured."));
    let doc: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(doc["entries"].as_array().unwrap().len(), 0);
}

#[test]
fn report_exit_code_takes_the_worst_entry() {
    let tmp = TempDir::new().unwrap();
    let pass = r#"{"name": "ok", "kind": "coupling-sweep", "dims": [2], "states": 3, "compensating": false}"#;
    let fail = r#"{"name": "strict", "kind": "coupling-sweep", "dims": [2], "states": 2, "witness_tol": -1, "compensating": false}"#;
    let bad = r#"{"name": "off", "kind": "spectrum-scan", "n_xi": 20,
        "eq": {"rho_bar": 1, "u_bar": [0], "theta_bar": 1, "eta_bar": 2, "sigma_a": 1, "sigma_s": 1}}"#;
    let run = |entries: &[&str]| {
        let cfg = write(tmp.path(), "r.json", &format!(r#"{{"experiments": [{}]}}"#, entries.join(",")));
        let out = tmp.path().join("out");
        let o = neqrad(tmp.path(), &["report", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]);
        let md = fs::read_to_string(out.join("report.md")).unwrap();
        (code(&o), String::from_utf8(o.stdout).unwrap(), md)
    };
    let (c, csv, md) = run(&[pass]);
    assert_eq!(c, 0);
    assert!(csv.starts_with("name,kind,verdict,measured\nok,coupling-sweep,true,"));
    assert!(md.contains("| ok | coupling-sweep |"));
    assert_eq!(run(&[pass, fail]).0, 2);
    let (c, _, md) = run(&[pass, fail, bad]);
    assert_eq!(c, 4);
    assert!(md.contains("error: bad configuration"));
    let unknown = write(tmp.path(), "k.json", r#"[{"name": "x", "kind": "nope"}]"#);
    assert_eq!(code(&neqrad(tmp.path(), &["report", "--config", &unknown])), 4);
}
