use std::fs;
use std::path::{Path, PathBuf};

use neqrad::harness::{LinearDecayConfig, NonlinearDecayConfig, SpectrumScanConfig};
use neqrad::solver1d::{read_checkpoint, write_checkpoint, CheckpointFormat, RunSummary};
use neqrad::spectrum::log_grid;
use neqrad::{
    check_weyl_hypotheses, compensating_matrix, default_suite, full_report, genuine_coupling, init_perturbation,
    linear_decay_experiment, multi_d_witness, nonlinear_decay_experiment, spectral_curve, spectrum_scan, EosModel,
    EquilibriumState, Error, ExperimentConfig, MatrixBundle, Perturbation, Result, SearchConfig, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::output::{csv_table, plot_script, Output};
use crate::{Cli, Command, Format, Status};

pub fn dispatch(cli: &Cli) -> Result<Status> {
    let out = Output::new(cli.out.as_deref(), cli.format)?;
    let config = cli.config.as_deref();
    match &cli.command {
        Command::EosCheck => eos_check(load(config)?, cli.seed.unwrap_or(0), &out),
        Command::Assemble { matrix } => assemble(load(config)?, matrix.as_deref(), &out),
        Command::Coupling => coupling(load(config)?, cli.seed, &out),
        Command::Spectrum => spectrum(load(config)?, &out),
        Command::LinearDecay => linear_decay(load(config)?, &out),
        Command::Simulate => simulate(load(config)?, &out),
        Command::Decay => decay(load(config)?, &out),
        Command::Report => report(config, cli.seed, cli.out.as_deref(), cli.format),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{}: {e}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(&e))?;
    serde_json::from_str(&text).map_err(|e| bad(&e))
}

/// Reads the config file, or the defaults when none was given.
fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

/// A background given in a config is a user input: reject it up front.
fn check_state(eq: &EquilibriumState) -> Result<()> {
    eq.validate().map_err(|e| Error::Config(e.to_string()))?;
    if !eq.on_manifold() {
        return Err(Error::Config(format!(
            "background is off the equilibrium manifold: eta_bar = {} but theta_bar^4 = {}",
            eq.eta_bar,
            eq.theta_bar.powi(4)
        )));
    }
    Ok(())
}

fn unit_direction(omega: Option<&[f64]>, d: usize) -> Result<Vec<f64>> {
    match omega {
        Some(w) => {
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if w.len() != d || (n - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("omega must be a unit vector with {d} components, got {w:?}")));
            }
            Ok(w.to_vec())
        }
        None => {
            let mut w = vec![0.0; d];
            w[0] = 1.0;
            Ok(w)
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EosCheckConfig {
    eos: EosModel,
    points: usize,
    rho_range: (f64, f64),
    theta_range: (f64, f64),
}

impl Default for EosCheckConfig {
    fn default() -> Self {
        Self {
            eos: EosModel::default(),
            points: 100,
            rho_range: (1e-2, 1e2),
            theta_range: (1e-2, 1e2),
        }
    }
}

fn eos_check(cfg: EosCheckConfig, seed: u64, out: &Output) -> Result<Status> {
    let valid = |(a, b): (f64, f64)| a > 0.0 && b >= a && b.is_finite();
    if cfg.points == 0 || !valid(cfg.rho_range) || !valid(cfg.theta_range) {
        return Err(Error::Config("need points > 0 and ranges 0 < lo <= hi".into()));
    }
    // log-uniform sampling
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(a, b): (f64, f64)| (a.ln() + rng.random::<f64>() * (b / a).ln()).exp();
    let sample: Vec<(f64, f64)> = (0..cfg.points).map(|_| (draw(cfg.rho_range), draw(cfg.theta_range))).collect();
    let r = check_weyl_hypotheses(&cfg.eos, &sample)?;
    let csv = format!(
        "pass,worst_violation,violation,points\n{},{:.17e},{},{}\n",
        r.pass,
        r.worst_violation,
        r.violation.as_deref().unwrap_or(""),
        r.points
    );
    out.emit("eos_check", &r, Some(&csv))?;
    Ok(Status::from_verdict(r.pass))
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StateConfig {
    eos: EosModel,
    eq: EquilibriumState,
    omega: Option<Vec<f64>>,
    search: SearchConfig,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self {
            eos: EosModel::default(),
            eq: EquilibriumState::canonical(1),
            omega: None,
            search: SearchConfig::default(),
        }
    }
}

fn is_matrix(v: &Value) -> bool {
    v.as_array().is_some_and(|rows| !rows.is_empty() && rows.iter().all(Value::is_array))
}

fn matrix_csv(v: &Value) -> String {
    let rows = v.as_array().map(Vec::as_slice).unwrap_or_default();
    let ncols = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
    let header: Vec<String> = (0..ncols).map(|j| format!("c{j}")).collect();
    csv_table(
        &header,
        rows.iter()
            .map(|r| r.as_array().into_iter().flatten().filter_map(Value::as_f64).collect()),
    )
}

fn assemble(cfg: StateConfig, matrix: Option<&str>, out: &Output) -> Result<Status> {
    check_state(&cfg.eq)?;
    let omega = unit_direction(cfg.omega.as_deref(), cfg.eq.dim())?;
    let bundle = MatrixBundle::assemble(&cfg.eos, &cfg.eq)?;
    let all = bundle.to_json(&omega)?;
    match matrix {
        Some(name) => {
            let m = all
                .get(name)
                .filter(|m| is_matrix(m))
                .ok_or_else(|| Error::Config(format!("no matrix named '{name}'")))?;
            out.emit(name, m, Some(&matrix_csv(m)))?;
        }
        None => {
            let mut csv = String::new();
            for (name, m) in all.as_object().into_iter().flatten().filter(|(_, m)| is_matrix(m)) {
                csv.push_str(&format!("# {name}\n{}", matrix_csv(m)));
            }
            out.emit("matrices", &all, Some(&csv))?;
        }
    }
    Ok(Status::Pass)
}

fn coupling(cfg: StateConfig, seed: Option<u64>, out: &Output) -> Result<Status> {
    check_state(&cfg.eq)?;
    let d = cfg.eq.dim();
    let omega = unit_direction(cfg.omega.as_deref(), d)?;
    let bundle = MatrixBundle::assemble(&cfg.eos, &cfg.eq)?;
    let verdict = genuine_coupling(&bundle, &omega)?;
    let mut witness = verdict.witness.clone();
    let mut residual = verdict.residual;
    if d >= 2 && !verdict.coupled && witness.is_none() {
        let (w, r) = multi_d_witness(&bundle, None)?;
        witness = Some(w);
        residual = r;
    }
    let mut doc = json!({
        "coupled": verdict.coupled,
        "witness": witness,
        "residual": residual,
        "kernel_basis": verdict.kernel_basis,
        "K": null,
        "lambda_min": null,
    });
    if d == 1 && verdict.coupled {
        let search = SearchConfig {
            seed: seed.unwrap_or(cfg.search.seed),
            ..cfg.search
        };
        let frame = bundle.zframe()?;
        let k = match compensating_matrix(frame, &search) {
            Err(Error::SearchFailure { .. }) => {
                log::warn!("compensating matrix search failed, retrying with a doubled budget");
                let doubled = SearchConfig {
                    budget_per_start: 2 * search.budget_per_start,
                    ..search
                };
                compensating_matrix(frame, &doubled)?
            }
            r => r?,
        };
        // unit Frobenius norm; lambda_min belongs to K_scale * K
        doc["K"] = json!(k.k);
        doc["K_scale"] = json!(k.scale);
        doc["lambda_min"] = json!(k.lambda_min);
        doc["skew_residual"] = json!(k.skew_residual);
    }
    let csv = format!(
        "coupled,residual,lambda_min\n{},{:.17e},{}\n",
        verdict.coupled,
        residual,
        doc["lambda_min"].as_f64().map(|l| format!("{l:.17e}")).unwrap_or_default()
    );
    out.emit("coupling", &doc, Some(&csv))?;
    Ok(Status::from_verdict(verdict.coupled))
}

fn spectrum(cfg: SpectrumScanConfig, out: &Output) -> Result<Status> {
    check_state(&cfg.eq)?;
    if !(cfg.xi_min > 0.0 && cfg.xi_max > cfg.xi_min) || cfg.n_xi < 2 {
        return Err(Error::Config("need 0 < xi_min < xi_max and n_xi >= 2".into()));
    }
    let sys = MatrixBundle::assemble(&cfg.eos, &cfg.eq)?.zframe()?.system();
    let curve = spectral_curve(&sys, &log_grid(cfg.xi_min, cfg.xi_max, cfg.n_xi))?;
    let scan = spectrum_scan(&cfg)?;
    let nb = curve.branches.len();
    let mut header = vec!["xi".to_string()];
    header.extend((1..=nb).map(|b| format!("re_lambda_{b}")));
    header.extend((1..=nb).map(|b| format!("im_lambda_{b}")));
    header.push("gap".into());
    let rows = curve.xis.iter().enumerate().map(|(i, &xi)| {
        let mut row = vec![xi];
        row.extend(curve.branches.iter().map(|b| b[i].0));
        row.extend(curve.branches.iter().map(|b| b[i].1));
        row.push(curve.gaps[i]);
        row
    });
    let csv = csv_table(&header, rows);
    let doc = json!({
        "fitted_c": curve.fitted_c,
        "branch_table": curve.branch_table,
        "classified": curve.classified,
        "ambiguous_at": curve.ambiguous_at,
        "semigroup": { "C": scan.semigroup_c, "k": scan.semigroup_k, "worst_ratio": scan.semigroup_worst_ratio },
        "verdict": scan.verdict,
    });
    out.emit("spectrum", &doc, Some(&csv))?;
    Ok(Status::from_verdict(scan.verdict))
}

fn linear_decay(cfg: LinearDecayConfig, out: &Output) -> Result<Status> {
    check_state(&cfg.eq)?;
    let r = linear_decay_experiment(&cfg)?;
    let columns = [("l0", "l2_norm"), ("l1", "h1_seminorm"), ("mperp-l0", "mperp_l2_norm")];
    let present: Vec<_> = columns.iter().filter(|(k, _)| r.norms.contains_key(*k)).collect();
    let mut header = vec!["t".to_string()];
    header.extend(present.iter().map(|(_, c)| c.to_string()));
    let rows = r.times.iter().enumerate().map(|(i, &t)| {
        let mut row = vec![t];
        row.extend(present.iter().map(|(k, _)| r.norms[*k][i]));
        row
    });
    let csv = csv_table(&header, rows);
    // 95 % interval from the fit's standard error
    let main = present.first().and_then(|(k, _)| r.slopes.get(*k)).copied();
    let doc = json!({
        "slope": main.map(|(s, _)| s),
        "slope_ci": main.map(|(s, e)| (s - 1.96 * e, s + 1.96 * e)),
        "slopes": r.slopes,
        "accept": r.accept,
        "fit_window": r.fit_window,
        "verdict": r.verdict,
    });
    out.emit("linear_decay", &doc, Some(&csv))?;
    out.file("plot_linear_decay.py", &plot_script("linear_decay.csv", "linear decay"))?;
    Ok(Status::from_verdict(r.verdict))
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    sim: SimConfig,
    n: usize,
    length: f64,
    perturbation: Perturbation,
    output_dt: f64,
    /// Start from this checkpoint instead of the perturbed background.
    restore: Option<PathBuf>,
    /// Write the final field here.
    checkpoint: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig {
                t_final: 10.0,
                ..SimConfig::default()
            },
            n: 1024,
            length: 100.0,
            perturbation: Perturbation::default(),
            output_dt: 1.0,
            restore: None,
            checkpoint: None,
        }
    }
}

fn simulate(cfg: SimulateConfig, out: &Output) -> Result<Status> {
    cfg.sim.validate()?;
    check_state(&cfg.sim.eq)?;
    if cfg.n < 4 || !(cfg.length > 0.0) || !(cfg.output_dt > 0.0) {
        return Err(Error::Config("need n >= 4, length > 0 and output_dt > 0".into()));
    }
    let field = match &cfg.restore {
        Some(p) => read_checkpoint(p, CheckpointFormat::from_path(p))?,
        None => init_perturbation(&cfg.sim, cfg.n, cfg.length, &cfg.perturbation)
            .map_err(|e| Error::Config(format!("initial state: {e}")))?,
    };
    let outputs: Vec<f64> = (0..)
        .map(|i| field.t + i as f64 * cfg.output_dt)
        .take_while(|&t| t <= cfg.sim.t_final)
        .collect();
    let mut diags = Vec::new();
    let mut last = None;
    let result = neqrad::run(&field, &cfg.sim, &outputs, |f, d| {
        diags.push(d.clone());
        last = Some(f.clone());
    });

    let nh = cfg.sim.s_order;
    let mut header: Vec<String> = ["t", "mass", "momentum", "energy", "entropy", "l2"].map(String::from).into();
    header.extend((1..=nh).map(|k| format!("h{k}")));
    header.push("P_plus_norm".into());
    let rows = diags.iter().map(|d| {
        let mut row = vec![d.t, d.mass, d.momentum, d.energy, d.entropy, d.l2];
        row.extend(d.h.iter().copied());
        row.push(d.p_plus_norm);
        row
    });
    let csv = csv_table(&header, rows);
    let summary: Option<RunSummary> = result.as_ref().ok().cloned();
    let doc = json!({
        "summary": summary,
        "error": result.as_ref().err().map(|e| e.to_string()),
        "diagnostics": diags,
    });
    out.emit("simulate", &doc, Some(&csv))?;
    out.file("plot_simulate.py", &plot_script("simulate.csv", "simulation diagnostics"))?;
    result?;
    if let (Some(p), Some(f)) = (&cfg.checkpoint, &last) {
        write_checkpoint(p, f, CheckpointFormat::from_path(p))?;
    }
    Ok(Status::Pass)
}

fn decay(cfg: NonlinearDecayConfig, out: &Output) -> Result<Status> {
    cfg.sim.validate()?;
    check_state(&cfg.sim.eq)?;
    let r = nonlinear_decay_experiment(&cfg)?;
    out.emit("decay", &r, Some(&r.to_csv()))?;
    out.file("plot_decay.py", &plot_script("decay.csv", "nonlinear decay"))?;
    if let Some(e) = &r.error {
        eprintln!("error: {e}");
        return Ok(Status::NumericalFailure);
    }
    Ok(Status::from_verdict(r.verdict))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    experiments: Vec<ExperimentConfig>,
}

/// A suite file is either a list of experiments or `{"experiments": [...]}`.
fn read_suite(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let v: Value = read_json(path)?;
    let parsed = if v.is_array() {
        serde_json::from_value(v)
    } else {
        serde_json::from_value::<Suite>(v).map(|s| s.experiments)
    };
    parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn report(config: Option<&Path>, seed: Option<u64>, dir: Option<&Path>, format: Format) -> Result<Status> {
    let mut suite = match config {
        Some(p) => read_suite(p)?,
        None => default_suite(),
    };
    if let Some(s) = seed {
        for c in &mut suite {
            c.seed = s;
        }
    }
    let rep = full_report(&suite);
    let dir = dir.unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), rep.to_json()? + "\n")?;
    fs::write(dir.join("report.md"), rep.to_markdown())?;
    match format {
        Format::Json => println!("{}", rep.to_json()?),
        Format::Csv => {
            println!("name,kind,verdict,measured");
            for e in &rep.entries {
                let measured = e.error.as_deref().unwrap_or(&e.measured).replace('"', "'");
                println!("{},{},{},\"{}\"", e.name, e.kind, e.verdict, measured);
            }
        }
    }
    Ok(match rep.entries.iter().filter_map(|e| e.error_code).max() {
        Some(4) => Status::BadConfig,
        Some(_) => Status::NumericalFailure,
        None => Status::from_verdict(rep.all_pass()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_must_be_unit_and_sized() {
        assert_eq!(unit_direction(None, 3).unwrap(), [1.0, 0.0, 0.0]);
        assert!(unit_direction(Some(&[0.6, 0.8]), 2).is_ok());
        assert!(matches!(unit_direction(Some(&[1.0, 1.0]), 2), Err(Error::Config(_))));
        assert!(matches!(unit_direction(Some(&[1.0]), 2), Err(Error::Config(_))));
    }

    #[test]
    fn backgrounds_are_checked() {
        assert!(check_state(&EquilibriumState::canonical(2)).is_ok());
        let mut eq = EquilibriumState::canonical(1);
        eq.eta_bar = 1.5;
        assert!(matches!(check_state(&eq), Err(Error::Config(_))));
        eq = EquilibriumState::canonical(4);
        assert!(matches!(check_state(&eq), Err(Error::Config(_))));
    }

    #[test]
    fn suites_come_bare_or_wrapped() {
        let tmp = tempfile::TempDir::new().unwrap();
        let item = r#"{"name": "s", "kind": "spectrum-scan"}"#;
        for (i, text) in [format!("[{item}]"), format!(r#"{{"experiments": [{item}]}}"#)].iter().enumerate() {
            let p = tmp.path().join(format!("{i}.json"));
            fs::write(&p, text).unwrap();
            let s = read_suite(&p).unwrap();
            assert_eq!(s.len(), 1);
            assert_eq!(s[0].experiment.kind(), "spectrum-scan");
        }
        let p = tmp.path().join("bad.json");
        fs::write(&p, r#"{"experiments": [], "extra": 1}"#).unwrap();
        assert!(matches!(read_suite(&p), Err(Error::Config(_))));
    }

    #[test]
    fn matrix_detection() {
        assert!(is_matrix(&json!([[1.0, 2.0], [3.0, 4.0]])));
        assert!(!is_matrix(&json!([1.0, 0.0])));
        assert!(!is_matrix(&json!({"rho_bar": 1.0})));
        assert_eq!(matrix_csv(&json!([[1.0, 2.0]])), "c0,c1\n1.00000000000000000e0,2.00000000000000000e0\n");
    }
}
