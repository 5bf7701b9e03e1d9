//! Small-grid runs of the experiment harness.

use neqrad::harness::{CouplingSweepConfig, NonlinearDecayConfig, SpectrumScanConfig};
use neqrad::{full_report, nonlinear_decay_experiment, Error, Experiment, ExperimentConfig, Perturbation, SimConfig};

fn small_decay(amplitude: f64, components: [f64; 4]) -> NonlinearDecayConfig {
    NonlinearDecayConfig {
        sim: SimConfig {
            t_final: 80.0,
            cfl: 0.8,
            ..SimConfig::default()
        },
        n: 2048,
        length: 500.0,
        perturbation: Perturbation {
            amplitude,
            components,
            ..Perturbation::default()
        },
        output_dt: 2.0,
        window: (20.0, 80.0),
        ..NonlinearDecayConfig::default()
    }
}

#[test]
fn decay_exponent_does_not_depend_on_amplitude() {
    let a = nonlinear_decay_experiment(&small_decay(1e-3, [1.0, 0.0, 0.0, 0.0])).unwrap();
    let b = nonlinear_decay_experiment(&small_decay(1e-2, [1.0, 0.0, 0.0, 0.0])).unwrap();
    assert!(a.error.is_none() && b.error.is_none());
    let (sa, sb) = (a.slopes["l2"].0, b.slopes["l2"].0);
    assert!((sa - sb).abs() < 0.02, "{sa} vs {sb}");
    assert!(a.verdict && b.verdict);
    let growth = b.extras["energy_estimate_growth"];
    assert!(growth.is_finite() && growth >= 1.0, "{growth}");
    // the norms scale with the amplitude
    let ratio = b.norms["l2"][10] / a.norms["l2"][10];
    assert!((ratio - 10.0).abs() < 0.1, "{ratio}");
}

#[test]
fn large_perturbation_loses_positivity() {
    let r = nonlinear_decay_experiment(&small_decay(1.0, [0.0, 20.0, 0.0, 0.0])).unwrap();
    assert!(!r.verdict);
    assert!(r.error.as_deref().is_some_and(|e| e.contains("positivity")), "{:?}", r.error);
}

#[test]
fn report_keeps_order_and_isolates_failures() {
    let mut bad = SpectrumScanConfig::default();
    bad.eq.eta_bar = 3.0;
    let suite = vec![
        ExperimentConfig {
            name: "multi-d".into(),
            seed: 5,
            experiment: Experiment::CouplingSweep(CouplingSweepConfig {
                states: 4,
                dims: vec![2, 3],
                compensating: false,
                ..CouplingSweepConfig::default()
            }),
        },
        ExperimentConfig {
            name: "off-manifold".into(),
            seed: 0,
            experiment: Experiment::SpectrumScan(bad),
        },
    ];
    let rep = full_report(&suite);
    let names: Vec<&str> = rep.entries.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["multi-d", "off-manifold"]);
    assert!(rep.entries[0].verdict);
    assert!(rep.entries[0].measured.contains("not coupled 8/8"));
    assert!(!rep.entries[1].verdict);
    assert_eq!(rep.entries[1].error_code, Some(4));
    assert!(!rep.all_pass());
    assert!(matches!(suite[1].experiment.validate(), Err(Error::Config(_))));
}
