//! Shared fixtures for the benchmarks.

use neqrad::{init_perturbation, Perturbation, SimConfig, StateField1D};

/// Default solver settings with a localized density and velocity bump on
/// `n` cells of a domain of length `n / 8`.
pub fn perturbed(n: usize) -> (SimConfig, StateField1D) {
    let cfg = SimConfig::default();
    let p = Perturbation {
        amplitude: 1e-2,
        components: [1.0, 0.5, -0.5, 1.0],
        ..Perturbation::default()
    };
    let field = init_perturbation(&cfg, n, n as f64 / 8.0, &p).expect("valid perturbation");
    (cfg, field)
}
