//! Conserved totals, perturbation norms and energy functionals.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::StateField1D;
use crate::eos::EosModel;
use crate::error::Result;
use crate::linearize::{entropy_value, EquilibriumState};

type V4 = Vector4<f64>;

/// Snapshot diagnostics of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    /// `int (rho E + eta)`
    pub energy: f64,
    /// `int S`, `S = -rho s - (4/3) eta^(3/4)`
    pub entropy: f64,
    /// `||V - V_bar||_{L^2}`
    pub l2: f64,
    /// `||D^k (V - V_bar)||_{L^2}` for `k = 1..=s_order`.
    pub h: Vec<f64>,
    /// Running sup of `sum_{k <= s} ||D^k (V - V_bar)||^2`.
    pub es: f64,
    /// Time integral of `||d_x (rho, u, theta)||_{s-1}^2 + ||d_x eta||_s^2`.
    pub fs: f64,
    /// `||P+ d_x V||_{L^2}` with `P+` the projector onto the range of the
    /// symmetrized relaxation matrix.
    pub p_plus_norm: f64,
}

/// Compensated (Kahan) summation.
fn kahan(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

fn d1(f: &[V4], dx: f64) -> Vec<V4> {
    let n = f.len();
    (0..n).map(|i| (f[(i + 1) % n] - f[(i + n - 1) % n]) / (2.0 * dx)).collect()
}

fn d2(f: &[V4], dx: f64) -> Vec<V4> {
    let n = f.len();
    (0..n)
        .map(|i| (f[(i + 1) % n] - f[i] * 2.0 + f[(i + n - 1) % n]) / (dx * dx))
        .collect()
}

/// Squared `L^2` norms per component of `D^k f` for `k = 0..=max`, where
/// `D^{2m} = D2^m` and `D^{2m+1} = D1 D2^m`.
fn derivative_norms(f: &[V4], dx: f64, max: usize) -> Vec<V4> {
    let sq = |g: &[V4]| {
        let mut s = V4::zeros();
        for c in 0..4 {
            s[c] = dx * kahan(g.iter().map(|x| x[c] * x[c]));
        }
        s
    };
    let mut out = Vec::with_capacity(max + 1);
    let mut even = f.to_vec();
    for k in 0..=max {
        if k % 2 == 0 {
            if k > 0 {
                even = d2(&even, dx);
            }
            out.push(sq(&even));
        } else {
            out.push(sq(&d1(&even, dx)));
        }
    }
    out
}

struct Instant {
    base: Diagnostics,
    es_now: f64,
    fs_integrand: f64,
}

fn instant(field: &StateField1D, eos: &EosModel, eq: &EquilibriumState, s_order: usize) -> Result<Instant> {
    let dx = field.dx();
    let v = &field.v;
    let w = field.to_conserved(eos)?;
    let ent: Vec<f64> = v.iter().map(|s| entropy_value(eos, s)).collect::<Result<_>>()?;
    let vb = eq.primitive_1d();
    let pert: Vec<V4> = v.iter().map(|s| s - vb).collect();

    let norms = derivative_norms(&pert, dx, s_order + 1);
    let total = |k: usize| norms[k].sum();
    let h: Vec<f64> = (1..=s_order).map(|k| total(k).sqrt()).collect();
    let es_now: f64 = (0..=s_order).map(total).sum();
    // ||d_x f||_{s-1}^2 = sum_{k=1}^{s} ||D^k f||^2 for (rho, u, theta),
    // and up to k = s + 1 for eta
    let fluid: f64 = (1..=s_order.max(1)).map(|k| norms[k][0] + norms[k][1] + norms[k][2]).sum();
    let rad: f64 = (1..=s_order + 1).map(|k| norms[k][3]).sum();

    let r = V4::new(0.0, 0.0, 4.0 * eq.theta_bar.powi(3), -1.0);
    let dv = d1(v, dx);
    let p_plus = (dx * kahan(dv.iter().map(|g| r.dot(g).powi(2))) / r.norm_squared()).sqrt();

    Ok(Instant {
        base: Diagnostics {
            t: field.t,
            mass: dx * kahan(w.iter().map(|x| x[0])),
            momentum: dx * kahan(w.iter().map(|x| x[1])),
            energy: dx * kahan(w.iter().map(|x| x[2] + x[3])),
            entropy: dx * kahan(ent.into_iter()),
            l2: total(0).sqrt(),
            h,
            es: es_now,
            fs: 0.0,
            p_plus_norm: p_plus,
        },
        es_now,
        fs_integrand: fluid + rad,
    })
}

/// Diagnostics of a single snapshot; `es` is the instantaneous value and
/// `fs` is zero.
pub fn diagnostics(field: &StateField1D, eos: &EosModel, eq: &EquilibriumState, s_order: usize) -> Result<Diagnostics> {
    Ok(instant(field, eos, eq, s_order)?.base)
}

/// Accumulates `Es` (running sup) and `Fs` (trapezoidal time integral)
/// across successive snapshots.
#[derive(Debug, Clone)]
pub struct DiagnosticsTracker {
    eos: EosModel,
    eq: EquilibriumState,
    s_order: usize,
    es: f64,
    fs: f64,
    last: Option<(f64, f64)>,
}

impl DiagnosticsTracker {
    pub fn new(eos: EosModel, eq: EquilibriumState, s_order: usize) -> Self {
        Self {
            eos,
            eq,
            s_order,
            es: 0.0,
            fs: 0.0,
            last: None,
        }
    }

    pub fn observe(&mut self, field: &StateField1D) -> Result<Diagnostics> {
        let ins = instant(field, &self.eos, &self.eq, self.s_order)?;
        self.es = self.es.max(ins.es_now);
        if let Some((t0, g0)) = self.last {
            self.fs += 0.5 * (field.t - t0) * (g0 + ins.fs_integrand);
        }
        self.last = Some((field.t, ins.fs_integrand));
        Ok(Diagnostics {
            es: self.es,
            fs: self.fs,
            ..ins.base
        })
    }
}
