//! Implicit radiation diffusion and pointwise relaxation.

use nalgebra::Vector4;

use super::{Diffusion, SimConfig};
use crate::eos::EosModel;
use crate::error::{Error, Result};

type V4 = Vector4<f64>;

/// Solves the periodic system `(1 + 2r) x_i - r (x_{i-1} + x_{i+1}) = d_i`
/// in place (Sherman-Morrison on top of the Thomas algorithm).
///
/// Constants are reproduced exactly: the solve acts on `d - d_0`.
pub(crate) fn cyclic_solve(r: f64, d: &mut [f64]) {
    let n = d.len();
    if r == 0.0 || n == 0 {
        return;
    }
    let shift = d[0];
    d.iter_mut().for_each(|x| *x -= shift);
    let (a, b) = (-r, 1.0 + 2.0 * r);
    // corner entries A[0][n-1] = A[n-1][0] = a
    let gamma = -b;
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - a * a / gamma;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = a;
    thomas(a, &diag, d);
    thomas(a, &diag, &mut u);
    let fact = (d[0] + a * d[n - 1] / gamma) / (1.0 + u[0] + a * u[n - 1] / gamma);
    for (x, z) in d.iter_mut().zip(&u) {
        *x += shift - fact * z;
    }
}

/// Tridiagonal solve with constant off-diagonal `a`.
fn thomas(a: f64, diag: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut c = vec![0.0; n];
    c[0] = a / diag[0];
    d[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - a * c[i - 1];
        c[i] = a / m;
        d[i] = (d[i] - a * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
}

/// One diffusion step of `eta_t = kappa eta_xx`, theta-weighted:
/// `weight = 1` is backward Euler, `weight = 1/2` Crank-Nicolson.
fn diffuse(eta: &mut [f64], kappa: f64, dx: f64, dt: f64, weight: f64) {
    let r = kappa * dt / (dx * dx);
    let n = eta.len();
    if weight < 1.0 {
        let re = (1.0 - weight) * r;
        let old = eta.to_vec();
        for i in 0..n {
            let lap = old[(i + 1) % n] - 2.0 * old[i] + old[(i + n - 1) % n];
            eta[i] = old[i] + re * lap;
        }
    }
    cyclic_solve(weight * r, eta);
}

/// Implicit relaxation of one cell with `rho` frozen.
///
/// `rho_e` and `eta` are the internal and radiation energies on entry;
/// their sum is conserved. Solves for the new temperature with
/// `eta(theta) = rho_e + eta - rho e(rho, theta)` and
/// `eta(theta) - eta* = -dt sigma [w (eta - theta^4) + (1 - w)(eta* - theta*^4)]`,
/// `w = 1` (backward Euler) or `w = 1/2` (trapezoidal rule).
/// Returns the new `(theta, eta)`.
#[allow(clippy::too_many_arguments)]
pub fn relax_cell(
    eos: &EosModel,
    rho: f64,
    rho_e: f64,
    eta: f64,
    sigma_dt: f64,
    weight: f64,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<(f64, f64), usize> {
    let theta0 = eos.temperature_from_energy(rho, rho_e / rho).map_err(|_| 0usize)?;
    let e0 = eos.eval_raw(rho, theta0).map_err(|_| 0usize)?.e;
    let explicit = (1.0 - weight) * sigma_dt * (eta - theta0.powi(4));
    let c = weight * sigma_dt;
    // radiation energy after moving rho (e(theta) - e0) into the fluid
    let eta_at = |e: f64| eta - rho * (e - e0);
    let g = |theta: f64| -> Option<(f64, f64)> {
        let tp = eos.eval_raw(rho, theta).ok()?;
        let eta_new = eta_at(tp.e);
        let t3 = theta * theta * theta;
        let val = eta_new - eta + c * (eta_new - t3 * theta) + explicit;
        let der = -rho * tp.e_theta * (1.0 + c) - 4.0 * c * t3;
        Some((val, der))
    };
    let finish = |theta: f64, it: usize| -> std::result::Result<(f64, f64), usize> {
        let e = eos.eval_raw(rho, theta).map_err(|_| it)?.e;
        Ok((theta, eta_at(e)))
    };
    // g is strictly decreasing; keep a bracket and bisect when Newton leaves it
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut theta = theta0;
    for it in 0..max_iter {
        let (val, der) = g(theta).ok_or(it)?;
        if val == 0.0 {
            return finish(theta, it);
        }
        if val > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let mut next = theta - val / der;
        // inclusive: a converged step rounds onto the bracket end it just set
        if !(next >= lo && next <= hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * theta };
        }
        let done = (next - theta).abs() <= tol * theta;
        theta = next;
        if done {
            return finish(theta, it);
        }
    }
    Err(max_iter)
}

/// Diffusion and relaxation block on conserved cells.
pub(super) fn diffusion_relaxation(cfg: &SimConfig, w: &mut [V4], dx: f64, dt: f64, t: f64) -> Result<()> {
    let kappa = 1.0 / (3.0 * cfg.eq.sigma_s);
    let mut eta: Vec<f64> = w.iter().map(|x| x[3]).collect();
    let weight = match cfg.diffusion {
        Diffusion::BackwardEuler => {
            diffuse(&mut eta, kappa, dx, dt, 1.0);
            1.0
        }
        Diffusion::CrankNicolson => {
            diffuse(&mut eta, kappa, dx, 0.5 * dt, 0.5);
            0.5
        }
    };
    let sigma_dt = cfg.eq.sigma_a * dt;
    for (i, wi) in w.iter_mut().enumerate() {
        let rho = wi[0];
        let kinetic = 0.5 * wi[1] * wi[1] / rho;
        let rho_e = wi[2] - kinetic;
        if !(rho > 0.0 && rho_e > 0.0 && eta[i] > 0.0) {
            return Err(Error::PositivityLoss { cell: i, t });
        }
        let (_, eta_new) = relax_cell(&cfg.eos, rho, rho_e, eta[i], sigma_dt, weight, cfg.newton_tol, cfg.newton_max_iter)
            .map_err(|iterations| Error::NewtonDivergence { cell: i, iterations })?;
        if !(eta_new > 0.0) {
            return Err(Error::PositivityLoss { cell: i, t });
        }
        wi[2] += eta[i] - eta_new;
        eta[i] = eta_new;
    }
    if cfg.diffusion == Diffusion::CrankNicolson {
        diffuse(&mut eta, kappa, dx, 0.5 * dt, 0.5);
    }
    for (wi, e) in w.iter_mut().zip(&eta) {
        if !(*e > 0.0) {
            return Err(Error::PositivityLoss { cell: 0, t });
        }
        wi[3] = *e;
    }
    Ok(())
}
