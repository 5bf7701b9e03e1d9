//! Explicit convective step (SSP-RK3 in time).

use nalgebra::Vector4;

use super::HyperbolicScheme;
use crate::eos::{EosModel, ThermoPoint};
use crate::error::{Error, Result};
use crate::linearize::flux;

type V4 = Vector4<f64>;

pub(super) fn to_primitive(eos: &EosModel, w: &V4) -> Option<V4> {
    let rho = w[0];
    if !(rho > 0.0) {
        return None;
    }
    let u = w[1] / rho;
    let e = w[2] / rho - 0.5 * u * u;
    let theta = eos.temperature_from_energy(rho, e).ok()?;
    let v = V4::new(rho, u, theta, w[3]);
    (theta > 0.0 && w[3] > 0.0 && v.iter().all(|x| x.is_finite())).then_some(v)
}

/// Fastest characteristic speed `|u| + c`, with `c^2` the sum of the
/// fluid sound speed squared and the radiation contribution `4 eta / (9 rho)`.
pub(super) fn wave_speed(tp: &ThermoPoint, u: f64, eta: f64) -> f64 {
    let rho = tp.rho;
    let c2 = tp.p_rho + tp.theta * tp.p_theta * tp.p_theta / (rho * rho * tp.e_theta) + 4.0 * eta / (9.0 * rho);
    u.abs() + c2.sqrt()
}

pub(super) fn max_speed(eos: &EosModel, w: &[V4], t: f64) -> Result<f64> {
    let mut smax: f64 = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let v = to_primitive(eos, wi).ok_or(Error::PositivityLoss { cell: i, t })?;
        let tp = eos.eval_raw(v[0], v[2]).map_err(|_| Error::PositivityLoss { cell: i, t })?;
        smax = smax.max(wave_speed(&tp, v[1], v[3]));
    }
    Ok(smax)
}

fn admissible(v: &V4) -> bool {
    v[0] > 0.0 && v[2] > 0.0 && v[3] > 0.0
}

/// Flux, conserved state and wave speed of a primitive state.
fn face_data(eos: &EosModel, v: &V4) -> Option<(V4, V4, f64)> {
    let tp = eos.eval_raw(v[0], v[2]).ok()?;
    let w = V4::new(v[0], v[0] * v[1], v[0] * (tp.e + 0.5 * v[1] * v[1]), v[3]);
    Some((flux(&tp, v[1], v[3]), w, wave_speed(&tp, v[1], v[3])))
}

/// Scratch space for the convective step.
pub(super) struct Hyperbolic {
    prim: Vec<V4>,
    face: Vec<V4>,
    k: Vec<V4>,
    w0: Vec<V4>,
}

impl Hyperbolic {
    pub fn new(n: usize) -> Self {
        Self {
            prim: vec![V4::zeros(); n],
            face: vec![V4::zeros(); n],
            k: vec![V4::zeros(); n],
            w0: vec![V4::zeros(); n],
        }
    }

    fn primitives(&mut self, eos: &EosModel, w: &[V4], t: f64) -> Result<()> {
        for (i, (p, wi)) in self.prim.iter_mut().zip(w).enumerate() {
            *p = to_primitive(eos, wi).ok_or(Error::PositivityLoss { cell: i, t })?;
        }
        Ok(())
    }

    /// `self.k = dW/dt` for the convective part at state `w`.
    fn rhs(&mut self, eos: &EosModel, scheme: HyperbolicScheme, w: &[V4], dx: f64, t: f64) -> Result<()> {
        self.primitives(eos, w, t)?;
        let n = w.len();
        let prim = &self.prim;
        let bad = |i: usize| Error::PositivityLoss { cell: i, t };
        // face[i] is the numerical flux at the face between cells i and i+1
        for i in 0..n {
            let ip = (i + 1) % n;
            self.face[i] = match scheme {
                HyperbolicScheme::CentralFd2 => {
                    let (fl, _, _) = face_data(eos, &prim[i]).ok_or_else(|| bad(i))?;
                    let (fr, _, _) = face_data(eos, &prim[ip]).ok_or_else(|| bad(ip))?;
                    (fl + fr) * 0.5
                }
                HyperbolicScheme::RusanovQuasilinear => {
                    let im = (i + n - 1) % n;
                    let ipp = (i + 2) % n;
                    let mut vl = prim[i] + (prim[ip] - prim[im]) * 0.25;
                    let mut vr = prim[ip] - (prim[ipp] - prim[i]) * 0.25;
                    if !admissible(&vl) || !admissible(&vr) {
                        vl = prim[i];
                        vr = prim[ip];
                    }
                    let (fl, wl, sl) = face_data(eos, &vl).ok_or_else(|| bad(i))?;
                    let (fr, wr, sr) = face_data(eos, &vr).ok_or_else(|| bad(ip))?;
                    (fl + fr) * 0.5 - (wr - wl) * (0.5 * sl.max(sr))
                }
            };
        }
        let inv = 1.0 / dx;
        for i in 0..n {
            let im = (i + n - 1) % n;
            let ip = (i + 1) % n;
            let mut k = (self.face[im] - self.face[i]) * inv;
            // eta u_x / 3 moves energy from radiation to the fluid
            let ex = prim[i][3] * (prim[ip][1] - prim[im][1]) * (inv / 6.0);
            k[2] += ex;
            k[3] -= ex;
            self.k[i] = k;
        }
        Ok(())
    }

    /// Three-stage strong-stability-preserving Runge-Kutta step.
    pub fn step(&mut self, eos: &EosModel, scheme: HyperbolicScheme, w: &mut [V4], dx: f64, dt: f64, t: f64) -> Result<()> {
        self.w0.copy_from_slice(w);
        // stages written as increments over w0 so that a zero right-hand
        // side leaves the state bitwise unchanged
        self.rhs(eos, scheme, w, dx, t)?;
        for (wi, ki) in w.iter_mut().zip(&self.k) {
            *wi += ki * dt;
        }
        self.rhs(eos, scheme, w, dx, t)?;
        for ((wi, ki), w0) in w.iter_mut().zip(&self.k).zip(&self.w0) {
            *wi = w0 + (*wi - w0 + ki * dt) * 0.25;
        }
        self.rhs(eos, scheme, w, dx, t)?;
        for ((wi, ki), w0) in w.iter_mut().zip(&self.k).zip(&self.w0) {
            *wi = w0 + (*wi - w0 + ki * dt) * (2.0 / 3.0);
        }
        self.primitives(eos, w, t)
    }
}
