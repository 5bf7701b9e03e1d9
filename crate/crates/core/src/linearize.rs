//! Linearization of the radiation hydrodynamics system at a constant
//! equilibrium state.
//!
//! Three frames are provided:
//!
//! * primitive variables `V = (rho, u, theta, eta)` in dimension `d`;
//! * the diagonally symmetrized ("barred") form `S * primitive`;
//! * the entropy-Hessian frame in 1D, in which the perturbation
//!   `Z = D_U W(U_bar)^{-1} (W - W_bar)` obeys a symmetric system.
//!
//! All entries come from closed-form expressions so that symmetry holds
//! exactly on the equilibrium manifold.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::eos::{EosModel, ThermoPoint};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance for `eta_bar = theta_bar^4`.
pub const MANIFOLD_TOL: f64 = 1e-12;
/// Relative asymmetry tolerated in a symmetrized matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Constant background state `(rho, u, theta, eta)` plus opacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub rho_bar: f64,
    pub u_bar: Vec<f64>,
    pub theta_bar: f64,
    pub eta_bar: f64,
    pub sigma_a: f64,
    pub sigma_s: f64,
}

impl EquilibriumState {
    /// State on the equilibrium manifold (`eta_bar = theta_bar^4`).
    pub fn new(rho: f64, u: Vec<f64>, theta: f64, sigma_a: f64, sigma_s: f64) -> Result<Self> {
        let eq = Self {
            rho_bar: rho,
            u_bar: u,
            theta_bar: theta,
            eta_bar: theta.powi(4),
            sigma_a,
            sigma_s,
        };
        eq.validate()?;
        Ok(eq)
    }

    /// `rho = 1, u = 0, theta = eta = 1, sigma_a = sigma_s = 1` in dimension `d`.
    pub fn canonical(d: usize) -> Self {
        Self {
            rho_bar: 1.0,
            u_bar: vec![0.0; d],
            theta_bar: 1.0,
            eta_bar: 1.0,
            sigma_a: 1.0,
            sigma_s: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.u_bar.len()
    }

    /// Checks dimension, positivity and finiteness. Manifold membership is
    /// checked separately by [`Self::on_manifold`].
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim()) {
            return Err(Error::Dimension(format!("space dimension {} not in 1..=3", self.dim())));
        }
        let positive = [
            ("rho_bar", self.rho_bar),
            ("theta_bar", self.theta_bar),
            ("eta_bar", self.eta_bar),
            ("sigma_a", self.sigma_a),
            ("sigma_s", self.sigma_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} = {v} must be positive and finite")));
            }
        }
        if self.u_bar.iter().any(|u| !u.is_finite()) {
            return Err(Error::Domain("u_bar has non-finite entries".into()));
        }
        Ok(())
    }

    /// Relative distance of `eta_bar` from `theta_bar^4`.
    pub fn manifold_offset(&self) -> f64 {
        let t4 = self.theta_bar.powi(4);
        (self.eta_bar - t4).abs() / t4
    }

    pub fn on_manifold(&self) -> bool {
        self.manifold_offset() <= MANIFOLD_TOL
    }

    /// The same state with velocity `u` (possibly in another dimension).
    pub fn with_velocity(&self, u: Vec<f64>) -> Self {
        Self { u_bar: u, ..self.clone() }
    }

    /// Primitive 4-vector of a 1D state.
    pub fn primitive_1d(&self) -> Vector4<f64> {
        Vector4::new(self.rho_bar, self.u_bar[0], self.theta_bar, self.eta_bar)
    }
}

fn check_unit(omega: &[f64], d: usize) -> Result<()> {
    if omega.len() != d {
        return Err(Error::Dimension(format!(
            "direction has {} components, expected {d}",
            omega.len()
        )));
    }
    let n = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::Dimension(format!("direction has norm {n}, expected 1")));
    }
    Ok(())
}

/// Generic constant-coefficient system `a0 V_t + a V_x + l V = b V_xx`
/// along one direction. All four matrices are `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativeSystem {
    pub a0: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl DissipativeSystem {
    pub fn new(a0: DMatrix<f64>, a: DMatrix<f64>, l: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a0.nrows();
        for (name, m) in [("a0", &a0), ("a", &a), ("l", &l), ("b", &b)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { a0, a, l, b })
    }

    pub fn size(&self) -> usize {
        self.a0.nrows()
    }

    /// Largest relative asymmetry over the four matrices, with its name.
    pub fn asymmetry(&self) -> (&'static str, f64) {
        [("a0", &self.a0), ("a", &self.a), ("l", &self.l), ("b", &self.b)]
            .into_iter()
            .map(|(n, m)| (n, linalg::rel_asymmetry(m)))
            .fold(("a0", 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    }
}

/// Primitive-variable matrices along a direction `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub a0: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Assembles `A0`, `A(omega)`, `L = D_V Q`, `B(omega)` in dimension `d`.
pub fn assemble_primitive(model: &EosModel, eq: &EquilibriumState, omega: &[f64]) -> Result<Primitive> {
    eq.validate()?;
    let d = eq.dim();
    check_unit(omega, d)?;
    let tp = model.eval(eq.rho_bar, eq.theta_bar)?;
    Ok(primitive_from(&tp, eq, omega))
}

fn primitive_from(tp: &ThermoPoint, eq: &EquilibriumState, omega: &[f64]) -> Primitive {
    let d = eq.dim();
    let n = d + 3;
    let (it, ie) = (d + 1, d + 2);
    let (rho, theta, eta) = (eq.rho_bar, eq.theta_bar, eq.eta_bar);
    let uw: f64 = eq.u_bar.iter().zip(omega).map(|(u, w)| u * w).sum();

    let mut a0 = DMatrix::zeros(n, n);
    a0[(0, 0)] = 1.0;
    for j in 1..=d {
        a0[(j, j)] = rho;
    }
    a0[(it, it)] = rho * tp.e_theta;
    a0[(ie, ie)] = 1.0;

    let mut a = DMatrix::zeros(n, n);
    a[(0, 0)] = uw;
    for j in 0..d {
        a[(0, 1 + j)] = rho * omega[j];
        a[(1 + j, 0)] = tp.p_rho * omega[j];
        a[(1 + j, 1 + j)] = rho * uw;
        a[(1 + j, it)] = tp.p_theta * omega[j];
        a[(1 + j, ie)] = omega[j] / 3.0;
        a[(it, 1 + j)] = theta * tp.p_theta * omega[j];
        a[(ie, 1 + j)] = 4.0 * eta * omega[j] / 3.0;
    }
    a[(it, it)] = rho * tp.e_theta * uw;
    a[(ie, ie)] = uw;

    let mut l = DMatrix::zeros(n, n);
    let t3 = theta.powi(3);
    l[(it, it)] = 4.0 * eq.sigma_a * t3;
    l[(it, ie)] = -eq.sigma_a;
    l[(ie, it)] = -4.0 * eq.sigma_a * t3;
    l[(ie, ie)] = eq.sigma_a;

    let mut b = DMatrix::zeros(n, n);
    // |omega|^2 = 1
    b[(ie, ie)] = 1.0 / (3.0 * eq.sigma_s);

    Primitive { a0, a, l, b }
}

/// Diagonal symmetrizer `S = diag(theta p_rho eta / rho, theta eta I_d, eta, theta / 4)`.
pub fn symmetrizer(tp: &ThermoPoint, eq: &EquilibriumState) -> DMatrix<f64> {
    let d = eq.dim();
    let (rho, theta, eta) = (eq.rho_bar, eq.theta_bar, eq.eta_bar);
    let mut diag = vec![theta * tp.p_rho * eta / rho];
    diag.extend(std::iter::repeat_n(theta * eta, d));
    diag.push(eta);
    diag.push(theta / 4.0);
    DMatrix::from_diagonal(&DVector::from_vec(diag))
}

/// Symmetrized matrices `S * primitive`.
#[derive(Debug, Clone, PartialEq)]
pub struct Barred {
    pub s: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Barred {
    pub fn system(&self) -> DissipativeSystem {
        DissipativeSystem {
            a0: self.a0.clone(),
            a: self.a.clone(),
            l: self.l.clone(),
            b: self.b.clone(),
        }
    }
}

/// Multiplies the primitive matrices by `S` and checks symmetry.
pub fn symmetrize(model: &EosModel, eq: &EquilibriumState, prim: &Primitive) -> Result<Barred> {
    let tp = model.eval(eq.rho_bar, eq.theta_bar)?;
    let s = symmetrizer(&tp, eq);
    let barred = Barred {
        a0: &s * &prim.a0,
        a: &s * &prim.a,
        l: &s * &prim.l,
        b: &s * &prim.b,
        s,
    };
    for (name, m) in [("A0_bar", &barred.a0), ("A_bar", &barred.a), ("L_bar", &barred.l), ("B_bar", &barred.b)] {
        let asym = linalg::rel_asymmetry(m);
        if asym > SYMMETRY_TOL {
            return Err(Error::Symmetry {
                matrix: name.to_string(),
                asymmetry: asym,
            });
        }
    }
    Ok(barred)
}

/// Entropy-frame matrices of the 1D system together with the entropy
/// Hessian and the Jacobian `D_V W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyFrame {
    pub a0: Matrix4<f64>,
    pub a1: Matrix4<f64>,
    pub l: Matrix4<f64>,
    pub b: Matrix4<f64>,
    /// `D^2 S(W_bar)`, the inverse of `a0`.
    pub hessian: Matrix4<f64>,
    pub d_v_w: Matrix4<f64>,
}

impl EntropyFrame {
    pub fn system(&self) -> DissipativeSystem {
        let f = |m: &Matrix4<f64>| DMatrix::from_iterator(4, 4, m.iter().copied());
        DissipativeSystem {
            a0: f(&self.a0),
            a: f(&self.a1),
            l: f(&self.l),
            b: f(&self.b),
        }
    }

    /// Relative asymmetry of `A1_t`; zero on the equilibrium manifold.
    pub fn a1_asymmetry(&self) -> f64 {
        linalg::rel_asymmetry4(&self.a1)
    }
}

/// Entropy-frame matrices without the symmetry check. Off the manifold the
/// returned `a1` is not symmetric.
pub fn entropy_frame_raw(model: &EosModel, eq: &EquilibriumState) -> Result<EntropyFrame> {
    eq.validate()?;
    if eq.dim() != 1 {
        return Err(Error::Dimension(format!(
            "entropy frame is one-dimensional, got d = {}",
            eq.dim()
        )));
    }
    let tp = model.eval(eq.rho_bar, eq.theta_bar)?;
    let (rho, u, th, eta) = (eq.rho_bar, eq.u_bar[0], eq.theta_bar, eq.eta_bar);
    let (p, e, pr, er, et) = (tp.p, tp.e, tp.p_rho, tp.e_rho, tp.e_theta);
    let big_e = e + 0.5 * u * u;
    let eta54 = eta.powf(1.25);

    let a = th * (er * rho * rho + rho * big_e) / pr;
    let b = u * th * (er * rho * rho + rho * big_e + rho * pr) / pr;
    let c = rho * th * ((big_e + er * rho).powi(2) + (u * u + th * et) * pr) / pr;
    #[rustfmt::skip]
    let a0 = Matrix4::new(
        rho * th / pr,     rho * u * th / pr,               a, 0.0,
        rho * u * th / pr, rho * th * (1.0 + u * u / pr),   b, 0.0,
        a,                 b,                               c, 0.0,
        0.0,               0.0,                             0.0, 4.0 * eta54,
    );

    let a11 = rho * u * th / pr;
    let a12 = rho * th * (pr + u * u) / pr;
    let a13 = u * th * (er * rho * rho + rho * big_e + rho * pr) / pr;
    let a22 = rho * u * th * (3.0 * pr + u * u) / pr;
    let a23 = th * (rho * u * u * big_e + u * u * er * rho * rho + (p + rho * e + 2.5 * rho * u * u) * pr) / pr;
    let a24 = 4.0 * eta54 / 3.0;
    let a33 = u * th
        * ((rho * rho * er + rho * big_e).powi(2) + rho * (2.0 * (p + (e + u * u) * rho) + rho * th * et) * pr)
        / (rho * pr);
    let a34 = 4.0 * u * eta54 / 3.0;
    let a42 = 4.0 * th * eta / 3.0;
    let a43 = 4.0 * u * th * eta / 3.0;
    let a44 = 4.0 * u * eta54;
    #[rustfmt::skip]
    let a1 = Matrix4::new(
        a11, a12, a13, 0.0,
        a12, a22, a23, a24,
        a13, a23, a33, a34,
        0.0, a42, a43, a44,
    );

    let sa = eq.sigma_a;
    let t5 = th.powi(5);
    #[rustfmt::skip]
    let l = Matrix4::new(
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 4.0 * sa * t5, -4.0 * sa * eta54,
        0.0, 0.0, -4.0 * sa * t5, 4.0 * sa * eta54,
    );
    let mut bm = Matrix4::zeros();
    bm[(3, 3)] = 4.0 * eta54 / (3.0 * eq.sigma_s);

    let hessian = a0
        .try_inverse()
        .ok_or_else(|| Error::Numerical("entropy-frame A0 is singular".into()))?;
    Ok(EntropyFrame {
        a0,
        a1,
        l,
        b: bm,
        hessian,
        d_v_w: d_v_w_1d(&tp, u),
    })
}

/// Entropy-frame matrices at a state on the equilibrium manifold.
pub fn entropy_frame(model: &EosModel, eq: &EquilibriumState) -> Result<EntropyFrame> {
    let fr = entropy_frame_raw(model, eq)?;
    let asym = fr.a1_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::Symmetry {
            matrix: "A1_t".into(),
            asymmetry: asym,
        });
    }
    Ok(fr)
}

/// Jacobian of `W = (rho, rho u, rho E, eta)` with respect to
/// `V = (rho, u, theta, eta)` in 1D.
pub fn d_v_w_1d(tp: &ThermoPoint, u: f64) -> Matrix4<f64> {
    let rho = tp.rho;
    #[rustfmt::skip]
    let m = Matrix4::new(
        1.0, 0.0, 0.0, 0.0,
        u, rho, 0.0, 0.0,
        tp.e + 0.5 * u * u + rho * tp.e_rho, rho * u, rho * tp.e_theta, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    m
}

/// Jacobian `D_V W` in dimension `d`.
pub fn d_v_w(tp: &ThermoPoint, u: &[f64]) -> DMatrix<f64> {
    let d = u.len();
    let n = d + 3;
    let rho = tp.rho;
    let u2: f64 = u.iter().map(|x| x * x).sum();
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = 1.0;
    for j in 0..d {
        m[(1 + j, 0)] = u[j];
        m[(1 + j, 1 + j)] = rho;
        m[(d + 1, 1 + j)] = rho * u[j];
    }
    m[(d + 1, 0)] = tp.e + 0.5 * u2 + rho * tp.e_rho;
    m[(d + 1, d + 1)] = rho * tp.e_theta;
    m[(d + 2, d + 2)] = 1.0;
    m
}

/// Every matrix family at one equilibrium state.
#[derive(Debug, Clone)]
pub struct MatrixBundle {
    pub eq: EquilibriumState,
    pub thermo: ThermoPoint,
    pub s: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub a0_bar: DMatrix<f64>,
    pub l_bar: DMatrix<f64>,
    pub d_v_w: DMatrix<f64>,
    /// Present in 1D only.
    pub zframe: Option<EntropyFrame>,
}

impl MatrixBundle {
    /// Assembles and checks all families. The state must lie on the
    /// equilibrium manifold.
    pub fn assemble(model: &EosModel, eq: &EquilibriumState) -> Result<Self> {
        eq.validate()?;
        let tp = model.eval(eq.rho_bar, eq.theta_bar)?;
        let d = eq.dim();
        let mut omega = vec![0.0; d];
        omega[0] = 1.0;
        let prim = primitive_from(&tp, eq, &omega);
        let barred = symmetrize(model, eq, &prim)?;
        let zframe = if d == 1 { Some(entropy_frame(model, eq)?) } else { None };
        Ok(Self {
            eq: eq.clone(),
            thermo: tp,
            s: barred.s,
            a0: prim.a0,
            l: prim.l,
            a0_bar: barred.a0,
            l_bar: barred.l,
            d_v_w: d_v_w(&tp, &eq.u_bar),
            zframe,
        })
    }

    pub fn dim(&self) -> usize {
        self.eq.dim()
    }

    /// Primitive symbol `A(omega)`.
    pub fn a_sym(&self, omega: &[f64]) -> Result<DMatrix<f64>> {
        check_unit(omega, self.dim())?;
        Ok(primitive_from(&self.thermo, &self.eq, omega).a)
    }

    /// Primitive symbol `B(omega)`; independent of the direction.
    pub fn b_sym(&self, omega: &[f64]) -> Result<DMatrix<f64>> {
        check_unit(omega, self.dim())?;
        Ok(primitive_from(&self.thermo, &self.eq, omega).b)
    }

    pub fn a_bar(&self, omega: &[f64]) -> Result<DMatrix<f64>> {
        Ok(&self.s * self.a_sym(omega)?)
    }

    pub fn b_bar(&self, omega: &[f64]) -> Result<DMatrix<f64>> {
        Ok(&self.s * self.b_sym(omega)?)
    }

    /// Barred system along `omega`.
    pub fn barred_system(&self, omega: &[f64]) -> Result<DissipativeSystem> {
        Ok(DissipativeSystem {
            a0: self.a0_bar.clone(),
            a: self.a_bar(omega)?,
            l: self.l_bar.clone(),
            b: self.b_bar(omega)?,
        })
    }

    /// Entropy-frame system; errors outside 1D.
    pub fn zframe(&self) -> Result<&EntropyFrame> {
        self.zframe
            .as_ref()
            .ok_or_else(|| Error::Dimension(format!("no entropy frame in d = {}", self.dim())))
    }

    /// Serializable snapshot of every matrix along `omega`, row-major.
    pub fn to_json(&self, omega: &[f64]) -> Result<serde_json::Value> {
        let prim = primitive_from(&self.thermo, &self.eq, omega);
        check_unit(omega, self.dim())?;
        let mut out = serde_json::json!({
            "eq": self.eq,
            "omega": omega,
            "A0": linalg::rows(&prim.a0),
            "A": linalg::rows(&prim.a),
            "L": linalg::rows(&prim.l),
            "B": linalg::rows(&prim.b),
            "S": linalg::rows(&self.s),
            "A0_bar": linalg::rows(&self.a0_bar),
            "A_bar": linalg::rows(&self.a_bar(omega)?),
            "L_bar": linalg::rows(&self.l_bar),
            "B_bar": linalg::rows(&self.b_bar(omega)?),
            "D_V_W": linalg::rows(&self.d_v_w),
        });
        if let Some(z) = &self.zframe {
            let sys = z.system();
            out["A0_t"] = linalg::rows(&sys.a0).into();
            out["A1_t"] = linalg::rows(&sys.a).into();
            out["L_t"] = linalg::rows(&sys.l).into();
            out["B_t"] = linalg::rows(&sys.b).into();
            out["hessian"] = linalg::rows(&DMatrix::from_iterator(4, 4, z.hessian.iter().copied())).into();
        }
        Ok(out)
    }
}

fn check_v(v: &Vector4<f64>) -> Result<()> {
    if !(v[0] > 0.0 && v[2] > 0.0 && v[3] > 0.0) || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!(
            "state ({}, {}, {}, {}) outside rho, theta, eta > 0",
            v[0], v[1], v[2], v[3]
        )));
    }
    Ok(())
}

/// Mathematical entropy `S = -rho s - (4/3) eta^(3/4)` at primitive state `v`.
pub fn entropy_value(model: &EosModel, v: &Vector4<f64>) -> Result<f64> {
    check_v(v)?;
    let tp = model.eval(v[0], v[2])?;
    Ok(-v[0] * tp.s - 4.0 / 3.0 * v[3].powf(0.75))
}

/// Entropy variables `Theta(V) = D_W S`.
pub fn entropy_gradient(model: &EosModel, v: &Vector4<f64>) -> Result<Vector4<f64>> {
    check_v(v)?;
    let (rho, u, th, eta) = (v[0], v[1], v[2], v[3]);
    let tp = model.eval(rho, th)?;
    Ok(Vector4::new(
        -tp.s + (tp.e - 0.5 * u * u + tp.p / rho) / th,
        u / th,
        -1.0 / th,
        -eta.powf(-0.25),
    ))
}

/// Conserved variables `W = (rho, rho u, rho E, eta)` of a primitive state.
pub fn conserved(model: &EosModel, v: &Vector4<f64>) -> Result<Vector4<f64>> {
    check_v(v)?;
    let tp = model.eval(v[0], v[2])?;
    Ok(Vector4::new(
        v[0],
        v[0] * v[1],
        v[0] * (tp.e + 0.5 * v[1] * v[1]),
        v[3],
    ))
}

/// Primitive variables of a conserved state.
pub fn primitive(model: &EosModel, w: &Vector4<f64>) -> Result<Vector4<f64>> {
    let rho = w[0];
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho = {rho} is not positive")));
    }
    let u = w[1] / rho;
    let e = w[2] / rho - 0.5 * u * u;
    let theta = model.temperature_from_energy(rho, e)?;
    let v = Vector4::new(rho, u, theta, w[3]);
    check_v(&v)?;
    Ok(v)
}

/// Physical flux `f(W)` of the 1D system, as a function of the primitive state.
pub fn flux(tp: &ThermoPoint, u: f64, eta: f64) -> Vector4<f64> {
    let rho = tp.rho;
    let ptot = tp.p + eta / 3.0;
    Vector4::new(
        rho * u,
        rho * u * u + ptot,
        (rho * (tp.e + 0.5 * u * u) + ptot) * u,
        eta * u,
    )
}

/// `D_V f` of the 1D flux.
fn d_v_flux(tp: &ThermoPoint, u: f64, eta: f64) -> Matrix4<f64> {
    let rho = tp.rho;
    let big_e = tp.e + 0.5 * u * u;
    let ptot = tp.p + eta / 3.0;
    #[rustfmt::skip]
    let m = Matrix4::new(
        u, rho, 0.0, 0.0,
        u * u + tp.p_rho, 2.0 * rho * u, tp.p_theta, 1.0 / 3.0,
        (big_e + rho * tp.e_rho + tp.p_rho) * u, rho * big_e + ptot + rho * u * u, (rho * tp.e_theta + tp.p_theta) * u, u / 3.0,
        0.0, eta, 0.0, u,
    );
    m
}

/// Entropy-frame perturbation fields and nonlinear remainders.
#[derive(Debug, Clone, PartialEq)]
pub struct ZState {
    pub z: Vec<Vector4<f64>>,
    pub g_tilde: Vec<Vector4<f64>>,
    pub q_tilde: Vec<Vector4<f64>>,
}

impl ZState {
    /// `max |q1| + |q2| + |q3 + q4|` over the grid; zero by construction.
    pub fn m_perp_defect(&self) -> f64 {
        self.q_tilde
            .iter()
            .map(|q| q[0].abs() + q[1].abs() + (q[2] + q[3]).abs())
            .fold(0.0, f64::max)
    }
}

/// Transforms a periodic field of conserved states into entropy-frame
/// perturbations `z`, and evaluates the remainders `g_tilde`, `q_tilde`.
///
/// `dx` is the grid spacing used by the centered derivative of `eta`.
pub fn z_transform(model: &EosModel, eq: &EquilibriumState, w: &[Vector4<f64>], dx: f64) -> Result<ZState> {
    let fr = entropy_frame(model, eq)?;
    let tpb = model.eval(eq.rho_bar, eq.theta_bar)?;
    let ub = eq.u_bar[0];
    let wbar = conserved(model, &eq.primitive_1d())?;
    let fbar = flux(&tpb, ub, eq.eta_bar);
    let dvw_inv = fr
        .d_v_w
        .try_inverse()
        .ok_or_else(|| Error::Numerical("D_V W is singular".into()))?;
    let dwf = d_v_flux(&tpb, ub, eq.eta_bar) * dvw_inv;
    // theta(W) linearized: row 3 of D_W V
    let dw_theta = dvw_inv.row(2).transpose();
    let t3 = 4.0 * eq.theta_bar.powi(3);
    let hess = fr.hessian;
    let sa = eq.sigma_a;

    let n = w.len();
    let prim: Vec<Vector4<f64>> = w.iter().map(|wi| primitive(model, wi)).collect::<Result<_>>()?;
    let mut z = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let v = &prim[i];
        let dw = w[i] - wbar;
        z.push(hess * dw);

        let tp = model.eval(v[0], v[2])?;
        let mut gi = -(flux(&tp, v[1], v[3]) - fbar - dwf * dw);
        let cross = (v[3] - eq.eta_bar) * (v[1] - ub) / 3.0;
        gi[2] += cross;
        gi[3] -= cross;
        g.push(gi);

        let eta_x = (prim[(i + 1) % n][3] - prim[(i + n - 1) % n][3]) / (2.0 * dx);
        let lin_q3 = sa * (dw[3] - t3 * dw_theta.dot(&dw));
        let s = -(v[1] - ub) * eta_x / 3.0 + sa * (v[3] - v[2].powi(4)) - lin_q3;
        q.push(Vector4::new(0.0, 0.0, s, -s));
    }
    Ok(ZState { z, g_tilde: g, q_tilde: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::Closure;

    fn ideal() -> EosModel {
        EosModel::default()
    }

    fn dm(rows: &[[f64; 4]]) -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |i, j| rows[i][j])
    }

    fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn canonical_primitive_matrices() {
        let eq = EquilibriumState::canonical(1);
        let p = assemble_primitive(&ideal(), &eq, &[1.0]).unwrap();
        let a0 = dm(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.5, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        let a1 = dm(&[
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 1.0, 1.0 / 3.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 4.0 / 3.0, 0.0, 0.0],
        ]);
        let l = dm(&[[0.0; 4], [0.0; 4], [0.0, 0.0, 4.0, -1.0], [0.0, 0.0, -4.0, 1.0]]);
        let b = dm(&[[0.0; 4], [0.0; 4], [0.0; 4], [0.0, 0.0, 0.0, 1.0 / 3.0]]);
        assert!(max_diff(&p.a0, &a0) <= 1e-12);
        assert!(max_diff(&p.a, &a1) <= 1e-12);
        assert!(max_diff(&p.l, &l) <= 1e-12);
        assert!(max_diff(&p.b, &b) <= 1e-12);
    }

    #[test]
    fn two_dimensional_symbol() {
        let eq = EquilibriumState::canonical(2);
        let p = assemble_primitive(&ideal(), &eq, &[1.0, 0.0]).unwrap();
        assert_eq!(p.a.nrows(), 5);
        assert_eq!(p.a[(0, 1)], 1.0);
        assert!((p.a[(4, 1)] - 4.0 / 3.0).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(p.a[(i, i)], 0.0);
        }
        assert!(matches!(
            assemble_primitive(&ideal(), &eq, &[1.0, 0.1]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            assemble_primitive(&ideal(), &eq, &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn canonical_barred() {
        let eq = EquilibriumState::canonical(1);
        let m = ideal();
        let p = assemble_primitive(&m, &eq, &[1.0]).unwrap();
        let b = symmetrize(&m, &eq, &p).unwrap();
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 0.25]));
        assert!(max_diff(&b.s, &s) <= 1e-15);
        let lb = dm(&[[0.0; 4], [0.0; 4], [0.0, 0.0, 4.0, -1.0], [0.0, 0.0, -1.0, 0.25]]);
        assert!(max_diff(&b.l, &lb) <= 1e-15);
        let k = DVector::from_vec(vec![0.0, 0.0, 1.0, 4.0]);
        assert!((&b.l * k).amax() < 1e-15);
    }

    #[test]
    fn off_manifold_barred_is_rejected() {
        let mut eq = EquilibriumState::canonical(1);
        eq.eta_bar += 0.1;
        let m = ideal();
        let p = assemble_primitive(&m, &eq, &[1.0]).unwrap();
        match symmetrize(&m, &eq, &p) {
            Err(Error::Symmetry { matrix, .. }) => assert_eq!(matrix, "L_bar"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(entropy_frame(&m, &eq), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn canonical_entropy_frame() {
        let fr = entropy_frame(&ideal(), &EquilibriumState::canonical(1)).unwrap();
        #[rustfmt::skip]
        let a0 = Matrix4::new(
            1.0, 0.0, 1.5, 0.0,
            0.0, 1.0, 0.0, 0.0,
            1.5, 0.0, 3.75, 0.0,
            0.0, 0.0, 0.0, 4.0,
        );
        assert!((fr.a0 - a0).amax() <= 1e-12);
        assert!((fr.a1[(1, 3)] - 4.0 / 3.0).abs() <= 1e-12);
        assert!((fr.a1[(3, 1)] - 4.0 / 3.0).abs() <= 1e-12);
        assert_eq!(fr.l[(2, 2)], 4.0);
        assert_eq!(fr.l[(2, 3)], -4.0);
        assert_eq!(fr.l[(3, 2)], -4.0);
        assert_eq!(fr.l[(3, 3)], 4.0);
        assert!((fr.b[(3, 3)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((fr.l * Vector4::new(0.0, 0.0, 1.0, 1.0)).amax() == 0.0);
        assert!((fr.a0 * fr.hessian - Matrix4::identity()).amax() < 1e-14);
    }

    #[test]
    fn entropy_values() {
        let m = ideal();
        assert!((entropy_value(&m, &Vector4::new(1.0, 0.0, 1.0, 1.0)).unwrap() + 4.0 / 3.0).abs() < 1e-15);
        assert!((entropy_value(&m, &Vector4::new(1.0, 0.0, 1.0, 16.0)).unwrap() + 32.0 / 3.0).abs() < 1e-13);
        let g = entropy_gradient(&m, &Vector4::new(1.0, 0.0, 1.0, 1.0)).unwrap();
        assert!((g - Vector4::new(2.5, 0.0, -1.0, -1.0)).amax() < 1e-15);
        assert!(matches!(
            entropy_value(&m, &Vector4::new(1.0, 0.0, -1.0, 1.0)),
            Err(Error::Domain(_))
        ));
        let g = entropy_gradient(&m, &Vector4::new(0.7, 0.3, 1.3, 1.3f64.powi(4))).unwrap();
        assert!((g[2] - g[3]).abs() < 1e-15);
    }

    /// Entropy gradient is the W-gradient of S, checked by differencing S(V(W)).
    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let m = ideal();
        let v = Vector4::new(1.3, 0.4, 0.9, 0.8);
        let w = conserved(&m, &v).unwrap();
        let grad = entropy_gradient(&m, &v).unwrap();
        for k in 0..4 {
            let h = 1e-6 * w[k].abs().max(1.0);
            let mut wp = w;
            let mut wm = w;
            wp[k] += h;
            wm[k] -= h;
            let sp = entropy_value(&m, &primitive(&m, &wp).unwrap()).unwrap();
            let sm = entropy_value(&m, &primitive(&m, &wm).unwrap()).unwrap();
            let fd = (sp - sm) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * grad[k].abs().max(1.0), "k = {k}");
        }
    }

    #[derive(Debug)]
    struct VanDerWaals {
        r: f64,
        cv: f64,
        a: f64,
        b: f64,
    }

    impl Closure for VanDerWaals {
        fn point(&self, rho: f64, theta: f64) -> ThermoPoint {
            let den = 1.0 - self.b * rho;
            ThermoPoint {
                rho,
                theta,
                p: self.r * rho * theta / den - self.a * rho * rho,
                e: self.cv * theta - self.a * rho,
                s: self.cv * theta.ln() - self.r * (rho / den).ln(),
                p_rho: self.r * theta / (den * den) - 2.0 * self.a * rho,
                p_theta: self.r * rho / den,
                e_rho: -self.a,
                e_theta: self.cv,
                s_rho: -self.r / (rho * den),
                s_theta: self.cv / theta,
            }
        }
    }

    /// Independent route: A0_t = D_V W (D_V Theta)^{-1}, with D_V Theta by
    /// central differences.
    fn a0_by_differences(m: &EosModel, v: Vector4<f64>) -> Matrix4<f64> {
        let tp = m.eval(v[0], v[2]).unwrap();
        let mut dth = Matrix4::zeros();
        for k in 0..4 {
            let h = 1e-6 * v[k].abs().max(1.0);
            let mut vp = v;
            let mut vm = v;
            vp[k] += h;
            vm[k] -= h;
            let col = (entropy_gradient(m, &vp).unwrap() - entropy_gradient(m, &vm).unwrap()) / (2.0 * h);
            dth.set_column(k, &col);
        }
        d_v_w_1d(&tp, v[1]) * dth.try_inverse().unwrap()
    }

    #[test]
    fn entropy_frame_matches_jacobian_route() {
        let models = [
            ideal(),
            EosModel::ideal_gas(2.0, 1.4).unwrap(),
            EosModel::analytic(VanDerWaals {
                r: 1.0,
                cv: 2.5,
                a: 0.3,
                b: 0.1,
            }),
        ];
        for m in &models {
            let eq = EquilibriumState::new(1.7, vec![0.6], 1.2, 0.8, 2.0).unwrap();
            let fr = entropy_frame(m, &eq).unwrap();
            let fd = a0_by_differences(m, eq.primitive_1d());
            let rel = (fr.a0 - fd).amax() / fr.a0.amax();
            assert!(rel < 1e-7, "{} rel {rel}", m.name());
            // congruence D_V W^T Hessian D_V W = diag(...)
            let tp = m.eval(eq.rho_bar, eq.theta_bar).unwrap();
            let c = fr.d_v_w.transpose() * fr.hessian * fr.d_v_w;
            let (rho, th, eta) = (eq.rho_bar, eq.theta_bar, eq.eta_bar);
            let diag = Matrix4::from_diagonal(&Vector4::new(
                tp.p_rho / (th * rho),
                rho / th,
                rho * tp.e_theta / (th * th),
                1.0 / (4.0 * eta.powf(1.25)),
            ));
            assert!((c - diag).amax() <= 1e-10 * diag.amax());
        }
    }

    #[test]
    fn off_manifold_asymmetry_is_linear() {
        let m = ideal();
        let asym = |off: f64| {
            let mut eq = EquilibriumState::canonical(1);
            eq.eta_bar = 1.0 + off;
            entropy_frame_raw(&m, &eq).unwrap().a1_asymmetry()
        };
        // asymmetry / offset must settle to a nonzero constant
        let slopes: Vec<f64> = [1e-3, 5e-4, 2.5e-4].iter().map(|&d| asym(d) / d).collect();
        assert!(slopes[0] > 0.0);
        assert!((slopes[1] / slopes[0] - 1.0).abs() < 1e-2, "{slopes:?}");
        assert!((slopes[2] / slopes[1] - 1.0).abs() < 5e-3, "{slopes:?}");
    }

    #[test]
    fn z_transform_identity_and_structure() {
        let m = ideal();
        let eq = EquilibriumState::new(1.0, vec![0.2], 1.0, 1.0, 1.0).unwrap();
        let wbar = conserved(&m, &eq.primitive_1d()).unwrap();
        let zs = z_transform(&m, &eq, &vec![wbar; 8], 0.5).unwrap();
        assert!(zs.z.iter().chain(&zs.g_tilde).chain(&zs.q_tilde).all(|v| v.amax() < 1e-14));

        let mut w = vec![wbar; 8];
        w[3][3] += 1e-2;
        let zs = z_transform(&m, &eq, &w, 0.5).unwrap();
        // the relaxation source is linear in eta, so its remainder vanishes
        assert!(zs.q_tilde[3][2].abs() < 1e-15);
        assert_eq!(zs.m_perp_defect(), 0.0);

        // a temperature bump makes theta^4 contribute a quadratic remainder
        w[5][2] += 1e-2;
        w[4][1] += 1e-2;
        let zs = z_transform(&m, &eq, &w, 0.5).unwrap();
        assert!(zs.q_tilde[5][2] != 0.0);
        assert!(zs.q_tilde[4][2] != 0.0);
        assert_eq!(zs.m_perp_defect(), 0.0);
    }

    #[test]
    fn g_tilde_is_quadratic() {
        let m = ideal();
        let eq = EquilibriumState::new(1.0, vec![0.1], 1.0, 1.0, 1.0).unwrap();
        let n = 64;
        let dx = 1.0;
        let field = |amp: f64| -> Vec<Vector4<f64>> {
            (0..n)
                .map(|i| {
                    let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    let v = eq.primitive_1d()
                        + amp * Vector4::new(x.sin(), (2.0 * x).cos(), (x + 0.3).sin(), (3.0 * x).cos());
                    conserved(&m, &v).unwrap()
                })
                .collect()
        };
        let gmax = |amp| {
            z_transform(&m, &eq, &field(amp), dx)
                .unwrap()
                .g_tilde
                .iter()
                .map(|g| g.amax())
                .fold(0.0, f64::max)
        };
        let ratio = gmax(1e-3) / gmax(5e-4);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn bundle_json_is_row_major() {
        let b = MatrixBundle::assemble(&ideal(), &EquilibriumState::canonical(1)).unwrap();
        let js = b.to_json(&[1.0]).unwrap();
        assert_eq!(js["A"][1][2].as_f64(), Some(1.0));
        assert!((js["A0_t"][0][2].as_f64().unwrap() - 1.5).abs() < 1e-12);
    }
}
