//! Thermodynamic closure for a Weyl fluid.
//!
//! Density and temperature are the independent variables. Every closure
//! reports `p`, `e`, `s` together with their first partials; the matrix
//! assembly downstream only ever consumes the partials, so they are
//! supplied in closed form rather than by differencing.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the first-law identities.
pub const TOL_IDENTITY: f64 = 1e-8;

/// Thermodynamic state at one `(rho, theta)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoPoint {
    pub rho: f64,
    pub theta: f64,
    pub p: f64,
    pub e: f64,
    pub s: f64,
    pub p_rho: f64,
    pub p_theta: f64,
    pub e_rho: f64,
    pub e_theta: f64,
    pub s_rho: f64,
    pub s_theta: f64,
}

impl ThermoPoint {
    /// First inequality of `p > 0, p_rho > 0, p_theta > 0, e_theta > 0`
    /// that fails, with its value.
    pub fn inequality_violation(&self) -> Option<(&'static str, f64)> {
        [
            ("p", self.p),
            ("p_rho", self.p_rho),
            ("p_theta", self.p_theta),
            ("e_theta", self.e_theta),
        ]
        .into_iter()
        .find(|(_, v)| !(*v > 0.0))
    }

    /// Relative residuals of `e_rho = (p - theta p_theta)/rho^2`,
    /// `s_rho = -p_theta/rho^2` and `s_theta = e_theta/theta`, in that order.
    pub fn identity_residuals(&self) -> [(&'static str, f64); 3] {
        let rho2 = self.rho * self.rho;
        let rel = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
        [
            (
                "e_rho",
                rel(self.e_rho, (self.p - self.theta * self.p_theta) / rho2),
            ),
            ("s_rho", rel(self.s_rho, -self.p_theta / rho2)),
            ("s_theta", rel(self.s_theta, self.e_theta / self.theta)),
        ]
    }
}

/// A user supplied closed-form closure.
///
/// Implementations return the raw point; domain and hypothesis checks are
/// applied by [`EosModel::eval`].
pub trait Closure: Send + Sync + fmt::Debug {
    fn point(&self, rho: f64, theta: f64) -> ThermoPoint;

    fn name(&self) -> &str {
        "analytic"
    }
}

/// Ideal gas `p = R rho theta`, `e = R theta / (gamma - 1)`.
///
/// The entropy gauge is `s(1, 1) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealGas {
    pub r: f64,
    pub gamma: f64,
}

impl IdealGas {
    pub fn new(r: f64, gamma: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!("gas constant must be positive, got {r}")));
        }
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("adiabatic exponent must exceed 1, got {gamma}")));
        }
        Ok(Self { r, gamma })
    }

    fn cv(&self) -> f64 {
        self.r / (self.gamma - 1.0)
    }
}

impl Closure for IdealGas {
    fn point(&self, rho: f64, theta: f64) -> ThermoPoint {
        let cv = self.cv();
        ThermoPoint {
            rho,
            theta,
            p: self.r * rho * theta,
            e: cv * theta,
            s: cv * theta.ln() - self.r * rho.ln(),
            p_rho: self.r * theta,
            p_theta: self.r * rho,
            e_rho: 0.0,
            e_theta: cv,
            s_rho: -self.r / rho,
            s_theta: cv / theta,
        }
    }

    fn name(&self) -> &str {
        "ideal-gas"
    }
}

/// Equation of state used throughout the crate.
#[derive(Debug, Clone)]
pub enum EosModel {
    IdealGas(IdealGas),
    Analytic(Arc<dyn Closure>),
}

impl Default for EosModel {
    fn default() -> Self {
        EosModel::IdealGas(IdealGas {
            r: 1.0,
            gamma: 5.0 / 3.0,
        })
    }
}

impl EosModel {
    pub fn ideal_gas(r: f64, gamma: f64) -> Result<Self> {
        IdealGas::new(r, gamma).map(EosModel::IdealGas)
    }

    pub fn analytic(closure: impl Closure + 'static) -> Self {
        EosModel::Analytic(Arc::new(closure))
    }

    fn closure(&self) -> &dyn Closure {
        match self {
            EosModel::IdealGas(g) => g,
            EosModel::Analytic(c) => c.as_ref(),
        }
    }

    pub fn name(&self) -> &str {
        self.closure().name()
    }

    /// Description of the additive entropy constant in use.
    pub fn entropy_gauge(&self) -> &'static str {
        match self {
            EosModel::IdealGas(_) => "s(rho=1, theta=1) = 0",
            EosModel::Analytic(_) => "closure-defined",
        }
    }

    /// Point evaluation without hypothesis checks. Only the domain is checked.
    pub fn eval_raw(&self, rho: f64, theta: f64) -> Result<ThermoPoint> {
        check_domain(rho, theta)?;
        Ok(self.closure().point(rho, theta))
    }

    /// Evaluates the closure and enforces the Weyl inequalities.
    pub fn eval(&self, rho: f64, theta: f64) -> Result<ThermoPoint> {
        let tp = self.eval_raw(rho, theta)?;
        if let Some((q, v)) = tp.inequality_violation() {
            return Err(Error::HypothesisViolation {
                quantity: q.to_string(),
                detail: format!("{q} = {v:e} at rho = {rho}, theta = {theta}"),
            });
        }
        Ok(tp)
    }

    /// Inverts `e(rho, theta) = e` for the temperature.
    pub fn temperature_from_energy(&self, rho: f64, e: f64) -> Result<f64> {
        match self {
            EosModel::IdealGas(g) => {
                let theta = e / g.cv();
                check_domain(rho, theta)?;
                Ok(theta)
            }
            EosModel::Analytic(c) => {
                if !(rho > 0.0) {
                    return Err(Error::Domain(format!("rho = {rho} is not positive")));
                }
                // Newton on theta; e is increasing in theta (e_theta > 0).
                let mut theta = 1.0;
                for _ in 0..100 {
                    let tp = c.point(rho, theta);
                    let step = (tp.e - e) / tp.e_theta;
                    let next = if theta - step > 0.0 { theta - step } else { 0.5 * theta };
                    if (next - theta).abs() <= 1e-15 * theta {
                        return Ok(next);
                    }
                    theta = next;
                }
                Err(Error::Numerical(format!(
                    "temperature inversion did not converge for rho = {rho}, e = {e}"
                )))
            }
        }
    }
}

fn check_domain(rho: f64, theta: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("rho = {rho} outside rho > 0")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta = {theta} outside theta > 0")));
    }
    Ok(())
}

/// Outcome of a sampled check of the Weyl hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub pass: bool,
    /// Largest inequality deficit or identity residual found.
    pub worst_violation: f64,
    /// Name of the quantity behind `worst_violation`, when any check failed.
    pub violation: Option<String>,
    pub points: usize,
    pub entropy_gauge: String,
}

/// Evaluates `model` at every sample point and checks the inequalities and
/// first-law identities.
pub fn check_weyl_hypotheses(model: &EosModel, sample: &[(f64, f64)]) -> Result<WeylReport> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut worst = 0.0f64;
    let mut worst_name: Option<&'static str> = None;
    let mut pass = true;
    for &(rho, theta) in sample {
        let tp = model.eval_raw(rho, theta)?;
        if let Some((q, v)) = tp.inequality_violation() {
            pass = false;
            let deficit = if v.is_nan() { f64::INFINITY } else { v.abs().max(f64::MIN_POSITIVE) };
            if worst_name.is_none() || deficit > worst {
                worst = deficit;
                worst_name = Some(q);
            }
            continue;
        }
        for (q, r) in tp.identity_residuals() {
            if r > TOL_IDENTITY {
                pass = false;
                if worst_name.is_none() || r > worst {
                    worst = r;
                    worst_name = Some(q);
                }
            } else if pass && r > worst {
                worst = r;
            }
        }
    }
    Ok(WeylReport {
        pass,
        worst_violation: worst,
        violation: worst_name.map(str::to_string),
        points: sample.len(),
        entropy_gauge: model.entropy_gauge().to_string(),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum EosRepr {
    #[serde(rename = "ideal-gas")]
    IdealGas {
        #[serde(rename = "R")]
        r: f64,
        gamma: f64,
    },
}

impl Serialize for EosModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EosModel::IdealGas(g) => EosRepr::IdealGas { r: g.r, gamma: g.gamma }.serialize(serializer),
            EosModel::Analytic(c) => Err(serde::ser::Error::custom(format!(
                "closure '{}' cannot be serialized",
                c.name()
            ))),
        }
    }
}

impl<'de> Deserialize<'de> for EosModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match EosRepr::deserialize(deserializer)? {
            EosRepr::IdealGas { r, gamma } => EosModel::ideal_gas(r, gamma).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Tweaked {
        base: IdealGas,
        tweak: fn(&mut ThermoPoint),
    }

    impl Closure for Tweaked {
        fn point(&self, rho: f64, theta: f64) -> ThermoPoint {
            let mut tp = self.base.point(rho, theta);
            (self.tweak)(&mut tp);
            tp
        }
    }

    fn canonical() -> EosModel {
        EosModel::ideal_gas(1.0, 5.0 / 3.0).unwrap()
    }

    #[test]
    fn ideal_gas_canonical_point() {
        let tp = canonical().eval(1.0, 1.0).unwrap();
        assert_eq!(tp.p, 1.0);
        assert!((tp.e - 1.5).abs() < 1e-15);
        assert_eq!(tp.p_rho, 1.0);
        assert_eq!(tp.p_theta, 1.0);
        assert!((tp.e_theta - 1.5).abs() < 1e-15);
        assert_eq!(tp.e_rho, 0.0);
        assert_eq!(tp.s, 0.0);
        // e_rho = (p - theta p_theta) / rho^2 holds exactly here
        assert_eq!(tp.e_rho, (tp.p - tp.theta * tp.p_theta) / (tp.rho * tp.rho));
    }

    #[test]
    fn ideal_gas_second_point() {
        let tp = EosModel::ideal_gas(2.0, 1.4).unwrap().eval(2.0, 3.0).unwrap();
        assert!((tp.p - 12.0).abs() < 1e-12);
        assert!((tp.e - 15.0).abs() < 1e-12);
        assert!((tp.s_rho + 1.0).abs() < 1e-15);
        assert!((tp.s_rho + tp.p_theta / 4.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let m = canonical();
        assert!(matches!(m.eval(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(m.eval(1.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(m.eval(f64::NAN, 1.0), Err(Error::Domain(_))));
        assert!(matches!(
            check_weyl_hypotheses(&m, &[(1.0, 1.0), (-1.0, 1.0)]),
            Err(Error::Domain(_))
        ));
        assert!(check_weyl_hypotheses(&m, &[]).is_err());
    }

    #[test]
    fn negative_p_theta_is_named() {
        let m = EosModel::analytic(Tweaked {
            base: IdealGas::new(1.0, 5.0 / 3.0).unwrap(),
            tweak: |tp| tp.p_theta = -1.0,
        });
        let rep = check_weyl_hypotheses(&m, &[(1.0, 1.0), (2.0, 0.5)]).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.violation.as_deref(), Some("p_theta"));
        match m.eval(1.0, 1.0) {
            Err(Error::HypothesisViolation { quantity, .. }) => assert_eq!(quantity, "p_theta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perturbed_e_rho_fails_identity() {
        let m = EosModel::analytic(Tweaked {
            base: IdealGas::new(1.0, 5.0 / 3.0).unwrap(),
            tweak: |tp| tp.e_rho += 1e-3,
        });
        let rep = check_weyl_hypotheses(&m, &[(1.0, 1.0)]).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.violation.as_deref(), Some("e_rho"));
        assert!((rep.worst_violation - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn json_roundtrip_matches_documented_shape() {
        let m = canonical();
        let js = serde_json::to_string(&m).unwrap();
        assert_eq!(js, r#"{"kind":"ideal-gas","R":1.0,"gamma":1.6666666666666667}"#);
        let back: EosModel = serde_json::from_str(&js).unwrap();
        assert!(matches!(back, EosModel::IdealGas(g) if g.r == 1.0 && g.gamma == 5.0 / 3.0));
        assert!(serde_json::from_str::<EosModel>(r#"{"kind":"ideal-gas","R":1.0,"gamma":0.9}"#).is_err());
    }

    #[test]
    fn temperature_inversion() {
        let m = canonical();
        let tp = m.eval(2.0, 0.7).unwrap();
        assert!((m.temperature_from_energy(2.0, tp.e).unwrap() - 0.7).abs() < 1e-15);
        let a = EosModel::analytic(IdealGas::new(1.0, 1.4).unwrap());
        let e = IdealGas::new(1.0, 1.4).unwrap().point(1.0, 3.0).e;
        assert!((a.temperature_from_energy(1.0, e).unwrap() - 3.0).abs() < 1e-12);
    }
}
