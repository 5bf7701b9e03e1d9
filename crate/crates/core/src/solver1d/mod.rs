//! Nonlinear 1D solver on a periodic grid.
//!
//! The state is advanced in conserved variables `W = (rho, rho u, rho E, eta)`
//! with a Strang splitting `H(dt/2) DR(dt) H(dt/2)`: `H` is the explicit
//! convective step (conservative fluxes plus a centered discretization of
//! the non-conservative exchange `eta u_x / 3`), `DR` the implicit radiation
//! diffusion and relaxation block. Failed steps are halved recursively.

mod checkpoint;
mod diagnostics;
mod hyperbolic;
mod implicit;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::eos::EosModel;
use crate::error::{Error, Result};
use crate::linearize::EquilibriumState;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointFormat};
pub use diagnostics::{diagnostics, Diagnostics, DiagnosticsTracker};
pub use implicit::relax_cell;

use hyperbolic::Hyperbolic;

/// Maximum number of recursive step halvings after a rejected step.
pub const MAX_HALVINGS: usize = 10;

/// Cell-centered primitive field `(rho, u, theta, eta)` on `[0, length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField1D {
    pub length: f64,
    pub t: f64,
    pub v: Vec<Vector4<f64>>,
}

impl StateField1D {
    pub fn new(length: f64, t: f64, v: Vec<Vector4<f64>>) -> Result<Self> {
        if v.len() < 4 {
            return Err(Error::Domain(format!("need at least 4 cells, got {}", v.len())));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain(format!("domain length {length} must be positive")));
        }
        let f = Self { length, t, v };
        if let Some(cell) = f.first_inadmissible() {
            let s = f.v[cell];
            return Err(Error::Domain(format!(
                "cell {cell} state ({}, {}, {}, {}) outside rho, theta, eta > 0",
                s[0], s[1], s[2], s[3]
            )));
        }
        Ok(f)
    }

    /// Uniform field at the background state.
    pub fn uniform(eq: &EquilibriumState, n: usize, length: f64) -> Result<Self> {
        Self::new(length, 0.0, vec![eq.primitive_1d(); n])
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.v.len() as f64
    }

    /// Center of cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    fn first_inadmissible(&self) -> Option<usize> {
        self.v
            .iter()
            .position(|s| !(s[0] > 0.0 && s[2] > 0.0 && s[3] > 0.0) || s.iter().any(|x| !x.is_finite()))
    }

    /// Discrete `L^1` and `L^2` norms of `V - V_bar`.
    pub fn perturbation_norms(&self, eq: &EquilibriumState) -> (f64, f64) {
        let vb = eq.primitive_1d();
        let dx = self.dx();
        let (mut l1, mut l2) = (0.0, 0.0);
        for s in &self.v {
            let d = s - vb;
            l1 += d.abs().sum();
            l2 += d.norm_squared();
        }
        (l1 * dx, (l2 * dx).sqrt())
    }

    pub fn to_conserved(&self, eos: &EosModel) -> Result<Vec<Vector4<f64>>> {
        self.v
            .iter()
            .map(|s| {
                let tp = eos.eval_raw(s[0], s[2])?;
                Ok(Vector4::new(s[0], s[0] * s[1], s[0] * (tp.e + 0.5 * s[1] * s[1]), s[3]))
            })
            .collect()
    }

    pub fn from_conserved(eos: &EosModel, length: f64, t: f64, w: &[Vector4<f64>]) -> Result<Self> {
        let v = w
            .iter()
            .enumerate()
            .map(|(i, wi)| hyperbolic::to_primitive(eos, wi).ok_or(Error::PositivityLoss { cell: i, t }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { length, t, v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperbolicScheme {
    /// MUSCL reconstruction in primitive variables with a Rusanov flux.
    #[default]
    RusanovQuasilinear,
    /// Centered second-order fluxes without numerical dissipation.
    CentralFd2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diffusion {
    /// `D(dt) R(dt)` with backward Euler in both.
    BackwardEuler,
    /// `D(dt/2) R(dt) D(dt/2)` with Crank-Nicolson diffusion and
    /// trapezoidal relaxation.
    #[default]
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relaxation {
    #[default]
    ImplicitNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Periodic,
}

/// Solver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub cfl: f64,
    pub t_final: f64,
    pub eos: EosModel,
    pub eq: EquilibriumState,
    pub bc: Boundary,
    pub hyperbolic_scheme: HyperbolicScheme,
    pub relaxation: Relaxation,
    pub diffusion: Diffusion,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Fixed step instead of the CFL-adaptive one; must respect the CFL bound.
    pub fixed_dt: Option<f64>,
    /// Highest derivative order in the diagnostics.
    pub s_order: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            t_final: 1.0,
            eos: EosModel::default(),
            eq: EquilibriumState::canonical(1),
            bc: Boundary::Periodic,
            hyperbolic_scheme: HyperbolicScheme::default(),
            relaxation: Relaxation::default(),
            diffusion: Diffusion::default(),
            newton_tol: 1e-12,
            newton_max_iter: 50,
            fixed_dt: None,
            s_order: 3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Config(format!("cfl = {} not in (0, 1)", self.cfl)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final = {} must be positive", self.t_final)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::Config("Newton tolerance and iteration cap must be positive".into()));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("fixed_dt = {dt} must be positive")));
            }
        }
        if self.eq.dim() != 1 {
            return Err(Error::Config(format!("the solver is 1D, background has dimension {}", self.eq.dim())));
        }
        self.eq.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// `exp(-((x - x0) / width)^2)`
    #[default]
    Gaussian,
    /// `exp(1 - 1 / (1 - r^2))` for `r = |x - x0| / width < 1`, else 0.
    Bump,
}

/// Localized perturbation of the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub shape: Shape,
    pub amplitude: f64,
    pub width: f64,
    /// Per-component weights applied to `(rho, u, theta, eta)`.
    pub components: [f64; 4],
    /// Center; the middle of the domain when absent.
    pub center: Option<f64>,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            shape: Shape::Gaussian,
            amplitude: 1e-2,
            width: 1.0,
            components: [1.0, 0.0, 0.0, 0.0],
            center: None,
        }
    }
}

impl Perturbation {
    pub fn profile(&self, x: f64, length: f64) -> f64 {
        let r = (x - self.center.unwrap_or(0.5 * length)) / self.width;
        match self.shape {
            Shape::Gaussian => (-r * r).exp(),
            Shape::Bump if r.abs() < 1.0 => (1.0 - 1.0 / (1.0 - r * r)).exp(),
            Shape::Bump => 0.0,
        }
    }
}

/// Background plus `amplitude * profile(x) * components` on `n` cells.
pub fn init_perturbation(config: &SimConfig, n: usize, length: f64, p: &Perturbation) -> Result<StateField1D> {
    if !(p.width > 0.0) {
        return Err(Error::Config(format!("perturbation width {} must be positive", p.width)));
    }
    let vb = config.eq.primitive_1d();
    let mask = Vector4::from(p.components);
    let dx = length / n as f64;
    let v = (0..n)
        .map(|i| vb + mask * (p.amplitude * p.profile((i as f64 + 0.5) * dx, length)))
        .collect();
    StateField1D::new(length, 0.0, v)
}

/// Statistics of a completed run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub t_end: f64,
    pub steps: usize,
    /// Steps that were rejected and split.
    pub halvings: usize,
    pub entropy_warnings: usize,
    /// Smallest `rho`, `theta`, `eta` seen at output times.
    pub min_state: [f64; 3],
}

/// Time integrator holding the conserved state and scratch buffers.
pub struct Simulation {
    config: SimConfig,
    w: Vec<Vector4<f64>>,
    length: f64,
    t: f64,
    hyp: Hyperbolic,
    steps: usize,
    halvings: usize,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("n", &self.w.len())
            .field("t", &self.t)
            .field("steps", &self.steps)
            .finish()
    }
}

impl Simulation {
    pub fn new(field: &StateField1D, config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let w = field.to_conserved(&config.eos)?;
        Ok(Self {
            config: config.clone(),
            hyp: Hyperbolic::new(w.len()),
            w,
            length: field.length,
            t: field.t,
            steps: 0,
            halvings: 0,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn halvings(&self) -> usize {
        self.halvings
    }

    pub fn conserved(&self) -> &[Vector4<f64>] {
        &self.w
    }

    pub fn dx(&self) -> f64 {
        self.length / self.w.len() as f64
    }

    pub fn field(&self) -> Result<StateField1D> {
        StateField1D::from_conserved(&self.config.eos, self.length, self.t, &self.w)
    }

    /// Largest admissible step under the CFL condition.
    pub fn cfl_dt(&self) -> Result<f64> {
        let smax = hyperbolic::max_speed(&self.config.eos, &self.w, self.t)?;
        Ok(self.config.cfl * self.dx() / smax)
    }

    /// One Strang step of size `dt`, split recursively on failure.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let limit = self.cfl_dt()?;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        self.split_step(dt, 0)?;
        self.steps += 1;
        Ok(())
    }

    fn split_step(&mut self, dt: f64, depth: usize) -> Result<()> {
        let backup = self.w.clone();
        match self.strang(dt) {
            Ok(()) => {
                self.t += dt;
                Ok(())
            }
            Err(e @ (Error::PositivityLoss { .. } | Error::NewtonDivergence { .. })) => {
                self.w = backup;
                if depth >= MAX_HALVINGS {
                    return Err(e);
                }
                log::debug!("step of {dt:.3e} at t = {:.6} rejected ({e}), halving", self.t);
                self.halvings += 1;
                let t_end = self.t + dt;
                self.split_step(0.5 * dt, depth + 1)?;
                self.split_step(t_end - self.t, depth + 1)
            }
            Err(e) => Err(e),
        }
    }

    fn strang(&mut self, dt: f64) -> Result<()> {
        let dx = self.dx();
        let cfg = &self.config;
        self.hyp.step(&cfg.eos, cfg.hyperbolic_scheme, &mut self.w, dx, 0.5 * dt, self.t)?;
        implicit::diffusion_relaxation(cfg, &mut self.w, dx, dt, self.t)?;
        self.hyp.step(&cfg.eos, cfg.hyperbolic_scheme, &mut self.w, dx, 0.5 * dt, self.t)
    }

    /// Advances to exactly `target`, landing the last step on it.
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.t < target {
            let remaining = target - self.t;
            let mut dt = match self.config.fixed_dt {
                Some(dt) => dt,
                None => self.cfl_dt()?,
            };
            if dt >= remaining * (1.0 - 1e-9) {
                dt = remaining;
            }
            self.step(dt)?;
            if dt == remaining {
                self.t = target;
            }
        }
        Ok(())
    }
}

/// Single convective step on a field (halved on positivity loss).
pub fn hyperbolic_step(field: &StateField1D, dt: f64, config: &SimConfig) -> Result<StateField1D> {
    let mut w = field.to_conserved(&config.eos)?;
    let dx = field.dx();
    let smax = hyperbolic::max_speed(&config.eos, &w, field.t)?;
    let limit = config.cfl * dx / smax;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    let mut hyp = Hyperbolic::new(w.len());
    split(&mut w, dt, 0, &mut |w, h| hyp.step(&config.eos, config.hyperbolic_scheme, w, dx, h, field.t))?;
    StateField1D::from_conserved(&config.eos, field.length, field.t + dt, &w)
}

/// Single implicit diffusion + relaxation step on a field.
pub fn diffusion_relaxation_step(field: &StateField1D, dt: f64, config: &SimConfig) -> Result<StateField1D> {
    let mut w = field.to_conserved(&config.eos)?;
    let dx = field.dx();
    split(&mut w, dt, 0, &mut |w, h| implicit::diffusion_relaxation(config, w, dx, h, field.t))?;
    StateField1D::from_conserved(&config.eos, field.length, field.t + dt, &w)
}

fn split<F>(w: &mut Vec<Vector4<f64>>, dt: f64, depth: usize, f: &mut F) -> Result<()>
where
    F: FnMut(&mut Vec<Vector4<f64>>, f64) -> Result<()>,
{
    let backup = w.clone();
    match f(w, dt) {
        Err(Error::PositivityLoss { .. } | Error::NewtonDivergence { .. }) if depth < MAX_HALVINGS => {
            *w = backup;
            split(w, 0.5 * dt, depth + 1, f)?;
            split(w, 0.5 * dt, depth + 1, f)
        }
        r => r,
    }
}

/// Runs from `field` to `config.t_final`, calling `observer` at every
/// output time in `outputs` (values outside `[field.t, t_final]` are
/// ignored; `t_final` is always observed).
pub fn run<F>(field: &StateField1D, config: &SimConfig, outputs: &[f64], mut observer: F) -> Result<RunSummary>
where
    F: FnMut(&StateField1D, &Diagnostics),
{
    let mut sim = Simulation::new(field, config)?;
    let mut times: Vec<f64> = outputs
        .iter()
        .copied()
        .filter(|&t| t >= field.t && t <= config.t_final)
        .collect();
    times.push(config.t_final);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut tracker = DiagnosticsTracker::new(config.eos.clone(), config.eq.clone(), config.s_order);
    let mut summary = RunSummary {
        min_state: [f64::INFINITY; 3],
        ..Default::default()
    };
    let mut last_entropy: Option<f64> = None;
    for &t_out in &times {
        sim.advance_to(t_out)?;
        let f = sim.field()?;
        let d = tracker.observe(&f)?;
        for s in &f.v {
            summary.min_state[0] = summary.min_state[0].min(s[0]);
            summary.min_state[1] = summary.min_state[1].min(s[2]);
            summary.min_state[2] = summary.min_state[2].min(s[3]);
        }
        if let Some(prev) = last_entropy {
            let dx = f.dx();
            if d.entropy - prev > 10.0 * dx * dx * prev.abs().max(1.0) {
                log::warn!("entropy increased from {prev:.12e} to {:.12e} at t = {t_out}", d.entropy);
                summary.entropy_warnings += 1;
            }
        }
        last_entropy = Some(d.entropy);
        observer(&f, &d);
    }
    summary.t_end = sim.t();
    summary.steps = sim.steps();
    summary.halvings = sim.halvings();
    Ok(summary)
}
