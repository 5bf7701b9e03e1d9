//! Fourier symbol of the linear system and its spectral analysis.
//!
//! For a system `a0 Z_t + a Z_x + l Z = b Z_xx` the Fourier transform
//! evolves by `Z^(xi, t) = exp(t Phi(xi)) Z^(xi, 0)` with
//! `Phi(xi) = -a0^{-1} (l + i xi a + xi^2 b)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::linearize::{DissipativeSystem, EntropyFrame};

type CMatrix = DMatrix<Complex64>;

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `n` log-spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Precomputed pieces of the symbol of one system.
#[derive(Debug, Clone)]
pub struct Symbol {
    m_l: CMatrix,
    m_a: CMatrix,
    m_b: CMatrix,
    n: usize,
}

impl Symbol {
    pub fn new(sys: &DissipativeSystem) -> Result<Self> {
        let inv = sys
            .a0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("a0 is singular".into()))?;
        Ok(Self {
            m_l: to_complex(&(-&inv * &sys.l)),
            m_a: to_complex(&(-&inv * &sys.a)),
            m_b: to_complex(&(-&inv * &sys.b)),
            n: sys.size(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `Phi(xi)`.
    pub fn matrix(&self, xi: f64) -> CMatrix {
        &self.m_l + &self.m_a * Complex64::new(0.0, xi) + &self.m_b * Complex64::new(xi * xi, 0.0)
    }

    /// Eigenvalues of `Phi(xi)`, sorted by descending real part.
    pub fn eigenvalues(&self, xi: f64) -> Result<Vec<Complex64>> {
        let ev = self
            .matrix(xi)
            .schur()
            .eigenvalues()
            .ok_or_else(|| Error::Numerical(format!("Schur form failed at xi = {xi}")))?;
        let mut ev: Vec<Complex64> = ev.iter().copied().collect();
        ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        Ok(ev)
    }

    /// `exp(t Phi(xi))` by scaling and squaring with Padé approximants.
    pub fn propagator(&self, xi: f64, t: f64) -> CMatrix {
        (self.matrix(xi) * Complex64::new(t, 0.0)).exp()
    }
}

#[derive(Debug, Clone)]
pub struct SymbolEvaluation {
    pub xi: f64,
    pub phi: CMatrix,
    pub eigenvalues: Vec<Complex64>,
    /// Largest real part.
    pub spectral_gap: f64,
}

/// Evaluates the symbol and its spectrum at one wavenumber.
pub fn symbol(sys: &DissipativeSystem, xi: f64) -> Result<SymbolEvaluation> {
    let s = Symbol::new(sys)?;
    let eigenvalues = s.eigenvalues(xi)?;
    Ok(SymbolEvaluation {
        xi,
        phi: s.matrix(xi),
        spectral_gap: eigenvalues[0].re,
        eigenvalues,
    })
}

/// One eigenvalue branch followed continuously from `xi = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// `lambda(0)` as `(re, im)`.
    pub lambda0: (f64, f64),
    /// Least-squares coefficient `kappa` in `Re(lambda - lambda(0)) ≈ kappa xi^2`.
    pub quadratic_coeff: f64,
    pub vanishes_at_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    pub xis: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Largest `c` with `gap <= -c xi^2 / (1 + xi^2)` on every grid point.
    pub fitted_c: f64,
    /// Branch values on the grid: `branches[b][i]` is branch `b` at `xis[i]`, as `(re, im)`.
    pub branches: Vec<Vec<(f64, f64)>>,
    pub branch_table: Vec<Branch>,
    /// `false` when continuation could not resolve an ambiguity.
    pub classified: bool,
    /// Wavenumber at which continuation failed, if it did.
    pub ambiguous_at: Option<f64>,
}

impl SpectralCurve {
    pub fn vanishing_branches(&self) -> usize {
        self.branch_table.iter().filter(|b| b.vanishes_at_zero).count()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Best and second best assignment of `new` to `old`: `new[perm[b]]`
/// continues branch `b`.
fn match_eigenvalues(old: &[Complex64], new: &[Complex64], perms: &[Vec<usize>]) -> (Vec<usize>, f64, f64) {
    let mut best = (f64::INFINITY, 0usize);
    let mut second = f64::INFINITY;
    for (k, p) in perms.iter().enumerate() {
        let c: f64 = p.iter().enumerate().map(|(b, &j)| (new[j] - old[b]).norm()).sum();
        if c < best.0 {
            second = best.0;
            best = (c, k);
        } else if c < second {
            second = c;
        }
    }
    (perms[best.1].clone(), best.0, second)
}

fn min_separation(v: &[Complex64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            m = m.min((v[i] - v[j]).norm());
        }
    }
    m
}

struct Tracker<'a> {
    sym: &'a Symbol,
    perms: Vec<Vec<usize>>,
    scale: f64,
    ambiguous_at: Option<f64>,
}

impl Tracker<'_> {
    /// Continues branches from `(xa, va)` to `xb`, halving the step while
    /// the assignment is ambiguous.
    fn step(&mut self, xa: f64, va: &[Complex64], xb: f64, depth: usize) -> Result<Vec<Complex64>> {
        let raw = self.sym.eigenvalues(xb)?;
        let (perm, c1, c2) = match_eigenvalues(va, &raw, &self.perms);
        let matched: Vec<Complex64> = perm.iter().map(|&j| raw[j]).collect();
        let tiny = 1e-12 * self.scale;
        let ambiguous = c1 > tiny && c2 < 2.0 * c1;
        if !ambiguous {
            return Ok(matched);
        }
        if depth >= 30 {
            // Coalescing eigenvalues make either assignment valid.
            if min_separation(&raw) > 1e-6 * self.scale && self.ambiguous_at.is_none() {
                self.ambiguous_at = Some(xb);
            }
            return Ok(matched);
        }
        let xm = 0.5 * (xa + xb);
        let vm = self.step(xa, va, xm, depth + 1)?;
        self.step(xm, &vm, xb, depth + 1)
    }
}

/// Spectral curve of `sys` over an increasing grid of positive wavenumbers.
///
/// Branches are continued from `xi = 0` by nearest-eigenvalue matching;
/// the branch table reports `lambda(0)` and a quadratic fit of the real
/// part on `xi <= fit_xi_max` (at least the first five grid points).
pub fn spectral_curve(sys: &DissipativeSystem, xis: &[f64]) -> Result<SpectralCurve> {
    spectral_curve_with(sys, xis, 1e-2)
}

pub fn spectral_curve_with(sys: &DissipativeSystem, xis: &[f64], fit_xi_max: f64) -> Result<SpectralCurve> {
    if xis.is_empty() || xis.windows(2).any(|w| w[1] <= w[0]) || xis[0] <= 0.0 {
        return Err(Error::Config("wavenumber grid must be positive and increasing".into()));
    }
    let sym = Symbol::new(sys)?;
    let n = sym.size();
    let ev0 = sym.eigenvalues(0.0)?;
    let scale = ev0.iter().map(|z| z.norm()).fold(1e-300, f64::max)
        .max(sym.eigenvalues(xis[xis.len() - 1])?.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let mut tracker = Tracker {
        sym: &sym,
        perms: permutations(n),
        scale,
        ambiguous_at: None,
    };

    // branch b at xi = 0 is ev0[b]
    let mut values: Vec<Vec<Complex64>> = Vec::with_capacity(xis.len());
    let first = {
        let raw = sym.eigenvalues(xis[0])?;
        let (perm, _, _) = match_eigenvalues(&ev0, &raw, &tracker.perms);
        perm.iter().map(|&j| raw[j]).collect::<Vec<_>>()
    };
    values.push(first);
    for i in 1..xis.len() {
        let prev = values[i - 1].clone();
        let next = tracker.step(xis[i - 1], &prev, xis[i], 0)?;
        values.push(next);
    }

    let gaps: Vec<f64> = values
        .iter()
        .map(|v| v.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let fitted_c = xis
        .iter()
        .zip(&gaps)
        .map(|(x, g)| -g * (1.0 + x * x) / (x * x))
        .fold(f64::INFINITY, f64::min);

    let mut nfit = xis.iter().take_while(|&&x| x <= fit_xi_max).count();
    nfit = nfit.max(5.min(xis.len()));
    let zero_tol = 1e-10 * scale;
    let branch_table = (0..n)
        .map(|b| {
            let (num, den) = (0..nfit).fold((0.0, 0.0), |(num, den), i| {
                let x2 = xis[i] * xis[i];
                (num + (values[i][b].re - ev0[b].re) * x2, den + x2 * x2)
            });
            Branch {
                lambda0: (ev0[b].re, ev0[b].im),
                quadratic_coeff: num / den,
                vanishes_at_zero: ev0[b].norm() <= zero_tol,
            }
        })
        .collect();
    let branches = (0..n)
        .map(|b| values.iter().map(|v| (v[b].re, v[b].im)).collect())
        .collect();
    Ok(SpectralCurve {
        xis: xis.to_vec(),
        gaps,
        fitted_c,
        branches,
        branch_table,
        classified: tracker.ambiguous_at.is_none(),
        ambiguous_at: tracker.ambiguous_at,
    })
}

/// `exp(t Phi(xi)) v`.
pub fn semigroup_action(sys: &DissipativeSystem, xi: f64, t: f64, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time {t} must be non-negative")));
    }
    if v.len() != sys.size() {
        return Err(Error::Dimension(format!("vector has {} entries, expected {}", v.len(), sys.size())));
    }
    if t == 0.0 {
        return Ok(v.clone());
    }
    Ok(Symbol::new(sys)?.propagator(xi, t) * v)
}

/// Spectral norm of a complex matrix.
fn op_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Fitted constants of `|exp(t Phi(xi))| <= C exp(-k xi^2 t / (1 + xi^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupFit {
    pub c: f64,
    pub k: f64,
    pub samples: usize,
    /// Largest `|exp(t Phi)| / (C exp(-k ...))` on the verification grid.
    pub worst_ratio: f64,
    pub verified_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub t_max: f64,
    pub n_xi: usize,
    pub n_t: usize,
    /// Upper bound imposed on `C` while maximizing `k`.
    pub c_cap: f64,
}

impl Default for SemigroupGrid {
    fn default() -> Self {
        Self {
            xi_min: 1e-2,
            xi_max: 1e2,
            t_max: 100.0,
            n_xi: 48,
            n_t: 48,
            c_cap: 10.0,
        }
    }
}

fn semigroup_samples(sym: &Symbol, xis: &[f64], ts: &[f64]) -> Vec<(f64, f64, f64)> {
    xis.par_iter()
        .flat_map_iter(|&xi| {
            let phi = sym.matrix(xi);
            ts.iter()
                .map(move |&t| {
                    let norm = if t == 0.0 { 1.0 } else { op_norm(&(&phi * Complex64::new(t, 0.0)).exp()) };
                    (xi, t, norm)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn required_c(samples: &[(f64, f64, f64)], k: f64) -> f64 {
    samples
        .iter()
        .map(|&(xi, t, n)| n * (k * xi * xi / (1.0 + xi * xi) * t).exp())
        .fold(0.0, f64::max)
}

/// Samples the propagator norm on a `(xi, t)` grid, finds the largest `k`
/// whose required `C` stays below `c_cap`, inflates `C` by 5 % and
/// re-verifies on a grid refined by a factor of two in each direction.
pub fn fit_semigroup_bound(sys: &DissipativeSystem, grid: &SemigroupGrid) -> Result<SemigroupFit> {
    let sym = Symbol::new(sys)?;
    let ts = |n: usize| (0..n).map(|i| grid.t_max * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
    let samples = semigroup_samples(&sym, &log_grid(grid.xi_min, grid.xi_max, grid.n_xi), &ts(grid.n_t));
    let c0 = required_c(&samples, 0.0);
    if c0 > grid.c_cap {
        return Err(Error::Numerical(format!(
            "propagator norm {c0:.3e} exceeds the cap {} even with k = 0",
            grid.c_cap
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while required_c(&samples, hi) <= grid.c_cap && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if required_c(&samples, mid) <= grid.c_cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = lo;
    let c = required_c(&samples, k) * 1.05;
    let fine = semigroup_samples(
        &sym,
        &log_grid(grid.xi_min, grid.xi_max, 2 * grid.n_xi - 1),
        &ts(2 * grid.n_t - 1),
    );
    let worst_ratio = fine
        .iter()
        .map(|&(xi, t, n)| n / (c * (-k * xi * xi / (1.0 + xi * xi) * t).exp()))
        .fold(0.0, f64::max);
    Ok(SemigroupFit {
        c,
        k,
        samples: samples.len(),
        worst_ratio,
        verified_samples: fine.len(),
    })
}

/// Principal angle between the kernel of the symmetrized symbol at zero,
/// `-G^{-1} L G^{-1}` with `G = a0^{1/2}`, and `G ker(L)`.
pub fn zero_projector_angle(frame: &EntropyFrame) -> Result<f64> {
    let sys = frame.system();
    let (vals, vecs) = linalg::sym_eigen(&sys.a0);
    if vals[0] <= 0.0 {
        return Err(Error::Numerical("a0 is not positive definite".into()));
    }
    let sqrt = &vecs * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * vecs.transpose();
    let isqrt = &vecs * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt())) * vecs.transpose();
    let psi0 = -(&isqrt * &sys.l * &isqrt);
    let kernel_psi = linalg::null_space(&psi0, 1e-10);
    let m = linalg::null_space(&sys.l, 1e-10);
    let gm = linalg::orthonormalize(&(&sqrt * m));
    if kernel_psi.ncols() != gm.ncols() {
        return Err(Error::Numerical(format!(
            "kernel dimensions differ: {} vs {}",
            kernel_psi.ncols(),
            gm.ncols()
        )));
    }
    let cos = linalg::principal_cosines(&kernel_psi, &gm);
    let min_cos = cos.iter().copied().fold(1.0, f64::min).min(1.0);
    Ok(min_cos.acos())
}

/// Data weighting applied before propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    None,
    A0Inverse,
}

/// Projection applied to the data before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    None,
    MPerp,
}

/// Orthogonal projector onto the complement of `ker(L)`.
pub fn m_perp_projector(frame: &EntropyFrame) -> Matrix4<f64> {
    let m = linalg::null_space(&linalg::dyn4(&frame.l), 1e-10);
    let p = DMatrix::identity(4, 4) - &m * m.transpose();
    Matrix4::from_fn(|i, j| p[(i, j)])
}

/// Pseudo-spectral evolution of the linear entropy-frame system on a
/// periodic grid.
pub struct LinearEvolver {
    phi_l: Matrix4<Complex64>,
    phi_a: Matrix4<Complex64>,
    phi_b: Matrix4<Complex64>,
    /// Forward transform of the (projected, weighted) data, unnormalized.
    modes: Vec<Vector4<Complex64>>,
    n: usize,
    length: f64,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LinearEvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearEvolver").field("n", &self.n).field("length", &self.length).finish()
    }
}

impl LinearEvolver {
    pub fn new(
        frame: &EntropyFrame,
        z0: &[Vector4<f64>],
        length: f64,
        weight: Weight,
        project: Projection,
    ) -> Result<Self> {
        let n = z0.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Domain(format!("grid size {n} is not a power of two")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain(format!("domain length {length} must be positive")));
        }
        let inv = frame.hessian;
        let proj = m_perp_projector(frame);
        let mut data: Vec<Vector4<f64>> = z0.to_vec();
        for z in data.iter_mut() {
            if project == Projection::MPerp {
                *z = proj * *z;
            }
            if weight == Weight::A0Inverse {
                *z = inv * *z;
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let mut modes = vec![Vector4::zeros(); n];
        for c in 0..4 {
            let mut buf: Vec<Complex64> = data.iter().map(|z| Complex64::new(z[c], 0.0)).collect();
            fwd.process(&mut buf);
            for (m, b) in modes.iter_mut().zip(buf) {
                m[c] = b;
            }
        }
        let c4 = |m: &Matrix4<f64>| m.map(|x| Complex64::new(x, 0.0));
        Ok(Self {
            phi_l: c4(&(-inv * frame.l)),
            phi_a: c4(&(-inv * frame.a1)),
            phi_b: c4(&(-inv * frame.b)),
            modes,
            n,
            length,
            ifft,
        })
    }

    /// Signed wavenumber of mode `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        let ks = if k <= self.n / 2 { k as f64 } else { k as f64 - self.n as f64 };
        2.0 * PI * ks / self.length
    }

    fn propagate(&self, xi: f64, t: f64, v: &Vector4<Complex64>) -> Vector4<Complex64> {
        if t == 0.0 {
            return *v;
        }
        let phi = self.phi_l + self.phi_a * Complex64::new(0.0, xi) + self.phi_b * Complex64::new(xi * xi, 0.0);
        (phi * Complex64::new(t, 0.0)).exp() * v
    }

    /// Discrete `L^2` norm (`orders[0] = 0`) and derivative seminorms of the
    /// solution at time `t`, from the Parseval identity.
    ///
    /// Only the non-negative half spectrum is propagated; real data make
    /// the negative half its complex conjugate.
    pub fn norms_at(&self, t: f64, orders: &[u32]) -> Vec<f64> {
        let half = self.n / 2;
        let per_mode: Vec<(f64, Vector4<Complex64>)> = (0..=half)
            .into_par_iter()
            .map(|k| {
                let xi = self.wavenumber(k);
                (xi, self.propagate(xi, t, &self.modes[k]))
            })
            .collect();
        let dx = self.length / self.n as f64;
        orders
            .iter()
            .map(|&ell| {
                let mut acc = 0.0;
                for (k, (xi, v)) in per_mode.iter().enumerate() {
                    let mult = if k == 0 || k == half { 1.0 } else { 2.0 };
                    acc += mult * xi.abs().powi(2 * ell as i32) * v.norm_squared();
                }
                (acc * dx / self.n as f64).sqrt()
            })
            .collect()
    }

    /// The evolved field at time `t`.
    pub fn field_at(&self, t: f64) -> Vec<Vector4<f64>> {
        let n = self.n;
        let evolved: Vec<Vector4<Complex64>> = (0..n)
            .into_par_iter()
            .map(|k| self.propagate(self.wavenumber(k), t, &self.modes[k]))
            .collect();
        let mut out = vec![Vector4::zeros(); n];
        for c in 0..4 {
            let mut buf: Vec<Complex64> = evolved.iter().map(|v| v[c]).collect();
            self.ifft.process(&mut buf);
            for (o, b) in out.iter_mut().zip(buf) {
                o[c] = b.re / n as f64;
            }
        }
        out
    }
}

/// Evolves `z0` to time `t`; convenience wrapper around [`LinearEvolver`].
pub fn linear_evolve(
    frame: &EntropyFrame,
    z0: &[Vector4<f64>],
    length: f64,
    t: f64,
    weight: Weight,
    project: Projection,
) -> Result<Vec<Vector4<f64>>> {
    Ok(LinearEvolver::new(frame, z0, length, weight, project)?.field_at(t))
}

/// Discrete `L^2` norm `sqrt(dx * sum |z_j|^2)` of a 4-vector field.
pub fn l2_norm(z: &[Vector4<f64>], dx: f64) -> f64 {
    (z.iter().map(|v| v.norm_squared()).sum::<f64>() * dx).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::EosModel;
    use crate::linearize::{EquilibriumState, MatrixBundle};

    fn frame() -> EntropyFrame {
        *MatrixBundle::assemble(&EosModel::default(), &EquilibriumState::canonical(1))
            .unwrap()
            .zframe()
            .unwrap()
    }

    #[test]
    fn symbol_at_zero() {
        let s = symbol(&frame().system(), 0.0).unwrap();
        let zeros = s.eigenvalues.iter().filter(|z| z.norm() < 1e-12).count();
        assert_eq!(zeros, 3);
        // -A0^{-1} L has trace -(4 * 1 * 3.75/(3.75-2.25) ... ) = -11/3 at the canonical state
        assert!((s.eigenvalues[3].re + 11.0 / 3.0).abs() < 1e-12);
        assert_eq!(linalg::rank(&frame().system().l, 1e-12), 1);
    }

    #[test]
    fn symbol_at_one_is_dissipative() {
        let s = symbol(&frame().system(), 1.0).unwrap();
        assert!(s.eigenvalues.iter().all(|z| z.re < 0.0));
        let m = symbol(&frame().system(), -1.0).unwrap();
        assert!((m.spectral_gap - s.spectral_gap).abs() < 1e-13);
        for (a, b) in s.eigenvalues.iter().zip(&m.eigenvalues) {
            assert!((a.re - b.re).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_curve() {
        let xis = log_grid(1e-3, 1e3, 400);
        let c = spectral_curve(&frame().system(), &xis).unwrap();
        assert!(c.classified);
        assert!(c.fitted_c > 0.0);
        assert_eq!(c.vanishing_branches(), 3);
        for b in &c.branch_table {
            if b.vanishes_at_zero {
                assert!(b.quadratic_coeff < 0.0);
            } else {
                assert!(b.lambda0.0 < -1.0);
            }
        }
    }

    #[test]
    fn shear_branch_in_two_dimensions() {
        let b = MatrixBundle::assemble(&EosModel::default(), &EquilibriumState::canonical(2)).unwrap();
        let sys = b.barred_system(&[1.0, 0.0]).unwrap();
        let c = spectral_curve(&sys, &log_grid(1e-2, 1e2, 60)).unwrap();
        assert!(c.gaps.iter().all(|g| g.abs() < 1e-12));
        assert!(c.fitted_c.abs() < 1e-8);
    }

    #[test]
    fn semigroup_identities() {
        let sys = frame().system();
        let v = DVector::from_vec(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.2, 0.0),
            Complex64::new(0.3, 0.1),
            Complex64::new(0.0, 2.0),
        ]);
        assert_eq!(semigroup_action(&sys, 3.0, 0.0, &v).unwrap(), v);
        let k = DVector::from_vec(vec![Complex64::new(0.7, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]);
        let out = semigroup_action(&sys, 0.0, 50.0, &k).unwrap();
        assert!((out - k).norm() < 1e-12);
        assert!(semigroup_action(&sys, 0.0, -1.0, &v).is_err());
    }

    /// Propagator against an eigendecomposition oracle away from crossings.
    #[test]
    fn propagator_matches_eigen_route() {
        let sym = Symbol::new(&frame().system()).unwrap();
        let (xi, t) = (0.7, 3.0);
        let phi = sym.matrix(xi);
        let ev = phi.clone().schur();
        let (q, tri) = ev.unpack();
        // exp of an upper-triangular matrix via Parlett recurrence
        let n = 4;
        let mut f = CMatrix::zeros(n, n);
        for i in 0..n {
            f[(i, i)] = (tri[(i, i)] * t).exp();
        }
        for p in 1..n {
            for i in 0..n - p {
                let j = i + p;
                let mut s = tri[(i, j)] * t * (f[(j, j)] - f[(i, i)]);
                for k in i + 1..j {
                    s += tri[(i, k)] * t * f[(k, j)] - f[(i, k)] * tri[(k, j)] * t;
                }
                f[(i, j)] = s / ((tri[(j, j)] - tri[(i, i)]) * t);
            }
        }
        let oracle = &q * f * q.adjoint();
        let prop = sym.propagator(xi, t);
        assert!((prop - &oracle).norm() / oracle.norm() < 1e-12);
    }

    #[test]
    fn semigroup_fit_is_verified() {
        let grid = SemigroupGrid {
            n_xi: 16,
            n_t: 16,
            ..Default::default()
        };
        let fit = fit_semigroup_bound(&frame().system(), &grid).unwrap();
        assert!(fit.k > 0.0 && fit.c <= 10.5);
        assert!(fit.worst_ratio <= 1.0, "{fit:?}");
    }

    #[test]
    fn zero_projector() {
        assert!(zero_projector_angle(&frame()).unwrap() <= 1e-8);
    }

    #[test]
    fn parseval_consistency() {
        let n = 256;
        let length = 50.0;
        let dx = length / n as f64;
        let z0: Vec<Vector4<f64>> = (0..n)
            .map(|i| {
                let x = i as f64 * dx - 25.0;
                let g = (-x * x).exp();
                Vector4::new(g, 0.5 * g, -g * x, 0.1 * g)
            })
            .collect();
        let ev = LinearEvolver::new(&frame(), &z0, length, Weight::None, Projection::None).unwrap();
        for t in [0.0, 1.0, 4.0] {
            let phys = l2_norm(&ev.field_at(t), dx);
            let modal = ev.norms_at(t, &[0])[0];
            assert!((phys - modal).abs() <= 1e-10 * phys, "t={t}: {phys} vs {modal}");
        }
        let back = ev.field_at(0.0);
        assert!(back.iter().zip(&z0).all(|(a, b)| (a - b).amax() < 1e-14));
        assert!(LinearEvolver::new(&frame(), &z0[..100], length, Weight::None, Projection::None).is_err());
    }

    #[test]
    fn m_perp_projector_spans_difference() {
        let p = m_perp_projector(&frame());
        let v = p * Vector4::new(0.3, -1.0, 2.0, 0.0);
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!((v[2] + v[3]).abs() < 1e-15);
    }
}
