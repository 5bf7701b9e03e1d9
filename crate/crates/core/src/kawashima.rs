//! Genuine coupling and compensating matrices.
//!
//! A symmetric system `a0 V_t + a V_x + l V = b V_xx` is genuinely coupled
//! along a direction when no nonzero `psi` in `ker(l) ∩ ker(b)` satisfies
//! `mu a0 psi + a psi = 0` for a real `mu`. Such a `psi` is exactly a
//! generalized eigenvector of the pencil `(a, a0)` lying in the kernel, so
//! the decision reduces to intersecting eigenspaces with a subspace.

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::linearize::{DissipativeSystem, EntropyFrame, MatrixBundle};
use crate::optimize::{nelder_mead_max, NelderMead};

/// Relative threshold for merging generalized eigenvalues into one cluster.
pub const CLUSTER_TOL: f64 = 1e-9;
/// Principal-angle cosine above which two subspaces are said to intersect.
pub const INTERSECT_COS: f64 = 1.0 - 1e-10;
/// Relative singular-value threshold defining the dissipation kernel.
const KERNEL_TOL: f64 = 1e-10;

/// A vector violating the coupling condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub psi: Vec<f64>,
    pub mu: f64,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingVerdict {
    pub coupled: bool,
    pub witness: Option<Witness>,
    /// Orthonormal basis of `ker(l) ∩ ker(b)`.
    pub kernel_basis: Vec<Vec<f64>>,
    /// `|mu a0 psi + a psi|` for the witness, zero otherwise.
    pub residual: f64,
}

/// Orthonormal basis of `ker(l) ∩ ker(b)`.
pub fn dissipation_kernel(sys: &DissipativeSystem) -> DMatrix<f64> {
    let n = sys.size();
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.rows_mut(0, n).copy_from(&sys.l);
    stacked.rows_mut(n, n).copy_from(&sys.b);
    linalg::null_space(&stacked, KERNEL_TOL)
}

/// Decides genuine coupling of a symmetric system along the direction the
/// system was assembled for; `omega` is only recorded in the witness.
pub fn coupling_of_system(sys: &DissipativeSystem, omega: &[f64]) -> Result<CouplingVerdict> {
    let kernel = dissipation_kernel(sys);
    let kernel_basis = (0..kernel.ncols())
        .map(|j| kernel.column(j).iter().copied().collect())
        .collect();
    if kernel.ncols() == 0 {
        return Ok(CouplingVerdict {
            coupled: true,
            witness: None,
            kernel_basis,
            residual: 0.0,
        });
    }
    let (lam, vecs) = linalg::gen_sym_eigen(&sys.a, &sys.a0)?;
    let n = lam.len();
    let radius = lam.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = CLUSTER_TOL * radius.max(f64::MIN_POSITIVE);

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && lam[end] - lam[end - 1] <= tol {
            end += 1;
        }
        let space = linalg::orthonormalize(&vecs.columns(start, end - start).into_owned());
        let m = space.transpose() * &kernel;
        let svd = m.svd(false, true);
        let (imax, smax) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        if smax > INTERSECT_COS {
            let v_t = svd.v_t.expect("requested");
            let coeffs = v_t.row(imax).transpose();
            let mut psi: DVector<f64> = &kernel * coeffs;
            psi /= psi.norm();
            // deterministic sign: largest entry positive
            let imax = psi.iamax();
            if psi[imax] < 0.0 {
                psi = -psi;
            }
            let cluster_mean = lam.rows(start, end - start).mean();
            let mu = -cluster_mean;
            let residual = (&sys.a0 * &psi * mu + &sys.a * &psi).norm();
            return Ok(CouplingVerdict {
                coupled: false,
                witness: Some(Witness {
                    psi: psi.iter().copied().collect(),
                    mu,
                    omega: omega.to_vec(),
                }),
                kernel_basis,
                residual,
            });
        }
        start = end;
    }
    Ok(CouplingVerdict {
        coupled: true,
        witness: None,
        kernel_basis,
        residual: 0.0,
    })
}

/// Genuine coupling of a bundle along `omega`: the entropy frame in 1D,
/// the symmetrized primitive system otherwise.
pub fn genuine_coupling(bundle: &MatrixBundle, omega: &[f64]) -> Result<CouplingVerdict> {
    let sys = if bundle.dim() == 1 {
        let z = bundle.zframe()?;
        if omega.len() != 1 || (omega[0].abs() - 1.0).abs() > 1e-12 {
            return Err(Error::Dimension(format!("1D direction must be ±1, got {omega:?}")));
        }
        let mut sys = z.system();
        sys.a *= omega[0];
        sys
    } else {
        bundle.barred_system(omega)?
    };
    coupling_of_system(&sys, omega)
}

/// Smallest singular value of `(mu a0 + a) P` over a uniform `mu` grid,
/// refined by golden-section search around the grid minimum.
///
/// This brute-force scan is an independent check on
/// [`coupling_of_system`]; `p` is a kernel basis.
pub fn pencil_scan(sys: &DissipativeSystem, p: &DMatrix<f64>, mu_range: (f64, f64), step: f64) -> (f64, f64) {
    if p.ncols() == 0 {
        return (f64::INFINITY, 0.0);
    }
    let smin = |mu: f64| {
        let m = (&sys.a0 * mu + &sys.a) * p;
        m.svd(false, false).singular_values.min()
    };
    let steps = ((mu_range.1 - mu_range.0) / step).round() as usize;
    let (mut best_mu, mut best) = (mu_range.0, f64::INFINITY);
    for k in 0..=steps {
        let mu = mu_range.0 + k as f64 * step;
        let s = smin(mu);
        if s < best {
            best = s;
            best_mu = mu;
        }
    }
    let (mut a, mut b) = (best_mu - step, best_mu + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if smin(c) < smin(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mu = 0.5 * (a + b);
    let s = smin(mu);
    if s < best {
        (s, mu)
    } else {
        (best, best_mu)
    }
}

/// The explicit witness against coupling in dimension two or three:
/// `psi = (0, e_d, 0, 0)`, any direction with `omega_d = 0`, `mu = -u·omega`.
pub fn multi_d_witness(bundle: &MatrixBundle, omega: Option<&[f64]>) -> Result<(Witness, f64)> {
    let d = bundle.dim();
    if d < 2 {
        return Err(Error::Dimension("the shear witness needs d >= 2".into()));
    }
    let omega: Vec<f64> = match omega {
        Some(w) => {
            if w.len() != d || w[d - 1] != 0.0 {
                return Err(Error::Dimension(format!(
                    "witness direction must have {d} components with the last one zero"
                )));
            }
            w.to_vec()
        }
        None => {
            let mut w = vec![0.0; d];
            w[0] = 1.0;
            w
        }
    };
    let mut psi = DVector::zeros(d + 3);
    psi[d] = 1.0;
    let mu = -bundle.eq.u_bar.iter().zip(&omega).map(|(u, w)| u * w).sum::<f64>();
    let a = bundle.a_bar(&omega)?;
    let residual = (&bundle.a0_bar * &psi * mu + a * &psi).norm();
    Ok((
        Witness {
            psi: psi.iter().copied().collect(),
            mu,
            omega,
        },
        residual,
    ))
}

/// Multi-start search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub starts: usize,
    pub budget_per_start: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            starts: 16,
            budget_per_start: 10_000,
            seed: 0,
        }
    }
}

/// A certified compensating matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensatingMatrix {
    /// Unit Frobenius-norm direction, row-major.
    pub k: [[f64; 4]; 4],
    /// `K = scale * k` is the matrix that achieves `lambda_min`.
    pub scale: f64,
    /// Smallest eigenvalue of `[K A1]^s + B + L`.
    pub lambda_min: f64,
    /// `|K A0 + (K A0)^T|`.
    pub skew_residual: f64,
    pub evaluations: usize,
}

impl CompensatingMatrix {
    /// The matrix `scale * k`.
    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.k[i][j]) * self.scale
    }
}

fn skew_from(y: &[f64]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    let mut it = y.iter();
    for i in 0..4 {
        for j in i + 1..4 {
            let v = *it.next().expect("six parameters");
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    m
}

fn sym_min_eig(m: &Matrix4<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

/// `lambda_min([K a1]^s + b + l)`.
pub fn dissipation_margin(frame: &EntropyFrame, k: &Matrix4<f64>) -> f64 {
    sym_min_eig(&(k * frame.a1 + frame.b + frame.l))
}

/// `|K a0 + (K a0)^T|` (Frobenius).
pub fn skew_residual(frame: &EntropyFrame, k: &Matrix4<f64>) -> f64 {
    let m = k * frame.a0;
    (m + m.transpose()).norm()
}

/// Searches for `K = Y a0^{-1}` with `Y` skew maximizing the dissipation
/// margin. Starts run in parallel; the best one wins, ties going to the
/// lowest start index.
pub fn compensating_matrix(frame: &EntropyFrame, cfg: &SearchConfig) -> Result<CompensatingMatrix> {
    if cfg.starts == 0 || cfg.budget_per_start == 0 {
        return Err(Error::Config("search needs at least one start and a positive budget".into()));
    }
    let a0_inv = frame.hessian;
    // K a1 = Y a0^{-1} a1; precompute the product.
    let g = a0_inv * frame.a1;
    let bl = frame.b + frame.l;
    let scale_ref = frame.a1.amax().max(bl.amax());
    let objective = |y: &[f64]| {
        let m = skew_from(y) * g + bl;
        sym_min_eig(&m)
    };

    let runs: Vec<_> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s as u64));
            let x0: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            nelder_mead_max(
                objective,
                &x0,
                NelderMead {
                    initial_step: 0.5,
                    max_evals: cfg.budget_per_start,
                    ..Default::default()
                },
            )
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let best = runs
        .into_iter()
        .enumerate()
        .fold(None::<(usize, crate::optimize::Optimum)>, |acc, (i, r)| match acc {
            Some((j, b)) if b.value >= r.value => Some((j, b)),
            _ => Some((i, r)),
        })
        .map(|(_, r)| r)
        .expect("at least one start");

    let k = skew_from(&best.x) * a0_inv;
    let lambda_min = dissipation_margin(frame, &k);
    if !(lambda_min > 1e-10 * scale_ref) {
        return Err(Error::SearchFailure {
            best_lambda_min: lambda_min,
        });
    }
    let scale = k.norm();
    let unit = k / scale;
    Ok(CompensatingMatrix {
        k: std::array::from_fn(|i| std::array::from_fn(|j| unit[(i, j)])),
        scale,
        lambda_min,
        skew_residual: skew_residual(frame, &k),
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::EosModel;
    use crate::linearize::EquilibriumState;

    fn bundle(d: usize) -> MatrixBundle {
        MatrixBundle::assemble(&EosModel::default(), &EquilibriumState::canonical(d)).unwrap()
    }

    #[test]
    fn canonical_1d_is_coupled() {
        let b = bundle(1);
        let v = genuine_coupling(&b, &[1.0]).unwrap();
        assert!(v.coupled);
        assert_eq!(v.kernel_basis.len(), 2);
        assert!(genuine_coupling(&b, &[-1.0]).unwrap().coupled);
    }

    #[test]
    fn canonical_2d_is_not_coupled() {
        let b = bundle(2);
        let v = genuine_coupling(&b, &[1.0, 0.0]).unwrap();
        assert!(!v.coupled);
        let w = v.witness.unwrap();
        assert!((w.psi[2] - 1.0).abs() < 1e-12);
        assert!(w.mu.abs() < 1e-12);
        assert!(v.residual < 1e-12);
    }

    #[test]
    fn shear_witness() {
        let (w, r) = multi_d_witness(&bundle(2), None).unwrap();
        assert_eq!(w.psi, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(w.mu, 0.0);
        assert_eq!(r, 0.0);

        let eq = EquilibriumState::canonical(3).with_velocity(vec![1.0, 2.0, 3.0]);
        let b3 = MatrixBundle::assemble(&EosModel::default(), &eq).unwrap();
        let (w, r) = multi_d_witness(&b3, Some(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(w.mu, -1.0);
        assert!(r < 1e-12);
        assert!(matches!(multi_d_witness(&bundle(1), None), Err(Error::Dimension(_))));
        assert!(multi_d_witness(&b3, Some(&[0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn hand_decoupled_system_has_witness() {
        let z = *bundle(1).zframe().unwrap();
        let mut sys = z.system();
        sys.a[(0, 1)] = 0.0;
        sys.a[(1, 0)] = 0.0;
        let v = coupling_of_system(&sys, &[1.0]).unwrap();
        assert!(!v.coupled);
        let w = v.witness.unwrap();
        assert!((w.psi[0].abs() - 1.0).abs() < 1e-12);
        assert!(w.mu.abs() < 1e-12);
        assert!(v.residual < 1e-12);
    }

    #[test]
    fn scan_agrees_with_verdict() {
        let z = *bundle(1).zframe().unwrap();
        let sys = z.system();
        let p = dissipation_kernel(&sys);
        let (s, _) = pencil_scan(&sys, &p, (-10.0, 10.0), 1e-2);
        assert!(s > 1e-3);

        let mut broken = sys.clone();
        broken.a[(0, 1)] = 0.0;
        broken.a[(1, 0)] = 0.0;
        let (s, mu) = pencil_scan(&broken, &p, (-10.0, 10.0), 1e-2);
        assert!(s < 1e-10, "{s} at {mu}");
    }

    #[test]
    fn canonical_compensating_matrix() {
        let z = *bundle(1).zframe().unwrap();
        let k = compensating_matrix(&z, &SearchConfig::default()).unwrap();
        assert!(k.lambda_min > 0.0);
        assert!(k.skew_residual < 1e-12 * k.scale.max(1.0));
        let unit: f64 = k.k.iter().flatten().map(|x| x * x).sum();
        assert!((unit - 1.0).abs() < 1e-12);
        // a positive definite matrix admits a Cholesky factorization
        let m = k.matrix() * z.a1;
        let s = (m + m.transpose()) * 0.5 + z.b + z.l;
        assert!(s.cholesky().is_some());
        // skewness is homogeneous
        assert!(skew_residual(&z, &(k.matrix() * 2.0)) < 1e-11 * k.scale.max(1.0));
    }

    #[test]
    fn decoupled_search_fails() {
        let mut z = *bundle(1).zframe().unwrap();
        z.a1[(0, 1)] = 0.0;
        z.a1[(1, 0)] = 0.0;
        let cfg = SearchConfig {
            starts: 4,
            budget_per_start: 2000,
            seed: 1,
        };
        assert!(matches!(compensating_matrix(&z, &cfg), Err(Error::SearchFailure { .. })));
    }
}
