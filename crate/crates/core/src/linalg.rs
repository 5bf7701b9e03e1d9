//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Matrix4};

use crate::error::{Error, Result};

/// `max |A - A^T| / max |A|`, zero for the zero matrix.
pub fn rel_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

pub fn rel_asymmetry4(m: &Matrix4<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

/// Row-major nested vectors, the layout used for every serialized matrix.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Symmetric eigen-decomposition sorted by ascending eigenvalue.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0[0]
}

/// Generalized eigenpairs of the symmetric-definite pencil `a x = mu b x`.
///
/// Eigenvalues ascend; eigenvectors are `b`-orthonormal columns.
pub fn gen_sym_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("pencil matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let (vals, y) = sym_eigen(&c);
    Ok((vals, linv.transpose() * y))
}

/// Orthonormal basis of the null space of `m` (relative singular value
/// threshold `tol`).
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    // Pad wide matrices so the SVD returns all n right singular vectors.
    let tall = if m.nrows() < n {
        let mut t = DMatrix::zeros(n, n);
        t.rows_mut(0, m.nrows()).copy_from(m);
        t
    } else {
        m.clone()
    };
    let svd = tall.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let top = svd.singular_values.max();
    let cols: Vec<_> = (0..n)
        .filter(|&i| svd.singular_values[i] <= tol * top.max(f64::MIN_POSITIVE))
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormalizes the columns of `m` by modified Gram-Schmidt, dropping
/// columns that become numerically dependent.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        let scale = v.norm();
        for q in &out {
            let c = q.dot(&v);
            v -= q * c;
        }
        let nv = v.norm();
        if nv > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            out.push(v / nv);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Cosines of the principal angles between the column spans of two
/// orthonormal bases, descending.
pub fn principal_cosines(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Vec<f64> {
    if q1.ncols() == 0 || q2.ncols() == 0 {
        return Vec::new();
    }
    let m = q1.transpose() * q2;
    let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with relative threshold `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let s = m.clone().svd(false, false).singular_values;
    let top = s.max();
    s.iter().filter(|&&x| x > tol * top).count()
}

/// Converts a fixed 4x4 matrix to a dynamic one.
pub fn dyn4(m: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(4, 4, m.iter().copied())
}
