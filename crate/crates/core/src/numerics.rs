//! Dense linear-algebra kernels.
//!
//! Factorizations are delegated to `nalgebra`; this module pins the ordering
//! and sign conventions so that every caller sees the same, deterministic
//! bases:
//!
//! * singular values and eigenvalues are sorted non-increasing;
//! * the first nonzero component of every left singular vector (and every
//!   eigenvector) is non-negative, with the matching right singular vector
//!   flipped alongside it;
//! * tied values keep the order produced by the factorization.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{ensure_input, ensure_shape, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Components below this magnitude are treated as zero when choosing the
/// sign of a basis vector.
const SIGN_EPS: f64 = 1e-12;

/// Relative cutoff below which singular values are dropped by
/// [`lstsq_minnorm`].
pub const PINV_RCOND: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `p × k` left singular vectors, `k = min(p, q)`.
    pub u: Matrix,
    pub sigma: Vec<f64>,
    /// `q × k` right singular vectors.
    pub v: Matrix,
}

#[derive(Debug, Clone)]
pub struct EigResult {
    pub q: Matrix,
    pub lambda: Vec<f64>,
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Thin SVD `a = u · diag(sigma) · vᵀ`.
pub fn thin_svd(a: &Matrix) -> Result<SvdResult> {
    ensure_input!(a.nrows() >= 1 && a.ncols() >= 1, "empty matrix");
    ensure_input!(all_finite(a), "matrix has non-finite entries");

    let k = a.nrows().min(a.ncols());
    let svd = SVD::new(a.clone(), true, true);
    let u_raw = svd.u.expect("u requested");
    let vt_raw = svd.v_t.expect("v_t requested");

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut u = Matrix::zeros(a.nrows(), k);
    let mut v = Matrix::zeros(a.ncols(), k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(svd.singular_values[src].max(0.0));
        u.set_column(dst, &u_raw.column(src));
        v.set_column(dst, &vt_raw.row(src).transpose());
        if leading_sign(u.column(dst).iter()) < 0.0 {
            u.column_mut(dst).neg_mut();
            v.column_mut(dst).neg_mut();
        }
    }
    Ok(SvdResult { u, sigma, v })
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
///
/// The input is symmetrized as `(c + cᵀ)/2` before factorization.
pub fn sym_eig_desc(c: &Matrix) -> Result<EigResult> {
    ensure_input!(c.is_square(), "expected a square matrix, got {}x{}", c.nrows(), c.ncols());
    ensure_input!(c.nrows() >= 1, "empty matrix");
    ensure_input!(all_finite(c), "matrix has non-finite entries");

    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let p = c.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut q = Matrix::zeros(p, p);
    let mut lambda = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        lambda.push(eig.eigenvalues[src]);
        q.set_column(dst, &eig.eigenvectors.column(src));
        if leading_sign(q.column(dst).iter()) < 0.0 {
            q.column_mut(dst).neg_mut();
        }
    }
    Ok(EigResult { q, lambda })
}

/// Minimum-norm least-squares solution of `m · a ≈ g`.
///
/// Singular values below `PINV_RCOND · σ₁` are treated as zero, so a
/// rank-deficient or all-zero `m` yields the pseudoinverse solution.
pub fn lstsq_minnorm(m: &Matrix, g: &Vector) -> Result<Vector> {
    ensure_shape!(
        m.nrows() == g.len(),
        "operator has {} rows but target has length {}",
        m.nrows(),
        g.len()
    );
    if m.ncols() == 0 {
        return Ok(Vector::zeros(0));
    }
    let svd = thin_svd(m)?;
    let mut a = Vector::zeros(m.ncols());
    let Some(&top) = svd.sigma.first() else {
        return Ok(a);
    };
    if top == 0.0 {
        return Ok(a);
    }
    let cutoff = PINV_RCOND * top;
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s <= cutoff {
            break;
        }
        let coef = svd.u.column(i).dot(g) / s;
        a.axpy(coef, &svd.v.column(i), 1.0);
    }
    Ok(a)
}

/// Builds a matrix whose columns are the given vectors.
pub fn columns_to_matrix<'a, I>(rows: usize, cols: I) -> Matrix
where
    I: IntoIterator<Item = &'a [f64]>,
    I::IntoIter: ExactSizeIterator,
{
    let iter = cols.into_iter();
    let mut out = Matrix::zeros(rows, iter.len());
    for (j, col) in iter.enumerate() {
        debug_assert_eq!(col.len(), rows);
        out.column_mut(j).copy_from_slice(col);
    }
    out
}

fn leading_sign<'a>(mut it: impl Iterator<Item = &'a f64>) -> f64 {
    it.find(|x| x.abs() > SIGN_EPS).map_or(1.0, |x| x.signum())
}
