//! Compression primitives.
//!
//! Every codec here is a pure function pair. The only mutable state is
//! [`PredictorMemory`], which clients and the server update in lock-step.

mod wire;

use crate::error::{ensure_input, ensure_shape, Result};
use crate::metrics::{ceil_rank, PcaBasis};
use crate::numerics::{lstsq_minnorm, Matrix, Vector};
use crate::updates::UpdateMatrix;

pub use wire::{decode, encode};

/// Coefficients `U_rᵀ G` (`r × n`), uplink cost `r · n`.
pub fn svd_project_left(gm: &UpdateMatrix, u_r: &Matrix) -> Result<Matrix> {
    ensure_shape!(
        u_r.nrows() == gm.m(),
        "basis has {} rows but update matrix has {}",
        u_r.nrows(),
        gm.m()
    );
    Ok(u_r.transpose() * &gm.g_mat)
}

/// `U_r · coeffs`, the inverse of [`svd_project_left`].
pub fn svd_reconstruct_left(coeffs: &Matrix, u_r: &Matrix) -> Result<Matrix> {
    ensure_shape!(
        u_r.ncols() == coeffs.nrows(),
        "basis has rank {} but coefficients have {} rows",
        u_r.ncols(),
        coeffs.nrows()
    );
    Ok(u_r * coeffs)
}

/// `diag(U_rᵀ G V_r)`. Off-diagonal entries of the `r × r` core are dropped.
pub fn svd_diag_encode(gm: &UpdateMatrix, u_r: &Matrix, v_r: &Matrix) -> Result<Vec<f64>> {
    ensure_shape!(u_r.nrows() == gm.m(), "left basis has {} rows, expected {}", u_r.nrows(), gm.m());
    ensure_shape!(v_r.nrows() == gm.n(), "right basis has {} rows, expected {}", v_r.nrows(), gm.n());
    ensure_shape!(u_r.ncols() == v_r.ncols(), "bases have ranks {} and {}", u_r.ncols(), v_r.ncols());
    let gv = &gm.g_mat * v_r;
    Ok((0..u_r.ncols()).map(|i| u_r.column(i).dot(&gv.column(i))).collect())
}

/// `U_r · diag(s) · V_rᵀ`.
pub fn svd_diag_decode(diag: &[f64], u_r: &Matrix, v_r: &Matrix) -> Result<Matrix> {
    ensure_shape!(
        u_r.ncols() == diag.len() && v_r.ncols() == diag.len(),
        "diagonal has length {} but bases have ranks {} and {}",
        diag.len(),
        u_r.ncols(),
        v_r.ncols()
    );
    let mut scaled = u_r.clone();
    for (mut col, s) in scaled.column_iter_mut().zip(diag) {
        col *= *s;
    }
    Ok(scaled * v_r.transpose())
}

/// `Q_rᵀ (g − μ)`.
pub fn pca_compress(slice: &[f64], basis: &PcaBasis) -> Result<Vector> {
    ensure_shape!(
        slice.len() == basis.dim(),
        "slice has length {} but basis dimension is {}",
        slice.len(),
        basis.dim()
    );
    let centered = Vector::from_column_slice(slice) - &basis.mu;
    Ok(basis.q_r.tr_mul(&centered))
}

/// `Q_r c + μ`.
pub fn pca_decompress(coeffs: &[f64], basis: &PcaBasis) -> Result<Vector> {
    ensure_shape!(
        coeffs.len() == basis.r,
        "got {} coefficients for a rank-{} basis",
        coeffs.len(),
        basis.r
    );
    let mut out = basis.mu.clone();
    for (j, c) in coeffs.iter().enumerate() {
        out.axpy(*c, &basis.q_r.column(j), 1.0);
    }
    Ok(out)
}

/// `U_rᵀ g`.
pub fn subspace_project(g: &[f64], u_r: &Matrix) -> Result<Vector> {
    ensure_shape!(
        g.len() == u_r.nrows(),
        "update has length {} but basis has {} rows",
        g.len(),
        u_r.nrows()
    );
    Ok(u_r.tr_mul(&Vector::from_column_slice(g)))
}

/// `U_r c`.
pub fn subspace_reconstruct(coeffs: &[f64], u_r: &Matrix) -> Result<Vector> {
    ensure_shape!(
        coeffs.len() == u_r.ncols(),
        "got {} coefficients for a rank-{} basis",
        coeffs.len(),
        u_r.ncols()
    );
    Ok(u_r * Vector::from_column_slice(coeffs))
}

/// A `k`-sparse vector; `indices` are 0-based and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseResidual {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseResidual {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn expand(&self) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }
}

/// `max(1, ceil(fraction · d))`.
pub fn topk_count(d: usize, fraction: f64) -> usize {
    ceil_rank(fraction, d).max(1).min(d)
}

/// Keeps the `ceil(fraction · d)` largest-magnitude entries. Ties go to the
/// lower index.
pub fn topk_sparsify(v: &[f64], fraction: f64) -> Result<SparseResidual> {
    ensure_input!(
        fraction > 0.0 && fraction <= 1.0,
        "top-k fraction must lie in (0, 1], got {fraction}"
    );
    ensure_input!(!v.is_empty(), "cannot sparsify an empty vector");
    ensure_input!(v.iter().all(|x| x.is_finite()), "vector has non-finite entries");
    let k = topk_count(v.len(), fraction);

    let mut order: Vec<usize> = (0..v.len()).collect();
    let by_rank = |&a: &usize, &b: &usize| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b));
    if k < v.len() {
        order.select_nth_unstable_by(k - 1, by_rank);
        order.truncate(k);
    }
    order.sort_unstable();
    let values = order.iter().map(|&i| v[i]).collect();
    Ok(SparseResidual {
        dim: v.len(),
        indices: order,
        values,
    })
}

pub fn expand(sr: &SparseResidual) -> Vector {
    sr.expand()
}

/// History of reconstructed updates, newest in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMemory {
    columns: Matrix,
    filled: usize,
}

impl PredictorMemory {
    pub fn new(d: usize, h: usize) -> Self {
        Self {
            columns: Matrix::zeros(d, h),
            filled: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn depth(&self) -> usize {
        self.columns.ncols()
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    /// Shifts every column one slot older and writes `g` into column 0.
    pub fn push(&mut self, g: &[f64]) -> Result<()> {
        ensure_shape!(g.len() == self.dim(), "update has length {}, memory holds {}", g.len(), self.dim());
        let h = self.depth();
        if h == 0 {
            return Ok(());
        }
        for j in (1..h).rev() {
            let (left, mut right) = self.columns.columns_range_pair_mut(j - 1, j);
            right.copy_from(&left);
        }
        self.columns.column_mut(0).copy_from_slice(g);
        self.filled = (self.filled + 1).min(h);
        Ok(())
    }
}

/// Least-squares prediction coefficients over the filled history columns;
/// unfilled slots get 0.
pub fn predictor_fit(memory: &PredictorMemory, g: &[f64]) -> Result<Vector> {
    ensure_shape!(
        g.len() == memory.dim(),
        "update has length {}, memory holds {}",
        g.len(),
        memory.dim()
    );
    let mut coeffs = Vector::zeros(memory.depth());
    if memory.filled > 0 {
        let active = memory.columns.columns(0, memory.filled).into_owned();
        let a = lstsq_minnorm(&active, &Vector::from_column_slice(g))?;
        coeffs.rows_mut(0, memory.filled).copy_from(&a);
    }
    Ok(coeffs)
}

/// `M · coeffs + expand(residual)`.
pub fn predictor_roundtrip(
    memory: &PredictorMemory,
    coeffs: &[f64],
    residual: &SparseResidual,
) -> Result<Vector> {
    ensure_shape!(
        coeffs.len() == memory.depth(),
        "got {} coefficients for memory depth {}",
        coeffs.len(),
        memory.depth()
    );
    ensure_shape!(
        residual.dim == memory.dim(),
        "residual has dimension {}, memory holds {}",
        residual.dim,
        memory.dim()
    );
    let mut out = Vector::zeros(memory.dim());
    for (j, c) in coeffs.iter().enumerate() {
        out.axpy(*c, &memory.columns.column(j), 1.0);
    }
    for (&i, &v) in residual.indices.iter().zip(&residual.values) {
        out[i] += v;
    }
    Ok(out)
}

/// Coefficients and top-k residual for `g` given the current history.
pub fn predictive_encode(
    memory: &PredictorMemory,
    g: &[f64],
    fraction: f64,
) -> Result<(Vector, SparseResidual)> {
    let coeffs = predictor_fit(memory, g)?;
    let predicted = memory.columns() * &coeffs;
    let residual: Vec<f64> = g.iter().zip(predicted.iter()).map(|(a, b)| a - b).collect();
    Ok((coeffs, topk_sparsify(&residual, fraction)?))
}

/// What a client puts on the uplink.
#[derive(Debug, Clone, PartialEq)]
pub enum CompressedUpdate {
    Raw(Vec<f64>),
    SubspaceCoeffs(Vec<f64>),
    PcaSlices(Vec<Vec<f64>>),
    LowRankDiag(Vec<f64>),
    Predictive {
        coeffs: Vec<f64>,
        residual: SparseResidual,
    },
}

impl CompressedUpdate {
    /// Real-valued elements transmitted (indices excluded).
    pub fn uplink_element_count(&self) -> u64 {
        match self {
            CompressedUpdate::Raw(g) => g.len() as u64,
            CompressedUpdate::SubspaceCoeffs(c) | CompressedUpdate::LowRankDiag(c) => c.len() as u64,
            CompressedUpdate::PcaSlices(s) => s.iter().map(|c| c.len() as u64).sum(),
            CompressedUpdate::Predictive { coeffs, residual } => (coeffs.len() + residual.nnz()) as u64,
        }
    }

    /// Integer indices transmitted alongside the values.
    pub fn index_overhead(&self) -> u64 {
        match self {
            CompressedUpdate::Predictive { residual, .. } => residual.nnz() as u64,
            _ => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CompressedUpdate::Raw(_) => "raw",
            CompressedUpdate::SubspaceCoeffs(_) => "subspace",
            CompressedUpdate::PcaSlices(_) => "pca_slices",
            CompressedUpdate::LowRankDiag(_) => "low_rank_diag",
            CompressedUpdate::Predictive { .. } => "predictive",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{narrow_pca, narrow_svd};
    use crate::updates::{reshape_to_matrix, ReshapeSpec};
    use proptest::prelude::*;

    fn um(rows: usize, data: &[f64]) -> UpdateMatrix {
        let n = data.len() / rows;
        let g = Matrix::from_row_slice(rows, n, data);
        let flat = Vector::from_column_slice(g.as_slice());
        reshape_to_matrix(&flat, &ReshapeSpec::flat(flat.len(), rows).unwrap()).unwrap()
    }

    fn e(d: usize, i: usize) -> Matrix {
        let mut m = Matrix::zeros(d, 1);
        m[(i, 0)] = 1.0;
        m
    }

    #[test]
    fn project_left_examples() {
        let gm = um(2, &[2., 3., 9., 9.]);
        let c = svd_project_left(&gm, &e(2, 0)).unwrap();
        assert_eq!(c, Matrix::from_row_slice(1, 2, &[2., 3.]));

        let gm = um(2, &[2., 0., 0., 1.]);
        let t = narrow_svd(&gm.g_mat, 0.8).unwrap();
        let rec = svd_reconstruct_left(&svd_project_left(&gm, &t.u_r).unwrap(), &t.u_r).unwrap();
        let mse = (rec - &gm.g_mat).norm_squared() / 4.0;
        assert!((mse - 0.25).abs() < 1e-12);

        assert!(svd_project_left(&gm, &e(3, 0)).is_err());
    }

    #[test]
    fn project_left_exact_on_range() {
        let gm = um(3, &[1., 2., 2., 4., -1., -2.]);
        let t = narrow_svd(&gm.g_mat, 1.0).unwrap();
        assert_eq!(t.r, 1);
        let rec = svd_reconstruct_left(&svd_project_left(&gm, &t.u_r).unwrap(), &t.u_r).unwrap();
        assert!((rec - &gm.g_mat).norm() < 1e-10);
    }

    #[test]
    fn diag_codec_examples() {
        let gm = um(2, &[2., 0., 0., 1.]);
        let d = svd_diag_encode(&gm, &e(2, 0), &e(2, 0)).unwrap();
        assert_eq!(d, vec![2.0]);
        let rec = svd_diag_decode(&d, &e(2, 0), &e(2, 0)).unwrap();
        assert_eq!(rec, Matrix::from_row_slice(2, 2, &[2., 0., 0., 0.]));

        let gm = um(3, &[1., -2., 0.5, 3., 2., 1.]);
        let t = narrow_svd(&gm.g_mat, 1.0).unwrap();
        let rec = svd_diag_decode(&svd_diag_encode(&gm, &t.u_r, &t.v_r).unwrap(), &t.u_r, &t.v_r).unwrap();
        assert!((rec - &gm.g_mat).norm() < 1e-8);

        let gm = um(2, &[0., 0., 5., 7.]);
        let d = svd_diag_encode(&gm, &e(2, 0), &e(2, 1)).unwrap();
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn pca_codec_examples() {
        let basis = narrow_pca(&[&[1., 1.], &[1., -1.]], 0.5).unwrap();
        assert_eq!(pca_compress(&[1., 0.], &basis).unwrap().as_slice(), &[0.0]);
        let c = pca_compress(&[1., -1.], &basis).unwrap();
        assert!((c[0].abs() - 1.0).abs() < 1e-12);
        let back = pca_decompress(c.as_slice(), &basis).unwrap();
        assert!((back - Vector::from_column_slice(&[1., -1.])).norm() < 1e-12);

        let mean_only = narrow_pca(&[&[1., 1.], &[1., -1.]], 0.2).unwrap();
        assert_eq!(mean_only.r, 0);
        assert_eq!(pca_compress(&[7., 7.], &mean_only).unwrap().len(), 0);
        assert_eq!(pca_decompress(&[], &mean_only).unwrap(), mean_only.mu);
        assert!(pca_decompress(&[1.0], &mean_only).is_err());
    }

    #[test]
    fn subspace_examples() {
        let u = e(3, 0);
        let c = subspace_project(&[2., 3., 4.], &u).unwrap();
        assert_eq!(c.as_slice(), &[2.0]);
        assert_eq!(subspace_reconstruct(c.as_slice(), &u).unwrap().as_slice(), &[2., 0., 0.]);
        let c = subspace_project(&[0., 3., 4.], &u).unwrap();
        assert_eq!(subspace_reconstruct(c.as_slice(), &u).unwrap().norm(), 0.0);
    }

    #[test]
    fn topk_examples() {
        let s = topk_sparsify(&[3., -5., 1.], 1.0 / 3.0).unwrap();
        assert_eq!((s.indices.as_slice(), s.values.as_slice()), (&[1usize][..], &[-5.0][..]));
        let v = [0.5, -2., 3., 0.];
        assert_eq!(topk_sparsify(&v, 1.0).unwrap().expand().as_slice(), &v);
        assert_eq!(topk_count(41, 0.05), 3);
        assert_eq!(topk_count(20, 0.05), 1);
        assert_eq!(topk_count(3, 1e-6), 1);
        assert!(topk_sparsify(&v, 0.0).is_err());
        assert!(topk_sparsify(&v, 1.5).is_err());
    }

    #[test]
    fn topk_ties_prefer_lower_index() {
        let s = topk_sparsify(&[1., -2., 2., 2., 1.], 0.4).unwrap();
        assert_eq!(s.indices, vec![1, 2]);
        let s = topk_sparsify(&[0., 0., 0., 0.], 0.5).unwrap();
        assert_eq!(s.indices, vec![0, 1]);
    }

    #[test]
    fn predictor_examples() {
        let prev = [1., -2., 0.5];
        let mut mem = PredictorMemory::new(3, 1);
        mem.push(&prev).unwrap();
        let g: Vec<f64> = prev.iter().map(|x| 3.0 * x).collect();
        let a = predictor_fit(&mem, &g).unwrap();
        assert!((a[0] - 3.0).abs() < 1e-12);

        let cold = PredictorMemory::new(3, 2);
        let a = predictor_fit(&cold, &[1., 2., 3.]).unwrap();
        assert_eq!(a.as_slice(), &[0., 0.]);

        let mut mem = PredictorMemory::new(3, 2);
        mem.push(&[0., 1., 0.]).unwrap();
        mem.push(&[1., 0., 0.]).unwrap();
        let (a, res) = predictive_encode(&mem, &[2., 3., 5.], 1.0 / 3.0).unwrap();
        assert!((a[0] - 2.0).abs() < 1e-12 && (a[1] - 3.0).abs() < 1e-12);
        assert_eq!(res.indices, vec![2]);
        assert!((res.values[0] - 5.0).abs() < 1e-12);
        let g_hat = predictor_roundtrip(&mem, a.as_slice(), &res).unwrap();
        assert!((g_hat - Vector::from_column_slice(&[2., 3., 5.])).norm() < 1e-12);
    }

    #[test]
    fn predictor_lossless_and_zero() {
        let mut mem = PredictorMemory::new(4, 3);
        mem.push(&[1., 0., 2., -1.]).unwrap();
        let g = [0.3, -0.7, 2.2, 5.0];
        let (a, res) = predictive_encode(&mem, &g, 1.0).unwrap();
        let g_hat = predictor_roundtrip(&mem, a.as_slice(), &res).unwrap();
        assert!((g_hat - Vector::from_column_slice(&g)).norm() < 1e-12);

        let zero = SparseResidual { dim: 4, indices: vec![1], values: vec![0.0] };
        let g_hat = predictor_roundtrip(&mem, &[0., 0., 0.], &zero).unwrap();
        assert_eq!(g_hat.norm(), 0.0);
    }

    #[test]
    fn memory_shifts_newest_first() {
        let mut mem = PredictorMemory::new(2, 2);
        for k in 1..=3 {
            mem.push(&[k as f64, 0.0]).unwrap();
        }
        assert_eq!(mem.filled(), 2);
        assert_eq!(mem.columns()[(0, 0)], 3.0);
        assert_eq!(mem.columns()[(0, 1)], 2.0);
    }

    #[test]
    fn element_counts() {
        let p = CompressedUpdate::Predictive {
            coeffs: vec![0.0; 5],
            residual: SparseResidual { dim: 41, indices: vec![0, 3, 9], values: vec![1.0; 3] },
        };
        assert_eq!((p.uplink_element_count(), p.index_overhead()), (8, 3));
        let s = CompressedUpdate::PcaSlices(vec![vec![1.0; 2], vec![], vec![0.0; 3]]);
        assert_eq!((s.uplink_element_count(), s.index_overhead()), (5, 0));
    }

    fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..1 << d)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..d).filter(|i| m & (1 << i) != 0).collect())
            .collect()
    }

    proptest! {
        #[test]
        fn topk_is_best_k_sparse(v in prop::collection::vec(-4i32..4, 1..10), f in 0.01f64..1.0) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let s = topk_sparsify(&v, f).unwrap();
            let kept: f64 = s.values.iter().map(|x| x * x).sum();
            let total: f64 = v.iter().map(|x| x * x).sum();
            let distortion = (Vector::from_column_slice(&v) - s.expand()).norm_squared();
            prop_assert!((distortion - (total - kept)).abs() < 1e-12);
            for subset in subsets(v.len(), s.nnz()) {
                let dropped: f64 = total - subset.iter().map(|&i| v[i] * v[i]).sum::<f64>();
                prop_assert!(distortion <= dropped + 1e-12);
            }
        }

        #[test]
        fn codecs_are_idempotent(cols in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 3..6),
                                 x in prop::collection::vec(-3.0f64..3.0, 5), alpha in 0.1f64..1.0) {
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            let basis = narrow_pca(&refs, alpha).unwrap();
            let once = pca_decompress(pca_compress(&x, &basis).unwrap().as_slice(), &basis).unwrap();
            let twice = pca_decompress(pca_compress(once.as_slice(), &basis).unwrap().as_slice(), &basis).unwrap();
            prop_assert!((&once - &twice).norm() < 1e-10);

            let g = crate::numerics::columns_to_matrix(5, refs.iter().copied());
            let t = narrow_svd(&g, alpha).unwrap();
            let once = subspace_reconstruct(subspace_project(&x, &t.u_r).unwrap().as_slice(), &t.u_r).unwrap();
            let twice = subspace_reconstruct(subspace_project(once.as_slice(), &t.u_r).unwrap().as_slice(), &t.u_r).unwrap();
            prop_assert!((&once - &twice).norm() < 1e-10);
            prop_assert!(once.norm() <= Vector::from_column_slice(&x).norm() + 1e-12);
        }

        #[test]
        fn residual_non_increasing_in_depth(hist in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 4),
                                            g in prop::collection::vec(-2.0f64..2.0, 6)) {
            let mut prev = f64::INFINITY;
            for h in 0..=hist.len() {
                let mut mem = PredictorMemory::new(6, h);
                for col in hist.iter().take(h).rev() {
                    mem.push(col).unwrap();
                }
                let a = predictor_fit(&mem, &g).unwrap();
                let res = (Vector::from_column_slice(&g) - mem.columns() * &a).norm();
                prop_assert!(res <= prev + 1e-9);
                prev = res;
            }
        }
    }
}
