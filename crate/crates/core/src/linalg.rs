//! Dense numerical helpers: ranks, kernels, orthogonal projectors.
//!
//! Every rank decision in the crate goes through [`rank_tolerance`], a
//! singular-value cutoff of `max(rows, cols) * eps * sigma_max`.

use nalgebra::{DMatrix, DVector};

pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

fn pad_to_tall(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r >= c {
        return m.clone();
    }
    let mut p = DMatrix::zeros(c, c);
    p.rows_mut(0, r).copy_from(m);
    p
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.singular_values()
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0;
    }
    let tol = rank_tolerance(m.nrows(), m.ncols(), sv.max());
    sv.iter().filter(|&&s| s > tol).count()
}

/// Orthonormal basis of `ker m`, one vector per column.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    let svd = pad_to_tall(m).svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let tol = rank_tolerance(r, c, sv.max());
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] <= tol).collect();
    let mut n = DMatrix::zeros(c, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        n.set_column(j, &vt.row(k).transpose());
    }
    n
}

/// Orthonormal basis of `ker mᵀ`.
pub fn left_null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    null_space(&m.transpose())
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let sv = &svd.singular_values;
    let tol = rank_tolerance(r, c, sv.max());
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > tol).collect();
    let mut b = DMatrix::zeros(r, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        b.set_column(j, &u.column(k));
    }
    b
}

/// Orthogonal projector, annotated with what it annihilates.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub q: DMatrix<f64>,
    pub source: String,
}

impl Projector {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn rank(&self) -> usize {
        self.q.trace().round().max(0.0) as usize
    }

    pub fn complement(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.q
    }

    pub fn from_basis(basis: &DMatrix<f64>, dim: usize, source: impl Into<String>) -> Self {
        let q = if basis.ncols() == 0 {
            DMatrix::zeros(dim, dim)
        } else {
            basis * basis.transpose()
        };
        Projector { q, source: source.into() }
    }
}

/// Orthogonal projector onto `ker mᵀ`; a matrix with no columns yields `I`.
pub fn kernel_projector(m: &DMatrix<f64>, source: impl Into<String>) -> Projector {
    let n = m.nrows();
    Projector::from_basis(&left_null_space(m), n, source)
}

pub fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat row mismatch");
        out.columns_mut(c0, b.ncols()).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

pub fn vcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat column mismatch");
        out.rows_mut(r0, b.nrows()).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

/// Ruiz scaling of a pencil `(E, A)`: rows of `[E A]` and shared column
/// pairs are driven towards unit infinity norm. Returns scaled copies.
pub fn equilibrate_pencil(e: &DMatrix<f64>, a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = e.nrows();
    let m = e.ncols();
    let mut e = e.clone();
    let mut a = a.clone();
    for _ in 0..20 {
        let mut worst = 0.0_f64;
        for i in 0..n {
            let r = e.row(i).amax().max(a.row(i).amax());
            if r > 0.0 {
                let s = 1.0 / r.sqrt();
                e.row_mut(i).scale_mut(s);
                a.row_mut(i).scale_mut(s);
                worst = worst.max((1.0 - r).abs());
            }
        }
        for j in 0..m {
            let c = e.column(j).amax().max(a.column(j).amax());
            if c > 0.0 {
                let s = 1.0 / c.sqrt();
                e.column_mut(j).scale_mut(s);
                a.column_mut(j).scale_mut(s);
                worst = worst.max((1.0 - c).abs());
            }
        }
        if worst < 1e-3 {
            break;
        }
    }
    (e, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn projector_of_single_branch() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let p = kernel_projector(&m, "A");
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert_relative_eq!(p.q, expect, epsilon = 1e-14);
        assert_eq!(p.rank(), 1);
    }

    #[test]
    fn projector_of_identity_and_zero() {
        let p = kernel_projector(&DMatrix::identity(3, 3), "I");
        assert!(max_abs(&p.q) < 1e-15);
        let p = kernel_projector(&DMatrix::zeros(2, 0), "none");
        assert_eq!(p.q, DMatrix::identity(2, 2));
        let p = kernel_projector(&DMatrix::zeros(2, 3), "zero");
        assert_relative_eq!(p.q, DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn null_space_of_wide_matrix_is_complete() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let n = null_space(&m);
        assert_eq!(n.ncols(), 2);
        assert!((&m * &n).amax() < 1e-15);
        assert_relative_eq!(n.transpose() * &n, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn rank_and_range() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&m), 2);
        assert_eq!(range_basis(&m).ncols(), 2);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 0)), 0);
    }

    #[test]
    fn equilibration_keeps_structure() {
        let e = DMatrix::from_row_slice(2, 2, &[1e8, 0.0, 0.0, 0.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1e-6, 1e3, 0.0]);
        let (es, as_) = equilibrate_pencil(&e, &a);
        assert_eq!(numerical_rank(&es), 1);
        assert_eq!(numerical_rank(&as_), 2);
        assert!(es.amax() <= 1.01 && as_.amax() <= 1.01);
    }
}
