//! Small dense linear-algebra helpers shared by the decomposition and
//! source-separation code. Everything here works on `nalgebra::DMatrix<f64>`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by every pseudo-inverse in the crate.
pub const PINV_RCOND: f64 = 1e-12;

/// Column-wise Khatri-Rao product. Row `s * fast.nrows() + f` of the result
/// holds `slow[s, r] * fast[f, r]`.
pub fn khatri_rao(slow: &DMatrix<f64>, fast: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(slow.ncols(), fast.ncols(), "khatri-rao column mismatch");
    let (ns, nf, r) = (slow.nrows(), fast.nrows(), slow.ncols());
    let mut out = DMatrix::zeros(ns * nf, r);
    for c in 0..r {
        let s_col = slow.column(c);
        let f_col = fast.column(c);
        let mut o_col = out.column_mut(c);
        for s in 0..ns {
            let sv = s_col[s];
            for f in 0..nf {
                o_col[s * nf + f] = sv * f_col[f];
            }
        }
    }
    out
}

/// Pseudo-inverse of a symmetric positive semi-definite matrix via its
/// eigendecomposition. Eigenvalues below `rcond * max_eigenvalue` are dropped.
pub fn pinv_symmetric(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rcond * max_ev;
    let mut inv_diag = DVector::zeros(n);
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff && ev > 0.0 {
            inv_diag[i] = 1.0 / ev;
        }
    }
    let q = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(n, n, |i, j| q[(i, j)] * inv_diag[j]);
    scaled * q.transpose()
}

/// Moore-Penrose pseudo-inverse of a general matrix via SVD.
pub fn pinv(m: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(DMatrix::zeros(m.ncols(), m.nrows()));
    }
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    svd.pseudo_inverse(rcond * max_sv)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))
}

/// Symmetric matrix power `m^p` restricted to eigenvalues above
/// `rcond * max_eigenvalue`; the rest map to zero.
pub fn symmetric_power(m: &DMatrix<f64>, p: f64, rcond: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let q = &eig.eigenvectors;
    let d: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&ev| if ev > rcond * max_ev && ev > 0.0 { ev.powf(p) } else { 0.0 })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| q[(i, j)] * d[j]);
    scaled * q.transpose()
}

/// Element-wise (Hadamard) product of two equally sized matrices.
pub fn hadamard(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.component_mul(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn khatri_rao_layout() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 2.0]);
        let kr = khatri_rao(&a, &b);
        assert_eq!(kr.shape(), (6, 2));
        // row s*3 + f = a[s] * b[f]
        assert_eq!(kr[(0, 0)], 1.0);
        assert_eq!(kr[(2, 1)], 4.0);
        assert_eq!(kr[(5, 0)], 6.0);
        assert_eq!(kr[(4, 1)], 4.0);
    }

    #[test]
    fn pinv_symmetric_of_singular_matrix() {
        // rank-1 PSD matrix v v^T
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        let m = &v * v.transpose();
        let p = pinv_symmetric(&m, PINV_RCOND);
        // M P M = M
        let back = &m * &p * &m;
        assert!((back - &m).abs().max() < 1e-10);
    }

    #[test]
    fn symmetric_inverse_sqrt_whitens() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let w = symmetric_power(&m, -0.5, PINV_RCOND);
        let id = &w * &m * &w;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }
}
