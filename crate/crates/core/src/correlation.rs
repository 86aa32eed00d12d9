//! Cholesky factor of the `(dz1, dz2, dz3)` correlation matrix.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, ParamReport, ParamViolation, Result};
use crate::model::{ModelParams, PSD_TOLERANCE};

/// Lower-triangular `L` with `L * L^T` equal to the correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationFactorization {
    lower: [[f64; 3]; 3],
}

impl CorrelationFactorization {
    pub fn lower(&self) -> &[[f64; 3]; 3] {
        &self.lower
    }

    /// Maps independent standard normals to correlated ones.
    #[inline]
    pub fn correlate(&self, eps: [f64; 3]) -> [f64; 3] {
        let l = &self.lower;
        [
            l[0][0] * eps[0],
            l[1][0] * eps[0] + l[1][1] * eps[1],
            l[2][0] * eps[0] + l[2][1] * eps[1] + l[2][2] * eps[2],
        ]
    }

    pub fn reconstruct(&self) -> [[f64; 3]; 3] {
        let l = &self.lower;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| l[i][k] * l[j][k]).sum();
            }
        }
        out
    }
}

pub(crate) fn min_eigenvalue(m: &[[f64; 3]; 3]) -> f64 {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    SymmetricEigen::new(mat).eigenvalues.min()
}

/// Projects a symmetric matrix with unit diagonal onto the PSD cone by
/// clipping eigenvalues at zero, then rescales back to unit diagonal.
pub(crate) fn repair_correlation(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    let eig = SymmetricEigen::new(mat);
    if eig.eigenvalues.min() >= 0.0 {
        return *m;
    }
    let clipped = eig.eigenvalues.map(|x| x.max(1e-10));
    let fixed = eig.eigenvectors * Matrix3::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = if i == j {
                1.0
            } else {
                (fixed[(i, j)] / (fixed[(i, i)] * fixed[(j, j)]).sqrt()).clamp(-1.0, 1.0)
            };
        }
    }
    out
}

fn not_psd(min_eigenvalue: f64) -> Error {
    Error::InvalidParams(ParamReport(vec![ParamViolation::CorrelationMatrixNotPsd {
        min_eigenvalue,
    }]))
}

/// Cholesky factorization tolerant of singular (boundary) correlation matrices.
pub fn factorize_correlation(p: &ModelParams) -> Result<CorrelationFactorization> {
    let a = p.correlation_matrix();
    let min_eig = min_eigenvalue(&a);
    if min_eig < -PSD_TOLERANCE {
        return Err(not_psd(min_eig));
    }
    let mut l = [[0.0f64; 3]; 3];
    for j in 0..3 {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -1e-10 {
            return Err(not_psd(min_eig));
        }
        let pivot = d.max(0.0).sqrt();
        l[j][j] = pivot;
        for i in (j + 1)..3 {
            let num = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = if pivot > 1e-7 {
                num / pivot
            } else if num.abs() <= 1e-7 {
                // Zero pivot: this direction is spanned by earlier columns.
                0.0
            } else {
                return Err(not_psd(min_eig));
            };
        }
    }
    Ok(CorrelationFactorization { lower: l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn max_abs_diff(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((a[i][j] - b[i][j]).abs());
            }
        }
        m
    }

    #[test]
    fn identity_correlations() {
        let p = ModelParams {
            rho: 0.0,
            rho1: 0.0,
            rho2: 0.0,
            ..presets::fig1()
        };
        let f = factorize_correlation(&p).unwrap();
        assert_eq!(f.lower(), &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn fig1_reconstruction() {
        let p = presets::fig1();
        let f = factorize_correlation(&p).unwrap();
        assert!(max_abs_diff(&f.reconstruct(), &p.correlation_matrix()) <= 1e-12);
        let l = f.lower();
        assert_eq!(l[0][1], 0.0);
        assert_eq!(l[0][2], 0.0);
        assert_eq!(l[1][2], 0.0);
    }

    #[test]
    fn degenerate_boundary_case() {
        // dz3 == dz1: rho1 = 1 forces rho2 = rho.
        let p = ModelParams {
            rho: 0.4,
            rho1: 1.0,
            rho2: 0.4,
            ..presets::fig1()
        };
        let f = factorize_correlation(&p).unwrap();
        assert_eq!(f.lower()[2][2], 0.0);
        assert!(max_abs_diff(&f.reconstruct(), &p.correlation_matrix()) <= 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let p = ModelParams {
            rho: -0.9,
            rho1: 0.9,
            rho2: 0.9,
            ..presets::fig1()
        };
        assert!(factorize_correlation(&p).is_err());
    }

    #[test]
    fn repair_yields_psd_unit_diagonal() {
        let bad = [[1.0, -0.9, 0.9], [-0.9, 1.0, 0.9], [0.9, 0.9, 1.0]];
        let fixed = repair_correlation(&bad);
        assert!(min_eigenvalue(&fixed) >= -PSD_TOLERANCE);
        for (i, row) in fixed.iter().enumerate() {
            assert_eq!(row[i], 1.0);
        }
    }

    proptest! {
        #[test]
        fn factor_reproduces_matrix(rho in -1.0..1.0f64, rho1 in -1.0..1.0f64, rho2 in -1.0..1.0f64) {
            let p = ModelParams { rho, rho1, rho2, ..presets::fig1() };
            if min_eigenvalue(&p.correlation_matrix()) > 1e-9 {
                let f = factorize_correlation(&p).unwrap();
                prop_assert!(max_abs_diff(&f.reconstruct(), &p.correlation_matrix()) <= 1e-12);
            }
        }
    }
}
