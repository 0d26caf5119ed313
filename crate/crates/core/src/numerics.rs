//! Dense symmetric eigendecomposition and SPD solves.
//!
//! Both are thin contracts over nalgebra. The eigensolver adds a descending
//! ordering and a deterministic sign convention so that principal components
//! are reproducible across runs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FasmError, Result};

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: DVector<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(values) V'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        scaled * self.vectors.transpose()
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(FasmError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Flip `v` so that its first component of (numerically) largest magnitude
/// is nonnegative.
pub fn normalize_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    // Components within a relative 1e-10 of the maximum count as tied, so the
    // earliest of them decides.
    let lead = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    if v[lead] < 0.0 {
        v.neg_mut();
    }
}

/// Symmetric eigendecomposition with descending eigenvalues and
/// sign-normalised eigenvectors.
///
/// The input is symmetrised as `(S + S') / 2` before decomposition.
pub fn sym_eig_desc(s: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if s.nrows() != s.ncols() {
        return Err(FasmError::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    check_finite(s)?;
    let m = s.nrows();
    if m == 0 {
        return Ok(EigenDecomposition {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..m).collect();
    // Stable sort keeps the solver's order among exact ties.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values = DVector::from_iterator(m, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        normalize_sign(vectors.column_mut(dst));
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Solve `M X = B` for symmetric positive-definite `M` by Cholesky.
pub fn solve_spd(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() || m.nrows() != b.nrows() {
        return Err(FasmError::DimensionMismatch(format!(
            "solve_spd: system {}x{}, right-hand side {}x{}",
            m.nrows(),
            m.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    check_finite(m)?;
    check_finite(b)?;
    let chol = m.clone().cholesky().ok_or_else(|| {
        FasmError::NotPositiveDefinite(format!("Cholesky failed on a {0}x{0} system", m.nrows()))
    })?;
    Ok(chol.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_spectrum() {
        let e = sym_eig_desc(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_by_two_hand_case() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sym_eig_desc(&s).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - h).abs() < 1e-12);
        assert!((e.vectors[(1, 0)] - h).abs() < 1e-12);
        assert!((e.vectors[(0, 1)] - h).abs() < 1e-12);
        assert!((e.vectors[(1, 1)] + h).abs() < 1e-12);
    }

    #[test]
    fn diagonal_gives_sorted_permutation() {
        let d = DVector::from_vec(vec![0.5, 3.0, -1.0, 2.0]);
        let e = sym_eig_desc(&DMatrix::from_diagonal(&d)).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 0.5, -1.0]);
        for k in 0..4 {
            let col = e.vectors.column(k);
            let ones = col.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-14).count();
            let zeros = col.iter().filter(|x| x.abs() < 1e-14).count();
            assert_eq!((ones, zeros), (1, 3));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = DMatrix::identity(2, 2);
        s[(1, 0)] = f64::NAN;
        assert!(matches!(sym_eig_desc(&s), Err(FasmError::NonFinite { .. })));
    }

    #[test]
    fn spd_trivial_solves() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.5, 4.0]);
        assert_eq!(solve_spd(&DMatrix::identity(2, 2), &b).unwrap(), b);

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let rhs = DMatrix::from_column_slice(2, 1, &[2.0, 8.0]);
        let x = solve_spd(&m, &rhs).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15 && (x[(1, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn spd_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let rhs = DMatrix::from_element(2, 1, 1.0);
        assert!(matches!(
            solve_spd(&m, &rhs),
            Err(FasmError::NotPositiveDefinite(_))
        ));
    }

    fn square(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, m * m)
            .prop_map(move |v| DMatrix::from_column_slice(m, m, &v))
    }

    proptest! {
        #[test]
        fn eig_reconstructs_and_is_orthonormal(b in square(6)) {
            let s = &b + b.transpose();
            let e = sym_eig_desc(&s).unwrap();
            let scale = s.norm().max(1e-300);
            prop_assert!((e.reconstruct() - &s).norm() <= 1e-8 * scale);
            let gram = e.vectors.transpose() * &e.vectors;
            prop_assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-10);
            for k in 1..6 {
                prop_assert!(e.values[k - 1] >= e.values[k]);
            }
        }

        #[test]
        fn spd_residual_small(a in square(5), b in square(5)) {
            let m = &a * a.transpose() + DMatrix::identity(5, 5);
            let x = solve_spd(&m, &b).unwrap();
            prop_assert!((&m * &x - &b).norm() <= 1e-9 * b.norm().max(1e-300));
            let x0 = b.clone();
            let back = solve_spd(&m, &(&m * &x0)).unwrap();
            prop_assert!((back - &x0).norm() <= 1e-8 * x0.norm().max(1e-300));
        }
    }
}
