//! Dense complex linear-algebra helpers: unitaries, permanents, determinants.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Linear-optical transformation acting on the external modes.
///
/// Entry `(p, m)` is the amplitude `U_{pm}` with which a particle created in
/// input mode `p` is redistributed into output mode `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalUnitary(CMatrix);

impl ExternalUnitary {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "unitary must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let dev = unitarity_deviation(&matrix);
        if dev > Self::TOLERANCE {
            return Err(Error::NotUnitary(dev));
        }
        Ok(ExternalUnitary(matrix))
    }

    pub(crate) fn new_unchecked(matrix: CMatrix) -> Self {
        ExternalUnitary(matrix)
    }

    pub fn identity(d: usize) -> Self {
        ExternalUnitary(CMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn deviation(&self) -> f64 {
        unitarity_deviation(&self.0)
    }
}

/// Max-norm of `U^dagger U - 1`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let id = CMatrix::identity(u.nrows(), u.ncols());
    (prod - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Permanent by Ryser's inclusion-exclusion formula, visiting column subsets
/// in Gray-code order so each step updates the row sums by one column.
pub fn permanent(a: &CMatrix) -> Complex64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "permanent of a non-square matrix");
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray: u64 = 0;
    for step in 1u64..(1u64 << n) {
        let next = step ^ (step >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << flipped) != 0;
        for (i, s) in row_sums.iter_mut().enumerate() {
            if added {
                *s += a[(i, flipped)];
            } else {
                *s -= a[(i, flipped)];
            }
        }
        gray = next;
        let prod: Complex64 = row_sums.iter().product();
        if next.count_ones() % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if n % 2 == 1 {
        -total
    } else {
        total
    }
}

/// Determinant via LU with partial pivoting.
pub fn determinant(a: &CMatrix) -> Complex64 {
    if a.nrows() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    a.clone().lu().determinant()
}

pub fn submatrix(a: &CMatrix, indices: &[usize]) -> CMatrix {
    CMatrix::from_fn(indices.len(), indices.len(), |i, j| a[(indices[i], indices[j])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetric::{permutations, sequence_sign};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn leibniz(a: &CMatrix, signed: bool) -> Complex64 {
        permutations(a.nrows())
            .iter()
            .map(|p| {
                let s = if signed { sequence_sign(p) } else { 1.0 };
                p.iter().enumerate().map(|(i, &j)| a[(i, j)]).product::<Complex64>() * s
            })
            .sum()
    }

    #[test]
    fn ryser_matches_leibniz_sum() {
        for n in 1..=6 {
            let a = random_matrix(n, n as u64);
            let diff = (permanent(&a) - leibniz(&a, false)).norm();
            assert!(diff < 1e-10, "n={n} diff={diff}");
        }
    }

    #[test]
    fn lu_determinant_matches_leibniz_sum() {
        for n in 1..=6 {
            let a = random_matrix(n, 100 + n as u64);
            let diff = (determinant(&a) - leibniz(&a, true)).norm();
            assert!(diff < 1e-10, "n={n} diff={diff}");
        }
    }

    #[test]
    fn permanent_of_all_ones() {
        let a = CMatrix::from_element(5, 5, Complex64::new(1.0, 0.0));
        assert!((permanent(&a).re - 120.0).abs() < 1e-9);
        assert!(determinant(&a).norm() < 1e-9);
    }

    #[test]
    fn rejects_non_unitary() {
        let m = CMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(ExternalUnitary::new(m), Err(Error::NotUnitary(_))));
        assert!(ExternalUnitary::new(CMatrix::identity(3, 3)).is_ok());
    }
}
