//! Eigendecomposition of small complex Hermitian matrices.
//!
//! The covariance-style matrices produced by this crate are tiny (M x M with
//! M around five), so a cyclic Jacobi sweep is both simpler and more robust
//! than pulling in a general-purpose LAPACK binding.  Jacobi on a Hermitian
//! matrix converges quadratically once the off-diagonal mass is small, and
//! every intermediate matrix stays exactly Hermitian because each rotation is
//! applied as a unitary similarity transform.

use ndarray::Array2;
use num_complex::Complex64;

use crate::ExtractError;

/// Maximum number of full Jacobi sweeps before giving up.
///
/// A 5 x 5 Hermitian matrix converges in well under ten sweeps; the cap only
/// exists so that a logic error cannot loop forever.
const MAX_SWEEPS: usize = 100;

/// Relative threshold on the off-diagonal Frobenius mass at which the
/// iteration is declared converged.
const CONVERGENCE_RTOL: f64 = 1e-12;

// ─────────────────────────────── 1. Result type ───────────────────────────────

/// Full eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Real eigenvalues, in the order the diagonal settled (not sorted).
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors; column `k` pairs with `values[k]`.
    pub vectors: Array2<Complex64>,
}

impl HermitianEigen {
    /// Index of the largest eigenvalue.
    ///
    /// Scans left to right and keeps the first maximum, so exact ties resolve
    /// to the lowest index.  For an input that is already diagonal (such as
    /// the identity) no rotations run and the tie resolves to column zero.
    pub fn principal_index(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }
}

// ─────────────────────────────── 2. Jacobi iteration ───────────────────────────────

/// Frobenius norm of a complex matrix.
fn frobenius_norm(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Square root of the off-diagonal Frobenius mass.
fn off_diagonal_norm(a: &Array2<Complex64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Diagonalizes a Hermitian matrix with cyclic Jacobi rotations.
///
/// Each rotation zeroes one off-diagonal pair `(p, q)` using the unitary
///
/// ```text
/// U[p][p] = c      U[p][q] = -s * e^{i b}
/// U[q][p] = s * e^{-i b}    U[q][q] = c
/// ```
///
/// where `e^{i b}` is the phase of `A[p][q]` and `(c, s)` come from the
/// stable small-root tangent formula.  Sweeps repeat until the off-diagonal
/// Frobenius mass drops below `1e-12` times the Frobenius norm of the input.
///
/// The returned eigenvectors satisfy `A v = lambda v` to a residual far below
/// `1e-8 * ||A||`, which downstream extraction relies on.
pub fn hermitian_eigen(a: &Array2<Complex64>) -> Result<HermitianEigen, ExtractError> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(ExtractError::ShapeMismatch(format!(
            "eigendecomposition needs a square, non-empty matrix, got {} x {}",
            a.nrows(),
            a.ncols()
        )));
    }

    let mut work = a.clone();
    // Force exact Hermitian structure from the upper triangle so that tiny
    // asymmetries in the input cannot accumulate across sweeps.
    for p in 0..n {
        work[(p, p)] = Complex64::new(work[(p, p)].re, 0.0);
        for q in (p + 1)..n {
            let avg = 0.5 * (work[(p, q)] + work[(q, p)].conj());
            work[(p, q)] = avg;
            work[(q, p)] = avg.conj();
        }
    }

    let mut vectors = Array2::<Complex64>::eye(n);
    let tol = CONVERGENCE_RTOL * frobenius_norm(&work);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&work) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = work[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = apq / mag;
                let app = work[(p, p)].re;
                let aqq = work[(q, q)].re;

                // Small-magnitude root of t^2 - 2*theta*t - 1 = 0, written in
                // the cancellation-free form.
                let theta = (aqq - app) / (2.0 * mag);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = -sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Column update: A <- A * U (same rotation updates V).
                for k in 0..n {
                    let akp = work[(k, p)];
                    let akq = work[(k, q)];
                    work[(k, p)] = c * akp + s * phase.conj() * akq;
                    work[(k, q)] = -s * phase * akp + c * akq;

                    let vkp = vectors[(k, p)];
                    let vkq = vectors[(k, q)];
                    vectors[(k, p)] = c * vkp + s * phase.conj() * vkq;
                    vectors[(k, q)] = -s * phase * vkp + c * vkq;
                }
                // Row update: A <- U^H * A.
                for k in 0..n {
                    let apk = work[(p, k)];
                    let aqk = work[(q, k)];
                    work[(p, k)] = c * apk + s * phase * aqk;
                    work[(q, k)] = -s * phase.conj() * apk + c * aqk;
                }

                // The rotation zeroes this pair analytically; pin it exactly
                // and keep the diagonal real so the matrix stays Hermitian.
                work[(p, q)] = Complex64::new(0.0, 0.0);
                work[(q, p)] = Complex64::new(0.0, 0.0);
                work[(p, p)] = Complex64::new(work[(p, p)].re, 0.0);
                work[(q, q)] = Complex64::new(work[(q, q)].re, 0.0);
            }
        }
    }
    if !converged && off_diagonal_norm(&work) > tol {
        return Err(ExtractError::EigenNotConverged { sweeps: MAX_SWEEPS });
    }

    let values = (0..n).map(|k| work[(k, k)].re).collect::<Vec<_>>();
    // Rotations are unitary, so columns are already unit norm up to roundoff;
    // renormalize to keep downstream magnitude features clean.
    for k in 0..n {
        let norm = vectors.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                vectors[(i, k)] /= norm;
            }
        }
    }
    Ok(HermitianEigen { values, vectors })
}

// ─────────────────────────────── 3. Tests ───────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_hermitian(n: usize, seed: u64) -> Array2<Complex64> {
        // Cheap deterministic pseudo-random entries; statistical quality is
        // irrelevant here, only reproducibility matters.
        let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut b = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = Complex64::new(next(), next());
            }
        }
        let bh = b.t().map(|z| z.conj());
        (&b + &bh).mapv(|z| z * 0.5)
    }

    fn reconstruction_error(a: &Array2<Complex64>, eig: &HermitianEigen) -> f64 {
        let n = a.nrows();
        let mut rebuilt = Array2::<Complex64>::zeros((n, n));
        for k in 0..n {
            let v = eig.vectors.column(k);
            for i in 0..n {
                for j in 0..n {
                    rebuilt[(i, j)] += eig.values[k] * v[i] * v[j].conj();
                }
            }
        }
        frobenius_norm(&(&rebuilt - a))
    }

    #[test]
    fn diagonal_matrix_is_returned_unchanged() {
        let a = array![
            [Complex64::new(3.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
        ];
        let eig = hermitian_eigen(&a).expect("diagonal input must decompose");
        assert_eq!(eig.values, vec![3.0, -1.0], "diagonal entries are the eigenvalues");
        assert_eq!(
            eig.vectors[(0, 0)],
            Complex64::new(1.0, 0.0),
            "no rotation should run on an already-diagonal matrix"
        );
    }

    #[test]
    fn identity_ties_resolve_to_first_column() {
        let a = Array2::<Complex64>::eye(4);
        let eig = hermitian_eigen(&a).expect("identity must decompose");
        assert_eq!(eig.principal_index(), 0, "equal eigenvalues tie-break to the lowest index");
        for i in 0..4 {
            let expect = if i == 0 { 1.0 } else { 0.0 };
            assert_eq!(
                eig.vectors[(i, 0)],
                Complex64::new(expect, 0.0),
                "principal column of the identity must be e_1"
            );
        }
    }

    #[test]
    fn two_by_two_complex_pair_matches_closed_form() {
        // Eigenvalues of [[2, i], [-i, 2]] are 1 and 3.
        let a = array![
            [Complex64::new(2.0, 0.0), Complex64::new(0.0, 1.0)],
            [Complex64::new(0.0, -1.0), Complex64::new(2.0, 0.0)],
        ];
        let eig = hermitian_eigen(&a).expect("2x2 must decompose");
        let mut vals = eig.values.clone();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((vals[0] - 1.0).abs() < 1e-12, "smaller eigenvalue should be 1, got {}", vals[0]);
        assert!((vals[1] - 3.0).abs() < 1e-12, "larger eigenvalue should be 3, got {}", vals[1]);
    }

    #[test]
    fn random_hermitian_reconstructs_and_preserves_trace() {
        for seed in 1..6u64 {
            let a = random_hermitian(5, seed);
            let eig = hermitian_eigen(&a).expect("random Hermitian must decompose");
            let norm = frobenius_norm(&a);
            let err = reconstruction_error(&a, &eig);
            assert!(
                err <= 1e-10 * norm.max(1.0),
                "V diag(w) V^H should rebuild the input: err {} for seed {}",
                err,
                seed
            );
            let trace: f64 = (0..5).map(|i| a[(i, i)].re).sum();
            let sum: f64 = eig.values.iter().sum();
            assert!(
                (trace - sum).abs() <= 1e-10 * norm.max(1.0),
                "eigenvalue sum {} should equal trace {}",
                sum,
                trace
            );
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let a = random_hermitian(5, 17);
        let eig = hermitian_eigen(&a).expect("random Hermitian must decompose");
        for i in 0..5 {
            for j in 0..5 {
                let dot: Complex64 = (0..5)
                    .map(|k| eig.vectors[(k, i)].conj() * eig.vectors[(k, j)])
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot.norm() - expect).abs() < 1e-10,
                    "columns {} and {} should be orthonormal, got |<vi,vj>| = {}",
                    i,
                    j,
                    dot.norm()
                );
            }
        }
    }

    #[test]
    fn residual_meets_the_subspace_guarantee() {
        let a = random_hermitian(5, 23);
        let norm = frobenius_norm(&a);
        let eig = hermitian_eigen(&a).expect("random Hermitian must decompose");
        for k in 0..5 {
            let v = eig.vectors.column(k);
            let mut residual = 0.0f64;
            for i in 0..5 {
                let av: Complex64 = (0..5).map(|j| a[(i, j)] * v[j]).sum();
                residual += (av - eig.values[k] * v[i]).norm_sqr();
            }
            assert!(
                residual.sqrt() <= 1e-8 * norm,
                "residual ||Av - wv|| = {} exceeds 1e-8 * ||A|| = {}",
                residual.sqrt(),
                1e-8 * norm
            );
        }
    }

    #[test]
    fn zero_matrix_decomposes_without_error() {
        let a = Array2::<Complex64>::zeros((3, 3));
        let eig = hermitian_eigen(&a).expect("zero matrix must decompose");
        assert_eq!(eig.values, vec![0.0; 3], "zero matrix has all-zero spectrum");
    }

    #[test]
    fn empty_or_rectangular_input_is_rejected() {
        let empty = Array2::<Complex64>::zeros((0, 0));
        assert!(hermitian_eigen(&empty).is_err(), "empty matrix must be rejected");
        let rect = Array2::<Complex64>::zeros((2, 3));
        assert!(hermitian_eigen(&rect).is_err(), "rectangular matrix must be rejected");
    }
}
