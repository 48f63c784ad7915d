//! Small dense matrix kernel on top of `nalgebra`.
//!
//! Matrices are `nalgebra::DMatrix` of `f64` or [`Complex64`]; most routines
//! are generic over both. Dimensions are limited to `1..=MAX_DIM`.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;
pub type RealVector = DVector<f64>;
pub type ComplexVector = DVector<Complex64>;

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;
/// Eigenvector matrices with a larger condition number are treated as defective.
pub const DEFECTIVE_COND: f64 = 1e8;
/// Relative scale of the singularity cliff.
pub const SINGULAR_REL: f64 = 1e-10;

const SCHUR_EPS: f64 = 1e-15;
const MAX_ITER: usize = 10_000;

/// Builds a real matrix from rows, checking shape and finiteness.
pub fn real_matrix(rows: &[Vec<f64>]) -> Result<RealMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!(
            "matrix must be square, got {n} rows of lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let m = RealMatrix::from_fn(n, n, |i, j| rows[i][j]);
    check_square(&m)?;
    Ok(m)
}

/// Verifies `1 ≤ n ≤ MAX_DIM`, squareness and finite entries.
pub fn check_square<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<usize> {
    let (r, c) = m.shape();
    if r != c || r == 0 || r > MAX_DIM {
        return Err(Error::Dimension(format!("expected a square matrix of size 1..={MAX_DIM}, got {r}x{c}")));
    }
    if m.iter().any(|x| !x.clone().is_finite()) {
        return Err(Error::InvalidParam("matrix has non-finite entries".into()));
    }
    Ok(r)
}

/// Largest entry modulus.
pub fn max_norm<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max)
}

pub fn to_complex(m: &RealMatrix) -> ComplexMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    /// Eigenvalues with multiplicity.
    pub values: Vec<Complex64>,
    /// Unit-norm eigenvectors as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
    /// 2-norm condition number of `vectors`.
    pub cond_v: f64,
    pub diagonalizable: bool,
}

/// Eigenvalues and eigenvectors via complex Schur form and back-substitution.
pub fn eigen(a: &RealMatrix) -> Result<EigenDecomp> {
    let n = check_square(a)?;
    let schur = to_complex(a)
        .try_schur(SCHUR_EPS, MAX_ITER)
        .ok_or_else(|| Error::Convergence("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    // Eigenvectors of the triangular factor: y_k = 1, y_j = 0 for j > k.
    let scale = max_norm(&t).max(f64::MIN_POSITIVE);
    let mut y = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let s: Complex64 = (i + 1..=k).map(|j| t[(i, j)] * y[(j, k)]).sum();
            let mut d = t[(i, i)] - t[(k, k)];
            if d.norm() < f64::EPSILON * scale {
                d = Complex64::new(f64::EPSILON * scale, 0.0);
            }
            y[(i, k)] = -s / d;
        }
    }
    let mut vectors = q * y;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        col /= Complex64::new(norm, 0.0);
    }
    let cond_v = condition_number(&vectors)?;
    Ok(EigenDecomp { values, vectors, cond_v, diagonalizable: cond_v <= DEFECTIVE_COND })
}

/// Eigenvalues of a complex matrix.
pub fn eigenvalues_complex(m: &ComplexMatrix) -> Result<Vec<Complex64>> {
    check_square(m)?;
    let schur = m
        .clone()
        .try_schur(SCHUR_EPS, MAX_ITER)
        .ok_or_else(|| Error::Convergence("Schur iteration did not converge".into()))?;
    let t = schur.unpack().1;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

fn singular_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<Vec<f64>> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Convergence("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(s)
}

/// `σ_max / σ_min`; infinite when singular.
pub fn condition_number<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<f64> {
    let s = singular_values(m)?;
    let (hi, lo) = (s[0], s[s.len() - 1]);
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

/// Smallest singular value.
pub fn sigma_min<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<f64> {
    Ok(*singular_values(m)?.last().expect("non-empty matrix"))
}

/// `1e-10 · n · max(‖M‖_max, 1)`: a relative cliff for ordinary matrices
/// with an absolute floor, so an operator that has collapsed to rounding
/// noise counts as singular even though its own scale is tiny.
pub fn tol_singular<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    SINGULAR_REL * m.nrows() as f64 * max_norm(m).max(1.0)
}

/// Whether `σ_min(M) ≤ tol_singular(M)`.
pub fn is_singular<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<bool> {
    Ok(sigma_min(m)? <= tol_singular(m))
}

pub fn det<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<T> {
    check_square(m)?;
    Ok(m.clone().lu().determinant())
}

pub fn inverse<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_square(m)?;
    let smin = sigma_min(m)?;
    let tol = tol_singular(m);
    if smin <= tol {
        return Err(Error::Singular { sigma_min: smin, tol });
    }
    m.clone().lu().try_inverse().ok_or(Error::Singular { sigma_min: smin, tol })
}

/// Solves `M x = b`.
pub fn solve<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>> {
    let n = check_square(m)?;
    if b.len() != n {
        return Err(Error::Dimension(format!("right-hand side has length {}, expected {n}", b.len())));
    }
    let smin = sigma_min(m)?;
    let tol = tol_singular(m);
    if smin <= tol {
        return Err(Error::Singular { sigma_min: smin, tol });
    }
    m.clone().lu().solve(b).ok_or(Error::Singular { sigma_min: smin, tol })
}

/// Orthonormal basis of a subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis<T: nalgebra::Scalar> {
    pub vectors: Vec<DVector<T>>,
    /// Singular values at or below this were treated as zero.
    pub tol_used: f64,
}

impl<T: ComplexField<RealField = f64>> SubspaceBasis<T> {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Orthogonal projection of `x` onto the span.
    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        let mut p = DVector::zeros(x.len());
        for v in &self.vectors {
            p += v * v.dotc(x);
        }
        p
    }

    /// `‖x − P x‖`.
    pub fn distance(&self, x: &DVector<T>) -> f64 {
        (x - self.project(x)).norm()
    }
}

/// Sorted singular values with the matching left and right singular vectors.
#[allow(clippy::type_complexity)]
fn full_svd<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<(Vec<f64>, Vec<DVector<T>>, Vec<DVector<T>>)> {
    check_square(m)?;
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Convergence("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let left = order.iter().map(|&i| u.column(i).into_owned()).collect();
    let right = order.iter().map(|&i| v_t.row(i).adjoint()).collect();
    Ok((s, left, right))
}

/// Singular values counted as zero: `σ ≤ tol · max(‖M‖_max, 1)`.
fn rank_threshold<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> f64 {
    tol * max_norm(m).max(1.0)
}

/// Numerical rank at the given relative tolerance.
pub fn rank<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> Result<usize> {
    let thr = rank_threshold(m, tol);
    Ok(singular_values(m)?.iter().filter(|&&s| s > thr).count())
}

/// Right singular vectors whose singular value is at most
/// `tol · max(‖M‖_max, 1)`.
pub fn kernel_basis<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> Result<SubspaceBasis<T>> {
    let thr = rank_threshold(m, tol);
    let (s, _, right) = full_svd(m)?;
    let vectors = s.iter().zip(right).filter(|(&si, _)| si <= thr).map(|(_, v)| v).collect();
    Ok(SubspaceBasis { vectors, tol_used: tol })
}

/// Left singular vectors for the singular values above the kernel threshold.
pub fn image_basis<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> Result<SubspaceBasis<T>> {
    let thr = rank_threshold(m, tol);
    let (s, left, _) = full_svd(m)?;
    let vectors = s.iter().zip(left).filter(|(&si, _)| si > thr).map(|(_, u)| u).collect();
    Ok(SubspaceBasis { vectors, tol_used: tol })
}

/// Smallest over all pairings of `max_i |a_i − b_π(i)|`. Brute force over
/// permutations, which is fine for `n ≤ MAX_DIM`.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    fn go(a: &[Complex64], b: &[Complex64], used: &mut Vec<bool>, i: usize, worst: f64, best: &mut f64) {
        if worst >= *best {
            return;
        }
        if i == a.len() {
            *best = worst;
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(a, b, used, i + 1, worst.max((a[i] - b[j]).norm()), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best
}
