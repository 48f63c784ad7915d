//! The matrix Mittag-Leffler operator `E_{α,β}(t^α A)` for real `A`.
//!
//! Two evaluation paths:
//! - eigen: `V diag(E_{α,β}(t^α λ_i)) V⁻¹`, used when `A` is diagonalizable
//!   with a well-conditioned eigenvector matrix;
//! - series: `Σ (t^α A)^k / Γ(αk+β)` summed in MPFR at a precision that
//!   covers the worst term, doubled until two precisions agree.
//!
//! [`MlFamily`] fixes `(α, β, A)` and caches the eigendecomposition so
//! sweeps over `t` only pay for the scalar evaluations.

use num_complex::Complex64;
use rayon::prelude::*;
use rug::{Assign, Float};

use crate::error::{Error, Result};
use crate::matrix_ops::{
    check_square, eigen, eigenvalues_complex, inverse, max_norm, multiset_distance, sigma_min, to_complex,
    tol_singular, ComplexMatrix, EigenDecomp, RealMatrix,
};
use crate::scalar_ml::{ln_abs_gamma, MittagLeffler, MlParams, Z_MAX};

/// Imaginary residue tolerated (relative to `‖E‖_max`) before the eigen path
/// is distrusted.
pub const IMAG_RESIDUE_REL: f64 = 1e-9;
/// Paths disagreeing by more than this (max-norm, relative) raise a warning.
pub const PATH_AGREEMENT: f64 = 1e-7;
/// Series terms larger than this multiple of an unverified result raise a
/// warning.
pub const TERM_GROWTH_LIMIT: f64 = 1e8;

const SERIES_MAX_TERMS: usize = 10_000;
const SERIES_MIN_PREC: u32 = 128;
const SERIES_MAX_PREC: u32 = 8192;
const SERIES_AGREEMENT: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMethod {
    Eigen,
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AccuracyWarning {
    /// Eigen and series results differ by `diff` (max-norm, relative).
    PathDisagreement { diff: f64 },
    /// Largest series term over `‖result‖_max`.
    TermGrowth { ratio: f64 },
    /// The eigen path left an imaginary part of this relative size; the
    /// series result was used instead.
    ImaginaryResidue { relative: f64 },
    /// The series did not settle within the precision or term budget.
    SeriesUnconverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlOperator {
    pub params: MlParams,
    pub t: f64,
    pub a: RealMatrix,
    /// `E_{α,β}(t^α A)`.
    pub matrix: RealMatrix,
    pub method: OperatorMethod,
    pub warnings: Vec<AccuracyWarning>,
}

/// `E_{α,β}(t^α A)` for fixed `(α, β, A)` and varying `t`.
#[derive(Debug, Clone)]
pub struct MlFamily {
    params: MlParams,
    a: RealMatrix,
    eig: EigenDecomp,
    /// `(V, V⁻¹)` when the eigen path applies.
    basis: Option<(ComplexMatrix, ComplexMatrix)>,
    spectral_radius: f64,
    ml: MittagLeffler,
}

impl MlFamily {
    pub fn new(params: MlParams, a: RealMatrix) -> Result<Self> {
        check_square(&a)?;
        let eig = eigen(&a)?;
        let basis =
            if eig.diagonalizable { inverse(&eig.vectors).ok().map(|vinv| (eig.vectors.clone(), vinv)) } else { None };
        let spectral_radius = eig.values.iter().map(|l| l.norm()).fold(0.0, f64::max);
        Ok(Self { params, a, eig, basis, spectral_radius, ml: MittagLeffler::new(params) })
    }

    pub fn params(&self) -> MlParams {
        self.params
    }

    pub fn matrix_a(&self) -> &RealMatrix {
        &self.a
    }

    pub fn eigen(&self) -> &EigenDecomp {
        &self.eig
    }

    pub fn eigen_path_available(&self) -> bool {
        self.basis.is_some()
    }

    fn check_t(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParam(format!("t must be finite and non-negative, got {t}")));
        }
        let ta = t.powf(self.params.alpha());
        let radius = ta * self.spectral_radius;
        if radius > Z_MAX {
            return Err(Error::Domain { modulus: radius, limit: Z_MAX });
        }
        Ok(ta)
    }

    /// `E_{α,β}(t^α A)` by the eigen path when available, else the series.
    pub fn at(&self, t: f64) -> Result<MlOperator> {
        self.check_t(t)?;
        if self.basis.is_some() {
            match self.eigen_path(t) {
                Ok(matrix) => return Ok(self.operator(t, matrix, OperatorMethod::Eigen, Vec::new())),
                Err(Error::Convergence(_)) => {
                    let (matrix, mut warnings) = self.series_path(t)?;
                    let relative = self.imaginary_residue(t)?;
                    warnings.insert(0, AccuracyWarning::ImaginaryResidue { relative });
                    return Ok(self.operator(t, matrix, OperatorMethod::Series, warnings));
                }
                Err(e) => return Err(e),
            }
        }
        let (matrix, warnings) = self.series_path(t)?;
        Ok(self.operator(t, matrix, OperatorMethod::Series, warnings))
    }

    /// Computes both paths (when the eigen path applies) and records a
    /// warning if they disagree beyond [`PATH_AGREEMENT`].
    pub fn at_verified(&self, t: f64) -> Result<MlOperator> {
        let mut op = self.at(t)?;
        if op.method == OperatorMethod::Eigen {
            let (series, mut warnings) = self.series_path(t)?;
            let diff = max_norm(&(&series - &op.matrix)) / max_norm(&series).max(f64::MIN_POSITIVE);
            if diff > PATH_AGREEMENT {
                op.warnings.push(AccuracyWarning::PathDisagreement { diff });
            }
            op.warnings.append(&mut warnings);
        }
        Ok(op)
    }

    fn operator(
        &self,
        t: f64,
        matrix: RealMatrix,
        method: OperatorMethod,
        warnings: Vec<AccuracyWarning>,
    ) -> MlOperator {
        MlOperator { params: self.params, t, a: self.a.clone(), matrix, method, warnings }
    }

    fn complex_eigen_product(&self, t: f64) -> Result<ComplexMatrix> {
        let ta = self.check_t(t)?;
        let (v, vinv) = self
            .basis
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("matrix is not diagonalizable; eigen path unavailable".into()))?;
        let mut scaled = v.clone();
        for (j, lambda) in self.eig.values.iter().enumerate() {
            let e = self.ml.eval(lambda * ta)?.value;
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= e;
            }
        }
        Ok(scaled * vinv)
    }

    fn imaginary_residue(&self, t: f64) -> Result<f64> {
        let m = self.complex_eigen_product(t)?;
        let re = m.map(|z| z.re);
        let im = m.map(|z| z.im);
        Ok(max_norm(&im) / max_norm(&re).max(f64::MIN_POSITIVE))
    }

    /// `V diag(E(t^α λ)) V⁻¹`, with the imaginary residue checked and dropped.
    pub fn eigen_path(&self, t: f64) -> Result<RealMatrix> {
        let m = self.complex_eigen_product(t)?;
        let re = m.map(|z| z.re);
        let im = max_norm(&m.map(|z| z.im));
        let scale = max_norm(&re);
        if im > IMAG_RESIDUE_REL * scale {
            return Err(Error::Convergence(format!(
                "eigen path left imaginary residue {im:e} against magnitude {scale:e}"
            )));
        }
        Ok(re)
    }

    /// `Σ (t^α A)^k / Γ(αk+β)` in MPFR.
    pub fn series_path(&self, t: f64) -> Result<(RealMatrix, Vec<AccuracyWarning>)> {
        let ta = self.check_t(t)?;
        let x = &self.a * ta;
        series_matrix(self.params, &x)
    }
}

/// `ln ‖X^k / Γ(αk+β)‖_max` for successive `k`, from powers renormalised in
/// double precision; stops once the terms have fallen 60 e-folds below
/// their peak. Returns the profile and the peak index.
fn term_profile(params: MlParams, x: &RealMatrix) -> (Vec<f64>, usize) {
    let n = x.nrows();
    let mut power = RealMatrix::identity(n, n);
    let mut ln_scale = 0.0;
    let mut profile = Vec::new();
    let mut peak = 0;
    for k in 0..=SERIES_MAX_TERMS {
        let (lg, s) = ln_abs_gamma(params.alpha() * k as f64 + params.beta());
        let norm = max_norm(&power);
        let ln_term = if s == 0.0 || norm == 0.0 { f64::NEG_INFINITY } else { ln_scale + norm.ln() - lg };
        profile.push(ln_term);
        if ln_term > profile[peak] {
            peak = k;
        }
        if norm == 0.0 || (k > peak + 8 && ln_term < profile[peak] - 60.0) {
            break;
        }
        power = &power * x;
        let m = max_norm(&power);
        if m > 0.0 {
            power /= m;
            ln_scale += m.ln();
        }
    }
    (profile, peak)
}

struct SeriesSum {
    value: RealMatrix,
    max_term: f64,
    converged: bool,
}

/// Sums the series at `prec` bits. Terminates after `TAIL_RUN` consecutive
/// nonzero terms below `2^-prec` of both the running sum and the largest
/// term, once past the peak.
fn series_at_prec(params: MlParams, x: &RealMatrix, prec: u32, peak_k: usize) -> SeriesSum {
    const TAIL_RUN: usize = 20;
    let n = x.nrows();
    let xm: Vec<Float> = x.iter().map(|&v| Float::with_val(prec, v)).collect();
    // Column-major, matching nalgebra's storage order.
    let idx = |i: usize, j: usize| i + j * n;
    let mut power: Vec<Float> = (0..n * n).map(|k| Float::with_val(prec, u8::from(k % (n + 1) == 0))).collect();
    let mut sum: Vec<Float> = (0..n * n).map(|_| Float::new(prec)).collect();
    let alpha = Float::with_val(prec, params.alpha());
    let beta = Float::with_val(prec, params.beta());
    let eps = (-(prec as f64)).exp2();
    let mut max_term: f64 = 0.0;
    let mut run = 0;
    let mut tmp = Float::new(prec);
    for k in 0..=SERIES_MAX_TERMS {
        let arg = Float::with_val(prec, &alpha * k as u32) + &beta;
        let pole = arg.is_integer() && arg <= 0;
        if !pole {
            let c = arg.gamma().recip();
            let mut term_norm: f64 = 0.0;
            for (s, p) in sum.iter_mut().zip(&power) {
                tmp.assign(p * &c);
                term_norm = term_norm.max(tmp.to_f64().abs());
                *s += &tmp;
            }
            max_term = max_term.max(term_norm);
            if k > peak_k {
                let sum_norm = sum.iter().map(|s| s.to_f64().abs()).fold(0.0, f64::max);
                if term_norm <= eps * sum_norm.max(eps * max_term) {
                    run += 1;
                } else {
                    run = 0;
                }
                if run >= TAIL_RUN {
                    let value = RealMatrix::from_iterator(n, n, sum.iter().map(Float::to_f64));
                    return SeriesSum { value, max_term, converged: true };
                }
            }
        }
        // power ← power · X
        let mut next: Vec<Float> = (0..n * n).map(|_| Float::new(prec)).collect();
        for i in 0..n {
            for j in 0..n {
                let acc = &mut next[idx(i, j)];
                for l in 0..n {
                    tmp.assign(&power[idx(i, l)] * &xm[idx(l, j)]);
                    *acc += &tmp;
                }
            }
        }
        power = next;
        if power.iter().all(Float::is_zero) {
            let value = RealMatrix::from_iterator(n, n, sum.iter().map(Float::to_f64));
            return SeriesSum { value, max_term, converged: true };
        }
    }
    let value = RealMatrix::from_iterator(n, n, sum.iter().map(Float::to_f64));
    SeriesSum { value, max_term, converged: false }
}

/// `E_{α,β}(X)` by direct summation in MPFR.
pub fn series_matrix(params: MlParams, x: &RealMatrix) -> Result<(RealMatrix, Vec<AccuracyWarning>)> {
    check_square(x)?;
    let (profile, peak_k) = term_profile(params, x);
    let ln_peak = profile[peak_k].max(0.0);
    if ln_peak > 700.0 {
        return Err(Error::Overflow);
    }
    let mut prec = (SERIES_MIN_PREC + (ln_peak / std::f64::consts::LN_2).ceil() as u32).div_ceil(64) * 64;
    let mut prev = series_at_prec(params, x, prec, peak_k);
    let mut warnings = Vec::new();
    loop {
        let next_prec = (prec + 64).min(SERIES_MAX_PREC);
        let cur = series_at_prec(params, x, next_prec, peak_k);
        let scale = max_norm(&cur.value);
        let diff = max_norm(&(&cur.value - &prev.value));
        let settled = cur.converged && diff <= SERIES_AGREEMENT * scale.max(f64::MIN_POSITIVE);
        if settled || next_prec >= SERIES_MAX_PREC {
            // Growth only costs accuracy when the precision check failed.
            if !settled {
                warnings.push(AccuracyWarning::SeriesUnconverged);
                if cur.max_term > TERM_GROWTH_LIMIT * scale {
                    warnings.push(AccuracyWarning::TermGrowth { ratio: cur.max_term / scale.max(f64::MIN_POSITIVE) });
                }
            }
            return Ok((cur.value, warnings));
        }
        prec = (2 * next_prec).min(SERIES_MAX_PREC);
        prev = cur;
    }
}

/// `E_{α,β}(t^α A)`.
pub fn ml_matrix(params: MlParams, t: f64, a: &RealMatrix) -> Result<MlOperator> {
    MlFamily::new(params, a.clone())?.at(t)
}

/// Eigenvalues `λ_i` of `A` paired with `E_{α,β}(t^α λ_i)`, together with the
/// eigenvalues of the operator itself.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueMap {
    pub pairs: Vec<(Complex64, Complex64)>,
    pub operator_eigenvalues: Vec<Complex64>,
    /// Multiset distance between the mapped values and the operator's
    /// eigenvalues.
    pub mismatch: f64,
}

pub fn eigenvalue_map_check(params: MlParams, t: f64, a: &RealMatrix) -> Result<EigenvalueMap> {
    let family = MlFamily::new(params, a.clone())?;
    if !family.eig.diagonalizable {
        return Err(Error::InvalidParam("eigenvalue map requires a diagonalizable matrix".into()));
    }
    let ta = family.check_t(t)?;
    let op = family.at(t)?;
    let pairs =
        family.eig.values.iter().map(|&l| Ok((l, family.ml.eval(l * ta)?.value))).collect::<Result<Vec<_>>>()?;
    let operator_eigenvalues = eigenvalues_complex(&to_complex(&op.matrix))?;
    let mapped: Vec<Complex64> = pairs.iter().map(|p| p.1).collect();
    let mismatch = multiset_distance(&mapped, &operator_eigenvalues);
    Ok(EigenvalueMap { pairs, operator_eigenvalues, mismatch })
}

/// An eigenvalue/zero pair whose arguments match, with its critical time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPair {
    pub eigenvalue: Complex64,
    pub zero: Complex64,
    pub t_critical: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertibilityReport {
    pub t: f64,
    pub det_value: Complex64,
    pub sigma_min: f64,
    pub tol_singular: f64,
    pub invertible: bool,
    /// Of the supplied critical pairs, the one whose time is closest to `t`.
    pub nearest_critical: Option<CriticalPair>,
}

/// Invertibility of `E_{α,β}(t^α A)` across a grid, reported in increasing `t`.
pub fn invertibility_scan(
    params: MlParams,
    a: &RealMatrix,
    t_grid: &[f64],
    criticals: &[CriticalPair],
) -> Result<Vec<InvertibilityReport>> {
    let family = MlFamily::new(params, a.clone())?;
    let mut grid = t_grid.to_vec();
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    grid.par_iter().map(|&t| family.invertibility(t, criticals)).collect()
}

impl MlFamily {
    pub fn invertibility(&self, t: f64, criticals: &[CriticalPair]) -> Result<InvertibilityReport> {
        let m = self.at(t)?.matrix;
        let det_value = Complex64::new(crate::matrix_ops::det(&m)?, 0.0);
        let smin = sigma_min(&m)?;
        let tol = tol_singular(&m);
        let nearest_critical = criticals
            .iter()
            .min_by(|p, q| (p.t_critical - t).abs().partial_cmp(&(q.t_critical - t).abs()).unwrap())
            .copied();
        Ok(InvertibilityReport {
            t,
            det_value,
            sigma_min: smin,
            tol_singular: tol,
            invertible: smin > tol,
            nearest_critical,
        })
    }
}
