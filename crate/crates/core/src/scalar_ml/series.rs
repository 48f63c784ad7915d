//! Guarded power-series evaluation of `E_{α,β}(z)` and `d/dz E_{α,β}(z)`.
//!
//! Every term is formed in log-magnitude/phase form, `|t_k| = exp(ln|c_k| + k ln|z|)`,
//! and summed with Neumaier compensation. The running error bound is
//! `ε Σ w_k |t_k|` with a per-term weight `w_k` covering the rounding in the
//! coefficient, the power and the phase. When that bound exceeds the accuracy
//! target, or the largest term dwarfs the result (cancellation), the series
//! is re-summed in MPFR arithmetic at a working precision sized from the
//! observed cancellation, escalating until the bound is met.

use std::f64::consts::LN_2;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rug::{Assign, Complex as MpComplex, Float};

use super::gamma::{ln_abs_gamma, recip_gamma};
use crate::error::{Error, Result};

/// Largest argument modulus accepted by the evaluator.
pub const Z_MAX: f64 = 50.0;
/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 10_000;

const TAIL_RUN: usize = 20;
const TAIL_REL: f64 = 1e-20;
const CANCELLATION_LIMIT: f64 = 1e6;
const TARGET_REL: f64 = 1e-13;
const ABS_FLOOR: f64 = 1e-30;
const MIN_PREC: u32 = 128;
const MAX_PREC: u32 = 8192;
const MAX_ROUNDS: usize = 8;

/// Parameters `(α, β)` of the two-parameter Mittag-Leffler function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    alpha: f64,
    beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParam(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !beta.is_finite() {
            return Err(Error::InvalidParam(format!("beta must be finite, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// How a value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMethod {
    /// Double precision, terms did not cancel.
    Series,
    /// Double precision, compensation carried the result.
    CompensatedSeries,
    /// Multi-precision re-summation.
    ExtendedPrecisionSeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub value: Complex64,
    /// Estimated bound on `|error| / |value|`; `+∞` when the term cap was hit
    /// or the value is exactly zero.
    pub est_rel_error: f64,
    pub method: EvalMethod,
    pub terms: usize,
    /// Term cap reached before the tail criterion was met.
    pub degraded: bool,
}

impl EvalResult {
    pub fn est_abs_error(&self) -> f64 {
        self.est_rel_error * self.value.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeriesKind {
    Value,
    Derivative,
}

struct F64Sum {
    value: Complex64,
    weighted_abs: f64,
    abs_sum: f64,
    max_term: f64,
    terms: usize,
    degraded: bool,
}

struct MpSum {
    prec: u32,
    value: Complex64,
    ln_abs_value: f64,
    ln_weighted: f64,
    terms: usize,
    degraded: bool,
}

struct MpTable {
    prec: u32,
    coeffs: Arc<Vec<Float>>,
}

/// Evaluator for one parameter pair. Holds multi-precision coefficient tables
/// so repeated evaluations (zero scans, operator sweeps) reuse `1/Γ(αk+β)`.
pub struct MittagLeffler {
    params: MlParams,
    max_terms: usize,
    tables: Mutex<Vec<MpTable>>,
}

impl std::fmt::Debug for MittagLeffler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MittagLeffler").field("params", &self.params).finish()
    }
}

impl Clone for MittagLeffler {
    fn clone(&self) -> Self {
        Self::new(self.params)
    }
}

fn validate_argument(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidParam(format!("argument must be finite, got {z}")));
    }
    let r = z.norm();
    if r > Z_MAX {
        return Err(Error::Domain { modulus: r, limit: Z_MAX });
    }
    Ok(())
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// `ln|x|` for an MPFR value without leaving the exponent range of f64.
fn mp_ln_abs(x: &Float) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let (m, e) = x.to_f64_exp();
    m.abs().ln() + e as f64 * LN_2
}

fn mp_ln_abs_complex(z: &MpComplex) -> f64 {
    let a = mp_ln_abs(z.real());
    let b = mp_ln_abs(z.imag());
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    let lo = a.min(b);
    hi + 0.5 * (1.0 + (2.0 * (lo - hi)).exp()).ln()
}

/// Running `ln Σ exp(x_i)`.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, acc: 0.0 }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.acc = self.acc * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.acc += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

impl MittagLeffler {
    pub fn new(params: MlParams) -> Self {
        Self { params, max_terms: MAX_TERMS, tables: Mutex::new(Vec::new()) }
    }

    #[cfg(test)]
    fn with_max_terms(mut self, max_terms: usize) -> Self {
        self.max_terms = max_terms;
        self
    }

    pub fn params(&self) -> MlParams {
        self.params
    }

    /// `E_{α,β}(z)`.
    pub fn eval(&self, z: Complex64) -> Result<EvalResult> {
        self.evaluate(SeriesKind::Value, z, TARGET_REL)
    }

    /// `d/dz E_{α,β}(z) = Σ_{k≥1} k z^{k-1} / Γ(αk+β)`.
    pub fn deriv(&self, z: Complex64) -> Result<EvalResult> {
        self.evaluate(SeriesKind::Derivative, z, TARGET_REL)
    }

    /// `E_{α,β}(z)` to a looser relative accuracy, clamped to
    /// `[1e-13, 1e-2]`. Cheaper where the series cancels heavily; callers
    /// that only need the phase (winding numbers) use this.
    pub fn eval_rough(&self, z: Complex64, target_rel: f64) -> Result<EvalResult> {
        self.evaluate(SeriesKind::Value, z, target_rel.clamp(TARGET_REL, 1e-2))
    }

    /// `(sign, ln|c_k|)` of the k-th coefficient of the requested series.
    fn log_coeff(&self, kind: SeriesKind, k: usize) -> (f64, f64) {
        let MlParams { alpha, beta } = self.params;
        match kind {
            SeriesKind::Value => {
                let (lg, s) = ln_abs_gamma(alpha * k as f64 + beta);
                (s, -lg)
            }
            SeriesKind::Derivative => {
                let j = k + 1;
                let (lg, s) = ln_abs_gamma(alpha * j as f64 + beta);
                (s, (j as f64).ln() - lg)
            }
        }
    }

    fn gamma_arg_signed(&self, kind: SeriesKind, k: usize) -> f64 {
        let j = match kind {
            SeriesKind::Value => k,
            SeriesKind::Derivative => k + 1,
        };
        self.params.alpha * j as f64 + self.params.beta
    }

    fn gamma_arg(&self, kind: SeriesKind, k: usize) -> f64 {
        self.gamma_arg_signed(kind, k).abs()
    }

    fn evaluate(&self, kind: SeriesKind, z: Complex64, target: f64) -> Result<EvalResult> {
        validate_argument(z)?;
        if z == Complex64::new(0.0, 0.0) {
            let value = Complex64::new(recip_gamma(self.gamma_arg_signed(kind, 0)), 0.0);
            let est = if value.re == 0.0 { 0.0 } else { 8.0 * f64::EPSILON };
            return Ok(EvalResult { value, est_rel_error: est, method: EvalMethod::Series, terms: 1, degraded: false });
        }

        let f64_sum = self.sum_f64(kind, z);
        if let Some(s) = &f64_sum {
            let mag = s.value.norm();
            let est = if mag > 0.0 {
                (f64::EPSILON * s.weighted_abs + 2.0 * f64::EPSILON * mag) / mag
            } else {
                f64::INFINITY
            };
            let cancellation = if mag > 0.0 { s.max_term / mag } else { f64::INFINITY };
            if s.degraded {
                return Ok(EvalResult {
                    value: s.value,
                    est_rel_error: f64::INFINITY,
                    method: EvalMethod::CompensatedSeries,
                    terms: s.terms,
                    degraded: true,
                });
            }
            if est <= target && cancellation <= CANCELLATION_LIMIT * (target / TARGET_REL) {
                let method = if s.abs_sum <= 2.0 * mag { EvalMethod::Series } else { EvalMethod::CompensatedSeries };
                return Ok(EvalResult { value: s.value, est_rel_error: est, method, terms: s.terms, degraded: false });
            }
        }

        // Initial working precision: enough bits to absorb the cancellation
        // seen in double precision plus the accuracy target.
        let target_bits = (-target.log2()).ceil() as u32 + 16;
        let mut prec = match &f64_sum {
            Some(s) => {
                let mag = s.value.norm().max(s.abs_sum * f64::EPSILON);
                let loss = (s.weighted_abs / mag).log2().max(0.0);
                MIN_PREC.max(loss.ceil() as u32 + target_bits)
            }
            None => MIN_PREC + target_bits,
        }
        .min(MAX_PREC);

        let mut last = None;
        for _ in 0..MAX_ROUNDS {
            let s = self.sum_mp(kind, z, prec)?;
            if s.ln_abs_value > f64::MAX.ln() {
                return Err(Error::Overflow);
            }
            let ln_est_abs = s.ln_weighted - s.prec as f64 * LN_2;
            let ln_rel = ln_est_abs - s.ln_abs_value;
            let done = s.degraded || ln_rel <= target.ln() || ln_est_abs <= ABS_FLOOR.ln() || s.prec >= MAX_PREC;
            if done {
                return Ok(Self::mp_result(&s, ln_rel));
            }
            if ln_rel > (1e-3f64).ln() {
                // The result is still rounding noise, so its magnitude says
                // little about how many bits are missing. Assume the value
                // is not far below 2^-32 of the largest terms; if it is, the
                // next round still adds at least 64 bits.
                let needed = (s.ln_weighted / LN_2).ceil().max(0.0) as u32 + target_bits + 32;
                prec = needed.max(s.prec + 64).min(MAX_PREC);
            } else {
                let deficit = (ln_rel - target.ln()) / LN_2;
                prec = (s.prec + deficit.ceil() as u32 + 32).min(MAX_PREC);
            }
            last = Some((s, ln_rel));
        }
        let (s, ln_rel) = last.expect("at least one round ran");
        Ok(Self::mp_result(&s, ln_rel))
    }

    fn mp_result(s: &MpSum, ln_rel: f64) -> EvalResult {
        EvalResult {
            value: s.value,
            est_rel_error: if s.degraded { f64::INFINITY } else { ln_rel.exp() },
            method: EvalMethod::ExtendedPrecisionSeries,
            terms: s.terms,
            degraded: s.degraded,
        }
    }

    /// Double-precision compensated sum. `None` when a term would overflow.
    fn sum_f64(&self, kind: SeriesKind, z: Complex64) -> Option<F64Sum> {
        let ln_r = z.norm().ln();
        let theta = z.arg();
        let (mut sr, mut cr, mut si, mut ci) = (0.0, 0.0, 0.0, 0.0);
        let mut weighted_abs = 0.0;
        let mut abs_sum = 0.0;
        let mut max_term: f64 = 0.0;
        let mut run = 0;
        let mut k = 0;
        let mut degraded = true;
        while k < self.max_terms {
            let (sign, lc) = self.log_coeff(kind, k);
            let mag = if sign == 0.0 {
                0.0
            } else {
                let ell = lc + k as f64 * ln_r;
                if ell > 700.0 {
                    return None;
                }
                ell.exp()
            };
            if mag > 0.0 {
                let phase = k as f64 * theta;
                let t = sign * mag;
                neumaier(&mut sr, &mut cr, t * phase.cos());
                neumaier(&mut si, &mut ci, t * phase.sin());
                let w = 6.0 + lc.abs() + k as f64 * (ln_r.abs() + theta.abs() + 2.0);
                weighted_abs += w * mag;
                abs_sum += mag;
                max_term = max_term.max(mag);
            }
            k += 1;
            let partial = Complex64::new(sr + cr, si + ci).norm();
            if k > 1 && mag < TAIL_REL * partial {
                run += 1;
                if run >= TAIL_RUN {
                    degraded = false;
                    break;
                }
            } else {
                run = 0;
            }
        }
        Some(F64Sum { value: Complex64::new(sr + cr, si + ci), weighted_abs, abs_sum, max_term, terms: k, degraded })
    }

    /// Coefficient table `1/Γ(αk+β)`, `k < len`, at precision `prec`.
    fn mp_coeffs(&self, prec: u32, len: usize) -> Arc<Vec<Float>> {
        let mut tables = self.tables.lock().expect("coefficient table lock poisoned");
        let idx = match tables.iter().position(|t| t.prec == prec) {
            Some(i) => i,
            None => {
                tables.push(MpTable { prec, coeffs: Arc::new(Vec::new()) });
                tables.len() - 1
            }
        };
        let entry = &mut tables[idx];
        if entry.coeffs.len() < len {
            let mut coeffs: Vec<Float> = entry.coeffs.as_ref().clone();
            let alpha = Float::with_val(prec, self.params.alpha);
            let beta = Float::with_val(prec, self.params.beta);
            for k in coeffs.len()..len {
                let x = Float::with_val(prec, &alpha * k as u32) + &beta;
                let c = if x.is_integer() && x <= 0 { Float::new(prec) } else { x.gamma().recip() };
                coeffs.push(c);
            }
            entry.coeffs = Arc::new(coeffs);
        }
        Arc::clone(&entry.coeffs)
    }

    fn sum_mp(&self, kind: SeriesKind, z: Complex64, prec: u32) -> Result<MpSum> {
        // Round precision up so nearby requests share a table.
        let prec = prec.div_ceil(64) * 64;
        let ln_r = z.norm().ln();
        let ln_tail = TAIL_REL.ln().min(-(prec as f64) * LN_2);
        let zc = MpComplex::with_val(prec, (z.re, z.im));
        let mut pow = MpComplex::with_val(prec, (1, 0));
        let mut sum = MpComplex::new(prec);
        let mut term = MpComplex::new(prec);

        let mut chunk = 256usize;
        let offset = usize::from(kind == SeriesKind::Derivative);
        let mut coeffs = self.mp_coeffs(prec, chunk + offset);
        let mut weighted = LogSum::new();
        let mut run = 0;
        let mut k = 0;
        let mut degraded = true;

        while k < self.max_terms {
            if k + offset >= coeffs.len() {
                while chunk <= k + offset {
                    chunk *= 2;
                }
                coeffs = self.mp_coeffs(prec, (chunk + offset).min(self.max_terms + 1));
            }
            let c = &coeffs[k + offset];
            term.assign(&pow * c);
            if kind == SeriesKind::Derivative {
                term *= (k + 1) as u32;
            }
            sum += &term;
            if kind == SeriesKind::Value || k + 1 < self.max_terms {
                pow *= &zc;
            }

            let (sign, lc) = self.log_coeff(kind, k);
            let ell = if sign == 0.0 { f64::NEG_INFINITY } else { lc + k as f64 * ln_r };
            let x = self.gamma_arg(kind, k);
            let w = k as f64 + 6.0 + x * (x + 2.0).ln();
            weighted.add(ell + w.ln());

            k += 1;
            if k > 1 && ell < ln_tail + mp_ln_abs_complex(&sum) {
                run += 1;
                if run >= TAIL_RUN {
                    degraded = false;
                    break;
                }
            } else {
                run = 0;
            }
        }

        let value = Complex64::new(sum.real().to_f64(), sum.imag().to_f64());
        Ok(MpSum {
            prec,
            value,
            ln_abs_value: mp_ln_abs_complex(&sum),
            ln_weighted: weighted.value(),
            terms: k,
            degraded,
        })
    }
}

/// One-shot evaluation of `E_{α,β}(z)`.
pub fn ml_eval(p: MlParams, z: Complex64) -> Result<EvalResult> {
    MittagLeffler::new(p).eval(z)
}

/// One-shot evaluation of `d/dz E_{α,β}(z)`.
pub fn ml_deriv(p: MlParams, z: Complex64) -> Result<EvalResult> {
    MittagLeffler::new(p).deriv(z)
}
