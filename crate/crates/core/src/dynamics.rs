//! Trajectories of `D^α x = A x`, `0 < α < 1`, and their intersections.
//!
//! The solution is `u(t; x0) = E_{α,1}(t^α A) x0`. Everything here is built
//! from that operator and from `E_{α,0}(t^α A)`, whose product with `x0`
//! is `t · u'(t)`:
//!
//! * same-time intersections (the operator loses rank at a critical time),
//!   including collapse onto the origin;
//! * distinct-time intersections through the inverse curve
//!   `γ_{x0}(t) = E_{α,1}(t^α A)^{-1} x0`;
//! * multiple points, where the velocity vanishes.
//!
//! Critical times come from argument matches between eigenvalues of `A` and
//! zeros of `E_{α,1}` (or `E_{α,0}`) up to a modulus bound, so every "none
//! found" answer is relative to that bound.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix_ops::{
    check_square, image_basis, kernel_basis, max_norm, sigma_min, tol_singular, RealMatrix, RealVector, SubspaceBasis,
};
use crate::ml_operator::{CriticalPair, MlFamily};
use crate::ml_zeros::{MlZero, ZeroTable};
use crate::scalar_ml::{caputo_l1, MlParams, Z_MAX};

/// Step of the L1 residual grid.
pub const RESIDUAL_STEP: f64 = 1e-3;
/// Window on which the L1 residual is measured.
pub const RESIDUAL_WINDOW: (f64, f64) = (0.5, 2.0);
/// Half-width of the band around `|arg| = απ/2` where unmatched eigenvalues
/// are flagged.
pub const SECTOR_BAND: f64 = 0.05;
/// Default coarse grid size per axis for distinct-time searches.
pub const DEFAULT_GRID: usize = 200;
/// Minimum `|sin|` of the angle between the two branches at a node.
pub const MIN_CROSSING_SINE: f64 = 1e-2;

const LM_MAX_ITER: usize = 80;
const LM_MAX_SEEDS: usize = 256;
const CROSSING_SAMPLES: usize = 2000;
const CUSP_COSINE: f64 = -0.5;

/// Thresholds shared by the intersection queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Eigenvalue/zero argument match, radians.
    pub angular: f64,
    /// Kernel, image and membership decisions (relative).
    pub kernel: f64,
    /// Collapse onto the origin and vanishing velocity (relative).
    pub collapse: f64,
    /// Round trips through the inverse operator (relative to `1 + ‖x‖`).
    pub round_trip: f64,
    /// Meeting residual for distinct-time intersections.
    pub eidt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { angular: 1e-6, kernel: 1e-6, collapse: 1e-5, round_trip: 1e-7, eidt: 1e-6 }
    }
}

impl Tolerances {
    /// Every threshold multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            angular: self.angular * factor,
            kernel: self.kernel * factor,
            collapse: self.collapse * factor,
            round_trip: self.round_trip * factor,
            eidt: self.eidt * factor,
        }
    }
}

/// `D^α x = A x` with `0 < α < 1`.
#[derive(Debug, Clone)]
pub struct FractionalSystem {
    alpha: f64,
    a: RealMatrix,
    tol: Tolerances,
    flow: MlFamily,
    rate: MlFamily,
}

impl FractionalSystem {
    pub fn new(alpha: f64, a: RealMatrix) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParam(format!("alpha must lie strictly inside (0, 1), got {alpha}")));
        }
        check_square(&a)?;
        let flow = MlFamily::new(MlParams::new(alpha, 1.0)?, a.clone())?;
        let rate = MlFamily::new(MlParams::new(alpha, 0.0)?, a.clone())?;
        Ok(Self { alpha, a, tol: Tolerances::default(), flow, rate })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.flow.eigen().values
    }

    pub fn flow_family(&self) -> &MlFamily {
        &self.flow
    }

    /// `E_{α,1}(t^α A)`; exactly the identity at `t = 0`.
    pub fn operator(&self, t: f64) -> Result<RealMatrix> {
        if t == 0.0 {
            return Ok(RealMatrix::identity(self.dim(), self.dim()));
        }
        Ok(self.flow.at(t)?.matrix)
    }

    /// `E_{α,0}(t^α A)`.
    pub fn rate_operator(&self, t: f64) -> Result<RealMatrix> {
        if t == 0.0 {
            return Ok(RealMatrix::zeros(self.dim(), self.dim()));
        }
        Ok(self.rate.at(t)?.matrix)
    }

    /// `u(t; x0)`.
    pub fn propagate(&self, x0: &RealVector, t: f64) -> Result<RealVector> {
        self.check_vector(x0)?;
        Ok(self.operator(t)? * x0)
    }

    /// `u'(t; x0) = E_{α,0}(t^α A) x0 / t`.
    pub fn velocity(&self, x0: &RealVector, t: f64) -> Result<RealVector> {
        self.check_vector(x0)?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParam(format!("velocity needs t > 0, got {t}")));
        }
        Ok(self.rate_operator(t)? * x0 / t)
    }

    fn check_vector(&self, x: &RealVector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "vector has length {}, system has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("vector entries must be finite".into()));
        }
        Ok(())
    }
}

/// `u(t; x0)` sampled on a grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub system: FractionalSystem,
    pub x0: RealVector,
    pub samples: Vec<(f64, RealVector)>,
}

impl Trajectory {
    /// L1 residual of the trajectory's IVP on [`RESIDUAL_WINDOW`].
    pub fn ivp_residual(&self) -> Result<IvpResidual> {
        ivp_residual(&self.system, &self.x0, RESIDUAL_WINDOW, RESIDUAL_STEP)
    }
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Grid("empty time grid".into()));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Grid("times must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("times must be strictly increasing".into()));
    }
    Ok(())
}

fn states(sys: &FractionalSystem, x0: &RealVector, grid: &[f64]) -> Result<Vec<RealVector>> {
    grid.par_iter().map(|&t| sys.propagate(x0, t)).collect()
}

pub fn solve_trajectory(sys: &FractionalSystem, x0: &RealVector, t_grid: &[f64]) -> Result<Trajectory> {
    sys.check_vector(x0)?;
    check_grid(t_grid)?;
    let xs = states(sys, x0, t_grid)?;
    Ok(Trajectory { system: sys.clone(), x0: x0.clone(), samples: t_grid.iter().copied().zip(xs).collect() })
}

/// How well sampled states satisfy `D^α x = A x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvpResidual {
    /// `max ‖D^α x − A x‖ / max ‖A x‖` over the window.
    pub relative: f64,
    pub max_defect: f64,
    pub max_rhs: f64,
}

/// Compares the L1 Caputo derivative of `u(·; x0)` (grid `t_j = j h` from 0)
/// with `A u` on `window`.
pub fn ivp_residual(sys: &FractionalSystem, x0: &RealVector, window: (f64, f64), h: f64) -> Result<IvpResidual> {
    sys.check_vector(x0)?;
    if !(h > 0.0 && window.0 >= 0.0 && window.1 > window.0) {
        return Err(Error::Grid(format!("bad residual window {window:?} or step {h}")));
    }
    let n = (window.1 / h).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
    let xs = states(sys, x0, &grid)?;
    let samples: Vec<(f64, Vec<f64>)> = grid.iter().zip(&xs).map(|(&t, x)| (t, x.as_slice().to_vec())).collect();
    let derivative = caputo_l1(&samples, sys.alpha)?;
    let (mut max_defect, mut max_rhs) = (0.0f64, 0.0f64);
    for ((t, d), x) in derivative.iter().zip(&xs[1..]) {
        if *t < window.0 - 1e-12 || *t > window.1 + 1e-12 {
            continue;
        }
        let rhs = &sys.a * x;
        let defect = (RealVector::from_column_slice(d) - &rhs).norm();
        max_defect = max_defect.max(defect);
        max_rhs = max_rhs.max(rhs.norm());
    }
    let relative = if max_defect == 0.0 { 0.0 } else { max_defect / max_rhs.max(f64::MIN_POSITIVE) };
    Ok(IvpResidual { relative, max_defect, max_rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// No eigenvalue argument matches a zero argument: the operator is
    /// invertible for every `t`.
    TypeI,
    /// Some eigenvalue lies on a zero's ray: the operator is singular at the
    /// associated critical time.
    TypeII,
}

/// An eigenvalue `λ` on the ray of a zero `ζ`, so `T^α λ = ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalRay {
    pub eigenvalue: Complex64,
    pub zero: MlZero,
    /// `T = (|ζ| / |λ|)^{1/α}`.
    pub t_critical: f64,
    /// `|arg λ − arg ζ|`, wrapped to `[0, π]`.
    pub arg_mismatch: f64,
}

impl From<&CriticalRay> for CriticalPair {
    fn from(r: &CriticalRay) -> Self {
        CriticalPair { eigenvalue: r.eigenvalue, zero: r.zero.location, t_critical: r.t_critical }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub criticals: Vec<CriticalRay>,
    /// Zeros were enumerated up to this modulus.
    pub search_bound: f64,
    /// Unmatched eigenvalues with `||arg λ| − απ/2| < SECTOR_BAND`, where zero
    /// arguments accumulate beyond any finite table.
    pub asymptotic_flags: Vec<Complex64>,
}

/// `min(20, 60^α)`: about ten conjugate pairs of zeros at small `α`, where
/// zero tables get expensive, and modulus 20 otherwise.
pub fn default_search_bound(alpha: f64) -> f64 {
    20f64.min(60f64.powf(alpha))
}

fn arg_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn check_bound(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= Z_MAX) {
        return Err(Error::InvalidParam(format!("search bound must lie in (0, {Z_MAX}], got {r}")));
    }
    Ok(())
}

fn matched_rays(sys: &FractionalSystem, beta: f64, r: f64, angular_tol: f64) -> Result<Vec<CriticalRay>> {
    check_bound(r)?;
    let table = ZeroTable::shared(MlParams::new(sys.alpha, beta)?, r)?;
    let mut rays = Vec::new();
    for &lambda in sys.eigenvalues() {
        if lambda.norm() == 0.0 {
            continue;
        }
        for zero in &table.zeros {
            let arg_mismatch = arg_distance(lambda.arg(), zero.location.arg());
            if arg_mismatch > angular_tol {
                continue;
            }
            let t_critical = (zero.location.norm() / lambda.norm()).powf(1.0 / sys.alpha);
            if t_critical.is_finite() && t_critical > 0.0 {
                rays.push(CriticalRay { eigenvalue: lambda, zero: *zero, t_critical, arg_mismatch });
            }
        }
    }
    rays.sort_by(|p, q| {
        p.t_critical
            .total_cmp(&q.t_critical)
            .then(p.eigenvalue.im.total_cmp(&q.eigenvalue.im).reverse())
            .then(p.eigenvalue.re.total_cmp(&q.eigenvalue.re))
    });
    Ok(rays)
}

/// Critical rays of `E_{α,1}` up to modulus `r`, matched at the system's
/// angular tolerance.
pub fn critical_times(sys: &FractionalSystem, r: f64) -> Result<Vec<CriticalRay>> {
    matched_rays(sys, 1.0, r, sys.tol.angular)
}

pub fn classify(sys: &FractionalSystem, r: f64, angular_tol: f64) -> Result<Classification> {
    let criticals = matched_rays(sys, 1.0, r, angular_tol)?;
    let edge = sys.alpha * FRAC_PI_2;
    let asymptotic_flags = sys
        .eigenvalues()
        .iter()
        .filter(|l| l.norm() > 0.0 && (l.arg().abs() - edge).abs() < SECTOR_BAND)
        .filter(|l| !criticals.iter().any(|c| c.eigenvalue == **l))
        .copied()
        .collect();
    let verdict = if criticals.is_empty() { Verdict::TypeI } else { Verdict::TypeII };
    Ok(Classification { verdict, criticals, search_bound: r, asymptotic_flags })
}

/// A trajectory passing through the origin at a critical time.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCrossing {
    pub ray: CriticalRay,
    /// Distance from `x0` to `ker E_{α,1}(T^α A)`.
    pub kernel_residual: f64,
    /// `‖u(T; x0)‖`.
    pub state_norm: f64,
}

fn kernel_distance(m: &RealMatrix, x: &RealVector, tol: f64) -> Result<f64> {
    Ok(kernel_basis(m, tol)?.distance(x))
}

/// The first critical time at which `u(·; x0)` reaches the origin.
pub fn zero_intersection(sys: &FractionalSystem, x0: &RealVector, r: f64) -> Result<Option<ZeroCrossing>> {
    sys.check_vector(x0)?;
    let scale = x0.norm();
    if scale == 0.0 {
        return Ok(None);
    }
    for ray in critical_times(sys, r)? {
        let m = sys.operator(ray.t_critical)?;
        let kernel_residual = kernel_distance(&m, x0, sys.tol.kernel)?;
        if kernel_residual > sys.tol.kernel * scale {
            continue;
        }
        let state_norm = (&m * x0).norm();
        if state_norm <= sys.tol.collapse * scale {
            return Ok(Some(ZeroCrossing { ray, kernel_residual, state_norm }));
        }
    }
    Ok(None)
}

/// `γ_{x0}(t) = E_{α,1}(t^α A)^{-1} x0` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseCurve {
    pub x0: RealVector,
    pub samples: Vec<(f64, RealVector)>,
    /// `max ‖u(t; γ(t)) − x0‖ / (1 + ‖x0‖)`.
    pub max_round_trip: f64,
}

fn solve_checked(m: &RealMatrix, b: &RealVector) -> Result<RealVector> {
    crate::matrix_ops::solve(m, b)
}

pub fn inverse_curve(sys: &FractionalSystem, x0: &RealVector, t_grid: &[f64]) -> Result<InverseCurve> {
    sys.check_vector(x0)?;
    check_grid(t_grid)?;
    let rows = t_grid
        .par_iter()
        .map(|&t| {
            let m = sys.operator(t)?;
            let g = solve_checked(&m, x0)?;
            let rt = (&m * &g - x0).norm() / (1.0 + x0.norm());
            Ok((t, g, rt))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_round_trip = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let samples = rows.into_iter().map(|(t, g, _)| (t, g)).collect();
    Ok(InverseCurve { x0: x0.clone(), samples, max_round_trip })
}

fn relative_gap(a: &RealVector, b: &RealVector) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// `γ_q` for `q = u(T̃; x0)`, computed directly and as `E(T̃^α A) γ_{x0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedCurve {
    pub t_tilde: f64,
    pub q: RealVector,
    /// `γ_q(t)` from `q`.
    pub direct: InverseCurve,
    /// `E_{α,1}(T̃^α A) γ_{x0}(t)` on the same grid.
    pub mapped: Vec<RealVector>,
    /// Largest relative difference between the two.
    pub max_discrepancy: f64,
}

pub fn evolve_inverse_curve(
    sys: &FractionalSystem,
    x0: &RealVector,
    t_tilde: f64,
    t_grid: &[f64],
) -> Result<EvolvedCurve> {
    let e_tilde = sys.operator(t_tilde)?;
    let q = &e_tilde * x0;
    let direct = inverse_curve(sys, &q, t_grid)?;
    let base = inverse_curve(sys, x0, t_grid)?;
    let mapped: Vec<RealVector> = base.samples.iter().map(|(_, g)| &e_tilde * g).collect();
    let max_discrepancy = direct.samples.iter().zip(&mapped).map(|((_, a), b)| relative_gap(a, b)).fold(0.0, f64::max);
    Ok(EvolvedCurve { t_tilde, q, direct, mapped, max_discrepancy })
}

/// `base + span(directions)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSet {
    pub base: RealVector,
    pub directions: SubspaceBasis<f64>,
}

impl AffineSet {
    pub fn dim(&self) -> usize {
        self.directions.dim()
    }

    /// `base + Σ c_i d_i`.
    pub fn point(&self, coeffs: &[f64]) -> RealVector {
        let mut y = self.base.clone();
        for (c, d) in coeffs.iter().zip(&self.directions.vectors) {
            y += d * *c;
        }
        y
    }

    /// Euclidean distance from `y` to the set.
    pub fn distance(&self, y: &RealVector) -> f64 {
        self.directions.distance(&(y - &self.base))
    }
}

/// Initial states whose trajectories pass through `p` at time `T`.
#[derive(Debug, Clone, PartialEq)]
pub enum EistPreimage {
    /// The operator is invertible at `T`: exactly one trajectory.
    Unique(RealVector),
    /// The operator is singular and `p` is in its image.
    Fiber(AffineSet),
}

/// `{x0 : E_{α,1}(T^α A) x0 = x}`, `Err(residual)` when `x` is outside the
/// image.
fn preimage(sys: &FractionalSystem, x: &RealVector, t: f64) -> Result<std::result::Result<AffineSet, f64>> {
    sys.check_vector(x)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParam(format!("time must be positive, got {t}")));
    }
    let m = sys.operator(t)?;
    let n = sys.dim();
    if sigma_min(&m)? > tol_singular(&m) {
        let base = solve_checked(&m, x)?;
        let directions = SubspaceBasis { vectors: Vec::new(), tol_used: sys.tol.kernel };
        return Ok(Ok(AffineSet { base, directions }));
    }
    let tol = sys.tol.kernel;
    let residual = image_basis(&m, tol)?.distance(x);
    if residual > tol * (1.0 + x.norm()) {
        return Ok(Err(residual));
    }
    let threshold = tol * max_norm(&m).max(1.0);
    let svd = m.clone().svd(true, true);
    let base = svd.solve(x, threshold).map_err(|e| Error::Convergence(e.into()))?;
    let directions = kernel_basis(&m, tol)?;
    debug_assert_eq!(base.len(), n);
    Ok(Ok(AffineSet { base, directions }))
}

/// Same-time preimage of `p` at time `T`.
pub fn eist_preimage(sys: &FractionalSystem, p: &RealVector, t: f64) -> Result<EistPreimage> {
    match preimage(sys, p, t)? {
        Ok(set) if set.dim() == 0 => Ok(EistPreimage::Unique(set.base)),
        Ok(set) => Ok(EistPreimage::Fiber(set)),
        Err(residual) => Err(Error::NotReachable { residual }),
    }
}

/// `H_{x,T}`: all initial states mapped to `x` at time `T`; `None` when `x`
/// is not reachable. A singleton when the operator is invertible.
pub fn h_set(sys: &FractionalSystem, x: &RealVector, t: f64) -> Result<Option<AffineSet>> {
    Ok(preimage(sys, x, t)?.ok())
}

/// `u(T; x0) = u(t; x)` with `T ≠ t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EidtWitness {
    /// Time along the trajectory of `x0`.
    pub t_x0: f64,
    /// Time along the trajectory of `x`.
    pub t_x: f64,
    pub meeting_point: RealVector,
    /// `‖u(T; x0) − u(t; x)‖`.
    pub residual: f64,
}

/// Minimizes `‖f(s1, s2)‖` over the box, with `s = time^α` so that the
/// `t^α` behaviour at 0 becomes linear. Levenberg-Marquardt with a
/// central-difference Jacobian.
struct Polisher<F: Fn(f64, f64) -> Result<RealVector>> {
    f: F,
    lo: [f64; 2],
    hi: [f64; 2],
    alpha: f64,
}

impl<F: Fn(f64, f64) -> Result<RealVector>> Polisher<F> {
    fn eval(&self, s: [f64; 2]) -> Result<RealVector> {
        let inv = 1.0 / self.alpha;
        (self.f)(s[0].powf(inv), s[1].powf(inv))
    }

    fn clamp(&self, s: [f64; 2]) -> [f64; 2] {
        [s[0].clamp(self.lo[0], self.hi[0]), s[1].clamp(self.lo[1], self.hi[1])]
    }

    /// Returns the final times and residual vector.
    fn run(&self, times: [f64; 2]) -> Result<([f64; 2], RealVector)> {
        let mut s = self.clamp([times[0].powf(self.alpha), times[1].powf(self.alpha)]);
        let mut r = self.eval(s)?;
        let mut mu = 1e-3;
        for _ in 0..LM_MAX_ITER {
            let mut jac = nalgebra::DMatrix::<f64>::zeros(r.len(), 2);
            for k in 0..2 {
                let step = 1e-7 * s[k].abs().max(1e-3);
                let (mut up, mut dn) = (s, s);
                up[k] = (s[k] + step).min(self.hi[k]);
                dn[k] = (s[k] - step).max(self.lo[k]);
                let col = (self.eval(up)? - self.eval(dn)?) / (up[k] - dn[k]);
                jac.set_column(k, &col);
            }
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * &r;
            let mut improved = false;
            for _ in 0..12 {
                let mut lhs = jtj.clone();
                for k in 0..2 {
                    lhs[(k, k)] += mu * jtj[(k, k)].max(1e-12);
                }
                let Some(delta) = lhs.lu().solve(&(-&g)) else { break };
                let cand = self.clamp([s[0] + delta[0], s[1] + delta[1]]);
                let rc = self.eval(cand)?;
                if rc.norm() < r.norm() {
                    let moved = (cand[0] - s[0]).abs() + (cand[1] - s[1]).abs();
                    s = cand;
                    r = rc;
                    mu = (mu / 3.0).max(1e-12);
                    improved = moved > 1e-15 * (1.0 + s[0].abs() + s[1].abs());
                    break;
                }
                mu *= 4.0;
            }
            if !improved || r.norm() == 0.0 {
                break;
            }
        }
        let inv = 1.0 / self.alpha;
        Ok(([s[0].powf(inv), s[1].powf(inv)], r))
    }
}

fn polisher<F: Fn(f64, f64) -> Result<RealVector>>(alpha: f64, w0: (f64, f64), w1: (f64, f64), f: F) -> Polisher<F> {
    Polisher { f, lo: [w0.0.powf(alpha), w1.0.powf(alpha)], hi: [w0.1.powf(alpha), w1.1.powf(alpha)], alpha }
}

fn check_window(w: (f64, f64)) -> Result<()> {
    if !(w.0 >= 0.0 && w.1 > w.0 && w.1.is_finite()) {
        return Err(Error::Grid(format!("bad time window {w:?}")));
    }
    Ok(())
}

/// Grid cells `(i, j)` whose value is no larger than any of their eight
/// neighbours, smallest value first.
fn local_minima(d: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let (n0, n1) = (d.len(), d.first().map_or(0, Vec::len));
    let mut out = Vec::new();
    for i in 0..n0 {
        for j in 0..n1 {
            let v = d[i][j];
            let is_min = (i.saturating_sub(1)..=(i + 1).min(n0 - 1))
                .all(|a| (j.saturating_sub(1)..=(j + 1).min(n1 - 1)).all(|b| d[a][b] >= v));
            if is_min && v.is_finite() {
                out.push((i, j));
            }
        }
    }
    out.sort_by(|&(a, b), &(c, e)| d[a][b].total_cmp(&d[c][e]));
    out
}

/// All distinct-time meetings of `u(·; x0)` over `window_x0` with `u(·; x)`
/// over `window_x`, sorted by `(T, t)`.
///
/// A `grid × grid` table of distances seeds a polish from every local
/// minimum; pairs closer than `10⁻³` of the larger window span in time are
/// discarded as the trivial same-time family.
pub fn eidt_witnesses(
    sys: &FractionalSystem,
    x0: &RealVector,
    x: &RealVector,
    window_x0: (f64, f64),
    window_x: (f64, f64),
    grid: usize,
) -> Result<Vec<EidtWitness>> {
    sys.check_vector(x0)?;
    sys.check_vector(x)?;
    check_window(window_x0)?;
    check_window(window_x)?;
    let grid = grid.max(2);
    let min_gap = 1e-3 * (window_x0.1 - window_x0.0).max(window_x.1 - window_x.0);
    let g0 = linspace(window_x0.0, window_x0.1, grid);
    let g1 = linspace(window_x.0, window_x.1, grid);
    let u0 = states(sys, x0, &g0)?;
    let u1 = states(sys, x, &g1)?;
    let dist: Vec<Vec<f64>> = u0.par_iter().map(|a| u1.iter().map(|b| (a - b).norm()).collect()).collect();
    let seeds: Vec<(usize, usize)> =
        local_minima(&dist).into_iter().filter(|&(i, j)| (g0[i] - g1[j]).abs() > min_gap).take(LM_MAX_SEEDS).collect();
    let pol = polisher(sys.alpha, window_x0, window_x, |a, b| Ok(sys.propagate(x0, a)? - sys.propagate(x, b)?));
    let mut found: Vec<EidtWitness> = Vec::new();
    for (i, j) in seeds {
        let ([ta, tb], r) = pol.run([g0[i], g1[j]])?;
        let meeting_point = sys.propagate(x0, ta)?;
        let residual = r.norm();
        if residual > sys.tol.eidt * (1.0 + meeting_point.norm()) || (ta - tb).abs() <= min_gap {
            continue;
        }
        if found.iter().any(|w| (w.t_x0 - ta).abs() <= 1e-6 * (1.0 + ta) && (w.t_x - tb).abs() <= 1e-6 * (1.0 + tb)) {
            continue;
        }
        found.push(EidtWitness { t_x0: ta, t_x: tb, meeting_point, residual });
    }
    found.sort_by(|p, q| p.t_x0.total_cmp(&q.t_x0).then(p.t_x.total_cmp(&q.t_x)));
    Ok(found)
}

/// The first witness of [`eidt_witnesses`].
pub fn eidt_witness(
    sys: &FractionalSystem,
    x0: &RealVector,
    x: &RealVector,
    window_x0: (f64, f64),
    window_x: (f64, f64),
    grid: usize,
) -> Result<Option<EidtWitness>> {
    Ok(eidt_witnesses(sys, x0, x, window_x0, window_x, grid)?.into_iter().next())
}

/// A point whose trajectory meets `u(·; x0)`: `u(t; point) = u(T; x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SPoint {
    pub point: RealVector,
    /// `T`, time along `u(·; x0)`.
    pub t_x0: f64,
    /// `t`, time along the trajectory from `point`.
    pub t: f64,
    /// Forward re-check `‖u(t; point) − u(T; x0)‖ / (1 + ‖u(T; x0)‖)`.
    pub residual: f64,
    /// Drawn from a collapse fiber rather than an inverse curve.
    pub fiber: bool,
}

/// Grid sample of the set of points whose trajectories meet `u(·; x0)`.
///
/// Inverse-curve points `γ_{u(T;x0)}(t)` for every grid pair at which the
/// operator is invertible; for Type II systems also the fibers
/// `H_{u(T;x0), T_c}` at each critical time, sampled with `fiber_steps`
/// coefficients in `[-2, 2]` per kernel direction. Points failing the forward
/// re-check are dropped.
pub fn sample_s(
    sys: &FractionalSystem,
    x0: &RealVector,
    classification: &Classification,
    t0_grid: &[f64],
    t_grid: &[f64],
    fiber_steps: usize,
) -> Result<Vec<SPoint>> {
    sys.check_vector(x0)?;
    check_grid(t0_grid)?;
    check_grid(t_grid)?;
    let tol = sys.tol.eidt;
    let targets = states(sys, x0, t0_grid)?;
    let criticals: Vec<f64> = classification.criticals.iter().map(|c| c.t_critical).collect();
    let ops: Vec<(f64, RealMatrix)> = t_grid
        .par_iter()
        .filter(|t| criticals.iter().all(|c| (*t - c).abs() >= 1e-3))
        .map(|&t| Ok((t, sys.operator(t)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(_, m)| sigma_min(m).map(|s| s > tol_singular(m)).unwrap_or(false))
        .collect();
    let mut cloud: Vec<SPoint> = t0_grid
        .par_iter()
        .zip(&targets)
        .map(|(&t0, q)| {
            let mut row = Vec::new();
            for (t, m) in &ops {
                let Ok(point) = solve_checked(m, q) else { continue };
                let residual = (m * &point - q).norm() / (1.0 + q.norm());
                if residual <= tol {
                    row.push(SPoint { point, t_x0: t0, t: *t, residual, fiber: false });
                }
            }
            row
        })
        .flatten()
        .collect();
    let mut fiber_times = criticals.clone();
    fiber_times.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.max(1.0));
    let coeffs = linspace(-2.0, 2.0, fiber_steps.max(1));
    for tc in fiber_times {
        let m = sys.operator(tc)?;
        for (&t0, q) in t0_grid.iter().zip(&targets) {
            let Some(h) = h_set(sys, q, tc)? else { continue };
            let mut idx = vec![0usize; h.dim()];
            loop {
                let c: Vec<f64> = idx.iter().map(|&k| coeffs[k]).collect();
                let point = h.point(&c);
                let residual = (&m * &point - q).norm() / (1.0 + q.norm());
                if residual <= tol {
                    cloud.push(SPoint { point, t_x0: t0, t: tc, residual, fiber: true });
                }
                if !advance(&mut idx, coeffs.len()) {
                    break;
                }
            }
        }
    }
    Ok(cloud)
}

/// Odometer increment; false once every index has wrapped.
fn advance(idx: &mut [usize], base: usize) -> bool {
    for k in idx.iter_mut() {
        *k += 1;
        if *k < base {
            return true;
        }
        *k = 0;
    }
    false
}

/// `u'(t; x0)`.
pub fn velocity(sys: &FractionalSystem, x0: &RealVector, t: f64) -> Result<RealVector> {
    sys.velocity(x0, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    /// The trajectory crosses itself.
    Node,
    /// The trajectory reverses direction.
    Cusp,
    Unresolved,
}

/// A transversal self-crossing `u(t1) = u(t2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t1: f64,
    pub t2: f64,
    /// `‖u(t1) − u(t2)‖`.
    pub state_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublePoint {
    pub kind: PointKind,
    pub crossing: Option<Crossing>,
    /// `‖u'(T)‖`.
    pub velocity_norm: f64,
    /// Cosine between `u'(T − h)` and `u'(T + h)`, `h = 10⁻³ T`.
    pub reversal_cosine: f64,
}

/// A point `p = u(T; x0)` where `x0 ∈ ker E_{α,0}(T^α A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplePoint {
    pub t_critical: f64,
    pub p: RealVector,
    pub kind: PointKind,
    pub velocity_norm: f64,
    pub eigenvalue: Complex64,
    /// Zero of `E_{α,0}` on the eigenvalue's ray.
    pub zero: MlZero,
    pub kernel_residual: f64,
    pub crossing: Option<Crossing>,
}

/// Multiple points of `u(·; x0)` from zeros of `E_{α,0}` up to modulus `r`,
/// in increasing `T`.
pub fn multiple_points(sys: &FractionalSystem, x0: &RealVector, r: f64) -> Result<Vec<MultiplePoint>> {
    sys.check_vector(x0)?;
    let scale = x0.norm();
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let mut out: Vec<MultiplePoint> = Vec::new();
    for ray in matched_rays(sys, 0.0, r, sys.tol.angular)? {
        let t = ray.t_critical;
        if out.iter().any(|m| (m.t_critical - t).abs() <= 1e-9 * t.max(1.0)) {
            continue;
        }
        let kernel_residual = kernel_distance(&sys.rate_operator(t)?, x0, sys.tol.kernel)?;
        if kernel_residual > sys.tol.kernel * scale {
            continue;
        }
        let p = sys.propagate(x0, t)?;
        let dp = classify_double_point(sys, x0, t)?;
        out.push(MultiplePoint {
            t_critical: t,
            p,
            kind: dp.kind,
            velocity_norm: dp.velocity_norm,
            eigenvalue: ray.eigenvalue,
            zero: ray.zero,
            kernel_residual,
            crossing: dp.crossing,
        });
    }
    Ok(out)
}

/// Intersections of non-adjacent segments of a planar polyline, as parameter
/// pairs `(s_i, s_j)`, `i < j`.
fn polyline_crossings(ts: &[f64], pts: &[RealVector]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let seg = |k: usize| (pts[k][0], pts[k][1], pts[k + 1][0], pts[k + 1][1]);
    for i in 0..pts.len() - 1 {
        let (ax, ay, bx, by) = seg(i);
        for j in i + 2..pts.len() - 1 {
            let (cx, cy, dx, dy) = seg(j);
            let (rx, ry, sx, sy) = (bx - ax, by - ay, dx - cx, dy - cy);
            let den = rx * sy - ry * sx;
            if den == 0.0 {
                continue;
            }
            let (qx, qy) = (cx - ax, cy - ay);
            let u = (qx * sy - qy * sx) / den;
            let v = (qx * ry - qy * rx) / den;
            if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
                out.push((ts[i] + u * (ts[i + 1] - ts[i]), ts[j] + v * (ts[j + 1] - ts[j])));
            }
        }
    }
    out
}

fn sine_between(a: &RealVector, b: &RealVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    (1.0 - c * c).sqrt()
}

/// Node, cusp or unresolved at `T`, examining `[T − w, T + w]`, `w = T/2`.
///
/// Node: a transversal self-crossing `u(t1) = u(t2)` inside the window with
/// `t2 − t1 ≥ 10⁻³ w`. Cusp: otherwise, `‖u'(T)‖` small and the velocity
/// direction reverses across `T`.
pub fn classify_double_point(sys: &FractionalSystem, x0: &RealVector, t: f64) -> Result<DoublePoint> {
    sys.check_vector(x0)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParam(format!("time must be positive, got {t}")));
    }
    let w = 0.5 * t;
    let window = (t - w, t + w);
    let min_gap = 1e-3 * w;
    let p = sys.propagate(x0, t)?;
    let velocity_norm = sys.velocity(x0, t)?.norm();
    let h = 1e-3 * t;
    let (vb, va) = (sys.velocity(x0, t - h)?, sys.velocity(x0, t + h)?);
    let reversal_cosine =
        if vb.norm() == 0.0 || va.norm() == 0.0 { 1.0 } else { vb.dot(&va) / (vb.norm() * va.norm()) };

    let seeds: Vec<(f64, f64)> = if sys.dim() == 2 {
        let ts = linspace(window.0, window.1, CROSSING_SAMPLES);
        polyline_crossings(&ts, &states(sys, x0, &ts)?)
    } else {
        let ts = linspace(window.0, window.1, DEFAULT_GRID);
        let us = states(sys, x0, &ts)?;
        let dist: Vec<Vec<f64>> = us
            .iter()
            .enumerate()
            .map(|(i, a)| {
                us.iter().enumerate().map(|(j, b)| if j > i + 1 { (a - b).norm() } else { f64::INFINITY }).collect()
            })
            .collect();
        local_minima(&dist).into_iter().take(LM_MAX_SEEDS).map(|(i, j)| (ts[i], ts[j])).collect()
    };
    let pol = polisher(sys.alpha, window, window, |a, b| Ok(sys.propagate(x0, a)? - sys.propagate(x0, b)?));
    let mut crossing: Option<Crossing> = None;
    for (s1, s2) in seeds {
        let ([a, b], r) = pol.run([s1, s2])?;
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        let state_gap = r.norm();
        if t2 - t1 < min_gap || state_gap > sys.tol.eidt * (1.0 + p.norm()) {
            continue;
        }
        let sine = sine_between(&sys.velocity(x0, t1)?, &sys.velocity(x0, t2)?);
        if sine < MIN_CROSSING_SINE {
            continue;
        }
        if crossing.is_none_or(|c| state_gap < c.state_gap) {
            crossing = Some(Crossing { t1, t2, state_gap });
        }
    }
    let kind = if crossing.is_some() {
        PointKind::Node
    } else if velocity_norm <= sys.tol.collapse * (1.0 + p.norm()) && reversal_cosine < CUSP_COSINE {
        PointKind::Cusp
    } else {
        PointKind::Unresolved
    };
    Ok(DoublePoint { kind, crossing, velocity_norm, reversal_cosine })
}

/// `[[Re λ, Im λ], [−Im λ, Re λ]]`, the real 2×2 matrix with eigenvalues
/// `λ` and `λ̄`.
pub fn real_block(lambda: Complex64) -> RealMatrix {
    RealMatrix::from_row_slice(2, 2, &[lambda.re, lambda.im, -lambda.im, lambda.re])
}

/// `block ⊕ diag(extra)`.
pub fn with_diagonal(block: &RealMatrix, extra: &[f64]) -> RealMatrix {
    let (k, n) = (block.nrows(), block.nrows() + extra.len());
    let mut m = RealMatrix::zeros(n, n);
    m.view_mut((0, 0), (k, k)).copy_from(block);
    for (i, e) in extra.iter().enumerate() {
        m[(k + i, k + i)] = *e;
    }
    m
}

/// A 2×2 system whose operator vanishes at time `t`: its eigenvalues are
/// `zero / t^α` and the conjugate.
pub fn collapse_matrix(alpha: f64, zero: Complex64, t: f64) -> RealMatrix {
    real_block(zero / t.powf(alpha))
}

pub fn vector(values: &[f64]) -> RealVector {
    DVector::from_column_slice(values)
}
