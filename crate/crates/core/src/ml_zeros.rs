//! Complex zeros of `E_{α,β}` inside rectangles.
//!
//! Counting uses the argument principle: the phase of `E` is tracked around
//! the rectangle boundary with adaptive bisection so that consecutive samples
//! never differ by a quarter turn or more. Location uses recursive
//! quadrisection down to cells holding a single zero, then damped Newton
//! from the cell centre. A zero of `E` at the origin (β a non-positive
//! integer, e.g. `E_{α,0}(0) = 0`) is trivial and excluded from both counts
//! and tables.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar_ml::{recip_gamma, MittagLeffler, MlParams, Z_MAX};

/// `|E|` at or below this on the boundary makes the winding number unreliable.
pub const BOUNDARY_FLOOR: f64 = 1e-12;
/// Maximum boundary samples per contour.
pub const MAX_BOUNDARY_SAMPLES: usize = 1 << 16;
/// Residual every tabulated zero must reach.
pub const ZERO_RESIDUAL: f64 = 1e-8;
/// Residual Newton aims for.
pub const NEWTON_TARGET: f64 = 1e-10;
/// Radius of the punctured disk removed around a trivial zero at the origin.
pub const ORIGIN_EXCLUSION: f64 = 1e-3;

/// Relative accuracy of boundary samples.
const PHASE_REL: f64 = 1e-6;
const PERTURB_RETRIES: usize = 5;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_SEEDS: usize = 8;
const MIN_CELL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchRegion {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let all_finite = [re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite());
        if !all_finite || re_min >= re_max || im_min >= im_max {
            return Err(Error::InvalidParam(format!(
                "region [{re_min}, {re_max}] x [{im_min}, {im_max}] is empty or not finite"
            )));
        }
        Ok(Self { re_min, re_max, im_min, im_max })
    }

    /// The square `[-r, r]²`, which covers the closed disk of radius `r`.
    pub fn square(r: f64) -> Result<Self> {
        Self::new(-r, r, -r, r)
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re > self.re_min && z.re < self.re_max && z.im > self.im_min && z.im < self.im_max
    }

    fn contains_with_margin(&self, z: Complex64, margin: f64) -> bool {
        z.re >= self.re_min - margin
            && z.re <= self.re_max + margin
            && z.im >= self.im_min - margin
            && z.im <= self.im_max + margin
    }

    fn corner_radius(&self) -> f64 {
        [self.re_min, self.re_max]
            .iter()
            .flat_map(|&x| [self.im_min, self.im_max].map(|y| x.hypot(y)))
            .fold(0.0, f64::max)
    }

    fn grown(&self, d: f64) -> Self {
        Self { re_min: self.re_min - d, re_max: self.re_max + d, im_min: self.im_min - d, im_max: self.im_max + d }
    }

    /// Split into four cells at the given fractions of width and height.
    fn quarters(&self, fx: f64, fy: f64) -> [Self; 4] {
        let xm = self.re_min + fx * self.width();
        let ym = self.im_min + fy * self.height();
        [
            Self { re_min: self.re_min, re_max: xm, im_min: self.im_min, im_max: ym },
            Self { re_min: xm, re_max: self.re_max, im_min: self.im_min, im_max: ym },
            Self { re_min: self.re_min, re_max: xm, im_min: ym, im_max: self.im_max },
            Self { re_min: xm, re_max: self.re_max, im_min: ym, im_max: self.im_max },
        ]
    }
}

/// A located zero of `E_{α,β}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlZero {
    pub params: MlParams,
    pub location: Complex64,
    /// `|E_{α,β}(location)|`.
    pub residual: f64,
    /// 1-based rank by modulus; a conjugate pair shares one index.
    pub index: usize,
}

/// A cell that still held several zeros at the resolution floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplicityWarning {
    pub center: Complex64,
    pub count: usize,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZeroSet {
    pub zeros: Vec<MlZero>,
    pub warnings: Vec<MultiplicityWarning>,
}

/// Zero counting and location for one parameter pair.
#[derive(Debug)]
pub struct ZeroFinder {
    ml: MittagLeffler,
    origin_multiplicity: usize,
}

impl ZeroFinder {
    pub fn new(params: MlParams) -> Self {
        // Leading coefficients 1/Γ(αk+β) that vanish give a trivial zero at 0.
        let origin_multiplicity =
            (0..64).take_while(|&k| recip_gamma(params.alpha() * k as f64 + params.beta()) == 0.0).count();
        Self { ml: MittagLeffler::new(params), origin_multiplicity }
    }

    pub fn params(&self) -> MlParams {
        self.ml.params()
    }

    pub fn evaluator(&self) -> &MittagLeffler {
        &self.ml
    }

    fn value(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.ml.eval(z)?.value)
    }

    /// Number of nontrivial zeros (with multiplicity) strictly inside `r`.
    pub fn count_zeros(&self, r: &SearchRegion) -> Result<usize> {
        let mut region = *r;
        let mut last_err = None;
        for attempt in 0..=PERTURB_RETRIES {
            match self.count_exact(&region) {
                Ok(n) => return Ok(n),
                Err(e @ Error::BoundaryZero { .. }) => {
                    last_err = Some(e);
                    let d = 1e-7 * r.diameter() * (1 << attempt) as f64;
                    region = r.grown(d);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("retry loop records the failure"))
    }

    /// Winding count of `r` itself, without perturbation.
    fn count_exact(&self, r: &SearchRegion) -> Result<usize> {
        if r.corner_radius() > Z_MAX {
            return Err(Error::Domain { modulus: r.corner_radius(), limit: Z_MAX });
        }
        let winding = self.winding(r)?;
        let trivial = if r.contains(Complex64::new(0.0, 0.0)) { self.origin_multiplicity } else { 0 };
        let n = winding.checked_sub(trivial).ok_or_else(|| {
            Error::Convergence(format!("winding number {winding} below the trivial origin multiplicity {trivial}"))
        })?;
        Ok(n)
    }

    fn winding(&self, r: &SearchRegion) -> Result<usize> {
        let corners = [
            Complex64::new(r.re_min, r.im_min),
            Complex64::new(r.re_max, r.im_min),
            Complex64::new(r.re_max, r.im_max),
            Complex64::new(r.re_min, r.im_max),
        ];
        let inv_alpha = 1.0 / self.params().alpha();
        let rmax = r.corner_radius().max(1.0);
        // The phase of the dominant exponential turns at most |z|^{1/α - 1} / α
        // radians per unit length; sample about once per radian.
        let rate = 2.0 + inv_alpha * rmax.powf(inv_alpha - 1.0);

        let mut total_phase = 0.0;
        let mut samples = 0usize;
        for i in 0..4 {
            let a = corners[i];
            let b = corners[(i + 1) % 4];
            let n = ((b - a).norm() * rate).ceil().clamp(8.0, 4096.0) as usize;
            let mut prev_z = a;
            let mut prev_f = self.boundary_value(a)?;
            for j in 1..=n {
                let z = a + (b - a) * (j as f64 / n as f64);
                let f = self.boundary_value(z)?;
                total_phase += self.segment_phase(prev_z, prev_f, z, f, &mut samples, 0)?;
                prev_z = z;
                prev_f = f;
            }
        }
        let w = total_phase / TAU;
        let rounded = w.round();
        if (w - rounded).abs() > 0.1 || rounded < 0.0 {
            return Err(Error::Convergence(format!("winding number {w} is not close to a non-negative integer")));
        }
        Ok(rounded as usize)
    }

    fn boundary_value(&self, z: Complex64) -> Result<Complex64> {
        // Only the phase matters here, and only to well under a quarter turn.
        let f = self.ml.eval_rough(z, PHASE_REL)?.value;
        if f.norm() <= BOUNDARY_FLOOR {
            return Err(Error::BoundaryZero { re: z.re, im: z.im });
        }
        Ok(f)
    }

    fn segment_phase(
        &self,
        za: Complex64,
        fa: Complex64,
        zb: Complex64,
        fb: Complex64,
        samples: &mut usize,
        depth: usize,
    ) -> Result<f64> {
        let d = (fb / fa).arg();
        if d.abs() < 0.5 * PI {
            return Ok(d);
        }
        *samples += 1;
        if *samples > MAX_BOUNDARY_SAMPLES || depth > 40 {
            return Err(Error::Convergence("boundary phase tracking exceeded its sample budget".into()));
        }
        let zm = 0.5 * (za + zb);
        let fm = self.boundary_value(zm)?;
        Ok(self.segment_phase(za, fa, zm, fm, samples, depth + 1)?
            + self.segment_phase(zm, fm, zb, fb, samples, depth + 1)?)
    }

    /// Newton refinement from `seed`; falls back to perturbed seeds.
    pub fn refine_zero(&self, seed: Complex64) -> Result<MlZero> {
        let scale = 1e-3 * (1.0 + seed.norm());
        let seeds = std::iter::once(seed).chain(
            (0..NEWTON_SEEDS).map(|j| seed + Complex64::from_polar(scale, TAU * j as f64 / NEWTON_SEEDS as f64)),
        );
        let mut best: Option<(Complex64, f64)> = None;
        for s in seeds {
            if let Ok((z, res)) = self.newton(s) {
                if res <= NEWTON_TARGET {
                    return Ok(self.zero_at(z, res));
                }
                if best.is_none_or(|(_, r)| res < r) {
                    best = Some((z, res));
                }
            }
        }
        match best {
            Some((z, res)) if res <= ZERO_RESIDUAL => Ok(self.zero_at(z, res)),
            Some((z, res)) => Err(Error::Convergence(format!("Newton stalled at {z} with residual {res:e}"))),
            None => Err(Error::Convergence(format!("Newton diverged from every seed near {seed}"))),
        }
    }

    fn zero_at(&self, location: Complex64, residual: f64) -> MlZero {
        MlZero { params: self.params(), location, residual, index: 0 }
    }

    /// Damped Newton. Returns the final point and its residual `|E|`.
    ///
    /// A small residual alone is not enough: `E` can be tiny far out in a
    /// decaying direction without any zero nearby, so the final Newton
    /// correction `|E/E'|` must be small too.
    fn newton(&self, seed: Complex64) -> Result<(Complex64, f64)> {
        self.newton_within(seed, None)
    }

    /// Newton that gives up as soon as an iterate leaves `fence`.
    fn newton_within(&self, seed: Complex64, fence: Option<&SearchRegion>) -> Result<(Complex64, f64)> {
        let mut z = seed;
        let mut f = self.value(z)?;
        let mut last_step = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let d = self.ml.deriv(z)?.value;
            if d.norm() == 0.0 {
                break;
            }
            let step = f / d;
            last_step = step.norm();
            if last_step <= 1e-14 * z.norm().max(1.0) {
                break;
            }
            let mut lambda = 1.0;
            let mut next = None;
            for _ in 0..12 {
                let cand = z - step * lambda;
                if cand.norm() <= Z_MAX {
                    let fc = self.value(cand)?;
                    if fc.norm() < f.norm() {
                        next = Some((cand, fc));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            // No descent: we are at the rounding floor or in a bad basin.
            let Some((cand, fc)) = next else {
                break;
            };
            z = cand;
            f = fc;
            if fence.is_some_and(|r| !r.contains(z)) {
                return Err(Error::Convergence(format!("Newton left the search cell at {z}")));
            }
        }
        let scale = z.norm().max(1.0);
        if f.norm() <= ZERO_RESIDUAL && last_step <= 1e-6 * scale {
            Ok((z, f.norm()))
        } else {
            Err(Error::Convergence(format!(
                "no convergence from {seed}: stopped at {z} with |E| = {:e}, step {last_step:e}",
                f.norm()
            )))
        }
    }

    /// All nontrivial zeros strictly inside `r`, sorted by modulus then by
    /// imaginary part descending, truncated to `max_count`.
    pub fn find_zeros(&self, r: &SearchRegion, max_count: usize) -> Result<ZeroSet> {
        let total = self.count_zeros(r)?;
        let mut set = ZeroSet::default();
        if total > 0 {
            self.locate(r, total, &mut set)?;
        }
        let margin = 1e-9 * r.diameter().max(1.0);
        set.zeros.retain(|z| r.contains_with_margin(z.location, margin) && z.location.norm() >= ORIGIN_EXCLUSION);
        dedupe(&mut set.zeros, margin);
        sort_and_index(&mut set.zeros);
        set.zeros.truncate(max_count);
        Ok(set)
    }

    fn locate(&self, cell: &SearchRegion, count: usize, set: &mut ZeroSet) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        let margin = 1e-9 * cell.diameter().max(1e-300);
        if count == 1 {
            let fence = cell.grown(0.5 * cell.diameter());
            if let Ok((z, res)) = self.newton_within(cell.center(), Some(&fence)) {
                if cell.contains_with_margin(z, margin) {
                    set.zeros.push(self.zero_at(z, res));
                    return Ok(());
                }
            }
        }
        if cell.diameter() < MIN_CELL {
            if count == 1 {
                return Err(Error::Convergence(format!("Newton failed inside cell at {}", cell.center())));
            }
            set.warnings.push(MultiplicityWarning { center: cell.center(), count, diameter: cell.diameter() });
            return Ok(());
        }
        let (children, counts) = self.split(cell, count)?;
        let mut found: Vec<ZeroSet> = children
            .par_iter()
            .zip(counts.par_iter())
            .map(|(child, &n)| {
                let mut local = ZeroSet::default();
                self.locate(child, n, &mut local).map(|_| local)
            })
            .collect::<Result<Vec<_>>>()?;
        for f in found.iter_mut() {
            set.zeros.append(&mut f.zeros);
            set.warnings.append(&mut f.warnings);
        }
        Ok(())
    }

    /// Quadrisect with split lines nudged off-centre until the children's
    /// counts add up to the parent's.
    fn split(&self, cell: &SearchRegion, count: usize) -> Result<([SearchRegion; 4], [usize; 4])> {
        const OFFSETS: [(f64, f64); 6] =
            [(0.5, 0.5), (0.4871, 0.5127), (0.5213, 0.4792), (0.4637, 0.4519), (0.5381, 0.5443), (0.4417, 0.5591)];
        let mut last_err = None;
        for &(fx, fy) in &OFFSETS {
            let children = cell.quarters(fx, fy);
            let counts: Vec<Result<usize>> = children.par_iter().map(|c| self.count_exact(c)).collect();
            match counts.into_iter().collect::<Result<Vec<usize>>>() {
                Ok(c) if c.iter().sum::<usize>() == count => return Ok((children, [c[0], c[1], c[2], c[3]])),
                Ok(c) => {
                    last_err = Some(Error::Convergence(format!(
                        "child counts {c:?} do not add up to {count} in cell centred at {}",
                        cell.center()
                    )))
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one split attempted"))
    }
}

fn dedupe(zeros: &mut Vec<MlZero>, tol: f64) {
    let mut kept: Vec<MlZero> = Vec::with_capacity(zeros.len());
    for z in zeros.drain(..) {
        if !kept.iter().any(|k| (k.location - z.location).norm() <= tol) {
            kept.push(z);
        }
    }
    *zeros = kept;
}

fn sort_and_index(zeros: &mut [MlZero]) {
    zeros.sort_by(|a, b| {
        a.location
            .norm()
            .partial_cmp(&b.location.norm())
            .unwrap()
            .then(b.location.im.partial_cmp(&a.location.im).unwrap())
    });
    // Conjugates have equal modulus; give them one index.
    let mut index = 0;
    let mut prev: Option<Complex64> = None;
    for z in zeros.iter_mut() {
        let pairs_with_prev = prev.is_some_and(|p| {
            let tol = 1e-8 * p.norm().max(1.0);
            (p.conj() - z.location).norm() <= tol && p.im > 0.0
        });
        if !pairs_with_prev {
            index += 1;
        }
        z.index = index;
        prev = Some(z.location);
    }
}

/// Zeros of `E_{α,β}` with modulus at most `radius`, computed once and then
/// shared read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroTable {
    pub params: MlParams,
    pub radius: f64,
    pub zeros: Vec<MlZero>,
    pub warnings: Vec<MultiplicityWarning>,
}

impl ZeroTable {
    /// Tiles `[-R, R]²` with an odd grid of cells (the origin sits at a cell
    /// centre, never on an edge) and searches only cells that meet the disk.
    /// Contours then stay near radius `R` instead of `R√2`, which matters
    /// because the cost of evaluating `E` grows like `exp(|z|^{1/α})`.
    pub fn build(params: MlParams, radius: f64) -> Result<Self> {
        const TILES: usize = 9;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParam(format!("radius must be positive, got {radius}")));
        }
        let finder = ZeroFinder::new(params);
        let side = 2.0 * radius / TILES as f64;
        let edge = |i: usize| -radius + side * i as f64;
        let cells: Vec<SearchRegion> = (0..TILES)
            .flat_map(|i| (0..TILES).map(move |j| (i, j)))
            .map(|(i, j)| SearchRegion { re_min: edge(i), re_max: edge(i + 1), im_min: edge(j), im_max: edge(j + 1) })
            .filter(|c| {
                let dx = 0f64.clamp(c.re_min, c.re_max);
                let dy = 0f64.clamp(c.im_min, c.im_max);
                dx.hypot(dy) <= radius
            })
            .collect();
        let sets = cells.par_iter().map(|c| finder.find_zeros(c, usize::MAX)).collect::<Result<Vec<_>>>()?;
        let mut zeros = Vec::new();
        let mut warnings = Vec::new();
        for set in sets {
            zeros.extend(set.zeros.into_iter().filter(|z| z.location.norm() <= radius));
            warnings.extend(set.warnings);
        }
        dedupe(&mut zeros, 1e-9 * radius.max(1.0));
        sort_and_index(&mut zeros);
        Ok(Self { params, radius, zeros, warnings })
    }

    /// Process-wide cached table for `(α, β, R)`.
    pub fn shared(params: MlParams, radius: f64) -> Result<Arc<Self>> {
        type Key = (u64, u64, u64);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<ZeroTable>>>> = OnceLock::new();
        let key = (params.alpha().to_bits(), params.beta().to_bits(), radius.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(t) = cache.lock().expect("zero-table cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        // Built outside the lock; a racing duplicate build is harmless.
        let table = Arc::new(Self::build(params, radius)?);
        cache.lock().expect("zero-table cache poisoned").entry(key).or_insert_with(|| Arc::clone(&table));
        Ok(table)
    }
}

pub fn count_zeros(p: MlParams, r: &SearchRegion) -> Result<usize> {
    ZeroFinder::new(p).count_zeros(r)
}

pub fn find_zeros(p: MlParams, r: &SearchRegion, max_count: usize) -> Result<ZeroSet> {
    ZeroFinder::new(p).find_zeros(r, max_count)
}

pub fn refine_zero(p: MlParams, seed: Complex64) -> Result<MlZero> {
    ZeroFinder::new(p).refine_zero(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, b: f64) -> MlParams {
        MlParams::new(a, b).unwrap()
    }

    #[test]
    fn region_validation() {
        assert!(SearchRegion::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(SearchRegion::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(SearchRegion::new(0.0, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn exponential_has_no_zeros() {
        let f = ZeroFinder::new(p(1.0, 1.0));
        assert_eq!(f.count_zeros(&SearchRegion::new(-5.0, 5.0, -7.0, 7.0).unwrap()).unwrap(), 0);
        assert!(matches!(f.refine_zero(Complex64::new(-2.0, 0.5)), Err(Error::Convergence(_))));
        assert!(matches!(f.refine_zero(Complex64::new(0.0, 0.0)), Err(Error::Convergence(_))));
    }

    #[test]
    fn origin_multiplicity() {
        assert_eq!(ZeroFinder::new(p(0.5, 1.0)).origin_multiplicity, 0);
        assert_eq!(ZeroFinder::new(p(0.5, 0.0)).origin_multiplicity, 1);
        // 1/Γ(-1) = 0 but 1/Γ(-1/2) ≠ 0.
        assert_eq!(ZeroFinder::new(p(0.5, -1.0)).origin_multiplicity, 1);
        assert_eq!(ZeroFinder::new(p(1.0, -1.0)).origin_multiplicity, 2);
    }

    #[test]
    fn trivial_zero_excluded_from_counts() {
        let f = ZeroFinder::new(p(0.5, 0.0));
        assert_eq!(f.count_zeros(&SearchRegion::new(-0.5, 0.5, -0.5, 0.5).unwrap()).unwrap(), 0);
    }

    #[test]
    fn small_box_around_one_is_empty() {
        let n = count_zeros(p(0.5, 1.0), &SearchRegion::new(-0.5, 0.5, -0.5, 0.5).unwrap()).unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn indices_pair_conjugates() {
        let mk = |re, im| MlZero { params: p(0.5, 1.0), location: Complex64::new(re, im), residual: 0.0, index: 0 };
        let mut zs = vec![mk(1.0, -2.0), mk(3.0, 1.0), mk(1.0, 2.0)];
        sort_and_index(&mut zs);
        assert_eq!(zs[0].location.im, 2.0);
        assert_eq!(zs.iter().map(|z| z.index).collect::<Vec<_>>(), vec![1, 1, 2]);
    }
}
