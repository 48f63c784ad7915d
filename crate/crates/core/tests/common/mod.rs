//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use fractrace_core::matrix_ops::{ComplexMatrix, RealMatrix};
use fractrace_core::Complex64;
use rand::Rng;
use rug::{Complex as MpComplex, Float};

pub fn random_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> RealMatrix {
    RealMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale))
}

/// Random matrix scaled so that its max-norm row sum is `norm`.
pub fn random_with_inf_norm(rng: &mut impl Rng, n: usize, norm: f64) -> RealMatrix {
    let m = random_matrix(rng, n, 1.0);
    let rows = (0..n).map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    m * (norm / rows)
}

/// `V diag(λ) V⁻¹` with real spectrum given as conjugate-closed complex list
/// and a random real similarity.
pub fn with_spectrum(rng: &mut impl Rng, spectrum: &[Complex64]) -> RealMatrix {
    let n = spectrum.len();
    // Real block-diagonal form: 2×2 blocks for complex pairs.
    let mut d = RealMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let l = spectrum[i];
        if l.im.abs() > 0.0 {
            d[(i, i)] = l.re;
            d[(i + 1, i + 1)] = l.re;
            d[(i, i + 1)] = l.im;
            d[(i + 1, i)] = -l.im;
            i += 2;
        } else {
            d[(i, i)] = l.re;
            i += 1;
        }
    }
    loop {
        let s = RealMatrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 } + rng.gen_range(-0.5..0.5));
        if let Some(si) = s.clone().try_inverse() {
            let svd = s.clone().svd(false, false);
            let cond = svd.singular_values.max() / svd.singular_values.min();
            if cond < 20.0 {
                return &s * d * si;
            }
        }
    }
}

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(m: &ComplexMatrix) -> Complex64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = m.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            m[(0, j)] * sign * cofactor_det(&minor)
        })
        .sum()
}

/// Roots of the characteristic polynomial in 256-bit arithmetic:
/// Faddeev-LeVerrier coefficients, then Durand-Kerner iteration.
pub fn charpoly_roots(a: &RealMatrix) -> Vec<Complex64> {
    const P: u32 = 256;
    let n = a.nrows();
    let am: Vec<Vec<Float>> = (0..n).map(|i| (0..n).map(|j| Float::with_val(P, a[(i, j)])).collect()).collect();
    let matmul = |x: &Vec<Vec<Float>>, y: &Vec<Vec<Float>>| -> Vec<Vec<Float>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut s = Float::new(P);
                        for k in 0..n {
                            s += Float::with_val(P, &x[i][k] * &y[k][j]);
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    };
    // p(λ) = λ^n + c_{n-1} λ^{n-1} + ... + c_0
    let mut coeffs = vec![Float::new(P); n + 1];
    coeffs[n] = Float::with_val(P, 1);
    let mut mk: Vec<Vec<Float>> =
        (0..n).map(|i| (0..n).map(|j| Float::with_val(P, (i == j) as u8)).collect()).collect();
    for k in 1..=n {
        let am_k = matmul(&am, &mk);
        let mut tr = Float::new(P);
        for (i, row) in am_k.iter().enumerate() {
            tr += &row[i];
        }
        let c = Float::with_val(P, -tr / k as u32);
        coeffs[n - k] = c.clone();
        mk = am_k;
        for (i, row) in mk.iter_mut().enumerate() {
            row[i] += &c;
        }
    }
    let eval = |z: &MpComplex| -> MpComplex {
        let mut acc = MpComplex::with_val(P, (1, 0));
        for c in coeffs[..n].iter().rev() {
            acc *= z;
            acc += c;
        }
        acc
    };
    let seed = MpComplex::with_val(P, (0.4, 0.9));
    let radius = 1.0 + coeffs.iter().map(|c| c.to_f64().abs()).fold(0.0, f64::max);
    let mut roots: Vec<MpComplex> = (0..n)
        .map(|k| {
            let mut p = MpComplex::with_val(P, (1, 0));
            for _ in 0..k {
                p *= &seed;
            }
            p * radius
        })
        .collect();
    for _ in 0..2000 {
        for i in 0..n {
            let mut den = MpComplex::with_val(P, (1, 0));
            for j in 0..n {
                if i != j {
                    den *= MpComplex::with_val(P, &roots[i] - &roots[j]);
                }
            }
            let step = MpComplex::with_val(P, eval(&roots[i]) / den);
            roots[i] -= step;
        }
    }
    roots.iter().map(|r| Complex64::new(r.real().to_f64(), r.imag().to_f64())).collect()
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor
/// polynomial in Horner form.
pub fn expm(a: &RealMatrix) -> RealMatrix {
    let n = a.nrows();
    let norm = (0..n).map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let b = a / 2f64.powi(s);
    let id = RealMatrix::identity(n, n);
    let mut p = id.clone();
    for k in (1..=18).rev() {
        p = &id + &b * &p / k as f64;
    }
    for _ in 0..s {
        p = &p * &p;
    }
    p
}

pub fn max_abs(m: &RealMatrix) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}
