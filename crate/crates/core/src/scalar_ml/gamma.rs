//! Real gamma-function helpers used for series coefficients.
//!
//! `recip_gamma` is total on the reals: poles of Γ map to an exact zero.
//! `ln_abs_gamma` returns `ln|Γ(x)|` together with the sign of `1/Γ(x)`
//! (zero at the poles), which is what the log-magnitude series form needs.

use std::f64::consts::PI;

// Lanczos approximation, g = 607/128, 15 terms (Godfrey's coefficient set).
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS_COEF: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_747,
    -0.491_913_816_097_620_2,
    0.339_946_499_848_118_9e-4,
    0.465_236_289_270_485_8e-4,
    -0.983_744_753_048_795_6e-4,
    0.158_088_703_224_912_5e-3,
    -0.210_264_441_724_104_9e-3,
    0.217_439_618_115_212_6e-3,
    -0.164_318_106_536_763_9e-3,
    0.844_182_239_838_527_4e-4,
    -0.261_908_384_015_814_1e-4,
    0.368_991_826_595_316_2e-5,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Γ(x) for x in [1, 2].
fn gamma_unit(x: f64) -> f64 {
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
}

/// ln Γ(x) for x ≥ 10 from the Stirling series.
fn ln_gamma_stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number corrections B_{2k} / (2k (2k-1) x^{2k-1}).
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0 + inv2 * (1.0 / 1188.0 - inv2 * 691.0 / 360_360.0)))));
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
}

/// sin(πx) with the argument reduced exactly before the trig call.
pub(crate) fn sin_pi(x: f64) -> f64 {
    let r = x % 2.0;
    let r = if r < -1.0 {
        r + 2.0
    } else if r > 1.0 {
        r - 2.0
    } else {
        r
    };
    // r in [-1, 1]; fold onto [-1/2, 1/2] using sin(π(1 - r)) = sin(πr).
    if r > 0.5 {
        ((1.0 - r) * PI).sin()
    } else if r < -0.5 {
        ((-1.0 - r) * PI).sin()
    } else {
        (r * PI).sin()
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Γ(x) for 0.5 ≤ x ≤ 171 by reduction onto [1, 2].
fn gamma_moderate(x: f64) -> f64 {
    if x == x.floor() {
        // (x-1)! is exact in double precision up to 22!.
        return (2..x as u32).map(f64::from).product();
    }
    if x < 1.0 {
        return gamma_unit(x + 1.0) / x;
    }
    let mut y = x;
    let mut prod = 1.0;
    while y > 2.0 {
        y -= 1.0;
        prod *= y;
    }
    prod * gamma_unit(y)
}

/// 1/Γ(x). Exactly zero at non-positive integers.
pub fn recip_gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < 0.5 {
        // 1/Γ(x) = sin(πx) Γ(1-x) / π
        let g = if 1.0 - x <= 30.0 { gamma_moderate(1.0 - x) } else { ln_gamma_stirling(1.0 - x).exp() };
        return sin_pi(x) * g / PI;
    }
    if x <= 171.0 {
        1.0 / gamma_moderate(x)
    } else if x <= 180.0 {
        recip_gamma_stirling(x)
    } else {
        (-ln_gamma_stirling(x)).exp()
    }
}

/// 1/Γ(x) for 171 < x ≤ 180 as `(x^{-(x/2-1/4)} e^{x/2})² e^{-s(x)} / √(2π)`,
/// which avoids exponentiating the full `ln Γ`.
fn recip_gamma_stirling(x: f64) -> f64 {
    let half = x.powf(-(0.5 * x - 0.25)) * (0.5 * x).exp();
    let correction = ln_gamma_stirling(x) - ((x - 0.5) * x.ln() - x + LN_SQRT_2PI);
    half * half * (-correction).exp() / (2.0 * PI).sqrt()
}

/// Returns `(ln|Γ(x)|, sign(1/Γ(x)))`; at poles the sign is 0 and the
/// logarithm is +∞.
pub fn ln_abs_gamma(x: f64) -> (f64, f64) {
    if is_nonpositive_integer(x) {
        return (f64::INFINITY, 0.0);
    }
    if x < 0.5 {
        let s = sin_pi(x);
        let (lg, _) = ln_abs_gamma(1.0 - x);
        return (PI.ln() - s.abs().ln() - lg, s.signum());
    }
    if x < 10.0 {
        (gamma_moderate(x).ln(), 1.0)
    } else {
        (ln_gamma_stirling(x), 1.0)
    }
}
