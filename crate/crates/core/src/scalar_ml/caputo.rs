use super::gamma::recip_gamma;
use crate::error::{Error, Result};

const GRID_JITTER: f64 = 1e-12;

/// L1 approximation of the Caputo derivative `D^α x` at `t_1..t_N`.
///
/// The samples must sit on the uniform grid `t_j = j h`. Each output is
/// `h^{-α}/Γ(2-α) Σ_{j<n} b_j (x_{n-j} - x_{n-j-1})` with
/// `b_j = (j+1)^{1-α} - j^{1-α}`, the exact Caputo integral of the piecewise
/// linear interpolant.
pub fn caputo_l1(samples: &[(f64, Vec<f64>)], alpha: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if samples.len() < 2 {
        return Err(Error::Grid("need at least two samples".into()));
    }
    let n = samples.len() - 1;
    let h = samples[n].0 / n as f64;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Grid(format!("step must be positive, got {h}")));
    }
    let dim = samples[0].1.len();
    for (j, (t, x)) in samples.iter().enumerate() {
        let expected = j as f64 * h;
        if (t - expected).abs() > GRID_JITTER * h.max(expected) {
            return Err(Error::Grid(format!("sample {j} at t = {t}, expected {expected}")));
        }
        if x.len() != dim {
            return Err(Error::Dimension(format!("sample {j} has length {}, expected {dim}", x.len())));
        }
    }

    let one_minus = 1.0 - alpha;
    let weights: Vec<f64> = (0..n).map(|j| ((j + 1) as f64).powf(one_minus) - (j as f64).powf(one_minus)).collect();
    let increments: Vec<Vec<f64>> =
        samples.windows(2).map(|w| w[1].1.iter().zip(&w[0].1).map(|(b, a)| b - a).collect()).collect();
    let scale = h.powf(-alpha) * recip_gamma(2.0 - alpha);

    let out = (1..=n)
        .map(|m| {
            let mut acc = vec![0.0; dim];
            // increment index m-1-j pairs with weight b_j
            for (j, b) in weights[..m].iter().enumerate() {
                for (a, d) in acc.iter_mut().zip(&increments[m - 1 - j]) {
                    *a += b * d;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            (samples[m].0, acc)
        })
        .collect();
    Ok(out)
}
