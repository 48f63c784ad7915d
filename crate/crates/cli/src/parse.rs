use fractrace_core::matrix_ops::{RealMatrix, RealVector};
use fractrace_core::Complex64;

fn number(s: &str) -> Result<f64, String> {
    let t = s.trim();
    t.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("'{t}' is not a finite number"))
}

pub fn list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Err("empty list".into());
    }
    s.split(',').map(number).collect()
}

pub fn vector(s: &str) -> Result<RealVector, String> {
    Ok(RealVector::from_vec(list(s)?))
}

/// `"a,b;c,d"` → 2×2, rows separated by `;`.
pub fn matrix(s: &str) -> Result<RealMatrix, String> {
    let rows = s.split(';').map(list).collect::<Result<Vec<_>, _>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format!("matrix '{s}' is not square"));
    }
    Ok(RealMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `"lo:hi"` with `lo < hi`.
pub fn range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("range '{s}' must look like lo:hi"))?;
    let (a, b) = (number(a)?, number(b)?);
    if a >= b {
        return Err(format!("range '{s}' is empty"));
    }
    Ok((a, b))
}

/// `"re,im"` or a bare real.
pub fn complex(s: &str) -> Result<Complex64, String> {
    match list(s)?.as_slice() {
        [re] => Ok(Complex64::new(*re, 0.0)),
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err(format!("'{s}' is not re,im")),
    }
}
