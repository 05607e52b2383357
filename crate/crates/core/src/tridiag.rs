//! Symmetric tridiagonal helpers: Sturm-count bisection, Thomas solves.

/// Number of eigenvalues strictly below `x` (LDL^T inertia).
fn count_below(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - x - if i == 0 { 0.0 } else { b2 / d };
        if d == 0.0 {
            d = -f64::MIN_POSITIVE;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Bracket `[lo, hi]` around the smallest eigenvalue, shrunk to relative
/// width `rel_tol`.
pub(crate) fn smallest_eigenvalue(diag: &[f64], off: &[f64], rel_tol: f64) -> (f64, f64) {
    assert!(!diag.is_empty() && off.len() + 1 == diag.len());
    let n = diag.len();
    // Gershgorin interval
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= rel_tol * lo.abs().max(hi.abs()) {
            break;
        }
        if count_below(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Solve `(T - shift I) x = rhs` for symmetric tridiagonal `T` without pivoting.
pub(crate) fn thomas_solve(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = rhs.to_vec();
    let mut denom = diag[0] - shift;
    for i in 0..n {
        if i > 0 {
            denom = diag[i] - shift - off[i - 1] * c[i - 1];
            x[i] -= off[i - 1] * x[i - 1];
        }
        if denom == 0.0 {
            denom = f64::EPSILON * diag[i].abs().max(1.0);
        }
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        x[i] /= denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}
