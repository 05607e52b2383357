//! Sharp constants for power weights and the p-Rayleigh quotient
//!
//! ```text
//! Q(u) = sum_{n>=1} nu(n) |u_n - u_{n-1}|^p  /  sum_{n>=1} mu(n) |u_n|^p
//! ```
//!
//! together with its minimisation over sequences supported in `[M, N]`.

use serde::{Deserialize, Serialize};

use crate::enclosure::{Accumulator, Enclosure};
use crate::error::{Error, Result};
use crate::halfline::signed_power;
use crate::sequence::FiniteSeq;
use crate::tridiag;
use crate::weights::{Exponent, Weight, WeightFamily};

/// `alpha` within this distance of `p - 1` is treated as critical.
pub const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SharpConstant {
    Value { value: f64 },
    /// No positive constant exists (critical exponent).
    None,
    /// Only a bracket is known.
    Bounds { lo: f64, hi: f64 },
}

impl SharpConstant {
    pub fn value(&self) -> Option<f64> {
        match self {
            SharpConstant::Value { value } => Some(*value),
            _ => None,
        }
    }
}

pub(crate) fn is_critical(alpha: f64, p: Exponent) -> bool {
    (alpha - (p.get() - 1.0)).abs() <= CRITICAL_TOL
}

/// `|(alpha - p + 1)/p|^p`, the constant of the continuous problem.
pub fn continuum_constant(alpha: f64, p: Exponent) -> f64 {
    let pp = p.get();
    ((alpha - pp + 1.0) / pp).abs().powf(pp)
}

/// Best constant in `sum n^alpha |du|^p >= A sum n^{alpha-p} |u|^p`.
pub fn sharp_constant(alpha: f64, p: Exponent) -> SharpConstant {
    if is_critical(alpha, p) {
        return SharpConstant::None;
    }
    let a = continuum_constant(alpha, p);
    if alpha >= 0.0 {
        SharpConstant::Value { value: a }
    } else {
        SharpConstant::Bounds {
            lo: 2f64.powf(alpha - p.get()) * a,
            hi: a,
        }
    }
}

/// Numerator and denominator sums of the quotient; the numerator runs one
/// index past the support to pick up the closing jump.
fn quotient_parts<M, N>(u: &FiniteSeq, mu: &M, nu: &N, p: Exponent) -> Result<(f64, f64)>
where
    M: Weight + ?Sized,
    N: Weight + ?Sized,
{
    let pp = p.get();
    let mut num = Accumulator::new();
    let mut den = Accumulator::new();
    let mut prev = 0.0;
    for n in 1..=u.len() + 1 {
        let cur = u.get(n);
        let du = cur - prev;
        if du != 0.0 {
            num.push_evaluated(nu.eval(n)? * du.abs().powf(pp));
        }
        if cur != 0.0 {
            den.push_evaluated(mu.eval(n)? * cur.abs().powf(pp));
        }
        prev = cur;
    }
    Ok((num.value(), den.value()))
}

pub fn rayleigh_quotient<M, N>(u: &FiniteSeq, mu: &M, nu: &N, p: Exponent) -> Result<f64>
where
    M: Weight + ?Sized,
    N: Weight + ?Sized,
{
    let (num, den) = quotient_parts(u, mu, nu, p)?;
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Smallest eigenvalue of the tridiagonal pencil (`p = 2` only).
    Exact,
    /// Nonlinear inverse power iteration.
    Descent,
}

/// Minimise the quotient over sequences supported in `[m, n]`.
#[derive(Debug, Clone)]
pub struct RayleighProblem {
    pub p: Exponent,
    pub mu: WeightFamily,
    pub nu: WeightFamily,
    pub m: u64,
    pub n: u64,
    /// Set for power pairs; picks the cold-start profile.
    pub alpha: Option<f64>,
    pub max_iter: usize,
    /// Relative residual target for the descent route.
    pub tol: f64,
}

impl RayleighProblem {
    /// `mu = n^{alpha-p}`, `nu = n^alpha`.
    pub fn power(alpha: f64, p: Exponent, m: u64, n: u64) -> Result<Self> {
        Self::new(
            WeightFamily::Power(alpha - p.get()),
            WeightFamily::Power(alpha),
            p,
            m,
            n,
        )
        .map(|mut pr| {
            pr.alpha = Some(alpha);
            pr
        })
    }

    pub fn new(mu: WeightFamily, nu: WeightFamily, p: Exponent, m: u64, n: u64) -> Result<Self> {
        if m < 1 || n < m {
            return Err(Error::Domain(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
        }
        Ok(RayleighProblem {
            p,
            mu,
            nu,
            m,
            n,
            alpha: None,
            max_iter: 20_000,
            tol: 1e-9,
        })
    }

    fn dim(&self) -> usize {
        (self.n - self.m + 1) as usize
    }

    /// `mu(n)` on `[m, n]` and `nu(n)` on `[m, n + 1]`.
    fn sampled(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mu = (self.m..=self.n).map(|k| self.mu.eval(k)).collect::<Result<Vec<_>>>()?;
        let nu = (self.m..=self.n + 1).map(|k| self.nu.eval(k)).collect::<Result<Vec<_>>>()?;
        Ok((mu, nu))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighResult {
    pub value: f64,
    /// `u_n` for `n` in `[m, n]`.
    pub minimizer: Vec<f64>,
    pub m: u64,
    pub n: u64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub method: Method,
    /// Bisection bracket on the eigenvalue (exact route only).
    pub eigen_bracket: Option<Enclosure>,
}

impl RayleighResult {
    pub fn minimizer_seq(&self) -> FiniteSeq {
        let mut v = vec![0.0; (self.m - 1) as usize];
        v.extend_from_slice(&self.minimizer);
        FiniteSeq::new(v).expect("finite minimizer")
    }
}

/// `(L u)_i` for `u` on `[m, n]` with zero boundary values.
fn p_laplacian(u: &[f64], nu: &[f64], pm1: f64) -> Vec<f64> {
    let d = u.len();
    let jump = |i: usize| -> f64 {
        // u_i - u_{i-1} for edge i in 0..=d
        let a = if i < d { u[i] } else { 0.0 };
        let b = if i > 0 { u[i - 1] } else { 0.0 };
        a - b
    };
    (0..d)
        .map(|i| nu[i] * signed_power(jump(i), pm1) - nu[i + 1] * signed_power(jump(i + 1), pm1))
        .collect()
}

fn weighted_pnorm_p(u: &[f64], mu: &[f64], p: f64) -> f64 {
    let mut acc = Accumulator::new();
    for (x, w) in u.iter().zip(mu) {
        acc.push_exact(w * x.abs().powf(p));
    }
    acc.value()
}

fn energy(u: &[f64], nu: &[f64], p: f64) -> f64 {
    let d = u.len();
    let mut acc = Accumulator::new();
    for i in 0..=d {
        let a = if i < d { u[i] } else { 0.0 };
        let b = if i > 0 { u[i - 1] } else { 0.0 };
        acc.push_exact(nu[i] * (a - b).abs().powf(p));
    }
    acc.value()
}

/// Relative residual `|L u - Q mu phi(u)|_inf / |Q mu phi(u)|_inf`.
fn residual(u: &[f64], mu: &[f64], nu: &[f64], p: f64, q: f64) -> f64 {
    let lu = p_laplacian(u, nu, p - 1.0);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..u.len() {
        let rhs = q * mu[i] * signed_power(u[i], p - 1.0);
        num = num.max((lu[i] - rhs).abs());
        den = den.max(rhs.abs());
    }
    num / den
}

/// Scale to `sum mu |u|^p = 1` with the first nonzero entry positive.
fn normalize(u: &mut [f64], mu: &[f64], p: f64) {
    let s = weighted_pnorm_p(u, mu, p).powf(1.0 / p);
    let sign = u.iter().find(|x| **x != 0.0).map(|x| x.signum()).unwrap_or(1.0);
    for x in u.iter_mut() {
        *x *= sign / s;
    }
}

pub fn minimize_rayleigh(problem: &RayleighProblem) -> Result<RayleighResult> {
    let method = if problem.p.get() == 2.0 {
        Method::Exact
    } else {
        Method::Descent
    };
    minimize_rayleigh_with(problem, method)
}

pub fn minimize_rayleigh_with(problem: &RayleighProblem, method: Method) -> Result<RayleighResult> {
    match method {
        Method::Exact => {
            if problem.p.get() != 2.0 {
                return Err(Error::Domain("the exact eigensolve needs p = 2".into()));
            }
            exact(problem)
        }
        Method::Descent => descent(problem),
    }
}

fn finish(
    problem: &RayleighProblem,
    mut u: Vec<f64>,
    mu: &[f64],
    nu: &[f64],
    iterations: usize,
    method: Method,
    bracket: Option<Enclosure>,
    converged_hint: Option<bool>,
) -> Result<RayleighResult> {
    let p = problem.p.get();
    normalize(&mut u, mu, p);
    let mut res = RayleighResult {
        value: 0.0,
        minimizer: u,
        m: problem.m,
        n: problem.n,
        iterations,
        residual: 0.0,
        converged: false,
        method,
        eigen_bracket: bracket,
    };
    res.value = rayleigh_quotient(&res.minimizer_seq(), &problem.mu, &problem.nu, problem.p)?;
    res.residual = residual(&res.minimizer, mu, nu, p, res.value);
    res.converged = converged_hint.unwrap_or(res.residual < problem.tol);
    Ok(res)
}

fn exact(problem: &RayleighProblem) -> Result<RayleighResult> {
    let (mu, nu) = problem.sampled()?;
    let d = problem.dim();
    let inv_sqrt: Vec<f64> = mu.iter().map(|m| 1.0 / m.sqrt()).collect();
    let diag: Vec<f64> = (0..d).map(|i| (nu[i] + nu[i + 1]) * inv_sqrt[i] * inv_sqrt[i]).collect();
    let off: Vec<f64> = (0..d.saturating_sub(1))
        .map(|i| -nu[i + 1] * inv_sqrt[i] * inv_sqrt[i + 1])
        .collect();
    let (lo, hi) = tridiag::smallest_eigenvalue(&diag, &off, 1e-14);
    let mut y = vec![1.0; d];
    let shift = lo - (hi - lo).max(f64::EPSILON * lo.abs());
    let mut its = 0;
    for _ in 0..8 {
        its += 1;
        y = tridiag::thomas_solve(&diag, &off, shift, &y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
    }
    let u: Vec<f64> = y.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect();
    let bracket = Enclosure::new(lo, hi);
    let mut res = finish(problem, u, &mu, &nu, its, Method::Exact, Some(bracket), None)?;
    // the eigenvalue bracket, not the vector residual, certifies the exact route
    res.converged = hi - lo <= 1e-12 * hi.abs();
    Ok(res)
}

/// Cold-start profile `n^{(p-1-alpha)/p}` with a linear cutoff at `N + 1`.
fn initial_profile(problem: &RayleighProblem) -> Vec<f64> {
    let s = problem
        .alpha
        .map(|a| (problem.p.get() - 1.0 - a) / problem.p.get())
        .unwrap_or(0.0);
    let end = (problem.n + 1) as f64;
    (problem.m..=problem.n)
        .map(|k| {
            let x = k as f64;
            x.powf(s) * (end - x) / end
        })
        .collect()
}

/// Minimiser of `E(v)/p - <b, v>` by damped Newton.
fn inner_solve(v0: &[f64], b: &[f64], nu: &[f64], p: f64) -> Vec<f64> {
    let d = v0.len();
    let pm1 = p - 1.0;
    let mut v = v0.to_vec();
    let objective = |v: &[f64]| -> f64 {
        let mut acc = Accumulator::new();
        acc.push_exact(energy(v, nu, p) / p);
        for i in 0..d {
            acc.push_exact(-b[i] * v[i]);
        }
        acc.value()
    };
    let bnorm = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut f = objective(&v);
    for _ in 0..200 {
        let lv = p_laplacian(&v, nu, pm1);
        let g: Vec<f64> = (0..d).map(|i| lv[i] - b[i]).collect();
        let gnorm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm <= 1e-14 * bnorm {
            break;
        }
        // Hessian edge weights (p-1) nu |jump|^{p-2}, floored to stay definite.
        let vscale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let floor = 1e-10 * vscale;
        let h: Vec<f64> = (0..=d)
            .map(|i| {
                let a = if i < d { v[i] } else { 0.0 };
                let c = if i > 0 { v[i - 1] } else { 0.0 };
                pm1 * nu[i] * (a - c).abs().max(floor).powf(p - 2.0)
            })
            .collect();
        let diag: Vec<f64> = (0..d).map(|i| h[i] + h[i + 1]).collect();
        let off: Vec<f64> = (0..d.saturating_sub(1)).map(|i| -h[i + 1]).collect();
        let step = tridiag::thomas_solve(&diag, &off, 0.0, &g);
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(x, s)| x - t * s).collect();
            let ft = objective(&trial);
            if ft <= f - 1e-4 * t * slope || (ft <= f && t < 1e-6) {
                v = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    v
}

fn descent(problem: &RayleighProblem) -> Result<RayleighResult> {
    let (mu, nu) = problem.sampled()?;
    let p = problem.p.get();
    let pm1 = p - 1.0;
    let mut u = initial_profile(problem);
    normalize(&mut u, &mu, p);
    let mut q = energy(&u, &nu, p);
    let mut best = (q, u.clone());
    let mut its = 0;
    let mut res = residual(&u, &mu, &nu, p, q);
    while its < problem.max_iter && res >= problem.tol {
        its += 1;
        let b: Vec<f64> = (0..u.len()).map(|i| mu[i] * signed_power(u[i], pm1)).collect();
        let c = q.powf(-1.0 / pm1);
        let v0: Vec<f64> = u.iter().map(|x| x * c).collect();
        let mut v = inner_solve(&v0, &b, &nu, p);
        normalize(&mut v, &mu, p);
        let qv = energy(&v, &nu, p);
        u = v;
        q = qv;
        res = residual(&u, &mu, &nu, p, q);
        if q < best.0 {
            best = (q, u.clone());
        }
    }
    let converged = res < problem.tol;
    let u = if converged { u } else { best.1 };
    finish(problem, u, &mu, &nu, its, Method::Descent, None, Some(converged))
}

/// Test profiles `phi` on `[0, 1]` with `phi(0) = phi(1) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestProfile {
    /// `sum_k coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
    /// `x^exponent (1 - x)^cutoff`.
    PowerCutoff { exponent: f64, cutoff: u32 },
}

impl TestProfile {
    /// `x (1 - x)`.
    pub fn bump() -> Self {
        TestProfile::Polynomial {
            coeffs: vec![0.0, 1.0, -1.0],
        }
    }

    /// `x^{(p-1-alpha)/p + eps} (1 - x)^cutoff`.
    pub fn near_optimal(alpha: f64, p: Exponent, eps: f64, cutoff: u32) -> Self {
        TestProfile::PowerCutoff {
            exponent: (p.get() - 1.0 - alpha) / p.get() + eps,
            cutoff,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestProfile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            TestProfile::PowerCutoff { exponent, cutoff } => {
                if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    x.powf(*exponent) * (1.0 - x).powi(*cutoff as i32)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TestProfile::Polynomial { coeffs } => {
                let at0 = coeffs.first().copied().unwrap_or(0.0);
                let at1: f64 = coeffs.iter().sum();
                if at0 != 0.0 || at1.abs() > 1e-12 {
                    return Err(Error::Domain("profile must vanish at 0 and 1".into()));
                }
                Ok(())
            }
            TestProfile::PowerCutoff { exponent, cutoff } => {
                if *exponent <= 0.0 || *cutoff == 0 {
                    return Err(Error::Domain(
                        "power profile needs a positive exponent and cutoff".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `u_n = phi(n/m)` for `n = 1..m-1`.
    pub fn sample(&self, m: u64) -> Result<FiniteSeq> {
        self.validate()?;
        let mf = m as f64;
        FiniteSeq::new((1..m).map(|n| self.eval(n as f64 / mf)).collect())
    }
}

/// Quotient of `phi(n/m)` for `mu = n^{alpha-p}`, `nu = n^alpha`.
pub fn sampled_test_quotient(phi: &TestProfile, m: u64, alpha: f64, p: Exponent) -> Result<f64> {
    if m < 2 {
        return Err(Error::Domain("sampling needs m >= 2".into()));
    }
    let u = phi.sample(m)?;
    rayleigh_quotient(
        &u,
        &WeightFamily::Power(alpha - p.get()),
        &WeightFamily::Power(alpha),
        p,
    )
}

fn check_alpha(alpha: f64, p: Exponent) -> Result<f64> {
    match sharp_constant(alpha, p) {
        SharpConstant::Value { value } => Ok(value),
        _ => Err(Error::UnsupportedAlpha { alpha, p: p.get() }),
    }
}

/// `sum n^alpha |du|^p - A sum n^{alpha-p} |u|^p`.
pub fn hardy_check(u: &FiniteSeq, alpha: f64, p: Exponent) -> Result<f64> {
    let a = check_alpha(alpha, p)?;
    let (lhs, rhs) = quotient_parts(
        u,
        &WeightFamily::Power(alpha - p.get()),
        &WeightFamily::Power(alpha),
        p,
    )?;
    Ok(lhs - a * rhs)
}

/// Relative slack allowed on [`hardy_check`]-type margins.
pub fn margin_scale(u: &FiniteSeq, alpha: f64, p: Exponent) -> Result<f64> {
    let (lhs, _) = quotient_parts(
        u,
        &WeightFamily::Power(alpha - p.get()),
        &WeightFamily::Power(alpha),
        p,
    )?;
    Ok(lhs)
}

/// Log-corrected inequality at the critical exponent, for `u_0 = u_1 = 0`:
/// `sum_{n>=2} n^{p-1} |du|^p - ((p-1)/p)^p sum_{n>=2} |u_n|^p / (n log^p n)`.
pub fn critical_hardy_check(u: &FiniteSeq, p: Exponent) -> Result<f64> {
    if u.get(1) != 0.0 {
        return Err(Error::PrefixViolation {
            required: 2,
            index: 1,
        });
    }
    let pp = p.get();
    let mut lhs = Accumulator::new();
    let mut rhs = Accumulator::new();
    let mut prev = 0.0;
    for n in 2..=u.len() + 1 {
        let cur = u.get(n);
        let x = n as f64;
        let du = cur - prev;
        if du != 0.0 {
            lhs.push_evaluated(x.powf(pp - 1.0) * du.abs().powf(pp));
        }
        if cur != 0.0 {
            rhs.push_evaluated(cur.abs().powf(pp) / (x * x.ln().powf(pp)));
        }
        prev = cur;
    }
    Ok(lhs.value() - ((pp - 1.0) / pp).powf(pp) * rhs.value())
}
