//! Power sums `S_n = sum_{k<=n} k^{gamma-1}` and the inequalities built on
//! them, the subcritical weights `w_alpha`, remainder weights, stability
//! margins and asymptotic fits of optimal weights.
//!
//! Every check returns a signed margin whose contract is `margin >= 0`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::enclosure::{json_f64, Accumulator};
use crate::error::{Error, Result};
use crate::halfline::HardyWeight;
use crate::sequence::FiniteSeq;
use crate::sharpness::{hardy_check, is_critical, margin_scale};
use crate::weights::{power_tail, Asymptotic, Envelope, Exponent, Weight, WeightFamily};

/// Cached prefix sums `S_0 = 0, S_1, ..., S_N` of `k^{gamma-1}`.
#[derive(Debug, Clone)]
pub struct PowerSum {
    gamma: f64,
    prefix: Vec<f64>,
}

impl PowerSum {
    pub fn new(gamma: f64, n_max: u64) -> Self {
        let mut prefix = Vec::with_capacity(n_max as usize + 1);
        prefix.push(0.0);
        let mut acc = Accumulator::new();
        for k in 1..=n_max {
            acc.push_evaluated((k as f64).powf(gamma - 1.0));
            prefix.push(acc.value());
        }
        PowerSum { gamma, prefix }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Largest cached index.
    pub fn n_max(&self) -> u64 {
        self.prefix.len() as u64 - 1
    }

    pub fn get(&self, n: u64) -> Result<f64> {
        self.prefix.get(n as usize).copied().ok_or(Error::OutOfTable {
            index: n,
            len: self.prefix.len(),
        })
    }

    /// The term `n^{gamma-1} = S_n - S_{n-1}`.
    pub fn term(&self, n: u64) -> f64 {
        (n as f64).powf(self.gamma - 1.0)
    }
}

/// `S_n` by compensated summation.
pub fn power_sum(gamma: f64, n: u64) -> f64 {
    let mut acc = Accumulator::new();
    for k in 1..=n {
        acc.push_evaluated((k as f64).powf(gamma - 1.0));
    }
    acc.value()
}

/// The three power-sum inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    /// `S_{n-1} + S_n < 2 n^gamma / gamma` for `1 < gamma < 2`.
    I,
    /// `S_{n-1} S_n < n^{2 gamma} / gamma^2` for `gamma > 0`.
    II,
    /// `S_n > exp(gamma/n) S_{n-1}`.
    III,
}

impl FromStr for Part {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Part::I),
            "ii" | "2" => Ok(Part::II),
            "iii" | "3" => Ok(Part::III),
            _ => Err(Error::parse(s, "expected i, ii or iii")),
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::I => "i",
            Part::II => "ii",
            Part::III => "iii",
        })
    }
}

fn check_part(gamma: f64, part: Part) -> Result<()> {
    let ok = match part {
        Part::I => gamma > 1.0 && gamma < 2.0,
        Part::II => gamma > 0.0,
        Part::III => gamma.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma = {gamma} is outside the range of part {part}")))
    }
}

/// Margin of one power-sum inequality at `n`.
pub fn prop41_check(gamma: f64, n: u64, part: Part) -> Result<f64> {
    check_part(gamma, part)?;
    if n < 2 {
        return Err(Error::Domain("n must be at least 2".into()));
    }
    prop41_margin(&PowerSum::new(gamma, n), n, part)
}

/// [`prop41_check`] against cached sums.
pub fn prop41_margin(sums: &PowerSum, n: u64, part: Part) -> Result<f64> {
    let g = sums.gamma();
    check_part(g, part)?;
    if n < 2 {
        return Err(Error::Domain("n must be at least 2".into()));
    }
    let s_prev = sums.get(n - 1)?;
    let s = sums.get(n)?;
    let x = n as f64;
    let margin = match part {
        Part::I => 2.0 * x.powf(g) / g - (s_prev + s),
        Part::II => (x.powf(g) / g).powi(2) - s_prev * s,
        // S_n - e^{g/n} S_{n-1} = n^{g-1} - (e^{g/n} - 1) S_{n-1}
        Part::III => sums.term(n) - (g / x).exp_m1() * s_prev,
    };
    if margin.is_finite() {
        Ok(margin)
    } else {
        Err(Error::Domain(format!("part {part} margin at gamma = {g}, n = {n} overflows f64")))
    }
}

/// `(alpha - p + 1) / (2 (p - 1))`.
fn series_rate(alpha: f64, p: f64) -> f64 {
    (alpha - p + 1.0) / (2.0 * (p - 1.0))
}

fn check_supercritical(alpha: f64, p: Exponent) -> Result<()> {
    if alpha > p.get() - 1.0 && !is_critical(alpha, p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha = {alpha} must exceed p - 1 = {}", p.get() - 1.0)))
    }
}

/// `sinh(t)/t - 1`, accurate for small `t`.
fn sinhc_minus_one(t: f64) -> f64 {
    let t2 = t * t;
    if t.abs() >= 1.0 {
        return t.sinh() / t - 1.0;
    }
    let mut term = t2 / 6.0;
    let mut sum = 0.0f64;
    let mut k = 1.0;
    while term > f64::EPSILON * 1e-3 * sum.max(f64::MIN_POSITIVE) {
        sum += term;
        k += 1.0;
        term *= t2 / ((2.0 * k) * (2.0 * k + 1.0));
    }
    sum
}

/// `h(n) = sinh(t)/t` with `t = (alpha - p + 1) / (2 (p - 1) n)`.
pub fn remainder_h(alpha: f64, p: Exponent, n: u64) -> Result<f64> {
    Ok(1.0 + remainder_h_minus_one(alpha, p, n)?)
}

/// `h(n) - 1` without cancellation.
pub fn remainder_h_minus_one(alpha: f64, p: Exponent, n: u64) -> Result<f64> {
    check_supercritical(alpha, p)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok(sinhc_minus_one(series_rate(alpha, p.get()) / n as f64))
}

/// First `terms` terms of the series for `h(n)`.
pub fn remainder_h_series(alpha: f64, p: Exponent, n: u64, terms: usize) -> Result<f64> {
    check_supercritical(alpha, p)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok(truncated_sinhc(series_rate(alpha, p.get()) / n as f64, terms))
}

/// `sum_{k<terms} t^{2k} / (2k+1)!`.
fn truncated_sinhc(t: f64, terms: usize) -> f64 {
    let t2 = t * t;
    let mut term = 1.0;
    let mut acc = Accumulator::new();
    for k in 0..terms {
        acc.push_evaluated(term);
        let k = k as f64 + 1.0;
        term *= t2 / ((2.0 * k) * (2.0 * k + 1.0));
    }
    acc.value()
}

/// Margin of `S_{n-1}^{-1/(p-1)} - S_n^{-1/(p-1)} >= RHS_K` with `S` built
/// from `k^{alpha-p}`; `terms = None` uses the closed-form series.
pub fn cor43_gap(alpha: f64, p: Exponent, n: u64, terms: Option<usize>) -> Result<f64> {
    check_supercritical(alpha, p)?;
    if n < 2 {
        return Err(Error::Domain("n must be at least 2".into()));
    }
    let sums = PowerSum::new(alpha - p.get() + 1.0, n);
    cor43_margin(&sums, alpha, p, n, terms)
}

/// `S_{n-1}^{-b} - S_n^{-b}` with `b = 1/(p-1)`, factored to avoid cancellation.
fn reciprocal_power_gap(sums: &PowerSum, p: f64, n: u64) -> Result<f64> {
    let b = 1.0 / (p - 1.0);
    let s_prev = sums.get(n - 1)?;
    let ratio = sums.term(n) / s_prev;
    Ok(s_prev.powf(-b) * -(-b * ratio.ln_1p()).exp_m1())
}

/// `(alpha-p+1)^{p/(p-1)} / ((p-1) n^{alpha/(p-1)})`, the one-term bound.
fn cor43_leading(alpha: f64, p: f64, n: u64) -> f64 {
    let b = 1.0 / (p - 1.0);
    (alpha - p + 1.0).powf(p * b) * b * (n as f64).powf(-alpha * b)
}

/// [`cor43_gap`] against sums cached with `gamma = alpha - p + 1`.
pub fn cor43_margin(sums: &PowerSum, alpha: f64, p: Exponent, n: u64, terms: Option<usize>) -> Result<f64> {
    check_supercritical(alpha, p)?;
    if n < 2 {
        return Err(Error::Domain("n must be at least 2".into()));
    }
    if terms == Some(0) {
        return Err(Error::Domain("the series needs at least one term".into()));
    }
    let pp = p.get();
    let lhs = reciprocal_power_gap(sums, pp, n)?;
    let lead = cor43_leading(alpha, pp, n);
    let t = series_rate(alpha, pp) / n as f64;
    // lhs - lead * (1 + tail) without forming 1 + tail first
    let tail = match terms {
        None => sinhc_minus_one(t),
        Some(k) => truncated_sinhc(t, k) - 1.0,
    };
    Ok((lhs - lead) - lead * tail)
}

/// Links of an inequality chain `lhs >= middle >= target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainMargins {
    /// `lhs - middle`.
    pub upper: f64,
    /// `middle - target`.
    pub lower: f64,
    /// `lhs`, the magnitude rounding is measured against.
    pub scale: f64,
}

impl ChainMargins {
    pub fn min(&self) -> f64 {
        self.upper.min(self.lower)
    }
}

/// Direct mean-value route to the one-term bound, for `p <= 2` or
/// `alpha < p + 1`: the reciprocal-power gap against a geometric-mean
/// (or, for `p > 2`, arithmetic-mean corrected) lower bound.
pub fn direct_route_check(alpha: f64, p: Exponent, n: u64) -> Result<ChainMargins> {
    check_supercritical(alpha, p)?;
    if n < 2 {
        return Err(Error::Domain("n must be at least 2".into()));
    }
    direct_route_margin(&PowerSum::new(alpha - p.get() + 1.0, n), alpha, p, n)
}

/// [`direct_route_check`] against cached sums.
pub fn direct_route_margin(sums: &PowerSum, alpha: f64, p: Exponent, n: u64) -> Result<ChainMargins> {
    let pp = p.get();
    check_supercritical(alpha, p)?;
    if pp > 2.0 && alpha >= pp + 1.0 {
        return Err(Error::Domain(format!(
            "the direct route needs p <= 2 or alpha < p + 1, got alpha = {alpha}, p = {pp}"
        )));
    }
    let lhs = reciprocal_power_gap(sums, pp, n)?;
    let s_prev = sums.get(n - 1)?;
    let s = sums.get(n)?;
    let pm1 = pp - 1.0;
    let scale = sums.term(n) / pm1;
    let middle = if pp <= 2.0 {
        scale * (s_prev * s).powf(-pp / (2.0 * pm1))
    } else {
        scale * (s_prev * s).powf(-1.0 / pm1) * (0.5 * (s_prev + s)).powf((2.0 - pp) / pm1)
    };
    let target = cor43_leading(alpha, pp, n);
    Ok(ChainMargins {
        upper: lhs - middle,
        lower: middle - target,
        scale: lhs,
    })
}

/// Midpoint-rule bound for `alpha > p + 1`:
/// `(p-1)^{p-1} / (alpha-p+1)^p - S_r (sum_{k>r} k^{-alpha/(p-1)})^{p-1}`.
pub fn midpoint_bound_check(alpha: f64, p: Exponent, r: u64) -> Result<f64> {
    midpoint_bound_margin(&PowerSum::new(alpha - p.get() + 1.0, r), alpha, p, r)
}

/// `(p-1)^{p-1} / (alpha-p+1)^p`.
pub fn midpoint_bound(alpha: f64, p: Exponent) -> f64 {
    let pm1 = p.get() - 1.0;
    pm1.powf(pm1) / (alpha - p.get() + 1.0).powf(p.get())
}

/// [`midpoint_bound_check`] against cached sums.
pub fn midpoint_bound_margin(sums: &PowerSum, alpha: f64, p: Exponent, r: u64) -> Result<f64> {
    let pp = p.get();
    if alpha <= pp + 1.0 {
        return Err(Error::Domain(format!("the midpoint bound needs alpha > p + 1, got {alpha}")));
    }
    if r == 0 {
        return Err(Error::Domain("r must be at least 1".into()));
    }
    let pm1 = pp - 1.0;
    let bound = midpoint_bound(alpha, p);
    let tail = power_tail(-alpha / pm1, r + 1).hi;
    Ok(bound - sums.get(r)? * tail.powf(pm1))
}

/// [`midpoint_bound_check`] for every `r` in `[1, r_max]`, sharing one
/// backward pass over the tail sums.
pub fn midpoint_bound_margins(alpha: f64, p: Exponent, r_max: u64) -> Result<Vec<f64>> {
    let pp = p.get();
    if alpha <= pp + 1.0 {
        return Err(Error::Domain(format!("the midpoint bound needs alpha > p + 1, got {alpha}")));
    }
    let pm1 = pp - 1.0;
    let e = -alpha / pm1;
    let bound = midpoint_bound(alpha, p);
    let sums = PowerSum::new(alpha - pp + 1.0, r_max);
    let anchor = power_tail(e, r_max + 1);
    let mut acc = Accumulator::new();
    let mut out = vec![0.0; r_max as usize];
    for r in (1..=r_max).rev() {
        let tail = (acc.enclosure() + anchor).hi;
        out[r as usize - 1] = bound - sums.get(r)? * tail.powf(pm1);
        acc.push_evaluated((r as f64).powf(e));
    }
    Ok(out)
}

/// `F(x, g) = (1+x)^{g-1} (1 - e^{-g x}) - e^{g x/(1+x)} + 1`.
pub fn lemma42_f(x: f64, gamma: f64) -> f64 {
    if gamma * x <= 0.5 {
        lemma42_series(x, gamma)
    } else {
        (1.0 + x).powf(gamma - 1.0) * -(-gamma * x).exp_m1() - (gamma * x / (1.0 + x)).exp_m1()
    }
}

/// Taylor series of `F` in `x`. Orders up to three vanish identically and
/// orders four to six use exact factored coefficients, so the result keeps
/// its relative accuracy near `x = 0` and near `gamma = 2`.
fn lemma42_series(x: f64, gamma: f64) -> f64 {
    const MAX_ORDER: usize = 200;
    let g2 = gamma * gamma;
    let x4 = x.powi(4);
    let low = [
        g2 * (gamma - 2.0) / 12.0,
        g2 * (gamma - 5.0) * (gamma - 2.0) / 24.0,
        g2 * (((9.0 * gamma - 125.0) * gamma + 480.0) * gamma - 516.0) / 720.0,
    ];
    let mut acc = Accumulator::new();
    for (j, c) in low.iter().enumerate() {
        acc.push_evaluated(c * x4 * x.powi(j as i32));
    }
    // coefficients of (1+x)^{g-1}, 1 - e^{-g x} and e^{g x/(1+x)}
    let mut binom = Vec::with_capacity(MAX_ORDER + 1);
    let mut decay = Vec::with_capacity(MAX_ORDER + 1);
    let mut expo: Vec<f64> = Vec::with_capacity(MAX_ORDER + 1);
    binom.push(1.0);
    decay.push(0.0);
    expo.push(1.0);
    let mut fact_term = 1.0;
    let mut xk = x.powi(6);
    for k in 1..=MAX_ORDER {
        let kf = k as f64;
        binom.push(binom[k - 1] * (gamma - kf) / kf);
        fact_term *= -gamma / kf;
        decay.push(-fact_term);
        // k E_k = sum_j j y_j E_{k-j} with y_j = g (-1)^{j-1}
        let s: f64 = (1..=k)
            .map(|j| {
                let yj = if j % 2 == 1 { gamma } else { -gamma };
                j as f64 * yj * expo[k - j]
            })
            .sum();
        expo.push(s / kf);
        if k < 7 {
            continue;
        }
        xk *= x;
        let prod: f64 = (0..k).map(|j| binom[j] * decay[k - j]).sum();
        let term = (prod - expo[k]) * xk;
        acc.push_evaluated(term);
        if k > 8 && term.abs() <= 1e-18 * acc.value().abs() {
            break;
        }
    }
    acc.value()
}

fn check_subcritical_alpha(alpha: f64, p: Exponent) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha = {alpha} must be nonnegative")));
    }
    if is_critical(alpha, p) {
        return Err(Error::Domain(format!("alpha = {alpha} is the critical exponent p - 1")));
    }
    Ok(())
}

/// The kinetic weight `w_alpha(n)` left over after the sharp inequality;
/// at `alpha = 0` this is the explicit residual weight.
pub fn subcritical_weight(alpha: f64, p: Exponent, n: u64) -> Result<f64> {
    check_subcritical_alpha(alpha, p)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let pp = p.get();
    let pm1 = pp - 1.0;
    let x = n as f64;
    if alpha == 0.0 {
        let theta = pm1 / pp;
        let inv = 1.0 / x;
        let left = -(theta * (-inv).ln_1p()).exp_m1();
        let right = (theta * inv.ln_1p()).exp_m1();
        return Ok(left.powf(pm1) - right.powf(pm1) - (theta * inv).powf(pp));
    }
    if alpha > pm1 {
        let hm1 = sinhc_minus_one(series_rate(alpha, pp) / x);
        // n^alpha (1 - h^{1-p})
        return Ok(x.powf(alpha) * -(-pm1 * hm1.ln_1p()).exp_m1());
    }
    if n == 1 {
        return Ok(1.0 / (pp - alpha));
    }
    // n^alpha - (n-1)^alpha
    Ok(x.powf(alpha) * -(alpha * (-1.0 / x).ln_1p()).exp_m1())
}

/// [`subcritical_weight`] as a [`Weight`] for `alpha > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubcriticalWeight {
    alpha: f64,
    p: Exponent,
}

impl SubcriticalWeight {
    pub fn new(alpha: f64, p: Exponent) -> Result<Self> {
        check_subcritical_alpha(alpha, p)?;
        if alpha == 0.0 {
            return Err(Error::Domain("alpha = 0 has no kinetic remainder weight".into()));
        }
        Ok(SubcriticalWeight { alpha, p })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn supercritical(&self) -> bool {
        self.alpha > self.p.get() - 1.0
    }
}

impl Weight for SubcriticalWeight {
    fn eval(&self, n: u64) -> Result<f64> {
        subcritical_weight(self.alpha, self.p, n)
    }

    fn envelope(&self, from: u64) -> Envelope {
        let from = from.max(2);
        let x0 = from as f64;
        let a = self.alpha;
        if self.supercritical() {
            // (p-1)(t^2/6 - t^4/180) <= (p-1) log h <= (p-1) t^2/6 with t = theta/n,
            // and y - y^2/2 <= 1 - e^{-y} <= y.
            let pm1 = self.p.get() - 1.0;
            let theta = series_rate(a, self.p.get());
            let upper = pm1 * theta * theta / 6.0;
            let t = theta / x0;
            if t > 1.0 {
                return Envelope::Power {
                    from,
                    lower: (0.0, a - 2.0),
                    upper: (upper, a - 2.0),
                };
            }
            let y = pm1 * (t * t / 6.0 - t.powi(4) / 180.0);
            let lower = (y - 0.5 * y * y) / (t * t) * theta * theta;
            Envelope::Power {
                from,
                lower: (lower, a - 2.0),
                upper: (upper, a - 2.0),
            }
        } else {
            // n^a - (n-1)^a = a * xi^{a-1} for some xi in (n-1, n)
            let shrink = (1.0 - 1.0 / x0).powf(a - 1.0);
            let (lo, hi) = if a < 1.0 { (a, a * shrink) } else { (a * shrink, a) };
            Envelope::Power {
                from,
                lower: (lo, a - 1.0),
                upper: (hi, a - 1.0),
            }
        }
    }

    fn asymptotic(&self) -> Asymptotic {
        if self.supercritical() {
            let theta = series_rate(self.alpha, self.p.get());
            Asymptotic::Power {
                coef: (self.p.get() - 1.0) * theta * theta / 6.0,
                exponent: self.alpha - 2.0,
            }
        } else {
            Asymptotic::Power {
                coef: self.alpha,
                exponent: self.alpha - 1.0,
            }
        }
    }

    fn eval_rel_error(&self) -> f64 {
        64.0 * f64::EPSILON
    }
}

/// Pointwise remainder weight `R_alpha` for the energy gap.
#[derive(Debug)]
pub enum RemainderWeight {
    /// The explicit residual at `alpha = 0`.
    Residual(Exponent),
    /// Optimal weight of the kinetic weight `w_alpha`.
    Optimal(HardyWeight),
}

impl RemainderWeight {
    pub fn new(alpha: f64, p: Exponent) -> Result<Self> {
        check_subcritical_alpha(alpha, p)?;
        if alpha == 0.0 {
            return Ok(RemainderWeight::Residual(p));
        }
        let kinetic = SubcriticalWeight::new(alpha, p)?;
        Ok(RemainderWeight::Optimal(HardyWeight::from_weight(Arc::new(kinetic), p)?))
    }

    pub fn value(&self, n: u64) -> Result<f64> {
        match self {
            RemainderWeight::Residual(p) => subcritical_weight(0.0, *p, n),
            RemainderWeight::Optimal(w) => w.value(n),
        }
    }

    /// Absolute error bound on [`RemainderWeight::value`].
    pub fn uncertainty(&self, n: u64) -> Result<f64> {
        match self {
            RemainderWeight::Residual(_) => Ok(64.0 * f64::EPSILON * (n as f64).powi(2) * self.value(n)?.abs()),
            RemainderWeight::Optimal(w) => Ok(w.point(n)?.uncertainty),
        }
    }
}

/// `R_alpha(n)`.
pub fn remainder_weight(alpha: f64, p: Exponent, n: u64) -> Result<f64> {
    RemainderWeight::new(alpha, p)?.value(n)
}

/// Energy gap of the sharp inequality against the remainder norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    #[serde(with = "json_f64")]
    pub energy: f64,
    #[serde(with = "json_f64")]
    pub remainder_norm_p: f64,
    #[serde(with = "json_f64")]
    pub margin: f64,
    /// `remainder_norm_p^{1/p}`.
    #[serde(with = "json_f64")]
    pub d: f64,
    /// `d^p`.
    #[serde(with = "json_f64")]
    pub psi_of_d: f64,
    /// Rounding slack the margin should be judged against.
    #[serde(with = "json_f64")]
    pub slack: f64,
}

/// Reusable evaluator for [`stability_margin`] at fixed `(alpha, p)`.
#[derive(Debug)]
pub struct StabilityProbe {
    alpha: f64,
    p: Exponent,
    remainder: RemainderWeight,
}

impl StabilityProbe {
    pub fn new(alpha: f64, p: Exponent) -> Result<Self> {
        Ok(StabilityProbe {
            alpha,
            p,
            remainder: RemainderWeight::new(alpha, p)?,
        })
    }

    pub fn report(&self, u: &FiniteSeq) -> Result<StabilityReport> {
        let pp = self.p.get();
        let energy = hardy_check(u, self.alpha, self.p)?;
        let mut norm = Accumulator::new();
        let mut norm_err = 0.0;
        for (n, v) in u.iter() {
            if v == 0.0 {
                continue;
            }
            let w = v.abs().powf(pp);
            norm.push_evaluated(w * self.remainder.value(n)?);
            norm_err += w * self.remainder.uncertainty(n)?;
        }
        let remainder_norm_p = norm.value();
        let d = remainder_norm_p.powf(1.0 / pp);
        let slack = 1e-12 * margin_scale(u, self.alpha, self.p)? + norm_err + norm.error_bound();
        Ok(StabilityReport {
            energy,
            remainder_norm_p,
            margin: energy - remainder_norm_p,
            d,
            psi_of_d: d.powf(pp),
            slack,
        })
    }
}

/// Energy, remainder norm and their gap for one sequence.
pub fn stability_margin(u: &FiniteSeq, alpha: f64, p: Exponent) -> Result<StabilityReport> {
    StabilityProbe::new(alpha, p)?.report(u)
}

/// Least-squares expansion `sum_k c_k n^{-k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub powers: Vec<i32>,
    pub coefficients: Vec<f64>,
    /// Extra orders fitted and discarded.
    pub nuisance: Vec<i32>,
    /// Largest absolute residual relative to the largest value.
    pub residual: f64,
    /// Condition number of the column-scaled design matrix.
    pub condition: f64,
}

impl FitResult {
    pub fn coefficient(&self, power: i32) -> Option<f64> {
        self.powers.iter().position(|&k| k == power).map(|i| self.coefficients[i])
    }
}

pub const FIT_CONDITION_LIMIT: f64 = 1e12;
const NUISANCE_ORDERS: i32 = 3;

/// `n = 2^6, ..., 2^14`.
pub fn geometric_grid() -> Vec<u64> {
    (6..=14).map(|j| 1u64 << j).collect()
}

/// Fit `values[i] ~ sum_k c_k grid[i]^{-k}` over `powers`, absorbing up to
/// three higher orders as nuisance terms.
pub fn asymptotic_fit(grid: &[u64], values: &[f64], powers: &[i32]) -> Result<FitResult> {
    if grid.len() != values.len() {
        return Err(Error::Domain("grid and values differ in length".into()));
    }
    if powers.is_empty() {
        return Err(Error::Domain("at least one power is required".into()));
    }
    if grid.len() < powers.len() + 2 {
        return Err(Error::Domain(format!(
            "{} grid points cannot fit {} powers",
            grid.len(),
            powers.len()
        )));
    }
    if grid.contains(&0) {
        return Err(Error::Domain("grid points must be positive".into()));
    }
    let top = *powers.iter().max().expect("nonempty");
    let spare = (grid.len() - powers.len() - 2) as i32;
    let nuisance: Vec<i32> = (1..=NUISANCE_ORDERS.min(spare))
        .map(|j| top + j)
        .filter(|k| !powers.contains(k))
        .collect();
    let cols: Vec<i32> = powers.iter().chain(nuisance.iter()).copied().collect();
    // x = n_min / n keeps the columns comparable
    let n0 = *grid.iter().min().expect("nonempty") as f64;
    let design = DMatrix::from_fn(grid.len(), cols.len(), |i, j| (n0 / grid[i] as f64).powi(cols[j]));
    let mut scaled = design.clone();
    let mut norms = Vec::with_capacity(cols.len());
    for j in 0..cols.len() {
        let nrm = scaled.column(j).norm();
        scaled.column_mut(j).unscale_mut(nrm);
        norms.push(nrm);
    }
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= FIT_CONDITION_LIMIT) {
        return Err(Error::IllConditioned(condition));
    }
    let rhs = DVector::from_column_slice(values);
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Domain(format!("least squares failed: {e}")))?;
    let fitted = &scaled * &sol;
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rmax = (rhs - fitted).amax();
    let residual = if vmax > 0.0 { rmax / vmax } else { rmax };
    let coefficients = powers
        .iter()
        .enumerate()
        .map(|(j, &k)| sol[j] / norms[j] * n0.powi(k))
        .collect();
    Ok(FitResult {
        powers: powers.to_vec(),
        coefficients,
        nuisance,
        residual,
        condition,
    })
}

/// Fit `w_nu(n) / n^alpha` for `nu = n^alpha` over [`geometric_grid`].
pub fn optimal_weight_expansion(alpha: f64, p: Exponent, powers: &[i32]) -> Result<FitResult> {
    let grid = geometric_grid();
    let weight = HardyWeight::from_weight(Arc::new(WeightFamily::Power(alpha)), p)?;
    let values = grid
        .iter()
        .map(|&n| Ok(weight.value(n)? / (n as f64).powf(alpha)))
        .collect::<Result<Vec<_>>>()?;
    asymptotic_fit(&grid, &values, powers)
}

/// Index from which the discrete optimal weight stays below the continuous
/// profile `A_cont n^{alpha-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapWitness {
    pub n: u64,
    /// Persistence verified on `[n, verified_to]`.
    pub verified_to: u64,
    /// `A_cont n^{alpha-2} - w(n)` at the witness.
    pub deficit: f64,
    /// `w(N) / (A_cont N^{alpha-2})` at `N = verified_to`.
    pub ratio_at_end: f64,
}

/// Smallest `n <= scan_to` with `w_nu(k) < A_cont k^{alpha-2}` for every
/// `k` in `[n, 10 n]`, for `nu = n^alpha`, `p = 2` and negative integer `alpha`.
pub fn discrete_vs_continuous_gap(alpha: f64, scan_to: u64) -> Result<GapWitness> {
    if !(alpha < 0.0 && alpha.fract() == 0.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must be a negative integer")));
    }
    if scan_to == 0 {
        return Err(Error::Domain("scan bound must be positive".into()));
    }
    let p = Exponent::new(2.0)?;
    let a_cont = (alpha - 1.0).powi(2) / 4.0;
    let weight = HardyWeight::from_weight(Arc::new(WeightFamily::Power(alpha)), p)?;
    let end = scan_to * 10;
    let points = weight.points(1, end)?;
    let profile = |n: u64| a_cont * (n as f64).powf(alpha - 2.0);
    let below: Vec<bool> = points
        .iter()
        .map(|pt| pt.value + pt.uncertainty < profile(pt.n))
        .collect();
    // next_fail[i]: first index >= i+1 where the deficit fails
    let mut next_fail = vec![u64::MAX; below.len() + 1];
    for i in (0..below.len()).rev() {
        next_fail[i] = if below[i] { next_fail[i + 1] } else { i as u64 + 1 };
    }
    for n in 1..=scan_to {
        let i = n as usize - 1;
        if below[i] && next_fail[i] > 10 * n {
            let pt = points[i];
            let last = points[10 * n as usize - 1];
            return Ok(GapWitness {
                n,
                verified_to: 10 * n,
                deficit: profile(n) - pt.value,
                ratio_at_end: last.value / profile(last.n),
            });
        }
    }
    Err(Error::NotFound(scan_to))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    #[test]
    fn power_sum_values() {
        assert_eq!(power_sum(1.0, 5), 5.0);
        assert_eq!(power_sum(2.0, 4), 10.0);
        assert!((power_sum(1.5, 2) - (1.0 + 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(power_sum(3.0, 0), 0.0);
        let cached = PowerSum::new(2.5, 100);
        assert_eq!(cached.get(100).unwrap(), power_sum(2.5, 100));
        assert!(cached.get(101).is_err());
    }

    #[test]
    fn power_sum_inequality_examples() {
        let m = prop41_check(1.5, 2, Part::I).unwrap();
        let expect = 4.0 * 2f64.powf(1.5) / 3.0 - (2.0 + 2f64.sqrt());
        assert!((m - expect).abs() < 1e-14);
        assert!((m - 0.357022).abs() < 1e-6);
        assert_eq!(prop41_check(1.0, 6, Part::II).unwrap(), 6.0);
        let m = prop41_check(2.0, 2, Part::III).unwrap();
        assert!((m - (3.0 - std::f64::consts::E)).abs() < 1e-15);
        assert!(prop41_check(2.5, 3, Part::I).is_err());
        assert!(prop41_check(-1.0, 3, Part::II).is_err());
        assert!(prop41_check(1.5, 1, Part::III).is_err());
    }

    #[test]
    fn cor43_examples() {
        let k1 = cor43_gap(3.0, p(2.0), 2, Some(1)).unwrap();
        assert!((k1 - 1.0 / 6.0).abs() < 1e-15);
        let closed = cor43_gap(3.0, p(2.0), 2, None).unwrap();
        assert!((closed - (2.0 / 3.0 - 0.5f64.sinh())).abs() < 1e-15);
        // closed-form telescoping 4/(n^3 - n) - 4/n^3 = 4/(n^3 (n^2 - 1))
        let n = 10_000.0f64;
        let big = cor43_gap(3.0, p(2.0), 10_000, Some(1)).unwrap();
        let exact = 4.0 / (n.powi(3) * (n * n - 1.0));
        assert!((big - exact).abs() < 1e-6 * exact, "{big} vs {exact}");
        assert!(cor43_gap(1.0, p(2.0), 5, Some(1)).is_err());
        assert!(cor43_gap(3.0, p(2.0), 5, Some(0)).is_err());
    }

    #[test]
    fn series_of_h_matches_closed_form() {
        assert!((remainder_h(3.0, p(2.0), 1).unwrap() - 1f64.sinh()).abs() < 1e-15);
        assert!((remainder_h(4.0, p(3.0), 2).unwrap() - 0.25f64.sinh() / 0.25).abs() < 1e-15);
        assert!((remainder_h(4.0, p(3.0), 2).unwrap() - 1.010449).abs() < 1e-6);
        let hm1 = remainder_h_minus_one(3.0, p(2.0), 1_000_000).unwrap();
        assert!((hm1 / (1.0 / 6e12) - 1.0).abs() < 1e-10);
        let s = remainder_h_series(3.0, p(2.0), 1, 20).unwrap();
        assert!((s - 1f64.sinh()).abs() < 1e-15);
        let s1 = remainder_h_series(3.0, p(2.0), 3, 1).unwrap();
        assert_eq!(s1, 1.0);
    }

    #[test]
    fn lemma_function_values() {
        assert_eq!(lemma42_f(0.0, 2.0), 0.0);
        let e = std::f64::consts::E;
        let f1 = lemma42_f(1.0, 2.0);
        assert!((f1 - (2.0 * (1.0 - (-2.0f64).exp()) - e + 1.0)).abs() < 1e-15);
        let half = lemma42_f(0.5, 2.0);
        let direct = 1.5 * (1.0 - (-1.0f64).exp()) - (2.0f64 / 3.0).exp() + 1.0;
        assert!((half - direct).abs() < 1e-15);
        assert!((half - 4.47e-4).abs() < 1e-6);
    }

    #[test]
    fn lemma_function_is_accurate_near_zero() {
        // high-precision reference values
        for (x, g, want) in [
            (1e-4, 2.0, 8.886666990440641e-26),
            (1e-3, 2.0, 8.8666990120953e-20),
            (1e-4, 3.0, 7.499250052497001e-17),
            (1e-4, 2.25, 1.0545425041627849e-17),
        ] {
            let got = lemma42_f(x, g);
            assert!((got - want).abs() < 1e-9 * want, "F({x},{g}) = {got} vs {want}");
        }
        // series and direct forms agree where both are accurate
        for (x, g) in [(0.2, 2.5), (0.01, 40.0), (0.24, 2.0)] {
            let direct = (1.0f64 + x).powf(g - 1.0) * -(-g * x).exp_m1() - (g * x / (1.0 + x)).exp_m1();
            let s = lemma42_series(x, g);
            assert!((s - direct).abs() < 1e-10 * direct.abs(), "{x} {g}: {s} vs {direct}");
        }
    }

    #[test]
    fn subcritical_weight_examples() {
        let w = subcritical_weight(3.0, p(2.0), 1).unwrap();
        assert!((w - (1.0 - 1.0 / 1f64.sinh())).abs() < 1e-15);
        assert!((w - 0.149082).abs() < 1e-6);
        assert!((subcritical_weight(0.5, p(2.0), 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let w3 = subcritical_weight(0.5, p(2.0), 3).unwrap();
        assert!((w3 - (3f64.sqrt() - 2f64.sqrt())).abs() < 1e-15);
        let r0 = subcritical_weight(0.0, p(2.0), 1).unwrap();
        assert!((r0 - (2.0 - 2f64.sqrt() - 0.25)).abs() < 1e-15);
        assert!(subcritical_weight(1.0, p(2.0), 1).is_err());
        assert!(subcritical_weight(-0.5, p(2.0), 1).is_err());
    }

    #[test]
    fn subcritical_envelope_brackets_values() {
        for (a, pp) in [(3.0, 2.0), (4.0, 3.0), (0.5, 2.0), (1.5, 3.0), (10.0, 2.0)] {
            let w = SubcriticalWeight::new(a, p(pp)).unwrap();
            for from in [2u64, 10, 1000] {
                let Envelope::Power { lower, upper, .. } = w.envelope(from) else {
                    panic!("power envelope expected")
                };
                for n in [from, from + 1, 3 * from, 100 * from] {
                    let v = w.eval(n).unwrap();
                    let x = n as f64;
                    assert!(lower.0 * x.powf(lower.1) <= v * (1.0 + 1e-12), "{a} {pp} n={n}");
                    assert!(v <= upper.0 * x.powf(upper.1) * (1.0 + 1e-12), "{a} {pp} n={n}");
                }
            }
        }
    }

    #[test]
    fn remainder_weight_is_positive_with_expected_decay() {
        let r = RemainderWeight::new(3.0, p(2.0)).unwrap();
        let mut scaled = Vec::new();
        for n in [1u64, 10, 100, 1000, 10_000] {
            let v = r.value(n).unwrap();
            assert!(v > r.uncertainty(n).unwrap(), "n={n}: {v}");
            scaled.push(v * (n as f64).powf(4.0 - 3.0));
        }
        let last = *scaled.last().unwrap();
        assert!(scaled.iter().all(|s| *s < 2.0 * last + 1.0));
        let r = RemainderWeight::new(0.5, p(2.0)).unwrap();
        let a = r.value(1000).unwrap() * 1000f64.powf(2.5);
        let b = r.value(10_000).unwrap() * 10_000f64.powf(2.5);
        assert!(a > 0.0 && b > 0.0 && (a / b - 1.0).abs() < 0.1, "{a} {b}");
    }

    #[test]
    fn stability_for_point_mass() {
        let rep = stability_margin(&FiniteSeq::delta(1), 0.0, p(2.0)).unwrap();
        assert!((rep.energy - 1.75).abs() < 1e-15);
        assert!((rep.remainder_norm_p - 0.335786).abs() < 1e-6);
        assert!((rep.margin - (1.75 - (1.75 - 2f64.sqrt()))).abs() < 1e-15);
        assert!((rep.psi_of_d - rep.remainder_norm_p).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_synthetic_models() {
        let grid = geometric_grid();
        let vals: Vec<f64> = grid.iter().map(|&n| 0.7 / (n as f64).powi(2)).collect();
        let fit = asymptotic_fit(&grid, &vals, &[2]).unwrap();
        assert!((fit.coefficient(2).unwrap() - 0.7).abs() < 1e-10);
        let vals: Vec<f64> = grid
            .iter()
            .map(|&n| {
                let x = n as f64;
                1.0 / x.powi(2) - 1.5 / x.powi(3) + 2.0 / x.powi(4)
            })
            .collect();
        let fit = asymptotic_fit(&grid, &vals, &[2, 3]).unwrap();
        assert!((fit.coefficient(3).unwrap() + 1.5).abs() < 1e-8);
        assert!(asymptotic_fit(&grid[..3], &vals[..3], &[2, 3]).is_err());
    }

    #[test]
    fn fit_rejects_degenerate_design() {
        let grid = vec![64, 64, 64, 64, 64];
        let vals = vec![1.0; 5];
        assert!(matches!(asymptotic_fit(&grid, &vals, &[2, 3]), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn expansion_coefficients() {
        let fit = optimal_weight_expansion(-1.0, p(2.0), &[2, 3]).unwrap();
        assert!((fit.coefficient(2).unwrap() - 1.0).abs() < 1e-3);
        assert!((fit.coefficient(3).unwrap() + 1.5).abs() < 1e-3);
    }

    #[test]
    fn gap_witness_and_domain() {
        let w = discrete_vs_continuous_gap(-1.0, 1000).unwrap();
        assert!(w.deficit > 0.0 && w.ratio_at_end < 1.0);
        assert!(matches!(discrete_vs_continuous_gap(0.0, 10), Err(Error::Domain(_))));
        assert!(matches!(discrete_vs_continuous_gap(-1.5, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn alternate_routes() {
        let c = direct_route_check(3.0, p(2.0), 5).unwrap();
        assert!(c.min() >= 0.0, "{c:?}");
        let c = direct_route_check(3.5, p(3.0), 5).unwrap();
        assert!(c.min() >= 0.0, "{c:?}");
        assert!(direct_route_check(5.0, p(3.0), 5).is_err());
        assert!(midpoint_bound_check(5.0, p(2.0), 3).unwrap() >= 0.0);
        assert!(midpoint_bound_check(2.5, p(2.0), 3).is_err());
        let all = midpoint_bound_margins(5.0, p(2.0), 50).unwrap();
        for r in [1u64, 7, 50] {
            let one = midpoint_bound_check(5.0, p(2.0), r).unwrap();
            assert!((all[r as usize - 1] - one).abs() < 1e-12, "{r}");
        }
    }
}
