//! The path graph on `{0, 1, 2, ...}` with edge weights `b(k-1, k) = nu(k)`:
//! its p-Laplacian, ground state and optimal Hardy weight.

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::enclosure::{Accumulator, Enclosure};
use crate::error::{Error, Result};
use crate::weights::{Envelope, Exponent, Weight};

/// `|z|^e sgn(z)`.
#[inline]
pub fn signed_power(z: f64, e: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z.abs().powf(e).copysign(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `sum nu^{-1/(p-1)}` diverges; `G` is the prefix dual sum.
    Divergent,
    /// The dual sum converges; `G` is its tail.
    Convergent,
}

#[derive(Debug, Default)]
struct Memo {
    /// `G(0), G(1), ...`
    g: Vec<f64>,
    /// Absolute error bounds matching `g`.
    err: Vec<f64>,
    /// Running prefix sum (divergent branch).
    acc: Accumulator,
}

/// Ground state of the half-line p-Laplacian for the edge weight `nu`.
///
/// Values are memoised; concurrent readers see a consistent prefix.
#[derive(Debug)]
pub struct GroundState {
    nu: Arc<dyn Weight>,
    p: Exponent,
    branch: Branch,
    memo: RwLock<Memo>,
}

impl GroundState {
    pub fn new(nu: Arc<dyn Weight>, p: Exponent) -> Result<Self> {
        let total = nu.powered_tail_sum(p.dual(), 1)?;
        let branch = if total.lo.is_infinite() {
            Branch::Divergent
        } else if total.hi.is_finite() {
            Branch::Convergent
        } else {
            return Err(Error::TailUnknown(
                "cannot decide whether the dual sum converges".into(),
            ));
        };
        let memo = Memo {
            g: vec![0.0],
            err: vec![0.0],
            acc: Accumulator::new(),
        };
        Ok(GroundState {
            nu,
            p,
            branch,
            memo: RwLock::new(memo),
        })
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn p(&self) -> Exponent {
        self.p
    }

    pub fn nu(&self) -> &Arc<dyn Weight> {
        &self.nu
    }

    /// Dual term `nu(k)^{-1/(p-1)}`.
    pub fn dual_term(&self, k: u64) -> Result<f64> {
        let w = self.nu.eval(k)?;
        Ok(w.powf(self.p.dual()))
    }

    fn dual_rel_error(&self) -> f64 {
        (1.0 + self.p.dual().abs()) * self.nu.eval_rel_error() + 2.0 * f64::EPSILON
    }

    fn ensure(&self, n: u64) -> Result<()> {
        if self.memo.read().expect("memo lock").g.len() as u64 > n {
            return Ok(());
        }
        let mut memo = self.memo.write().expect("memo lock");
        if memo.g.len() as u64 > n {
            return Ok(());
        }
        let rel = self.dual_rel_error();
        match self.branch {
            Branch::Divergent => {
                let start = memo.g.len() as u64;
                for k in start..=n {
                    let d = self.dual_term(k)?;
                    memo.acc.push_with_error(d, d * rel);
                    let v = memo.acc.value();
                    let e = memo.acc.error_bound();
                    memo.g.push(v);
                    memo.err.push(e);
                }
            }
            Branch::Convergent => {
                // Recompute from a fresh anchor past n.
                let anchor = (n + 2).next_power_of_two().max(1024);
                let tail = self.nu.powered_tail_sum(self.p.dual(), anchor)?;
                let (t_mid, t_rad) = (tail.mid(), 0.5 * tail.width());
                let len = anchor as usize;
                let mut g = vec![0.0; len];
                let mut err = vec![0.0; len];
                let mut acc = Accumulator::new();
                for k in (1..anchor).rev() {
                    g[k as usize] = acc.value() + t_mid;
                    err[k as usize] = acc.error_bound() + t_rad + f64::EPSILON * g[k as usize];
                    let d = self.dual_term(k)?;
                    acc.push_with_error(d, d * rel);
                }
                memo.g = g;
                memo.err = err;
            }
        }
        Ok(())
    }

    /// `G(n)` as a point value and absolute error bound; `G(0) = 0` on both branches.
    pub fn value_with_error(&self, n: u64) -> Result<(f64, f64)> {
        self.ensure(n)?;
        let memo = self.memo.read().expect("memo lock");
        Ok((memo.g[n as usize], memo.err[n as usize]))
    }

    pub fn value(&self, n: u64) -> Result<Enclosure> {
        let (v, e) = self.value_with_error(n)?;
        Ok(Enclosure::around(v, e))
    }

    /// `G(0..=n)` as point values.
    pub fn values(&self, n: u64) -> Result<Vec<f64>> {
        self.ensure(n)?;
        let memo = self.memo.read().expect("memo lock");
        Ok(memo.g[..=n as usize].to_vec())
    }
}

/// `ground_state(nu, p)`.
pub fn ground_state<W: Weight + Clone + 'static>(nu: &W, p: Exponent) -> Result<GroundState> {
    GroundState::new(Arc::new(nu.clone()), p)
}

/// `(L f)(n)` on the path graph; `f[k]` is `f(k)` for `k >= 0`.
pub fn p_laplacian_apply<W: Weight + ?Sized>(nu: &W, p: Exponent, f: &[f64], n: u64) -> Result<f64> {
    let e = p.get() - 1.0;
    let idx = n as usize;
    if f.len() < idx + 2 {
        return Err(Error::Domain(format!(
            "p-Laplacian at n = {n} needs f on [0, {}], got {} values",
            n + 1,
            f.len()
        )));
    }
    let right = nu.eval(n + 1)? * signed_power(f[idx] - f[idx + 1], e);
    if n == 0 {
        return Ok(right);
    }
    let left = nu.eval(n)? * signed_power(f[idx] - f[idx - 1], e);
    Ok(left + right)
}

/// One value of the optimal weight with its propagated uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPoint {
    pub n: u64,
    pub value: f64,
    pub uncertainty: f64,
}

/// Optimal p-Hardy weight `H[G^{(p-1)/p}] / G^{(p-1)^2/p}` for the edge weight `nu`.
#[derive(Debug)]
pub struct HardyWeight {
    ground: GroundState,
}

impl HardyWeight {
    pub fn new(ground: GroundState) -> Self {
        HardyWeight { ground }
    }

    pub fn from_weight(nu: Arc<dyn Weight>, p: Exponent) -> Result<Self> {
        Ok(HardyWeight::new(GroundState::new(nu, p)?))
    }

    pub fn ground(&self) -> &GroundState {
        &self.ground
    }

    pub fn point(&self, n: u64) -> Result<WeightPoint> {
        if n == 0 {
            return Err(Error::Domain("the optimal weight lives on n >= 1".into()));
        }
        let gs = &self.ground;
        let p = gs.p.get();
        let pm1 = p - 1.0;
        let theta = pm1 / p;
        let nu_n = gs.nu.eval(n)?;
        let nu_next = gs.nu.eval(n + 1)?;
        let (g, g_err) = gs.value_with_error(n)?;
        let d_n = gs.dual_term(n)?;
        let d_next = gs.dual_term(n + 1)?;
        // Cancellation-free ratios of neighbouring ground-state powers.
        let (left, right) = match gs.branch {
            Branch::Divergent => {
                let a = if n == 1 {
                    1.0
                } else {
                    -(theta * (-d_n / g).ln_1p()).exp_m1()
                };
                let b = (theta * (d_next / g).ln_1p()).exp_m1();
                (nu_n * a.powf(pm1), -nu_next * b.powf(pm1))
            }
            Branch::Convergent => {
                let a = if n == 1 {
                    -1.0
                } else {
                    (theta * (d_n / g).ln_1p()).exp_m1()
                };
                let b = -(theta * (-d_next / g).ln_1p()).exp_m1();
                (-signed_power(a, pm1) * nu_n, nu_next * b.powf(pm1))
            }
        };
        let value = left + right;
        let rel_g = g_err / g + gs.dual_rel_error();
        let uncertainty =
            (left.abs() + right.abs()) * (2.0 * pm1.max(1.0) * rel_g + 32.0 * f64::EPSILON);
        Ok(WeightPoint { n, value, uncertainty })
    }

    pub fn value(&self, n: u64) -> Result<f64> {
        Ok(self.point(n)?.value)
    }

    /// `w(n)` for `n` in `[from, to]`.
    pub fn points(&self, from: u64, to: u64) -> Result<Vec<WeightPoint>> {
        self.ground.ensure(to + 1)?;
        (from.max(1)..=to).map(|n| self.point(n)).collect()
    }
}

impl Weight for HardyWeight {
    fn eval(&self, n: u64) -> Result<f64> {
        self.value(n)
    }

    fn envelope(&self, _from: u64) -> Envelope {
        Envelope::Unknown
    }

    fn eval_rel_error(&self) -> f64 {
        1e-10
    }
}

/// `w_nu(n)` for a single index.
pub fn optimal_hardy_weight<W: Weight + Clone + 'static>(nu: &W, p: Exponent, n: u64) -> Result<f64> {
    HardyWeight::from_weight(Arc::new(nu.clone()), p)?.value(n)
}

/// Window diagnostics for bounded oscillation of `G` and of `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationStats {
    /// `max max(G(n+1)/G(n), G(n)/G(n+1))` over `1 <= n < N`.
    pub sup_ratio: f64,
    pub sup_at: u64,
    /// Extremes of `nu(n+1)/nu(n)` over the terminal half `[N/2, N)`.
    pub m1_ratios: (f64, f64),
    pub heuristic: bool,
}

pub fn oscillation_stats<W: Weight + Clone + 'static>(nu: &W, p: Exponent, window: u64) -> Result<OscillationStats> {
    if window < 2 {
        return Err(Error::Domain("oscillation window needs N >= 2".into()));
    }
    let gs = GroundState::new(Arc::new(nu.clone()), p)?;
    let g = gs.values(window)?;
    let mut sup_ratio = 0.0f64;
    let mut sup_at = 1;
    for n in 1..window as usize {
        let r = (g[n + 1] / g[n]).max(g[n] / g[n + 1]);
        if r > sup_ratio {
            sup_ratio = r;
            sup_at = n as u64;
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for n in (window / 2).max(1)..window {
        let r = nu.eval(n + 1)? / nu.eval(n)?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(OscillationStats {
        sup_ratio,
        sup_at,
        m1_ratios: (lo, hi),
        heuristic: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    FailsAtConstantOne,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// `w/mu` decays along the window.
    Decaying,
    Stable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub verdict: Verdict,
    /// Start of a terminal segment where `mu > w` at every index.
    pub witness: Option<u64>,
    /// `(min, max)` of `w/mu` over the window.
    pub ratio_stats: (f64, f64),
    pub trend: Trend,
    /// Log-slope of `min w/mu` between `[N/4, N/2]` and `[N/2, N]`.
    pub decay_rate: f64,
    pub burn_in: u64,
    /// Only the failure branch is a statement about the window itself.
    pub heuristic: bool,
}

/// Ratios decaying faster than `n^{-DECAY_SLOPE}` count as vanishing.
pub const DECAY_SLOPE: f64 = 0.1;

/// Compare the optimal weight of `nu` with a candidate weight `mu` on `[1, N]`.
pub fn weight_comparison<N, M>(nu: &N, p: Exponent, mu: &M, window: u64) -> Result<ComparisonVerdict>
where
    N: Weight + Clone + 'static,
    M: Weight + ?Sized,
{
    if window == 0 {
        return Err(Error::Domain("comparison window is empty".into()));
    }
    let hw = HardyWeight::from_weight(Arc::new(nu.clone()), p)?;
    let pts = hw.points(1, window)?;
    let mut ratio = Vec::with_capacity(pts.len());
    let mut mu_above = Vec::with_capacity(pts.len());
    for pt in &pts {
        let m = mu.eval(pt.n)?;
        ratio.push(pt.value / m);
        mu_above.push(m > pt.value + pt.uncertainty);
    }
    let min = ratio.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratio.iter().cloned().fold(0.0, f64::max);
    let burn_in = (window / 10).max(16).min(window);

    let range_min = |a: u64, b: u64| -> f64 {
        let (a, b) = (a.max(1) as usize, (b.max(1) as usize).min(ratio.len()));
        ratio[a - 1..b].iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let decay_rate = if window >= 8 {
        let early = range_min(window / 4, window / 2);
        let late = range_min(window / 2, window);
        (early / late).ln() / 2f64.ln()
    } else {
        0.0
    };
    let trend = if decay_rate > DECAY_SLOPE {
        Trend::Decaying
    } else {
        Trend::Stable
    };

    // Longest terminal run with mu strictly above w.
    let run_start = mu_above
        .iter()
        .rposition(|&above| !above)
        .map(|i| i as u64 + 2)
        .unwrap_or(1);
    let run_len = if run_start <= window { window - run_start + 1 } else { 0 };

    let (verdict, witness) = if trend == Trend::Decaying {
        (Verdict::Inconclusive, None)
    } else if run_len >= burn_in {
        (Verdict::FailsAtConstantOne, Some(run_start))
    } else if range_min(burn_in, window) > 0.0 {
        (Verdict::Holds, None)
    } else {
        (Verdict::Inconclusive, None)
    };
    Ok(ComparisonVerdict {
        verdict,
        witness,
        ratio_stats: (min, max),
        trend,
        decay_rate,
        burn_in,
        heuristic: verdict != Verdict::FailsAtConstantOne,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightFamily;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    #[test]
    fn signed_power_examples() {
        assert_eq!(signed_power(-2.0, 1.0), -2.0);
        assert_eq!(signed_power(0.0, 0.5), 0.0);
        assert_eq!(signed_power(-4.0, 0.5), -2.0);
    }

    #[test]
    fn ground_state_examples() {
        let g = ground_state(&WeightFamily::Power(0.0), p(2.0)).unwrap();
        assert_eq!(g.branch(), Branch::Divergent);
        assert_eq!(g.values(5).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);

        let g = ground_state(&WeightFamily::Power(1.0), p(2.0)).unwrap();
        assert!(g.value(3).unwrap().contains(11.0 / 6.0));

        let g = ground_state(&WeightFamily::Power(3.0), p(2.0)).unwrap();
        assert_eq!(g.branch(), Branch::Convergent);
        let z3m1 = 0.202_056_903_159_594_3;
        let v = g.value(1).unwrap();
        assert!((v.mid() - z3m1).abs() < 1e-14, "{v}");
        assert_eq!(g.value(0).unwrap(), Enclosure::zero());
    }

    #[test]
    fn laplacian_examples() {
        let one = WeightFamily::Power(0.0);
        let f: Vec<f64> = (0..10).map(|n| n as f64).collect();
        assert_eq!(p_laplacian_apply(&one, p(2.0), &f, 5).unwrap(), 0.0);
        let delta = [0.0, 1.0, 0.0];
        assert_eq!(p_laplacian_apply(&one, p(2.0), &delta, 1).unwrap(), 2.0);
        assert_eq!(p_laplacian_apply(&one, p(2.0), &delta, 0).unwrap(), -1.0);
        assert!(p_laplacian_apply(&one, p(2.0), &delta, 2).is_err());

        let nu = WeightFamily::Power(3.0);
        let g = ground_state(&nu, p(2.0)).unwrap().values(4).unwrap();
        assert!(p_laplacian_apply(&nu, p(2.0), &g, 2).unwrap().abs() < 1e-14);
    }

    #[test]
    fn optimal_weight_examples() {
        let one = WeightFamily::Power(0.0);
        let w1 = optimal_hardy_weight(&one, p(2.0), 1).unwrap();
        assert!((w1 - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        let w100 = optimal_hardy_weight(&one, p(2.0), 100).unwrap();
        let series = 1.0 / (4.0 * 1e4) + 5.0 / (64.0 * 1e8);
        assert!((w100 - series).abs() < 1e-10);
        for pp in [1.5, 2.0, 3.0, 4.5] {
            let th = (pp - 1.0) / pp;
            let closed = (1.0 - 0.9f64.powf(th)).powf(pp - 1.0) - (1.1f64.powf(th) - 1.0).powf(pp - 1.0);
            let w = optimal_hardy_weight(&one, p(pp), 10).unwrap();
            assert!((w - closed).abs() < 1e-12 * closed.abs(), "p={pp}: {w} vs {closed}");
        }
    }

    #[test]
    fn oscillation_examples() {
        let s = oscillation_stats(&WeightFamily::Power(0.0), p(2.0), 100).unwrap();
        assert_eq!(s.sup_ratio, 2.0);
        assert_eq!(s.sup_at, 1);
        let s = oscillation_stats(&WeightFamily::Power(5.0), p(2.0), 1000).unwrap();
        assert!((s.m1_ratios.0 - 1.0).abs() < 0.02 && (s.m1_ratios.1 - 1.0).abs() < 0.02);
    }

    #[test]
    fn comparison_examples() {
        let one = WeightFamily::Power(0.0);
        let quarter = WeightFamily::scaled(0.25, WeightFamily::Power(-2.0)).unwrap();
        let v = weight_comparison(&one, p(2.0), &quarter, 10_000).unwrap();
        assert_eq!(v.verdict, Verdict::Holds);
        assert!(v.ratio_stats.0 >= 1.0);

        let v = weight_comparison(&WeightFamily::Power(-1.0), p(2.0), &WeightFamily::Power(-3.0), 10_000)
            .unwrap();
        assert_eq!(v.verdict, Verdict::FailsAtConstantOne);
        assert!(v.witness.is_some());

        let v = weight_comparison(&one, p(2.0), &WeightFamily::Power(-1.0), 10_000).unwrap();
        assert_eq!(v.verdict, Verdict::Inconclusive);
        assert_eq!(v.trend, Trend::Decaying);
    }
}
