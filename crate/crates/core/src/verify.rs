//! Grid sweeps over the margin checks, run in parallel and reduced to the
//! smallest margin and where it occurs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    cor43_margin, direct_route_margin, lemma42_f, midpoint_bound, midpoint_bound_margins, optimal_weight_expansion,
    prop41_margin, Part, PowerSum, StabilityProbe,
};
use crate::enclosure::json_f64;
use crate::error::{Error, Result};
use crate::sequence::{RandomSeqSpec, SeqGenerator};
use crate::sharpness::{critical_hardy_check, hardy_check, margin_scale};
use crate::weights::Exponent;

/// Relative rounding allowance for margins of sums of nonnegative terms.
pub const REL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Prop41,
    Lemma42,
    Cor43,
    Alternate,
    Stability,
    Expansion,
    Hardy,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Prop41,
        Suite::Lemma42,
        Suite::Cor43,
        Suite::Alternate,
        Suite::Stability,
        Suite::Expansion,
        Suite::Hardy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Prop41 => "prop41",
            Suite::Lemma42 => "lemma42",
            Suite::Cor43 => "cor43",
            Suite::Alternate => "alternate",
            Suite::Stability => "stability",
            Suite::Expansion => "expansion",
            Suite::Hardy => "hardy",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::parse(s, "unknown suite"))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMargin {
    pub key: Vec<f64>,
    #[serde(with = "json_f64")]
    pub margin: f64,
    /// Rounding allowance: the point passes when `margin >= -slack`.
    #[serde(with = "json_f64")]
    pub slack: f64,
}

impl PointMargin {
    fn new(key: Vec<f64>, margin: f64) -> Self {
        PointMargin { key, margin, slack: 0.0 }
    }

    pub fn passed(&self) -> bool {
        self.margin >= -self.slack
    }
}

/// Reduction of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    /// Names of the key coordinates.
    pub axes: Vec<String>,
    pub points: usize,
    #[serde(with = "json_f64")]
    pub min_margin: f64,
    pub min_at: Vec<f64>,
    pub failures: usize,
    pub passed: bool,
}

impl SuiteReport {
    fn from_points(suite: Suite, axes: &[&str], mut pts: Vec<PointMargin>) -> Self {
        pts.sort_by(|a, b| cmp_key(&a.key, &b.key));
        let failures = pts.iter().filter(|p| !p.passed()).count();
        let worst = pts
            .iter()
            .min_by(|a, b| a.margin.partial_cmp(&b.margin).unwrap_or(Ordering::Equal));
        SuiteReport {
            suite,
            axes: axes.iter().map(|s| s.to_string()).collect(),
            points: pts.len(),
            min_margin: worst.map_or(f64::INFINITY, |p| p.margin),
            min_at: worst.map_or_else(Vec::new, |p| p.key.clone()),
            failures,
            passed: failures == 0,
        }
    }
}

fn cmp_key(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// `start, start + step, ...` up to `end` inclusive (within rounding).
pub fn steps(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as i64;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop41Grid {
    pub parts: Vec<Part>,
    /// Overrides the per-part default exponent grid.
    pub gammas: Option<Vec<f64>>,
    pub n_max: u64,
}

impl Default for Prop41Grid {
    fn default() -> Self {
        Prop41Grid {
            parts: vec![Part::I, Part::II, Part::III],
            gammas: None,
            n_max: 10_000,
        }
    }
}

fn default_gammas(part: Part) -> Vec<f64> {
    match part {
        Part::I => steps(1.05, 1.95, 0.05),
        Part::II => steps(0.1, 10.0, 0.1),
        Part::III => steps(-5.0, 50.0, 0.25),
    }
}

pub fn prop41_suite(grid: &Prop41Grid) -> Result<SuiteReport> {
    let mut jobs = Vec::new();
    for &part in &grid.parts {
        for g in grid.gammas.clone().unwrap_or_else(|| default_gammas(part)) {
            jobs.push((part, g));
        }
    }
    let pts = jobs
        .par_iter()
        .map(|&(part, g)| {
            let sums = PowerSum::new(g, grid.n_max);
            (2..=grid.n_max)
                .map(|n| {
                    let key = vec![part as u8 as f64 + 1.0, g, n as f64];
                    Ok(PointMargin::new(key, prop41_margin(&sums, n, part)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_points(
        Suite::Prop41,
        &["part", "gamma", "n"],
        pts.into_iter().flatten().collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma42Grid {
    pub n_max: u64,
    pub gammas: Vec<f64>,
    /// Points of the uniform `x` grid on `(0, 1]` checked at `gamma = 2`.
    pub dense_x: u64,
}

impl Default for Lemma42Grid {
    fn default() -> Self {
        Lemma42Grid {
            n_max: 10_000,
            gammas: steps(2.0, 50.0, 0.25),
            dense_x: 10_000,
        }
    }
}

pub fn lemma42_suite(grid: &Lemma42Grid) -> Result<SuiteReport> {
    let mut pts: Vec<PointMargin> = grid
        .gammas
        .par_iter()
        .flat_map_iter(|&g| {
            (1..=grid.n_max).map(move |n| {
                let x = 1.0 / n as f64;
                PointMargin::new(vec![x, g], lemma42_f(x, g))
            })
        })
        .collect();
    let dense = grid.dense_x.max(1);
    pts.par_extend((1..=dense).into_par_iter().map(|i| {
        let x = i as f64 / dense as f64;
        PointMargin::new(vec![x, 2.0], lemma42_f(x, 2.0))
    }));
    Ok(SuiteReport::from_points(Suite::Lemma42, &["x", "gamma"], pts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cor43Grid {
    pub pairs: Vec<(f64, f64)>,
    pub n_max: u64,
    /// `None` is the closed-form series.
    pub terms: Vec<Option<usize>>,
}

impl Default for Cor43Grid {
    fn default() -> Self {
        Cor43Grid {
            pairs: vec![(3.0, 2.0), (2.5, 1.5), (5.0, 3.0), (10.0, 2.0)],
            n_max: 10_000,
            terms: vec![Some(1), None],
        }
    }
}

/// Key encoding of the series length; the closed form sorts last.
fn terms_key(t: Option<usize>) -> f64 {
    t.map_or(f64::INFINITY, |k| k as f64)
}

pub fn cor43_suite(grid: &Cor43Grid) -> Result<SuiteReport> {
    let pts = grid
        .pairs
        .par_iter()
        .map(|&(alpha, pp)| {
            let p = Exponent::new(pp)?;
            let sums = PowerSum::new(alpha - pp + 1.0, grid.n_max);
            let mut out = Vec::new();
            for &t in &grid.terms {
                for n in 2..=grid.n_max {
                    let m = cor43_margin(&sums, alpha, p, n, t)?;
                    out.push(PointMargin::new(vec![alpha, pp, terms_key(t), n as f64], m));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_points(
        Suite::Cor43,
        &["alpha", "p", "terms", "n"],
        pts.into_iter().flatten().collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternateGrid {
    /// Pairs for the direct mean-value route (`p <= 2` or `alpha < p + 1`).
    pub direct: Vec<(f64, f64)>,
    /// Pairs for the midpoint bound (`alpha > p + 1`).
    pub midpoint: Vec<(f64, f64)>,
    pub n_max: u64,
}

impl Default for AlternateGrid {
    fn default() -> Self {
        AlternateGrid {
            direct: vec![(3.0, 2.0), (1.5, 2.0), (2.5, 1.5), (0.8, 1.5), (2.5, 3.0), (3.5, 3.0), (3.9, 3.0)],
            midpoint: vec![(5.0, 2.0), (10.0, 2.0), (5.0, 3.0), (4.0, 1.5), (8.0, 4.0)],
            n_max: 10_000,
        }
    }
}

/// Both links of the direct route plus the midpoint bound. Keys carry a
/// leading route tag: 0 and 1 for the two direct links, 2 for the midpoint bound.
pub fn alternate_suite(grid: &AlternateGrid) -> Result<SuiteReport> {
    let direct = grid
        .direct
        .par_iter()
        .map(|&(alpha, pp)| {
            let p = Exponent::new(pp)?;
            let sums = PowerSum::new(alpha - pp + 1.0, grid.n_max);
            let mut out = Vec::new();
            for n in 2..=grid.n_max {
                let c = direct_route_margin(&sums, alpha, p, n)?;
                let slack = REL_SLACK * c.scale;
                out.push(PointMargin {
                    key: vec![0.0, alpha, pp, n as f64],
                    margin: c.upper,
                    slack,
                });
                out.push(PointMargin {
                    key: vec![1.0, alpha, pp, n as f64],
                    margin: c.lower,
                    slack,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let midpoint = grid
        .midpoint
        .par_iter()
        .map(|&(alpha, pp)| {
            let p = Exponent::new(pp)?;
            let slack = REL_SLACK * midpoint_bound(alpha, p);
            let margins = midpoint_bound_margins(alpha, p, grid.n_max)?;
            Ok(margins
                .into_iter()
                .enumerate()
                .map(|(i, m)| PointMargin {
                    key: vec![2.0, alpha, pp, i as f64 + 1.0],
                    margin: m,
                    slack,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_points(
        Suite::Alternate,
        &["route", "alpha", "p", "n"],
        direct.into_iter().chain(midpoint).flatten().collect(),
    ))
}

/// Randomized sequences shared by the stability and Hardy suites.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomGrid {
    pub pairs: Vec<(f64, f64)>,
    pub samples: usize,
    pub seed: u64,
    pub max_len: u64,
}

impl RandomGrid {
    pub fn stability_default() -> Self {
        RandomGrid {
            pairs: vec![(0.0, 2.0), (3.0, 2.0), (0.5, 2.0), (4.0, 3.0)],
            samples: 1000,
            seed: 0,
            max_len: 64,
        }
    }

    pub fn hardy_default() -> Self {
        RandomGrid {
            pairs: vec![(0.0, 2.0), (3.0, 2.0), (0.5, 2.0), (4.0, 3.0), (0.0, 1.5), (2.0, 1.5), (0.0, 4.0)],
            samples: 10_000,
            seed: 0,
            max_len: 64,
        }
    }
}

/// Per-pair seed so that pairs draw independent, reproducible streams.
fn pair_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn stability_suite(grid: &RandomGrid) -> Result<SuiteReport> {
    let pts = grid
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(alpha, pp))| {
            let p = Exponent::new(pp)?;
            let probe = StabilityProbe::new(alpha, p)?;
            let mut gen = SeqGenerator::new(
                pair_seed(grid.seed, i),
                RandomSeqSpec {
                    max_len: grid.max_len,
                    vanish: 0,
                },
            );
            (0..grid.samples)
                .map(|s| {
                    let rep = probe.report(&gen.next_seq())?;
                    Ok(PointMargin {
                        key: vec![alpha, pp, s as f64],
                        margin: rep.margin,
                        slack: rep.slack,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_points(
        Suite::Stability,
        &["alpha", "p", "sample"],
        pts.into_iter().flatten().collect(),
    ))
}

/// The sharp inequality on each pair plus the log-corrected critical
/// inequality at each distinct `p` (tagged `alpha = p - 1`).
pub fn hardy_suite(grid: &RandomGrid) -> Result<SuiteReport> {
    let mut ps: Vec<f64> = grid.pairs.iter().map(|&(_, p)| p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let mut jobs: Vec<(f64, f64, bool)> = grid.pairs.iter().map(|&(a, p)| (a, p, false)).collect();
    jobs.extend(ps.iter().map(|&p| (p - 1.0, p, true)));
    let pts = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(alpha, pp, critical))| {
            let p = Exponent::new(pp)?;
            let mut gen = SeqGenerator::new(
                pair_seed(grid.seed, i),
                RandomSeqSpec {
                    max_len: grid.max_len,
                    vanish: if critical { 1 } else { 0 },
                },
            );
            (0..grid.samples)
                .map(|s| {
                    let u = gen.next_seq();
                    let (margin, scale) = if critical {
                        (critical_hardy_check(&u, p)?, margin_scale(&u, alpha, p)?)
                    } else {
                        (hardy_check(&u, alpha, p)?, margin_scale(&u, alpha, p)?)
                    };
                    Ok(PointMargin {
                        key: vec![alpha, pp, s as f64],
                        margin,
                        slack: REL_SLACK * scale,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_points(
        Suite::Hardy,
        &["alpha", "p", "sample"],
        pts.into_iter().flatten().collect(),
    ))
}

/// Expected leading and next coefficients of `w(n)/n^alpha` at `p = 2`.
pub fn expected_expansion(alpha: f64) -> (f64, f64) {
    let a = alpha - 1.0;
    (a * a / 4.0, a * a * (alpha - 2.0) / 8.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionGrid {
    pub alphas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for ExpansionGrid {
    fn default() -> Self {
        ExpansionGrid {
            alphas: vec![-1.0, -2.0, -3.0],
            tolerance: 1e-3,
        }
    }
}

/// Margin `tolerance - |fitted - expected|` for both orders of each alpha.
pub fn expansion_suite(grid: &ExpansionGrid) -> Result<SuiteReport> {
    let p = Exponent::new(2.0)?;
    let pts = grid
        .alphas
        .par_iter()
        .map(|&alpha| {
            let fit = optimal_weight_expansion(alpha, p, &[2, 3])?;
            let (c2, c3) = expected_expansion(alpha);
            Ok(vec![
                PointMargin::new(vec![alpha, 2.0], grid.tolerance - (fit.coefficients[0] - c2).abs()),
                PointMargin::new(vec![alpha, 3.0], grid.tolerance - (fit.coefficients[1] - c3).abs()),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::from_points(
        Suite::Expansion,
        &["alpha", "order"],
        pts.into_iter().flatten().collect(),
    ))
}

/// Run `f` on a pool of `jobs` threads, or on the global pool for `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
