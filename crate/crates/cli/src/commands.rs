use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use hardyline::analysis::{optimal_weight_expansion, StabilityProbe};
use hardyline::enclosure::Enclosure;
use hardyline::halfline::{weight_comparison, HardyWeight, Verdict};
use hardyline::muckenhoupt::{b_constant, critical_counterexample_ratio, hardy_constant_bounds, Kind};
use hardyline::sharpness::{
    continuum_constant, minimize_rayleigh, minimize_rayleigh_with, rayleigh_quotient, sharp_constant, Method,
    RayleighProblem, SharpConstant,
};
use hardyline::verify::{
    alternate_suite, cor43_suite, expansion_suite, expected_expansion, hardy_suite, lemma42_suite, prop41_suite,
    stability_suite, AlternateGrid, Cor43Grid, ExpansionGrid, Lemma42Grid, Prop41Grid, RandomGrid, Suite,
    SuiteReport, REL_SLACK,
};
use hardyline::{Error, Exponent, Result, WeightFamily};

use crate::args::*;
use crate::table;
use crate::Status;

pub(crate) struct Outcome {
    pub result: Value,
    pub status: Status,
    pub scanned_to: Option<u64>,
    pub converged: Option<bool>,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Outcome {
            result,
            status: Status::Ok,
            scanned_to: None,
            converged: None,
        }
    }

    fn scanned(mut self, n: u64) -> Self {
        self.scanned_to = Some(n);
        self
    }

    fn negative_if(mut self, cond: bool) -> Self {
        if cond {
            self.status = Status::Negative;
        }
        self
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload types serialize")
}

pub(crate) fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Sharp(_) => "sharp",
        Command::Muckenhoupt(_) => "muckenhoupt",
        Command::Weight(_) => "weight",
        Command::Compare(_) => "compare",
        Command::Rayleigh(_) => "rayleigh",
        Command::Verify(_) => "verify",
        Command::Expand(_) => "expand",
        Command::Stability(_) => "stability",
        Command::CriticalRatio(_) => "critical-ratio",
    }
}

fn kind_name(k: KindArg) -> &'static str {
    match k {
        KindArg::One => "1",
        KindArg::Two => "2",
        KindArg::Both => "both",
    }
}

/// Effective parameters, defaults included.
pub(crate) fn params(cmd: &Command) -> BTreeMap<String, Value> {
    let p = |e: Exponent| json!(e.get());
    let w = |w: &WeightFamily| json!(w.to_string());
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        if !v.is_null() {
            m.insert(k.to_string(), v);
        }
    };
    match cmd {
        Command::Sharp(a) => {
            put("p", p(a.p));
            put("alpha", json!(a.alpha));
        }
        Command::Muckenhoupt(a) => {
            put("p", p(a.p));
            put("mu", w(&a.mu));
            put("nu", w(&a.nu));
            put("kind", json!(kind_name(a.kind)));
            put("rmax", json!(a.rmax));
        }
        Command::Weight(a) => {
            put("p", p(a.p));
            put("nu", w(&a.nu));
            put("n", json!([a.n.0, a.n.1]));
            put("csv", json!(a.csv));
        }
        Command::Compare(a) => {
            put("p", p(a.p));
            put("nu", w(&a.nu));
            put("mu", w(&a.mu));
            put("window", json!(a.window));
        }
        Command::Rayleigh(a) => {
            put("p", p(a.p));
            put("alpha", json!(a.alpha));
            put("mu", json!(a.mu.as_ref().map(|x| x.to_string())));
            put("nu", json!(a.nu.as_ref().map(|x| x.to_string())));
            put("N", json!(a.n));
            put("M", json!(a.m));
            put("method", json!(a.method.map(|m| format!("{m:?}").to_lowercase())));
            put("u", json!(a.u));
            put("csv", json!(a.csv));
        }
        Command::Verify(a) => {
            put("suite", json!(a.suite.name()));
            if !a.part.is_empty() {
                put("part", json!(a.part.iter().map(|x| x.to_string()).collect::<Vec<_>>()));
            }
            put("gamma", json!(a.gamma));
            put("nmax", json!(a.nmax));
            put("alpha", json!(a.alpha));
            put("p", json!(a.p));
            put("samples", json!(a.samples));
            put("seed", json!(a.seed));
            put("max_len", json!(a.max_len));
            if !a.terms.is_empty() {
                let t: Vec<Value> = a.terms.iter().map(|t| t.map_or(json!("closed"), |k| json!(k))).collect();
                put("terms", json!(t));
            }
            put("dense_x", json!(a.dense_x));
            put("tolerance", json!(a.tolerance));
        }
        Command::Expand(a) => {
            put("p", p(a.p));
            put("alpha", json!(a.alpha));
            put("powers", json!(a.powers));
        }
        Command::Stability(a) => {
            put("p", p(a.p));
            put("alpha", json!(a.alpha));
            if let Some(u) = &a.u {
                put("u", json!(u));
            } else {
                put("samples", json!(a.samples));
                put("seed", json!(a.seed));
                put("max_len", json!(a.max_len));
            }
        }
        Command::CriticalRatio(a) => {
            put("p", p(a.p));
            put("n", json!(a.n));
        }
    }
    m
}

pub(crate) fn run(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Sharp(a) => sharp(a),
        Command::Muckenhoupt(a) => muckenhoupt(a),
        Command::Weight(a) => weight(a),
        Command::Compare(a) => compare(a),
        Command::Rayleigh(a) => rayleigh(a),
        Command::Verify(a) => verify(a),
        Command::Expand(a) => expand(a),
        Command::Stability(a) => stability(a),
        Command::CriticalRatio(a) => critical_ratio(a),
    }
}

fn sharp(a: &SharpArgs) -> Result<Outcome> {
    let result = match sharp_constant(a.alpha, a.p) {
        SharpConstant::Value { value } => json!({ "value": value }),
        SharpConstant::None => json!({ "value": null, "reason": "critical" }),
        SharpConstant::Bounds { lo, hi } => json!({
            "value": null,
            "reason": "bracket",
            "bounds": Enclosure::new(lo, hi),
            "continuum": continuum_constant(a.alpha, a.p),
        }),
    };
    Ok(Outcome::ok(result))
}

fn muckenhoupt(a: &MuckenhouptArgs) -> Result<Outcome> {
    let (result, scanned) = match a.kind {
        KindArg::Both => {
            let r = hardy_constant_bounds(&a.mu, &a.nu, a.p, a.rmax)?;
            (to_value(&r), r.scanned_to)
        }
        KindArg::One | KindArg::Two => {
            let kind = if a.kind == KindArg::One { Kind::One } else { Kind::Two };
            let b = b_constant(&a.mu, &a.nu, a.p, kind, a.rmax)?;
            (to_value(&b), b.scanned_to)
        }
    };
    Ok(Outcome::ok(result).scanned(scanned))
}

fn weight(a: &WeightArgs) -> Result<Outcome> {
    let hw = HardyWeight::from_weight(Arc::new(a.nu.clone()), a.p)?;
    let (from, to) = a.n;
    let pts = hw.points(from, to)?;
    let branch = to_value(&hw.ground().branch());
    let result = match &a.csv {
        Some(path) => {
            let rows = table::write_rows(path, pts.iter().map(|pt| (pt.n, pt.value)))?;
            let max_unc = pts.iter().map(|pt| pt.uncertainty).fold(0.0f64, f64::max);
            json!({ "branch": branch, "csv": path, "rows": rows, "max_uncertainty": max_unc })
        }
        None => json!({ "branch": branch, "points": pts }),
    };
    Ok(Outcome::ok(result).scanned(to))
}

fn compare(a: &CompareArgs) -> Result<Outcome> {
    let v = weight_comparison(&a.nu, a.p, &a.mu, a.window)?;
    let fails = v.verdict == Verdict::FailsAtConstantOne;
    Ok(Outcome::ok(to_value(&v)).scanned(a.window).negative_if(fails))
}

fn rayleigh(a: &RayleighArgs) -> Result<Outcome> {
    let (mu, nu) = match (a.alpha, &a.mu, &a.nu) {
        (Some(alpha), _, _) => (WeightFamily::Power(alpha - a.p.get()), WeightFamily::Power(alpha)),
        (None, Some(mu), Some(nu)) => (mu.clone(), nu.clone()),
        _ => return Err(Error::Domain("give --alpha or both --mu and --nu".into())),
    };
    if let Some(path) = &a.u {
        let u = table::read_seq(path)?;
        let q = rayleigh_quotient(&u, &mu, &nu, a.p)?;
        return Ok(Outcome::ok(json!({ "quotient": q, "support": u.len() })));
    }
    let n = a.n.ok_or_else(|| Error::Domain("--N is required without --u".into()))?;
    let problem = match a.alpha {
        Some(alpha) => RayleighProblem::power(alpha, a.p, a.m, n)?,
        None => RayleighProblem::new(mu, nu, a.p, a.m, n)?,
    };
    let r = match a.method {
        None => minimize_rayleigh(&problem)?,
        Some(MethodArg::Exact) => minimize_rayleigh_with(&problem, Method::Exact)?,
        Some(MethodArg::Descent) => minimize_rayleigh_with(&problem, Method::Descent)?,
    };
    let rows: Vec<(u64, f64)> = (r.m..=r.n).zip(r.minimizer.iter().copied()).collect();
    let mut result = json!({
        "value": r.value,
        "method": r.method,
        "iterations": r.iterations,
        "residual": r.residual,
        "eigen_bracket": r.eigen_bracket,
    });
    match &a.csv {
        Some(path) => {
            table::write_rows(path, rows)?;
            result["csv"] = json!(path);
        }
        None => result["minimizer"] = json!(rows),
    }
    let mut out = Outcome::ok(result).scanned(n);
    out.converged = Some(r.converged);
    if !r.converged {
        out.status = Status::NotConverged;
    }
    Ok(out)
}

/// Cartesian product of the `--alpha` and `--p` grids, or `None` if neither is set.
fn pairs(a: &VerifyArgs) -> Result<Option<Vec<(f64, f64)>>> {
    match (&a.alpha, &a.p) {
        (None, None) => Ok(None),
        (Some(alphas), Some(ps)) => Ok(Some(
            ps.0.iter().flat_map(|&p| alphas.0.iter().map(move |&al| (al, p))).collect(),
        )),
        _ => Err(Error::Domain(format!(
            "suite {} needs both --alpha and --p to override its pairs",
            a.suite
        ))),
    }
}

fn random_grid(a: &VerifyArgs, mut g: RandomGrid) -> Result<RandomGrid> {
    if let Some(pairs) = pairs(a)? {
        g.pairs = pairs;
    }
    if let Some(s) = a.samples {
        g.samples = s;
    }
    if let Some(l) = a.max_len {
        g.max_len = l;
    }
    g.seed = a.seed;
    Ok(g)
}

fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let mut scanned = a.nmax;
    let report: SuiteReport = match a.suite {
        Suite::Prop41 => {
            let mut g = Prop41Grid::default();
            if !a.part.is_empty() {
                g.parts = a.part.clone();
            }
            g.gammas = a.gamma.clone().map(|g| g.0);
            g.n_max = a.nmax.unwrap_or(g.n_max);
            scanned = Some(g.n_max);
            prop41_suite(&g)?
        }
        Suite::Lemma42 => {
            let mut g = Lemma42Grid::default();
            if let Some(gs) = &a.gamma {
                g.gammas = gs.0.clone();
            }
            g.n_max = a.nmax.unwrap_or(g.n_max);
            g.dense_x = a.dense_x.unwrap_or(g.dense_x);
            scanned = Some(g.n_max);
            lemma42_suite(&g)?
        }
        Suite::Cor43 => {
            let mut g = Cor43Grid::default();
            if let Some(p) = pairs(a)? {
                g.pairs = p;
            }
            if !a.terms.is_empty() {
                g.terms = a.terms.clone();
            }
            g.n_max = a.nmax.unwrap_or(g.n_max);
            scanned = Some(g.n_max);
            cor43_suite(&g)?
        }
        Suite::Alternate => {
            let mut g = AlternateGrid::default();
            if let Some(p) = pairs(a)? {
                // each pair goes to every route whose hypotheses it meets
                g.direct = p.iter().copied().filter(|&(al, pp)| pp <= 2.0 || al < pp + 1.0).collect();
                g.midpoint = p.iter().copied().filter(|&(al, pp)| al > pp + 1.0).collect();
            }
            g.n_max = a.nmax.unwrap_or(g.n_max);
            scanned = Some(g.n_max);
            alternate_suite(&g)?
        }
        Suite::Stability => stability_suite(&random_grid(a, RandomGrid::stability_default())?)?,
        Suite::Hardy => hardy_suite(&random_grid(a, RandomGrid::hardy_default())?)?,
        Suite::Expansion => {
            let mut g = ExpansionGrid::default();
            if let Some(al) = &a.alpha {
                g.alphas = al.0.clone();
            }
            g.tolerance = a.tolerance.unwrap_or(g.tolerance);
            expansion_suite(&g)?
        }
    };
    let failed = !report.passed;
    let mut result = to_value(&report);
    result["relative_slack"] = json!(REL_SLACK);
    let mut out = Outcome::ok(result).negative_if(failed);
    out.scanned_to = scanned;
    Ok(out)
}

fn expand(a: &ExpandArgs) -> Result<Outcome> {
    let fit = optimal_weight_expansion(a.alpha, a.p, &a.powers)?;
    let mut result = to_value(&fit);
    if a.p.get() == 2.0 {
        let (c2, c3) = expected_expansion(a.alpha);
        result["closed_form"] = json!({ "2": c2, "3": c3 });
    }
    Ok(Outcome::ok(result))
}

fn stability(a: &StabilityArgs) -> Result<Outcome> {
    match &a.u {
        Some(path) => {
            let u = table::read_seq(path)?;
            let rep = StabilityProbe::new(a.alpha, a.p)?.report(&u)?;
            Ok(Outcome::ok(to_value(&rep)).negative_if(rep.margin < -rep.slack))
        }
        None => {
            let g = RandomGrid {
                pairs: vec![(a.alpha, a.p.get())],
                samples: a.samples,
                seed: a.seed,
                max_len: a.max_len,
            };
            let rep = stability_suite(&g)?;
            Ok(Outcome::ok(to_value(&rep)).negative_if(!rep.passed))
        }
    }
}

fn critical_ratio(a: &CriticalRatioArgs) -> Result<Outcome> {
    let rows = a
        .n
        .iter()
        .map(|&n| {
            let r = critical_counterexample_ratio(n, a.p)?;
            Ok(json!({ "n": n, "ratio": r, "log_scaled": r * (n as f64).ln() }))
        })
        .collect::<Result<Vec<_>>>()?;
    let max = a.n.iter().copied().max();
    let mut out = Outcome::ok(json!({ "rows": rows }));
    out.scanned_to = max;
    Ok(out)
}
