//! End-to-end acceptance criteria. Each test prints one `PASS`/`FAIL` line.

use std::f64::consts::PI;

use hardyline::analysis::{discrete_vs_continuous_gap, lemma42_f, optimal_weight_expansion, StabilityProbe};
use hardyline::muckenhoupt::{b_constant, critical_counterexample_ratio, hardy_constant_bounds, Kind};
use hardyline::sequence::{RandomSeqSpec, SeqGenerator};
use hardyline::sharpness::{
    minimize_rayleigh, minimize_rayleigh_with, sampled_test_quotient, sharp_constant, Method, RayleighProblem,
    TestProfile,
};
use hardyline::verify::{
    alternate_suite, cor43_suite, expected_expansion, hardy_suite, lemma42_suite, prop41_suite, stability_suite,
    AlternateGrid, Cor43Grid, Lemma42Grid, Prop41Grid, RandomGrid, SuiteReport,
};
use hardyline::{Exponent, WeightFamily};

fn p(v: f64) -> Exponent {
    Exponent::new(v).unwrap()
}

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {id:>2} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_01_sharp_constant_formula() {
    let mut grid = Vec::new();
    for &pp in &[1.5f64, 2.0, 3.0, 4.0] {
        for &alpha in &[0.0f64, 0.25, 1.0, 2.5, 5.0, 7.5] {
            if (alpha - (pp - 1.0)).abs() > 1e-9 && grid.len() < 20 {
                grid.push((alpha, pp));
            }
        }
    }
    assert_eq!(grid.len(), 20);
    let mut worst = 0.0f64;
    for &(alpha, pp) in &grid {
        let got = sharp_constant(alpha, p(pp)).value().expect("noncritical pair has a constant");
        // independent route: exp(p log|.|)
        let want = (pp * (((alpha - pp + 1.0) / pp).abs()).ln()).exp();
        worst = worst.max(rel_err(got, want));
    }
    let anchors = [
        (0.0, 2.0, 0.25),
        (3.0, 2.0, 1.0),
        (0.0, 3.0, 8.0 / 27.0),
    ];
    let anchors_ok = anchors
        .iter()
        .all(|&(a, pp, v)| rel_err(sharp_constant(a, p(pp)).value().unwrap(), v) <= 1e-15);
    report(
        1,
        "sharp constant formula",
        worst <= 1e-15 && anchors_ok,
        &format!("max relative error {worst:.2e} over 20 points, anchors ok = {anchors_ok}"),
    );
}

#[test]
fn criterion_02_hardy_property_suite() {
    let rep = hardy_suite(&RandomGrid::hardy_default()).unwrap();
    report(
        2,
        "Hardy inequality property suite",
        rep.passed && rep.points >= 10_000 * 7,
        &format!(
            "{} sequences, min margin {:.3e} at {:?}, failures {}",
            rep.points, rep.min_margin, rep.min_at, rep.failures
        ),
    );
}

#[test]
fn criterion_03_muckenhoupt_bracket() {
    let two = p(2.0);
    let b1 = b_constant(&WeightFamily::Power(-2.0), &WeightFamily::Power(0.0), two, Kind::One, 100_000).unwrap();
    let z2 = PI * PI / 6.0;
    let bounds =
        hardy_constant_bounds(&WeightFamily::Power(-2.0), &WeightFamily::Power(0.0), two, 100_000).unwrap();
    let bracket_ok = bounds.c_lower == b1.value.lo && bounds.c_upper >= 4.0 * b1.value.hi;
    let strong =
        hardy_constant_bounds(&WeightFamily::Power(1.0), &WeightFamily::Power(3.0), two, 100_000).unwrap();
    let ok = b1.value.contains(z2) && b1.value.width() < 1e-6 && bracket_ok && strong.c0_upper <= 1.0 + 1e-6;
    report(
        3,
        "Muckenhoupt bracket",
        ok,
        &format!(
            "B1 = {} (width {:.2e}), C in [{}, {}], c0_upper(n, n^3) = {}",
            b1.value,
            b1.value.width(),
            bounds.c_lower,
            bounds.c_upper,
            strong.c0_upper
        ),
    );
}

#[test]
fn criterion_04_optimal_weight_expansion() {
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for alpha in [-1.0, -2.0, -3.0] {
        let fit = optimal_weight_expansion(alpha, p(2.0), &[2, 3]).unwrap();
        let (c2, c3) = expected_expansion(alpha);
        let e = (fit.coefficients[0] - c2).abs().max((fit.coefficients[1] - c3).abs());
        worst = worst.max(e);
        lines.push(format!("alpha {alpha}: ({:.6}, {:.6})", fit.coefficients[0], fit.coefficients[1]));
    }
    assert_eq!(expected_expansion(-1.0), (1.0, -1.5));
    report(
        4,
        "optimal-weight expansion",
        worst < 1e-3,
        &format!("max abs error {worst:.2e}; {}", lines.join(", ")),
    );
}

#[test]
fn criterion_05_discrete_continuous_witness() {
    let mut lines = Vec::new();
    let mut ok = true;
    for alpha in [-1.0, -2.0, -3.0] {
        match discrete_vs_continuous_gap(alpha, 10_000) {
            Ok(w) => {
                ok &= w.verified_to == 10 * w.n && w.deficit > 0.0;
                lines.push(format!("alpha {alpha}: n = {}, verified to {}", w.n, w.verified_to));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("alpha {alpha}: {e}"));
            }
        }
    }
    report(5, "discrete vs continuous witness", ok, &lines.join("; "));
}

#[test]
fn criterion_06_truncated_rayleigh() {
    let two = p(2.0);
    let value = |n: u64| minimize_rayleigh(&RayleighProblem::power(0.0, two, 1, n).unwrap()).unwrap().value;
    let seq: Vec<(u64, f64)> = (6..=12).map(|j| (1u64 << j, value(1u64 << j))).collect();
    let decreasing = seq.windows(2).all(|w| w[1].1 < w[0].1);
    let above = seq.iter().all(|&(_, v)| v > 0.25);
    let v1 = value(1);
    let v2 = value(2);
    let mut agree = 0.0f64;
    for n in [64u64, 256] {
        let pr = RayleighProblem::power(0.0, two, 1, n).unwrap();
        let exact = minimize_rayleigh_with(&pr, Method::Exact).unwrap();
        let descent = minimize_rayleigh_with(&pr, Method::Descent).unwrap();
        agree = agree.max(rel_err(descent.value, exact.value));
    }
    let ok = decreasing && above && v1 == 2.0 && v2 == 1.0 && agree <= 1e-8;
    report(
        6,
        "truncated Rayleigh lower bound",
        ok,
        &format!(
            "N=1 -> {v1}, N=2 -> {v2:.12} (target 1.0), decreasing = {decreasing}, all > 1/4 = {above}, \
             descent/exact rel diff {agree:.2e}, values {seq:?}"
        ),
    );
}

#[test]
fn criterion_07_sharpness_from_above() {
    let two = p(2.0);
    let m = 100_000;
    let best = (1..=4u32)
        .map(|cut| sampled_test_quotient(&TestProfile::near_optimal(0.0, two, 0.02, cut), m, 0.0, two).unwrap())
        .fold(f64::INFINITY, f64::min);
    // any sequence supported in [1, m) is bounded below by the truncated minimum
    let floor = minimize_rayleigh(&RayleighProblem::power(0.0, two, 1, m - 1).unwrap()).unwrap().value;
    report(
        7,
        "sharpness approach from above",
        best <= 0.275,
        &format!("best power-profile quotient {best:.6} at m = {m}; truncated minimum on the same support {floor:.6}"),
    );
}

fn ledger_line(r: &SuiteReport) -> String {
    format!("{} min {:.3e} at {:?} ({} points)", r.suite, r.min_margin, r.min_at, r.points)
}

#[test]
fn criterion_08_verification_ledger() {
    let reports = [
        prop41_suite(&Prop41Grid::default()).unwrap(),
        lemma42_suite(&Lemma42Grid::default()).unwrap(),
        cor43_suite(&Cor43Grid::default()).unwrap(),
        alternate_suite(&AlternateGrid::default()).unwrap(),
    ];
    let tight = lemma42_f(0.5, 2.0);
    let ok = reports.iter().all(|r| r.passed) && tight > 0.0 && (tight - 4.47e-4).abs() < 1e-6;
    let lines: Vec<String> = reports.iter().map(ledger_line).collect();
    report(
        8,
        "verification ledger",
        ok,
        &format!("F(1/2, 2) = {tight:.6e}; {}", lines.join("; ")),
    );
}

#[test]
fn criterion_09_stability() {
    let rep = stability_suite(&RandomGrid::stability_default()).unwrap();
    let mut worst = 0.0f64;
    for (i, &(alpha, pp)) in RandomGrid::stability_default().pairs.iter().enumerate() {
        let probe = StabilityProbe::new(alpha, p(pp)).unwrap();
        let mut gen = SeqGenerator::new(100 + i as u64, RandomSeqSpec { max_len: 64, vanish: 0 });
        for _ in 0..50 {
            let u = gen.next_seq();
            let one = probe.report(&u).unwrap().margin;
            let two = probe.report(&u.scaled(2.0)).unwrap().margin;
            worst = worst.max(rel_err(two, 2f64.powf(pp) * one));
        }
    }
    report(
        9,
        "stability",
        rep.passed && rep.points == 4000 && worst <= 1e-12,
        &format!(
            "{} sequences, min margin {:.3e} at {:?}; homogeneity rel err {worst:.2e}",
            rep.points, rep.min_margin, rep.min_at
        ),
    );
}

#[test]
fn criterion_10_critical_failure() {
    let two = p(2.0);
    let small = critical_counterexample_ratio(1_000, two).unwrap();
    let large = critical_counterexample_ratio(1_000_000, two).unwrap();
    let factor = large * 1e6f64.ln() / (small * 1e3f64.ln());
    report(
        10,
        "critical-case failure",
        (0.5..=3.0).contains(&factor) && large < small,
        &format!("ratio(1e3) = {small:.6e}, ratio(1e6) = {large:.6e}, log-scaled factor {factor:.4}"),
    );
}
