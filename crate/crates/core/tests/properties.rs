use std::sync::Arc;

use proptest::prelude::*;

use hardyline::analysis::{lemma42_f, prop41_check, remainder_h, remainder_h_series, Part, StabilityProbe};
use hardyline::enclosure::Accumulator;
use hardyline::halfline::{p_laplacian_apply, Branch, GroundState, HardyWeight};
use hardyline::muckenhoupt::{hardy_constant_bounds, Kind, b_constant};
use hardyline::sequence::FiniteSeq;
use hardyline::sharpness::{hardy_check, margin_scale, minimize_rayleigh, rayleigh_quotient, RayleighProblem};
use hardyline::weights::power_tail;
use hardyline::{Exponent, Weight, WeightFamily};

fn seq(len: usize) -> impl Strategy<Value = FiniteSeq> {
    prop::collection::vec(-1.0f64..1.0, 1..=len)
        .prop_filter("nonzero", |v| v.iter().any(|x| *x != 0.0))
        .prop_map(|v| FiniteSeq::new(v).unwrap())
}

/// Dyadic values with an exactly representable sum in `i128`.
fn dyadic() -> impl Strategy<Value = Vec<(i64, i32)>> {
    prop::collection::vec((-(1i64 << 52)..(1i64 << 52), -30i32..30), 1..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accumulator_encloses_exact_dyadic_sums(terms in dyadic()) {
        let mut acc = Accumulator::new();
        // exact value in units of 2^-30
        let mut exact: i128 = 0;
        for &(m, e) in &terms {
            let v = m as f64 * 2f64.powi(e);
            acc.push_exact(v);
            exact += (m as i128) << (e + 30);
        }
        let enc = acc.enclosure();
        let target = exact as f64 * 2f64.powi(-30);
        // the rounded target can sit one ulp outside a tight enclosure
        prop_assert!(enc.lo <= target.next_up() && target.next_down() <= enc.hi, "{enc} vs {target}");
    }

    #[test]
    fn power_tail_encloses_zeta_remainders(a in 1u64..50_000) {
        // sum_{k>=a} k^-2 = pi^2/6 - sum_{k<a} k^-2
        let mut head = Accumulator::new();
        for k in 1..a {
            head.push_evaluated(1.0 / (k as f64 * k as f64));
        }
        let want = std::f64::consts::PI.powi(2) / 6.0 - head.value();
        let enc = power_tail(-2.0, a);
        let pad = 1e-15 * want.abs() + head.error_bound();
        prop_assert!(enc.lo <= want + pad && want - pad <= enc.hi, "a={a}: {enc} vs {want}");
        prop_assert!(enc.width() <= 1e-6 * want + 1e-15);
    }

    #[test]
    fn sharp_inequality_holds(u in seq(40), alpha in 0.0f64..6.0, pp in 1.2f64..4.0) {
        let p = Exponent::new(pp).unwrap();
        prop_assume!((alpha - (pp - 1.0)).abs() > 1e-3);
        let margin = hardy_check(&u, alpha, p).unwrap();
        let scale = margin_scale(&u, alpha, p).unwrap();
        prop_assert!(margin >= -1e-12 * scale, "{margin} vs scale {scale}");
    }

    #[test]
    fn truncated_minimum_bounds_every_quotient(u in seq(30)) {
        let p = Exponent::new(2.0).unwrap();
        let n = u.len();
        let min = minimize_rayleigh(&RayleighProblem::power(0.0, p, 1, n).unwrap()).unwrap();
        let q = rayleigh_quotient(&u, &WeightFamily::Power(-2.0), &WeightFamily::Power(0.0), p).unwrap();
        prop_assert!(q >= min.value * (1.0 - 1e-12), "{q} < {}", min.value);
    }

    #[test]
    fn power_sum_inequalities(gamma in -5.0f64..50.0, n in 2u64..3000) {
        prop_assert!(prop41_check(gamma, n, Part::III).unwrap() > 0.0);
        // (n^g / g)^2 overflows f64 beyond this range
        if gamma > 0.0 && gamma <= 20.0 {
            prop_assert!(prop41_check(gamma, n, Part::II).unwrap() > 0.0);
        }
        if gamma > 1.0 && gamma < 2.0 {
            prop_assert!(prop41_check(gamma, n, Part::I).unwrap() > 0.0);
        }
    }

    #[test]
    fn lemma_function_is_nonnegative(x in 0.0f64..=1.0, gamma in 2.0f64..50.0) {
        prop_assert!(lemma42_f(x, gamma) >= 0.0);
    }

    #[test]
    fn remainder_series_matches_closed_form(alpha in 1.2f64..12.0, n in 1u64..10_000) {
        let p = Exponent::new(2.0).unwrap();
        let closed = remainder_h(alpha, p, n).unwrap();
        let series = remainder_h_series(alpha, p, n, 25).unwrap();
        prop_assert!((closed - series).abs() <= 1e-14 * closed);
    }

    #[test]
    fn stability_margin_is_homogeneous(u in seq(30), c in 0.1f64..10.0) {
        let p = Exponent::new(2.0).unwrap();
        let probe = StabilityProbe::new(3.0, p).unwrap();
        let one = probe.report(&u).unwrap();
        let scaled = probe.report(&u.scaled(c)).unwrap();
        prop_assert!(one.margin >= -one.slack);
        prop_assert!((scaled.margin - c * c * one.margin).abs() <= 1e-10 * (c * c) * (one.energy.abs() + one.remainder_norm_p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ground_state_is_harmonic(alpha in -3.0f64..3.0, pp in 1.3f64..3.5) {
        let p = Exponent::new(pp).unwrap();
        prop_assume!((alpha - (pp - 1.0)).abs() > 0.05);
        let nu = WeightFamily::Power(alpha);
        let gs = GroundState::new(Arc::new(nu.clone()), p).unwrap();
        let g = gs.values(200).unwrap();
        // the decaying branch pins G(0) = 0 and is harmonic from n = 2 on
        let first = if gs.branch() == Branch::Divergent { 1 } else { 2 };
        for n in [first, 7, 50, 150] {
            let lap = p_laplacian_apply(&nu, p, &g, n).unwrap();
            // compare against one edge term of the operator
            let edge = nu.eval(n).unwrap() * (g[n as usize] - g[n as usize - 1]).abs().powf(pp - 1.0);
            prop_assert!(lap.abs() <= 1e-8 * edge, "n={n}: {lap} vs {edge}");
        }
    }

    #[test]
    fn optimal_weight_inequality(u in seq(30), alpha in -2.0f64..3.0) {
        let p = Exponent::new(2.0).unwrap();
        prop_assume!((alpha - 1.0).abs() > 0.05);
        let nu = WeightFamily::Power(alpha);
        let w = HardyWeight::from_weight(Arc::new(nu.clone()), p).unwrap();
        let mut lhs = Accumulator::new();
        for n in 1..=u.len() + 1 {
            lhs.push_evaluated(nu.eval(n).unwrap() * (u.get(n) - u.get(n - 1)).powi(2));
        }
        let mut rhs = Accumulator::new();
        let mut err = 0.0;
        for (n, v) in u.iter() {
            let pt = w.point(n).unwrap();
            rhs.push_evaluated(pt.value * v * v);
            err += pt.uncertainty * v * v;
        }
        prop_assert!(lhs.value() - rhs.value() >= -(1e-12 * lhs.value() + err));
    }
}

#[test]
fn muckenhoupt_bracket_contains_known_constant() {
    // sum u_n^2 / n^2 <= 4 sum (du)^2 with 4 optimal
    let p = Exponent::new(2.0).unwrap();
    let rep = hardy_constant_bounds(&WeightFamily::Power(-2.0), &WeightFamily::Power(0.0), p, 20_000).unwrap();
    assert!(rep.c_lower <= 4.0 && 4.0 <= rep.c_upper);
    let two = b_constant(&WeightFamily::Power(1.0), &WeightFamily::Power(3.0), p, Kind::Two, 20_000).unwrap();
    assert!(two.value.hi <= 0.25 * (1.0 + 1e-9), "{}", two.value);
}

#[test]
fn unweighted_optimal_weight_expansion() {
    // w(n) = 1/(4n^2) + 5/(64n^4) + C/n^6 + ..., C fitted where it is resolvable
    let p = Exponent::new(2.0).unwrap();
    let w = HardyWeight::from_weight(Arc::new(WeightFamily::Power(0.0)), p).unwrap();
    let two_term = |n: f64| 0.25 / (n * n) + 5.0 / (64.0 * n.powi(4));
    let fit: Vec<f64> = (10..=100u64)
        .map(|n| {
            let x = n as f64;
            (w.value(n).unwrap() - two_term(x)) * x.powi(6)
        })
        .collect();
    let c = fit[fit.len() - 1];
    assert!((c - 0.041).abs() < 1e-3, "C = {c}");
    for n in (100..=10_000u64).step_by(7) {
        let x = n as f64;
        let pt = w.point(n).unwrap();
        let rest = (pt.value - two_term(x)).abs();
        assert!(rest <= 1.1 * c / x.powi(6) + pt.uncertainty, "n = {n}: {rest:e}");
    }
}
