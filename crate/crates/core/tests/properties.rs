use proptest::prelude::*;

use mmvlab_core::aggregate::{
    det_stoch_exponential, global_values, sharpe_hansen_convert, strategy_descriptor, yor_dual,
    CumulativeUtility, RatioConversion, Schedule, ScheduleEntry,
};
use mmvlab_core::drift::{
    drift_of_variation, drift_of_variation_split, TailGrowth, VariationFunction,
};
use mmvlab_core::localutil::{foc_residual, local_utility};
use mmvlab_core::model::{JumpMeasure, LocalCharacteristics, Location};
use mmvlab_core::optimize::{maximize_local_utility, Boundedness};
use mmvlab_core::{catalog, Characteristics, UtilityKind};

fn kind() -> impl Strategy<Value = UtilityKind> {
    prop_oneof![Just(UtilityKind::Mmv), Just(UtilityKind::Mv)]
}

/// A finite atom law on the line with at least one point of each sign.
fn atom_law() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        0.05..1.5f64,
        0.05..1.5f64,
        prop::collection::vec((-1.5..2.5f64, 0.05..1.0f64), 0..4),
        0.05..1.0f64,
        0.05..1.0f64,
    )
        .prop_map(|(neg, pos, rest, mn, mp)| {
            let mut pts = vec![-neg, pos];
            let mut ms = vec![mn, mp];
            for (x, m) in rest {
                if x != 0.0 {
                    pts.push(x);
                    ms.push(m);
                }
            }
            (pts, ms)
        })
}

fn chars() -> impl Strategy<Value = Characteristics> {
    (atom_law(), -0.5..0.5f64, prop_oneof![Just(0.0), 0.0..0.2f64]).prop_map(|((p, m), b, c)| {
        LocalCharacteristics::new(vec![b], vec![c], JumpMeasure::atoms_1d(&p, &m).unwrap()).unwrap()
    })
}

fn ex(id: u32) -> Characteristics {
    catalog::example::<f64>(id, None).unwrap().segments[0].chars.clone()
}

fn g(l: f64, ch: &Characteristics, k: UtilityKind) -> f64 {
    local_utility(&[l], ch, k).unwrap().to_float()
}

fn bounded(xi: VariationFunction<f64>) -> VariationFunction<f64> {
    xi.with_growth(TailGrowth::bounded(), TailGrowth::bounded())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, k in 0.5..3.0f64, which in 2u32..4) {
        let ch = ex(which);
        let x1 = bounded(VariationFunction::scalar(move |y: f64| (k * y).tanh(), k, 0.0));
        let x2 = bounded(VariationFunction::scalar(|y: f64| 1.0 / (1.0 + 1.0 / (y * y)), 0.0, 2.0));
        let d = |x: &VariationFunction<f64>| drift_of_variation(x, &ch).unwrap().to_float();
        let comb = VariationFunction::linear_combination(a, &x1, b, &x2);
        prop_assert!((d(&comb) - a * d(&x1) - b * d(&x2)).abs() <= 1e-10);
    }

    #[test]
    fn drift_ignores_the_truncation_split(split in 0.1..4.0f64, k in 0.5..3.0f64, law in chars()) {
        let xi = bounded(VariationFunction::scalar(move |y: f64| (k * y).tanh(), k, 0.0));
        for ch in [ex(2), law] {
            let whole = drift_of_variation(&xi, &ch).unwrap().to_float();
            let split = drift_of_variation_split(&xi, &ch, split).unwrap().to_float();
            prop_assert!((whole - split).abs() <= 1e-10);
        }
    }

    #[test]
    fn local_utility_is_concave(ch in chars(), k in kind(), l1 in -6.0..6.0f64, l2 in -6.0..6.0f64, s in 0.0..1.0f64) {
        let gap = g(s * l1 + (1.0 - s) * l2, &ch, k) - s * g(l1, &ch, k) - (1.0 - s) * g(l2, &ch, k);
        prop_assert!(gap >= -1e-9);
    }

    #[test]
    fn optimizer_beats_every_grid_point(ch in chars(), k in kind()) {
        let opt = maximize_local_utility(&ch, k).unwrap();
        for i in -400..=400 {
            let l = i as f64 * 0.05;
            prop_assert!(g(l, &ch, k) <= opt.value + 1e-9, "λ = {l}");
        }
    }

    #[test]
    fn interior_optimum_satisfies_the_foc(ch in chars(), k in kind()) {
        let opt = maximize_local_utility(&ch, k).unwrap();
        if opt.boundedness == Boundedness::Interior {
            let r = foc_residual(&opt.lambda_hat, &ch, k).unwrap();
            prop_assert!(r[0].abs() <= 1e-8, "{r:?}");
        }
    }

    #[test]
    fn mmv_value_dominates_mv(ch in chars()) {
        let mmv = maximize_local_utility(&ch, UtilityKind::Mmv).unwrap();
        let mv = maximize_local_utility(&ch, UtilityKind::Mv).unwrap();
        prop_assert!(mmv.value >= mv.value - 1e-12);
    }

    #[test]
    fn scaling_returns_scales_the_strategy(p in atom_law(), s in 0.2..5.0f64, k in kind()) {
        let base = LocalCharacteristics::one_period(JumpMeasure::atoms_1d(&p.0, &p.1).unwrap()).unwrap();
        let pts: Vec<f64> = p.0.iter().map(|x| x * s).collect();
        let scaled = LocalCharacteristics::one_period(JumpMeasure::atoms_1d(&pts, &p.1).unwrap()).unwrap();
        let a = maximize_local_utility(&base, k).unwrap();
        let b = maximize_local_utility(&scaled, k).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10 * (1.0 + a.value.abs()));
        if a.boundedness == Boundedness::Interior {
            prop_assert!((a.lambda_hat[0] - s * b.lambda_hat[0]).abs() <= 1e-7 * (1.0 + a.lambda_hat[0].abs()));
        }
    }

    #[test]
    fn yor_identity(cont in 0.0..3.0f64, atoms in prop::collection::vec(0.0..0.95f64, 0..8)) {
        let cu = CumulativeUtility {
            continuous_part: cont,
            atom_increments: atoms.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect(),
            ..CumulativeUtility::empty()
        };
        let e = det_stoch_exponential(&cu, -1.0) * det_stoch_exponential(&yor_dual(&cu), 1.0);
        prop_assert!((e - 1.0).abs() <= 1e-12);
        let gv = global_values(&cu);
        // Recovering v0 from u0 divides by E(−K̃), so allow for that conditioning.
        let cond = 1.0 / det_stoch_exponential(&cu, -1.0);
        prop_assert!((gv.v0_from_u0() - gv.v0).abs() <= 1e-14 * cond * (1.0 + gv.v0));
        prop_assert!((gv.mhr2 / (1.0 - gv.mhr2) - gv.msr2).abs() <= 1e-9 * (1.0 + gv.msr2));
    }

    #[test]
    fn sharpe_hansen_round_trip(hr2 in 0.0..0.999f64) {
        let sr2 = sharpe_hansen_convert(hr2, RatioConversion::HansenToSharpe).unwrap();
        let back = sharpe_hansen_convert(sr2, RatioConversion::SharpeToHansen).unwrap();
        prop_assert!((back - hr2).abs() <= 1e-14);
    }

    #[test]
    fn strategy_scales_with_risk_aversion(gamma in 0.1..10.0f64, x in -5.0..5.0f64, cont in 0.0..2.0f64) {
        let cu = CumulativeUtility { continuous_part: cont, ..CumulativeUtility::empty() };
        let gv = global_values(&cu);
        let opt = maximize_local_utility(&ex(2), UtilityKind::Mmv).unwrap();
        let sched = Schedule {
            kind: UtilityKind::Mmv,
            entries: vec![ScheduleEntry {
                location: Location::Segment { index: 0, t_start: 0.0, t_end: 1.0 },
                optimum: opt.clone(),
                activity: 1.0,
            }],
        };
        let s1 = strategy_descriptor(&sched, &gv, x, 1.0).unwrap();
        let sg = strategy_descriptor(&sched, &gv, x, gamma).unwrap();
        let a1 = s1.investment(0, x)[0];
        let ag = sg.investment(0, x)[0];
        prop_assert!((a1 - gamma * ag).abs() <= 1e-12 * (1.0 + a1.abs()));
        prop_assert!((sg.certainty_equivalent_gain() * gamma - gv.v0).abs() <= 1e-12 * (1.0 + gv.v0));
    }
}

#[test]
fn sharpe_hansen_domain() {
    assert!(sharpe_hansen_convert(1.0, RatioConversion::HansenToSharpe).is_err());
    assert!(sharpe_hansen_convert(-0.1, RatioConversion::SharpeToHansen).is_err());
    assert_eq!(sharpe_hansen_convert(f64::INFINITY, RatioConversion::SharpeToHansen), Ok(1.0));
}
