use num_rational::Rational64 as Q;

use mmvlab_core::aggregate::cumulative_local_utility;
use mmvlab_core::config::{build_model, ModelConfig};
use mmvlab_core::duality::{compare_mv_mmv, density_diagnostics, MvMmvVerdict};
use mmvlab_core::exact;
use mmvlab_core::localutil::check_instantaneous_no_arbitrage;
use mmvlab_core::optimize::{maximize_local_utility, Boundedness};
use mmvlab_core::{catalog, MmvError, Model, Model32, UtilityKind};

#[test]
fn example_configs_round_trip() {
    for id in 1..=4 {
        let cfg = ModelConfig::from_toml_str(catalog::example_config(id).unwrap()).unwrap();
        let back = ModelConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, back, "example {id}");
        let m: Model = build_model(&cfg).unwrap();
        let canon = ModelConfig::from_model(&m);
        let again: Model = build_model(&canon).unwrap();
        assert_eq!(m, again, "example {id}");
    }
}

#[test]
fn config_errors_are_schema_errors() {
    let bad = [
        "horizon = 1.0\ndimension = 1\ncolour = 3\n",
        "horizon = 1.0\ndimension = 1\n[[segments]]\nt_start = 0.0\nt_end = 1.0\nb = [0.0]\nc = [[0.0]]\njumps = { family = \"cauchy\" }\n",
        "horizon = \"one\"\ndimension = 1\n",
    ];
    for s in bad {
        assert!(matches!(ModelConfig::from_toml_str(s), Err(MmvError::Schema(_))), "{s}");
    }
    assert!(ModelConfig::from_path("/nonexistent/model.toml").is_err());
}

#[test]
fn single_precision_instance() {
    let m: Model32 = catalog::example(3, None).unwrap();
    let (s, _) = cumulative_local_utility(&m, UtilityKind::Mmv).unwrap();
    let l = s.entries[0].optimum.lambda_hat[0];
    // Single-precision quadrature leaves the flat optimum loosely pinned.
    assert!((l - 1.108_093).abs() < 2e-2, "{l}");
}

#[test]
fn no_arbitrage_verdicts() {
    for id in [1, 2, 3, 4, 6] {
        let m: Model = catalog::example(id, Some(50)).unwrap();
        assert!(check_instantaneous_no_arbitrage(&m).unwrap().holds, "example {id}");
    }
    let cfg = ModelConfig::from_toml_str(
        "horizon = 1.0\ndimension = 1\n[[atoms]]\ntime = 0.5\npoints = [[0.1], [0.3]]\nmasses = [0.5, 0.5]\n",
    )
    .unwrap();
    let m: Model = build_model(&cfg).unwrap();
    let r = check_instantaneous_no_arbitrage(&m).unwrap();
    assert!(!r.holds);
    assert!(r.witness_direction.is_some());
}

/// Rational oracle for the minimum-norm optimum of the two-asset atom model.
#[test]
fn example_one_against_exact_arithmetic() {
    let m: Model = catalog::example(1, None).unwrap();
    let ch = &m.atoms[0].chars;
    let opt = maximize_local_utility(ch, UtilityKind::Mmv).unwrap();
    let pts = vec![
        vec![Q::new(-1, 2), Q::new(-1, 2)],
        vec![Q::new(1, 2), Q::new(1, 2)],
        vec![Q::new(1, 1), Q::new(6, 5)],
        vec![Q::new(6, 5), Q::new(1, 1)],
    ];
    let ms = vec![Q::new(1, 5), Q::new(3, 5), Q::new(1, 10), Q::new(1, 10)];
    let half = vec![Q::new(1, 2), Q::new(1, 2)];
    assert_eq!(exact::expected_utility(&pts, &ms, &half, UtilityKind::Mmv), Q::new(1, 5));
    assert_eq!(exact::utility_gradient(&pts, &ms, &half, UtilityKind::Mmv), vec![Q::new(0, 1); 2]);
    for v in &opt.lambda_hat {
        assert!((v - 0.5).abs() < 1e-12, "{:?}", opt.lambda_hat);
    }
    assert!((opt.value - 0.2).abs() < 1e-12);
    assert!(opt.tie_break_applied);
}

#[test]
fn heavy_right_tail_forces_zero_mv_strategy() {
    let m: Model = catalog::example(3, None).unwrap();
    let opt = maximize_local_utility(&m.segments[0].chars, UtilityKind::Mv).unwrap();
    assert_eq!(opt.lambda_hat, vec![0.0]);
    assert_eq!(opt.boundedness, Boundedness::DomainBoundary);
    assert_eq!(compare_mv_mmv(&m).unwrap().verdict, MvMmvVerdict::NotApplicable);
}

#[test]
fn density_requires_mmv_schedule() {
    let m: Model = catalog::example(2, None).unwrap();
    let (s, cu) = cumulative_local_utility(&m, UtilityKind::Mv).unwrap();
    let gv = mmvlab_core::aggregate::global_values(&cu);
    assert!(matches!(density_diagnostics(&m, &s, &gv), Err(MmvError::Invariant(_))));
}

#[test]
fn zero_model_has_zero_value() {
    let cfg = ModelConfig::from_toml_str(catalog::ZERO_MODEL).unwrap();
    let m: Model = build_model(&cfg).unwrap();
    for k in [UtilityKind::Mmv, UtilityKind::Mv] {
        let (s, cu) = cumulative_local_utility(&m, k).unwrap();
        assert_eq!(mmvlab_core::aggregate::global_values(&cu).v0, 0.0);
        assert!(s.entries.iter().all(|e| e.optimum.lambda_hat.iter().all(|v| *v == 0.0)));
    }
}
