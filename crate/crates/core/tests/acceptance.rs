//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness. Criterion 6 is known to fail: its
//! `|λ̂^MV_n − 3/2| ≤ 5/n` bound contradicts the example's own law, whose
//! MV ratio tends to 3. The run succeeds when every other criterion passes
//! and criterion 6 fails on exactly that check.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmvlab_core::aggregate::{
    det_stoch_exponential, global_values, sharpe_hansen_convert, yor_dual, CumulativeUtility,
    RatioConversion,
};
use mmvlab_core::drift::{drift_of_variation, drift_of_variation_split, TailGrowth, VariationFunction};
use mmvlab_core::localutil::local_utility;
use mmvlab_core::model::{JumpMeasure, LocalCharacteristics};
use mmvlab_core::montecarlo::{
    evaluate_streamed, wealth_study, SimConfig, WealthTracker, THREADS_ENV,
};
use mmvlab_core::optimize::maximize_local_utility;
use mmvlab_core::reproduce::{reproduce, ExampleReport, ReproduceOptions, Status};
use mmvlab_core::{catalog, Characteristics, Model, UtilityKind};

/// Criteria that cannot be met, with the single check expected to fail.
const KNOWN_FAILURES: &[(u32, &str)] = &[(6, "max n |lambda_hat MV_n - 3/2|, n >= 10")];

struct Outcome {
    id: u32,
    title: &'static str,
    elapsed: Duration,
    /// `(name, passed, detail)`.
    checks: Vec<(String, bool, String)>,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    fn failed_names(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect()
    }
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn from_report(id: u32, title: &'static str, report: &ExampleReport, elapsed: Duration) -> Outcome {
    let checks = report
        .checks
        .iter()
        .map(|c| {
            let detail = match c.std_error {
                Some(se) => format!("{:.6} (se {:.2e}) vs {:?}", c.value, se, c.expect),
                None => format!("{:.12} vs {:?}", c.value, c.expect),
            };
            (c.name.clone(), c.status == Status::Pass, detail)
        })
        .collect();
    Outcome { id, title, elapsed, checks }
}

fn runtime(o: &mut Outcome, limit: Duration) {
    o.checks.push((
        format!("runtime under {limit:?}"),
        o.elapsed < limit,
        format!("{:?}", o.elapsed),
    ));
}

fn example(id: u32, ex: u32, title: &'static str, limit: Option<Duration>) -> Outcome {
    let (r, elapsed) = timed(|| reproduce(ex, &ReproduceOptions::default()));
    let mut o = match r {
        Ok(r) => from_report(id, title, &r, elapsed),
        Err(e) => Outcome {
            id,
            title,
            elapsed,
            checks: vec![("pipeline".into(), false, e.to_string())],
        },
    };
    if let Some(l) = limit {
        runtime(&mut o, l);
    }
    o
}

fn monte_carlo() -> Outcome {
    let m: Model = catalog::example(2, None).unwrap();
    let sim = SimConfig {
        n_paths: 100_000,
        n_steps: 2000,
        seed: 20_240_101,
        antithetic: false,
    };
    let (r, elapsed) = timed(|| wealth_study(&m, sim));
    let wanted = ["E[W_MV]", "E[W_MV^2]", "P[W >= 1]", "E[Z]", "E[Z^2]"];
    let checks = match r {
        Ok(fs) => fs
            .iter()
            .filter(|f| wanted.contains(&f.name))
            .map(|f| {
                let target = f.analytic.unwrap();
                (
                    f.name.to_string(),
                    f.stats.within(target, 3.0),
                    format!("{:.6} ± {:.2e} vs {:.6}", f.stats.estimate, f.stats.std_error, target),
                )
            })
            .collect(),
        Err(e) => vec![("simulation".into(), false, e.to_string())],
    };
    let mut o = Outcome {
        id: 3,
        title: "Example 2 Monte Carlo cross-check",
        elapsed,
        checks,
    };
    runtime(&mut o, Duration::from_secs(120));
    o
}

fn jumps_1d(rng: &mut ChaCha8Rng, n: usize) -> JumpMeasure<f64> {
    let mut pts = vec![-rng.random_range(0.05..1.5), rng.random_range(0.05..1.5)];
    pts.extend((2..n).map(|_| rng.random_range(-1.5..2.5)));
    let masses: Vec<f64> = pts.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    JumpMeasure::atoms_1d(&pts, &masses).unwrap()
}

fn random_chars(rng: &mut ChaCha8Rng) -> Characteristics {
    let c = if rng.random_bool(0.5) { rng.random_range(0.0..0.2) } else { 0.0 };
    let b = rng.random_range(-0.5..0.5);
    let n = rng.random_range(2..6);
    LocalCharacteristics::new(vec![b], vec![c], jumps_1d(rng, n)).unwrap()
}

fn bounded(xi: VariationFunction<f64>) -> VariationFunction<f64> {
    xi.with_growth(TailGrowth::bounded(), TailGrowth::bounded())
}

/// `max_λ 𝔤(λ)` by a coarse grid refined with ternary search.
fn grid_oracle(ch: &Characteristics, kind: UtilityKind) -> f64 {
    let f = |l: f64| local_utility(&[l], ch, kind).unwrap().to_float();
    let n = 4000;
    let (lo, hi) = (-40.0, 40.0);
    let h = (hi - lo) / n as f64;
    let best = (0..=n)
        .map(|i| lo + h * i as f64)
        .max_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
        .unwrap();
    let (mut a, mut b) = (best - h, best + h);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) < f(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    f(0.5 * (a + b)).max(f(0.0))
}

fn properties() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checks = Vec::new();

    let ex2: Characteristics = catalog::example::<f64>(2, None).unwrap().segments[0].chars.clone();
    let ex3: Characteristics = catalog::example::<f64>(3, None).unwrap().segments[0].chars.clone();
    let mut lin = 0.0f64;
    let mut trunc = 0.0f64;
    for ch in [&ex2, &ex3] {
        for _ in 0..20 {
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let k = rng.random_range(0.5..3.0);
            let x1 = bounded(VariationFunction::scalar(move |y: f64| (k * y).tanh(), k, 0.0));
            let x2 = bounded(VariationFunction::scalar(|y: f64| 1.0 / (1.0 + 1.0 / (y * y)), 0.0, 2.0));
            let d = |x: &VariationFunction<f64>| drift_of_variation(x, ch).unwrap().to_float();
            let comb = VariationFunction::linear_combination(a, &x1, b, &x2);
            lin = lin.max((d(&comb) - a * d(&x1) - b * d(&x2)).abs());
            let split = rng.random_range(0.2..3.0);
            let s = drift_of_variation_split(&x1, ch, split).unwrap().to_float();
            trunc = trunc.max((s - d(&x1)).abs());
        }
    }
    checks.push(("drift linearity".into(), lin <= 1e-10, format!("{lin:.2e}")));
    checks.push(("truncation invariance".into(), trunc <= 1e-10, format!("{trunc:.2e}")));

    let mut worst = f64::INFINITY;
    for i in 0..1000 {
        let ch = if i % 2 == 0 { ex2.clone() } else { random_chars(&mut rng) };
        let kind = if i % 3 == 0 { UtilityKind::Mv } else { UtilityKind::Mmv };
        let (l1, l2, s) = (
            rng.random_range(-6.0..6.0),
            rng.random_range(-6.0..6.0),
            rng.random_range(0.0..1.0),
        );
        let g = |l: f64| local_utility(&[l], &ch, kind).unwrap().to_float();
        let gap = g(s * l1 + (1.0 - s) * l2) - s * g(l1) - (1.0 - s) * g(l2);
        if gap.is_finite() {
            worst = worst.min(gap);
        }
    }
    checks.push(("local-utility concavity".into(), worst >= -1e-9, format!("min gap {worst:.2e}")));

    let mut oracle_gap = 0.0f64;
    for i in 0..50 {
        let n = rng.random_range(2..7);
        let ch = LocalCharacteristics::one_period(jumps_1d(&mut rng, n)).unwrap();
        let kind = if i % 2 == 0 { UtilityKind::Mmv } else { UtilityKind::Mv };
        let opt = maximize_local_utility(&ch, kind).unwrap();
        oracle_gap = oracle_gap.max((grid_oracle(&ch, kind) - opt.value).abs());
    }
    checks.push(("optimizer vs grid oracle".into(), oracle_gap <= 1e-8, format!("{oracle_gap:.2e}")));

    let mut yor = 0.0f64;
    let mut round = 0.0f64;
    for _ in 0..200 {
        let atoms: Vec<(f64, f64)> = (0..rng.random_range(0..6))
            .map(|i| (i as f64, rng.random_range(0.0..0.9)))
            .collect();
        let cu = CumulativeUtility {
            continuous_part: rng.random_range(0.0..3.0),
            atom_increments: atoms,
            ..CumulativeUtility::empty()
        };
        let e = det_stoch_exponential(&cu, -1.0) * det_stoch_exponential(&yor_dual(&cu), 1.0);
        let gv = global_values(&cu);
        yor = yor.max((e - 1.0).abs()).max((gv.v0_from_u0() - gv.v0).abs() / (1.0 + gv.v0));
        let hr2: f64 = rng.random_range(0.0..0.999);
        let sr2 = sharpe_hansen_convert(hr2, RatioConversion::HansenToSharpe).unwrap();
        let back = sharpe_hansen_convert(sr2, RatioConversion::SharpeToHansen).unwrap();
        round = round.max((back - hr2).abs());
    }
    checks.push(("Yor identity".into(), yor <= 1e-12, format!("{yor:.2e}")));
    checks.push(("SR/HR round trip".into(), round <= 1e-14, format!("{round:.2e}")));

    let m: Model = catalog::example(2, None).unwrap();
    let (smm, _) = mmvlab_core::aggregate::cumulative_local_utility(&m, UtilityKind::Mmv).unwrap();
    let sim = SimConfig { n_paths: 400, n_steps: 500, seed: 5, antithetic: true };
    let run = || {
        evaluate_streamed(&m, sim, |s, i| {
            let mut w = WealthTracker::new(&smm, 0.0, 1.0);
            s.visit(i, |_, k, dr| w.step(k, dr));
            (w.wealth, w.exponential)
        })
        .unwrap()
    };
    let paths = run();
    let ident = paths
        .iter()
        .map(|(w, e)| ((1.0 - w).max(0.0) - e).abs())
        .fold(0.0, f64::max);
    checks.push(("pathwise wealth identity".into(), ident <= 1e-12, format!("{ident:.2e}")));
    std::env::set_var(THREADS_ENV, "1");
    let one = run();
    std::env::set_var(THREADS_ENV, "4");
    let four = run();
    std::env::remove_var(THREADS_ENV);
    let same = one.iter().zip(&four).all(|(a, b)| a.0.to_bits() == b.0.to_bits())
        && one == paths;
    checks.push(("seed determinism across thread counts".into(), same, format!("{} paths", one.len())));

    let mut o = Outcome {
        id: 8,
        title: "Property suites",
        elapsed: t.elapsed(),
        checks,
    };
    runtime(&mut o, Duration::from_secs(60));
    o
}

fn main() {
    let outcomes = vec![
        example(1, 1, "Example 1 one-period model", Some(Duration::from_millis(100))),
        example(2, 2, "Example 2 closed forms", Some(Duration::from_secs(5))),
        monte_carlo(),
        example(4, 3, "Example 3 non-equivalent density", None),
        example(5, 4, "Example 4 equivalent, not a sigma-martingale", None),
        example(6, 5, "Example 5 truncated series", None),
        example(7, 6, "Example 6 infinite values", None),
        properties(),
    ];
    let mut unexpected = Vec::new();
    for o in &outcomes {
        let verdict = if o.passed() { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict}  {} ({:.2?})", o.id, o.title, o.elapsed);
        for (name, ok, detail) in &o.checks {
            if !ok {
                println!("    failed: {name}: {detail}");
            }
        }
        let expected: Vec<&str> = KNOWN_FAILURES
            .iter()
            .filter(|(id, _)| *id == o.id)
            .map(|(_, n)| *n)
            .collect();
        if o.failed_names() != expected {
            unexpected.push(o.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
