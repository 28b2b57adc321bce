//! The worked examples as labelled figures with pass/fail checks.

use serde::Serialize;

use crate::aggregate::{cumulative_local_utility, global_values, GlobalValues, Schedule};
use crate::catalog;
use crate::drift::{drift_of_variation, TailGrowth, TailSign, VariationFunction};
use crate::duality::{
    compare_mv_mmv, density_diagnostics, mellin_sign_moments, mv_signed_measure, switch_intensity,
    MvMmvVerdict,
};
use crate::error::{MmvError, Result};
use crate::exact;
use crate::localutil::{check_instantaneous_no_arbitrage, local_utility, UtilityKind};
use crate::montecarlo::{wealth_study, SimConfig};
use crate::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Mc,
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The published figure disagrees with an independent recomputation.
    Discrepancy,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Discrepancy => "DISCREPANCY",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Expect {
    /// `|value − target| ≤ tol`.
    Near { target: f64, tol: f64 },
    /// `value ≤ bound`.
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    /// `|value − target| ≤ k·std_error`.
    WithinSe { target: f64, k: f64 },
    Flag { expected: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure {
    pub name: String,
    pub value: f64,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub expect: Expect,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn evaluate(name: &str, value: f64, std_error: Option<f64>, expect: Expect) -> Self {
        let ok = match expect {
            Expect::Near { target, tol } => (value - target).abs() <= tol,
            Expect::AtMost { bound } => value <= bound,
            Expect::AtLeast { bound } => value >= bound,
            Expect::WithinSe { target, k } => {
                (value - target).abs() <= k * std_error.unwrap_or(0.0)
            }
            Expect::Flag { expected } => (value != 0.0) == expected,
        };
        Check {
            name: name.into(),
            value,
            std_error,
            expect,
            status: if ok { Status::Pass } else { Status::Fail },
            note: None,
        }
    }

    /// Marks a failing check as a known disagreement with the published figure.
    fn known_discrepancy(mut self, note: &str) -> Self {
        if self.status == Status::Fail {
            self.status = Status::Discrepancy;
        }
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExampleReport {
    pub example: u32,
    pub figures: Vec<Figure>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ExampleReport {
    /// No check failed; discrepancies are reported but do not fail.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn figure(&self, name: &str) -> Option<&Figure> {
        self.figures.iter().find(|f| f.name == name)
    }

    fn fig(&mut self, name: &str, value: f64) {
        self.figures.push(Figure {
            name: name.into(),
            value,
            provenance: Provenance::Analytic,
            std_error: None,
        });
    }

    fn heuristic(&mut self, name: &str, value: f64) {
        self.figures.push(Figure {
            name: name.into(),
            value,
            provenance: Provenance::Heuristic,
            std_error: None,
        });
    }

    fn near(&mut self, name: &str, value: f64, target: f64, tol: f64) -> &mut Check {
        self.push(Check::evaluate(name, value, None, Expect::Near { target, tol }))
    }

    fn at_most(&mut self, name: &str, value: f64, bound: f64) -> &mut Check {
        self.push(Check::evaluate(name, value, None, Expect::AtMost { bound }))
    }

    fn flag(&mut self, name: &str, value: bool, expected: bool) -> &mut Check {
        let v = if value { 1.0 } else { 0.0 };
        self.push(Check::evaluate(name, v, None, Expect::Flag { expected }))
    }

    fn push(&mut self, c: Check) -> &mut Check {
        self.checks.push(c);
        self.checks.last_mut().unwrap()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReproduceOptions {
    /// Truncation index for Examples 5 and 6.
    pub atoms: Option<usize>,
    /// Monte Carlo cross-check of Example 2; skipped when `None`.
    pub mc: Option<SimConfig>,
}

/// Builds example `id`, runs the pipeline and checks the published figures.
pub fn reproduce(id: u32, opts: &ReproduceOptions) -> Result<ExampleReport> {
    let mut r = ExampleReport {
        example: id,
        ..Default::default()
    };
    match id {
        1 => example1(&mut r)?,
        2 => example2(&mut r, opts.mc)?,
        3 => example3(&mut r)?,
        4 => example4(&mut r)?,
        5 => example5(&mut r, opts.atoms.unwrap_or(catalog::EXAMPLE5_ATOMS))?,
        6 => example6(&mut r, opts.atoms.unwrap_or(catalog::EXAMPLE6_ATOMS))?,
        _ => return Err(MmvError::Schema(format!("no example {id}; choose 1 to 6"))),
    }
    Ok(r)
}

fn solve(m: &Model, kind: UtilityKind) -> Result<(Schedule<f64>, GlobalValues<f64>)> {
    let (s, cu) = cumulative_local_utility(m, kind)?;
    Ok((s, global_values(&cu)))
}

fn example1(r: &mut ExampleReport) -> Result<()> {
    let m: Model = catalog::example(1, None)?;
    let (s, gv) = solve(&m, UtilityKind::Mmv)?;
    let d = density_diagnostics(&m, &s, &gv)?;
    let opt = &s.entries[0].optimum;
    r.fig("lambda_hat.0", opt.lambda_hat[0]);
    r.fig("lambda_hat.1", opt.lambda_hat[1]);
    r.near("variance of the density", d.variance, 2.0 / 3.0, 1e-12);
    r.near("max twice expected utility", 2.0 * opt.value, 0.4, 1e-12);
    r.near("v0", gv.v0, 1.0 / 3.0, 1e-12);
    let chars = &m.atoms[0].chars;
    for (i, e) in [[1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
        let v = local_utility(e, chars, UtilityKind::Mmv)?.to_float();
        r.near(&format!("unit strategy e{} attains the optimum", i + 1), v, opt.value, 1e-10);
    }
    r.flag("tie-break applied", opt.tie_break_applied, true);
    r.flag("instantaneously arbitrage-free", check_instantaneous_no_arbitrage(&m)?.holds, true);
    Ok(())
}

fn example2(r: &mut ExampleReport, mc: Option<SimConfig>) -> Result<()> {
    let m: Model = catalog::example(2, None)?;
    let (smv, gmv) = solve(&m, UtilityKind::Mv)?;
    let (smm, gmm) = solve(&m, UtilityKind::Mmv)?;
    let dens = density_diagnostics(&m, &smm, &gmm)?;
    let mv = &smv.entries[0].optimum;
    let mmv = &smm.entries[0].optimum;
    r.near("lambda_hat MV", mv.lambda_hat[0], 4.4844, 5e-4);
    r.near("2 g_MV(lambda_hat MV)", 2.0 * mv.value, 1.0091, 5e-4);
    r.near("2 v_MV(0)", 2.0 * gmv.v0, 1.7430, 2e-3);
    r.near("lambda_hat MMV", mmv.lambda_hat[0], 4.5143, 2e-3);
    r.fig("2 g_MMV(lambda_hat MMV)", 2.0 * mmv.value);
    let theta_mmv = switch_intensity(&m, &smm)?[0].1;
    r.near("theta MMV", theta_mmv, 0.022699, 5e-4);
    r.near("P[W >= 1]", dens.p_zero, 0.02244, 5e-4);
    r.near("2 v_MMV(0)", 2.0 * gmm.v0, 1.7482, 2e-3);
    let p1 = mellin_sign_moments(&m, &smv, 1)?;
    let p2 = mellin_sign_moments(&m, &smv, 2)?;
    let p0 = mellin_sign_moments(&m, &smv, 0)?;
    let mean_trunc = 1.0 - p1.phi_plus;
    let second_trunc = 1.0 - 2.0 * p1.phi_plus + p2.phi_plus;
    r.near("E[W_MV ^ 1]", mean_trunc, 0.63373, 1e-3);
    r.near("E[(W_MV ^ 1)^2]", second_trunc, 0.63136, 1e-3);
    r.near("E[W_MV] - E[W_MV ^ 1]", p1.phi_minus, 0.0017, 1e-3);
    r.near("E[W_MV^2] - E[(W_MV ^ 1)^2]", 2.0 * p1.phi_minus + p2.phi_minus, 0.0041, 1e-3);
    r.near("HR^2 of W_MV", gmv.mhr2, 0.6354, 1e-3);
    r.near("HR^2 of W_MV ^ 1", mean_trunc * mean_trunc / second_trunc, 0.6361, 1e-3);
    r.fig("P[E(-lambda_hat MV . R) < 0]", p0.phi_minus);
    let theta_mv = switch_intensity(&m, &smv)?[0].1;
    r.near("theta MV", theta_mv, 0.022057, 5e-4);
    r.notes.push(
        "A second reference value, lambda_hat MV = 4.5130, disagrees with the closed form 4.4844, which is the pinned value."
            .into(),
    );
    let cmp = compare_mv_mmv(&m)?;
    r.flag(
        "MV and MMV strategies differ",
        cmp.verdict == MvMmvVerdict::Differ,
        true,
    );
    if let Some(sim) = mc {
        for f in wealth_study(&m, sim)? {
            let Some(target) = f.analytic else { continue };
            r.figures.push(Figure {
                name: format!("mc {}", f.name),
                value: f.stats.estimate,
                provenance: Provenance::Mc,
                std_error: Some(f.stats.std_error),
            });
            r.push(Check::evaluate(
                &format!("mc {}", f.name),
                f.stats.estimate,
                Some(f.stats.std_error),
                Expect::WithinSe { target, k: 3.0 },
            ));
        }
    }
    Ok(())
}

fn example3(r: &mut ExampleReport) -> Result<()> {
    let m: Model = catalog::example(3, None)?;
    let (s, gv) = solve(&m, UtilityKind::Mmv)?;
    let d = density_diagnostics(&m, &s, &gv)?;
    let l = s.entries[0].optimum.lambda_hat[0];
    r.near("lambda_hat", l, 1.108, 5e-3);
    let theta = switch_intensity(&m, &s)?[0].1;
    r.near("theta", theta, l / (1.0 + l), 1e-6);
    r.fig("theta", theta);
    r.near("p_zero", d.p_zero, 0.4088, 1e-3);
    r.at_most("sigma-martingale residual", d.max_residual, 1e-3);
    r.flag("density equivalent to P", d.equivalent, false);
    let (smv, _) = solve(&m, UtilityKind::Mv)?;
    r.near("lambda_hat MV", smv.entries[0].optimum.lambda_hat[0], 0.0, 0.0);
    let cmp = compare_mv_mmv(&m)?;
    r.flag(
        "MV/MMV comparison not applicable",
        cmp.verdict == MvMmvVerdict::NotApplicable,
        true,
    );
    Ok(())
}

fn example4(r: &mut ExampleReport) -> Result<()> {
    let m: Model = catalog::example(4, None)?;
    let (s, gv) = solve(&m, UtilityKind::Mmv)?;
    let d = density_diagnostics(&m, &s, &gv)?;
    r.near("lambda_hat", s.entries[0].optimum.lambda_hat[0], 0.0, 0.0);
    r.flag("density equivalent to P", d.equivalent, true);
    r.near("sigma-martingale residual", d.sigma_mart_residual[0].1[0], -1.0, 1e-8);
    r.flag("sigma-martingale measure", d.is_sigma_martingale, false);
    let id = VariationFunction::scalar(|y: f64| y, 1.0, 0.0).with_growth(
        TailGrowth::poly(1.0, TailSign::Negative),
        TailGrowth::poly(1.0, TailSign::Positive),
    );
    let chars = &m.segments[0].chars;
    r.near("drift of id o R", drift_of_variation(&id, chars)?.to_float(), -1.0, 1e-8);
    Ok(())
}

/// `max_{n ≥ 10} n·|x_n − target|` over a sequence indexed from `n = first`.
fn scaled_gap(xs: &[f64], first: usize, target: f64) -> f64 {
    xs.iter()
        .enumerate()
        .map(|(i, x)| (i + first, x))
        .filter(|(n, _)| *n >= 10)
        .map(|(n, x)| n as f64 * (x - target).abs())
        .fold(0.0, f64::max)
}

fn example5(r: &mut ExampleReport, atoms: usize) -> Result<()> {
    let m: Model = catalog::example(5, Some(atoms))?;
    let (smv, cmv) = cumulative_local_utility(&m, UtilityKind::Mv)?;
    let (smm, cmm) = cumulative_local_utility(&m, UtilityKind::Mmv)?;
    let lam_mv: Vec<f64> = smv.entries.iter().map(|e| e.optimum.lambda_hat[0]).collect();
    let rate_mv: Vec<f64> = smv.entries.iter().map(|e| e.rate()).collect();
    let mhr2: Vec<f64> = smm.entries.iter().map(|e| 2.0 * e.optimum.value).collect();
    r.fig("atoms", atoms as f64);
    r.fig("lambda_hat MV at n = N", *lam_mv.last().unwrap());
    r.fig("g_MV rate at n = N", *rate_mv.last().unwrap());
    let c = Check::evaluate(
        "max n |lambda_hat MV_n - 3/2|, n >= 10",
        scaled_gap(&lam_mv, 1, 1.5),
        None,
        Expect::AtMost { bound: 5.0 },
    );
    r.push(c.known_discrepancy(
        "E[X_n] = 3/(4n^2) + O(1/n^3) and E[X_n^2] = 1/(4n^2) + O(1/n^4), so lambda_hat MV_n = 3 - 2/n + O(1/n^2); the 3/2 limit does not hold",
    ));
    let max_rel = (1..=atoms)
        .map(|n| {
            let law = m.atoms[n - 1].law();
            let pts: Vec<f64> = law.0.iter().map(|p| p[0]).collect();
            let (l, _) = exact::mv_optimum(&pts, law.1);
            ((lam_mv[n - 1] - l) / l).abs()
        })
        .fold(0.0, f64::max);
    r.at_most("max relative error of lambda_hat MV_n against E[X]/E[X^2]", max_rel, 1e-9);
    r.at_most("max n |g_MV rate_n - 9/8|, n >= 10", scaled_gap(&rate_mv, 1, 1.125), 5.0);
    r.at_most("max n |MHR^2_n - 1/2|, n >= 10", scaled_gap(&mhr2, 1, 0.5), 5.0);
    let sv_mv = cmv.series.expect("series model");
    let sv_mm = cmm.series.expect("series model");
    r.heuristic("MV tail ratio", sv_mv.tail_ratio);
    r.heuristic("MMV tail ratio", sv_mm.tail_ratio);
    r.heuristic("MV partial sum", sv_mv.partial_sum);
    r.heuristic("MMV partial sum", sv_mm.partial_sum);
    r.flag("MV series converges", !sv_mv.diverges, true);
    r.flag("MMV series diverges", sv_mm.diverges, true);
    r.push(Check::evaluate(
        "MMV partial sum",
        sv_mm.partial_sum,
        None,
        Expect::AtLeast { bound: 100.0 },
    ));
    r.flag("MMV value infinite", !global_values(&cmm).finite, true);
    Ok(())
}

fn example6(r: &mut ExampleReport, atoms: usize) -> Result<()> {
    let m: Model = catalog::example(6, Some(atoms))?;
    let (smv, cmv) = cumulative_local_utility(&m, UtilityKind::Mv)?;
    let (smm, cmm) = cumulative_local_utility(&m, UtilityKind::Mmv)?;
    let mut hr_gap: f64 = 0.0;
    let mut mean_gap: f64 = 0.0;
    let mut lam_gap: f64 = 0.0;
    for (i, e) in smv.entries.iter().enumerate() {
        let n = (i + 2) as f64;
        let law = m.atoms[i].law();
        let pts: Vec<f64> = law.0.iter().map(|p| p[0]).collect();
        hr_gap = hr_gap.max((2.0 * e.optimum.value - 1.0 / (n + 1.0)).abs());
        mean_gap = mean_gap.max((exact::moments(&pts, law.1).0 + n / (n * n * n + 1.0)).abs());
        let l_mm = smm.entries[i].optimum.lambda_hat[0];
        lam_gap = lam_gap.max(((e.optimum.lambda_hat[0] - l_mm) / l_mm).abs());
    }
    r.at_most("max |HR^2_n - 1/(n+1)|", hr_gap, 1e-12);
    r.at_most("max |E[X_n] + n/(n^3+1)|", mean_gap, 1e-12);
    r.at_most("max relative gap between MMV and MV lambda_hat", lam_gap, 1e-9);
    r.near("lambda_hat MV at n = 2", smv.entries[0].optimum.lambda_hat[0], -1.5, 1e-12);
    let sv = cmv.series.expect("series model");
    r.heuristic("MV tail ratio", sv.tail_ratio);
    r.heuristic("MV partial sum", sv.partial_sum);
    r.flag("MV value infinite", !global_values(&cmv).finite, true);
    r.flag("MMV value infinite", !global_values(&cmm).finite, true);
    let msg = match mv_signed_measure(&m) {
        Err(MmvError::InfiniteValue(s)) => s,
        Err(e) => return Err(e),
        Ok(_) => String::new(),
    };
    r.flag("no separating measure reported", msg.contains("no separating measure"), true);
    if !msg.is_empty() {
        r.notes.push(msg);
    }
    r.flag("instantaneously arbitrage-free", check_instantaneous_no_arbitrage(&m)?.holds, true);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_examples_pass() {
        for id in [1, 3, 4] {
            let r = reproduce(id, &ReproduceOptions::default()).unwrap();
            for c in &r.checks {
                assert_eq!(c.status, Status::Pass, "example {id}: {c:?}");
            }
        }
    }

    #[test]
    fn unknown_example() {
        assert!(reproduce(9, &ReproduceOptions::default()).is_err());
    }
}
