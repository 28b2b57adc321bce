//! Dual objects: the minimal-variance separating density, σ-martingale
//! residuals, the signed variance-optimal measure and its sign moments.

use std::sync::Arc;

use crate::aggregate::{cumulative_local_utility, global_values, GlobalValues, Schedule};
use crate::drift::{drift_of_variation, ScalarFn, TailGrowth, TailSign, VariationFunction};
use crate::error::{MmvError, Result};
use crate::localutil::{foc_residual, mass_where, UtilityKind};
use crate::model::{JumpMeasure, LocalCharacteristics, Location, MarketModel};
use crate::scalar::{ExtendedReal, Real};

/// Default bound on `max|residual|` for the σ-martingale verdict.
pub const SIGMA_MARTINGALE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityDiagnostics<T> {
    pub mean: T,
    pub second_moment: T,
    pub variance: T,
    pub p_zero: T,
    pub sigma_mart_residual: Vec<(Location<T>, Vec<T>)>,
    pub max_residual: T,
    pub equivalent: bool,
    pub is_sigma_martingale: bool,
}

fn check_kind<T>(schedule: &Schedule<T>, kind: UtilityKind) -> Result<()> {
    if schedule.kind != kind {
        return Err(MmvError::Invariant(format!(
            "expected a {} schedule, got {}",
            kind.name(),
            schedule.kind.name()
        )));
    }
    Ok(())
}

fn lambdas<'a, T: Real>(
    model: &'a MarketModel<T>,
    schedule: &'a Schedule<T>,
) -> Result<Vec<(Location<T>, &'a LocalCharacteristics<T>, &'a [T])>> {
    let locs = model.locations();
    if locs.len() != schedule.entries.len() {
        return Err(MmvError::Invariant(
            "schedule does not match the model's segments and atoms".into(),
        ));
    }
    Ok(locs
        .into_iter()
        .zip(&schedule.entries)
        .map(|((loc, ch), e)| (loc, ch, e.optimum.lambda_hat.as_slice()))
        .collect())
}

/// Moments, zero-mass probability and σ-martingale residuals of
/// `dQ̂/dP = E(−(id∧1)∘(λ̂·R))_T / E(−2𝔤·A)_T`.
pub fn density_diagnostics<T: Real>(
    model: &MarketModel<T>,
    schedule: &Schedule<T>,
    gv: &GlobalValues<T>,
) -> Result<DensityDiagnostics<T>> {
    check_kind(schedule, UtilityKind::Mmv)?;
    density_diagnostics_with_tol(model, schedule, gv, T::lit(SIGMA_MARTINGALE_TOL))
}

pub fn density_diagnostics_with_tol<T: Real>(
    model: &MarketModel<T>,
    schedule: &Schedule<T>,
    gv: &GlobalValues<T>,
    tol: T,
) -> Result<DensityDiagnostics<T>> {
    if !gv.finite {
        return Err(MmvError::InfiniteValue(
            "no separating measure: the MMV value is infinite".into(),
        ));
    }
    let residuals = sigma_martingale_residual(model, schedule, UtilityKind::Mmv)?;
    let max_residual = residuals
        .iter()
        .flat_map(|(_, r)| r.iter())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    let (p_zero, hit) = zero_mass(model, schedule)?;
    let two = T::lit(2.0);
    Ok(DensityDiagnostics {
        mean: T::one(),
        second_moment: T::one() + two * gv.v0,
        variance: two * gv.v0,
        p_zero,
        sigma_mart_residual: residuals,
        max_residual,
        equivalent: !hit,
        is_sigma_martingale: max_residual <= tol,
    })
}

/// Drift of the `x_i g'(λ̂·x)`-variation of `R` at every segment and atom.
pub fn sigma_martingale_residual<T: Real>(
    model: &MarketModel<T>,
    schedule: &Schedule<T>,
    kind: UtilityKind,
) -> Result<Vec<(Location<T>, Vec<T>)>> {
    lambdas(model, schedule)?
        .into_iter()
        .map(|(loc, ch, l)| Ok((loc, foc_residual(l, ch, kind)?)))
        .collect()
}

/// `1 − exp(−Σ len·F{λ̂x ≥ 1})·∏(1 − P[λ̂ΔR_τ ≥ 1])`.
pub fn zero_density_probability<T: Real>(model: &MarketModel<T>, schedule: &Schedule<T>) -> Result<T> {
    Ok(zero_mass(model, schedule)?.0)
}

/// Intensity (segments) or probability (atoms) of a jump that drives the
/// wealth to the bliss point: `F{λ̂·x ≥ 1}` for MMV, `F{λ̂·x > 1}` for MV.
pub fn switch_intensity<T: Real>(
    model: &MarketModel<T>,
    schedule: &Schedule<T>,
) -> Result<Vec<(Location<T>, T)>> {
    lambdas(model, schedule)?
        .into_iter()
        .map(|(loc, ch, l)| {
            if l.iter().all(|v| *v == T::zero()) {
                return Ok((loc, T::zero()));
            }
            let m = match schedule.kind {
                UtilityKind::Mmv => mass_where(&ch.jumps, l, |z| z >= T::one(), T::one(), &ch.quad)?,
                UtilityKind::Mv => mass_where(&ch.jumps, l, |z| z > T::one(), T::one(), &ch.quad)?,
            };
            Ok((loc, m))
        })
        .collect()
}

fn zero_mass<T: Real>(model: &MarketModel<T>, schedule: &Schedule<T>) -> Result<(T, bool)> {
    let mut theta = T::zero();
    let mut survive = T::one();
    let mut hit = false;
    for (loc, ch, l) in lambdas(model, schedule)? {
        if l.iter().all(|v| *v == T::zero()) {
            continue;
        }
        let m = mass_where(&ch.jumps, l, |z| z >= T::one(), T::one(), &ch.quad)?;
        hit |= m > T::zero();
        match loc {
            Location::Segment { t_start, t_end, .. } => theta = theta + (t_end - t_start) * m,
            Location::Atom { .. } => survive = survive * (T::one() - m),
        }
    }
    Ok((T::one() - (-theta).exp() * survive, hit))
}

/// `φ₊(p) = E[|E|^p; E > 0]` and `φ₋(p) = E[|E|^p; E < 0]` for `E = E(−λ·R)_T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignMoments<T> {
    pub p: u32,
    pub phi_plus: T,
    pub phi_minus: T,
}

fn mellin_fn<T: Real>(p: u32, signed: bool) -> ScalarFn<T> {
    let pt = T::from_u32(p).expect("small exponent");
    let f = move |y: T| {
        let base = if y == T::one() {
            T::zero()
        } else {
            (T::one() - y).abs().powi(p as i32)
        };
        let s = if !signed || y < T::one() {
            T::one()
        } else if y > T::one() {
            -T::one()
        } else {
            T::zero()
        };
        s * base - T::one()
    };
    let growth = |sign| {
        if p == 0 {
            TailGrowth::bounded()
        } else {
            TailGrowth::poly(p as f64, sign)
        }
    };
    ScalarFn {
        f: Arc::new(f),
        d1: -pt,
        d2: pt * (pt - T::one()),
        kinks: vec![T::one()],
        left: growth(TailSign::Positive),
        right: growth(if signed { TailSign::Negative } else { TailSign::Positive }),
    }
}

/// Mellin-transform sign moments of `E(−λ·R)_T` for a deterministic `λ` schedule.
pub fn mellin_sign_moments<T: Real>(
    model: &MarketModel<T>,
    schedule: &Schedule<T>,
    p: u32,
) -> Result<SignMoments<T>> {
    let locs = lambdas(model, schedule)?;
    let transform = |signed: bool| -> Result<T> {
        let phi = mellin_fn::<T>(p, signed);
        let mut log_cont = T::zero();
        let mut prod = T::one();
        for (loc, ch, l) in &locs {
            let xi = VariationFunction::compose_linear(&phi, l);
            let b = match drift_of_variation(&xi, ch)? {
                ExtendedReal::Finite(v) => v,
                _ => {
                    return Err(MmvError::NonIntegrable(format!(
                        "Mellin drift at {}",
                        loc.label()
                    )))
                }
            };
            match loc {
                Location::Segment { t_start, t_end, .. } => {
                    log_cont = log_cont + (*t_end - *t_start) * b
                }
                Location::Atom { .. } => prod = prod * (T::one() + b),
            }
        }
        Ok(log_cont.exp() * prod)
    };
    let m1 = transform(false)?;
    let m2 = transform(true)?;
    let two = T::lit(2.0);
    Ok(SignMoments {
        p,
        phi_plus: (m1 + m2) / two,
        phi_minus: (m1 - m2) / two,
    })
}

/// The signed variance-optimal measure `Q̂^MV`, through its moments only.
#[derive(Clone, Debug, PartialEq)]
pub struct MvSignedDiagnostics<T> {
    pub schedule: Schedule<T>,
    pub values: GlobalValues<T>,
    /// `Var(dQ̂^MV/dP) = 2v_MV(0)`.
    pub variance: T,
    /// `P[dQ̂^MV/dP < 0] = φ₋(0)`.
    pub negative_probability: T,
    /// No jump with `λ̂^MV·x > 1` anywhere, so the density is non-negative.
    pub is_probability_measure: bool,
}

pub fn mv_signed_measure<T: Real>(model: &MarketModel<T>) -> Result<MvSignedDiagnostics<T>> {
    let (schedule, cu) = cumulative_local_utility(model, UtilityKind::Mv)?;
    let values = global_values(&cu);
    if !values.finite {
        return Err(MmvError::InfiniteValue(
            "no separating measure: the MV value is infinite".into(),
        ));
    }
    let negative_probability = mellin_sign_moments(model, &schedule, 0)?.phi_minus;
    let is_probability_measure = !exceeds_one(model, &schedule)?;
    Ok(MvSignedDiagnostics {
        variance: T::lit(2.0) * values.v0,
        negative_probability,
        is_probability_measure,
        schedule,
        values,
    })
}

/// Some location has jump mass on `{λ·x > 1}`.
fn exceeds_one<T: Real>(model: &MarketModel<T>, schedule: &Schedule<T>) -> Result<bool> {
    for (_, ch, l) in lambdas(model, schedule)? {
        if l.iter().any(|v| *v != T::zero())
            && mass_where(&ch.jumps, l, |z| z > T::one(), T::one(), &ch.quad)? > T::zero()
        {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvMmvVerdict {
    Coincide,
    Differ,
    /// `R` is not square integrable, so the comparison does not apply.
    NotApplicable,
}

impl MvMmvVerdict {
    pub fn name(self) -> &'static str {
        match self {
            MvMmvVerdict::Coincide => "coincide",
            MvMmvVerdict::Differ => "differ",
            MvMmvVerdict::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvMmvComparison<T> {
    pub verdict: MvMmvVerdict,
    pub square_integrable: bool,
    /// `λ̂^MV·ΔR ≤ 1` everywhere.
    pub mv_below_bliss: Option<bool>,
    /// `max |λ̂ − λ̂^MV|` over the schedule.
    pub max_lambda_gap: Option<T>,
}

pub fn is_square_integrable<T: Real>(model: &MarketModel<T>) -> bool {
    model.segments.iter().all(|s| match &s.chars.jumps {
        JumpMeasure::FiniteAtoms { .. } => true,
        j => {
            let (l, r) = j.tails();
            l.has_moment(T::lit(2.0)) && r.has_moment(T::lit(2.0))
        }
    })
}

/// Tests whether the MV and MMV optima agree, via `λ̂^MV·ΔR ≤ 1`.
pub fn compare_mv_mmv<T: Real>(model: &MarketModel<T>) -> Result<MvMmvComparison<T>> {
    if !is_square_integrable(model) {
        return Ok(MvMmvComparison {
            verdict: MvMmvVerdict::NotApplicable,
            square_integrable: false,
            mv_below_bliss: None,
            max_lambda_gap: None,
        });
    }
    let (mv, _) = cumulative_local_utility(model, UtilityKind::Mv)?;
    let (mmv, _) = cumulative_local_utility(model, UtilityKind::Mmv)?;
    let below = !exceeds_one(model, &mv)?;
    let gap = mv
        .entries
        .iter()
        .zip(&mmv.entries)
        .flat_map(|(a, b)| {
            a.optimum
                .lambda_hat
                .iter()
                .zip(&b.optimum.lambda_hat)
                .map(|(x, y)| (*x - *y).abs() / (T::one() + x.abs()))
        })
        .fold(T::zero(), |m, v| m.max(v));
    Ok(MvMmvComparison {
        verdict: if below && gap <= T::lit(1e-6) {
            MvMmvVerdict::Coincide
        } else {
            MvMmvVerdict::Differ
        },
        square_integrable: true,
        mv_below_bliss: Some(below),
        max_lambda_gap: Some(gap),
    })
}

/// `½Var(dQ/dP)` for a one-period density given as state probabilities `q`
/// against physical probabilities `p`; bounded below by `v_MMV(0)` when `Q`
/// is separating.
pub fn half_variance_of_density<T: Real>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() || p.iter().any(|v| !(*v > T::zero())) {
        return Err(MmvError::Domain(
            "state probabilities must be positive and match the density".into(),
        ));
    }
    let second: T = p.iter().zip(q).map(|(pi, qi)| *qi * *qi / *pi).sum();
    Ok((second - T::one()) / T::lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::cumulative_local_utility;
    use crate::model::JumpAtom;

    fn example1() -> MarketModel<f64> {
        let pts = vec![vec![-0.5, -0.5], vec![0.5, 0.5], vec![1.0, 1.2], vec![1.2, 1.0]];
        let atom = JumpAtom::new(1.0, pts, vec![0.2, 0.6, 0.1, 0.1], 2).unwrap();
        MarketModel::new(1.0, 2, vec![], vec![atom]).unwrap()
    }

    #[test]
    fn example_one_density() {
        let m = example1();
        let (s, cu) = cumulative_local_utility(&m, UtilityKind::Mmv).unwrap();
        let gv = global_values(&cu);
        let d = density_diagnostics(&m, &s, &gv).unwrap();
        assert!((d.variance - 2.0 / 3.0).abs() < 1e-14);
        assert!((d.p_zero - 0.2).abs() < 1e-15);
        assert!(!d.equivalent);
        assert!(d.is_sigma_martingale, "{:?}", d.sigma_mart_residual);
        let q_hat = half_variance_of_density(&[0.2, 0.6, 0.1, 0.1], &[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!((q_hat - gv.v0).abs() < 1e-14);
        let q = half_variance_of_density(&[0.2, 0.6, 0.1, 0.1], &[0.62, 0.18, 0.1, 0.1]).unwrap();
        assert!(q >= gv.v0);
    }

    #[test]
    fn sign_moments_of_zero_strategy() {
        let m = example1();
        let (mut s, _) = cumulative_local_utility(&m, UtilityKind::Mv).unwrap();
        s.entries[0].optimum.lambda_hat = vec![0.0, 0.0];
        for p in 0..3 {
            let sm = mellin_sign_moments(&m, &s, p).unwrap();
            assert_eq!((sm.phi_plus, sm.phi_minus), (1.0, 0.0));
        }
    }

    #[test]
    fn sign_moments_on_atoms_match_enumeration() {
        let m = example1();
        let (s, _) = cumulative_local_utility(&m, UtilityKind::Mv).unwrap();
        let l = s.entries[0].optimum.lambda_hat.clone();
        let pts = [[-0.5, -0.5], [0.5, 0.5], [1.0, 1.2], [1.2, 1.0]];
        let pr = [0.2, 0.6, 0.1, 0.1];
        for p in 0..3 {
            let sm = mellin_sign_moments(&m, &s, p).unwrap();
            let (mut plus, mut minus) = (0.0, 0.0);
            for (x, w) in pts.iter().zip(pr) {
                let e: f64 = 1.0 - (l[0] * x[0] + l[1] * x[1]);
                if e > 0.0 {
                    plus += w * e.abs().powi(p as i32);
                } else if e < 0.0 {
                    minus += w * e.abs().powi(p as i32);
                }
            }
            assert!((sm.phi_plus - plus).abs() < 1e-14 && (sm.phi_minus - minus).abs() < 1e-14);
        }
    }
}
