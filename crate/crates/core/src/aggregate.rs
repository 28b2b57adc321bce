//! Cumulative local utility, deterministic stochastic exponentials and global values.

use rayon::prelude::*;

use crate::error::{MmvError, Result};
use crate::localutil::UtilityKind;
use crate::model::{Location, MarketModel};
use crate::optimize::{maximize_local_utility, LocalOptimum};
use crate::scalar::Real;

/// Tail-ratio threshold above which a truncated series is declared divergent.
pub const DIVERGENCE_RATIO: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleEntry<T> {
    pub location: Location<T>,
    pub optimum: LocalOptimum<T>,
    /// Segment length, or the original `ΔA_τ` of an atom.
    pub activity: T,
}

impl<T: Real> ScheduleEntry<T> {
    /// `𝔤(λ̂)` per unit of the original activity.
    pub fn rate(&self) -> T {
        match self.location {
            Location::Segment { .. } => self.optimum.value,
            Location::Atom { .. } => self.optimum.value / self.activity,
        }
    }
}

/// Locally optimal `λ̂` at every segment and atom, in model order.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    pub kind: UtilityKind,
    pub entries: Vec<ScheduleEntry<T>>,
}

impl<T: Real> Schedule<T> {
    pub fn segments(&self) -> impl Iterator<Item = &ScheduleEntry<T>> {
        self.entries
            .iter()
            .filter(|e| matches!(e.location, Location::Segment { .. }))
    }

    pub fn atoms(&self) -> impl Iterator<Item = &ScheduleEntry<T>> {
        self.entries
            .iter()
            .filter(|e| matches!(e.location, Location::Atom { .. }))
    }
}

/// Heuristic verdict on a truncated infinite series of atom increments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesVerdict<T> {
    pub terms: usize,
    pub partial_sum: T,
    /// `S(N/2, N] / S(N/4, N/2]`: about `2^{1−p}` for terms `~ n^{−p}`.
    pub tail_ratio: T,
    pub diverges: bool,
}

/// `B^{2g∘(λ̂·R)}`: `∫2𝔤 dt` over segments plus one increment per atom.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeUtility<T> {
    pub continuous_part: T,
    /// `(τ, 2𝔤_τ)` in the `ΔA = 1` convention.
    pub atom_increments: Vec<(T, T)>,
    pub finite: bool,
    pub series: Option<SeriesVerdict<T>>,
}

impl<T: Real> CumulativeUtility<T> {
    pub fn empty() -> Self {
        CumulativeUtility {
            continuous_part: T::zero(),
            atom_increments: Vec::new(),
            finite: true,
            series: None,
        }
    }

    pub fn total(&self) -> T {
        self.continuous_part + self.atom_increments.iter().map(|(_, v)| *v).sum::<T>()
    }

    /// Some atom factor `1 − increment` is not positive.
    pub fn has_nonpositive_factor(&self) -> bool {
        self.atom_increments.iter().any(|(_, v)| !(*v < T::one()))
    }
}

/// Tail test `S(N/2, N] / S(N/4, N/2] > 0.9` on a sequence of non-negative terms.
pub fn series_verdict<T: Real>(terms: &[T]) -> SeriesVerdict<T> {
    let n = terms.len();
    let partial_sum: T = terms.iter().copied().sum();
    let upper: T = terms[n / 2..].iter().copied().sum();
    let lower: T = terms[n / 4..n / 2].iter().copied().sum();
    let tail_ratio = if lower > T::zero() {
        upper / lower
    } else if upper > T::zero() {
        T::infinity()
    } else {
        T::zero()
    };
    SeriesVerdict {
        terms: n,
        partial_sum,
        tail_ratio,
        diverges: n >= 8 && tail_ratio > T::lit(DIVERGENCE_RATIO),
    }
}

/// Solves every local problem and accumulates `2𝔤(λ̂)`.
pub fn cumulative_local_utility<T: Real>(
    model: &MarketModel<T>,
    kind: UtilityKind,
) -> Result<(Schedule<T>, CumulativeUtility<T>)> {
    let locations = model.locations();
    let optima: Vec<Result<LocalOptimum<T>>> = locations
        .par_iter()
        .map(|(_, chars)| maximize_local_utility(chars, kind))
        .collect();
    let mut entries = Vec::with_capacity(optima.len());
    for ((location, _), opt) in locations.into_iter().zip(optima) {
        let activity = match location {
            Location::Segment { t_start, t_end, .. } => t_end - t_start,
            Location::Atom { index, .. } => model.atoms[index].activity,
        };
        entries.push(ScheduleEntry {
            location,
            optimum: opt?,
            activity,
        });
    }
    let two = T::lit(2.0);
    let mut cu = CumulativeUtility::empty();
    for e in &entries {
        let inc = two * e.optimum.value;
        match e.location {
            Location::Segment { t_start, t_end, .. } => {
                cu.continuous_part = cu.continuous_part + (t_end - t_start) * inc;
            }
            Location::Atom { time, .. } => cu.atom_increments.push((time, inc)),
        }
        if !inc.is_finite() {
            cu.finite = false;
        }
    }
    if model.is_series() && !cu.atom_increments.is_empty() {
        let terms: Vec<T> = cu.atom_increments.iter().map(|(_, v)| *v).collect();
        let verdict = series_verdict(&terms);
        cu.finite &= !verdict.diverges;
        cu.series = Some(verdict);
    }
    Ok((Schedule { kind, entries }, cu))
}

/// `exp(±continuous)·∏(1 ± increment)`.
pub fn det_stoch_exponential<T: Real>(cu: &CumulativeUtility<T>, sign: T) -> T {
    let atoms = cu
        .atom_increments
        .iter()
        .fold(T::one(), |acc, (_, v)| acc * (T::one() + sign * *v));
    (sign * cu.continuous_part).exp() * atoms
}

/// `K̂` from `K̃`: atom increments `k ↦ k/(1 − k)`, so that `E(−K̃)E(K̂) = 1`.
pub fn yor_dual<T: Real>(cu: &CumulativeUtility<T>) -> CumulativeUtility<T> {
    CumulativeUtility {
        atom_increments: cu
            .atom_increments
            .iter()
            .map(|&(t, k)| (t, k / (T::one() - k)))
            .collect(),
        ..cu.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalValues<T> {
    pub u0: T,
    pub v0: T,
    pub msr2: T,
    pub mhr2: T,
    /// `1 + 2v0`.
    pub scale: T,
    pub finite: bool,
}

impl<T: Real> GlobalValues<T> {
    fn infinite() -> Self {
        GlobalValues {
            u0: T::lit(0.5),
            v0: T::infinity(),
            msr2: T::infinity(),
            mhr2: T::one(),
            scale: T::infinity(),
            finite: false,
        }
    }

    /// `v0` recovered from `u0` through `(1 − 2u0)^{−1} − 1 = 2v0`.
    pub fn v0_from_u0(&self) -> T {
        let two = T::lit(2.0);
        (T::one() / (T::one() - two * self.u0) - T::one()) / two
    }
}

pub fn global_values<T: Real>(cu: &CumulativeUtility<T>) -> GlobalValues<T> {
    let e = det_stoch_exponential(cu, -T::one());
    if !cu.finite || cu.has_nonpositive_factor() || !(e > T::zero()) || !e.is_finite() {
        return GlobalValues::infinite();
    }
    let two = T::lit(2.0);
    let u0 = (T::one() - e) / two;
    let v0 = (T::one() / e - T::one()) / two;
    GlobalValues {
        u0,
        v0,
        msr2: two * v0,
        mhr2: two * u0,
        scale: T::one() + two * v0,
        finite: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioConversion {
    HansenToSharpe,
    SharpeToHansen,
}

/// `1 + SR² = 1/(1 − HR²)` in either direction.
pub fn sharpe_hansen_convert<T: Real>(x: T, direction: RatioConversion) -> Result<T> {
    match direction {
        RatioConversion::HansenToSharpe => {
            if !(x >= T::zero() && x < T::one()) {
                return Err(MmvError::Domain(format!("squared Hansen ratio {x} outside [0, 1)")));
            }
            Ok(x / (T::one() - x))
        }
        RatioConversion::SharpeToHansen => {
            if !(x >= T::zero()) {
                return Err(MmvError::Domain(format!("squared Sharpe ratio {x} is negative")));
            }
            if x.is_infinite() {
                return Ok(T::one());
            }
            Ok(x / (T::one() + x))
        }
    }
}

/// Runtime rule: invest `λ̂·(gap − (W₋ − x))⁺` dollars, with `gap = (1 + 2v0)/γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyDescriptor<T> {
    pub lambda_schedule: Vec<(Location<T>, Vec<T>)>,
    pub kind: UtilityKind,
    pub initial_wealth: T,
    pub risk_aversion: T,
    /// `(1 + 2v0)/γ`, the distance from `x` to the bliss point.
    pub scale: T,
    pub v0: T,
}

impl<T: Real> StrategyDescriptor<T> {
    /// Dollar amounts held at schedule entry `i` given pre-trade wealth `w`.
    pub fn investment(&self, i: usize, w: T) -> Vec<T> {
        let gap = self.scale - (w - self.initial_wealth);
        let gap = match self.kind {
            UtilityKind::Mmv => gap.max(T::zero()),
            UtilityKind::Mv => gap,
        };
        self.lambda_schedule[i].1.iter().map(|l| *l * gap).collect()
    }

    /// `v0/γ`.
    pub fn certainty_equivalent_gain(&self) -> T {
        self.v0 / self.risk_aversion
    }
}

pub fn strategy_descriptor<T: Real>(
    schedule: &Schedule<T>,
    gv: &GlobalValues<T>,
    x: T,
    gamma: T,
) -> Result<StrategyDescriptor<T>> {
    if !(gamma > T::zero()) {
        return Err(MmvError::Domain(format!("risk aversion {gamma} must be positive")));
    }
    if !gv.finite {
        return Err(MmvError::InfiniteValue(
            "optimal strategy undefined when the value is infinite".into(),
        ));
    }
    Ok(StrategyDescriptor {
        lambda_schedule: schedule
            .entries
            .iter()
            .map(|e| (e.location, e.optimum.lambda_hat.clone()))
            .collect(),
        kind: schedule.kind,
        initial_wealth: x,
        risk_aversion: gamma,
        scale: gv.scale / gamma,
        v0: gv.v0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpAtom;

    fn cu(cont: f64, atoms: &[f64]) -> CumulativeUtility<f64> {
        CumulativeUtility {
            continuous_part: cont,
            atom_increments: atoms.iter().enumerate().map(|(i, v)| (i as f64 + 1.0, *v)).collect(),
            finite: true,
            series: None,
        }
    }

    #[test]
    fn stochastic_exponentials() {
        assert_eq!(det_stoch_exponential(&CumulativeUtility::<f64>::empty(), 1.0), 1.0);
        assert!((det_stoch_exponential(&cu(2f64.ln(), &[]), 1.0) - 2.0).abs() < 1e-15);
        assert!((det_stoch_exponential(&cu(0.0, &[0.4]), -1.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn example_one_values() {
        let pts = vec![vec![-0.5, -0.5], vec![0.5, 0.5], vec![1.0, 1.2], vec![1.2, 1.0]];
        let atom = JumpAtom::<f64>::new(1.0, pts, vec![0.2, 0.6, 0.1, 0.1], 2).unwrap();
        let m = MarketModel::new(1.0, 2, vec![], vec![atom]).unwrap();
        let (_, c) = cumulative_local_utility(&m, UtilityKind::Mmv).unwrap();
        assert!((c.atom_increments[0].1 - 0.4).abs() < 1e-14);
        let gv = global_values(&c);
        assert!((gv.u0 - 0.2).abs() < 1e-14);
        assert!((gv.v0 - 1.0 / 3.0).abs() < 1e-14);
        assert!((gv.msr2 - 2.0 / 3.0).abs() < 1e-14);
        assert!((gv.v0_from_u0() - gv.v0).abs() < 1e-14);
    }

    #[test]
    fn conversions() {
        let s: f64 = sharpe_hansen_convert(0.4, RatioConversion::HansenToSharpe).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(sharpe_hansen_convert(0.0, RatioConversion::SharpeToHansen).unwrap(), 0.0);
        assert!(sharpe_hansen_convert(1.0, RatioConversion::HansenToSharpe).is_err());
    }

    #[test]
    fn series_heuristic() {
        let p2: Vec<f64> = (1..=1000).map(|n| 1.0 / (n * n) as f64).collect();
        let h: Vec<f64> = (1..=1000).map(|n| 1.0 / n as f64).collect();
        assert!(!series_verdict(&p2).diverges);
        assert!(series_verdict(&h).diverges);
        assert!(series_verdict(&vec![0.5; 100]).diverges);
        assert!(!series_verdict(&vec![0.0; 100]).diverges);
    }

    #[test]
    fn nonpositive_factor_is_infinite() {
        let gv = global_values(&cu(0.0, &[1.0]));
        assert!(!gv.finite && gv.v0.is_infinite() && gv.u0 == 0.5);
    }

    #[test]
    fn descriptor_scale() {
        let gv = global_values(&cu(0.5, &[]));
        let sched = Schedule::<f64> { kind: UtilityKind::Mmv, entries: vec![] };
        let d1 = strategy_descriptor(&sched, &gv, 0.0, 1.0).unwrap();
        let d2 = strategy_descriptor(&sched, &gv, 0.0, 2.0).unwrap();
        assert_eq!(d1.scale, 1.0 + 2.0 * gv.v0);
        assert_eq!(d2.certainty_equivalent_gain(), d1.certainty_equivalent_gain() / 2.0);
    }
}
