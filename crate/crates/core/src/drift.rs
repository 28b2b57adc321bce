//! Drift rates of g-variations computed from characteristics.

use std::fmt;
use std::sync::Arc;

use crate::error::{MmvError, Result};
use crate::model::{
    JumpMeasure, LocalCharacteristics, TailClass, TransformStep, TruncationSpec,
};
use crate::scalar::{dot, ExtendedReal, Real};

/// How fast `|ξ|` grows along one tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Growth<T> {
    Bounded,
    /// `|ξ(y)| = O(|y|^k)`.
    Poly(T),
    /// `|ξ(y)| = O(e^{r|y|})`.
    Exp(T),
    /// No screening information; quadrature decides.
    Unknown,
}

/// Eventual sign of `ξ` along one tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailSign {
    Positive,
    Negative,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailGrowth<T> {
    pub growth: Growth<T>,
    pub sign: TailSign,
}

impl<T: Real> TailGrowth<T> {
    pub const fn bounded() -> Self {
        TailGrowth {
            growth: Growth::Bounded,
            sign: TailSign::Mixed,
        }
    }

    pub fn poly(k: f64, sign: TailSign) -> Self {
        TailGrowth {
            growth: Growth::Poly(T::lit(k)),
            sign,
        }
    }

    pub const fn unknown() -> Self {
        TailGrowth {
            growth: Growth::Unknown,
            sign: TailSign::Mixed,
        }
    }

    fn scaled(self, s: T) -> Self {
        match self.growth {
            Growth::Exp(r) => TailGrowth {
                growth: Growth::Exp(r * s),
                ..self
            },
            _ => self,
        }
    }

    /// `Some(true)` if integrable against `tail`, `None` when unscreened.
    pub fn integrable_against(self, tail: TailClass<T>) -> Option<bool> {
        match self.growth {
            Growth::Bounded => Some(true),
            Growth::Poly(k) => Some(tail.has_moment(k)),
            Growth::Exp(r) => Some(tail.has_exp_moment(r)),
            Growth::Unknown => None,
        }
    }

    fn combine(self, other: Self, a: T, b: T) -> Self {
        use Growth::*;
        let growth = match (self.growth, other.growth) {
            (Unknown, _) | (_, Unknown) => Unknown,
            (Exp(r), Exp(s)) => Exp(r.max(s)),
            (Exp(r), _) | (_, Exp(r)) => Exp(r),
            (Poly(k), Poly(m)) => Poly(k.max(m)),
            (Poly(k), Bounded) | (Bounded, Poly(k)) => Poly(k),
            (Bounded, Bounded) => Bounded,
        };
        let signed = |t: Self, c: T| match t.sign {
            _ if c == T::zero() => None,
            TailSign::Mixed => Some(TailSign::Mixed),
            s if c > T::zero() => Some(s),
            TailSign::Positive => Some(TailSign::Negative),
            TailSign::Negative => Some(TailSign::Positive),
        };
        let sign = match (signed(self, a), signed(other, b)) {
            (Some(x), Some(y)) if x == y => x,
            (Some(x), None) | (None, Some(x)) => x,
            _ => TailSign::Mixed,
        };
        TailGrowth { growth, sign }
    }
}

/// A scalar function `φ: ℝ → ℝ` with `φ(0) = 0`, used to build `ξ = φ(λ·x)`.
#[derive(Clone)]
pub struct ScalarFn<T> {
    pub f: Arc<dyn Fn(T) -> T + Send + Sync>,
    pub d1: T,
    pub d2: T,
    pub kinks: Vec<T>,
    pub left: TailGrowth<T>,
    pub right: TailGrowth<T>,
}

/// A function `ξ: ℝ^d → ℝ` with `ξ(0) = 0`, twice differentiable at zero.
#[derive(Clone)]
pub struct VariationFunction<T> {
    dim: usize,
    f: Arc<dyn Fn(&[T]) -> T + Send + Sync>,
    pub grad0: Vec<T>,
    /// Row-major `d × d`.
    pub hess0: Vec<T>,
    /// One-dimensional points where `ξ` is not smooth.
    pub kinks: Vec<T>,
    pub left: TailGrowth<T>,
    pub right: TailGrowth<T>,
}

impl<T: Real> fmt::Debug for VariationFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariationFunction")
            .field("dim", &self.dim)
            .field("grad0", &self.grad0)
            .field("hess0", &self.hess0)
            .field("kinks", &self.kinks)
            .finish()
    }
}

impl<T: Real> VariationFunction<T> {
    pub fn new(
        dim: usize,
        f: impl Fn(&[T]) -> T + Send + Sync + 'static,
        grad0: Vec<T>,
        hess0: Vec<T>,
    ) -> Self {
        assert_eq!(grad0.len(), dim);
        assert_eq!(hess0.len(), dim * dim);
        VariationFunction {
            dim,
            f: Arc::new(f),
            grad0,
            hess0,
            kinks: Vec::new(),
            left: TailGrowth::unknown(),
            right: TailGrowth::unknown(),
        }
    }

    /// `ξ(x) = φ(x)` on the line.
    pub fn scalar(
        f: impl Fn(T) -> T + Send + Sync + 'static,
        d1: T,
        d2: T,
    ) -> Self {
        Self::new(1, move |x: &[T]| f(x[0]), vec![d1], vec![d2])
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_| T::zero(), vec![T::zero(); dim], vec![T::zero(); dim * dim])
            .with_growth(TailGrowth::bounded(), TailGrowth::bounded())
    }

    pub fn with_kinks(mut self, kinks: Vec<T>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn with_growth(mut self, left: TailGrowth<T>, right: TailGrowth<T>) -> Self {
        self.left = left;
        self.right = right;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        (self.f)(x)
    }

    /// `ξ(x) = φ(λ·x)`.
    pub fn compose_linear(phi: &ScalarFn<T>, lambda: &[T]) -> Self {
        let d = lambda.len();
        let lam = lambda.to_vec();
        let g = phi.f.clone();
        let grad0 = lam.iter().map(|&l| phi.d1 * l).collect();
        let mut hess0 = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                hess0[i * d + j] = phi.d2 * lam[i] * lam[j];
            }
        }
        let f = move |x: &[T]| g(dot(&lam, x));
        let mut xi = Self::new(d, f, grad0, hess0);
        let l0 = lambda[0];
        if d == 1 {
            if l0 == T::zero() {
                return xi.with_growth(TailGrowth::bounded(), TailGrowth::bounded());
            }
            xi.kinks = phi.kinks.iter().map(|&k| k / l0).collect();
            let s = l0.abs();
            let (left, right) = if l0 > T::zero() {
                (phi.left, phi.right)
            } else {
                (phi.right, phi.left)
            };
            xi.left = left.scaled(s);
            xi.right = right.scaled(s);
        }
        xi
    }

    /// `a·ξ₁ + b·ξ₂`.
    pub fn linear_combination(a: T, x1: &Self, b: T, x2: &Self) -> Self {
        assert_eq!(x1.dim, x2.dim);
        let (f1, f2) = (x1.f.clone(), x2.f.clone());
        let f = move |x: &[T]| a * f1(x) + b * f2(x);
        let grad0 = x1.grad0.iter().zip(&x2.grad0).map(|(&u, &v)| a * u + b * v).collect();
        let hess0 = x1.hess0.iter().zip(&x2.hess0).map(|(&u, &v)| a * u + b * v).collect();
        let mut kinks = x1.kinks.clone();
        kinks.extend(&x2.kinks);
        VariationFunction::new(x1.dim, f, grad0, hess0)
            .with_kinks(kinks)
            .with_growth(x1.left.combine(x2.left, a, b), x1.right.combine(x2.right, a, b))
    }
}

/// Outcome of tail screening for a one-dimensional integral.
enum Screen {
    Finite,
    NegInfinite,
    PosInfinite,
    Undetermined,
    Unknown,
}

fn screen<T: Real>(left: TailGrowth<T>, right: TailGrowth<T>, jumps: &JumpMeasure<T>) -> Screen {
    if jumps.is_atomic() {
        return Screen::Finite;
    }
    let (tl, tr) = jumps.tails();
    let mut failing = Vec::new();
    for (g, t) in [(left, tl), (right, tr)] {
        match g.integrable_against(t) {
            Some(true) => {}
            Some(false) => failing.push(g.sign),
            None => return Screen::Unknown,
        }
    }
    if failing.is_empty() {
        Screen::Finite
    } else if failing.iter().all(|s| *s == TailSign::Negative) {
        Screen::NegInfinite
    } else if failing.iter().all(|s| *s == TailSign::Positive) {
        Screen::PosInfinite
    } else {
        Screen::Undetermined
    }
}

/// `∫ f dF` screened by tail growth; unscreened integrals that fail or exceed
/// the divergence threshold are split into signed parts.
pub(crate) fn screened_integral<T: Real>(
    f: &(dyn Fn(&[T]) -> T + Sync),
    kinks: &[T],
    left: TailGrowth<T>,
    right: TailGrowth<T>,
    chars: &LocalCharacteristics<T>,
) -> Result<ExtendedReal<T>> {
    let cfg = &chars.quad;
    match screen(left, right, &chars.jumps) {
        Screen::Finite => chars.jumps.integrate(f, kinks, cfg).map(ExtendedReal::Finite),
        Screen::NegInfinite => Ok(ExtendedReal::NegInfinity),
        Screen::PosInfinite => Ok(ExtendedReal::PosInfinity),
        Screen::Undetermined => Err(MmvError::NonIntegrable(
            "integrand diverges to both signs".into(),
        )),
        Screen::Unknown => {
            let limit = T::lit(cfg.divergence_threshold);
            let part = |sign: T| {
                let g = |x: &[T]| (sign * f(x)).max(T::zero());
                match chars.jumps.integrate(&g, kinks, cfg) {
                    Ok(v) if v.is_finite() && v <= limit => Some(v),
                    _ => None,
                }
            };
            match (part(T::one()), part(-T::one())) {
                (Some(p), Some(n)) => Ok(ExtendedReal::Finite(p - n)),
                (Some(_), None) => Ok(ExtendedReal::NegInfinity),
                (None, Some(_)) => Ok(ExtendedReal::PosInfinity),
                (None, None) => Err(MmvError::NonIntegrable(
                    "both signed parts diverge".into(),
                )),
            }
        }
    }
}

fn smooth_part<T: Real>(xi: &VariationFunction<T>, chars: &LocalCharacteristics<T>, b: &[T]) -> T {
    let d = chars.dim();
    let mut tr = T::zero();
    for i in 0..d {
        for j in 0..d {
            tr = tr + xi.hess0[i * d + j] * chars.c[j * d + i];
        }
    }
    dot(&xi.grad0, b) + T::lit(0.5) * tr
}

fn check_dims<T: Real>(xi: &VariationFunction<T>, chars: &LocalCharacteristics<T>) -> Result<()> {
    if xi.dim != chars.dim() {
        return Err(MmvError::Invariant(format!(
            "variation function is {}-dimensional, characteristics are {}-dimensional",
            xi.dim,
            chars.dim()
        )));
    }
    Ok(())
}

/// `b^{ξ∘X} = Dξ(0)·b^{X[1]} + ½tr(D²ξ(0)c) + ∫(ξ − Dξ(0)·h) dF`.
///
/// All supported jump measures are finite, so the integral is evaluated as
/// `∫ξ dF − Dξ(0)·∫h dF` with `∫h dF` cached on the characteristics.
pub fn drift_of_variation<T: Real>(
    xi: &VariationFunction<T>,
    chars: &LocalCharacteristics<T>,
) -> Result<ExtendedReal<T>> {
    check_dims(xi, chars)?;
    let base = smooth_part(xi, chars, &chars.net_drift());
    let f = |x: &[T]| xi.eval(x);
    Ok(
        match screened_integral(&f, &xi.kinks, xi.left, xi.right, chars)? {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(base + v),
            other => other,
        },
    )
}

/// Same quantity as [`drift_of_variation`], with the compensated jump integral
/// evaluated separately over `{|x|∞ ≤ split}` and its complement.
pub fn drift_of_variation_split<T: Real>(
    xi: &VariationFunction<T>,
    chars: &LocalCharacteristics<T>,
    split: T,
) -> Result<ExtendedReal<T>> {
    check_dims(xi, chars)?;
    let base = smooth_part(xi, chars, &chars.b_trunc);
    let inside = |x: &[T]| x.iter().all(|v| v.abs() <= split);
    let comp = |x: &[T]| xi.eval(x) - dot(&xi.grad0, &TruncationSpec::apply(x));
    let mut kinks = xi.kinks.clone();
    kinks.extend([-split, split, -T::one(), T::one()]);
    let small = |x: &[T]| if inside(x) { comp(x) } else { T::zero() };
    let large = |x: &[T]| if inside(x) { T::zero() } else { comp(x) };
    let s = chars.jumps.integrate(&small, &kinks, &chars.quad)?;
    Ok(
        match screened_integral(&large, &kinks, xi.left, xi.right, chars)? {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(base + s + v),
            other => other,
        },
    )
}

/// Whether `∫|ξ|1{|ξ|>1} dF < ∞`.
pub fn is_sigma_special<T: Real>(
    xi: &VariationFunction<T>,
    chars: &LocalCharacteristics<T>,
) -> Result<bool> {
    check_dims(xi, chars)?;
    if chars.jumps.is_atomic() {
        return Ok(true);
    }
    let (tl, tr) = chars.jumps.tails();
    for (g, t) in [(xi.left, tl), (xi.right, tr)] {
        if g.integrable_against(t) == Some(false) {
            return Ok(false);
        }
    }
    let big = |x: &[T]| {
        let v = xi.eval(x).abs();
        if v > T::one() {
            v
        } else {
            T::zero()
        }
    };
    let unsigned = TailGrowth {
        sign: TailSign::Positive,
        ..xi.left
    };
    let unsigned_r = TailGrowth {
        sign: TailSign::Positive,
        ..xi.right
    };
    Ok(matches!(
        screened_integral(&big, &xi.kinks, unsigned, unsigned_r, chars),
        Ok(ExtendedReal::Finite(_))
    ))
}

/// A point map used to push a jump measure forward.
#[derive(Clone, Debug, PartialEq)]
pub enum PointMap<T> {
    /// `x ↦ λ·x`.
    Linear(Vec<T>),
    /// Composition of one-dimensional monotone steps.
    Steps(Vec<TransformStep<T>>),
}

/// Image measure of `jumps` under `map`.
pub fn pushforward<T: Real>(map: &PointMap<T>, jumps: &JumpMeasure<T>) -> Result<JumpMeasure<T>> {
    match map {
        PointMap::Linear(l) => {
            if l.len() != jumps.dim() {
                return Err(MmvError::Invariant("map and measure dimensions differ".into()));
            }
            jumps.project(l)
        }
        PointMap::Steps(s) if s.is_empty() => Ok(jumps.clone()),
        PointMap::Steps(s) => jumps.map_1d(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exp_transform;
    use crate::quadrature::QuadConfig;

    fn example2_x() -> LocalCharacteristics<f64> {
        let g = JumpMeasure::Gaussian1D {
            mean: 0.0,
            variance: 0.01,
            rate: 1.0,
        };
        LocalCharacteristics::from_zero_drift(vec![0.2], vec![0.04], g, QuadConfig::default()).unwrap()
    }

    fn square_of_exp() -> VariationFunction<f64> {
        VariationFunction::scalar(|x: f64| x.exp_m1().powi(2), 0.0, 2.0)
            .with_growth(TailGrowth::bounded(), TailGrowth {
                growth: Growth::Exp(2.0),
                sign: TailSign::Positive,
            })
    }

    #[test]
    fn example_two_denominator() {
        let (s2, g2) = (0.04f64, 0.01f64);
        let oracle = s2 + (2.0 * g2).exp() - 2.0 * (g2 / 2.0).exp() + 1.0;
        let v = drift_of_variation(&square_of_exp(), &example2_x()).unwrap();
        assert!((v.finite().unwrap() - oracle).abs() < 1e-13, "{v:?} vs {oracle}");
    }

    #[test]
    fn zero_function_has_zero_drift() {
        let v = drift_of_variation(&VariationFunction::zero(1), &example2_x()).unwrap();
        assert_eq!(v, ExtendedReal::Finite(0.0));
    }

    #[test]
    fn pushforward_of_atoms_under_doubling() {
        let a = JumpMeasure::atoms_1d(&[-0.5, 0.5, 1.0, 1.2], &[0.2, 0.6, 0.1, 0.1]).unwrap();
        let p = pushforward(&PointMap::Steps(vec![TransformStep::Scale(2.0)]), &a).unwrap();
        let expect = JumpMeasure::atoms_1d(&[-1.0, 1.0, 2.0, 2.4], &[0.2, 0.6, 0.1, 0.1]).unwrap();
        assert_eq!(p, expect);
        assert_eq!(pushforward(&PointMap::Steps(vec![]), &a).unwrap(), a);
    }

    #[test]
    fn pushforward_mass_above_threshold() {
        let g = JumpMeasure::Gaussian1D {
            mean: 0.0,
            variance: 0.01,
            rate: 1.0,
        };
        let r = pushforward(&PointMap::Steps(vec![TransformStep::ExpMinusOne]), &g).unwrap();
        let lam = 4.514283161034977;
        let k = 1.0 / lam;
        let theta: f64 = r
            .integrate_1d(&|y| if y >= k { 1.0 } else { 0.0 }, &[k], &QuadConfig::default())
            .unwrap();
        assert!((theta - 0.02269874996109554).abs() < 1e-12, "{theta}");
    }

    #[test]
    fn sigma_special_screening() {
        let exp3 = JumpMeasure::ExpTails1D {
            c_minus: 1.0,
            a: 4.0,
            c_plus: 1.0,
            b: 1.0,
        };
        let x = LocalCharacteristics::from_zero_drift(vec![0.0], vec![0.0], exp3, QuadConfig::default())
            .unwrap();
        let r = exp_transform(&x).unwrap();
        let sq = VariationFunction::scalar(|y: f64| y * y, 0.0, 2.0)
            .with_growth(TailGrowth::poly(2.0, TailSign::Positive), TailGrowth::poly(2.0, TailSign::Positive));
        assert!(!is_sigma_special(&sq, &r).unwrap());
        let bounded = VariationFunction::scalar(|y: f64| y.tanh(), 1.0, 0.0)
            .with_growth(TailGrowth::bounded(), TailGrowth::bounded());
        assert!(is_sigma_special(&bounded, &r).unwrap());
        assert!(is_sigma_special(&sq, &example2_x()).unwrap());
        // E[R] = ∞ in this model.
        let id = VariationFunction::scalar(|y: f64| y, 1.0, 0.0)
            .with_growth(TailGrowth::poly(1.0, TailSign::Negative), TailGrowth::poly(1.0, TailSign::Positive));
        assert_eq!(drift_of_variation(&id, &r).unwrap(), ExtendedReal::PosInfinity);
    }

    #[test]
    fn unscreened_divergence_is_detected_by_quadrature() {
        let exp3 = JumpMeasure::ExpTails1D {
            c_minus: 1.0,
            a: 4.0,
            c_plus: 1.0,
            b: 1.0,
        };
        let x = LocalCharacteristics::new(vec![0.0], vec![0.0], exp3).unwrap();
        let r = exp_transform(&x).unwrap();
        let neg = VariationFunction::scalar(|y: f64| -y * y, 0.0, -2.0);
        assert_eq!(drift_of_variation(&neg, &r).unwrap(), ExtendedReal::NegInfinity);
    }

    #[test]
    fn split_matches_cached_compensator() {
        let r = exp_transform(&example2_x()).unwrap();
        let xi = VariationFunction::scalar(|y: f64| (2.0 * y).sin(), 2.0, 0.0)
            .with_growth(TailGrowth::bounded(), TailGrowth::bounded());
        let a = drift_of_variation(&xi, &r).unwrap().finite().unwrap();
        for s in [0.05, 0.5, 1.0, 3.0] {
            let b = drift_of_variation_split(&xi, &r, s).unwrap().finite().unwrap();
            assert!((a - b).abs() < 1e-12, "split {s}: {a} vs {b}");
        }
    }
}
