//! Market models described by deterministic differential characteristics.

use crate::drift::{drift_of_variation, VariationFunction};
use crate::error::{MmvError, Result};
use crate::quadrature::{
    gauss_kronrod, gauss_kronrod_tail, gaussian_expectation, laguerre_integral, QuadConfig,
};
use crate::scalar::{dot, Real};

/// Largest portfolio dimension the optimizer accepts.
pub const MAX_DIMENSION: usize = 4;

/// The truncation `h(x) = (x_i 1{|x_i| ≤ 1})_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TruncationSpec;

impl TruncationSpec {
    #[inline]
    pub fn h<T: Real>(x: T) -> T {
        if x.abs() <= T::one() {
            x
        } else {
            T::zero()
        }
    }

    pub fn apply<T: Real>(x: &[T]) -> Vec<T> {
        x.iter().map(|&v| Self::h(v)).collect()
    }
}

/// One monotone step of a one-dimensional point map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransformStep<T> {
    Scale(T),
    ExpMinusOne,
}

impl<T: Real> TransformStep<T> {
    #[inline]
    pub fn apply(self, x: T) -> T {
        match self {
            TransformStep::Scale(s) => s * x,
            TransformStep::ExpMinusOne => x.exp_m1(),
        }
    }

    pub fn preimage(self, y: T) -> Option<T> {
        match self {
            TransformStep::Scale(s) if s != T::zero() => Some(y / s),
            TransformStep::Scale(_) => None,
            TransformStep::ExpMinusOne if y > -T::one() => Some(y.ln_1p()),
            TransformStep::ExpMinusOne => None,
        }
    }
}

pub fn apply_steps<T: Real>(steps: &[TransformStep<T>], x: T) -> T {
    steps.iter().fold(x, |acc, s| s.apply(acc))
}

fn preimage_steps<T: Real>(steps: &[TransformStep<T>], y: T) -> Option<T> {
    steps.iter().rev().try_fold(y, |acc, s| s.preimage(acc))
}

/// Decay class of one tail of a one-dimensional jump measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailClass<T> {
    Empty,
    Bounded,
    /// Density decaying like `e^{−y²/(2v)}`.
    Gaussian,
    /// Density decaying like `e^{−rate·|y|}`.
    Exponential(T),
    /// All polynomial moments, no exponential ones.
    LogNormal,
    /// Density decaying like `|y|^{−1−α}`.
    Power(T),
    NoMoments,
}

impl<T: Real> TailClass<T> {
    fn scaled(self, s: T) -> Self {
        match self {
            TailClass::Exponential(r) => TailClass::Exponential(r / s),
            other => other,
        }
    }

    fn exp_image(self) -> Self {
        match self {
            TailClass::Empty => TailClass::Empty,
            TailClass::Bounded => TailClass::Bounded,
            TailClass::Gaussian => TailClass::LogNormal,
            TailClass::Exponential(r) => TailClass::Power(r),
            _ => TailClass::NoMoments,
        }
    }

    /// Whether `∫|y|^k` over this tail is finite.
    pub fn has_moment(self, k: T) -> bool {
        match self {
            TailClass::Empty | TailClass::Bounded | TailClass::Gaussian => true,
            TailClass::Exponential(_) | TailClass::LogNormal => true,
            TailClass::Power(alpha) => k < alpha,
            TailClass::NoMoments => k <= T::zero(),
        }
    }

    /// Whether `∫e^{r|y|}` over this tail is finite.
    pub fn has_exp_moment(self, r: T) -> bool {
        match self {
            TailClass::Empty | TailClass::Bounded | TailClass::Gaussian => true,
            TailClass::Exponential(rate) => r < rate,
            _ => r <= T::zero(),
        }
    }
}

/// Jump intensity measure `F`, per unit of activity.
#[derive(Clone, Debug, PartialEq)]
pub enum JumpMeasure<T> {
    FiniteAtoms {
        dim: usize,
        points: Vec<Vec<T>>,
        masses: Vec<T>,
    },
    Gaussian1D {
        mean: T,
        variance: T,
        rate: T,
    },
    /// Density `c₋e^{a x}1{x<0} + c₊e^{−b x}1{x>0}`.
    ExpTails1D {
        c_minus: T,
        a: T,
        c_plus: T,
        b: T,
    },
    /// Piecewise-linear density on a grid, zero outside; integrated by trapezoids.
    Tabulated1D {
        x: Vec<T>,
        density: Vec<T>,
    },
    /// Image of a one-dimensional density family under `apply_steps`.
    Mapped {
        base: Box<JumpMeasure<T>>,
        steps: Vec<TransformStep<T>>,
    },
}

impl<T: Real> JumpMeasure<T> {
    pub fn none(dim: usize) -> Self {
        JumpMeasure::FiniteAtoms {
            dim,
            points: Vec::new(),
            masses: Vec::new(),
        }
    }

    pub fn atoms(points: Vec<Vec<T>>, masses: Vec<T>) -> Result<Self> {
        let dim = points.first().map_or(1, Vec::len);
        let m = JumpMeasure::FiniteAtoms {
            dim,
            points,
            masses,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn atoms_1d(points: &[T], masses: &[T]) -> Result<Self> {
        Self::atoms(points.iter().map(|&p| vec![p]).collect(), masses.to_vec())
    }

    pub fn dim(&self) -> usize {
        match self {
            JumpMeasure::FiniteAtoms { dim, .. } => *dim,
            _ => 1,
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, JumpMeasure::FiniteAtoms { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MmvError::Invariant(msg));
        match self {
            JumpMeasure::FiniteAtoms {
                dim,
                points,
                masses,
            } => {
                if points.len() != masses.len() {
                    return bad(format!(
                        "{} atom points but {} masses",
                        points.len(),
                        masses.len()
                    ));
                }
                if let Some(p) = points.iter().find(|p| p.len() != *dim) {
                    return bad(format!("atom point {p:?} is not {dim}-dimensional"));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("atom point is not finite".into());
                }
                if let Some(m) = masses.iter().find(|m| !(**m >= T::zero() && m.is_finite())) {
                    return bad(format!("atom mass {m} is negative or not finite"));
                }
            }
            JumpMeasure::Gaussian1D {
                mean,
                variance,
                rate,
            } => {
                if !mean.is_finite() || !(*variance >= T::zero()) || !variance.is_finite() {
                    return bad("Gaussian jump law needs finite mean and variance ≥ 0".into());
                }
                if !(*rate >= T::zero()) || !rate.is_finite() {
                    return bad(format!("Gaussian jump rate {rate} must be ≥ 0"));
                }
            }
            JumpMeasure::ExpTails1D {
                c_minus,
                a,
                c_plus,
                b,
            } => {
                if !(*a > T::zero()) || !(*b > T::zero()) {
                    return bad(format!("exponential tail rates must be > 0, got a={a}, b={b}"));
                }
                if !(*c_minus >= T::zero()) || !(*c_plus >= T::zero()) {
                    return bad("exponential tail weights must be ≥ 0".into());
                }
            }
            JumpMeasure::Tabulated1D { x, density } => {
                if x.len() != density.len() || x.len() < 2 {
                    return bad("tabulated density needs ≥ 2 matching grid points".into());
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("tabulated grid must be strictly increasing".into());
                }
                if density.iter().any(|d| !(*d >= T::zero()) || !d.is_finite()) {
                    return bad("tabulated density must be finite and ≥ 0".into());
                }
            }
            JumpMeasure::Mapped { base, steps } => {
                if base.is_atomic() || matches!(**base, JumpMeasure::Mapped { .. }) {
                    return bad("mapped measures wrap a density family".into());
                }
                if steps
                    .iter()
                    .any(|s| matches!(s, TransformStep::Scale(v) if !v.is_finite()))
                {
                    return bad("scale factor must be finite".into());
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Total mass `F(ℝ^d)`.
    pub fn total_mass(&self) -> T {
        match self {
            JumpMeasure::FiniteAtoms { masses, .. } => masses.iter().copied().sum(),
            JumpMeasure::Gaussian1D { rate, .. } => *rate,
            JumpMeasure::ExpTails1D {
                c_minus,
                a,
                c_plus,
                b,
            } => *c_minus / *a + *c_plus / *b,
            JumpMeasure::Tabulated1D { x, density } => crate::quadrature::trapezoid(x, density),
            JumpMeasure::Mapped { base, .. } => base.total_mass(),
        }
    }

    /// Tail classes `(left, right)` of a one-dimensional measure.
    pub fn tails(&self) -> (TailClass<T>, TailClass<T>) {
        match self {
            JumpMeasure::FiniteAtoms { .. } | JumpMeasure::Tabulated1D { .. } => {
                (TailClass::Bounded, TailClass::Bounded)
            }
            JumpMeasure::Gaussian1D { variance, .. } => {
                if *variance > T::zero() {
                    (TailClass::Gaussian, TailClass::Gaussian)
                } else {
                    (TailClass::Bounded, TailClass::Bounded)
                }
            }
            JumpMeasure::ExpTails1D {
                c_minus,
                a,
                c_plus,
                b,
            } => (
                if *c_minus > T::zero() {
                    TailClass::Exponential(*a)
                } else {
                    TailClass::Empty
                },
                if *c_plus > T::zero() {
                    TailClass::Exponential(*b)
                } else {
                    TailClass::Empty
                },
            ),
            JumpMeasure::Mapped { base, steps } => {
                steps.iter().fold(base.tails(), |(neg, pos), step| match *step {
                    TransformStep::Scale(s) if s > T::zero() => (neg.scaled(s), pos.scaled(s)),
                    TransformStep::Scale(s) if s < T::zero() => {
                        (pos.scaled(-s), neg.scaled(-s))
                    }
                    TransformStep::Scale(_) => (TailClass::Bounded, TailClass::Bounded),
                    TransformStep::ExpMinusOne => {
                        let left = if neg == TailClass::Empty {
                            TailClass::Empty
                        } else {
                            TailClass::Bounded
                        };
                        (left, pos.exp_image())
                    }
                })
            }
        }
    }

    /// Image under a chain of one-dimensional steps; atoms are mapped pointwise.
    pub fn map_1d(&self, extra: &[TransformStep<T>]) -> Result<Self> {
        if self.dim() != 1 {
            return Err(MmvError::UnsupportedMeasure(
                "point maps apply to one-dimensional measures".into(),
            ));
        }
        Ok(match self {
            JumpMeasure::FiniteAtoms { points, masses, .. } => JumpMeasure::FiniteAtoms {
                dim: 1,
                points: points
                    .iter()
                    .map(|p| vec![apply_steps(extra, p[0])])
                    .collect(),
                masses: masses.clone(),
            },
            JumpMeasure::Mapped { base, steps } => JumpMeasure::Mapped {
                base: base.clone(),
                steps: steps.iter().chain(extra).copied().collect(),
            },
            base => JumpMeasure::Mapped {
                base: Box::new(base.clone()),
                steps: extra.to_vec(),
            },
        })
    }

    /// Image under `x ↦ λ·x`.
    pub fn project(&self, lambda: &[T]) -> Result<Self> {
        match self {
            JumpMeasure::FiniteAtoms { points, masses, .. } => Ok(JumpMeasure::FiniteAtoms {
                dim: 1,
                points: points.iter().map(|p| vec![dot(lambda, p)]).collect(),
                masses: masses.clone(),
            }),
            _ => self.map_1d(&[TransformStep::Scale(lambda[0])]),
        }
    }

    /// `∫ f dF` for a measure on ℝ^d, with `kinks` the one-dimensional points
    /// where `f` is not smooth.
    pub fn integrate(&self, f: &dyn Fn(&[T]) -> T, kinks: &[T], cfg: &QuadConfig) -> Result<T> {
        match self {
            JumpMeasure::FiniteAtoms { points, masses, .. } => Ok(points
                .iter()
                .zip(masses)
                .filter(|(_, &m)| m != T::zero())
                .map(|(p, &m)| m * f(p))
                .sum()),
            _ => self.integrate_1d(&|y| f(&[y]), kinks, cfg),
        }
    }

    /// `∫ f dF` on the line.
    pub fn integrate_1d(&self, f: &dyn Fn(T) -> T, kinks: &[T], cfg: &QuadConfig) -> Result<T> {
        match self {
            JumpMeasure::Mapped { base, steps } => {
                let pulled: Vec<T> = kinks
                    .iter()
                    .filter_map(|&k| preimage_steps(steps, k))
                    .collect();
                base.integrate_base(&|x| f(apply_steps(steps, x)), &pulled, cfg)
            }
            JumpMeasure::FiniteAtoms { dim, .. } if *dim != 1 => Err(MmvError::UnsupportedMeasure(
                "one-dimensional integral of a multivariate measure".into(),
            )),
            _ => self.integrate_base(f, kinks, cfg),
        }
    }

    fn integrate_base(&self, f: &dyn Fn(T) -> T, kinks: &[T], cfg: &QuadConfig) -> Result<T> {
        let mut ks: Vec<T> = kinks.iter().copied().filter(|k| k.is_finite()).collect();
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ks.dedup();
        match self {
            JumpMeasure::FiniteAtoms { points, masses, .. } => Ok(points
                .iter()
                .zip(masses)
                .filter(|(_, &m)| m != T::zero())
                .map(|(p, &m)| m * f(p[0]))
                .sum()),
            JumpMeasure::Gaussian1D {
                mean,
                variance,
                rate,
            } => integrate_gaussian(f, *mean, *variance, *rate, &ks, cfg),
            JumpMeasure::ExpTails1D {
                c_minus,
                a,
                c_plus,
                b,
            } => integrate_exp_tails(f, *c_minus, *a, *c_plus, *b, &ks, cfg),
            JumpMeasure::Tabulated1D { x, density } => Ok(integrate_tabulated(f, x, density, &ks)),
            JumpMeasure::Mapped { .. } => unreachable!("mapped measures are flattened"),
        }
    }

    /// `∫ (|x|² ∧ 1) F(dx)`.
    pub fn square_truncated_moment(&self, cfg: &QuadConfig) -> Result<T> {
        let f = |x: &[T]| {
            let s: T = x.iter().map(|v| *v * *v).sum();
            s.min(T::one())
        };
        self.integrate(&f, &[-T::one(), T::one()], cfg)
    }

    /// `∫ h dF`, the small-jump compensator.
    pub fn truncated_mean(&self, cfg: &QuadConfig) -> Result<Vec<T>> {
        (0..self.dim())
            .map(|i| {
                self.integrate(
                    &|x: &[T]| TruncationSpec::h(x[i]),
                    &[-T::one(), T::one()],
                    cfg,
                )
            })
            .collect()
    }
}

fn sort_dedup<T: Real>(v: &mut Vec<T>) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
}

fn integrate_pieces<T: Real>(
    g: &dyn Fn(T) -> T,
    breaks: &[T],
    cfg: &QuadConfig,
) -> Result<T> {
    let mut total = T::zero();
    for w in breaks.windows(2) {
        total = total + gauss_kronrod(g, w[0], w[1], cfg)?;
    }
    Ok(total)
}

fn integrate_gaussian<T: Real>(
    f: &dyn Fn(T) -> T,
    mean: T,
    var: T,
    rate: T,
    kinks: &[T],
    cfg: &QuadConfig,
) -> Result<T> {
    if rate == T::zero() {
        return Ok(T::zero());
    }
    if var == T::zero() {
        return Ok(rate * f(mean));
    }
    let sd = var.sqrt();
    let far = T::lit(40.0) * sd;
    if kinks.iter().all(|k| (*k - mean).abs() > far) {
        if let Some(v) = gaussian_expectation(f, mean, var, cfg) {
            return Ok(rate * v);
        }
    }
    let norm = rate / (T::lit(2.0) * T::PI() * var).sqrt();
    let two_var = T::lit(2.0) * var;
    let g = |x: T| {
        let d = norm * (-(x - mean) * (x - mean) / two_var).exp();
        if d == T::zero() {
            T::zero()
        } else {
            f(x) * d
        }
    };
    let mut breaks: Vec<T> = kinks.to_vec();
    for j in [-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0] {
        breaks.push(mean + T::lit(j) * sd);
    }
    sort_dedup(&mut breaks);
    let lo = breaks[0];
    let hi = *breaks.last().unwrap();
    Ok(gauss_kronrod_tail(g, lo, false, sd, cfg)?
        + integrate_pieces(&g, &breaks, cfg)?
        + gauss_kronrod_tail(g, hi, true, sd, cfg)?)
}

fn integrate_exp_tails<T: Real>(
    f: &dyn Fn(T) -> T,
    c_minus: T,
    a: T,
    c_plus: T,
    b: T,
    kinks: &[T],
    cfg: &QuadConfig,
) -> Result<T> {
    let zero = T::zero();
    let mut total = zero;
    if c_minus > zero {
        let mut breaks: Vec<T> = kinks.iter().copied().filter(|k| *k < zero).collect();
        breaks.push(zero);
        sort_dedup(&mut breaks);
        let dens = |x: T| {
            let d = c_minus * (a * x).exp();
            if d == zero {
                zero
            } else {
                f(x) * d
            }
        };
        let k = breaks[0];
        let outer = match laguerre_integral(|t| f(k - t), a, cfg) {
            Some(v) => c_minus * (a * k).exp() * v,
            None => gauss_kronrod_tail(dens, k, false, T::one() / a, cfg)?,
        };
        total = total + outer + integrate_pieces(&dens, &breaks, cfg)?;
    }
    if c_plus > zero {
        let mut breaks: Vec<T> = kinks.iter().copied().filter(|k| *k > zero).collect();
        breaks.push(zero);
        sort_dedup(&mut breaks);
        let dens = |x: T| {
            let d = c_plus * (-b * x).exp();
            if d == zero {
                zero
            } else {
                f(x) * d
            }
        };
        let k = *breaks.last().unwrap();
        let outer = match laguerre_integral(|t| f(k + t), b, cfg) {
            Some(v) => c_plus * (-b * k).exp() * v,
            None => gauss_kronrod_tail(dens, k, true, T::one() / b, cfg)?,
        };
        total = total + outer + integrate_pieces(&dens, &breaks, cfg)?;
    }
    Ok(total)
}

fn integrate_tabulated<T: Real>(f: &dyn Fn(T) -> T, xs: &[T], ds: &[T], kinks: &[T]) -> T {
    let half = T::lit(0.5);
    // Evaluate just inside each sub-cell so that jumps of f at kinks are
    // attributed to the correct side.
    let nudge = T::lit(1e-12);
    let mut total = T::zero();
    let mut ki = 0;
    for i in 0..xs.len() - 1 {
        let (x0, x1, d0, d1) = (xs[i], xs[i + 1], ds[i], ds[i + 1]);
        let interp = |x: T| d0 + (d1 - d0) * (x - x0) / (x1 - x0);
        let mut cuts = vec![x0];
        while ki < kinks.len() && kinks[ki] <= x0 {
            ki += 1;
        }
        let mut kj = ki;
        while kj < kinks.len() && kinks[kj] < x1 {
            cuts.push(kinks[kj]);
            kj += 1;
        }
        cuts.push(x1);
        for w in cuts.windows(2) {
            let (u, v) = (w[0], w[1]);
            let eps = (v - u) * nudge;
            total = total + half * (v - u) * (f(u + eps) * interp(u) + f(v - eps) * interp(v));
        }
    }
    total
}

/// Differential characteristics `(b^{R[1]}, c^R, F^R)` per unit of activity.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalCharacteristics<T> {
    pub b_trunc: Vec<T>,
    /// Row-major `d × d` symmetric PSD matrix.
    pub c: Vec<T>,
    pub jumps: JumpMeasure<T>,
    pub quad: QuadConfig,
    small_jumps: Vec<T>,
}

impl<T: Real> LocalCharacteristics<T> {
    pub fn new(b_trunc: Vec<T>, c: Vec<T>, jumps: JumpMeasure<T>) -> Result<Self> {
        Self::with_quad(b_trunc, c, jumps, QuadConfig::default())
    }

    pub fn with_quad(
        b_trunc: Vec<T>,
        c: Vec<T>,
        jumps: JumpMeasure<T>,
        quad: QuadConfig,
    ) -> Result<Self> {
        let d = b_trunc.len();
        if d == 0 {
            return Err(MmvError::Invariant("dimension must be ≥ 1".into()));
        }
        if c.len() != d * d {
            return Err(MmvError::Invariant(format!("c must be {d}×{d}")));
        }
        if jumps.dim() != d {
            return Err(MmvError::Invariant(format!(
                "jump measure is {}-dimensional, drift is {d}-dimensional",
                jumps.dim()
            )));
        }
        if b_trunc.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(MmvError::Invariant("drift and c must be finite".into()));
        }
        check_psd(&c, d)?;
        jumps.validate()?;
        let small_jumps = jumps.truncated_mean(&quad)?;
        Ok(LocalCharacteristics {
            b_trunc,
            c,
            jumps,
            quad,
            small_jumps,
        })
    }

    /// Builds characteristics from the drift `b^{[0]}` net of all jumps,
    /// using `b^{[1]} = b^{[0]} + ∫h dF`.
    pub fn from_zero_drift(b0: Vec<T>, c: Vec<T>, jumps: JumpMeasure<T>, quad: QuadConfig) -> Result<Self> {
        let d = b0.len();
        let probe = Self::with_quad(vec![T::zero(); d], c, jumps, quad)?;
        let b_trunc = b0.iter().zip(&probe.small_jumps).map(|(&b, &h)| b + h).collect();
        Ok(LocalCharacteristics { b_trunc, ..probe })
    }

    pub fn zero(d: usize) -> Self {
        Self::new(vec![T::zero(); d], vec![T::zero(); d * d], JumpMeasure::none(d))
            .expect("zero characteristics are valid")
    }

    pub fn dim(&self) -> usize {
        self.b_trunc.len()
    }

    /// `∫ h dF`.
    pub fn small_jumps(&self) -> &[T] {
        &self.small_jumps
    }

    /// `b^{[1]} − ∫h dF`: the drift with every jump removed.
    pub fn net_drift(&self) -> Vec<T> {
        self.b_trunc
            .iter()
            .zip(&self.small_jumps)
            .map(|(&b, &h)| b - h)
            .collect()
    }

    pub fn with_quad_config(&self, quad: QuadConfig) -> Result<Self> {
        Self::with_quad(self.b_trunc.clone(), self.c.clone(), self.jumps.clone(), quad)
    }

    /// Characteristics of the law of a single jump `ΔR` with `P[ΔR = x_j] = m_j`.
    pub fn one_period(jumps: JumpMeasure<T>) -> Result<Self> {
        let d = jumps.dim();
        let probe = Self::new(vec![T::zero(); d], vec![T::zero(); d * d], jumps)?;
        Ok(LocalCharacteristics {
            b_trunc: probe.small_jumps.clone(),
            ..probe
        })
    }
}

fn check_psd<T: Real>(c: &[T], d: usize) -> Result<()> {
    let scale = c.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::lit(1e-12).max(T::lit(64.0) * T::epsilon()) * (T::one() + scale);
    for i in 0..d {
        for j in 0..i {
            if (c[i * d + j] - c[j * d + i]).abs() > tol {
                return Err(MmvError::Invariant("c is not symmetric".into()));
            }
        }
    }
    // LDLᵀ with pivots allowed to vanish.
    let mut l = vec![T::zero(); d * d];
    let mut diag = vec![T::zero(); d];
    for j in 0..d {
        let mut s = c[j * d + j];
        for k in 0..j {
            s = s - l[j * d + k] * l[j * d + k] * diag[k];
        }
        if s < -tol {
            return Err(MmvError::Invariant("c is not positive semidefinite".into()));
        }
        diag[j] = s.max(T::zero());
        for i in j + 1..d {
            let mut t = c[i * d + j];
            for k in 0..j {
                t = t - l[i * d + k] * l[j * d + k] * diag[k];
            }
            if diag[j] > tol {
                l[i * d + j] = t / diag[j];
            } else if t.abs() > tol.sqrt() {
                return Err(MmvError::Invariant("c is not positive semidefinite".into()));
            }
        }
    }
    Ok(())
}

/// Characteristics of `R = (e^x − 1) ∘ X` from those of `X`.
pub fn exp_transform<T: Real>(x: &LocalCharacteristics<T>) -> Result<LocalCharacteristics<T>> {
    let d = x.dim();
    let jumps = match &x.jumps {
        JumpMeasure::FiniteAtoms { points, masses, .. } => JumpMeasure::FiniteAtoms {
            dim: d,
            points: points
                .iter()
                .map(|p| p.iter().map(|v| v.exp_m1()).collect())
                .collect(),
            masses: masses.clone(),
        },
        other if d == 1 => other.map_1d(&[TransformStep::ExpMinusOne])?,
        _ => {
            return Err(MmvError::UnsupportedMeasure(
                "exponential transform of a multivariate density".into(),
            ))
        }
    };
    let ln2 = T::LN_2();
    let mut b = Vec::with_capacity(d);
    for i in 0..d {
        let mut grad = vec![T::zero(); d];
        grad[i] = T::one();
        let mut hess = vec![T::zero(); d * d];
        hess[i * d + i] = T::one();
        let xi = VariationFunction::new(
            d,
            move |v: &[T]| TruncationSpec::h(v[i].exp_m1()),
            grad,
            hess,
        )
        .with_kinks(vec![ln2]);
        let bi = drift_of_variation(&xi, x)?
            .finite()
            .ok_or_else(|| MmvError::NonIntegrable("truncated exponential drift".into()))?;
        b.push(bi);
    }
    LocalCharacteristics::with_quad(b, x.c.clone(), jumps, x.quad)
}

/// A characteristic segment `[t_start, t_end)` with `dA = dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<T> {
    pub t_start: T,
    pub t_end: T,
    pub chars: LocalCharacteristics<T>,
}

impl<T: Real> Segment<T> {
    pub fn length(&self) -> T {
        self.t_end - self.t_start
    }
}

/// A fixed-time jump of `R` with `ΔA = 1`. `activity` keeps the original
/// `ΔA_τ` of series examples for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpAtom<T> {
    pub time: T,
    pub chars: LocalCharacteristics<T>,
    pub activity: T,
}

impl<T: Real> JumpAtom<T> {
    pub fn new(time: T, points: Vec<Vec<T>>, masses: Vec<T>, dim: usize) -> Result<Self> {
        let law = JumpMeasure::FiniteAtoms {
            dim,
            points,
            masses,
        };
        law.validate()?;
        if law.total_mass() > T::one() + T::lit(1e-12) {
            return Err(MmvError::Invariant(format!(
                "atom law at τ={time} has mass {} > 1",
                law.total_mass()
            )));
        }
        Ok(JumpAtom {
            time,
            chars: LocalCharacteristics::one_period(law)?,
            activity: T::one(),
        })
    }

    pub fn law(&self) -> (&[Vec<T>], &[T]) {
        match &self.chars.jumps {
            JumpMeasure::FiniteAtoms { points, masses, .. } => (points, masses),
            _ => unreachable!("atom laws are finite"),
        }
    }
}

/// Where in the model a local quantity lives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Location<T> {
    Segment { index: usize, t_start: T, t_end: T },
    Atom { index: usize, time: T },
}

impl<T: Real> Location<T> {
    pub fn label(&self) -> String {
        match self {
            Location::Segment { t_start, t_end, .. } => format!("segment [{t_start}, {t_end})"),
            Location::Atom { time, .. } => format!("atom at {time}"),
        }
    }
}

/// Marks the atom list as the first `terms` terms of an infinite series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeriesInfo {
    pub terms: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketModel<T> {
    pub horizon: T,
    pub dimension: usize,
    pub segments: Vec<Segment<T>>,
    pub atoms: Vec<JumpAtom<T>>,
    pub series: Option<SeriesInfo>,
}

impl<T: Real> MarketModel<T> {
    pub fn new(
        horizon: T,
        dimension: usize,
        segments: Vec<Segment<T>>,
        atoms: Vec<JumpAtom<T>>,
    ) -> Result<Self> {
        let m = MarketModel {
            horizon,
            dimension,
            segments,
            atoms,
            series: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MmvError::Invariant(msg));
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        if self.dimension == 0 || self.dimension > MAX_DIMENSION {
            return bad(format!(
                "dimension {} outside 1..={MAX_DIMENSION}",
                self.dimension
            ));
        }
        if !self.segments.is_empty() {
            let mut t = T::zero();
            for s in &self.segments {
                if s.t_start != t || !(s.t_end > s.t_start) {
                    return bad(format!(
                        "segments must partition [0, T): gap or overlap at t={}",
                        s.t_start
                    ));
                }
                t = s.t_end;
            }
            if t != self.horizon {
                return bad(format!("segments end at {t}, horizon is {}", self.horizon));
            }
        }
        let mut last = T::zero();
        for a in &self.atoms {
            if !(a.time > last) || a.time > self.horizon {
                return bad(format!(
                    "atom times must increase strictly within (0, T]; got {}",
                    a.time
                ));
            }
            last = a.time;
        }
        for ch in self
            .segments
            .iter()
            .map(|s| &s.chars)
            .chain(self.atoms.iter().map(|a| &a.chars))
        {
            if ch.dim() != self.dimension {
                return bad("characteristics dimension differs from model dimension".into());
            }
        }
        Ok(())
    }

    pub fn is_series(&self) -> bool {
        self.series.is_some()
    }

    /// Every segment then every atom, with its characteristics.
    pub fn locations(&self) -> Vec<(Location<T>, &LocalCharacteristics<T>)> {
        let segs = self.segments.iter().enumerate().map(|(index, s)| {
            (
                Location::Segment {
                    index,
                    t_start: s.t_start,
                    t_end: s.t_end,
                },
                &s.chars,
            )
        });
        let atoms = self.atoms.iter().enumerate().map(|(index, a)| {
            (
                Location::Atom {
                    index,
                    time: a.time,
                },
                &a.chars,
            )
        });
        segs.chain(atoms).collect()
    }
}
