//! Local expected utilities, instantaneous no-arbitrage and asymptotic slopes.

use std::sync::Arc;

use num_traits::Num;

use crate::drift::{
    drift_of_variation, screened_integral, ScalarFn, TailGrowth, TailSign, VariationFunction,
};
use crate::error::{MmvError, Result};
use crate::linalg::determinant;
use crate::model::{JumpMeasure, LocalCharacteristics, Location, MarketModel};
use crate::scalar::{dot, mat_vec, norm, quad_form, ExtendedReal, Real};

/// Preference family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UtilityKind {
    /// `g(z) = z∧1 − ½(z∧1)²`.
    Mmv,
    /// `g(z) = z − ½z²`.
    Mv,
}

impl UtilityKind {
    pub fn name(self) -> &'static str {
        match self {
            UtilityKind::Mmv => "mmv",
            UtilityKind::Mv => "mv",
        }
    }

    /// The utility itself, in any ordered ring-like scalar (floats or rationals).
    pub fn g<F: Num + PartialOrd + Clone>(self, z: F) -> F {
        let one = F::one();
        let two = one.clone() + one.clone();
        let m = match self {
            UtilityKind::Mmv if z > one => one,
            _ => z,
        };
        m.clone() - m.clone() * m / two
    }

    /// `g'(z)`: `(1 − z)⁺` for MMV, `1 − z` for MV.
    pub fn dg<F: Num + PartialOrd + Clone>(self, z: F) -> F {
        let d = F::one() - z;
        match self {
            UtilityKind::Mmv if d < F::zero() => F::zero(),
            _ => d,
        }
    }

    pub fn scalar_fn<T: Real>(self) -> ScalarFn<T> {
        let quad_neg = TailGrowth::poly(2.0, TailSign::Negative);
        match self {
            UtilityKind::Mmv => ScalarFn {
                f: Arc::new(move |z: T| UtilityKind::Mmv.g(z)),
                d1: T::one(),
                d2: -T::one(),
                kinks: vec![T::one()],
                left: quad_neg,
                right: TailGrowth::bounded(),
            },
            UtilityKind::Mv => ScalarFn {
                f: Arc::new(move |z: T| UtilityKind::Mv.g(z)),
                d1: T::one(),
                d2: -T::one(),
                kinks: Vec::new(),
                left: quad_neg,
                right: quad_neg,
            },
        }
    }
}

/// `𝔤(λ) = λ·b^{[1]} − ½λcλ + ∫(g(λ·x) − λ·h(x)) F(dx)`.
pub fn local_utility<T: Real>(
    lambda: &[T],
    chars: &LocalCharacteristics<T>,
    kind: UtilityKind,
) -> Result<ExtendedReal<T>> {
    if lambda.iter().all(|l| *l == T::zero()) {
        return Ok(ExtendedReal::Finite(T::zero()));
    }
    let xi = VariationFunction::compose_linear(&kind.scalar_fn(), lambda);
    drift_of_variation(&xi, chars)
}

/// Gradient of `𝔤` at `λ`: `b_i − (cλ)_i + ∫(x_i g'(λ·x) − h_i(x)) F(dx)`.
pub fn foc_residual<T: Real>(
    lambda: &[T],
    chars: &LocalCharacteristics<T>,
    kind: UtilityKind,
) -> Result<Vec<T>> {
    let d = chars.dim();
    let net = chars.net_drift();
    let cl = mat_vec(&chars.c, lambda);
    let mut kinks = Vec::new();
    // Growth of y·g'(λy) along each tail, for the one-dimensional screen.
    let (left, right) = if d == 1 {
        let l = lambda[0];
        let pos = TailGrowth::poly(2.0, TailSign::Positive);
        let neg = TailGrowth::poly(2.0, TailSign::Negative);
        if kind == UtilityKind::Mmv && l != T::zero() {
            kinks.push(T::one() / l);
        }
        if l == T::zero() {
            (
                TailGrowth::poly(1.0, TailSign::Negative),
                TailGrowth::poly(1.0, TailSign::Positive),
            )
        } else {
            match (kind, l > T::zero()) {
                (UtilityKind::Mmv, true) => (neg, TailGrowth::bounded()),
                (UtilityKind::Mmv, false) => (TailGrowth::bounded(), pos),
                (UtilityKind::Mv, true) => (neg, neg),
                (UtilityKind::Mv, false) => (pos, pos),
            }
        }
    } else {
        (TailGrowth::unknown(), TailGrowth::unknown())
    };
    let lam = lambda.to_vec();
    (0..d)
        .map(|i| {
            let f = |x: &[T]| x[i] * kind.dg(dot(&lam, x));
            match screened_integral(&f, &kinks, left, right, chars)? {
                ExtendedReal::Finite(v) => Ok(net[i] - cl[i] + v),
                _ => Err(MmvError::NonIntegrable(format!(
                    "gradient component {i} of the local utility"
                ))),
            }
        })
        .collect()
}

/// Jump mass of `{x : pred(λ·x)}`, with `kink` the threshold of the predicate.
pub(crate) fn mass_where<T: Real>(
    jumps: &JumpMeasure<T>,
    lambda: &[T],
    pred: impl Fn(T) -> bool,
    kink: T,
    chars_quad: &crate::quadrature::QuadConfig,
) -> Result<T> {
    match jumps {
        JumpMeasure::FiniteAtoms { points, masses, .. } => Ok(points
            .iter()
            .zip(masses)
            .filter(|(p, _)| pred(dot(lambda, p)))
            .map(|(_, &m)| m)
            .sum()),
        _ => {
            let l = lambda[0];
            let ind = |y: T| if pred(l * y) { T::one() } else { T::zero() };
            let kinks = if l != T::zero() { vec![kink / l] } else { vec![] };
            jumps.integrate_1d(&ind, &kinks, chars_quad)
        }
    }
}

/// `lim_{y→∞} 𝔤(yλ)/y` for the MMV local utility.
pub fn asymptotic_slope<T: Real>(dir: &[T], chars: &LocalCharacteristics<T>) -> Result<ExtendedReal<T>> {
    if quad_form(&chars.c, dir) > T::zero() {
        return Ok(ExtendedReal::NegInfinity);
    }
    let neg = mass_where(&chars.jumps, dir, |z| z < T::zero(), T::zero(), &chars.quad)?;
    if neg > T::zero() {
        return Ok(ExtendedReal::NegInfinity);
    }
    Ok(ExtendedReal::Finite(dot(dir, &chars.net_drift())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NaMethod {
    /// Exact enumeration of candidate extreme rays (atoms, and `d = 1` segments).
    Exact,
    /// Checked along a deterministic grid of directions only.
    DirectionGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaVerdict<T> {
    pub location: Location<T>,
    pub holds: bool,
    pub method: NaMethod,
    pub witness: Option<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoArbReport<T> {
    pub holds: bool,
    /// First violating direction found.
    pub witness_direction: Option<Vec<T>>,
    /// Atom times violating the one-period condition.
    pub atom_violations: Vec<T>,
    pub verdicts: Vec<NaVerdict<T>>,
}

/// Checks instantaneous absence of arbitrage at every segment and atom.
pub fn check_instantaneous_no_arbitrage<T: Real>(model: &MarketModel<T>) -> Result<NoArbReport<T>> {
    let mut verdicts = Vec::new();
    for (loc, chars) in model.locations() {
        let v = match loc {
            Location::Atom { .. } => {
                let (points, masses) = match &chars.jumps {
                    JumpMeasure::FiniteAtoms { points, masses, .. } => (points, masses),
                    _ => unreachable!(),
                };
                let support: Vec<&[T]> = points
                    .iter()
                    .zip(masses)
                    .filter(|(p, m)| **m > T::zero() && p.iter().any(|v| *v != T::zero()))
                    .map(|(p, _)| p.as_slice())
                    .collect();
                let witness = one_period_arbitrage(&support, model.dimension);
                NaVerdict {
                    location: loc,
                    holds: witness.is_none(),
                    method: NaMethod::Exact,
                    witness,
                }
            }
            Location::Segment { .. } => {
                let d = model.dimension;
                let mut witness = None;
                for dir in direction_grid::<T>(d) {
                    if !segment_direction_ok(&dir, chars)? {
                        witness = Some(dir);
                        break;
                    }
                }
                NaVerdict {
                    location: loc,
                    holds: witness.is_none(),
                    method: if d == 1 {
                        NaMethod::Exact
                    } else {
                        NaMethod::DirectionGrid
                    },
                    witness,
                }
            }
        };
        verdicts.push(v);
    }
    let holds = verdicts.iter().all(|v| v.holds);
    let witness_direction = verdicts.iter().find_map(|v| v.witness.clone());
    let atom_violations = verdicts
        .iter()
        .filter(|v| !v.holds)
        .filter_map(|v| match v.location {
            Location::Atom { time, .. } => Some(time),
            _ => None,
        })
        .collect();
    Ok(NoArbReport {
        holds,
        witness_direction,
        atom_violations,
        verdicts,
    })
}

fn segment_direction_ok<T: Real>(dir: &[T], chars: &LocalCharacteristics<T>) -> Result<bool> {
    let scale = T::one() + chars.c.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::lit(1e-12).max(T::lit(100.0) * T::epsilon()) * scale;
    if norm(&mat_vec(&chars.c, dir)) > tol {
        return Ok(true);
    }
    let q = &chars.quad;
    let neg = mass_where(&chars.jumps, dir, |z| z < T::zero(), T::zero(), q)?;
    if neg > T::zero() {
        return Ok(true);
    }
    let pos = mass_where(&chars.jumps, dir, |z| z > T::zero(), T::zero(), q)?;
    if pos > T::zero() {
        Ok(dot(dir, &chars.net_drift()) < T::zero())
    } else {
        let drift_scale = T::one() + norm(&chars.b_trunc);
        Ok(dot(dir, &chars.b_trunc).abs() <= tol * drift_scale)
    }
}

/// Directions used for the segment check: `±1` on the line, an evenly spaced
/// circle in the plane, a Fibonacci sphere in 3-d, and a Kronecker sequence
/// projected onto the sphere in 4-d. Coordinate axes are always included.
pub fn direction_grid<T: Real>(d: usize) -> Vec<Vec<T>> {
    const N: usize = 1000;
    let mut out: Vec<Vec<f64>> = Vec::new();
    match d {
        1 => return vec![vec![T::one()], vec![-T::one()]],
        2 => {
            for k in 0..N {
                let a = 2.0 * std::f64::consts::PI * k as f64 / N as f64;
                out.push(vec![a.cos(), a.sin()]);
            }
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..N {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / N as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64;
                out.push(vec![r * a.cos(), r * a.sin(), z]);
            }
        }
        _ => {
            // Generalized golden ratio: the root of x^{d+1} = x + 1.
            let mut phi = 2.0f64;
            for _ in 0..64 {
                phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
            }
            let alpha: Vec<f64> = (1..=d).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
            let mut k = 0u64;
            while out.len() < N {
                k += 1;
                let p: Vec<f64> = alpha
                    .iter()
                    .map(|a| 2.0 * (0.5 + a * k as f64).fract() - 1.0)
                    .collect();
                let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > 1e-3 && r <= 1.0 {
                    out.push(p.iter().map(|v| v / r).collect());
                }
            }
        }
    }
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            out.push(e);
        }
    }
    out.into_iter()
        .map(|v| v.into_iter().map(T::lit).collect())
        .collect()
}

/// Returns `λ` with `λ·x ≥ 0` on every support point and `> 0` on some, if one
/// exists. Candidates are the extreme rays of the cone `{λ ∈ span : λ·x ≥ 0}`,
/// each orthogonal to `k − 1` support points where `k` is the span's dimension.
pub fn one_period_arbitrage<T: Real>(points: &[&[T]], d: usize) -> Option<Vec<T>> {
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    let tol = T::lit(1e-12).max(T::lit(100.0) * T::epsilon()) * scale;
    // Orthonormal basis of the span.
    let mut basis: Vec<Vec<T>> = Vec::new();
    for p in points {
        let mut v = p.to_vec();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for i in 0..d {
                    v[i] = v[i] - c * b[i];
                }
            }
        }
        let n = norm(&v);
        if n > tol {
            basis.push(v.iter().map(|x| *x / n).collect());
        }
        if basis.len() == d {
            break;
        }
    }
    let k = basis.len();
    let coords: Vec<Vec<T>> = points
        .iter()
        .map(|p| basis.iter().map(|b| dot(b, p)).collect())
        .collect();
    let lift = |u: &[T]| -> Vec<T> {
        (0..d)
            .map(|i| basis.iter().zip(u).map(|(b, c)| b[i] * *c).sum())
            .collect()
    };
    let test = |u: &[T]| -> bool {
        let vals: Vec<T> = coords.iter().map(|y| dot(y, u)).collect();
        vals.iter().all(|v| *v >= -tol) && vals.iter().any(|v| *v > tol)
    };
    let mut candidates: Vec<Vec<T>> = Vec::new();
    if k == 1 {
        candidates.push(vec![T::one()]);
    } else {
        for subset in combinations(points.len(), k - 1) {
            // Generalized cross product of the k − 1 chosen rows.
            let mut u = vec![T::zero(); k];
            for (col, ui) in u.iter_mut().enumerate() {
                let mut minor = Vec::with_capacity((k - 1) * (k - 1));
                for &r in &subset {
                    for c in 0..k {
                        if c != col {
                            minor.push(coords[r][c]);
                        }
                    }
                }
                let det = determinant(&minor, k - 1);
                *ui = if col % 2 == 0 { det } else { -det };
            }
            let n = norm(&u);
            if n > tol * tol.min(T::one()) {
                candidates.push(u.iter().map(|x| *x / n).collect());
            }
        }
    }
    for u in candidates {
        for s in [T::one(), -T::one()] {
            let v: Vec<T> = u.iter().map(|x| *x * s).collect();
            if test(&v) {
                return Some(lift(&v));
            }
        }
    }
    None
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - r {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exp_transform, JumpAtom};
    use crate::quadrature::QuadConfig;

    fn example1_atom() -> LocalCharacteristics<f64> {
        let pts = vec![vec![-0.5, -0.5], vec![0.5, 0.5], vec![1.0, 1.2], vec![1.2, 1.0]];
        LocalCharacteristics::one_period(JumpMeasure::atoms(pts, vec![0.2, 0.6, 0.1, 0.1]).unwrap())
            .unwrap()
    }

    #[test]
    fn utilities_agree_below_one() {
        for z in [-3.0, -0.5, 0.0, 0.5, 1.0] {
            assert_eq!(UtilityKind::Mmv.g(z), UtilityKind::Mv.g(z));
        }
        assert_eq!(UtilityKind::Mmv.g(3.0), 0.5);
        assert_eq!(UtilityKind::Mv.g(3.0), -1.5);
        assert_eq!(UtilityKind::Mmv.dg(2.0), 0.0);
    }

    #[test]
    fn example_one_unit_strategies() {
        let ch = example1_atom();
        for l in [[1.0, 0.0], [0.0, 1.0]] {
            let v = local_utility(&l, &ch, UtilityKind::Mmv).unwrap().finite().unwrap();
            assert!((v - 0.2).abs() < 1e-15, "{v}");
        }
        assert_eq!(local_utility(&[0.0, 0.0], &ch, UtilityKind::Mv).unwrap(), ExtendedReal::Finite(0.0));
    }

    #[test]
    fn example_four_negative_lambda_is_minus_infinity() {
        let e = JumpMeasure::ExpTails1D {
            c_minus: 10.0,
            a: 1.0,
            c_plus: 3.0,
            b: 1.5,
        };
        let x = LocalCharacteristics::from_zero_drift(vec![0.0], vec![0.0], e, QuadConfig::default()).unwrap();
        let r = exp_transform(&x).unwrap();
        assert_eq!(local_utility(&[-0.1], &r, UtilityKind::Mmv).unwrap(), ExtendedReal::NegInfinity);
        let v = local_utility(&[0.1], &r, UtilityKind::Mmv).unwrap().finite().unwrap();
        assert!(v < 0.0);
        let foc: f64 = foc_residual(&[0.0], &r, UtilityKind::Mmv).unwrap()[0];
        assert!((foc + 1.0).abs() < 1e-9, "{foc}");
    }

    #[test]
    fn slopes() {
        let z = LocalCharacteristics::<f64>::zero(1);
        assert_eq!(asymptotic_slope(&[1.0], &z).unwrap(), ExtendedReal::Finite(0.0));
        let c = LocalCharacteristics::new(vec![0.1], vec![0.04], JumpMeasure::none(1)).unwrap();
        assert_eq!(asymptotic_slope(&[1.0], &c).unwrap(), ExtendedReal::NegInfinity);
        let up = JumpMeasure::atoms_1d(&[0.5, 2.0], &[1.0, 1.0]).unwrap();
        let ch = LocalCharacteristics::new(vec![0.0], vec![0.0], up).unwrap();
        // b − ∫h dF = 0 − 0.5.
        assert_eq!(asymptotic_slope(&[1.0], &ch).unwrap(), ExtendedReal::Finite(-0.5));
    }

    #[test]
    fn one_period_arbitrage_detection() {
        let pts: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let w = one_period_arbitrage(&refs, 1).unwrap();
        assert!(w[0] > 0.0);
        let pts = vec![vec![-0.5, -0.5], vec![0.5, 0.5], vec![1.0, 1.2], vec![1.2, 1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert!(one_period_arbitrage(&refs, 2).is_none());
        // Dominance: asset 2 − asset 1 is never negative and sometimes positive.
        let pts = vec![vec![-1.0, -0.5], vec![1.0, 1.0], vec![0.5, 0.7]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let w = one_period_arbitrage(&refs, 2).unwrap();
        let vals: Vec<f64> = pts.iter().map(|p| dot(&w, p)).collect();
        assert!(vals.iter().all(|v| *v >= -1e-12) && vals.iter().any(|v| *v > 1e-12));
    }

    #[test]
    fn model_level_report() {
        let atom = JumpAtom::new(1.0, vec![vec![1.0], vec![2.0]], vec![0.5, 0.5], 1).unwrap();
        let m = MarketModel::new(1.0, 1, vec![], vec![atom]).unwrap();
        let r = check_instantaneous_no_arbitrage(&m).unwrap();
        assert!(!r.holds);
        assert_eq!(r.atom_violations, vec![1.0]);
        assert_eq!(r.witness_direction, Some(vec![1.0]));
    }

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(direction_grid::<f64>(4).len(), 1008);
    }
}
