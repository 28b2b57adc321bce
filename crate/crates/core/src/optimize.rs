//! Maximization of the concave local utility `λ ↦ 𝔤(λ)`.
//!
//! One asset: expanding bracket from zero, golden section, then a root polish
//! on the monotone first-order condition. Several assets (atoms and diffusion
//! only): semismooth Newton on a Tikhonov-regularized objective with the
//! regularization driven to zero, followed by an exact solve on the final
//! active pattern. Ties resolve to the minimum-norm maximizer.

use crate::error::{MmvError, Result};
use crate::linalg::{pseudo_solve, symmetric_eigen};
use crate::localutil::{asymptotic_slope, foc_residual, local_utility, UtilityKind};
use crate::model::{apply_steps, JumpMeasure, LocalCharacteristics};
use crate::scalar::{dot, mat_vec, norm, quad_form, ExtendedReal, Real};

const MAX_EXPANSIONS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundedness {
    Interior,
    /// The maximizer set contains a ray.
    FlatDirection,
    /// The bracket never closed; the value may be infinite.
    UnboundedFlagged,
    /// `λ̂` sits on the edge of `{𝔤 > −∞}`; the gradient need not vanish.
    DomainBoundary,
}

impl Boundedness {
    pub fn name(self) -> &'static str {
        match self {
            Boundedness::Interior => "interior",
            Boundedness::FlatDirection => "flat_direction",
            Boundedness::UnboundedFlagged => "unbounded_flagged",
            Boundedness::DomainBoundary => "domain_boundary",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOptimum<T> {
    pub lambda_hat: Vec<T>,
    /// `𝔤(λ̂) ≥ 0`; `+∞` when flagged unbounded with a positive slope.
    pub value: T,
    /// `None` when the gradient integral diverges at `λ̂`.
    pub foc_residual: Option<Vec<T>>,
    pub boundedness: Boundedness,
    pub tie_break_applied: bool,
}

impl<T: Real> LocalOptimum<T> {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    fn zero(d: usize) -> Self {
        LocalOptimum {
            lambda_hat: vec![T::zero(); d],
            value: T::zero(),
            foc_residual: None,
            boundedness: Boundedness::Interior,
            tie_break_applied: false,
        }
    }
}

/// Typical jump size, used to scale the initial bracket.
pub fn support_scale<T: Real>(chars: &LocalCharacteristics<T>) -> T {
    let s = jump_scale(&chars.jumps);
    if s > T::zero() && s.is_finite() {
        return s;
    }
    let d = chars.dim();
    let cmax = (0..d).fold(T::zero(), |m, i| m.max(chars.c[i * d + i]));
    if cmax > T::zero() {
        cmax.sqrt()
    } else {
        T::one()
    }
}

fn jump_scale<T: Real>(j: &JumpMeasure<T>) -> T {
    let three = T::lit(3.0);
    match j {
        JumpMeasure::FiniteAtoms { points, .. } => points
            .iter()
            .flat_map(|p| p.iter())
            .fold(T::zero(), |m, v| m.max(v.abs())),
        JumpMeasure::Gaussian1D { mean, variance, .. } => mean.abs() + three * variance.sqrt(),
        JumpMeasure::ExpTails1D { a, b, .. } => three / a.min(*b),
        JumpMeasure::Tabulated1D { x, .. } => x.iter().fold(T::zero(), |m, v| m.max(v.abs())),
        JumpMeasure::Mapped { base, steps } => {
            let s = jump_scale(base);
            apply_steps(steps, s).abs().max(apply_steps(steps, -s).abs())
        }
    }
}

/// Values closer than this count as ties; relative, since atom problems with
/// tiny jumps have tiny values.
fn value_tol<T: Real>(v: T) -> T {
    T::lit(1e-11).max(T::lit(100.0) * T::epsilon()) * v.abs()
}

/// Global maximizer of the local utility at one time point.
pub fn maximize_local_utility<T: Real>(
    chars: &LocalCharacteristics<T>,
    kind: UtilityKind,
) -> Result<LocalOptimum<T>> {
    let mut opt = if chars.dim() == 1 {
        solve_1d(chars, kind)?
    } else if kind == UtilityKind::Mv {
        solve_mv_atoms(chars)?
    } else {
        solve_mmv_atoms(chars)?
    };
    if opt.value.is_finite() {
        opt.foc_residual = foc_residual(&opt.lambda_hat, chars, kind).ok();
    }
    Ok(opt)
}

fn eval<T: Real>(l: T, chars: &LocalCharacteristics<T>, kind: UtilityKind) -> Result<T> {
    Ok(local_utility(&[l], chars, kind)?.to_float())
}

fn golden_section<T: Real>(
    f: &dyn Fn(T) -> Result<T>,
    mut a: T,
    mut c: T,
) -> Result<(T, T)> {
    let r = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let tol = T::lit(1e-10).max(T::lit(4.0) * T::epsilon());
    let mut x1 = c - r * (c - a);
    let mut x2 = a + r * (c - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..300 {
        if (c - a).abs() <= tol * (T::one() + x1.abs().max(x2.abs())) {
            break;
        }
        if f1 >= f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - r * (c - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (c - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Root of a decreasing function starting from a point, by expanding then Illinois.
fn decreasing_root<T: Real>(g: &dyn Fn(T) -> Result<T>, x0: T, g0: T) -> Result<Option<T>> {
    if g0 == T::zero() {
        return Ok(Some(x0));
    }
    let dir = if g0 > T::zero() { T::one() } else { -T::one() };
    let mut delta = T::lit(1e-7) * (T::one() + x0.abs());
    let (mut a, mut ga) = (x0, g0);
    let mut bracket = None;
    for _ in 0..60 {
        let x = x0 + dir * delta;
        let gx = g(x)?;
        if !gx.is_finite() {
            return Ok(None);
        }
        if (gx > T::zero()) != (g0 > T::zero()) || gx == T::zero() {
            bracket = Some((x, gx));
            break;
        }
        a = x;
        ga = gx;
        delta = delta * T::lit(2.0);
    }
    let Some((mut b, mut gb)) = bracket else {
        return Ok(None);
    };
    let mut side = 0i8;
    for _ in 0..200 {
        if gb == T::zero() {
            return Ok(Some(b));
        }
        let x = (a * gb - b * ga) / (gb - ga);
        if !(x > a.min(b) && x < a.max(b)) || (b - a).abs() <= T::epsilon() * (T::one() + x.abs()) {
            break;
        }
        let gx = g(x)?;
        if (gx > T::zero()) == (gb > T::zero()) {
            b = x;
            gb = gx;
            if side == 1 {
                ga = ga / T::lit(2.0);
            }
            side = 1;
        } else {
            a = x;
            ga = gx;
            if side == -1 {
                gb = gb / T::lit(2.0);
            }
            side = -1;
        }
    }
    Ok(Some(if ga.abs() < gb.abs() { a } else { b }))
}

fn solve_1d<T: Real>(chars: &LocalCharacteristics<T>, kind: UtilityKind) -> Result<LocalOptimum<T>> {
    let f = |l: T| eval(l, chars, kind);
    let h = T::one() / support_scale(chars);
    let f0 = T::zero();
    let fp = f(h)?;
    let fm = f(-h)?;
    let dir = if fp > f0 {
        Some((T::one(), fp))
    } else if fm > f0 {
        Some((-T::one(), fm))
    } else {
        None
    };
    let (a, c) = match dir {
        None => (-h, h),
        Some((sg, fh)) => {
            let (mut prev, mut cur, mut fcur) = (T::zero(), sg * h, fh);
            let mut closed = None;
            for _ in 0..MAX_EXPANSIONS {
                let next = cur * T::lit(4.0);
                let fnext = f(next)?;
                if fnext <= fcur {
                    closed = Some((prev.min(next), prev.max(next)));
                    break;
                }
                prev = cur;
                cur = next;
                fcur = fnext;
            }
            match closed {
                Some(b) => b,
                None => {
                    let slope = asymptotic_slope(&[sg], chars)?;
                    let value = match slope {
                        ExtendedReal::Finite(s) if s > T::zero() => T::infinity(),
                        ExtendedReal::PosInfinity => T::infinity(),
                        _ => fcur,
                    };
                    return Ok(LocalOptimum {
                        lambda_hat: vec![cur],
                        value,
                        foc_residual: None,
                        boundedness: Boundedness::UnboundedFlagged,
                        tie_break_applied: false,
                    });
                }
            }
        }
    };
    let (mut lam, mut val) = golden_section(&f, a, c)?;
    // Polish on the first-order condition, which is monotone by concavity.
    let grad = |l: T| foc_residual(&[l], chars, kind).map(|g| g[0]);
    if let Ok(g0) = grad(lam) {
        if let Ok(Some(root)) = decreasing_root(&grad, lam, g0) {
            let v = f(root)?;
            if v >= val - value_tol(val) * T::lit(1e-3) {
                lam = root;
                val = v;
            }
        }
    }
    if !(val > f0) {
        lam = T::zero();
        val = f0;
    }
    let tol = value_tol(val);
    let mut tie = false;
    if lam != T::zero() {
        let inner = lam * (T::one() - T::lit(1e-3));
        if f(inner)? >= val - tol {
            // Plateau toward zero: bisect for its near end.
            let (mut lo, mut hi) = (T::zero(), lam);
            for _ in 0..200 {
                let mid = (lo + hi) / T::lit(2.0);
                if mid == lo || mid == hi {
                    break;
                }
                if f(mid)? >= val - tol {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lam = hi;
            val = f(lam)?;
            tie = true;
        }
    }
    let probe = T::lit(1e-3) * (T::one() + lam.abs());
    let flat_up = f(lam + probe)? >= val - tol;
    let flat_down = f(lam - probe)? >= val - tol;
    tie |= flat_up || flat_down;
    let far = T::lit(1e6) * (T::one() + lam.abs()) / support_scale(chars).min(T::one());
    let edge = T::lit(1e-9) * (T::one() + lam.abs());
    let boundedness = if (flat_up && f(lam + far)? >= val - tol) || (flat_down && f(lam - far)? >= val - tol)
    {
        Boundedness::FlatDirection
    } else if f(lam + edge)? == T::neg_infinity() || f(lam - edge)? == T::neg_infinity() {
        Boundedness::DomainBoundary
    } else {
        Boundedness::Interior
    };
    Ok(LocalOptimum {
        lambda_hat: vec![lam],
        value: val,
        foc_residual: None,
        boundedness,
        tie_break_applied: tie,
    })
}

struct AtomProblem<'a, T> {
    net: Vec<T>,
    c: &'a [T],
    points: &'a [Vec<T>],
    masses: &'a [T],
    d: usize,
}

impl<'a, T: Real> AtomProblem<'a, T> {
    fn new(chars: &'a LocalCharacteristics<T>) -> Result<Self> {
        match &chars.jumps {
            JumpMeasure::FiniteAtoms { points, masses, .. } => Ok(AtomProblem {
                net: chars.net_drift(),
                c: &chars.c,
                points,
                masses,
                d: chars.dim(),
            }),
            _ => Err(MmvError::UnsupportedMeasure(
                "multi-asset optimization needs finitely many jump atoms".into(),
            )),
        }
    }

    fn value(&self, l: &[T], kind: UtilityKind, eps: T) -> T {
        let jumps: T = self
            .points
            .iter()
            .zip(self.masses)
            .map(|(x, &m)| m * kind.g(dot(l, x)))
            .sum();
        dot(l, &self.net) - T::lit(0.5) * (quad_form(self.c, l) + eps * dot(l, l)) + jumps
    }

    /// `(∇, −∇²)` of the regularized objective; the Hessian is the generalized one.
    fn grad_hess(&self, l: &[T], kind: UtilityKind, eps: T) -> (Vec<T>, Vec<T>) {
        let d = self.d;
        let cl = mat_vec(self.c, l);
        let mut g: Vec<T> = (0..d).map(|i| self.net[i] - cl[i] - eps * l[i]).collect();
        let mut h = self.c.to_vec();
        for i in 0..d {
            h[i * d + i] = h[i * d + i] + eps;
        }
        for (x, &m) in self.points.iter().zip(self.masses) {
            let z = dot(l, x);
            let w = kind.dg(z);
            for i in 0..d {
                g[i] = g[i] + m * x[i] * w;
            }
            if kind == UtilityKind::Mv || z < T::one() {
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = h[i * d + j] + m * x[i] * x[j];
                    }
                }
            }
        }
        (g, h)
    }

    /// The quadratic system `M λ = q` that is exact on the region `{λx_j < 1, j ∈ S}`.
    fn pattern_system(&self, active: &[bool]) -> (Vec<T>, Vec<T>) {
        let d = self.d;
        let mut m = self.c.to_vec();
        let mut q = self.net.clone();
        for ((x, &w), &on) in self.points.iter().zip(self.masses).zip(active) {
            if on {
                for i in 0..d {
                    q[i] = q[i] + w * x[i];
                    for j in 0..d {
                        m[i * d + j] = m[i * d + j] + w * x[i] * x[j];
                    }
                }
            }
        }
        (m, q)
    }
}

fn solve_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::lit(16.0) * T::epsilon())
}

fn solve_mv_atoms<T: Real>(chars: &LocalCharacteristics<T>) -> Result<LocalOptimum<T>> {
    let p = AtomProblem::new(chars)?;
    let (m, q) = p.pattern_system(&vec![true; p.points.len()]);
    let lam = pseudo_solve(&m, &q, solve_tol());
    let resid: Vec<T> = mat_vec(&m, &lam).iter().zip(&q).map(|(a, b)| *a - *b).collect();
    let (w, _) = symmetric_eigen(&m, p.d);
    let wmax = w.iter().fold(T::zero(), |a, x| a.max(x.abs()));
    let singular = w.iter().any(|x| x.abs() <= solve_tol::<T>() * wmax);
    if norm(&resid) > T::lit(1e-9).max(T::lit(1e3) * T::epsilon()) * (T::one() + norm(&q)) {
        return Ok(LocalOptimum {
            lambda_hat: lam,
            value: T::infinity(),
            foc_residual: None,
            boundedness: Boundedness::UnboundedFlagged,
            tie_break_applied: false,
        });
    }
    let value = p.value(&lam, UtilityKind::Mv, T::zero());
    if !(value > T::zero()) {
        return Ok(LocalOptimum::zero(p.d));
    }
    Ok(LocalOptimum {
        lambda_hat: lam,
        value,
        foc_residual: None,
        boundedness: if singular {
            Boundedness::FlatDirection
        } else {
            Boundedness::Interior
        },
        tie_break_applied: singular,
    })
}

fn newton<T: Real>(p: &AtomProblem<'_, T>, mut l: Vec<T>, eps: T) -> Vec<T> {
    let kind = UtilityKind::Mmv;
    for _ in 0..200 {
        let (g, h) = p.grad_hess(&l, kind, eps);
        let step = pseudo_solve(&h, &g, solve_tol());
        let slope = dot(&g, &step);
        if !(slope > T::zero()) {
            break;
        }
        let v0 = p.value(&l, kind, eps);
        let mut t = T::one();
        let mut moved = false;
        while t > T::lit(1e-20) {
            let cand: Vec<T> = l.iter().zip(&step).map(|(a, s)| *a + t * *s).collect();
            if p.value(&cand, kind, eps) >= v0 + T::lit(1e-4) * t * slope {
                l = cand;
                moved = true;
                break;
            }
            t = t / T::lit(2.0);
        }
        if !moved || t * norm(&step) <= T::epsilon() * (T::one() + norm(&l)) {
            break;
        }
    }
    l
}

fn solve_mmv_atoms<T: Real>(chars: &LocalCharacteristics<T>) -> Result<LocalOptimum<T>> {
    let p = AtomProblem::new(chars)?;
    let d = p.d;
    let kind = UtilityKind::Mmv;
    let (full, _) = p.pattern_system(&vec![true; p.points.len()]);
    let scale = (0..d).fold(T::zero(), |m, i| m.max(full[i * d + i])).max(T::lit(1e-300).max(T::min_positive_value()));
    let eps_min = T::lit(1e-10).max(T::lit(1e3) * T::epsilon()) * scale;
    let mut eps = T::lit(1e-2) * scale;
    let mut lam = vec![T::zero(); d];
    loop {
        lam = newton(&p, lam, eps);
        if eps <= eps_min {
            break;
        }
        eps = (eps / T::lit(10.0)).max(eps_min);
    }
    // Exact solve on the final active pattern.
    let region_tol = T::lit(1e-9).max(T::lit(1e3) * T::epsilon());
    let active: Vec<bool> = p.points.iter().map(|x| dot(&lam, x) < T::one()).collect();
    let (m, q) = p.pattern_system(&active);
    let snap = pseudo_solve(&m, &q, solve_tol());
    let valid = p.points.iter().zip(&active).all(|(x, &on)| {
        let z = dot(&snap, x);
        if on {
            z <= T::one() + region_tol
        } else {
            z >= T::one() - region_tol
        }
    });
    let v_reg = p.value(&lam, kind, T::zero());
    if valid && p.value(&snap, kind, T::zero()) >= v_reg - value_tol(v_reg) {
        lam = snap;
    } else {
        lam = newton(&p, lam, T::zero());
    }
    let mut value = p.value(&lam, kind, T::zero());
    let scale_x = support_scale(chars);
    if norm(&lam) * scale_x > T::lit(1e8) {
        let slope = asymptotic_slope(&lam, chars)?;
        if let ExtendedReal::Finite(s) = slope {
            if s > T::zero() {
                value = T::infinity();
            }
        }
        return Ok(LocalOptimum {
            lambda_hat: lam,
            value,
            foc_residual: None,
            boundedness: Boundedness::UnboundedFlagged,
            tie_break_applied: false,
        });
    }
    if !(value > T::zero()) {
        return Ok(LocalOptimum::zero(d));
    }
    // Flat directions of the final pattern.
    let active: Vec<bool> = p.points.iter().map(|x| dot(&lam, x) < T::one()).collect();
    let (m, _) = p.pattern_system(&active);
    let (w, v) = symmetric_eigen(&m, d);
    let wmax = w.iter().fold(T::zero(), |a, x| a.max(x.abs()));
    let tol = value_tol(value);
    let mut tie = false;
    let mut ray = false;
    for k in 0..d {
        if w[k].abs() > solve_tol::<T>() * wmax.max(T::one()) {
            continue;
        }
        let dir: Vec<T> = (0..d).map(|i| v[i * d + k]).collect();
        for s in [T::one(), -T::one()] {
            let at = |t: T| -> Vec<T> { lam.iter().zip(&dir).map(|(a, b)| *a + s * t * *b).collect() };
            let delta = T::lit(1e-3) * (T::one() + norm(&lam)) / scale_x;
            if p.value(&at(delta), kind, T::zero()) >= value - tol {
                tie = true;
                if p.value(&at(delta * T::lit(1e9)), kind, T::zero()) >= value - tol {
                    ray = true;
                }
            }
        }
    }
    Ok(LocalOptimum {
        lambda_hat: lam,
        value,
        foc_residual: None,
        boundedness: if ray {
            Boundedness::FlatDirection
        } else {
            Boundedness::Interior
        },
        tie_break_applied: tie,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exp_transform;
    use crate::quadrature::QuadConfig;

    fn example2() -> LocalCharacteristics<f64> {
        let x = LocalCharacteristics::from_zero_drift(
            vec![0.2],
            vec![0.04],
            JumpMeasure::Gaussian1D {
                mean: 0.0,
                variance: 0.01,
                rate: 1.0,
            },
            QuadConfig::default(),
        )
        .unwrap();
        exp_transform(&x).unwrap()
    }

    #[test]
    fn example_two_mv_and_mmv() {
        let r = example2();
        let mv = maximize_local_utility(&r, UtilityKind::Mv).unwrap();
        assert!((mv.lambda_hat[0] - 4.484438439009603).abs() < 1e-9, "{:?}", mv);
        assert!((2.0 * mv.value - 1.0090547978003477).abs() < 1e-10);
        assert_eq!(mv.boundedness, Boundedness::Interior);
        let mmv = maximize_local_utility(&r, UtilityKind::Mmv).unwrap();
        assert!((mmv.lambda_hat[0] - 4.5142831451111025).abs() < 1e-9, "{:?}", mmv);
        assert!((2.0 * mmv.value - 1.0109364074960037).abs() < 1e-10);
        assert!(mmv.foc_residual.unwrap()[0].abs() < 1e-8);
    }

    #[test]
    fn symmetric_model_stays_at_zero() {
        let ch: LocalCharacteristics<f64> = LocalCharacteristics::new(
            vec![0.0],
            vec![0.04],
            JumpMeasure::atoms_1d(&[-0.3, 0.3], &[0.5, 0.5]).unwrap(),
        )
        .unwrap();
        for kind in [UtilityKind::Mmv, UtilityKind::Mv] {
            let o = maximize_local_utility(&ch, kind).unwrap();
            assert_eq!(o.lambda_hat, vec![0.0]);
            assert_eq!(o.value, 0.0);
        }
    }

    #[test]
    fn example_one_min_norm_tie_break() {
        let pts = vec![vec![-0.5, -0.5], vec![0.5, 0.5], vec![1.0, 1.2], vec![1.2, 1.0]];
        let ch: LocalCharacteristics<f64> = LocalCharacteristics::one_period(JumpMeasure::atoms(pts, vec![0.2, 0.6, 0.1, 0.1]).unwrap()).unwrap();
        let o = maximize_local_utility(&ch, UtilityKind::Mmv).unwrap();
        assert!((o.value - 0.2).abs() < 1e-14, "{o:?}");
        assert!((o.lambda_hat[0] - 0.5).abs() < 1e-12 && (o.lambda_hat[1] - 0.5).abs() < 1e-12);
        assert!(o.tie_break_applied);
        assert_eq!(o.boundedness, Boundedness::Interior);
    }

    #[test]
    fn zero_model_is_flat() {
        let o = maximize_local_utility(&LocalCharacteristics::<f64>::zero(1), UtilityKind::Mmv).unwrap();
        assert_eq!(o.lambda_hat, vec![0.0]);
        assert_eq!(o.boundedness, Boundedness::FlatDirection);
        let o = maximize_local_utility(&LocalCharacteristics::<f64>::zero(3), UtilityKind::Mv).unwrap();
        assert_eq!(o.lambda_hat, vec![0.0; 3]);
    }

    #[test]
    fn pure_diffusion_closed_form() {
        let ch: LocalCharacteristics<f64> = LocalCharacteristics::new(vec![0.1], vec![0.04], JumpMeasure::none(1)).unwrap();
        let o = maximize_local_utility(&ch, UtilityKind::Mv).unwrap();
        assert!((o.lambda_hat[0] - 2.5).abs() < 1e-12);
        assert!((o.value - 0.125).abs() < 1e-14);
    }

    #[test]
    fn arbitrage_is_flagged() {
        let ch: LocalCharacteristics<f64> = LocalCharacteristics::new(vec![0.1], vec![0.0], JumpMeasure::none(1)).unwrap();
        let o = maximize_local_utility(&ch, UtilityKind::Mmv).unwrap();
        assert_eq!(o.boundedness, Boundedness::UnboundedFlagged);
        assert_eq!(o.value, f64::INFINITY);
    }
}
