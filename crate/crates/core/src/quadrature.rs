//! Numerical integration kernels: adaptive Gauss–Kronrod, Gauss–Hermite and
//! Gauss–Laguerre rules built by Golub–Welsch, and the trapezoid rule.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{MmvError, Result};
use crate::scalar::Real;

/// Tolerances for every quadrature call made on behalf of a set of characteristics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Subinterval budget for adaptive Gauss–Kronrod.
    pub max_intervals: usize,
    /// Magnitude past which a partial integral is treated as divergent.
    pub divergence_threshold: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
            divergence_threshold: 1e12,
        }
    }
}

impl QuadConfig {
    pub fn with_tolerance(abs_tol: f64, rel_tol: f64) -> Self {
        QuadConfig {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    fn target<T: Real>(&self, value: T, abs_mass: T) -> T {
        let floor = T::lit(64.0) * T::epsilon() * abs_mass;
        T::lit(self.abs_tol)
            .max(T::lit(self.rel_tol) * value.abs())
            .max(floor)
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy)]
struct Piece<T> {
    a: T,
    b: T,
    value: T,
    abs_value: T,
    err: T,
}

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Piece<T> {
    let half = T::lit(0.5);
    let centre = half * (a + b);
    let hl = half * (b - a);
    let fc = f(centre);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    let mut abs_k = fc.abs() * T::lit(WGK[7]);
    for j in 0..7 {
        let dx = hl * T::lit(XGK[j]);
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        kron = kron + T::lit(WGK[j]) * (f1 + f2);
        abs_k = abs_k + T::lit(WGK[j]) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    Piece {
        a,
        b,
        value: kron * hl,
        abs_value: abs_k * hl.abs(),
        err: ((kron - gauss) * hl).abs(),
    }
}

/// Adaptive G7–K15 integration of `f` over the finite interval `[a, b]`.
pub fn gauss_kronrod<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, cfg: &QuadConfig) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let mut pieces = vec![gk15(&f, a, b)];
    loop {
        let total: T = pieces.iter().map(|p| p.value).sum();
        let abs_total: T = pieces.iter().map(|p| p.abs_value).sum();
        let err: T = pieces.iter().map(|p| p.err).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(MmvError::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= cfg.target(total, abs_total) {
            return Ok(total);
        }
        if pieces.len() >= cfg.max_intervals {
            return Err(MmvError::Quadrature(format!(
                "tolerance unattainable on [{a}, {b}]: estimate {total}, error {err}"
            )));
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.partial_cmp(&y.1.err).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let p = pieces.swap_remove(worst);
        let mid = T::lit(0.5) * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // Interval exhausted at machine precision; keep its estimate.
            pieces.push(Piece { err: T::zero(), ..p });
            continue;
        }
        pieces.push(gk15(&f, p.a, mid));
        pieces.push(gk15(&f, mid, p.b));
    }
}

/// Integrates `f` over `[a, ∞)` (`upward`) or `(−∞, a]` via `x = a ± s·t/(1−t)`.
pub fn gauss_kronrod_tail<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    upward: bool,
    scale: T,
    cfg: &QuadConfig,
) -> Result<T> {
    let one = T::one();
    let g = |t: T| {
        let u = one - t;
        let x = if upward {
            a + scale * t / u
        } else {
            a - scale * t / u
        };
        let jac = scale / (u * u);
        let v = f(x);
        if v == T::zero() {
            T::zero()
        } else {
            v * jac
        }
    };
    gauss_kronrod(g, T::zero(), one, cfg)
}

/// Nodes and weights of a Gauss rule, in `f64`.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Symmetric tridiagonal eigenproblem by implicit QL, tracking only the
/// first component of each eigenvector.
fn golub_welsch(mut diag: Vec<f64>, mut off: Vec<f64>, mu0: f64) -> GaussRule {
    let n = diag.len();
    off.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 200, "QL iteration did not converge");
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    let mut pairs: Vec<(f64, f64)> = diag
        .into_iter()
        .zip(z)
        .map(|(x, v)| (x, mu0 * v * v))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

type RuleCache = Mutex<HashMap<(u8, usize), Arc<GaussRule>>>;

fn cache() -> &'static RuleCache {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(kind: u8, n: usize, build: impl FnOnce() -> GaussRule) -> Arc<GaussRule> {
    if let Some(r) = cache().lock().unwrap().get(&(kind, n)) {
        return r.clone();
    }
    let rule = Arc::new(build());
    cache().lock().unwrap().insert((kind, n), rule.clone());
    rule
}

/// Gauss–Hermite rule for the weight `e^{−x²}`.
pub fn gauss_hermite(n: usize) -> Arc<GaussRule> {
    cached(0, n, || {
        let off = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
        golub_welsch(vec![0.0; n], off, std::f64::consts::PI.sqrt())
    })
}

/// Gauss–Laguerre rule for the weight `e^{−x}` on `[0, ∞)`.
pub fn gauss_laguerre(n: usize) -> Arc<GaussRule> {
    cached(1, n, || {
        let diag = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
        let off = (1..n).map(|k| k as f64).collect();
        golub_welsch(diag, off, 1.0)
    })
}

const ORDERS: [usize; 6] = [8, 16, 32, 64, 128, 256];

/// Applies `rule(n)` with `n` doubling until successive estimates agree.
/// Returns `None` when the sequence has not settled at the largest order.
fn doubling<T: Real>(
    rule: fn(usize) -> Arc<GaussRule>,
    eval: impl Fn(&GaussRule) -> (T, T),
    cfg: &QuadConfig,
) -> Option<T> {
    let mut prev: Option<T> = None;
    for &n in &ORDERS {
        let (value, abs_value) = eval(&rule(n));
        if !value.is_finite() {
            return None;
        }
        if let Some(p) = prev {
            if (value - p).abs() <= cfg.target(value, abs_value) {
                return Some(value);
            }
        }
        prev = Some(value);
    }
    None
}

/// `E[f(Y)]` for `Y ~ N(mean, var)` by Gauss–Hermite with order doubling.
pub fn gaussian_expectation<T: Real, F: Fn(T) -> T>(
    f: F,
    mean: T,
    var: T,
    cfg: &QuadConfig,
) -> Option<T> {
    let s = (T::lit(2.0) * var).sqrt();
    let norm = T::one() / T::PI().sqrt();
    doubling(
        gauss_hermite,
        |rule| {
            let mut acc = T::zero();
            let mut abs_acc = T::zero();
            for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                let v = T::lit(w) * f(mean + s * T::lit(t));
                acc = acc + v;
                abs_acc = abs_acc + v.abs();
            }
            (acc * norm, abs_acc * norm)
        },
        cfg,
    )
}

/// `∫_0^∞ f(t) e^{−rate·t} dt` by Gauss–Laguerre with order doubling.
pub fn laguerre_integral<T: Real, F: Fn(T) -> T>(f: F, rate: T, cfg: &QuadConfig) -> Option<T> {
    doubling(
        gauss_laguerre,
        |rule| {
            let mut acc = T::zero();
            let mut abs_acc = T::zero();
            for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                if w == 0.0 {
                    continue;
                }
                let v = T::lit(w) * f(T::lit(t) / rate);
                acc = acc + v;
                abs_acc = abs_acc + v.abs();
            }
            (acc / rate, abs_acc / rate)
        },
        cfg,
    )
}

/// Trapezoid rule for samples `ys` at abscissae `xs`.
pub fn trapezoid<T: Real>(xs: &[T], ys: &[T]) -> T {
    let half = T::lit(0.5);
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| half * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}
