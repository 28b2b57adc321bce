//! Path simulation and the ceiling-CPPI wealth recursion.
//!
//! Path `i` draws from its own ChaCha stream `(seed, i)`, so estimates do not
//! depend on the number of worker threads. Jumps are sampled exactly
//! (exponential clocks, with diffusion split at the jump times); only the
//! diffusion is discretized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::aggregate::{cumulative_local_utility, det_stoch_exponential, global_values, Schedule};
use crate::duality::zero_density_probability;
use crate::error::{MmvError, Result};
use crate::linalg::cholesky_psd;
use crate::localutil::UtilityKind;
use crate::model::{apply_steps, JumpMeasure, LocalCharacteristics, MarketModel};
use crate::scalar::{dot, Real};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "MMVLAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Diffusion steps per segment.
    pub n_steps: usize,
    pub seed: u64,
    /// Pairs paths `2k, 2k+1` with negated diffusion normals.
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 100_000,
            n_steps: 2000,
            seed: 1,
            antithetic: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(MmvError::Domain("paths and steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathStats<T> {
    pub estimate: T,
    pub std_error: T,
    pub n: usize,
}

impl<T: Real> PathStats<T> {
    /// `|estimate − target| ≤ k·std_error`.
    pub fn within(&self, target: T, k: T) -> bool {
        (self.estimate - target).abs() <= k * self.std_error
    }
}

/// Sample mean and standard error.
pub fn estimate_stats<T: Real>(values: &[T]) -> PathStats<T> {
    let n = values.len();
    let nt = T::from_usize_(n);
    let mean = values.iter().copied().sum::<T>() / nt;
    let var = if n > 1 {
        values.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / (nt - T::one())
    } else {
        T::zero()
    };
    PathStats {
        estimate: mean,
        std_error: (var / nt).sqrt(),
        n,
    }
}

/// As [`estimate_stats`], treating consecutive antithetic pairs as one sample.
pub fn estimate_stats_paired<T: Real>(values: &[T]) -> PathStats<T> {
    let pairs: Vec<T> = values
        .chunks(2)
        .map(|c| c.iter().copied().sum::<T>() / T::from_usize_(c.len()))
        .collect();
    PathStats {
        n: values.len(),
        ..estimate_stats(&pairs)
    }
}

/// One piece of the simulation grid. `entry` indexes [`MarketModel::locations`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridEvent<T> {
    Diffuse { entry: usize, t0: T, t1: T },
    Atom { entry: usize, t: T },
}

/// Segments cut into `n_steps` pieces, split again at atom times.
pub fn time_grid<T: Real>(model: &MarketModel<T>, n_steps: usize) -> Vec<GridEvent<T>> {
    let n_seg = model.segments.len();
    let mut pending: Vec<(usize, T)> = model
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| (n_seg + i, a.time))
        .collect();
    pending.reverse();
    let mut out = Vec::new();
    for (k, s) in model.segments.iter().enumerate() {
        let h = s.length() / T::from_usize_(n_steps);
        for j in 0..n_steps {
            let t0 = s.t_start + h * T::from_usize_(j);
            let t1 = if j + 1 == n_steps { s.t_end } else { t0 + h };
            let mut a = t0;
            while let Some(&(entry, t)) = pending.last() {
                if t > t1 {
                    break;
                }
                if t > a {
                    out.push(GridEvent::Diffuse { entry: k, t0: a, t1: t });
                    a = t;
                }
                out.push(GridEvent::Atom { entry, t });
                pending.pop();
            }
            if t1 > a {
                out.push(GridEvent::Diffuse { entry: k, t0: a, t1 });
            }
        }
    }
    while let Some((entry, t)) = pending.pop() {
        out.push(GridEvent::Atom { entry, t });
    }
    out
}

/// Exact sampler for the normalized law of a finite jump measure.
#[derive(Clone, Debug)]
pub struct JumpSampler<T> {
    measure: JumpMeasure<T>,
    total: f64,
    /// Cumulative weights of atoms or tabulated cells.
    cumulative: Vec<f64>,
}

impl<T: Real> JumpSampler<T> {
    pub fn new(measure: &JumpMeasure<T>) -> Result<Self> {
        let mut cumulative = Vec::new();
        let base = match measure {
            JumpMeasure::Mapped { base, .. } => base.as_ref(),
            m => m,
        };
        match base {
            JumpMeasure::FiniteAtoms { masses, .. } => {
                let mut acc = 0.0;
                for m in masses {
                    acc += m.to_f64_();
                    cumulative.push(acc);
                }
            }
            JumpMeasure::Tabulated1D { x, density } => {
                let mut acc = 0.0;
                for k in 1..x.len() {
                    acc += 0.5 * (density[k - 1] + density[k]).to_f64_() * (x[k] - x[k - 1]).to_f64_();
                    cumulative.push(acc);
                }
            }
            JumpMeasure::Mapped { .. } => {
                return Err(MmvError::UnsupportedMeasure("nested mapped measures".into()))
            }
            _ => {}
        }
        let total = measure.total_mass().to_f64_();
        if !total.is_finite() {
            return Err(MmvError::UnsupportedMeasure(
                "simulation needs a finite jump intensity".into(),
            ));
        }
        Ok(JumpSampler {
            measure: measure.clone(),
            total,
            cumulative,
        })
    }

    /// Total mass of the measure.
    pub fn intensity(&self) -> f64 {
        self.total
    }

    fn pick(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|c| *c <= u)
            .min(self.cumulative.len().saturating_sub(1))
    }

    /// Exponential waiting time to the next jump; infinite without jumps.
    pub fn waiting_time<R: Rng>(&self, rng: &mut R) -> T {
        if self.total > 0.0 {
            T::lit(rng.sample::<f64, _>(rand_distr::Exp1) / self.total)
        } else {
            T::infinity()
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<T> {
        self.sample_from(&self.measure, rng)
    }

    fn sample_from<R: Rng>(&self, m: &JumpMeasure<T>, rng: &mut R) -> Vec<T> {
        match m {
            JumpMeasure::FiniteAtoms { points, .. } => {
                let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(0.0);
                points[self.pick(u)].clone()
            }
            JumpMeasure::Gaussian1D { mean, variance, .. } => {
                let z: f64 = rng.sample(StandardNormal);
                vec![*mean + variance.sqrt() * T::lit(z)]
            }
            JumpMeasure::ExpTails1D { c_minus, a, c_plus, b } => {
                let wm = (*c_minus / *a).to_f64_();
                let wp = (*c_plus / *b).to_f64_();
                let left = rng.random::<f64>() * (wm + wp) < wm;
                let rate = if left { a.to_f64_() } else { b.to_f64_() };
                let e: f64 = Exp::new(rate).expect("positive rate").sample(rng);
                vec![T::lit(if left { -e } else { e })]
            }
            JumpMeasure::Tabulated1D { x, density } => {
                let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(0.0);
                let k = self.pick(u);
                let (x0, x1) = (x[k].to_f64_(), x[k + 1].to_f64_());
                let (f0, f1) = (density[k].to_f64_(), density[k + 1].to_f64_());
                let w = x1 - x0;
                let v: f64 = rng.random();
                // Invert the CDF of a linear density on [x0, x1].
                let s = if (f1 - f0).abs() <= 1e-14 * (f0 + f1) {
                    v
                } else {
                    let a = 0.5 * (f1 - f0);
                    let mass = 0.5 * (f0 + f1);
                    (-f0 + (f0 * f0 + 4.0 * a * v * mass).sqrt()) / (2.0 * a)
                };
                vec![T::lit(x0 + s * w)]
            }
            JumpMeasure::Mapped { base, steps } => {
                let y = self.sample_from(base, rng)[0];
                vec![apply_steps(steps, y)]
            }
        }
    }
}

struct SegmentSampler<T> {
    drift: Vec<T>,
    chol: Vec<T>,
    diffusive: bool,
    jumps: JumpSampler<T>,
}

impl<T: Real> SegmentSampler<T> {
    fn new(ch: &LocalCharacteristics<T>) -> Result<Self> {
        let d = ch.dim();
        let chol = cholesky_psd(&ch.c, d);
        Ok(SegmentSampler {
            drift: ch.net_drift(),
            diffusive: chol.iter().any(|v| *v != T::zero()),
            chol,
            jumps: JumpSampler::new(&ch.jumps)?,
        })
    }
}

/// One increment of `R` and the schedule entry whose `λ̂` applies to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Increment<T> {
    pub t: T,
    pub entry: usize,
    pub dr: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Path<T> {
    pub increments: Vec<Increment<T>>,
}

impl<T: Real> Path<T> {
    pub fn terminal(&self, d: usize) -> Vec<T> {
        let mut r = vec![T::zero(); d];
        for inc in &self.increments {
            for i in 0..d {
                r[i] = r[i] + inc.dr[i];
            }
        }
        r
    }
}

/// Simulator for a fixed model and configuration.
pub struct Simulator<'a, T> {
    model: &'a MarketModel<T>,
    sim: SimConfig,
    grid: Vec<GridEvent<T>>,
    segments: Vec<SegmentSampler<T>>,
    atoms: Vec<JumpSampler<T>>,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(model: &'a MarketModel<T>, sim: SimConfig) -> Result<Self> {
        sim.validate()?;
        Ok(Simulator {
            model,
            sim,
            grid: time_grid(model, sim.n_steps),
            segments: model
                .segments
                .iter()
                .map(|s| SegmentSampler::new(&s.chars))
                .collect::<Result<_>>()?,
            atoms: model
                .atoms
                .iter()
                .map(|a| JumpSampler::new(&a.chars.jumps))
                .collect::<Result<_>>()?,
        })
    }

    pub fn config(&self) -> SimConfig {
        self.sim
    }

    fn rng(&self, path: usize) -> (ChaCha8Rng, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.sim.seed);
        let (stream, sign) = if self.sim.antithetic {
            (path / 2, if path % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (path, 1.0)
        };
        rng.set_stream(stream as u64);
        (rng, sign)
    }

    pub fn path(&self, index: usize) -> Path<T> {
        let mut increments = Vec::with_capacity(self.grid.len());
        self.visit(index, |t, entry, dr| {
            increments.push(Increment { t, entry, dr: dr.to_vec() })
        });
        Path { increments }
    }

    /// Generates path `index` without storing it, calling `f(t, entry, ΔR)`
    /// for each increment in time order.
    pub fn visit(&self, index: usize, mut f: impl FnMut(T, usize, &[T])) {
        let d = self.model.dimension;
        let (mut rng, sign) = self.rng(index);
        let n_seg = self.segments.len();
        let mut dr = vec![T::zero(); d];
        let mut z = vec![T::zero(); d];
        // Next jump time of the current segment's compound Poisson clock.
        let mut clock = (usize::MAX, T::zero());
        for ev in &self.grid {
            match *ev {
                GridEvent::Diffuse { entry, t0, t1 } => {
                    let s = &self.segments[entry];
                    if clock.0 != entry {
                        clock = (entry, t0 + s.jumps.waiting_time(&mut rng));
                    }
                    let mut a = t0;
                    loop {
                        let jump = clock.1 < t1;
                        let tj = if jump { clock.1.max(a) } else { t1 };
                        let h = tj - a;
                        for (r, b) in dr.iter_mut().zip(&s.drift) {
                            *r = *b * h;
                        }
                        if s.diffusive {
                            for zi in z.iter_mut() {
                                *zi = T::lit(sign * rng.sample::<f64, _>(StandardNormal));
                            }
                            let sq = h.sqrt();
                            for i in 0..d {
                                let lz: T = (0..=i).map(|k| s.chol[i * d + k] * z[k]).sum();
                                dr[i] = dr[i] + sq * lz;
                            }
                        }
                        f(tj, entry, &dr);
                        if !jump {
                            break;
                        }
                        f(tj, entry, &s.jumps.sample(&mut rng));
                        clock.1 = tj + s.jumps.waiting_time(&mut rng);
                        a = tj;
                    }
                }
                GridEvent::Atom { entry, t } => {
                    let j = &self.atoms[entry - n_seg];
                    let u: f64 = rng.random();
                    if u < j.intensity() {
                        f(t, entry, &j.sample(&mut rng));
                    } else {
                        dr.iter_mut().for_each(|r| *r = T::zero());
                        f(t, entry, &dr);
                    }
                }
            }
        }
    }
}

/// All paths, in index order.
pub fn simulate_paths<T: Real>(model: &MarketModel<T>, sim: SimConfig) -> Result<Vec<Path<T>>> {
    let s = Simulator::new(model, sim)?;
    Ok((0..sim.n_paths).into_par_iter().map(|i| s.path(i)).collect())
}

/// Runs `f` on every stored path in parallel; results come back in index order.
pub fn evaluate_paths<T: Real, V: Send>(
    model: &MarketModel<T>,
    sim: SimConfig,
    f: impl Fn(usize, &Path<T>) -> V + Sync + Send,
) -> Result<Vec<V>> {
    let s = Simulator::new(model, sim)?;
    Ok(with_thread_pool(|| {
        (0..sim.n_paths)
            .into_par_iter()
            .map(|i| f(i, &s.path(i)))
            .collect()
    }))
}

/// Streaming variant of [`evaluate_paths`]: `f` receives the simulator and the
/// path index and typically drives [`Simulator::visit`].
pub fn evaluate_streamed<T: Real, V: Send>(
    model: &MarketModel<T>,
    sim: SimConfig,
    f: impl Fn(&Simulator<'_, T>, usize) -> V + Sync + Send,
) -> Result<Vec<V>> {
    let s = Simulator::new(model, sim)?;
    Ok(with_thread_pool(|| {
        (0..sim.n_paths).into_par_iter().map(|i| f(&s, i)).collect()
    }))
}

/// Runs `f` on a pool capped by `MMVLAB_THREADS` when set.
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0);
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Running ceiling-CPPI wealth `W ← W + λ̂·(gap − (W − x))⁺·ΔR` (MV drops the
/// positive part) together with the discrete exponential `∏(1 − (λ̂ΔR)∧1)`
/// (`∏(1 − λ̂ΔR)` for MV).
#[derive(Clone, Debug)]
pub struct WealthTracker<'s, T> {
    schedule: &'s Schedule<T>,
    x: T,
    gap: T,
    pub wealth: T,
    pub exponential: T,
}

impl<'s, T: Real> WealthTracker<'s, T> {
    pub fn new(schedule: &'s Schedule<T>, x: T, gap: T) -> Self {
        WealthTracker {
            schedule,
            x,
            gap,
            wealth: x,
            exponential: T::one(),
        }
    }

    pub fn step(&mut self, entry: usize, dr: &[T]) {
        let z = dot(&self.schedule.entries[entry].optimum.lambda_hat, dr);
        let room = self.gap - (self.wealth - self.x);
        let (room, zc) = match self.schedule.kind {
            UtilityKind::Mmv => (room.max(T::zero()), z.min(T::one())),
            UtilityKind::Mv => (room, z),
        };
        if room != T::zero() {
            self.wealth = self.wealth + room * z;
        }
        self.exponential = self.exponential * (T::one() - zc);
    }
}

/// Wealth after every increment of `path`.
pub fn wealth_recursion<T: Real>(path: &Path<T>, schedule: &Schedule<T>, x: T, gap: T) -> Vec<T> {
    let mut w = WealthTracker::new(schedule, x, gap);
    path.increments
        .iter()
        .map(|inc| {
            w.step(inc.entry, &inc.dr);
            w.wealth
        })
        .collect()
}

pub fn terminal_wealth<T: Real>(path: &Path<T>, schedule: &Schedule<T>, x: T, gap: T) -> T {
    let mut w = WealthTracker::new(schedule, x, gap);
    for inc in &path.increments {
        w.step(inc.entry, &inc.dr);
    }
    w.wealth
}

pub fn discrete_exponential<T: Real>(path: &Path<T>, schedule: &Schedule<T>) -> T {
    let mut w = WealthTracker::new(schedule, T::zero(), T::one());
    for inc in &path.increments {
        w.step(inc.entry, &inc.dr);
    }
    w.exponential
}

/// A Monte Carlo estimate with its analytic counterpart, when one exists.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional<T> {
    pub name: &'static str,
    pub stats: PathStats<T>,
    pub analytic: Option<T>,
}

/// Simulates the normalized optimal wealths (`x = 0`, bliss 1) of both
/// utilities on common paths and estimates
/// `E[W^MV]`, `E[(W^MV)²]`, `P[W ≥ 1]`, `E[g_MMV(W)]`, `E[Z]`, `E[Z²]`, with
/// `Z = (1 − W)⁺ / E(−2𝔤·A)_T`. MV functionals are dropped when the MV value
/// is infinite.
pub fn wealth_study<T: Real>(model: &MarketModel<T>, sim: SimConfig) -> Result<Vec<Functional<T>>> {
    let (smm, cmm) = cumulative_local_utility(model, UtilityKind::Mmv)?;
    let gmm = global_values(&cmm);
    if !gmm.finite {
        return Err(MmvError::InfiniteValue(
            "the MMV value is infinite; no optimal wealth to simulate".into(),
        ));
    }
    let mv = cumulative_local_utility(model, UtilityKind::Mv)
        .ok()
        .map(|(s, c)| (s, global_values(&c)))
        .filter(|(_, g)| g.finite);
    let e = det_stoch_exponential(&cmm, -T::one());
    let p_zero = zero_density_probability(model, &smm)?;
    let rows = evaluate_streamed(model, sim, |s, i| {
        let mut a = WealthTracker::new(&smm, T::zero(), T::one());
        let mut b = mv
            .as_ref()
            .map(|(smv, _)| WealthTracker::new(smv, T::zero(), T::one()));
        s.visit(i, |_, k, dr| {
            a.step(k, dr);
            if let Some(b) = b.as_mut() {
                b.step(k, dr);
            }
        });
        let w = a.wealth;
        let z = (T::one() - w).max(T::zero()) / e;
        let hit = if w >= T::one() { T::one() } else { T::zero() };
        let wmv = b.map_or(T::zero(), |b| b.wealth);
        [wmv, wmv * wmv, hit, UtilityKind::Mmv.g(w.min(T::one())), z, z * z]
    })?;
    let stats = |k: usize| {
        let col: Vec<T> = rows.iter().map(|r| r[k]).collect();
        if sim.antithetic {
            estimate_stats_paired(&col)
        } else {
            estimate_stats(&col)
        }
    };
    let mut out = Vec::new();
    if let Some((_, g)) = &mv {
        out.push(Functional { name: "E[W_MV]", stats: stats(0), analytic: Some(g.mhr2) });
        out.push(Functional { name: "E[W_MV^2]", stats: stats(1), analytic: Some(g.mhr2) });
    }
    out.push(Functional { name: "P[W >= 1]", stats: stats(2), analytic: Some(p_zero) });
    out.push(Functional { name: "E[g_MMV(W)]", stats: stats(3), analytic: Some(gmm.u0) });
    out.push(Functional { name: "E[Z]", stats: stats(4), analytic: Some(T::one()) });
    out.push(Functional {
        name: "E[Z^2]",
        stats: stats(5),
        analytic: Some(T::one() + T::lit(2.0) * gmm.v0),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::cumulative_local_utility;
    use crate::catalog;

    #[test]
    fn grid_interleaves_atoms() {
        let m = catalog::example::<f64>(1, None).unwrap();
        assert_eq!(time_grid(&m, 10), vec![GridEvent::Atom { entry: 0, t: 1.0 }]);
        let m = catalog::example::<f64>(2, None).unwrap();
        assert_eq!(time_grid(&m, 4).len(), 4);
    }

    #[test]
    fn zero_model_has_zero_increments() {
        let m = crate::config::build_model::<f64>(
            &crate::config::ModelConfig::from_toml_str(catalog::ZERO_MODEL).unwrap(),
        )
        .unwrap();
        let sim = SimConfig { n_paths: 3, n_steps: 5, seed: 7, antithetic: false };
        for p in simulate_paths(&m, sim).unwrap() {
            assert_eq!(p.increments.len(), 5);
            assert!(p.increments.iter().all(|i| i.dr == vec![0.0]));
        }
    }

    #[test]
    fn pathwise_identity_and_zero_strategy() {
        let m = catalog::example::<f64>(2, None).unwrap();
        let (s, _) = cumulative_local_utility(&m, UtilityKind::Mmv).unwrap();
        let sim = SimConfig { n_paths: 50, n_steps: 200, seed: 3, antithetic: true };
        for p in simulate_paths(&m, sim).unwrap() {
            let w = terminal_wealth(&p, &s, 0.0, 1.0);
            let e = discrete_exponential(&p, &s);
            assert!(((1.0 - w).max(0.0) - e).abs() < 1e-12);
        }
        let mut zero = s.clone();
        zero.entries[0].optimum.lambda_hat = vec![0.0];
        let p = Simulator::new(&m, sim).unwrap().path(0);
        assert!(wealth_recursion(&p, &zero, 0.25, 1.0).iter().all(|w| *w == 0.25));
    }

    #[test]
    fn antithetic_pairs_share_jumps() {
        let m = catalog::example::<f64>(2, None).unwrap();
        let sim = SimConfig { n_paths: 2, n_steps: 50, seed: 11, antithetic: true };
        let s = Simulator::new(&m, sim).unwrap();
        let (a, b) = (s.path(0), s.path(1));
        assert_eq!(a.increments.len(), b.increments.len());
    }

    #[test]
    fn stats() {
        let s = estimate_stats(&[2.0, 2.0, 2.0]);
        assert_eq!((s.estimate, s.std_error, s.n), (2.0, 0.0, 3));
        let s = estimate_stats_paired(&[1.0, 3.0, 2.0, 2.0]);
        assert_eq!((s.estimate, s.std_error, s.n), (2.0, 0.0, 4));
    }
}
