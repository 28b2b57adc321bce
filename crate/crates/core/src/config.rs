//! TOML model configuration.
//!
//! ```toml
//! horizon = 1.0
//! dimension = 1
//! yield_transform = "exp"        # "none" (default) or "exp"
//!
//! [quadrature]                   # optional
//! abs_tol = 1e-12
//! rel_tol = 1e-10
//!
//! [[segments]]
//! t_start = 0.0
//! t_end = 1.0
//! b_kind = "zero"                # "trunc" (default): b^{[1]}; "zero": b^{[0]}
//! b = [0.2]
//! c = [[0.04]]
//! jumps = { family = "gaussian", mean = 0.0, variance = 0.01, rate = 1.0 }
//!
//! [[atoms]]
//! time = 1.0
//! points = [[-0.5], [0.5]]
//! masses = [0.5, 0.5]
//! activity = 1.0                 # optional, original ΔA for rate readouts
//! ```
//!
//! Jump families: `none`, `atoms {points, masses}`, `gaussian {mean, variance,
//! rate}`, `exp_tails {c_minus, a, c_plus, b}`, `tabulated {x, density, rule =
//! "trapezoid"}` and `mapped {base, steps}` with steps `{kind = "exp_m1"}` or
//! `{kind = "scale", factor}`. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MmvError, Result};
use crate::model::{
    exp_transform, JumpAtom, JumpMeasure, LocalCharacteristics, MarketModel, Segment, SeriesInfo,
    TransformStep,
};
use crate::quadrature::QuadConfig;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    pub dimension: usize,
    #[serde(default)]
    pub yield_transform: YieldTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesConfig>,
    #[serde(default)]
    pub segments: Vec<SegmentConfig>,
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YieldTransform {
    #[default]
    None,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub terms: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    #[default]
    Trunc,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub b_kind: DriftKind,
    pub b: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    #[serde(default = "JumpConfig::none")]
    pub jumps: JumpConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpConfig {
    None,
    Atoms {
        points: Vec<Vec<f64>>,
        masses: Vec<f64>,
    },
    Gaussian {
        mean: f64,
        variance: f64,
        rate: f64,
    },
    ExpTails {
        c_minus: f64,
        a: f64,
        c_plus: f64,
        b: f64,
    },
    Tabulated {
        x: Vec<f64>,
        density: Vec<f64>,
        #[serde(default = "default_rule")]
        rule: String,
    },
    Mapped {
        base: Box<JumpConfig>,
        steps: Vec<StepConfig>,
    },
}

fn default_rule() -> String {
    "trapezoid".into()
}

impl JumpConfig {
    fn none() -> Self {
        JumpConfig::None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepConfig {
    ExpM1,
    Scale { factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub time: f64,
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    #[serde(default = "one")]
    pub activity: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| MmvError::Schema(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MmvError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MmvError::Schema(e.to_string()))
    }

    pub fn quad(&self) -> QuadConfig {
        match self.quadrature {
            Some(q) => QuadConfig::with_tolerance(q.abs_tol, q.rel_tol),
            None => QuadConfig::default(),
        }
    }

    /// Canonical configuration of a model: truncated drifts, no transform,
    /// transformed densities written as `mapped`.
    pub fn from_model(model: &MarketModel<f64>) -> Self {
        let quad = model
            .segments
            .first()
            .map(|s| s.chars.quad)
            .or_else(|| model.atoms.first().map(|a| a.chars.quad))
            .unwrap_or_default();
        let d = model.dimension;
        ModelConfig {
            horizon: model.horizon,
            dimension: d,
            yield_transform: YieldTransform::None,
            quadrature: (quad != QuadConfig::default()).then_some(QuadratureConfig {
                abs_tol: quad.abs_tol,
                rel_tol: quad.rel_tol,
            }),
            series: model.series.map(|s| SeriesConfig { terms: s.terms }),
            segments: model
                .segments
                .iter()
                .map(|s| SegmentConfig {
                    t_start: s.t_start,
                    t_end: s.t_end,
                    b_kind: DriftKind::Trunc,
                    b: s.chars.b_trunc.clone(),
                    c: s.chars.c.chunks(d).map(|r| r.to_vec()).collect(),
                    jumps: JumpConfig::from_measure(&s.chars.jumps),
                })
                .collect(),
            atoms: model
                .atoms
                .iter()
                .map(|a| {
                    let (points, masses) = a.law();
                    AtomConfig {
                        time: a.time,
                        points: points.to_vec(),
                        masses: masses.to_vec(),
                        activity: a.activity,
                    }
                })
                .collect(),
        }
    }
}

impl JumpConfig {
    pub fn from_measure(j: &JumpMeasure<f64>) -> Self {
        match j {
            JumpMeasure::FiniteAtoms { points, masses, .. } if points.is_empty() => JumpConfig::None,
            JumpMeasure::FiniteAtoms { points, masses, .. } => JumpConfig::Atoms {
                points: points.clone(),
                masses: masses.clone(),
            },
            &JumpMeasure::Gaussian1D { mean, variance, rate } => JumpConfig::Gaussian { mean, variance, rate },
            &JumpMeasure::ExpTails1D { c_minus, a, c_plus, b } => JumpConfig::ExpTails { c_minus, a, c_plus, b },
            JumpMeasure::Tabulated1D { x, density } => JumpConfig::Tabulated {
                x: x.clone(),
                density: density.clone(),
                rule: default_rule(),
            },
            JumpMeasure::Mapped { base, steps } => JumpConfig::Mapped {
                base: Box::new(JumpConfig::from_measure(base)),
                steps: steps
                    .iter()
                    .map(|s| match *s {
                        TransformStep::ExpMinusOne => StepConfig::ExpM1,
                        TransformStep::Scale(factor) => StepConfig::Scale { factor },
                    })
                    .collect(),
            },
        }
    }

    fn build<T: Real>(&self, d: usize) -> Result<JumpMeasure<T>> {
        let v = |xs: &[f64]| xs.iter().map(|x| T::lit(*x)).collect::<Vec<T>>();
        let one_d = |name: &str| {
            if d == 1 {
                Ok(())
            } else {
                Err(MmvError::Schema(format!("jump family `{name}` needs dimension 1")))
            }
        };
        let m = match self {
            JumpConfig::None => JumpMeasure::none(d),
            JumpConfig::Atoms { points, masses } => {
                if points.iter().any(|p| p.len() != d) {
                    return Err(MmvError::Schema(format!("jump points must have {d} coordinates")));
                }
                JumpMeasure::FiniteAtoms {
                    dim: d,
                    points: points.iter().map(|p| v(p)).collect(),
                    masses: v(masses),
                }
            }
            &JumpConfig::Gaussian { mean, variance, rate } => {
                one_d("gaussian")?;
                JumpMeasure::Gaussian1D {
                    mean: T::lit(mean),
                    variance: T::lit(variance),
                    rate: T::lit(rate),
                }
            }
            &JumpConfig::ExpTails { c_minus, a, c_plus, b } => {
                one_d("exp_tails")?;
                JumpMeasure::ExpTails1D {
                    c_minus: T::lit(c_minus),
                    a: T::lit(a),
                    c_plus: T::lit(c_plus),
                    b: T::lit(b),
                }
            }
            JumpConfig::Tabulated { x, density, rule } => {
                one_d("tabulated")?;
                if rule != "trapezoid" {
                    return Err(MmvError::Schema(format!(
                        "unknown quadrature rule `{rule}`; only `trapezoid` is supported"
                    )));
                }
                JumpMeasure::Tabulated1D {
                    x: v(x),
                    density: v(density),
                }
            }
            JumpConfig::Mapped { base, steps } => {
                one_d("mapped")?;
                let steps = steps
                    .iter()
                    .map(|s| match *s {
                        StepConfig::ExpM1 => TransformStep::ExpMinusOne,
                        StepConfig::Scale { factor } => TransformStep::Scale(T::lit(factor)),
                    })
                    .collect::<Vec<_>>();
                base.build::<T>(1)?.map_1d(&steps)?
            }
        };
        m.validate()?;
        Ok(m)
    }
}

/// Builds and validates a model; `yield_transform = "exp"` maps every segment
/// through `exp_transform` and every atom point through `e^x − 1`.
pub fn build_model<T: Real>(cfg: &ModelConfig) -> Result<MarketModel<T>> {
    let d = cfg.dimension;
    if d == 0 || d > crate::model::MAX_DIMENSION {
        return Err(MmvError::Schema(format!(
            "dimension {d} outside 1..={}",
            crate::model::MAX_DIMENSION
        )));
    }
    let quad = cfg.quad();
    let lit = |x: f64| T::lit(x);
    let mut segments = Vec::with_capacity(cfg.segments.len());
    for s in &cfg.segments {
        if s.b.len() != d || s.c.len() != d || s.c.iter().any(|r| r.len() != d) {
            return Err(MmvError::Schema(format!(
                "segment [{}, {}): b must have {d} entries and c must be {d}×{d}",
                s.t_start, s.t_end
            )));
        }
        let b: Vec<T> = s.b.iter().map(|x| lit(*x)).collect();
        let c: Vec<T> = s.c.iter().flatten().map(|x| lit(*x)).collect();
        let jumps = s.jumps.build::<T>(d)?;
        let mut chars = match s.b_kind {
            DriftKind::Trunc => LocalCharacteristics::with_quad(b, c, jumps, quad)?,
            DriftKind::Zero => LocalCharacteristics::from_zero_drift(b, c, jumps, quad)?,
        };
        if cfg.yield_transform == YieldTransform::Exp {
            chars = exp_transform(&chars)?;
        }
        segments.push(Segment {
            t_start: lit(s.t_start),
            t_end: lit(s.t_end),
            chars,
        });
    }
    let mut atoms = Vec::with_capacity(cfg.atoms.len());
    for a in &cfg.atoms {
        if a.points.iter().any(|p| p.len() != d) {
            return Err(MmvError::Schema(format!(
                "atom at {}: points must have {d} coordinates",
                a.time
            )));
        }
        if !(a.activity > 0.0) {
            return Err(MmvError::Invariant(format!("atom at {}: activity must be positive", a.time)));
        }
        let points: Vec<Vec<T>> = a
            .points
            .iter()
            .map(|p| {
                p.iter()
                    .map(|x| match cfg.yield_transform {
                        YieldTransform::None => lit(*x),
                        YieldTransform::Exp => lit(x.exp_m1()),
                    })
                    .collect()
            })
            .collect();
        let masses = a.masses.iter().map(|x| lit(*x)).collect();
        let mut atom = JumpAtom::new(lit(a.time), points, masses, d)?;
        atom.chars = atom.chars.with_quad_config(quad)?;
        atom.activity = lit(a.activity);
        atoms.push(atom);
    }
    let mut model = MarketModel::new(lit(cfg.horizon), d, segments, atoms)?;
    model.series = cfg.series.map(|s| SeriesInfo { terms: s.terms });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX2: &str = r#"
horizon = 1.0
dimension = 1
yield_transform = "exp"

[[segments]]
t_start = 0.0
t_end = 1.0
b_kind = "zero"
b = [0.2]
c = [[0.04]]
jumps = { family = "gaussian", mean = 0.0, variance = 0.01, rate = 1.0 }
"#;

    #[test]
    fn builds_and_round_trips() {
        let cfg = ModelConfig::from_toml_str(EX2).unwrap();
        let m = build_model::<f64>(&cfg).unwrap();
        let b = m.segments[0].chars.net_drift()[0];
        assert!((b - 0.22).abs() < 1e-12, "{b}");
        let canon = ModelConfig::from_model(&m);
        let text = canon.to_toml_string().unwrap();
        let again = build_model::<f64>(&ModelConfig::from_toml_str(&text).unwrap()).unwrap();
        assert_eq!(again, m);
        assert_eq!(ModelConfig::from_model(&again), canon);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = EX2.replace("rate = 1.0", "rate = 1.0, skew = 2.0");
        assert!(matches!(ModelConfig::from_toml_str(&bad), Err(MmvError::Schema(_))));
        let bad = format!("{EX2}\ncolour = 3\n");
        assert!(matches!(ModelConfig::from_toml_str(&bad), Err(MmvError::Schema(_))));
        let bad = EX2.replace("horizon = 1.0\n", "");
        assert!(matches!(ModelConfig::from_toml_str(&bad), Err(MmvError::Schema(_))));
    }

    #[test]
    fn rejects_negative_mass() {
        let cfg = ModelConfig::from_toml_str(
            "horizon = 1.0\ndimension = 1\n[[atoms]]\ntime = 1.0\npoints = [[1.0], [-1.0]]\nmasses = [-0.1, 0.5]\n",
        )
        .unwrap();
        assert!(matches!(build_model::<f64>(&cfg), Err(MmvError::Invariant(_))));
    }

    #[test]
    fn mapped_family_parses() {
        let cfg = ModelConfig::from_toml_str(
            r#"
horizon = 1.0
dimension = 1
[[segments]]
t_start = 0.0
t_end = 1.0
b = [0.0]
c = [[0.0]]
jumps = { family = "mapped", base = { family = "exp_tails", c_minus = 1.0, a = 4.0, c_plus = 1.0, b = 1.0 }, steps = [{ kind = "exp_m1" }, { kind = "scale", factor = 2.0 }] }
"#,
        )
        .unwrap();
        let m = build_model::<f32>(&cfg).unwrap();
        assert!(matches!(m.segments[0].chars.jumps, JumpMeasure::Mapped { .. }));
    }
}
