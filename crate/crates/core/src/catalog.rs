//! Worked example models. Examples 1–4 ship as TOML files; the series
//! examples 5 and 6 are generated for a chosen number of atoms.

use crate::config::{build_model, ModelConfig};
use crate::error::{MmvError, Result};
use crate::model::{JumpAtom, MarketModel, SeriesInfo};
use crate::scalar::Real;

pub const EXAMPLE1: &str = include_str!("../data/example1.toml");
pub const EXAMPLE2: &str = include_str!("../data/example2.toml");
pub const EXAMPLE3: &str = include_str!("../data/example3.toml");
pub const EXAMPLE4: &str = include_str!("../data/example4.toml");
pub const ZERO_MODEL: &str = include_str!("../data/zero.toml");

/// Default truncation indices for the series examples.
pub const EXAMPLE5_ATOMS: usize = 10_000;
pub const EXAMPLE6_ATOMS: usize = 1_000;

pub fn example_config(id: u32) -> Option<&'static str> {
    match id {
        1 => Some(EXAMPLE1),
        2 => Some(EXAMPLE2),
        3 => Some(EXAMPLE3),
        4 => Some(EXAMPLE4),
        _ => None,
    }
}

/// Example `id` in `1..=6`; `atoms` truncates the series examples.
pub fn example<T: Real>(id: u32, atoms: Option<usize>) -> Result<MarketModel<T>> {
    match id {
        1..=4 => build_model(&ModelConfig::from_toml_str(example_config(id).unwrap())?),
        5 => example5(atoms.unwrap_or(EXAMPLE5_ATOMS)),
        6 => example6(atoms.unwrap_or(EXAMPLE6_ATOMS)),
        _ => Err(MmvError::Schema(format!("no example {id}; choose 1 to 6"))),
    }
}

fn series_times<T: Real>(n: usize) -> (T, T) {
    let nt = T::from_usize_(n);
    (T::lit(2.0) - T::one() / nt, T::one() / (nt * nt))
}

/// Atoms at `τ_n = 2 − 1/n` with `X_n ∈ {−1/n³, 1/n², 1}` of probabilities
/// `½ − 1/(4n²), ½, 1/(4n²)` and original activity `1/n²`.
pub fn example5<T: Real>(terms: usize) -> Result<MarketModel<T>> {
    let mut atoms = Vec::with_capacity(terms);
    for n in 1..=terms {
        let nt = T::from_usize_(n);
        let n2 = nt * nt;
        let (time, activity) = series_times::<T>(n);
        let quarter = T::one() / (T::lit(4.0) * n2);
        let points = vec![vec![-T::one() / (n2 * nt)], vec![T::one() / n2], vec![T::one()]];
        let masses = vec![T::lit(0.5) - quarter, T::lit(0.5), quarter];
        let mut atom = JumpAtom::new(time, points, masses, 1)?;
        atom.activity = activity;
        atoms.push(atom);
    }
    series_model(atoms, terms)
}

/// Atoms at `τ_n`, `n ≥ 2`, with `X_n ∈ {−(n+1)/(n³+1), (n³−n)/(n³+1)}` of
/// probabilities `n³/(n³+1), 1/(n³+1)`.
pub fn example6<T: Real>(terms: usize) -> Result<MarketModel<T>> {
    let mut atoms = Vec::with_capacity(terms);
    for n in 2..=terms.max(1) + 1 {
        let nt = T::from_usize_(n);
        let n3 = nt * nt * nt;
        let k = n3 + T::one();
        let (time, activity) = series_times::<T>(n);
        let points = vec![vec![-(nt + T::one()) / k], vec![(n3 - nt) / k]];
        let masses = vec![n3 / k, T::one() / k];
        let mut atom = JumpAtom::new(time, points, masses, 1)?;
        atom.activity = activity;
        atoms.push(atom);
    }
    series_model(atoms, terms)
}

fn series_model<T: Real>(atoms: Vec<JumpAtom<T>>, terms: usize) -> Result<MarketModel<T>> {
    let mut m = MarketModel::new(T::lit(2.0), 1, Vec::new(), atoms)?;
    m.series = Some(SeriesInfo { terms });
    Ok(m)
}
