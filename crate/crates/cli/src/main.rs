//! `mmvlab`: solve, simulate and diagnose MV and MMV portfolio problems, and
//! reproduce the worked examples.

mod output;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use mmvlab_core::aggregate::{cumulative_local_utility, global_values, strategy_descriptor};
use mmvlab_core::config::{build_model, ModelConfig, QuadratureConfig};
use mmvlab_core::duality::{compare_mv_mmv, density_diagnostics, is_square_integrable, mv_signed_measure};
use mmvlab_core::localutil::{check_instantaneous_no_arbitrage, NaMethod};
use mmvlab_core::model::Location;
use mmvlab_core::montecarlo::{wealth_study, SimConfig, Simulator, WealthTracker};
use mmvlab_core::reproduce::{reproduce, ExampleReport, ReproduceOptions, Status};
use mmvlab_core::{catalog, MmvError, Model, Schedule, UtilityKind};

use output::{analytic, float, floats, heuristic, mc, render, Format};

/// Paths kept in text output before a long list is elided.
const TEXT_LIST_LIMIT: usize = 12;

#[derive(Parser, Debug)]
#[command(name = "mmvlab", version, about = "Monotone mean-variance portfolio toolkit")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Absolute and relative quadrature tolerance.
    #[arg(long, global = true)]
    tol_quad: Option<f64>,
    /// Truncation index for the series examples 5 and 6.
    #[arg(long, global = true)]
    atoms_max: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal schedule, values and strategy.
    Solve {
        /// TOML model file, or a built-in name (`zero_model`, `example1`..`example6`).
        config: String,
        #[arg(long, value_enum, default_value = "mmv")]
        kind: Kind,
        /// Initial wealth.
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        /// Risk aversion.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Monte Carlo study of the optimal wealths.
    Simulate {
        config: String,
        #[command(flatten)]
        sim: SimArgs,
        /// Write `path,step,t,R,W` rows of the MMV wealth to this CSV file.
        #[arg(long)]
        dump_paths: Option<PathBuf>,
        /// Number of paths written by `--dump-paths`.
        #[arg(long, default_value_t = 100)]
        dump_count: usize,
    },
    /// No-arbitrage, density and MV/MMV comparison diagnostics.
    Diagnose { config: String },
    /// Reproduce a worked example, or all six.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=6))]
        example: Option<u32>,
        /// Paths for the example 2 Monte Carlo cross-check; 0 skips it.
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Quick analytic reproduction of every example.
    Selftest,
}

#[derive(Args, Debug, Clone, Copy)]
struct SimArgs {
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 20240101)]
    seed: u64,
    #[arg(long)]
    antithetic: bool,
}

impl SimArgs {
    fn config(self) -> SimConfig {
        SimConfig {
            n_paths: self.paths,
            n_steps: self.steps,
            seed: self.seed,
            antithetic: self.antithetic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Mv,
    Mmv,
}

impl From<Kind> for UtilityKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Mv => UtilityKind::Mv,
            Kind::Mmv => UtilityKind::Mmv,
        }
    }
}

enum Failure {
    Usage(String),
    Compute(String),
}

impl From<MmvError> for Failure {
    fn from(e: MmvError) -> Self {
        match e {
            MmvError::Schema(_) => Failure::Usage(e.to_string()),
            _ => Failure::Compute(e.to_string()),
        }
    }
}

/// A finished report, and whether any check inside it failed.
struct Outcome {
    report: Value,
    failed: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(o) => {
            if let Err(e) = emit(&cli, &o.report) {
                eprintln!("mmvlab: {e}");
                return ExitCode::from(2);
            }
            ExitCode::from(if o.failed { 1 } else { 0 })
        }
        Err(Failure::Usage(m)) => {
            eprintln!("mmvlab: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("mmvlab: {m}");
            ExitCode::from(1)
        }
    }
}

fn emit(cli: &Cli, report: &Value) -> std::io::Result<()> {
    let report = if cli.format == Format::Text {
        elide(report)
    } else {
        report.clone()
    };
    let text = render(&report, cli.format);
    match &cli.out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

/// Shortens long lists for text output.
fn elide(v: &Value) -> Value {
    match v {
        Value::Array(a) if a.len() > TEXT_LIST_LIMIT => {
            let mut out: Vec<Value> = a[..TEXT_LIST_LIMIT].iter().map(elide).collect();
            out.push(json!(format!("... {} more", a.len() - TEXT_LIST_LIMIT)));
            Value::Array(out)
        }
        Value::Array(a) => Value::Array(a.iter().map(elide).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), elide(v))).collect()),
        other => other.clone(),
    }
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    if let Some(t) = cli.tol_quad {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Usage(format!("--tol-quad {t} must be positive")));
        }
    }
    let done = |report| Ok(Outcome { report, failed: false });
    match &cli.command {
        Command::Solve { config, kind, x, gamma } => {
            let model = load_model(config, cli)?;
            done(solve(config, &model, (*kind).into(), *x, *gamma)?)
        }
        Command::Simulate { config, sim, dump_paths, dump_count } => {
            let model = load_model(config, cli)?;
            let sim = sim.config();
            sim.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let mut report = simulate(config, &model, sim)?;
            if let Some(p) = dump_paths {
                let n = dump(&model, sim, *dump_count, p)?;
                report["dumped_paths"] = json!({ "file": p.display().to_string(), "paths": n });
            }
            done(report)
        }
        Command::Diagnose { config } => {
            let model = load_model(config, cli)?;
            done(diagnose(config, &model)?)
        }
        Command::Reproduce { example, sim } => {
            let mc = (sim.paths > 0).then(|| sim.config());
            if let Some(s) = mc {
                s.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            }
            let ids = example.map_or_else(|| (1..=6).collect(), |e| vec![e]);
            reproduce_all(&ids, mc, cli.atoms_max, "reproduce")
        }
        Command::Selftest => reproduce_all(&[1, 2, 3, 4, 5, 6], None, cli.atoms_max, "selftest"),
    }
}

fn builtin(name: &str) -> Option<u32> {
    match name {
        "zero" | "zero_model" => Some(0),
        _ => name
            .strip_prefix("example")
            .and_then(|s| s.parse().ok())
            .filter(|id| (1..=6).contains(id)),
    }
}

/// Reads a model file, falling back to the built-in names.
fn load_model(source: &str, cli: &Cli) -> Result<Model, Failure> {
    let tol = cli.tol_quad.map(|t| QuadratureConfig { abs_tol: t, rel_tol: t });
    let from_config = |mut cfg: ModelConfig| -> Result<Model, Failure> {
        if tol.is_some() {
            cfg.quadrature = tol;
        }
        Ok(build_model(&cfg)?)
    };
    if Path::new(source).exists() {
        return from_config(ModelConfig::from_path(source)?);
    }
    match builtin(source) {
        Some(0) => from_config(ModelConfig::from_toml_str(catalog::ZERO_MODEL)?),
        Some(id @ 1..=4) => from_config(ModelConfig::from_toml_str(
            catalog::example_config(id).expect("examples 1 to 4 ship as configs"),
        )?),
        Some(id) => Ok(catalog::example(id, cli.atoms_max)?),
        None => Err(Failure::Usage(format!(
            "{source}: no such file, and not a built-in model (zero_model, example1..example6)"
        ))),
    }
}

fn location(loc: &Location<f64>) -> Value {
    match *loc {
        Location::Segment { index, t_start, t_end } => {
            json!({ "type": "segment", "index": index, "t_start": float(t_start), "t_end": float(t_end) })
        }
        Location::Atom { index, time } => json!({ "type": "atom", "index": index, "time": float(time) }),
    }
}

fn model_summary(source: &str, m: &Model) -> Value {
    json!({
        "source": source,
        "horizon": float(m.horizon),
        "dimension": m.dimension,
        "segments": m.segments.len(),
        "atoms": m.atoms.len(),
        "series_terms": m.series.map(|s| s.terms),
    })
}

fn schedule_json(s: &Schedule) -> Value {
    Value::Array(
        s.entries
            .iter()
            .map(|e| {
                let o = &e.optimum;
                json!({
                    "location": location(&e.location),
                    "lambda_hat": o.lambda_hat.iter().map(|v| analytic(*v)).collect::<Vec<_>>(),
                    "local_utility": analytic(o.value),
                    "activity": float(e.activity),
                    "rate": analytic(e.rate()),
                    "boundedness": o.boundedness.name(),
                    "tie_break_applied": o.tie_break_applied,
                    "foc_residual": o.foc_residual.as_deref().map(floats),
                })
            })
            .collect(),
    )
}

fn solve(source: &str, m: &Model, kind: UtilityKind, x: f64, gamma: f64) -> Result<Value, Failure> {
    let (sched, cu) = cumulative_local_utility(m, kind)?;
    let gv = global_values(&cu);
    let mut warnings = Vec::new();
    let atom_sum: f64 = cu.atom_increments.iter().map(|(_, v)| *v).sum();
    let series = cu.series.as_ref().map(|s| {
        warnings.push(format!(
            "series verdict is heuristic: tail ratio {:.4} over {} terms",
            s.tail_ratio, s.terms
        ));
        json!({
            "terms": s.terms,
            "partial_sum": heuristic(s.partial_sum),
            "tail_ratio": heuristic(s.tail_ratio),
            "diverges": s.diverges,
        })
    });
    let flagged = sched
        .entries
        .iter()
        .filter(|e| e.optimum.boundedness.name() == "unbounded_flagged")
        .count();
    if flagged > 0 {
        warnings.push(format!("{flagged} local optima flagged unbounded"));
    }
    let strategy = if gv.finite {
        let s = strategy_descriptor(&sched, &gv, x, gamma)?;
        json!({
            "initial_wealth": float(x),
            "risk_aversion": float(gamma),
            "scale": analytic(s.scale),
            "certainty_equivalent_gain": analytic(s.certainty_equivalent_gain()),
        })
    } else {
        warnings.push("value is infinite: no optimal strategy".into());
        Value::Null
    };
    Ok(json!({
        "command": { "name": "solve", "config": source, "kind": kind.name(), "x": float(x), "gamma": float(gamma) },
        "model": model_summary(source, m),
        "schedule": schedule_json(&sched),
        "cumulative": {
            "continuous_part": analytic(cu.continuous_part),
            "atom_sum": analytic(atom_sum),
            "total": analytic(cu.total()),
            "finite": cu.finite,
            "series": series,
        },
        "values": {
            "finite": gv.finite,
            "u0": analytic(gv.u0),
            "v0": analytic(gv.v0),
            "msr2": analytic(gv.msr2),
            "mhr2": analytic(gv.mhr2),
        },
        "strategy": strategy,
        "warnings": warnings,
    }))
}

fn simulate(source: &str, m: &Model, sim: SimConfig) -> Result<Value, Failure> {
    let study = wealth_study(m, sim)?;
    let rows: Vec<Value> = study
        .iter()
        .map(|f| {
            let mut row = Map::new();
            row.insert("functional".into(), json!(f.name));
            row.insert("estimate".into(), float(f.stats.estimate));
            row.insert("std_error".into(), float(f.stats.std_error));
            row.insert("n".into(), json!(f.stats.n));
            row.insert("provenance".into(), json!("mc"));
            if let Some(a) = f.analytic {
                row.insert("analytic".into(), analytic(a));
                row.insert("within_3se".into(), json!(f.stats.within(a, 3.0)));
            }
            Value::Object(row)
        })
        .collect();
    let mut warnings = Vec::new();
    if !study.iter().any(|f| f.name == "E[W_MV]") {
        warnings.push("MV value infinite or undefined: MV functionals omitted".to_string());
    }
    Ok(json!({
        "command": {
            "name": "simulate", "config": source, "paths": sim.n_paths,
            "steps": sim.n_steps, "seed": sim.seed, "antithetic": sim.antithetic,
        },
        "model": model_summary(source, m),
        "wealth": "normalized: initial wealth 0, bliss level 1",
        "stats": rows,
        "warnings": warnings,
    }))
}

/// Writes the first `count` MMV wealth paths as CSV; returns the paths written.
fn dump(m: &Model, sim: SimConfig, count: usize, file: &Path) -> Result<usize, Failure> {
    let (sched, _) = cumulative_local_utility(m, UtilityKind::Mmv)?;
    let s = Simulator::new(m, sim)?;
    let n = count.min(sim.n_paths);
    let d = m.dimension;
    let r_cols = if d == 1 {
        "R".to_string()
    } else {
        (1..=d).map(|k| format!("R{k}")).collect::<Vec<_>>().join(",")
    };
    let mut out = format!("path,step,t,{r_cols},W\n");
    for i in 0..n {
        let mut w = WealthTracker::new(&sched, 0.0, 1.0);
        let mut r = vec![0.0; d];
        let mut step = 0usize;
        let row = |out: &mut String, step: usize, t: f64, r: &[f64], w: f64| {
            let rs: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&format!("{i},{step},{t:.16e},{},{w:.16e}\n", rs.join(",")));
        };
        row(&mut out, 0, 0.0, &r, w.wealth);
        s.visit(i, |t, k, dr| {
            w.step(k, dr);
            r.iter_mut().zip(dr).for_each(|(a, b)| *a += b);
            step += 1;
            row(&mut out, step, t, &r, w.wealth);
        });
    }
    std::fs::write(file, out).map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
    Ok(n)
}

fn diagnose(source: &str, m: &Model) -> Result<Value, Failure> {
    let na = check_instantaneous_no_arbitrage(m)?;
    let grid_only = na.verdicts.iter().filter(|v| v.method == NaMethod::DirectionGrid).count();
    let mut warnings = Vec::new();
    if grid_only > 0 {
        warnings.push(format!("{grid_only} no-arbitrage verdicts checked on a direction grid only"));
    }
    let cmp = compare_mv_mmv(m)?;
    let density = match cumulative_local_utility(m, UtilityKind::Mmv) {
        Ok((s, cu)) if cu.finite => {
            let d = density_diagnostics(m, &s, &global_values(&cu))?;
            json!({
                "mean": analytic(d.mean),
                "second_moment": analytic(d.second_moment),
                "variance": analytic(d.variance),
                "p_zero": analytic(d.p_zero),
                "max_sigma_martingale_residual": analytic(d.max_residual),
                "equivalent": d.equivalent,
                "is_sigma_martingale": d.is_sigma_martingale,
            })
        }
        Ok(_) => {
            warnings.push("MMV value infinite: no separating measure reported".into());
            Value::Null
        }
        Err(e) => return Err(e.into()),
    };
    let mv = match mv_signed_measure(m) {
        Ok(d) => json!({
            "variance": analytic(d.variance),
            "negative_probability": analytic(d.negative_probability),
            "is_probability_measure": d.is_probability_measure,
        }),
        Err(e) => {
            warnings.push(format!("MV signed measure unavailable: {e}"));
            Value::Null
        }
    };
    Ok(json!({
        "command": { "name": "diagnose", "config": source },
        "model": model_summary(source, m),
        "no_arbitrage": {
            "holds": na.holds,
            "witness_direction": na.witness_direction.as_deref().map(floats),
            "atom_violations": floats(&na.atom_violations),
            "grid_only_verdicts": grid_only,
        },
        "square_integrable": is_square_integrable(m),
        "mv_vs_mmv": {
            "verdict": cmp.verdict.name(),
            "mv_below_bliss": cmp.mv_below_bliss,
            "max_lambda_gap": cmp.max_lambda_gap.map(analytic),
        },
        "mmv_density": density,
        "mv_signed_measure": mv,
        "warnings": warnings,
    }))
}

fn tagged(value: f64, provenance: &str, se: Option<f64>) -> Value {
    match (provenance, se) {
        ("mc", Some(se)) => mc(value, se),
        ("heuristic", _) => heuristic(value),
        _ => analytic(value),
    }
}

fn example_json(r: &ExampleReport) -> Value {
    let prov = |p| serde_json::to_value(p).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let figures: Vec<Value> = r
        .figures
        .iter()
        .map(|f| json!({ "name": f.name, "value": tagged(f.value, &prov(f.provenance), f.std_error) }))
        .collect();
    let checks: Vec<Value> = r
        .checks
        .iter()
        .map(|c| {
            let p = if c.std_error.is_some() { "mc" } else { "analytic" };
            json!({
                "name": c.name,
                "status": c.status.name(),
                "value": tagged(c.value, p, c.std_error),
                "expect": serde_json::to_value(c.expect).unwrap_or(Value::Null),
                "note": c.note,
            })
        })
        .collect();
    json!({
        "example": r.example,
        "passed": r.passed(),
        "figures": figures,
        "checks": checks,
        "warnings": r.notes,
    })
}

fn reproduce_all(ids: &[u32], mc: Option<SimConfig>, atoms: Option<usize>, name: &str) -> Result<Outcome, Failure> {
    let mut examples = Vec::new();
    let mut failed = false;
    let mut summary = Vec::new();
    for &id in ids {
        let opts = ReproduceOptions { atoms, mc: if id == 2 { mc } else { None } };
        let r = reproduce(id, &opts)?;
        let count = |s: Status| r.checks.iter().filter(|c| c.status == s).count();
        let (fail, disc) = (count(Status::Fail), count(Status::Discrepancy));
        failed |= fail > 0;
        for c in r.checks.iter().filter(|c| c.status == Status::Fail) {
            eprintln!("example {id}: FAIL {} = {}", c.name, c.value);
        }
        summary.push(json!({
            "example": id,
            "status": if fail == 0 { "pass" } else { "fail" },
            "checks": r.checks.len(),
            "failed": fail,
            "discrepancies": disc,
        }));
        examples.push(example_json(&r));
    }
    let mut report = json!({
        "command": { "name": name, "examples": ids, "mc": mc.filter(|_| ids.contains(&2)).map(|s| json!({
            "paths": s.n_paths, "steps": s.n_steps, "seed": s.seed, "antithetic": s.antithetic,
        })) },
        "summary": summary,
    });
    if name == "reproduce" {
        report["examples"] = Value::Array(examples);
    }
    Ok(Outcome { report, failed })
}
