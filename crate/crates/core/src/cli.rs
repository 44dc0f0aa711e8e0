//! Command-line front end.
//!
//! Every command writes its tables into `--out` together with a metadata
//! record holding the resolved parameters, the seed and SHA-256 hashes of
//! all input files. With `--format csv` each table `name.csv` gets a sidecar
//! `name.meta.json`; with `--format json` the table and metadata go into one
//! `name.json`. Outputs contain no timestamps, so identical invocations give
//! byte-identical files.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
//! 3 verification failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorKind, Session};
use crate::impact::{self, McOptions};
use crate::model::{validate_assumptions, ModelParams};
use crate::sim::{self, DepthModel, FiniteOptions, SyntheticLobConfig};
use crate::stationary;
use crate::verify::{self, Suite, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "impactlab",
    version,
    about = "Tick-level price impact model: densities, impact curves, simulation and estimation"
)]
struct Cli {
    /// Model config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the model assumptions for the configured parameters.
    Validate,
    /// Simulate paths and synthetic order-book events.
    Simulate(SimulateArgs),
    /// Stationary densities f(θ,·), ψ and χ.
    Stationary(StationaryArgs),
    /// Expected impact and marginal impact curves.
    Impact(ImpactArgs),
    /// Price resilience after a meta-order.
    Resilience(ResilienceArgs),
    /// Estimate the stationary density from an event file.
    Estimate(EstimateArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SimKind {
    Finite,
    MultiAgent,
    DiffusionX,
    DiffusionY,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimKind::Finite)]
    kind: SimKind,
    /// Arrival rate λ.
    #[arg(long, default_value_t = 1e4)]
    lambda: f64,
    /// Per-agent rates for `multi-agent` (comma separated); overrides --lambda.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// Wall-clock horizon for finite paths.
    #[arg(long = "T", default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.5)]
    x0: f64,
    /// Volume horizon for diffusions.
    #[arg(long, default_value_t = 1.0)]
    volume: f64,
    /// Euler–Maruyama step for diffusions.
    #[arg(long, default_value_t = 1e-3)]
    dv: f64,
    /// Constant total book depth for synthetic events (shares).
    #[arg(long, default_value_t = 1000.0)]
    depth: f64,
    /// Shares per unit of model volume.
    #[arg(long, default_value_t = 1e4)]
    shares_per_volume: f64,
}

#[derive(Debug, Args, Serialize)]
struct StationaryArgs {
    /// Participation rates (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6")]
    theta: Vec<f64>,
    /// Grid intervals on [0,1].
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// Only the closed form (uniform F, ρ = 1).
    #[arg(long)]
    closed_form_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ImpactMethod {
    Pde,
    Mc,
}

#[derive(Debug, Args, Serialize)]
struct ImpactArgs {
    /// Participation rate; defaults to the config value.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    q_max: f64,
    /// Points on the Q grid, including 0.
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Spatial grid intervals.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Time step; defaults to the largest stable step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum, default_value_t = ImpactMethod::Pde)]
    method: ImpactMethod,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Monte Carlo step on the volume clock.
    #[arg(long, default_value_t = 1e-4)]
    dq: f64,
    /// Start Monte Carlo paths after a uniform window of this length from x0.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct ResilienceArgs {
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    v_max: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EstimatorName {
    Continuous,
    Weighted,
    WeightedUniform,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorName::Continuous)]
    estimator: EstimatorName,
    #[arg(long, default_value_t = 0.5)]
    w: f64,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Session open, nanoseconds since midnight.
    #[arg(long, default_value_t = 34_200_000_000_000)]
    session_open: i64,
    /// Session close, nanoseconds since midnight.
    #[arg(long, default_value_t = 57_600_000_000_000)]
    session_close: i64,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    /// closed-form, density, concavity, marginal, shape, monte-carlo,
    /// convergence, multiagent or estimators.
    which: String,
    /// Spatial grid intervals.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 100_000)]
    trades: usize,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_USAGE
            }
        }
    }
}

/// Loaded model plus provenance for the metadata record.
struct Context<'a> {
    cli: &'a Cli,
    model: ModelParams,
    inputs: Vec<(String, String)>,
}

impl Context<'_> {
    fn meta(&self, command: &str, args: Value, extra: Value) -> Value {
        let inputs: Vec<Value> = self
            .inputs
            .iter()
            .map(|(path, hash)| json!({ "path": path, "sha256": hash }))
            .collect();
        json!({
            "tool": "impactlab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.cli.seed,
            "format": self.cli.format,
            "model": self.model.describe(),
            "args": args,
            "inputs": inputs,
            "results": extra,
        })
    }

    /// Writes a table through `csv` (for --format csv) or `rows` (for --format json).
    fn emit(
        &self,
        name: &str,
        meta: &Value,
        csv: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
        rows: Value,
    ) -> Result<()> {
        let dir = &self.cli.out;
        match self.cli.format {
            Format::Csv => {
                let mut buf = Vec::new();
                csv(&mut buf).map_err(|e| Error::io(dir.join(format!("{name}.csv")), e))?;
                write_file(&dir.join(format!("{name}.csv")), &buf)?;
                write_json(&dir.join(format!("{name}.meta.json")), meta)
            }
            Format::Json => write_json(
                &dir.join(format!("{name}.json")),
                &json!({ "meta": meta, "data": rows }),
            ),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn load_context(cli: &Cli) -> Result<Context<'_>> {
    let mut inputs = Vec::new();
    let model = match &cli.config {
        None => ModelParams::reference(),
        Some(path) => {
            let cfg = KvConfig::from_file(path)?;
            inputs.push((path.display().to_string(), sha256_file(path)?));
            for t in cfg.table_paths() {
                inputs.push((t.display().to_string(), sha256_file(&t)?));
            }
            cfg.model()?
        }
    };
    Ok(Context { cli, model, inputs })
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let mut ctx = load_context(cli)?;
    match &cli.command {
        Command::Validate => cmd_validate(&ctx),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Stationary(a) => cmd_stationary(&ctx, a),
        Command::Impact(a) => cmd_impact(&ctx, a),
        Command::Resilience(a) => cmd_resilience(&ctx, a),
        Command::Estimate(a) => {
            ctx.inputs.push((a.input.display().to_string(), sha256_file(&a.input)?));
            cmd_estimate(&ctx, a)
        }
        Command::Verify(a) => cmd_verify(&ctx, a),
    }
}

fn args_json<T: Serialize>(a: &T) -> Value {
    serde_json::to_value(a).unwrap_or(Value::Null)
}

fn cmd_validate(ctx: &Context) -> Result<i32> {
    let report = validate_assumptions(&ctx.model);
    let meta = ctx.meta("validate", Value::Null, json!({ "all_passed": report.all_passed() }));
    ctx.emit(
        "validation",
        &meta,
        |w| {
            use std::io::Write;
            writeln!(w, "check,passed,violation,worst_x")?;
            for c in &report.checks {
                let wx = c.worst_x.map(|x| x.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{}", c.name, c.passed, c.violation, wx)?;
            }
            Ok(())
        },
        serde_json::to_value(&report)?,
    )?;
    for c in &report.checks {
        println!(
            "{:<32} {}  {}",
            c.name,
            if c.passed { "ok" } else { "FAILED" },
            c.detail
        );
    }
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_stationary(ctx: &Context, a: &StationaryArgs) -> Result<i32> {
    if a.theta.is_empty() {
        return Err(Error::param("theta", "need at least one value"));
    }
    let p = &ctx.model;
    let closed = match (p.uniform_half_width(), p.rho()) {
        (Some(a), Some(1.0)) => Some(a),
        _ => None,
    };
    if a.closed_form_only && closed.is_none() {
        return Err(Error::Unsupported(
            "the closed form needs F.kind = uniform and sigma.rho = 1".into(),
        ));
    }
    let mut files = Vec::new();
    if !a.closed_form_only {
        let ps = stationary::psi(p, a.points)?;
        files.push(("psi".to_string(), ps));
    }
    for &theta in &a.theta {
        if let Some(half) = closed {
            if a.closed_form_only || theta < 1.0 {
                files.push((
                    format!("closed_form_theta_{theta}"),
                    stationary::closed_form_uniform(half, p.alpha(), theta, a.points)?,
                ));
            }
        }
        if !a.closed_form_only {
            files.push((
                format!("f_theta_{theta}"),
                stationary::solve_stationary_f(p, theta, a.points)?,
            ));
            files.push((format!("chi_theta_{theta}"), stationary::chi(p, theta, a.points)?));
        }
    }
    for (name, d) in &files {
        let extra = json!({ "theta": d.theta, "wing": d.wing(), "integral": d.integral() });
        let meta = ctx.meta("stationary", args_json(a), extra);
        let rows = json!({ "x": d.grid(), "value": d.values });
        ctx.emit(name, &meta, |w| d.write_csv(w), rows)?;
    }
    Ok(EXIT_OK)
}

fn grid(max: f64, points: usize, name: &str) -> Result<Vec<f64>> {
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::param(name, format!("must be positive, got {max}")));
    }
    if points < 2 {
        return Err(Error::param("points", "need at least 2"));
    }
    Ok((0..points).map(|k| max * k as f64 / (points - 1) as f64).collect())
}

fn cmd_impact(ctx: &Context, a: &ImpactArgs) -> Result<i32> {
    let p = &ctx.model;
    let theta = a.theta.unwrap_or(p.theta());
    let qgrid = grid(a.q_max, a.points, "q-max")?;
    let curve = match a.method {
        ImpactMethod::Pde => impact::impact_curve(p, theta, &qgrid, a.n, a.dt)?,
        ImpactMethod::Mc => {
            let opts = McOptions {
                dq: a.dq,
                ..McOptions::default()
            };
            impact::mc_impact_curve(p, theta, &qgrid, a.paths, a.window, ctx.cli.seed, &opts)?
        }
    };
    let marginal = impact::marginal_impact_curve(p, theta, &qgrid, a.n, a.dt)?;
    let extra = json!({
        "theta": theta,
        "alpha_psi_wing": marginal.alpha_psi_wing,
        "alpha_chi_wing": marginal.alpha_chi_wing,
    });
    let meta = ctx.meta("impact", args_json(a), extra);
    ctx.emit("impact", &meta, |w| curve.write_csv(w), serde_json::to_value(&curve)?)?;
    ctx.emit(
        "marginal",
        &meta,
        |w| marginal.write_csv(w),
        serde_json::to_value(&marginal)?,
    )?;
    Ok(EXIT_OK)
}

fn cmd_resilience(ctx: &Context, a: &ResilienceArgs) -> Result<i32> {
    let p = &ctx.model;
    let theta = a.theta.unwrap_or(p.theta());
    let vgrid = grid(a.v_max, a.points, "v-max")?;
    let curve = impact::resilience_curve(p, theta, &vgrid, a.n, a.dt)?;
    let meta = ctx.meta("resilience", args_json(a), json!({ "theta": theta }));
    ctx.emit(
        "resilience",
        &meta,
        |w| curve.write_csv(w),
        serde_json::to_value(&curve)?,
    )?;
    Ok(EXIT_OK)
}

fn cmd_simulate(ctx: &Context, a: &SimulateArgs) -> Result<i32> {
    let p = &ctx.model;
    let seed = ctx.cli.seed;
    match a.kind {
        SimKind::Finite | SimKind::MultiAgent => {
            let path = if a.kind == SimKind::Finite {
                sim::simulate_finite_with(p, a.lambda, a.horizon, a.x0, seed, &FiniteOptions::default())?
            } else {
                let lambdas = if a.lambdas.is_empty() {
                    vec![a.lambda]
                } else {
                    a.lambdas.clone()
                };
                sim::simulate_multi_agent(p, &lambdas, a.horizon, a.x0, seed)?.path
            };
            let cfg = SyntheticLobConfig {
                depth: DepthModel::Constant { shares: a.depth },
                shares_per_volume: a.shares_per_volume,
                ..SyntheticLobConfig::default()
            };
            let (events, report) = sim::synth_lob_events(&path, &cfg, seed)?;
            let extra = json!({
                "arrivals": path.arrivals,
                "trades": path.trade_count(),
                "x_end": path.x_end,
                "synthetic_events": report,
                "lob": cfg,
            });
            let meta = ctx.meta("simulate", args_json(a), extra);
            ctx.emit("path", &meta, |w| path.write_csv(w), serde_json::to_value(&path)?)?;
            // events always use the CSV schema so they can be fed to `estimate`
            let mut buf = Vec::new();
            estimators::write_events(&events, &mut buf)?;
            write_file(&ctx.cli.out.join("events.csv"), &buf)?;
            write_json(&ctx.cli.out.join("events.meta.json"), &meta)?;
        }
        SimKind::DiffusionX | SimKind::DiffusionY => {
            let path = if a.kind == SimKind::DiffusionX {
                sim::simulate_diffusion_x(p, a.x0, a.volume, a.dv, seed)?
            } else {
                sim::simulate_diffusion_y(p, a.x0, a.volume, a.dv, seed)?
            };
            let meta = ctx.meta("simulate", args_json(a), json!({ "x_end": path.x[path.x.len() - 1] }));
            ctx.emit("path", &meta, |w| path.write_csv(w), serde_json::to_value(&path)?)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_estimate(ctx: &Context, a: &EstimateArgs) -> Result<i32> {
    let (events, load) = estimators::load_events(&a.input)?;
    for r in load.rejects.iter().take(20) {
        eprintln!("warning: {}:{}: {}", a.input.display(), r.line, r.message);
    }
    if load.rejects.len() > 20 {
        eprintln!("warning: {} more rejected rows", load.rejects.len() - 20);
    }
    if !load.nonmonotone_timestamps.is_empty() {
        eprintln!(
            "warning: {} rows with decreasing timestamps (first at line {})",
            load.nonmonotone_timestamps.len(),
            load.nonmonotone_timestamps[0]
        );
    }
    let session = Session {
        open_ns: a.session_open,
        close_ns: a.session_close,
    };
    let (kept, filter) = estimators::filter_events(&events, session);
    let kind = match a.estimator {
        EstimatorName::Continuous => EstimatorKind::Continuous,
        EstimatorName::Weighted => EstimatorKind::Weighted { w: a.w },
        EstimatorName::WeightedUniform => EstimatorKind::WeightedUniform { w: a.w },
    };
    let mut acc = estimators::BinAccumulator::new(kind, a.bins)?;
    for e in &kept {
        acc.add(e);
    }
    let density = acc.finish()?;
    let extra = json!({
        "load": {
            "rows": load.rows,
            "accepted": load.accepted,
            "rejected": load.rejects.len(),
            "nonmonotone_timestamps": load.nonmonotone_timestamps.len(),
        },
        "filter": filter,
        "used_events": density.used_events,
        "skipped_events": density.skipped_events,
        "total_volume": density.total_volume,
    });
    let meta = ctx.meta("estimate", args_json(a), extra);
    ctx.emit(
        "density",
        &meta,
        |w| density.write_csv(w),
        serde_json::to_value(&density)?,
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify(ctx: &Context, a: &VerifyArgs) -> Result<i32> {
    let suite = Suite::parse(&a.which).ok_or_else(|| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        Error::param(
            "which",
            format!("unknown suite `{}`; expected one of {}", a.which, names.join(", ")),
        )
    })?;
    let opts = VerifyOptions {
        seed: ctx.cli.seed,
        n: a.n,
        paths: a.paths,
        trades: a.trades,
    };
    let report = verify::run_suite(suite, &ctx.model, &opts)?;
    for c in &report.criteria {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}", c.name);
        for n in &c.notes {
            println!("  {n}");
        }
    }
    let meta = ctx.meta("verify", args_json(a), json!({ "passed": report.passed }));
    write_json(
        &ctx.cli.out.join(format!("verify_{}.json", suite.name())),
        &json!({ "meta": meta, "report": report }),
    )?;
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY })
}
