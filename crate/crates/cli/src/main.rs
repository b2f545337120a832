use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sojourn_core::analytic::{t_constant_closed, t_constant_finite, BoundPair, GammaApprox};
use sojourn_core::constants::{
    estimate_berman_b, estimate_berman_rate, estimate_btilde, estimate_g_cdf, estimate_pickands_berman,
    estimate_pickands_sup, estimate_piterbarg, estimate_piterbarg_sup, BermanSpec, ConstantEstimate,
    DEFAULT_PITERBARG_SPAN, DEFAULT_SPAN, DEFAULT_STEP,
};
use sojourn_core::paths::{Polynomial, ProcessModel, Sided};
use sojourn_core::record::{Payload, RngInfo, RunRecord, TRow, SCHEMA_VERSION};
use sojourn_core::sojourn::{
    asymptotic_prediction, convergence_report, default_half_window, empirical_tail, midpoint_x_grid,
    MonteCarloConstants, SojournConfig, TailCurve, DEFAULT_STEP_FACTOR,
};
use sojourn_core::stats::{derive_seed, McConfig, SeedSpec, DEFAULT_BATCH, DEFAULT_LEVEL};
use sojourn_core::validate::{run_all, run_criterion, tampered_gamma, ValidateOptions, CRITERIA};
use sojourn_core::Error;

const EXIT_NUMERIC: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PREFLIGHT: u8 = 3;

#[derive(Parser)]
#[command(name = "sojourn", version, about = "Gaussian extreme-value constants and sojourn-time tails by simulation")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed, decimal or 0x-prefixed hex.
    #[arg(long, global = true, env = "SOJOURN_SEED", default_value = "0x5EED", value_parser = parse_seed)]
    seed: u64,

    /// Directory receiving run records and CSV series.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pickands constant with both lower bounds alongside.
    Pickands(PickandsArgs),
    /// Finite-window Berman constant, or its rate in S with --S-list.
    Berman(BermanArgs),
    /// Piterbarg-type constant with drift b|s|^alpha.
    Piterbarg(PiterbargArgs),
    /// P(I <= x) for the occupation time I.
    Gcdf(GcdfArgs),
    /// The T function of the variance-dominated regime.
    Tfunc(TfuncArgs),
    /// Both Pickands lower bounds over a grid of alpha.
    BoundsFigure(BoundsArgs),
    /// Empirical sojourn tails against their asymptotics.
    Sojourn(SojournArgs),
    /// Run the acceptance suite.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PickandsMethod {
    Berman,
    Sup,
    Btilde,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SidedArg {
    OneSided,
    Symmetric,
}

impl From<SidedArg> for Sided {
    fn from(s: SidedArg) -> Self {
        match s {
            SidedArg::OneSided => Sided::OneSided,
            SidedArg::Symmetric => Sided::Symmetric,
        }
    }
}

#[derive(Args, Serialize)]
struct McArgs {
    /// Number of simulated paths.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Confidence level of reported intervals.
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
}

impl McArgs {
    fn config(&self, seed: u64) -> McConfig {
        McConfig {
            level: self.level,
            ..McConfig::new(self.n, seed)
        }
    }
}

#[derive(Args, Serialize)]
struct PickandsArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SPAN)]
    span: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long, value_enum, default_value = "berman")]
    method: PickandsMethod,
    /// Occupation threshold for --method btilde.
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Args, Serialize)]
struct BermanArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long, default_value_t = DEFAULT_SPAN)]
    span: f64,
    /// Windows for the rate in S; the slope of the two largest is reported.
    #[arg(long = "S-list", value_delimiter = ',')]
    s_list: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long, value_enum, default_value = "one-sided")]
    sided: SidedArg,
    /// Add x=0 cross-checks.
    #[arg(long)]
    verify: bool,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Args, Serialize)]
struct PiterbargArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    b: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long, default_value_t = DEFAULT_PITERBARG_SPAN)]
    span: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long, value_enum, default_value = "symmetric")]
    sided: SidedArg,
    /// Add the supremum form and the x=0 value.
    #[arg(long)]
    verify: bool,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Args, Serialize)]
struct GcdfArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    x: f64,
    #[arg(long, default_value_t = DEFAULT_SPAN)]
    span: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    /// Add the x=0 value, which must be zero.
    #[arg(long)]
    verify: bool,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Args, Serialize)]
struct TfuncArgs {
    #[arg(long, default_value_t = 1.5)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, required_unless_present = "x_range", conflicts_with = "x_range")]
    x: Option<f64>,
    /// Figure mode: lo:hi:count, series for eta=0 and the given eta.
    #[arg(long, value_parser = parse_range)]
    x_range: Option<(f64, f64, usize)>,
    #[arg(long, conflicts_with = "boundary")]
    interior: bool,
    #[arg(long)]
    boundary: bool,
    #[arg(long, default_value_t = DEFAULT_SPAN)]
    span: f64,
}

#[derive(Args, Serialize)]
struct BoundsArgs {
    /// lo:hi:count with at least 10 nodes.
    #[arg(long, value_parser = parse_range, default_value = "0.05:2:40")]
    alpha_range: (f64, f64, usize),
    #[arg(long, hide = true)]
    tamper_gamma: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    Stationary,
    TimeChanged,
    Modulated,
}

#[derive(Args, Serialize)]
struct SojournArgs {
    #[arg(long, value_enum, default_value = "stationary")]
    model: ModelArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Variance exponent of the modulated model.
    #[arg(long)]
    beta: Option<f64>,
    /// Variance coefficient of the modulated model.
    #[arg(long)]
    b: Option<f64>,
    /// Time-change polynomial coefficients c0,c1,... (time-changed model).
    #[arg(long, value_delimiter = ',')]
    rate: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, conflicts_with = "u_list")]
    u: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    u_list: Option<Vec<f64>>,
    /// Occupation thresholds in rescaled units.
    #[arg(long, value_delimiter = ',', conflicts_with = "x_midpoints")]
    x: Option<Vec<f64>>,
    /// Use this many midpoints of the lattice T function as x values.
    #[arg(long)]
    x_midpoints: Option<usize>,
    /// Observation interval a,b. Defaults to 0,1, or a window around 0
    /// for the modulated model.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    interval: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1_000_000)]
    n: u64,
    /// Paths per constant in the asymptotic prediction.
    #[arg(long, default_value_t = 100_000)]
    constants_n: u64,
    #[arg(long, default_value_t = DEFAULT_STEP_FACTOR)]
    step_factor: f64,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    /// Ten times fewer paths, tolerances doubled.
    #[arg(long)]
    quick: bool,
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u32>>,
    #[arg(long, hide = true)]
    tamper_gamma: bool,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed {s:?}: {e}"))
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(format!("expected lo:hi:count, got {s:?}"));
    };
    let lo: f64 = lo.parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("{hi:?}: {e}"))?;
    let count: usize = count.parse().map_err(|e| format!("{count:?}: {e}"))?;
    if !(hi > lo) || count < 2 {
        return Err(format!("need lo < hi and at least two nodes, got {s:?}"));
    }
    Ok((lo, hi, count))
}

fn linspace((lo, hi, count): (f64, f64, usize)) -> Vec<f64> {
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

fn usage(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

/// What a command produced: the payload, CSV series keyed by file suffix,
/// and whether its own assertions held.
struct Outcome {
    parameters: serde_json::Value,
    payload: Payload,
    series: Vec<(String, String)>,
    ok: bool,
    summary: Vec<String>,
}

impl Outcome {
    fn new(parameters: &impl Serialize, payload: Payload) -> Self {
        Self {
            parameters: serde_json::to_value(parameters).expect("arguments serialize"),
            payload,
            series: Vec::new(),
            ok: true,
            summary: Vec::new(),
        }
    }
}

fn describe(e: &ConstantEstimate) -> String {
    format!(
        "{:?}: {:.6} ± {:.6} [{:.6}, {:.6}] (S={}, step={})",
        e.constant_id, e.value.mean, e.value.stderr, e.value.ci_low, e.value.ci_high, e.window, e.step
    )
}

fn constants_outcome(args: &impl Serialize, estimates: Vec<ConstantEstimate>, bounds: Option<BoundPair>) -> Outcome {
    let summary = estimates.iter().map(describe).collect();
    let mut out = Outcome::new(args, Payload::Constants { estimates, bounds });
    out.summary = summary;
    out
}

fn cmd_pickands(a: &PickandsArgs, seed: u64) -> sojourn_core::Result<Outcome> {
    let mc = a.mc.config(seed);
    let est = match a.method {
        PickandsMethod::Berman => estimate_pickands_berman(a.alpha, a.span, a.step, &mc)?,
        PickandsMethod::Sup => estimate_pickands_sup(a.alpha, a.span, a.step, &mc)?,
        PickandsMethod::Btilde => estimate_btilde(a.alpha, a.x, a.span, a.step, &mc)?,
    };
    let bounds = BoundPair::compute(a.alpha)?;
    let mut out = constants_outcome(a, vec![est], Some(bounds));
    out.summary.push(format!("lower bounds: new {:.6}, old {:.6}", bounds.new_bound, bounds.old_bound));
    Ok(out)
}

fn cmd_berman(a: &BermanArgs, seed: u64) -> sojourn_core::Result<Outcome> {
    let mc = a.mc.config(seed);
    let main = match &a.s_list {
        Some(list) => estimate_berman_rate(a.alpha, a.eta, a.x, list, a.step, &mc)?,
        None => {
            let mut spec = BermanSpec::new(a.alpha, a.lambda, a.eta, a.span, a.x);
            spec.step = a.step;
            spec.sided = a.sided.into();
            estimate_berman_b(&spec, &mc)?
        }
    };
    let mut estimates = vec![main];
    if a.verify {
        let companion = |label: &str| mc.with_seed(derive_seed(seed, label));
        estimates.push(estimate_pickands_berman(a.alpha, a.span, a.step, &companion("verify-pickands"))?);
        estimates.push(estimate_btilde(a.alpha, 0.0, a.span, a.step, &companion("verify-btilde"))?);
    }
    Ok(constants_outcome(a, estimates, None))
}

fn cmd_piterbarg(a: &PiterbargArgs, seed: u64) -> sojourn_core::Result<Outcome> {
    let mc = a.mc.config(seed);
    let sided = a.sided.into();
    let main = estimate_piterbarg(a.alpha, a.b, a.eta, a.span, a.x, a.step, sided, &mc)?;
    let mut estimates = vec![main];
    let mut ok = true;
    if a.verify {
        let companion = |label: &str| mc.with_seed(derive_seed(seed, label));
        if a.x > 0.0 {
            let zero = estimate_piterbarg(a.alpha, a.b, a.eta, a.span, 0.0, a.step, sided, &companion("verify-x0"))?;
            let (p, z) = (&estimates[0].value, &zero.value);
            ok &= p.mean <= z.mean + 3.0 * (p.stderr.powi(2) + z.stderr.powi(2)).sqrt();
            estimates.push(zero);
        }
        if a.eta == 0.0 {
            estimates.push(estimate_piterbarg_sup(a.alpha, a.b, a.span, a.step, sided, &companion("verify-sup"))?);
        }
    }
    let mut out = constants_outcome(a, estimates, None);
    out.ok = ok;
    Ok(out)
}

fn cmd_gcdf(a: &GcdfArgs, seed: u64) -> sojourn_core::Result<Outcome> {
    let mc = a.mc.config(seed);
    let mut estimates = vec![estimate_g_cdf(a.alpha, a.span, a.step, &mc, a.x)?];
    if a.verify {
        estimates.push(estimate_g_cdf(a.alpha, a.span, a.step, &mc.with_seed(derive_seed(seed, "verify-x0")), 0.0)?);
    }
    Ok(constants_outcome(a, estimates, None))
}

fn cmd_tfunc(a: &TfuncArgs) -> sojourn_core::Result<Outcome> {
    let interior = !a.boundary;
    let (xs, etas) = match (a.x, a.x_range) {
        (Some(x), _) => (vec![x], vec![a.eta]),
        (None, Some(range)) => {
            let mut etas = vec![0.0];
            if a.eta > 0.0 {
                etas.push(a.eta);
            }
            (linspace(range), etas)
        }
        (None, None) => usage("either --x or --x-range is required"),
    };
    let mut rows = Vec::new();
    for &eta in &etas {
        for &x in &xs {
            rows.push(TRow {
                x,
                eta,
                closed: t_constant_closed(a.beta, a.b, eta, x, interior)?,
                finite: t_constant_finite(a.beta, a.b, eta, a.span, x, interior)?,
            });
        }
    }
    let mut csv = String::from("x,eta,closed,finite\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{:.17e},{:.17e}\n", r.x, r.eta, r.closed, r.finite));
    }
    let summary = if rows.len() == 1 {
        vec![format!("T({}) = {:.7} (window {}: {:.7})", rows[0].x, rows[0].closed, a.span, rows[0].finite)]
    } else {
        vec![format!("{} rows", rows.len())]
    };
    let mut out = Outcome::new(
        a,
        Payload::TFunction {
            beta: a.beta,
            b: a.b,
            interior,
            span: a.span,
            rows,
        },
    );
    if a.x_range.is_some() {
        out.series.push((String::new(), csv));
    }
    out.summary = summary;
    Ok(out)
}

fn cmd_bounds(a: &BoundsArgs) -> sojourn_core::Result<Outcome> {
    if a.alpha_range.2 < 10 {
        usage(format!("--alpha-range needs at least 10 nodes, got {}", a.alpha_range.2));
    }
    let gamma = if a.tamper_gamma { tampered_gamma() } else { GammaApprox::PUGH };
    let rows = linspace(a.alpha_range)
        .into_iter()
        .map(|alpha| BoundPair::compute_with(alpha, &gamma))
        .collect::<sojourn_core::Result<Vec<_>>>()?;
    let violations: Vec<f64> = rows.iter().filter(|r| !r.dominates()).map(|r| r.alpha).collect();
    let mut csv = String::from("alpha,new_bound,old_bound\n");
    for r in &rows {
        csv.push_str(&format!("{},{:.17e},{:.17e}\n", r.alpha, r.new_bound, r.old_bound));
    }
    let mut out = Outcome::new(
        a,
        Payload::Bounds {
            rows,
            dominance: violations.is_empty(),
        },
    );
    out.series.push((String::new(), csv));
    out.ok = violations.is_empty();
    out.summary.push(if out.ok {
        "new bound dominates at every node".into()
    } else {
        format!("dominance violated at alpha = {violations:?}")
    });
    Ok(out)
}

fn sojourn_model(a: &SojournArgs) -> ProcessModel {
    match a.model {
        ModelArg::Stationary => ProcessModel::stationary(a.alpha),
        ModelArg::TimeChanged => {
            let coeffs = a.rate.clone().unwrap_or_else(|| usage("--model time-changed needs --rate"));
            ProcessModel::time_changed(a.alpha, Polynomial { coeffs })
        }
        ModelArg::Modulated => {
            let (Some(beta), Some(b)) = (a.beta, a.b) else {
                usage("--model modulated needs --beta and --b")
            };
            ProcessModel::variance_modulated(a.alpha, beta, b)
        }
    }
}

fn curve_csv(curve: &TailCurve, seed: u64) -> sojourn_core::Result<String> {
    let mut buf = format!(
        "# seed={seed:#x} u={} v_u={} eta={} step={} interval={},{} regime={:?}\n",
        curve.u, curve.v_u, curve.eta, curve.step, curve.interval.0, curve.interval.1, curve.regime
    )
    .into_bytes();
    curve.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii"))
}

fn cmd_sojourn(a: &SojournArgs, seed: u64) -> sojourn_core::Result<Outcome> {
    let model = sojourn_model(a);
    let levels = match (&a.u_list, a.u) {
        (Some(list), _) => list.clone(),
        (None, Some(u)) => vec![u],
        (None, None) => vec![3.0],
    };
    let u0 = levels[0];
    let interval = match &a.interval {
        Some(v) => (v[0], v[1]),
        None => match a.model {
            ModelArg::Modulated => {
                let w = default_half_window(a.beta.expect("checked"), a.b.expect("checked"), u0);
                (-w, w)
            }
            _ => (0.0, 1.0),
        },
    };
    let x_values = match (&a.x, a.x_midpoints) {
        (Some(x), _) => x.clone(),
        (None, Some(count)) => midpoint_x_grid(a.eta.max(1.0), count, interval.0 < 0.0 && interval.1 > 0.0),
        (None, None) => vec![0.0],
    };
    let mut config = SojournConfig::new(model, interval, a.eta, u0, x_values, a.n, seed);
    config.step_factor = a.step_factor;
    config.level = a.level;
    let source = MonteCarloConstants::new(McConfig {
        level: a.level,
        ..McConfig::new(a.constants_n, derive_seed(seed, "constants"))
    });
    let (curves, report) = if levels.len() > 1 {
        let report = convergence_report(&config, &levels, &source)?;
        (report.curves.clone(), Some(report))
    } else {
        let mut curve = empirical_tail(&config)?;
        curve.attach(&asymptotic_prediction(&config, &source)?);
        (vec![curve], None)
    };
    let mut summary = Vec::new();
    let mut series = Vec::new();
    for c in &curves {
        for p in &c.points {
            summary.push(format!(
                "u={} x={}: p_hat {:.4e} [{:.4e}, {:.4e}] ratio {}",
                c.u,
                p.x,
                p.p_hat,
                p.ci_low,
                p.ci_high,
                p.ratio.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into())
            ));
        }
        series.push((format!("-u{}", c.u), curve_csv(c, seed)?));
    }
    if let Some(r) = &report {
        summary.push(format!("trend flag: {}", r.trend_flag));
    }
    let mut out = Outcome::new(a, Payload::Sojourn { curves, report });
    out.series = series;
    out.summary = summary;
    Ok(out)
}

fn cmd_validate(a: &ValidateArgs, seed: u64) -> sojourn_core::Result<Outcome> {
    let mut opts = ValidateOptions::new(seed, a.quick);
    if a.tamper_gamma {
        opts.gamma = tampered_gamma();
    }
    let print = |r: &sojourn_core::validate::CriterionResult| println!("{}", r.line());
    let criteria = match &a.only {
        Some(ids) => {
            if let Some(bad) = ids.iter().find(|id| !CRITERIA.contains(id)) {
                usage(format!("no criterion {bad}"));
            }
            ids.iter()
                .map(|&id| {
                    let r = run_criterion(id, &opts);
                    print(&r);
                    r
                })
                .collect()
        }
        None => run_all(&opts, print),
    };
    let failed: Vec<u32> = criteria.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let mut out = Outcome::new(
        a,
        Payload::Validation {
            quick: a.quick,
            criteria,
        },
    );
    out.ok = failed.is_empty();
    out.summary.push(if out.ok {
        "all criteria passed".into()
    } else {
        format!("failed criteria: {failed:?}")
    });
    Ok(out)
}

fn write_outputs(record: &RunRecord, series: &[(String, String)], dir: &Path) -> sojourn_core::Result<PathBuf> {
    let path = record.persist(dir)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).expect("utf-8 record name").to_owned();
    for (suffix, csv) in series {
        fs::write(dir.join(format!("{stem}{suffix}.csv")), csv)?;
    }
    Ok(path)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Preflight { .. } => EXIT_PREFLIGHT,
        Error::Domain(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            usage("--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    }
    let started = chrono::Utc::now().to_rfc3339();
    let (name, result) = match &cli.command {
        Command::Pickands(a) => ("pickands", cmd_pickands(a, cli.seed)),
        Command::Berman(a) => ("berman", cmd_berman(a, cli.seed)),
        Command::Piterbarg(a) => ("piterbarg", cmd_piterbarg(a, cli.seed)),
        Command::Gcdf(a) => ("gcdf", cmd_gcdf(a, cli.seed)),
        Command::Tfunc(a) => ("tfunc", cmd_tfunc(a)),
        Command::BoundsFigure(a) => ("bounds-figure", cmd_bounds(a)),
        Command::Sojourn(a) => ("sojourn", cmd_sojourn(a, cli.seed)),
        Command::Validate(a) => ("validate", cmd_validate(a, cli.seed)),
    };
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        parameters: out.parameters,
        seed: SeedSpec::new(cli.seed, 0),
        rng: RngInfo::current(DEFAULT_BATCH),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        threads: rayon::current_num_threads(),
        payload: out.payload,
    };
    let path = match write_outputs(&record, &out.series, &cli.out_dir) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot write run record: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    };
    if !matches!(record.payload, Payload::Validation { .. }) {
        println!("{}", record.to_json().expect("record serializes"));
    }
    for line in &out.summary {
        eprintln!("{line}");
    }
    eprintln!("record: {}", path.display());
    if out.ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: assertion failed");
        ExitCode::from(EXIT_NUMERIC)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sojourn_core::stats::DEFAULT_SEED;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seeds_parse_in_hex_and_decimal() {
        assert_eq!(parse_seed("0x5EED").unwrap(), DEFAULT_SEED);
        assert_eq!(parse_seed("24301").unwrap(), DEFAULT_SEED);
        assert!(parse_seed("seed").is_err());
    }

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("0.05:2:40").unwrap(), (0.05, 2.0, 40));
        assert!(parse_range("2:1:10").is_err());
        assert!(parse_range("1:2").is_err());
        let xs = linspace((0.0, 1.0, 5));
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
