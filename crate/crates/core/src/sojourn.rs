//! Crude Monte-Carlo sojourn-time tails and their asymptotic predictions.
//!
//! For a level `u` with scaling `v(u)` the scaled sojourn is
//! `L* = v(u)·μ_{η/v(u)}{t ∈ [a, b] : X(t) > u}`, i.e. `η·#{lattice points above u}`
//! for `η > 0` and the Riemann sum `v(u)·step·#{grid points above u}` for `η = 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytic::{gamma_fn, normal_survival, pickands_lower_bound_new, t_constant_closed};
use crate::constants::{
    estimate_berman_locally_stationary, estimate_berman_rate, estimate_btilde_mixture, estimate_pickands_berman,
    estimate_piterbarg, HFunction, LocallyStationarySpec, DEFAULT_PITERBARG_SPAN, DEFAULT_SPAN, DEFAULT_STEP,
    MIN_QUADRATURE_NODES,
};
use crate::error::{domain, Error, Result};
use crate::paths::{Grid, Method, ModelKind, PathSample, PathSampler, Polynomial, ProcessModel, Sided};
use crate::stats::{derive_seed, run_batched, wilson_interval, McConfig, McEstimate, DEFAULT_BATCH, DEFAULT_LEVEL};

/// Minimum expected number of exceeding paths at `x = 0`.
pub const PREFLIGHT_MIN_COUNT: u64 = 200;
/// Largest path count a single tail run accepts.
pub const MAX_PATHS: u64 = 10_000_000;
pub const DEFAULT_STEP_FACTOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SojournConfig {
    pub model: ProcessModel,
    pub interval: (f64, f64),
    pub eta: f64,
    pub u: f64,
    pub x_values: Vec<f64>,
    pub n: u64,
    pub seed: u64,
    /// For `η = 0` the grid step is `step_factor / v(u)`.
    pub step_factor: f64,
    pub level: f64,
    pub batch: u64,
}

impl SojournConfig {
    pub fn new(model: ProcessModel, interval: (f64, f64), eta: f64, u: f64, x_values: Vec<f64>, n: u64, seed: u64) -> Self {
        Self {
            model,
            interval,
            eta,
            u,
            x_values,
            n,
            seed,
            step_factor: DEFAULT_STEP_FACTOR,
            level: DEFAULT_LEVEL,
            batch: DEFAULT_BATCH,
        }
    }

    pub fn with_u(&self, u: f64) -> Self {
        Self { u, ..self.clone() }
    }

    /// `v(u) = u^{2/α}`, or `u^{2/min(α,β)}` for the variance-modulated model.
    pub fn v_u(&self) -> f64 {
        scaling(&self.model, self.u)
    }

    /// Spacing of the simulation lattice: `η/v(u)` or `step_factor/v(u)`.
    pub fn step(&self) -> f64 {
        let v = self.v_u();
        if self.eta > 0.0 {
            self.eta / v
        } else {
            self.step_factor / v
        }
    }

    fn mc(&self) -> McConfig {
        McConfig {
            n: self.n,
            seed: self.seed,
            batch: self.batch,
            level: self.level,
        }
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let (a, b) = self.interval;
        if !(a < b && a.is_finite() && b.is_finite()) {
            return domain(format!("interval [{a}, {b}] is empty"));
        }
        if !(self.u > 0.0 && self.u.is_finite()) {
            return domain(format!("level u must be positive, got {}", self.u));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return domain(format!("eta must be non-negative, got {}", self.eta));
        }
        if !(self.step_factor > 0.0 && self.step_factor <= DEFAULT_STEP_FACTOR) {
            return domain(format!("step factor must lie in (0, {DEFAULT_STEP_FACTOR}]"));
        }
        if self.x_values.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return domain("x values must be finite and non-negative");
        }
        if self.model.kind == ModelKind::VarianceModulated && !(a <= 0.0 && b >= 0.0) {
            return domain("the variance maximiser t = 0 must lie in the interval");
        }
        if self.model.kind == ModelKind::Fbm {
            return Err(Error::Regime("fBm is not a unit-variance sojourn model".into()));
        }
        Ok(())
    }
}

pub fn scaling(model: &ProcessModel, u: f64) -> f64 {
    let order = match (&model.kind, model.beta) {
        (ModelKind::VarianceModulated, Some(beta)) => model.alpha.min(beta),
        _ => model.alpha,
    };
    u.powf(2.0 / order)
}

/// Default half-width `T` of the window for the variance-modulated model:
/// the solution of `b·T^β = 4/u²`.
pub fn default_half_window(beta: f64, b: f64, u: f64) -> f64 {
    (4.0 / (b * u * u)).powf(1.0 / beta)
}

/// `x` values at the midpoints of the constancy intervals of the lattice
/// `T` function: `η/2, 2η, 4η, …` (interior) or `(k + 1/2)η` (endpoint).
pub fn midpoint_x_grid(eta: f64, count: usize, interior: bool) -> Vec<f64> {
    (0..count)
        .map(|k| {
            if interior {
                if k == 0 {
                    eta / 2.0
                } else {
                    2.0 * k as f64 * eta
                }
            } else {
                (k as f64 + 0.5) * eta
            }
        })
        .collect()
}

/// `L*`: `η·#{points above u}` for `η > 0`, `v_u·step·#{points above u}` for `η = 0`.
pub fn sojourn_functional(path: &PathSample, u: f64, eta: f64, v_u: f64) -> Result<f64> {
    let step = path.grid.step;
    let cell = if eta > 0.0 {
        let want = eta / v_u;
        if ((step - want) / want).abs() > 1e-9 {
            return Err(Error::InconsistentGrid(format!(
                "lattice step {step} differs from eta/v(u) = {want}"
            )));
        }
        eta
    } else {
        v_u * step
    };
    Ok(sojourn_on_values(&path.values, u, cell))
}

fn sojourn_on_values(values: &[f64], u: f64, cell: f64) -> f64 {
    cell * values.iter().filter(|&&v| v > u).count() as f64
}

/// Where the variance maximiser sits relative to the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Locally stationary process (constant variance).
    LocallyStationary,
    /// Variance-dominated families: `α < β`, `α = β`, `α > β`.
    CorrelationDominated { interior: bool },
    Balanced { interior: bool },
    VarianceDominated { interior: bool },
}

pub fn resolve_regime(config: &SojournConfig) -> Result<Regime> {
    config.validate()?;
    let (a, b) = config.interval;
    match config.model.kind {
        ModelKind::StationaryExpAlpha | ModelKind::TimeChangedStationary { .. } => Ok(Regime::LocallyStationary),
        ModelKind::VarianceModulated => {
            let interior = a < 0.0 && b > 0.0;
            let alpha = config.model.alpha;
            let beta = config.model.beta.expect("validated");
            Ok(if alpha < beta {
                Regime::CorrelationDominated { interior }
            } else if alpha == beta {
                Regime::Balanced { interior }
            } else {
                Regime::VarianceDominated { interior }
            })
        }
        ModelKind::Fbm => Err(Error::Regime("fBm has no sojourn asymptotics here".into())),
    }
}

/// `c(a + t)` so that a sampler on `[0, b − a]` sees the original clock.
fn shift_polynomial(p: &Polynomial, a: f64) -> Polynomial {
    let mut coeffs = Vec::with_capacity(p.coeffs.len());
    let mut d = p.clone();
    let mut fact = 1.0;
    for k in 0..p.coeffs.len() {
        if k > 0 {
            fact *= k as f64;
        }
        coeffs.push(d.eval(a) / fact);
        d = d.derivative();
    }
    Polynomial::new(coeffs)
}

/// Sampler for the configured model plus the index range inside `[a, b]`.
fn build_sampler(config: &SojournConfig) -> Result<(PathSampler, std::ops::Range<usize>)> {
    let (a, b) = config.interval;
    let step = config.step();
    let span_of = |len: f64| step * ((len / step * (1.0 + 1e-12)).floor() + 0.5);
    match &config.model.kind {
        ModelKind::VarianceModulated => {
            let half = a.abs().max(b);
            let grid = Grid::symmetric(step, span_of(half))?;
            let sampler = PathSampler::nonstationary(&config.model, grid, Method::Auto)?;
            let pts = grid.points();
            let tol = 1e-9 * step;
            let lo = pts.iter().position(|&t| t >= a - tol).expect("grid covers a");
            let hi = pts.iter().rposition(|&t| t <= b + tol).expect("grid covers b");
            Ok((sampler, lo..hi + 1))
        }
        ModelKind::TimeChangedStationary { rate } => {
            let grid = Grid::one_sided(step, span_of(b - a))?;
            let model = ProcessModel::time_changed(config.model.alpha, shift_polynomial(rate, a));
            let sampler = PathSampler::time_changed(&model, grid, Method::Auto)?;
            let len = grid.len();
            Ok((sampler, 0..len))
        }
        _ => {
            let grid = Grid::one_sided(step, span_of(b - a))?;
            let sampler = PathSampler::for_model(&config.model, grid, Method::Auto)?;
            let len = grid.len();
            Ok((sampler, 0..len))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailPoint {
    pub x: f64,
    pub count: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub predicted: Option<f64>,
    pub ratio: Option<f64>,
    pub ratio_low: Option<f64>,
    pub ratio_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCurve {
    pub u: f64,
    pub v_u: f64,
    pub eta: f64,
    pub step: f64,
    pub interval: (f64, f64),
    pub level: f64,
    pub regime: Option<Regime>,
    /// Scaling factor multiplying the constant in the prediction.
    pub normalizer: Option<f64>,
    pub points: Vec<TailPoint>,
}

impl TailCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,count,n,p_hat,ci_low,ci_high,predicted,ratio")?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{},{}",
                p.x,
                p.count,
                p.n,
                p.p_hat,
                p.ci_low,
                p.ci_high,
                opt(p.predicted),
                opt(p.ratio)
            )?;
        }
        Ok(())
    }

    /// Fills the prediction columns from `prediction`.
    pub fn attach(&mut self, prediction: &Prediction) {
        self.regime = Some(prediction.regime);
        self.normalizer = Some(prediction.normalizer);
        for (p, c) in self.points.iter_mut().zip(&prediction.constants) {
            let predicted = c.mean * prediction.normalizer;
            p.predicted = Some(predicted);
            if predicted > 0.0 && c.ci_low > 0.0 {
                p.ratio = Some(p.p_hat / predicted);
                p.ratio_low = Some(p.ci_low / (c.ci_high * prediction.normalizer));
                p.ratio_high = Some(p.ci_high / (c.ci_low * prediction.normalizer));
            } else {
                p.ratio = None;
                p.ratio_low = None;
                p.ratio_high = None;
            }
        }
    }
}

/// Expected number of exceeding paths at `x = 0` from the asymptotic formula
/// with lower-bound constants.
pub fn preflight_expected_count(config: &SojournConfig) -> Result<f64> {
    let regime = resolve_regime(config)?;
    let u = config.u;
    let psi = normal_survival(u);
    let alpha = config.model.alpha;
    let h_low = pickands_lower_bound_new(alpha)?;
    let (a, b) = config.interval;
    let p = match regime {
        Regime::LocallyStationary => {
            let mass = match &config.model.kind {
                ModelKind::TimeChangedStationary { rate } => {
                    // ∫ H^{1/α} = ∫ c'(t) dt = c(b) − c(a)
                    rate.eval(b) - rate.eval(a)
                }
                _ => b - a,
            };
            h_low * mass * config.v_u() * psi
        }
        Regime::CorrelationDominated { interior } => {
            let beta = config.model.beta.expect("validated");
            let bb = config.model.b.expect("validated");
            let sides = if interior { 2.0 } else { 1.0 };
            sides * bb.powf(-1.0 / beta) * gamma_fn(1.0 / beta + 1.0)? * h_low * u.powf(2.0 / alpha - 2.0 / beta) * psi
        }
        Regime::Balanced { .. } | Regime::VarianceDominated { .. } => psi,
    };
    Ok(config.n as f64 * p.min(1.0))
}

fn preflight(config: &SojournConfig) -> Result<()> {
    let expected = preflight_expected_count(config)?;
    let p = expected / config.n as f64;
    let suggested_n = (PREFLIGHT_MIN_COUNT as f64 / p).ceil() as u64;
    if expected < PREFLIGHT_MIN_COUNT as f64 || config.n > MAX_PATHS {
        return Err(Error::Preflight {
            expected_count: expected,
            required: PREFLIGHT_MIN_COUNT,
            suggested_n,
        });
    }
    Ok(())
}

/// Crude-MC tail `P(L* > x)` for each configured `x`, after a cost preflight.
pub fn empirical_tail(config: &SojournConfig) -> Result<TailCurve> {
    config.validate()?;
    preflight(config)?;
    let (sampler, range) = build_sampler(config)?;
    let v_u = config.v_u();
    let cell = if config.eta > 0.0 { config.eta } else { v_u * config.step() };
    let xs = &config.x_values;
    let u = config.u;
    let counts = run_batched(
        &config.mc(),
        |stream, count| {
            let mut gen = sampler.generator();
            let mut values = vec![0.0; sampler.grid().len()];
            let mut hits = vec![0u64; xs.len()];
            for _ in 0..count {
                gen.next_into(stream, &mut values);
                let l = sojourn_on_values(&values[range.clone()], u, cell);
                for (h, &x) in hits.iter_mut().zip(xs) {
                    *h += u64::from(l > x);
                }
            }
            hits
        },
        |a: &mut Vec<u64>, b| {
            if a.is_empty() {
                *a = b;
            } else {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        },
    );
    let counts = if counts.is_empty() { vec![0; xs.len()] } else { counts };
    let points = xs
        .iter()
        .zip(counts)
        .map(|(&x, count)| {
            let (ci_low, ci_high) = wilson_interval(count, config.n, config.level)?;
            Ok(TailPoint {
                x,
                count,
                n: config.n,
                p_hat: count as f64 / config.n as f64,
                ci_low,
                ci_high,
                predicted: None,
                ratio: None,
                ratio_low: None,
                ratio_high: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TailCurve {
        u,
        v_u,
        eta: config.eta,
        step: config.step(),
        interval: config.interval,
        level: config.level,
        regime: None,
        normalizer: None,
        points,
    })
}

/// A constant required by a prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstantQuery {
    /// `B_α^{η,H}(x)` over `[0, horizon]`.
    LocallyStationary {
        alpha: f64,
        eta: f64,
        x: f64,
        h: HFunction,
        horizon: f64,
    },
    /// `B_α^η(x)`.
    BermanRate { alpha: f64, eta: f64, x: f64 },
    /// `P_α^{b,η}(x)` over `[−S, S]` (interior) or `[0, S]`.
    Piterbarg {
        alpha: f64,
        b: f64,
        eta: f64,
        x: f64,
        interior: bool,
    },
}

pub trait ConstantsSource {
    fn constant(&self, query: &ConstantQuery) -> Result<McEstimate>;
}

impl<F> ConstantsSource for F
where
    F: Fn(&ConstantQuery) -> Result<McEstimate>,
{
    fn constant(&self, query: &ConstantQuery) -> Result<McEstimate> {
        self(query)
    }
}

/// Constants estimated by Monte Carlo.
///
/// For `η = 0` the Berman constants are evaluated through the occupation
/// representation `B_α^0(x) = B̃_α(x)` and the scaling identity, which share
/// one set of paths and have far lighter tails than the supremum form.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConstants {
    pub mc: McConfig,
    pub step: f64,
    pub span: f64,
    pub piterbarg_span: f64,
    pub s_list: Vec<f64>,
    pub nodes: usize,
}

impl MonteCarloConstants {
    pub fn new(mc: McConfig) -> Self {
        Self {
            mc,
            step: DEFAULT_STEP,
            span: DEFAULT_SPAN,
            piterbarg_span: DEFAULT_PITERBARG_SPAN,
            s_list: vec![2.0, 4.0],
            nodes: MIN_QUADRATURE_NODES,
        }
    }
}

impl ConstantsSource for MonteCarloConstants {
    fn constant(&self, query: &ConstantQuery) -> Result<McEstimate> {
        let mc = &self.mc;
        match query {
            ConstantQuery::LocallyStationary { alpha, eta, x, h, horizon } => {
                let width = horizon / self.nodes as f64;
                let dilations: Vec<f64> = (0..self.nodes)
                    .map(|j| h.eval((j as f64 + 0.5) * width).powf(1.0 / alpha))
                    .collect();
                if *eta == 0.0 {
                    if *x == 0.0 && dilations.iter().all(|&d| d == dilations[0]) {
                        let est = estimate_pickands_berman(*alpha, self.span, self.step, mc)?;
                        return Ok(est.value.scaled(horizon * dilations[0]));
                    }
                    let terms: Vec<(f64, f64)> = dilations.iter().map(|&d| (width * d, d * x)).collect();
                    let est = estimate_btilde_mixture(*alpha, &terms, self.span, self.step, mc)?;
                    return Ok(est.value);
                }
                if dilations.iter().all(|&d| d == 1.0) {
                    let est = estimate_berman_rate(*alpha, *eta, *x, &self.s_list, self.step, mc)?;
                    return Ok(est.value.scaled(*horizon));
                }
                let spec = LocallyStationarySpec {
                    alpha: *alpha,
                    eta: *eta,
                    x: *x,
                    h: h.clone(),
                    horizon: *horizon,
                    span: *self.s_list.last().expect("non-empty"),
                    step: self.step,
                    nodes: self.nodes,
                };
                Ok(estimate_berman_locally_stationary(&spec, mc)?.value)
            }
            ConstantQuery::BermanRate { alpha, eta, x } => {
                if *eta == 0.0 {
                    let est = estimate_btilde_mixture(*alpha, &[(1.0, *x)], self.span, self.step, mc)?;
                    Ok(est.value)
                } else {
                    Ok(estimate_berman_rate(*alpha, *eta, *x, &self.s_list, self.step, mc)?.value)
                }
            }
            ConstantQuery::Piterbarg { alpha, b, eta, x, interior } => {
                let sided = if *interior { Sided::Symmetric } else { Sided::OneSided };
                Ok(estimate_piterbarg(*alpha, *b, *eta, self.piterbarg_span, *x, self.step, sided, mc)?.value)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub regime: Regime,
    pub normalizer: f64,
    /// Constant multiplying `normalizer`, per configured `x`.
    pub constants: Vec<McEstimate>,
    /// True when every constant is a closed form.
    pub closed_form: bool,
}

impl Prediction {
    pub fn predicted(&self) -> Vec<f64> {
        self.constants.iter().map(|c| c.mean * self.normalizer).collect()
    }

    /// The same constants under a different level `u`.
    fn rescaled(&self, config: &SojournConfig) -> Result<Prediction> {
        Ok(Prediction {
            normalizer: normalizer(config, self.regime)?,
            ..self.clone()
        })
    }
}

fn normalizer(config: &SojournConfig, regime: Regime) -> Result<f64> {
    let u = config.u;
    let psi = normal_survival(u);
    Ok(match regime {
        Regime::LocallyStationary => config.v_u() * psi,
        Regime::CorrelationDominated { interior } => {
            let alpha = config.model.alpha;
            let beta = config.model.beta.expect("validated");
            let b = config.model.b.expect("validated");
            let sides = if interior { 2.0 } else { 1.0 };
            sides * b.powf(-1.0 / beta) * gamma_fn(1.0 / beta + 1.0)? * u.powf(2.0 / alpha - 2.0 / beta) * psi
        }
        Regime::Balanced { .. } | Regime::VarianceDominated { .. } => psi,
    })
}

/// Asymptotic `P(L* > x)` for each configured `x`.
pub fn asymptotic_prediction(config: &SojournConfig, source: &dyn ConstantsSource) -> Result<Prediction> {
    let regime = resolve_regime(config)?;
    let alpha = config.model.alpha;
    let eta = config.eta;
    let (a, b) = config.interval;
    let mut closed_form = false;
    let constants = config
        .x_values
        .iter()
        .map(|&x| match regime {
            Regime::LocallyStationary => {
                let h = match &config.model.kind {
                    ModelKind::TimeChangedStationary { rate } => HFunction::RatePower {
                        rate: shift_polynomial(rate, a).coeffs,
                        alpha,
                    },
                    _ => HFunction::constant(1.0),
                };
                source.constant(&ConstantQuery::LocallyStationary {
                    alpha,
                    eta,
                    x,
                    h,
                    horizon: b - a,
                })
            }
            Regime::CorrelationDominated { .. } => source.constant(&ConstantQuery::BermanRate { alpha, eta, x }),
            Regime::Balanced { interior } => source.constant(&ConstantQuery::Piterbarg {
                alpha,
                b: config.model.b.expect("validated"),
                eta,
                x,
                interior,
            }),
            Regime::VarianceDominated { interior } => {
                closed_form = true;
                let beta = config.model.beta.expect("validated");
                let bb = config.model.b.expect("validated");
                let t = t_constant_closed(beta, bb, eta, x, interior)?;
                Ok(McEstimate::exact(t, config.n, config.level))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prediction {
        regime,
        normalizer: normalizer(config, regime)?,
        constants,
        closed_form,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceRow {
    pub u: f64,
    pub x: f64,
    pub count: u64,
    pub predicted: f64,
    pub ratio: Option<f64>,
    pub ratio_low: Option<f64>,
    pub ratio_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Per `x`: `None` when ratios are undefined at some level, otherwise
    /// whether `|ratio − 1|` is non-increasing in `u` within intervals.
    pub trend: Vec<(f64, Option<bool>)>,
    pub trend_flag: bool,
    pub curves: Vec<TailCurve>,
}

/// Distance range of `[lo, hi]` from 1.
fn distance_from_one(lo: f64, hi: f64) -> (f64, f64) {
    let far = (lo - 1.0).abs().max((hi - 1.0).abs());
    let near = if lo <= 1.0 && 1.0 <= hi { 0.0 } else { (lo - 1.0).abs().min((hi - 1.0).abs()) };
    (near, far)
}

/// Tail curves and ratios over increasing levels. The trend flag is true
/// when, at every `x` with defined ratios, `|ratio − 1|` is not
/// significantly larger at a higher level than at the preceding one.
pub fn convergence_report(config: &SojournConfig, u_list: &[f64], source: &dyn ConstantsSource) -> Result<ConvergenceReport> {
    if u_list.len() < 2 || u_list.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("at least two strictly increasing levels are required");
    }
    for &u in u_list {
        preflight(&config.with_u(u))?;
    }
    let base = asymptotic_prediction(&config.with_u(u_list[0]), source)?;
    let mut curves = Vec::with_capacity(u_list.len());
    for (i, &u) in u_list.iter().enumerate() {
        let mut level = config.with_u(u);
        level.seed = derive_seed(config.seed, &format!("level-{i}"));
        let mut curve = empirical_tail(&level)?;
        curve.attach(&base.rescaled(&level)?);
        curves.push(curve);
    }
    let mut rows = Vec::new();
    for curve in &curves {
        for p in &curve.points {
            rows.push(ConvergenceRow {
                u: curve.u,
                x: p.x,
                count: p.count,
                predicted: p.predicted.unwrap_or(0.0),
                ratio: p.ratio,
                ratio_low: p.ratio_low,
                ratio_high: p.ratio_high,
            });
        }
    }
    let mut trend = Vec::new();
    for (j, &x) in config.x_values.iter().enumerate() {
        let bounds: Option<Vec<(f64, f64)>> = curves
            .iter()
            .map(|c| Some((c.points[j].ratio_low?, c.points[j].ratio_high?)))
            .collect();
        let flag = bounds.map(|b| {
            b.windows(2).all(|w| {
                let (_, far_prev) = distance_from_one(w[0].0, w[0].1);
                let (near_next, _) = distance_from_one(w[1].0, w[1].1);
                near_next <= far_prev
            })
        });
        trend.push((x, flag));
    }
    let trend_flag = trend.iter().all(|(_, f)| f.unwrap_or(true)) && trend.iter().any(|(_, f)| f.is_some());
    Ok(ConvergenceReport {
        rows,
        trend,
        trend_flag,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{Grid, ModelId};

    fn path(values: Vec<f64>, step: f64) -> PathSample {
        let grid = Grid::one_sided(step, step * (values.len() - 1) as f64 + step / 4.0).unwrap();
        PathSample {
            grid,
            values,
            model_id: ModelId {
                model: "test".into(),
                alpha: 1.0,
                beta: None,
                b: None,
                drift_coefficient: None,
                rate: None,
                h_first: None,
                h_last: None,
                method: "none".into(),
            },
        }
    }

    #[test]
    fn sojourn_examples() {
        let p = path(vec![5.0; 11], 0.1);
        assert!((sojourn_functional(&p, 3.0, 0.0, 9.0).unwrap() - 9.0 * 1.1).abs() < 1e-12);
        let p = path(vec![0.0; 11], 0.1);
        assert_eq!(sojourn_functional(&p, 3.0, 0.0, 9.0).unwrap(), 0.0);
        let mut v = vec![0.0; 11];
        v[4] = 4.0;
        let p = path(v, 0.5 / 9.0);
        assert_eq!(sojourn_functional(&p, 3.0, 0.5, 9.0).unwrap(), 0.5);
        assert!(sojourn_functional(&p, 3.0, 0.7, 9.0).is_err());
    }

    #[test]
    fn riemann_and_lattice_sojourn_coincide() {
        let step = 0.013;
        let v_u = 7.3;
        let p = path((0..50).map(|i| (i as f64 * 0.37).sin() * 4.0).collect(), step);
        let a = sojourn_functional(&p, 1.1, 0.0, v_u).unwrap();
        let b = sojourn_functional(&p, 1.1, v_u * step, v_u).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn midpoints_avoid_jumps() {
        assert_eq!(midpoint_x_grid(0.2, 3, true), vec![0.1, 0.4, 0.8]);
        let b = midpoint_x_grid(0.2, 2, false);
        assert!((b[0] - 0.1).abs() < 1e-15 && (b[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn shifted_polynomial() {
        let p = Polynomial::new(vec![1.0, 2.0, 3.0]);
        let q = shift_polynomial(&p, 0.7);
        for t in [0.0, 0.3, 1.1] {
            assert!((q.eval(t) - p.eval(t + 0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn regimes() {
        let m = |a, b| ProcessModel::variance_modulated(a, b, 1.0);
        let cfg = |model, iv| SojournConfig::new(model, iv, 0.0, 3.0, vec![0.0], 1000, 1);
        assert_eq!(resolve_regime(&cfg(m(1.0, 0.5), (-1.0, 1.0))).unwrap(), Regime::VarianceDominated { interior: true });
        assert_eq!(resolve_regime(&cfg(m(1.0, 1.0), (0.0, 1.0))).unwrap(), Regime::Balanced { interior: false });
        assert_eq!(resolve_regime(&cfg(m(1.0, 2.0), (-1.0, 1.0))).unwrap(), Regime::CorrelationDominated { interior: true });
        assert!(resolve_regime(&cfg(m(1.0, 2.0), (0.5, 1.0))).is_err());
        assert!(matches!(resolve_regime(&cfg(ProcessModel::fbm(1.0), (0.0, 1.0))), Err(Error::Regime(_))));
        assert_eq!(resolve_regime(&cfg(ProcessModel::stationary(1.0), (0.0, 1.0))).unwrap(), Regime::LocallyStationary);
    }

    #[test]
    fn regime_three_prediction_is_closed_form() {
        let model = ProcessModel::variance_modulated(1.0, 0.5, 1.0);
        let t = default_half_window(0.5, 1.0, 3.0);
        let cfg = SojournConfig::new(model, (-t, t), 0.0, 3.0, vec![0.0, 0.5, 2.0], 1000, 1);
        let never = |_: &ConstantQuery| -> Result<McEstimate> { panic!("no constants needed") };
        let p = asymptotic_prediction(&cfg, &never).unwrap();
        assert!(p.closed_form);
        for (c, x) in p.constants.iter().zip([0.0, 0.5, 2.0f64]) {
            assert!((c.mean - (-(x / 2.0).sqrt()).exp()).abs() < 1e-15);
        }
        assert!((p.normalizer - normal_survival(3.0)).abs() < 1e-18);
    }

    #[test]
    fn preflight_refuses_rare_levels() {
        let cfg = SojournConfig::new(ProcessModel::stationary(1.0), (0.0, 1.0), 0.0, 5.0, vec![0.0], 10_000, 1);
        match empirical_tail(&cfg) {
            Err(Error::Preflight { suggested_n, .. }) => assert!(suggested_n > 10_000),
            other => panic!("expected refusal, got {other:?}"),
        }
    }
}
