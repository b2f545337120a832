//! Monte-Carlo estimators of Pickands, Berman and Piterbarg type constants.
//!
//! The random exponential level is integrated out per path: for a path with
//! values `w_i` on cells of measure `c`, the occupation `m(z) = c·#{w_i + z > 0}`
//! exceeds `x` exactly when `z > −w_(k)`, the `k`-th largest value with
//! `k·c > x`, so `∫ 1{m(z) > x} e^{−z} dz = e^{w_(k)}`.
//!
//! For `η = 0` the continuous measure is approximated on a grid of spacing
//! `step`. Each path is drawn on the nested grid of spacing `step/2`; the
//! reported value is the per-path Richardson combination
//! `(2^p f_fine − f_coarse)/(2^p − 1)` with `p = α/2`, and both grid values
//! are kept in the diagnostics.

use serde::{Deserialize, Serialize};

use crate::analytic::{cells_to_exceed, lattice_last_index};
use crate::error::{domain, Error, Result};
use crate::paths::{Grid, Method, PathSampler, Polynomial, Sided};
use crate::stats::{
    derive_seed, finalize, run_batched, z_for_level, Accumulator, CountHistogram, McConfig, McEstimate,
    Proportion, Stream,
};

pub const DEFAULT_STEP: f64 = 0.01;
pub const MAX_STEP: f64 = 0.05;
pub const DEFAULT_SPAN: f64 = 10.0;
pub const DEFAULT_PITERBARG_SPAN: f64 = 8.0;
pub const MIN_PATHS: u64 = 1000;
pub const MIN_QUADRATURE_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantId {
    PickandsBerman,
    OccupationMean,
    PickandsSup,
    BermanFinite,
    BermanRate,
    BermanLocallyStationary,
    Piterbarg,
    PiterbargSup,
    GCdf,
    Btilde,
    Tilt,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantParams {
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub b: Option<f64>,
    pub eta: Option<f64>,
    pub x: Option<f64>,
    pub horizon: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowValue {
    pub span: f64,
    pub value: McEstimate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    /// Value on the grid of spacing `step`.
    pub raw: Option<McEstimate>,
    /// Value on the nested grid of spacing `step/2`.
    pub fine: Option<McEstimate>,
    pub richardson_exponent: Option<f64>,
    /// 0.999 quantile of `1/I` on the `step` grid.
    pub inverse_occupation_q999: Option<f64>,
    pub grid_limited: bool,
    pub per_window: Vec<WindowValue>,
    /// `value / S` for window-normalised constants.
    pub normalized: Option<McEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantEstimate {
    pub constant_id: ConstantId,
    pub value: McEstimate,
    pub window: f64,
    pub step: f64,
    pub sided: Sided,
    pub params: ConstantParams,
    pub diagnostics: Diagnostics,
}

impl ConstantEstimate {
    pub fn mean(&self) -> f64 {
        self.value.mean
    }

    pub fn stderr(&self) -> f64 {
        self.value.stderr
    }
}

/// Local-stationarity function `H(t)` for the locally stationary Berman rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HFunction {
    Polynomial { coeffs: Vec<f64> },
    /// `H(t) = c'(t)^α` of the time change `c`.
    RatePower { rate: Vec<f64>, alpha: f64 },
}

impl HFunction {
    pub fn constant(h: f64) -> Self {
        HFunction::Polynomial { coeffs: vec![h] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            HFunction::Polynomial { coeffs } => Polynomial::new(coeffs.clone()).eval(t),
            HFunction::RatePower { rate, alpha } => {
                Polynomial::new(rate.clone()).derivative().eval(t).powf(*alpha)
            }
        }
    }
}

/// `m(z)`: measure of cells with `w_i + z > 0`.
pub fn occupation_at_level(values: &[f64], cell: f64, z: f64) -> f64 {
    cell * values.iter().filter(|&&w| w + z > 0.0).count() as f64
}

/// The `k`-th largest value (1-based), or `None` when `k` exceeds the length.
pub fn kth_largest(values: &[f64], k: usize, scratch: &mut Vec<f64>) -> Option<f64> {
    if k == 0 || k > values.len() {
        return None;
    }
    if k == 1 {
        return Some(values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    scratch.clear();
    scratch.extend_from_slice(values);
    let (_, v, _) = scratch.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Some(*v)
}

/// `∫ 1{m(z) > x} e^{−z} dz = e^{−z*}` for one path; 0 when `x` is at least
/// the total cell measure.
pub fn level_functional(values: &[f64], cell: f64, x: f64, scratch: &mut Vec<f64>) -> f64 {
    let k = cells_to_exceed(x, cell);
    match usize::try_from(k).ok().and_then(|k| kth_largest(values, k, scratch)) {
        Some(w) => w.exp(),
        None => 0.0,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        domain(format!("alpha must lie in (0, 2], got {alpha}"))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive, got {v}"))
    }
}

fn check_step(step: f64) -> Result<()> {
    check_positive("step", step)?;
    if step > MAX_STEP {
        return domain(format!("step {step} exceeds {MAX_STEP}"));
    }
    Ok(())
}

fn check_mc(mc: &McConfig) -> Result<()> {
    if mc.n < MIN_PATHS {
        return domain(format!("at least {MIN_PATHS} paths are required, got {}", mc.n));
    }
    z_for_level(mc.level)?;
    Ok(())
}

fn check_x(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        domain(format!("x must be finite and non-negative, got {x}"))
    }
}

/// Coarse, fine and Richardson-combined per-path values.
#[derive(Debug, Clone, Default)]
struct Triple {
    coarse: Accumulator,
    fine: Accumulator,
    rich: Accumulator,
}

impl Triple {
    fn push(&mut self, coarse: f64, fine: f64, weight: f64) {
        self.coarse.push(coarse);
        self.fine.push(fine);
        self.rich.push((weight * fine - coarse) / (weight - 1.0));
    }

    fn merge(&mut self, other: &Triple) {
        self.coarse.merge(&other.coarse);
        self.fine.merge(&other.fine);
        self.rich.merge(&other.rich);
    }

    /// Headline (Richardson) estimate with the grid pair in `diag`.
    fn finish(&self, level: f64, exponent: f64, diag: &mut Diagnostics) -> Result<McEstimate> {
        diag.raw = Some(finalize(&self.coarse, level)?);
        diag.fine = Some(finalize(&self.fine, level)?);
        diag.richardson_exponent = Some(exponent);
        finalize(&self.rich, level)
    }
}

/// Runs `observe(values, stream)` on `mc.n` paths from `sampler`.
fn run_paths<A, F>(sampler: &PathSampler, mc: &McConfig, observe: F, merge: impl Fn(&mut A, A)) -> A
where
    A: Default + Send,
    F: Fn(&mut A, &[f64], &mut Stream) + Sync,
{
    run_batched(
        mc,
        |stream, count| {
            let mut gen = sampler.generator();
            let mut values = vec![0.0; sampler.grid().len()];
            let mut acc = A::default();
            for _ in 0..count {
                gen.next_into(stream, &mut values);
                observe(&mut acc, &values, stream);
            }
            acc
        },
        merge,
    )
}

/// The drifted field on the `step/2` grid with indices of the `step` grid.
struct Nested {
    sampler: PathSampler,
    coarse: Vec<usize>,
    weight: f64,
    exponent: f64,
}

impl Nested {
    fn new(alpha: f64, b_drift: f64, grid: Grid) -> Result<Self> {
        let fine = grid.refined();
        let sampler = PathSampler::drifted(alpha, b_drift, fine, Method::Auto)?;
        let coarse = grid.nested_indices(&fine)?;
        let exponent = alpha / 2.0;
        Ok(Self {
            sampler,
            coarse,
            weight: 2f64.powf(exponent),
            exponent,
        })
    }

    fn gather(&self, values: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.coarse.iter().map(|&i| values[i]));
    }
}

#[derive(Default)]
struct OccupationObs {
    inverse: Triple,
    occupation: Triple,
    btilde: Triple,
    below: u64,
    below_fine: u64,
    counts: CountHistogram,
}

impl OccupationObs {
    fn merge(&mut self, other: OccupationObs) {
        self.inverse.merge(&other.inverse);
        self.occupation.merge(&other.occupation);
        self.btilde.merge(&other.btilde);
        self.below += other.below;
        self.below_fine += other.below_fine;
        self.counts.merge(&other.counts);
    }
}

/// Draws `I = ∫ 1{W_α(s) + E > 0} ds` over `[−S, S]` on both grids.
///
/// `terms` are the `(weight, x)` pairs of `Σ w·1{I > x}/I`; `x` is the
/// threshold of the `P(I ≤ x)` count.
fn occupation_run(
    alpha: f64,
    span: f64,
    step: f64,
    terms: &[(f64, f64)],
    x: f64,
    mc: &McConfig,
) -> Result<(OccupationObs, Nested)> {
    check_alpha(alpha)?;
    check_positive("span", span)?;
    check_step(step)?;
    check_x(x)?;
    for &(w, t) in terms {
        check_x(t)?;
        if !w.is_finite() {
            return domain(format!("mixture weight {w} is not finite"));
        }
    }
    check_mc(mc)?;
    let grid = Grid::symmetric(step, span)?;
    let nested = Nested::new(alpha, 0.0, grid)?;
    let half = step / 2.0;
    let obs = run_paths(
        &nested.sampler,
        mc,
        |acc: &mut OccupationObs, values, stream| {
            let e = stream.exponential();
            let fine_count = values.iter().filter(|&&w| w + e > 0.0).count();
            let coarse_count = nested.coarse.iter().filter(|&&i| values[i] + e > 0.0).count();
            let (ic, i_f) = (step * coarse_count as f64, half * fine_count as f64);
            let w = nested.weight;
            acc.inverse.push(1.0 / ic, 1.0 / i_f, w);
            acc.occupation.push(ic, i_f, w);
            let tail = |i: f64| {
                terms
                    .iter()
                    .map(|&(w, t)| if i > t { w / i } else { 0.0 })
                    .sum::<f64>()
            };
            acc.btilde.push(tail(ic), tail(i_f), w);
            acc.below += u64::from(ic <= x);
            acc.below_fine += u64::from(i_f <= x);
            acc.counts.push(coarse_count as u64);
        },
        |a: &mut OccupationObs, b| a.merge(b),
    );
    Ok((obs, nested))
}

fn occupation_params(alpha: f64, x: Option<f64>) -> ConstantParams {
    ConstantParams {
        alpha: Some(alpha),
        x,
        ..Default::default()
    }
}

fn heavy_tail_guard(obs: &OccupationObs, step: f64, diag: &mut Diagnostics) {
    if let Some(c) = obs.counts.quantile(0.001) {
        let q = 1.0 / (step * c.max(1) as f64);
        diag.inverse_occupation_q999 = Some(q);
        diag.grid_limited = q > 0.5 / step;
    }
}

/// `H_α = E[1/I]` with `I` the occupation of `W_α + E` over `[−S, S]`.
pub fn estimate_pickands_berman(alpha: f64, span: f64, step: f64, mc: &McConfig) -> Result<ConstantEstimate> {
    let (obs, nested) = occupation_run(alpha, span, step, &[], 0.0, mc)?;
    let mut diag = Diagnostics::default();
    heavy_tail_guard(&obs, step, &mut diag);
    let value = obs.inverse.finish(mc.level, nested.exponent, &mut diag)?;
    Ok(ConstantEstimate {
        constant_id: ConstantId::PickandsBerman,
        value,
        window: span,
        step,
        sided: Sided::Symmetric,
        params: occupation_params(alpha, None),
        diagnostics: diag,
    })
}

/// `E[I]`, whose exact value is given by [`crate::analytic::expected_occupation`].
pub fn estimate_occupation_mean(alpha: f64, span: f64, step: f64, mc: &McConfig) -> Result<ConstantEstimate> {
    let (obs, nested) = occupation_run(alpha, span, step, &[], 0.0, mc)?;
    let mut diag = Diagnostics::default();
    let value = obs.occupation.finish(mc.level, nested.exponent, &mut diag)?;
    Ok(ConstantEstimate {
        constant_id: ConstantId::OccupationMean,
        value,
        window: span,
        step,
        sided: Sided::Symmetric,
        params: occupation_params(alpha, None),
        diagnostics: diag,
    })
}

/// `B̃_α(x) = E[1{I > x}/I]`.
pub fn estimate_btilde(alpha: f64, x: f64, span: f64, step: f64, mc: &McConfig) -> Result<ConstantEstimate> {
    let mut est = estimate_btilde_mixture(alpha, &[(1.0, x)], span, step, mc)?;
    est.params.x = Some(x);
    Ok(est)
}

/// `E[Σ_j w_j 1{I > x_j}/I]` from one set of paths. With the scaling
/// identity this gives `∫ H(t)^{1/α} B̃_α(H(t)^{1/α} x) dt` as a single
/// mixture over quadrature nodes.
pub fn estimate_btilde_mixture(
    alpha: f64,
    terms: &[(f64, f64)],
    span: f64,
    step: f64,
    mc: &McConfig,
) -> Result<ConstantEstimate> {
    if terms.is_empty() {
        return domain("mixture needs at least one term");
    }
    let (obs, nested) = occupation_run(alpha, span, step, terms, 0.0, mc)?;
    let mut diag = Diagnostics::default();
    heavy_tail_guard(&obs, step, &mut diag);
    let value = obs.btilde.finish(mc.level, nested.exponent, &mut diag)?;
    Ok(ConstantEstimate {
        constant_id: ConstantId::Btilde,
        value,
        window: span,
        step,
        sided: Sided::Symmetric,
        params: occupation_params(alpha, None),
        diagnostics: diag,
    })
}

/// `G_α(x) = P(I ≤ x)` on the `step` grid with a Wilson interval.
pub fn estimate_g_cdf(alpha: f64, span: f64, step: f64, mc: &McConfig, x: f64) -> Result<ConstantEstimate> {
    let (obs, _) = occupation_run(alpha, span, step, &[], x, mc)?;
    let raw = Proportion::new(obs.below, mc.n, mc.level)?.to_estimate();
    let fine = Proportion::new(obs.below_fine, mc.n, mc.level)?.to_estimate();
    Ok(ConstantEstimate {
        constant_id: ConstantId::GCdf,
        value: raw,
        window: span,
        step,
        sided: Sided::Symmetric,
        params: occupation_params(alpha, Some(x)),
        diagnostics: Diagnostics {
            raw: Some(raw),
            fine: Some(fine),
            ..Default::default()
        },
    })
}

/// `H_α([0, S]) = E[sup_{[0,S]} e^{W_α}]`; `normalized` holds the value over `S`.
pub fn estimate_pickands_sup(alpha: f64, span: f64, step: f64, mc: &McConfig) -> Result<ConstantEstimate> {
    let mut est = sup_form(alpha, 0.0, span, step, Sided::OneSided, mc)?;
    est.diagnostics.normalized = Some(est.value.scaled(1.0 / span));
    Ok(est)
}

/// `E[sup e^{W_α(s) − b|s|^α}]` over the window, evaluated as a plain maximum.
pub fn estimate_piterbarg_sup(alpha: f64, b: f64, span: f64, step: f64, sided: Sided, mc: &McConfig) -> Result<ConstantEstimate> {
    check_positive("b", b)?;
    sup_form(alpha, b, span, step, sided, mc)
}

fn sup_form(alpha: f64, b: f64, span: f64, step: f64, sided: Sided, mc: &McConfig) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_positive("span", span)?;
    check_step(step)?;
    check_mc(mc)?;
    let nested = Nested::new(alpha, b, Grid::new(step, span, sided)?)?;
    let acc = run_paths(
        &nested.sampler,
        mc,
        |acc: &mut Triple, values, _| {
            let fine = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let coarse = nested.coarse.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
            acc.push(coarse.exp(), fine.exp(), nested.weight);
        },
        |a: &mut Triple, b| a.merge(&b),
    );
    let mut diag = Diagnostics::default();
    let value = acc.finish(mc.level, nested.exponent, &mut diag)?;
    Ok(ConstantEstimate {
        constant_id: if b > 0.0 { ConstantId::PiterbargSup } else { ConstantId::PickandsSup },
        value,
        window: span,
        step,
        sided,
        params: ConstantParams {
            alpha: Some(alpha),
            b: (b > 0.0).then_some(b),
            eta: Some(0.0),
            x: Some(0.0),
            ..Default::default()
        },
        diagnostics: diag,
    })
}

/// Parameters of the finite-window Berman constant `B_{α,λ}^η(S, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BermanSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub eta: f64,
    pub span: f64,
    pub x: f64,
    /// Simulation spacing of the field for `η = 0`, in the field's time scale.
    pub step: f64,
    pub sided: Sided,
}

impl BermanSpec {
    pub fn new(alpha: f64, lambda: f64, eta: f64, span: f64, x: f64) -> Self {
        Self {
            alpha,
            lambda,
            eta,
            span,
            x,
            step: DEFAULT_STEP,
            sided: Sided::OneSided,
        }
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_positive("lambda", self.lambda)?;
        check_positive("span", self.span)?;
        check_x(self.x)?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return domain(format!("eta must be non-negative, got {}", self.eta));
        }
        if self.eta == 0.0 {
            check_step(self.step)?;
        }
        Ok(())
    }
}

/// Generic conditional-MC constant for the field `W_α(λ^{1/α}s) − b|s|^α`
/// (after rescaling) over one window, with the `η = 0` grid pair or the
/// exact `η` lattice.
fn level_constant(
    alpha: f64,
    dilation: f64,
    b: f64,
    eta: f64,
    span: f64,
    x: f64,
    step: f64,
    sided: Sided,
    mc: &McConfig,
) -> Result<(McEstimate, Diagnostics)> {
    check_mc(mc)?;
    let mut diag = Diagnostics::default();
    if eta > 0.0 {
        // lattice points kη, simulated at spacing dilation·η
        let last = lattice_last_index(span, eta) as f64;
        let grid = Grid::new(dilation * eta, dilation * eta * (last + 0.5), sided)?;
        let sampler = PathSampler::drifted(alpha, b, grid, Method::Auto)?;
        let acc = run_paths(
            &sampler,
            mc,
            |acc: &mut (Accumulator, Vec<f64>), values, _| {
                let v = level_functional(values, eta, x, &mut acc.1);
                acc.0.push(v);
            },
            |a: &mut (Accumulator, Vec<f64>), b| a.0.merge(&b.0),
        );
        let value = finalize(&acc.0, mc.level)?;
        diag.raw = Some(value);
        return Ok((value, diag));
    }
    let grid = Grid::new(step, dilation * span, sided)?;
    let nested = Nested::new(alpha, b, grid)?;
    let cell = step / dilation;
    let acc = run_paths(
        &nested.sampler,
        mc,
        |acc: &mut (Triple, Vec<f64>, Vec<f64>), values, _| {
            let (t, scratch, coarse) = acc;
            nested.gather(values, coarse);
            let c = level_functional(coarse, cell, x, scratch);
            let f = level_functional(values, cell / 2.0, x, scratch);
            t.push(c, f, nested.weight);
        },
        |a: &mut (Triple, Vec<f64>, Vec<f64>), b| a.0.merge(&b.0),
    );
    let value = acc.0.finish(mc.level, nested.exponent, &mut diag)?;
    Ok((value, diag))
}

/// `B_{α,λ}^η(S, x) = ∫ P(∫_0^S 1{W_α(λ^{1/α}s) + z > 0} μ_η(ds) > x) e^{−z} dz`.
pub fn estimate_berman_b(spec: &BermanSpec, mc: &McConfig) -> Result<ConstantEstimate> {
    spec.validate()?;
    let dilation = spec.lambda.powf(1.0 / spec.alpha);
    let (value, diagnostics) = level_constant(
        spec.alpha, dilation, 0.0, spec.eta, spec.span, spec.x, spec.step, spec.sided, mc,
    )?;
    Ok(ConstantEstimate {
        constant_id: ConstantId::BermanFinite,
        value,
        window: spec.span,
        step: if spec.eta > 0.0 { spec.eta } else { spec.step },
        sided: spec.sided,
        params: ConstantParams {
            alpha: Some(spec.alpha),
            lambda: Some(spec.lambda),
            eta: Some(spec.eta),
            x: Some(spec.x),
            ..Default::default()
        },
        diagnostics,
    })
}

#[derive(Clone, Default)]
struct RateObs {
    windows: Vec<Triple>,
    slope: Triple,
}

impl RateObs {
    fn merge(&mut self, other: &RateObs) {
        if self.windows.is_empty() {
            self.windows = other.windows.clone();
            self.slope = other.slope.clone();
            return;
        }
        for (a, b) in self.windows.iter_mut().zip(&other.windows) {
            a.merge(b);
        }
        self.slope.merge(&other.slope);
    }
}

/// `B_α^η(x) = lim S^{−1} B_{α,1}^η(S, x)` from the slope between the two
/// largest windows of `s_list`, computed per path on nested windows `[0, S]`.
pub fn estimate_berman_rate(alpha: f64, eta: f64, x: f64, s_list: &[f64], step: f64, mc: &McConfig) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_x(x)?;
    check_mc(mc)?;
    if s_list.len() < 2 || s_list.windows(2).any(|w| !(w[1] > w[0])) || !(s_list[0] > 0.0) {
        return domain("S list must hold at least two strictly increasing positive windows");
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return domain(format!("eta must be non-negative, got {eta}"));
    }
    let s_max = *s_list.last().expect("non-empty");
    let (s1, s2) = (s_list[s_list.len() - 2], s_max);
    let mut diag = Diagnostics::default();
    let (value, per_window) = if eta > 0.0 {
        let last = lattice_last_index(s_max, eta) as f64;
        let grid = Grid::one_sided(eta, eta * (last + 0.5))?;
        let sampler = PathSampler::drifted(alpha, 0.0, grid, Method::Auto)?;
        let ends: Vec<usize> = s_list.iter().map(|&s| lattice_last_index(s, eta) as usize + 1).collect();
        let acc = run_paths(
            &sampler,
            mc,
            |acc: &mut (Vec<Accumulator>, Accumulator, Vec<f64>), values, _| {
                if acc.0.is_empty() {
                    acc.0 = vec![Accumulator::new(); ends.len()];
                }
                let vals: Vec<f64> = ends
                    .iter()
                    .map(|&e| level_functional(&values[..e], eta, x, &mut acc.2))
                    .collect();
                for (a, v) in acc.0.iter_mut().zip(&vals) {
                    a.push(*v);
                }
                let n = vals.len();
                acc.1.push((vals[n - 1] - vals[n - 2]) / (s2 - s1));
            },
            |a: &mut (Vec<Accumulator>, Accumulator, Vec<f64>), b| {
                if a.0.is_empty() {
                    a.0 = b.0;
                } else {
                    for (x, y) in a.0.iter_mut().zip(&b.0) {
                        x.merge(y);
                    }
                }
                a.1.merge(&b.1);
            },
        );
        let per = acc
            .0
            .iter()
            .map(|a| finalize(a, mc.level))
            .collect::<Result<Vec<_>>>()?;
        let value = finalize(&acc.1, mc.level)?;
        diag.raw = Some(value);
        (value, per)
    } else {
        check_step(step)?;
        let grid = Grid::one_sided(step, s_max)?;
        let nested = Nested::new(alpha, 0.0, grid)?;
        let fine_grid = *nested.sampler.grid();
        let coarse_ends: Vec<usize> = s_list.iter().map(|&s| Grid::one_sided(step, s).map(|g| g.len())).collect::<Result<_>>()?;
        let fine_ends: Vec<usize> = s_list
            .iter()
            .map(|&s| Grid::one_sided(fine_grid.step, s).map(|g| g.len()))
            .collect::<Result<_>>()?;
        let cell = step;
        let acc = run_paths(
            &nested.sampler,
            mc,
            |acc: &mut (RateObs, Vec<f64>, Vec<f64>), values, _| {
                let (obs, scratch, coarse) = acc;
                if obs.windows.is_empty() {
                    obs.windows = vec![Triple::default(); s_list.len()];
                }
                nested.gather(values, coarse);
                let mut pairs = Vec::with_capacity(s_list.len());
                for (j, t) in obs.windows.iter_mut().enumerate() {
                    let c = level_functional(&coarse[..coarse_ends[j]], cell, x, scratch);
                    let f = level_functional(&values[..fine_ends[j]], cell / 2.0, x, scratch);
                    t.push(c, f, nested.weight);
                    pairs.push((c, f));
                }
                let n = pairs.len();
                let d = s2 - s1;
                obs.slope.push(
                    (pairs[n - 1].0 - pairs[n - 2].0) / d,
                    (pairs[n - 1].1 - pairs[n - 2].1) / d,
                    nested.weight,
                );
            },
            |a: &mut (RateObs, Vec<f64>, Vec<f64>), b| a.0.merge(&b.0),
        );
        let per = acc
            .0
            .windows
            .iter()
            .map(|t| finalize(&t.rich, mc.level))
            .collect::<Result<Vec<_>>>()?;
        let value = acc.0.slope.finish(mc.level, nested.exponent, &mut diag)?;
        (value, per)
    };
    diag.per_window = s_list
        .iter()
        .zip(per_window)
        .map(|(&span, value)| WindowValue { span, value })
        .collect();
    Ok(ConstantEstimate {
        constant_id: ConstantId::BermanRate,
        value,
        window: s_max,
        step: if eta > 0.0 { eta } else { step },
        sided: Sided::OneSided,
        params: ConstantParams {
            alpha: Some(alpha),
            lambda: Some(1.0),
            eta: Some(eta),
            x: Some(x),
            ..Default::default()
        },
        diagnostics: diag,
    })
}

/// Options for [`estimate_berman_locally_stationary`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocallyStationarySpec {
    pub alpha: f64,
    pub eta: f64,
    pub x: f64,
    pub h: HFunction,
    pub horizon: f64,
    pub span: f64,
    pub step: f64,
    pub nodes: usize,
}

/// `B_α^{η,H}(x) ≈ S^{−1} ∫_0^T B_{α,H(t)}^η(S, x) dt` by the composite
/// midpoint rule. For `η = 0` one simulation on the widest window serves
/// every node through the scaling identity; for `η > 0` nodes sharing a
/// value of `H` share a simulation.
pub fn estimate_berman_locally_stationary(spec: &LocallyStationarySpec, mc: &McConfig) -> Result<ConstantEstimate> {
    let LocallyStationarySpec {
        alpha,
        eta,
        x,
        ref h,
        horizon,
        span,
        step,
        nodes,
    } = *spec;
    check_alpha(alpha)?;
    check_positive("horizon", horizon)?;
    check_positive("span", span)?;
    check_x(x)?;
    check_mc(mc)?;
    if nodes < MIN_QUADRATURE_NODES {
        return domain(format!("at least {MIN_QUADRATURE_NODES} quadrature nodes are required"));
    }
    let width = horizon / nodes as f64;
    let lambdas: Vec<f64> = (0..nodes).map(|j| h.eval((j as f64 + 0.5) * width)).collect();
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return domain(format!("H must be positive on [0, T], found {bad}"));
    }
    // distinct λ values with their quadrature weights
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for &l in &lambdas {
        match groups.iter_mut().find(|g| g.0.to_bits() == l.to_bits()) {
            Some(g) => g.1 += width,
            None => groups.push((l, width)),
        }
    }
    let mut diag = Diagnostics::default();
    let value = if eta == 0.0 {
        check_step(step)?;
        let dilations: Vec<f64> = groups.iter().map(|g| g.0.powf(1.0 / alpha)).collect();
        let widest = dilations.iter().copied().fold(0.0, f64::max);
        let grid = Grid::one_sided(step, widest * span)?;
        let nested = Nested::new(alpha, 0.0, grid)?;
        let fine_step = nested.sampler.grid().step;
        let coarse_ends: Vec<usize> = dilations
            .iter()
            .map(|d| Grid::one_sided(step, d * span).map(|g| g.len().min(grid.len())))
            .collect::<Result<_>>()?;
        let fine_ends: Vec<usize> = dilations
            .iter()
            .map(|d| Grid::one_sided(fine_step, d * span).map(|g| g.len().min(nested.sampler.grid().len())))
            .collect::<Result<_>>()?;
        let acc = run_paths(
            &nested.sampler,
            mc,
            |acc: &mut (Triple, Vec<f64>, Vec<f64>), values, _| {
                let (t, scratch, coarse) = acc;
                nested.gather(values, coarse);
                let (mut c, mut f) = (0.0, 0.0);
                for (g, ((&d, &ce), &fe)) in groups.iter().zip(dilations.iter().zip(&coarse_ends).zip(&fine_ends)) {
                    let cell = step / d;
                    c += g.1 * level_functional(&coarse[..ce], cell, x, scratch);
                    f += g.1 * level_functional(&values[..fe], cell / 2.0, x, scratch);
                }
                t.push(c / span, f / span, nested.weight);
            },
            |a: &mut (Triple, Vec<f64>, Vec<f64>), b| a.0.merge(&b.0),
        );
        acc.0.finish(mc.level, nested.exponent, &mut diag)?
    } else {
        if !eta.is_finite() || eta < 0.0 {
            return domain(format!("eta must be non-negative, got {eta}"));
        }
        let z = z_for_level(mc.level)?;
        let (mut mean, mut var) = (0.0, 0.0);
        for (i, &(lambda, weight)) in groups.iter().enumerate() {
            let sub = mc.with_seed(derive_seed(mc.seed, &format!("locally-stationary-group-{i}")));
            let (v, _) = level_constant(
                alpha,
                lambda.powf(1.0 / alpha),
                0.0,
                eta,
                span,
                x,
                step,
                Sided::OneSided,
                &sub,
            )?;
            mean += weight * v.mean / span;
            var += (weight * v.stderr / span).powi(2);
        }
        let se = var.sqrt();
        McEstimate {
            mean,
            stderr: se,
            n: mc.n,
            ci_low: mean - z * se,
            ci_high: mean + z * se,
            level: mc.level,
        }
    };
    Ok(ConstantEstimate {
        constant_id: ConstantId::BermanLocallyStationary,
        value,
        window: span,
        step: if eta > 0.0 { eta } else { step },
        sided: Sided::OneSided,
        params: ConstantParams {
            alpha: Some(alpha),
            eta: Some(eta),
            x: Some(x),
            horizon: Some(horizon),
            ..Default::default()
        },
        diagnostics: diag,
    })
}

/// Finite-window Piterbarg-type constant
/// `∫ P(∫ 1{W_α(s) − b|s|^α + z > 0} μ_η(ds) > x) e^{−z} dz` over `[−S, S]`
/// (`Symmetric`) or `[0, S]` (`OneSided`).
pub fn estimate_piterbarg(
    alpha: f64,
    b: f64,
    eta: f64,
    span: f64,
    x: f64,
    step: f64,
    sided: Sided,
    mc: &McConfig,
) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_positive("b", b)?;
    check_positive("span", span)?;
    check_x(x)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return domain(format!("eta must be non-negative, got {eta}"));
    }
    if eta == 0.0 {
        check_step(step)?;
    }
    let (value, diagnostics) = level_constant(alpha, 1.0, b, eta, span, x, step, sided, mc)?;
    Ok(ConstantEstimate {
        constant_id: ConstantId::Piterbarg,
        value,
        window: span,
        step: if eta > 0.0 { eta } else { step },
        sided,
        params: ConstantParams {
            alpha: Some(alpha),
            b: Some(b),
            eta: Some(eta),
            x: Some(x),
            ..Default::default()
        },
        diagnostics,
    })
}

/// Crude MC of `P(cW − c²/2 + Z > 0)` with `W` standard normal and `Z` unit
/// exponential.
pub fn estimate_tilt(c: f64, mc: &McConfig) -> Result<ConstantEstimate> {
    check_positive("c", c)?;
    if mc.n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: mc.n });
    }
    let hits = run_batched(
        mc,
        |stream, count| {
            (0..count)
                .filter(|_| {
                    let w = stream.normal();
                    let z = stream.exponential();
                    c * w - c * c / 2.0 + z > 0.0
                })
                .count() as u64
        },
        |a: &mut u64, b| *a += b,
    );
    let p = Proportion::new(hits, mc.n, mc.level)?;
    Ok(ConstantEstimate {
        constant_id: ConstantId::Tilt,
        value: p.to_estimate(),
        window: 0.0,
        step: 0.0,
        sided: Sided::OneSided,
        params: ConstantParams {
            c: Some(c),
            ..Default::default()
        },
        diagnostics: Diagnostics::default(),
    })
}
