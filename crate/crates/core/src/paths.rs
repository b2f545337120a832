//! Exact-in-distribution sampling of Gaussian paths on finite grids.
//!
//! Fractional Brownian motion is built from fractional Gaussian noise by
//! circulant embedding (one complex FFT yields two independent paths);
//! small grids and non-Toeplitz covariances use a dense Cholesky factor.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::stats::Stream;

/// Grids with at most this many points use Cholesky under [`Method::Auto`].
pub const CHOLESKY_MAX_POINTS: usize = 64;
/// Relative tolerance below which negative embedding eigenvalues are clamped.
pub const SPECTRAL_TOLERANCE: f64 = 1e-9;
/// Eigenvalues below this fraction of the largest are FFT roundoff and are
/// zeroed, so degenerate laws (e.g. α = 2) stay exactly degenerate.
const ROUNDOFF_FLOOR: f64 = 1e-12;
/// Largest padding factor tried for stationary kernels.
const MAX_PADDING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    Symmetric,
    OneSided,
}

/// Lattice `{kδ}` restricted to `[−S, S]` or `[0, S]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub step: f64,
    pub half_span: f64,
    pub sided: Sided,
}

impl Grid {
    pub fn new(step: f64, half_span: f64, sided: Sided) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return domain(format!("grid step must be positive, got {step}"));
        }
        if !(half_span > 0.0 && half_span.is_finite()) {
            return domain(format!("grid span must be positive, got {half_span}"));
        }
        Ok(Self {
            step,
            half_span,
            sided,
        })
    }

    pub fn symmetric(step: f64, half_span: f64) -> Result<Self> {
        Self::new(step, half_span, Sided::Symmetric)
    }

    pub fn one_sided(step: f64, half_span: f64) -> Result<Self> {
        Self::new(step, half_span, Sided::OneSided)
    }

    /// Number of grid points on one side of the origin, `⌊S/δ⌋`.
    pub fn side_count(&self) -> usize {
        // absorb representation error in S/δ, e.g. 10/0.01
        (self.half_span / self.step * (1.0 + 1e-12)).floor() as usize
    }

    pub fn len(&self) -> usize {
        match self.sided {
            Sided::Symmetric => 2 * self.side_count() + 1,
            Sided::OneSided => self.side_count() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn origin_index(&self) -> usize {
        match self.sided {
            Sided::Symmetric => self.side_count(),
            Sided::OneSided => 0,
        }
    }

    pub fn point(&self, i: usize) -> f64 {
        (i as i64 - self.origin_index() as i64) as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// The nested grid with half the step over the same window.
    pub fn refined(&self) -> Grid {
        Grid {
            step: self.step / 2.0,
            ..*self
        }
    }

    /// Indices into `fine` of this grid's points, when `fine` nests it.
    pub fn nested_indices(&self, fine: &Grid) -> Result<Vec<usize>> {
        let ratio = self.step / fine.step;
        let r = ratio.round();
        if r < 1.0 || (ratio - r).abs() > 1e-9 || self.sided != fine.sided {
            return Err(Error::InconsistentGrid(format!(
                "step {} is not a multiple of {}",
                self.step, fine.step
            )));
        }
        let r = r as usize;
        if self.side_count() * r > fine.side_count() {
            return Err(Error::InconsistentGrid("coarse grid exceeds fine window".into()));
        }
        let (co, fo) = (self.origin_index() as i64, fine.origin_index() as i64);
        Ok((0..self.len())
            .map(|i| ((i as i64 - co) * r as i64 + fo) as usize)
            .collect())
    }
}

/// Real polynomial `Σ a_k t^k`; used for time changes `c(t)` and for the
/// local-stationarity function `H(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

pub type RateFunction = Polynomial;

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn identity() -> Self {
        Self {
            coeffs: vec![0.0, 1.0],
        }
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self {
            coeffs: vec![intercept, slope],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &a| acc * t + a)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &a)| k as f64 * a)
                .collect(),
        }
    }

    fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|&a| a != 0.0)
            .unwrap_or(0)
    }

    /// `Some((slope, intercept))` when the polynomial has degree ≤ 1.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        if self.degree() <= 1 {
            let a = |k: usize| self.coeffs.get(k).copied().unwrap_or(0.0);
            Some((a(1), a(0)))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Fbm,
    StationaryExpAlpha,
    TimeChangedStationary { rate: RateFunction },
    VarianceModulated,
}

/// A simulatable Gaussian model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub b: Option<f64>,
    pub kind: ModelKind,
}

impl ProcessModel {
    pub fn fbm(alpha: f64) -> Self {
        Self {
            alpha,
            beta: None,
            b: None,
            kind: ModelKind::Fbm,
        }
    }

    /// Unit-variance stationary process with `r(t) = exp(−|t|^α)`.
    pub fn stationary(alpha: f64) -> Self {
        Self {
            alpha,
            beta: None,
            b: None,
            kind: ModelKind::StationaryExpAlpha,
        }
    }

    /// `Y(c(t))` for the stationary `exp(−|t|^α)` process `Y`.
    pub fn time_changed(alpha: f64, rate: RateFunction) -> Self {
        Self {
            alpha,
            beta: None,
            b: None,
            kind: ModelKind::TimeChangedStationary { rate },
        }
    }

    /// `σ(t)·Y(t)` with `σ(t) = 1/(1 + b|t|^β)`.
    pub fn variance_modulated(alpha: f64, beta: f64, b: f64) -> Self {
        Self {
            alpha,
            beta: Some(beta),
            b: Some(b),
            kind: ModelKind::VarianceModulated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if let ModelKind::VarianceModulated = self.kind {
            match (self.beta, self.b) {
                (Some(beta), Some(b)) if beta > 0.0 && b > 0.0 => {}
                _ => return domain("variance-modulated model needs beta > 0 and b > 0"),
            }
        }
        Ok(())
    }

    /// Standard deviation profile `σ(t)`.
    pub fn sigma(&self, t: f64) -> f64 {
        match (self.kind.clone(), self.beta, self.b) {
            (ModelKind::VarianceModulated, Some(beta), Some(b)) => 1.0 / (1.0 + b * t.abs().powf(beta)),
            (ModelKind::Fbm, _, _) => t.abs().powf(self.alpha / 2.0),
            _ => 1.0,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        domain(format!("alpha must lie in (0, 2], got {alpha}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Auto,
    Circulant,
    Cholesky,
}

/// Descriptor of the law that generated a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelId {
    pub model: String,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Coefficient `d` of the deterministic drift `−d|t|^α`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<Vec<f64>>,
    /// `H(t) = c'(t)^α` at the first and last grid point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_first: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_last: Option<f64>,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub model_id: ModelId,
}

/// FFT-diagonalised circulant embedding of a symmetric Toeplitz covariance.
pub struct CirculantEmbedding {
    needed: usize,
    sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl std::fmt::Debug for CirculantEmbedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantEmbedding")
            .field("needed", &self.needed)
            .field("size", &self.sqrt_eig.len())
            .field("min_eigenvalue", &self.min_eigenvalue)
            .field("max_eigenvalue", &self.max_eigenvalue)
            .finish()
    }
}

impl CirculantEmbedding {
    /// Embeds autocovariances `r[0..=L]` in a circulant of size `2L` and
    /// samples the first `needed ≤ L + 1` coordinates.
    pub fn new(autocov: &[f64], needed: usize) -> Result<Self> {
        let l = autocov.len().saturating_sub(1);
        if l == 0 || needed > l + 1 {
            return Err(Error::InconsistentGrid(format!(
                "embedding of {} lags cannot produce {needed} values",
                autocov.len()
            )));
        }
        let m = 2 * l;
        let mut buf: Vec<Complex<f64>> = autocov
            .iter()
            .chain(autocov[1..l].iter().rev())
            .map(|&r| Complex::new(r, 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut buf);
        let max_eigenvalue = buf.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let min_eigenvalue = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -SPECTRAL_TOLERANCE * max_eigenvalue {
            return Err(Error::SpectralFailure {
                min_eigenvalue,
                max_eigenvalue,
            });
        }
        let floor = ROUNDOFF_FLOOR * max_eigenvalue;
        let sqrt_eig = buf
            .iter()
            .map(|c| if c.re > floor { (c.re / m as f64).sqrt() } else { 0.0 })
            .collect();
        Ok(Self {
            needed,
            sqrt_eig,
            fft,
            min_eigenvalue,
            max_eigenvalue,
        })
    }

    pub fn size(&self) -> usize {
        self.sqrt_eig.len()
    }

    /// Fills `a` and `b` (each of length `needed`) with independent draws.
    pub fn sample_pair(&self, stream: &mut Stream, buf: &mut Vec<Complex<f64>>, a: &mut [f64], b: &mut [f64]) {
        buf.clear();
        buf.extend(
            self.sqrt_eig
                .iter()
                .map(|&s| Complex::new(s * stream.normal(), s * stream.normal())),
        );
        self.fft.process(buf);
        for (i, c) in buf.iter().take(self.needed).enumerate() {
            a[i] = c.re;
            b[i] = c.im;
        }
    }
}

/// Lower-triangular factor of a positive semidefinite covariance.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    /// Factors the matrix `cov(i, j)`; pivots below the relative tolerance are
    /// treated as exact zeros (degenerate directions).
    pub fn new(dim: usize, cov: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut lower = vec![0.0; dim * dim];
        let max_diag = (0..dim).map(|i| cov(i, i)).fold(0.0, f64::max);
        let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
        for j in 0..dim {
            let row_j = j * dim;
            let d = cov(j, j) - lower[row_j..row_j + j].iter().map(|v| v * v).sum::<f64>();
            if d < -1e-6 * max_diag {
                return Err(Error::SpectralFailure {
                    min_eigenvalue: d,
                    max_eigenvalue: max_diag,
                });
            }
            if d <= tol {
                continue;
            }
            let pivot = d.sqrt();
            lower[row_j + j] = pivot;
            for i in j + 1..dim {
                let row_i = i * dim;
                let dot: f64 = (0..j).map(|k| lower[row_i + k] * lower[row_j + k]).sum();
                lower[row_i + j] = (cov(i, j) - dot) / pivot;
            }
        }
        Ok(Self { dim, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, stream: &mut Stream, z: &mut Vec<f64>, out: &mut [f64]) {
        z.resize(self.dim, 0.0);
        stream.fill_normal(z);
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &self.lower[i * self.dim..i * self.dim + i + 1];
            *o = row.iter().zip(z.iter()).map(|(l, z)| l * z).sum();
        }
    }
}

#[derive(Debug)]
enum Engine {
    /// Circulant draw of fGn increments, cumulated into fBm.
    Increments(CirculantEmbedding),
    /// Circulant draw of path values directly.
    Values(CirculantEmbedding),
    Cholesky(CholeskyFactor),
}

/// Precomputed sampler for one model on one grid. Immutable and shareable.
#[derive(Debug)]
pub struct PathSampler {
    grid: Grid,
    model_id: ModelId,
    engine: Engine,
    scale: Option<Vec<f64>>,
    shift: Option<Vec<f64>>,
}

/// Autocovariance of fGn with step `δ` at lags `0..=n`.
fn fgn_autocov(alpha: f64, step: f64, n: usize) -> Vec<f64> {
    let s = 0.5 * step.powf(alpha);
    (0..=n)
        .map(|k| {
            let k = k as f64;
            s * ((k + 1.0).powf(alpha) - 2.0 * k.powf(alpha) + (k - 1.0).abs().powf(alpha))
        })
        .collect()
}

fn method_name(engine: &Engine) -> &'static str {
    match engine {
        Engine::Increments(_) | Engine::Values(_) => "circulant",
        Engine::Cholesky(_) => "cholesky",
    }
}

fn use_cholesky(method: Method, points: usize) -> bool {
    match method {
        Method::Auto => points <= CHOLESKY_MAX_POINTS,
        Method::Cholesky => true,
        Method::Circulant => false,
    }
}

impl PathSampler {
    fn with_engine(grid: Grid, mut model_id: ModelId, engine: Engine) -> Self {
        model_id.method = method_name(&engine).to_string();
        Self {
            grid,
            model_id,
            engine,
            scale: None,
            shift: None,
        }
    }

    /// Standard fBm `B_α` with `Var B_α(t) = |t|^α`.
    pub fn fbm(alpha: f64, grid: Grid, method: Method) -> Result<Self> {
        check_alpha(alpha)?;
        let n = grid.len();
        if n < 2 {
            return Err(Error::InconsistentGrid("need at least two grid points".into()));
        }
        let points = grid.points();
        let engine = if use_cholesky(method, n) {
            Engine::Cholesky(CholeskyFactor::new(n, |i, j| {
                let (s, t) = (points[i], points[j]);
                0.5 * (s.abs().powf(alpha) + t.abs().powf(alpha) - (s - t).abs().powf(alpha))
            })?)
        } else {
            let incs = n - 1;
            Engine::Increments(CirculantEmbedding::new(&fgn_autocov(alpha, grid.step, incs), incs)?)
        };
        let id = ModelId {
            model: "fbm".into(),
            alpha,
            beta: None,
            b: None,
            drift_coefficient: None,
            rate: None,
            h_first: None,
            h_last: None,
            method: String::new(),
        };
        Ok(Self::with_engine(grid, id, engine))
    }

    /// `√2·B_α(t) − (1 + b_drift)|t|^α`.
    pub fn drifted(alpha: f64, b_drift: f64, grid: Grid, method: Method) -> Result<Self> {
        if !(b_drift >= 0.0 && b_drift.is_finite()) {
            return domain(format!("drift b must be non-negative, got {b_drift}"));
        }
        let mut s = Self::fbm(alpha, grid, method)?;
        let d = 1.0 + b_drift;
        s.model_id.model = "drifted_fbm".into();
        s.model_id.drift_coefficient = Some(d);
        s.scale = Some(vec![std::f64::consts::SQRT_2; grid.len()]);
        s.shift = Some(grid.points().iter().map(|t| -d * t.abs().powf(alpha)).collect());
        Ok(s)
    }

    /// Stationary `exp(−|t|^α)` process sampled at `grid` scaled by `dilation`.
    fn stationary_engine(alpha: f64, grid: &Grid, dilation: f64, method: Method) -> Result<Engine> {
        let n = grid.len();
        let h = grid.step * dilation;
        let kernel = |lag: f64| (-lag.abs().powf(alpha)).exp();
        if use_cholesky(method, n) {
            return Ok(Engine::Cholesky(CholeskyFactor::new(n, |i, j| {
                kernel((i as f64 - j as f64) * h)
            })?));
        }
        let base = (n - 1).max(1);
        let mut last = None;
        let mut l = base;
        while l <= MAX_PADDING * base {
            let autocov: Vec<f64> = (0..=l).map(|k| kernel(k as f64 * h)).collect();
            match CirculantEmbedding::new(&autocov, n) {
                Ok(e) => return Ok(Engine::Values(e)),
                Err(e @ Error::SpectralFailure { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
            l *= 2;
        }
        Err(last.expect("at least one embedding attempted"))
    }

    pub fn stationary(model: &ProcessModel, grid: Grid, method: Method) -> Result<Self> {
        model.validate()?;
        if model.kind != ModelKind::StationaryExpAlpha {
            return domain("sample_stationary needs a stationary_exp_alpha model");
        }
        let engine = Self::stationary_engine(model.alpha, &grid, 1.0, method)?;
        Ok(Self::with_engine(grid, stationary_id(model.alpha), engine))
    }

    pub fn nonstationary(model: &ProcessModel, grid: Grid, method: Method) -> Result<Self> {
        model.validate()?;
        if model.kind != ModelKind::VarianceModulated {
            return domain("sample_nonstationary needs a variance_modulated model");
        }
        if grid.sided != Sided::Symmetric {
            return Err(Error::InconsistentGrid(
                "variance-modulated sampling needs a symmetric grid".into(),
            ));
        }
        let engine = Self::stationary_engine(model.alpha, &grid, 1.0, method)?;
        let mut id = stationary_id(model.alpha);
        id.model = "variance_modulated".into();
        id.beta = model.beta;
        id.b = model.b;
        let mut s = Self::with_engine(grid, id, engine);
        s.scale = Some(grid.points().iter().map(|&t| model.sigma(t)).collect());
        Ok(s)
    }

    pub fn time_changed(model: &ProcessModel, grid: Grid, method: Method) -> Result<Self> {
        model.validate()?;
        let ModelKind::TimeChangedStationary { rate } = &model.kind else {
            return domain("sample_time_changed needs a time_changed_stationary model");
        };
        let alpha = model.alpha;
        let points = grid.points();
        let deriv = rate.derivative();
        let times: Vec<f64> = points.iter().map(|&t| rate.eval(t)).collect();
        let increasing = points.iter().all(|&t| deriv.eval(t) > 0.0)
            && times.windows(2).all(|w| w[1] > w[0]);
        if !increasing {
            return domain("time change must be strictly increasing on the grid");
        }
        let engine = match rate.as_affine() {
            Some((slope, _)) => Self::stationary_engine(alpha, &grid, slope, method)?,
            None => {
                if method == Method::Circulant {
                    return domain("non-affine time changes need the Cholesky method");
                }
                let n = grid.len();
                Engine::Cholesky(CholeskyFactor::new(n, |i, j| {
                    (-(times[i] - times[j]).abs().powf(alpha)).exp()
                })?)
            }
        };
        let mut id = stationary_id(alpha);
        id.model = "time_changed_stationary".into();
        id.rate = Some(rate.coeffs.clone());
        id.h_first = Some(deriv.eval(points[0]).powf(alpha));
        id.h_last = Some(deriv.eval(points[points.len() - 1]).powf(alpha));
        Ok(Self::with_engine(grid, id, engine))
    }

    pub fn for_model(model: &ProcessModel, grid: Grid, method: Method) -> Result<Self> {
        match model.kind {
            ModelKind::Fbm => Self::fbm(model.alpha, grid, method),
            ModelKind::StationaryExpAlpha => Self::stationary(model, grid, method),
            ModelKind::VarianceModulated => Self::nonstationary(model, grid, method),
            ModelKind::TimeChangedStationary { .. } => Self::time_changed(model, grid, method),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model_id(&self) -> &ModelId {
        &self.model_id
    }

    pub fn generator(&self) -> PathGenerator<'_> {
        PathGenerator {
            sampler: self,
            spare: None,
            buf: Vec::new(),
            z: Vec::new(),
            tmp: Vec::new(),
        }
    }

    /// Draws a single path; the second path of a circulant draw is discarded.
    pub fn sample(&self, stream: &mut Stream) -> PathSample {
        let mut values = vec![0.0; self.grid.len()];
        self.generator().next_into(stream, &mut values);
        PathSample {
            grid: self.grid,
            values,
            model_id: self.model_id.clone(),
        }
    }
}

fn stationary_id(alpha: f64) -> ModelId {
    ModelId {
        model: "stationary_exp_alpha".into(),
        alpha,
        beta: None,
        b: None,
        drift_coefficient: None,
        rate: None,
        h_first: None,
        h_last: None,
        method: String::new(),
    }
}

/// Per-batch path source. Circulant draws produce two paths; the second is
/// kept and returned by the next call.
pub struct PathGenerator<'a> {
    sampler: &'a PathSampler,
    spare: Option<Vec<f64>>,
    buf: Vec<Complex<f64>>,
    z: Vec<f64>,
    tmp: Vec<f64>,
}

impl PathGenerator<'_> {
    pub fn next_into(&mut self, stream: &mut Stream, out: &mut [f64]) {
        let s = self.sampler;
        let n = s.grid.len();
        assert_eq!(out.len(), n, "output buffer must match the grid");
        if let Some(spare) = self.spare.take() {
            out.copy_from_slice(&spare);
            self.tmp = spare;
            return;
        }
        let mut second = std::mem::take(&mut self.tmp);
        second.resize(n, 0.0);
        match &s.engine {
            Engine::Cholesky(f) => {
                f.sample(stream, &mut self.z, out);
                self.finish(out);
                self.tmp = second;
                return;
            }
            Engine::Values(e) => e.sample_pair(stream, &mut self.buf, out, &mut second),
            Engine::Increments(e) => {
                e.sample_pair(stream, &mut self.buf, &mut out[1..], &mut second[1..]);
                let origin = s.grid.origin_index();
                cumulate(out, origin);
                cumulate(&mut second, origin);
            }
        }
        self.finish(out);
        self.finish(&mut second);
        self.spare = Some(second);
    }

    fn finish(&self, values: &mut [f64]) {
        let s = self.sampler;
        if s.model_id.model == "fbm" || s.model_id.model == "drifted_fbm" {
            values[s.grid.origin_index()] = 0.0;
        }
        if let Some(scale) = &s.scale {
            for (v, c) in values.iter_mut().zip(scale) {
                *v *= c;
            }
        }
        if let Some(shift) = &s.shift {
            for (v, c) in values.iter_mut().zip(shift) {
                *v += c;
            }
        }
    }
}

/// Turns increments stored in `v[1..]` into a path pinned to 0 at `origin`.
fn cumulate(v: &mut [f64], origin: usize) {
    v[0] = 0.0;
    for i in 1..v.len() {
        v[i] += v[i - 1];
    }
    let o = v[origin];
    for x in v.iter_mut() {
        *x -= o;
    }
}

pub fn sample_fbm(alpha: f64, grid: Grid, stream: &mut Stream) -> Result<PathSample> {
    Ok(PathSampler::fbm(alpha, grid, Method::Auto)?.sample(stream))
}

pub fn sample_drifted_field(alpha: f64, b_drift: f64, grid: Grid, stream: &mut Stream) -> Result<PathSample> {
    Ok(PathSampler::drifted(alpha, b_drift, grid, Method::Auto)?.sample(stream))
}

pub fn sample_stationary(model: &ProcessModel, grid: Grid, stream: &mut Stream) -> Result<PathSample> {
    Ok(PathSampler::stationary(model, grid, Method::Auto)?.sample(stream))
}

pub fn sample_nonstationary(model: &ProcessModel, grid: Grid, stream: &mut Stream) -> Result<PathSample> {
    Ok(PathSampler::nonstationary(model, grid, Method::Auto)?.sample(stream))
}

pub fn sample_time_changed(model: &ProcessModel, grid: Grid, stream: &mut Stream) -> Result<PathSample> {
    Ok(PathSampler::time_changed(model, grid, Method::Auto)?.sample(stream))
}

/// Writes paths as CSV: a header of grid coordinates, then one row per path.
pub fn write_paths_csv<W: Write>(mut out: W, paths: &[PathSample]) -> Result<()> {
    let Some(first) = paths.first() else {
        return Ok(());
    };
    let header: Vec<String> = first.grid.points().iter().map(|t| format!("{t}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in paths {
        if p.grid != first.grid {
            return Err(Error::InconsistentGrid("paths on different grids".into()));
        }
        let row: Vec<String> = p.values.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
