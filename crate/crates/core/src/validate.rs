//! The acceptance suite behind `sojourn validate`. Each criterion runs at a
//! fixed scale from a seed derived from the master seed and its own label,
//! so criteria can run alone or together with identical numbers.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    expected_occupation_with, normal_survival, pickands_lower_bound_new_with, t_constant_closed, t_constant_finite,
    BoundPair, GammaApprox,
};
use crate::constants::{
    estimate_berman_b, estimate_berman_rate, estimate_btilde, estimate_occupation_mean, estimate_pickands_berman,
    estimate_pickands_sup, estimate_piterbarg, estimate_piterbarg_sup, estimate_tilt, BermanSpec, ConstantEstimate,
};
use crate::error::Result;
use crate::paths::{ProcessModel, Sided};
use crate::sojourn::{convergence_report, default_half_window, MonteCarloConstants, SojournConfig};
use crate::stats::{derive_seed, McConfig, McEstimate};

pub const CRITERIA: std::ops::RangeInclusive<u32> = 1..=13;

const STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Ten times fewer paths, tolerances widened by a factor of two.
    pub quick: bool,
    pub gamma: GammaApprox,
}

impl ValidateOptions {
    pub fn new(seed: u64, quick: bool) -> Self {
        Self {
            seed,
            quick,
            gamma: GammaApprox::PUGH,
        }
    }

    fn n(&self, full: u64) -> u64 {
        if self.quick {
            full / 10
        } else {
            full
        }
    }

    fn tol(&self, full: f64) -> f64 {
        if self.quick {
            2.0 * full
        } else {
            full
        }
    }

    fn mc(&self, full: u64, label: &str) -> McConfig {
        McConfig::new(self.n(full), derive_seed(self.seed, label))
    }
}

/// Gamma coefficients with a corrupted leading term, for the negative control.
pub fn tampered_gamma() -> GammaApprox {
    let mut g = GammaApprox::PUGH;
    g.coeffs[1] = -g.coeffs[1];
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionResult {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub values: Vec<NamedValue>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("criterion {:>2} {verdict}  {}: {}", self.id, self.title, self.detail)
    }
}

struct Check {
    values: Vec<NamedValue>,
    failures: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self {
            values: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn est(&mut self, name: &str, e: &McEstimate) {
        self.values.push(NamedValue {
            name: name.into(),
            value: e.mean,
            stderr: Some(e.stderr),
        });
    }

    fn val(&mut self, name: &str, v: f64) {
        self.values.push(NamedValue {
            name: name.into(),
            value: v,
            stderr: None,
        });
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, id: u32, title: &str, ok_detail: String) -> CriterionResult {
        let passed = self.failures.is_empty();
        CriterionResult {
            id,
            title: title.into(),
            passed,
            detail: if passed { ok_detail } else { self.failures.join("; ") },
            values: self.values,
        }
    }
}

fn title(id: u32) -> &'static str {
    match id {
        1 => "known Pickands values",
        2 => "occupation mean closed form",
        3 => "Pickands lower bound",
        4 => "bound dominance",
        5 => "duplication identity",
        6 => "tilt identity",
        7 => "T closed form",
        8 => "x=0 consistency web",
        9 => "scaling identity",
        10 => "Berman vs Btilde",
        11 => "Piterbarg bound and identity",
        12 => "sojourn tail ratios",
        13 => "determinism",
        _ => "unknown",
    }
}

fn combined(a: &McEstimate, b: &McEstimate) -> f64 {
    (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}

fn grid_alphas(nodes: usize) -> Vec<f64> {
    (0..nodes).map(|i| 0.05 + 1.95 * i as f64 / (nodes - 1) as f64).collect()
}

pub fn run_criterion(id: u32, opts: &ValidateOptions) -> CriterionResult {
    let outcome = match id {
        1 => known_values(opts),
        2 => occupation_mean(opts),
        3 => lower_bound(opts),
        4 => dominance(opts),
        5 => duplication(opts),
        6 => tilt(opts),
        7 => t_oracle(opts),
        8 => consistency_web(opts),
        9 => scaling(opts),
        10 => cross_representation(opts),
        11 => piterbarg(opts),
        12 => sojourn_tails(opts),
        13 => determinism(opts),
        _ => {
            let mut c = Check::new();
            c.require(false, || format!("no criterion {id}"));
            return c.finish(id, title(id), String::new());
        }
    };
    outcome.unwrap_or_else(|e| CriterionResult {
        id,
        title: title(id).into(),
        passed: false,
        detail: format!("error: {e}"),
        values: Vec::new(),
    })
}

pub fn run_all(opts: &ValidateOptions, mut progress: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    CRITERIA
        .map(|id| {
            let r = run_criterion(id, opts);
            progress(&r);
            r
        })
        .collect()
}

fn known_values(o: &ValidateOptions) -> Result<CriterionResult> {
    let tol = o.tol(0.05);
    let mut c = Check::new();
    for (alpha, target) in [(1.0, 1.0), (2.0, 0.56419)] {
        let e = estimate_pickands_berman(alpha, 10.0, STEP, &o.mc(100_000, &format!("c1-{alpha}")))?;
        c.est(&format!("H_{alpha}"), &e.value);
        let rel = (e.mean() / target - 1.0).abs();
        c.require(rel <= tol, || format!("alpha={alpha}: {:.5} off {target} by {:.2}%", e.mean(), 100.0 * rel));
    }
    Ok(c.finish(1, title(1), format!("both within {:.0}%", 100.0 * tol)))
}

fn occupation_mean(o: &ValidateOptions) -> Result<CriterionResult> {
    let tol = o.tol(0.02);
    let mut c = Check::new();
    // the α=1 occupation has a slowly decaying tail in the window
    for (alpha, span) in [(1.0, 30.0), (2.0, 10.0)] {
        let target = expected_occupation_with(alpha, &o.gamma)?;
        let e = estimate_occupation_mean(alpha, span, STEP, &o.mc(100_000, &format!("c2-{alpha}")))?;
        c.est(&format!("E[I]_{alpha}"), &e.value);
        let rel = (e.mean() / target - 1.0).abs();
        c.require(rel <= tol, || format!("alpha={alpha}: {:.4} vs {target:.5} ({:.2}%)", e.mean(), 100.0 * rel));
    }
    Ok(c.finish(2, title(2), format!("both within {:.0}%", 100.0 * tol)))
}

fn lower_bound(o: &ValidateOptions) -> Result<CriterionResult> {
    let sigmas = o.tol(3.0);
    let factor = 1.0 - o.tol(0.02);
    let mut c = Check::new();
    for alpha in [0.5, 1.0, 1.5, 2.0] {
        let bound = pickands_lower_bound_new_with(alpha, &o.gamma)?;
        let e = estimate_pickands_berman(alpha, 10.0, STEP, &o.mc(100_000, &format!("c3-{alpha}")))?;
        c.est(&format!("H_{alpha}"), &e.value);
        c.val(&format!("bound_{alpha}"), bound);
        let upper = e.mean() + sigmas * e.stderr();
        c.require(upper >= factor * bound, || format!("alpha={alpha}: {upper:.4} < {factor}*{bound:.4}"));
    }
    Ok(c.finish(3, title(3), "estimate clears the bound at every alpha".into()))
}

fn dominance(o: &ValidateOptions) -> Result<CriterionResult> {
    let mut c = Check::new();
    for alpha in grid_alphas(40) {
        let pair = BoundPair::compute_with(alpha, &o.gamma)?;
        c.require(pair.dominates(), || {
            format!("alpha={alpha:.4}: new {:e} < old {:e}", pair.new_bound, pair.old_bound)
        });
    }
    Ok(c.finish(4, title(4), "new bound >= old bound at 40 nodes".into()))
}

fn duplication(o: &ValidateOptions) -> Result<CriterionResult> {
    let tol = o.tol(1e-12);
    let mut c = Check::new();
    let mut worst = 0f64;
    for alpha in grid_alphas(40) {
        let gap = (1.0 / expected_occupation_with(alpha, &o.gamma)? - pickands_lower_bound_new_with(alpha, &o.gamma)?).abs();
        worst = worst.max(gap);
        c.require(gap <= tol, || format!("alpha={alpha:.4}: gap {gap:e}"));
    }
    c.val("max_gap", worst);
    Ok(c.finish(5, title(5), format!("max gap {worst:e}")))
}

fn tilt(o: &ValidateOptions) -> Result<CriterionResult> {
    let sigmas = o.tol(4.0);
    let mut c = Check::new();
    for cc in [0.5, 1.0, 2.0] {
        let e = estimate_tilt(cc, &o.mc(1_000_000, &format!("c6-{cc}")))?;
        let target = 2.0 * normal_survival(cc / 2.0);
        c.est(&format!("tilt_{cc}"), &e.value);
        let z = (e.mean() - target).abs() / e.stderr();
        c.require(z <= sigmas, || format!("c={cc}: {:.5} vs {target:.5} ({z:.2} se)", e.mean()));
    }
    Ok(c.finish(6, title(6), format!("all within {sigmas} se")))
}

fn t_oracle(o: &ValidateOptions) -> Result<CriterionResult> {
    let tol = o.tol(1e-12);
    let mut c = Check::new();
    let t = t_constant_finite(1.5, 1.0, 0.0, 10.0, 2.0, true)?;
    c.val("T_eta0_x2", t);
    c.require((t - (-1f64).exp()).abs() <= tol, || format!("eta=0, x=2: {t}"));
    // symmetric lattice: (2m+1) points of mass η must exceed x
    for (x, m) in [(0.1, 0.0), (0.3, 1.0), (0.7, 2.0)] {
        let expected = (-(m * 0.2f64).powf(1.5)).exp();
        let finite = t_constant_finite(1.5, 1.0, 0.2, 10.0, x, true)?;
        let closed = t_constant_closed(1.5, 1.0, 0.2, x, true)?;
        c.val(&format!("T_eta0.2_x{x}"), finite);
        c.require((finite - expected).abs() <= tol && (closed - expected).abs() <= tol, || {
            format!("eta=0.2, x={x}: finite {finite}, closed {closed}, branch {expected}")
        });
    }
    Ok(c.finish(7, title(7), format!("all within {tol:e}")))
}

fn pairwise(c: &mut Check, named: &[(&str, McEstimate)], sigmas: f64) {
    for (i, (na, a)) in named.iter().enumerate() {
        for (nb, b) in &named[i + 1..] {
            let z = (a.mean - b.mean).abs() / combined(a, b);
            c.require(z <= sigmas, || format!("{na} {:.4} vs {nb} {:.4}: {z:.2} sigma", a.mean, b.mean));
        }
    }
}

fn consistency_web(o: &ValidateOptions) -> Result<CriterionResult> {
    let sigmas = o.tol(3.0);
    let mut c = Check::new();
    let berman = estimate_pickands_berman(1.0, 10.0, STEP, &o.mc(100_000, "c8-berman"))?.value;
    let btilde = estimate_btilde(1.0, 0.0, 10.0, STEP, &o.mc(100_000, "c8-btilde"))?.value;
    // short windows: the slope estimator's variance grows quickly with S at α=1
    let rate = estimate_berman_rate(1.0, 0.0, 0.0, &[2.0, 4.0], STEP, &o.mc(1_000_000, "c8-rate"))?.value;
    let sup = estimate_pickands_sup(1.0, 10.0, STEP, &o.mc(100_000, "c8-sup"))?;
    let sup = sup.diagnostics.normalized.expect("sup form reports value/S");
    let named = [("berman", berman), ("btilde", btilde), ("rate", rate), ("sup/S", sup)];
    for (n, e) in &named {
        c.est(n, e);
    }
    pairwise(&mut c, &named, sigmas);
    Ok(c.finish(8, title(8), format!("all pairs within {sigmas} sigma")))
}

fn scaling(o: &ValidateOptions) -> Result<CriterionResult> {
    let sigmas = o.tol(3.0);
    let mut c = Check::new();
    for alpha in [1.0, 1.5] {
        let d = 2f64.powf(1.0 / alpha);
        let mut left = BermanSpec::new(alpha, 2.0, 0.0, 8.0, 1.0);
        left.step = STEP;
        let mut right = BermanSpec::new(alpha, 1.0, 0.0, 8.0 * d, d);
        right.step = STEP;
        let a = estimate_berman_b(&left, &o.mc(100_000, &format!("c9-{alpha}-lambda2")))?.value;
        let b = estimate_berman_b(&right, &o.mc(100_000, &format!("c9-{alpha}-lambda1")))?.value;
        c.est(&format!("B_{alpha},2"), &a);
        c.est(&format!("B_{alpha},1"), &b);
        pairwise(&mut c, &[("lambda=2", a), ("lambda=1 scaled", b)], sigmas);
    }
    Ok(c.finish(9, title(9), format!("both alphas within {sigmas} sigma")))
}

fn cross_representation(o: &ValidateOptions) -> Result<CriterionResult> {
    let tol = o.tol(0.10);
    let mut c = Check::new();
    let rate = estimate_berman_rate(1.0, 0.0, 1.0, &[2.0, 4.0], STEP, &o.mc(1_000_000, "c10-rate"))?.value;
    let btilde = estimate_btilde(1.0, 1.0, 10.0, STEP, &o.mc(100_000, "c10-btilde"))?.value;
    c.est("rate", &rate);
    c.est("btilde", &btilde);
    let rel = (rate.mean / btilde.mean - 1.0).abs();
    c.require(rel <= tol, || format!("{:.4} vs {:.4} ({:.1}%)", rate.mean, btilde.mean, 100.0 * rel));
    Ok(c.finish(10, title(10), format!("relative gap {:.1}%", 100.0 * rel)))
}

fn piterbarg(o: &ValidateOptions) -> Result<CriterionResult> {
    let sigmas = o.tol(3.0);
    let mut c = Check::new();
    let run = |x: f64| -> Result<ConstantEstimate> {
        estimate_piterbarg(1.0, 1.0, 0.0, 8.0, x, STEP, Sided::Symmetric, &o.mc(100_000, &format!("c11-x{x}")))
    };
    let p0 = run(0.0)?.value;
    c.est("P(0)", &p0);
    for x in [0.5, 1.0] {
        let p = run(x)?.value;
        c.est(&format!("P({x})"), &p);
        c.require(p.mean <= p0.mean + sigmas * combined(&p, &p0), || {
            format!("P({x}) = {:.4} exceeds P(0) = {:.4}", p.mean, p0.mean)
        });
    }
    let sup = estimate_piterbarg_sup(1.0, 1.0, 8.0, STEP, Sided::Symmetric, &o.mc(100_000, "c11-sup"))?.value;
    c.est("sup form", &sup);
    pairwise(&mut c, &[("P(0)", p0), ("sup form", sup)], sigmas);
    Ok(c.finish(11, title(11), format!("monotone in x, sup form within {sigmas} sigma")))
}

fn sojourn_tails(o: &ValidateOptions) -> Result<CriterionResult> {
    let widen = |lo: f64, hi: f64| {
        let (w, m) = (o.tol((hi - lo) / 2.0), (hi + lo) / 2.0);
        (m - w, m + w)
    };
    let levels = [2.5, 3.0];
    let mut c = Check::new();

    let (lo, hi) = widen(0.75, 1.25);
    let config = SojournConfig::new(
        ProcessModel::stationary(1.0),
        (0.0, 1.0),
        0.0,
        levels[0],
        vec![0.0],
        o.n(2_000_000),
        derive_seed(o.seed, "c12-stationary"),
    );
    let source = MonteCarloConstants::new(o.mc(100_000, "c12-stationary-constant"));
    let report = convergence_report(&config, &levels, &source)?;
    for row in &report.rows {
        let r = row.ratio.unwrap_or(f64::NAN);
        c.val(&format!("stationary u={} ratio", row.u), r);
        c.require((lo..=hi).contains(&r), || format!("stationary u={}: ratio {r:.3}", row.u));
    }
    c.require(report.trend_flag, || "stationary: ratio not closer to 1 at the higher level".into());

    let (lo, hi) = widen(0.7, 1.3);
    let half = default_half_window(0.5, 1.0, levels[0]);
    let config = SojournConfig::new(
        ProcessModel::variance_modulated(1.0, 0.5, 1.0),
        (-half, half),
        0.0,
        levels[0],
        vec![0.0, 0.5],
        o.n(5_000_000),
        derive_seed(o.seed, "c12-variance"),
    );
    let closed_only = |_: &crate::sojourn::ConstantQuery| -> Result<McEstimate> {
        unreachable!("closed-form regime needs no Monte Carlo constants")
    };
    let report = convergence_report(&config, &levels, &closed_only)?;
    for row in &report.rows {
        let r = row.ratio.unwrap_or(f64::NAN);
        c.val(&format!("variance u={} x={} ratio", row.u, row.x), r);
        if row.u == 3.0 {
            c.require((lo..=hi).contains(&r), || format!("variance x={}: ratio {r:.3}", row.x));
        }
    }
    c.require(report.trend_flag, || "variance-dominated: trend flag false".into());
    Ok(c.finish(12, title(12), "ratios in band, trend flags set".into()))
}

/// Ids of the criteria rerun by the determinism check.
pub const DETERMINISM_SUBSET: [u32; 5] = [1, 6, 9, 11, 12];

/// Quick-scale payload of [`DETERMINISM_SUBSET`] computed on a pool of
/// `threads` workers.
pub fn determinism_payload(seed: u64, threads: usize) -> Result<Vec<u8>> {
    let opts = ValidateOptions::new(seed, true);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(std::io::Error::other)?;
    let results: Vec<CriterionResult> =
        pool.install(|| DETERMINISM_SUBSET.iter().map(|&id| run_criterion(id, &opts)).collect());
    Ok(serde_json::to_vec(&results).map_err(std::io::Error::other)?)
}

fn determinism(o: &ValidateOptions) -> Result<CriterionResult> {
    let mut c = Check::new();
    let one = determinism_payload(o.seed, 1)?;
    let eight = determinism_payload(o.seed, 8)?;
    c.val("payload_bytes", one.len() as f64);
    c.require(one == eight, || "payloads differ between 1 and 8 threads".into());
    Ok(c.finish(13, title(13), format!("{} payload bytes identical at 1 and 8 threads", one.len())))
}
