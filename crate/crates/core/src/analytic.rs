//! Closed-form quantities: the Gamma function, the standard normal
//! survival function, both Pickands lower bounds, the mean occupation
//! time of the drifted fBm field, and the `T` function of the
//! variance-dominated regime (limit and finite-window forms).

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Lanczos approximation of the Gamma function with fixed coefficients
/// (r = 10.900511, eleven terms; Pugh's table). Relative error is below
/// 1e-14 on `[0.5, 50]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaApprox {
    pub r: f64,
    pub coeffs: [f64; 11],
}

impl GammaApprox {
    pub const PUGH: GammaApprox = GammaApprox {
        r: 10.900511,
        coeffs: [
            2.48574089138753565546e-5,
            1.05142378581721974210,
            -3.45687097222016235469,
            4.51227709466894823700,
            -2.98285225323576655721,
            1.05639711577126713077,
            -1.95428773191645869583e-1,
            1.70970543404441224307e-2,
            -5.71926117404305781283e-4,
            4.63399473359905636708e-6,
            -2.71994908488607703910e-9,
        ],
    };

    /// Evaluates Γ(x) without range checks. For `x < 0.5` the recurrence
    /// Γ(x) = Γ(x + 1) / x keeps the series argument above 1/2.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.5 {
            return self.eval(x + 1.0) / x;
        }
        // 2 * sqrt(e / pi)
        const TWO_SQRT_E_OVER_PI: f64 = 1.860_382_734_205_265_7;
        let s = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .fold(self.coeffs[0], |s, (k, c)| s + c / (x + k as f64 - 1.0));
        s * TWO_SQRT_E_OVER_PI * ((x - 0.5 + self.r) / std::f64::consts::E).powf(x - 0.5)
    }
}

impl Default for GammaApprox {
    fn default() -> Self {
        Self::PUGH
    }
}

pub const GAMMA_MIN_ARG: f64 = 0.05;
pub const GAMMA_MAX_ARG: f64 = 50.0;

/// Euler Gamma function on `[0.05, 50]`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(GAMMA_MIN_ARG..=GAMMA_MAX_ARG).contains(&x) {
        return domain(format!("gamma argument {x} outside [0.05, 50]"));
    }
    Ok(GammaApprox::PUGH.eval(x))
}

// Complementary error function; coefficients and branch structure follow
// the FreeBSD msun implementation (s_erf.c, Sun Microsystems 1993).
const ERX: f64 = 8.45062911510467529297e-01; // 0x3FEB0AC160000000
const PP0: f64 = 1.28379167095512558561e-01; // 0x3FC06EBA8214DB68
const PP1: f64 = -3.25042107247001499370e-01; // 0xBFD4CD7D691CB913
const PP2: f64 = -2.84817495755985104766e-02; // 0xBF9D2A51DBD7194F
const PP3: f64 = -5.77027029648944159157e-03; // 0xBF77A291236668E4
const PP4: f64 = -2.37630166566501626084e-05; // 0xBEF8EAD6120016AC
const QQ1: f64 = 3.97917223959155352819e-01; // 0x3FD97779CDDADC09
const QQ2: f64 = 6.50222499887672944485e-02; // 0x3FB0A54C5536CEBA
const QQ3: f64 = 5.08130628187576562776e-03; // 0x3F74D022C4D36B0F
const QQ4: f64 = 1.32494738004321644526e-04; // 0x3F215DC9221C1A10
const QQ5: f64 = -3.96022827877536812320e-06; // 0xBED09C4342A26120
const PA0: f64 = -2.36211856075265944077e-03; // 0xBF6359B8BEF77538
const PA1: f64 = 4.14856118683748331666e-01; // 0x3FDA8D00AD92B34D
const PA2: f64 = -3.72207876035701323847e-01; // 0xBFD7D240FBB8C3F1
const PA3: f64 = 3.18346619901161753674e-01; // 0x3FD45FCA805120E4
const PA4: f64 = -1.10894694282396677476e-01; // 0xBFBC63983D3E28EC
const PA5: f64 = 3.54783043256182359371e-02; // 0x3FA22A36599795EB
const PA6: f64 = -2.16637559486879084300e-03; // 0xBF61BF380A96073F
const QA1: f64 = 1.06420880400844228286e-01; // 0x3FBB3E6618EEE323
const QA2: f64 = 5.40397917702171048937e-01; // 0x3FE14AF092EB6F33
const QA3: f64 = 7.18286544141962662868e-02; // 0x3FB2635CD99FE9A7
const QA4: f64 = 1.26171219808761642112e-01; // 0x3FC02660E763351F
const QA5: f64 = 1.36370839120290507362e-02; // 0x3F8BEDC26B51DD1C
const QA6: f64 = 1.19844998467991074170e-02; // 0x3F888B545735151D
const RA0: f64 = -9.86494403484714822705e-03; // 0xBF843412600D6435
const RA1: f64 = -6.93858572707181764372e-01; // 0xBFE63416E4BA7360
const RA2: f64 = -1.05586262253232909814e+01; // 0xC0251E0441B0E726
const RA3: f64 = -6.23753324503260060396e+01; // 0xC04F300AE4CBA38D
const RA4: f64 = -1.62396669462573470355e+02; // 0xC0644CB184282266
const RA5: f64 = -1.84605092906711035994e+02; // 0xC067135CEBCCABB2
const RA6: f64 = -8.12874355063065934246e+01; // 0xC054526557E4D2F2
const RA7: f64 = -9.81432934416914548592e+00; // 0xC023A0EFC69AC25C
const SA1: f64 = 1.96512716674392571292e+01; // 0x4033A6B9BD707687
const SA2: f64 = 1.37657754143519042600e+02; // 0x4061350C526AE721
const SA3: f64 = 4.34565877475229228821e+02; // 0x407B290DD58A1A71
const SA4: f64 = 6.45387271733267880336e+02; // 0x40842B1921EC2868
const SA5: f64 = 4.29008140027567833386e+02; // 0x407AD02157700314
const SA6: f64 = 1.08635005541779435134e+02; // 0x405B28A3EE48AE2C
const SA7: f64 = 6.57024977031928170135e+00; // 0x401A47EF8E484A93
const SA8: f64 = -6.04244152148580987438e-02; // 0xBFAEEFF2EE749A62
const RB0: f64 = -9.86494292470009928597e-03; // 0xBF84341239E86F4A
const RB1: f64 = -7.99283237680523006574e-01; // 0xBFE993BA70C285DE
const RB2: f64 = -1.77579549177547519889e+01; // 0xC031C209555F995A
const RB3: f64 = -1.60636384855821916062e+02; // 0xC064145D43C5ED98
const RB4: f64 = -6.37566443368389627722e+02; // 0xC083EC881375F228
const RB5: f64 = -1.02509513161107724954e+03; // 0xC09004616A2E5992
const RB6: f64 = -4.83519191608651397019e+02; // 0xC07E384E9BDC383F
const SB1: f64 = 3.03380607434824582924e+01; // 0x403E568B261D5190
const SB2: f64 = 3.25792512996573918826e+02; // 0x40745CAE221B9F0A
const SB3: f64 = 1.53672958608443695994e+03; // 0x409802EB189D5118
const SB4: f64 = 3.19985821950859553908e+03; // 0x40A8FFB7688C246A
const SB5: f64 = 2.55305040643316442583e+03; // 0x40A3F219CEDF3BE6
const SB6: f64 = 4.74528541206955367215e+02; // 0x407DA874E79FE763
const SB7: f64 = -2.24409524465858183362e+01; // 0xC03670E242712D62

/// Complementary error function with sub-ulp-order relative accuracy.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 2.0;
    }
    let negative = x < 0.0;
    let x = x.abs();
    if x < 0.84375 {
        let t = if x < 1.387_778_780_781_445_7e-17 {
            x
        } else {
            let z = x * x;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            let y = r / s;
            if x < 0.25 {
                x + x * y
            } else {
                0.5 + (x * y + (x - 0.5))
            }
        };
        return if negative { 1.0 + t } else { 1.0 - t };
    }
    if x < 1.25 {
        let s = x - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        return if negative {
            1.0 + ERX + p / q
        } else {
            1.0 - ERX - p / q
        };
    }
    if x >= 28.0 {
        return if negative { 2.0 } else { 0.0 };
    }
    if negative && x > 6.0 {
        return 2.0;
    }
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (
            RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7)))))),
            1.0 + s
                * (SA1
                    + s * (SA2 + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8))))))),
        )
    } else {
        (
            RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6))))),
            1.0 + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7)))))),
        )
    };
    // z carries the top 20 mantissa bits of x so that exp(-z*z) is exact enough
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    let e = (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp();
    if negative {
        2.0 - e / x
    } else {
        e / x
    }
}

/// Standard normal survival function Ψ(u) = P(N(0,1) > u).
pub fn normal_survival(u: f64) -> f64 {
    0.5 * erfc(u * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(u: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Upper quantile: the `z` with Ψ(z) = `p`, for `p` in (0, 1).
///
/// Starts from the Abramowitz–Stegun 26.2.23 rational guess and polishes
/// with Newton steps on [`normal_survival`].
pub fn normal_upper_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("quantile probability {p} outside (0, 1)"));
    }
    let (q, sign) = if p <= 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let t = (-2.0 * q.ln()).sqrt();
    let mut z = t
        - (2.515517 + 0.802853 * t + 0.010328 * t * t)
            / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    for _ in 0..4 {
        let pdf = normal_pdf(z);
        if pdf == 0.0 {
            break;
        }
        z += (normal_survival(z) - q) / pdf;
    }
    Ok(sign * z)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        domain(format!("alpha {alpha} outside (0, 2]"))
    }
}

/// Lower bound Γ(1/α) / (4 Γ(2/α)) obtained from Jensen's inequality on
/// the occupation representation of the Pickands constant.
pub fn pickands_lower_bound_new(alpha: f64) -> Result<f64> {
    pickands_lower_bound_new_with(alpha, &GammaApprox::PUGH)
}

pub fn pickands_lower_bound_new_with(alpha: f64, gamma: &GammaApprox) -> Result<f64> {
    check_alpha(alpha)?;
    let (a, b) = (1.0 / alpha, 2.0 / alpha);
    check_gamma_range(b)?;
    Ok(gamma.eval(a) / (4.0 * gamma.eval(b)))
}

/// Older lower bound 4^(−1/α−1) / Γ(1/α + 1).
pub fn pickands_lower_bound_old(alpha: f64) -> Result<f64> {
    pickands_lower_bound_old_with(alpha, &GammaApprox::PUGH)
}

pub fn pickands_lower_bound_old_with(alpha: f64, gamma: &GammaApprox) -> Result<f64> {
    check_alpha(alpha)?;
    let a = 1.0 / alpha;
    check_gamma_range(a + 1.0)?;
    Ok(4f64.powf(-a - 1.0) / gamma.eval(a + 1.0))
}

fn check_gamma_range(x: f64) -> Result<()> {
    if x <= GAMMA_MAX_ARG {
        Ok(())
    } else {
        domain(format!("alpha too small: Gamma argument {x} exceeds {GAMMA_MAX_ARG}"))
    }
}

/// Both Pickands lower bounds at one α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub alpha: f64,
    pub new_bound: f64,
    pub old_bound: f64,
}

impl BoundPair {
    pub fn compute(alpha: f64) -> Result<Self> {
        Self::compute_with(alpha, &GammaApprox::PUGH)
    }

    pub fn compute_with(alpha: f64, gamma: &GammaApprox) -> Result<Self> {
        Ok(Self {
            alpha,
            new_bound: pickands_lower_bound_new_with(alpha, gamma)?,
            old_bound: pickands_lower_bound_old_with(alpha, gamma)?,
        })
    }

    pub fn dominates(&self) -> bool {
        self.new_bound >= self.old_bound && self.old_bound > 0.0
    }
}

/// E[I_α] = 4^(1/α + 1/2) Γ(1/α + 1/2) / √π, the mean Lebesgue occupation
/// time of `W_α + E` above zero.
pub fn expected_occupation(alpha: f64) -> Result<f64> {
    expected_occupation_with(alpha, &GammaApprox::PUGH)
}

pub fn expected_occupation_with(alpha: f64, gamma: &GammaApprox) -> Result<f64> {
    check_alpha(alpha)?;
    let a = 1.0 / alpha + 0.5;
    check_gamma_range(a)?;
    const SQRT_PI: f64 = 1.772_453_850_905_516;
    Ok(4f64.powf(a) * gamma.eval(a) / SQRT_PI)
}

/// Smallest integer `k` with `k * cell > x`: the number of lattice cells
/// an occupation measure must cover to exceed `x`.
pub fn cells_to_exceed(x: f64, cell: f64) -> u64 {
    debug_assert!(cell > 0.0 && x >= 0.0);
    let mut k = (x / cell).floor().max(0.0) as u64;
    while k > 0 && (k as f64) * cell > x {
        k -= 1;
    }
    while (k as f64) * cell <= x {
        k += 1;
    }
    k
}

fn check_t_args(beta: f64, b: f64, eta: f64, x: f64) -> Result<()> {
    if !(beta > 0.0 && b > 0.0) {
        return domain(format!("beta {beta} and b {b} must be positive"));
    }
    if !(eta >= 0.0) {
        return domain(format!("eta {eta} must be non-negative"));
    }
    if !(x >= 0.0) {
        return domain(format!("x {x} must be non-negative"));
    }
    Ok(())
}

/// The `T` function of the variance-dominated regime in closed form.
///
/// `interior = true` is the symmetric case (variance maximum inside the
/// interval): `exp(-b (x/2)^β)` for η = 0, and for η > 0 the step function
/// equal to 1 on `[0, η)` and `exp(-b (kη)^β)` on `[(2k-1)η, (2k+1)η)`.
/// `interior = false` is the endpoint case: `exp(-b x^β)` for η = 0 and
/// `exp(-b (kη)^β)` on `[kη, (k+1)η)` otherwise.
pub fn t_constant_closed(beta: f64, b: f64, eta: f64, x: f64, interior: bool) -> Result<f64> {
    check_t_args(beta, b, eta, x)?;
    let value = match (eta > 0.0, interior) {
        (false, true) => (-b * (x / 2.0).powf(beta)).exp(),
        (false, false) => (-b * x.powf(beta)).exp(),
        (true, true) => {
            if x < eta {
                1.0
            } else {
                let k = ((x / eta + 1.0) / 2.0).floor();
                (-b * (k * eta).powf(beta)).exp()
            }
        }
        (true, false) => {
            let k = (x / eta).floor();
            (-b * (k * eta).powf(beta)).exp()
        }
    };
    Ok(value)
}

/// Finite-window `T` function: `∫_0^∞ P(μ_η{s ∈ window : z > b|s|^β} > x) e^{-z} dz`.
///
/// The occupation `m(z)` is deterministic, so the integral is `exp(-z*)`
/// where `z*` is the order statistic of the drift values `b|s|^β` that makes
/// the occupied measure exceed `x`. The window is `[-S, S]` when `interior`
/// and `[0, S]` otherwise. Returns 0 when `x` reaches the window measure.
pub fn t_constant_finite(
    beta: f64,
    b: f64,
    eta: f64,
    span: f64,
    x: f64,
    interior: bool,
) -> Result<f64> {
    check_t_args(beta, b, eta, x)?;
    if !(span > 0.0) {
        return domain(format!("window half-span {span} must be positive"));
    }
    let sides = if interior { 2.0 } else { 1.0 };
    if eta == 0.0 {
        // m(z) = sides * (z/b)^(1/β) capped at sides * S
        if x >= sides * span {
            return Ok(0.0);
        }
        let z_star = b * (x / sides).powf(beta);
        return Ok((-z_star).exp());
    }
    let last = lattice_last_index(span, eta);
    let points = if interior { 2 * last + 1 } else { last + 1 };
    let k = cells_to_exceed(x, eta);
    if k > points {
        return Ok(0.0);
    }
    // drift order statistics: 0, then each |j| >= 1 once (endpoint) or twice (interior)
    let j = if interior { k / 2 } else { k - 1 };
    let z_star = b * (j as f64 * eta).powf(beta);
    Ok((-z_star).exp())
}

/// Largest `j` with `j * eta <= span`, tolerant to representation error.
pub fn lattice_last_index(span: f64, eta: f64) -> u64 {
    let mut j = (span / eta).floor() as u64;
    if ((j + 1) as f64) * eta <= span * (1.0 + 1e-12) {
        j += 1;
    }
    while j > 0 && (j as f64) * eta > span * (1.0 + 1e-12) {
        j -= 1;
    }
    j
}

/// Right-hand side of the tilting identity `P(cW − c²/2 + Z > 0) = 2Ψ(c/2)`.
pub fn tilt_rhs(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return domain(format!("tilt parameter {c} must be positive"));
    }
    Ok(2.0 * normal_survival(c / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // mpmath, 40 digits
    const GAMMA_ORACLE: &[(f64, f64)] = &[
        (0.05, 19.47008531125551175633676),
        (0.1, 9.51350769866873128580798),
        (0.3, 2.991568987687590744642161),
        (0.5, 1.772453850905516027298167),
        (1.0, 1.0),
        (1.5, 0.8862269254527580136490837),
        (2.5, 1.329340388179137020473626),
        (3.7, 4.170651783796604030086985),
        (5.0, 24.0),
        (7.25, 1155.381013919989687202704),
        (10.0, 362880.0),
        (20.5, 540624298233507504.4736874),
        (33.3, 7.487577596522632327444354e35),
        (50.0, 6.082818640342675608722522e62),
    ];

    const PSI_ORACLE: &[(f64, f64)] = &[
        (0.0, 0.5),
        (0.5, 0.3085375387259868963622954),
        (1.0, 0.1586552539314570514147675),
        (2.0, 0.02275013194817920720028264),
        (3.0, 0.001349898031630094526651815),
        (4.5, 0.000003397673124730060401687449),
        (6.0, 9.865876450376981407008641e-10),
        (8.0, 6.220960574271784123515995e-16),
        (-1.0, 0.8413447460685429485852325),
        (-3.0, 0.9986501019683699054733482),
    ];

    #[test]
    fn gamma_matches_high_precision_values() {
        for &(x, want) in GAMMA_ORACLE {
            let got = gamma_fn(x).unwrap();
            assert!(rel(got, want) <= 1e-12, "gamma({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn gamma_rejects_out_of_range() {
        assert!(gamma_fn(0.01).is_err());
        assert!(gamma_fn(50.5).is_err());
        assert!(gamma_fn(f64::NAN).is_err());
    }

    #[test]
    fn survival_matches_erfc_oracle() {
        for &(u, want) in PSI_ORACLE {
            let got = normal_survival(u);
            assert!(rel(got, want) <= 1e-12, "Psi({u}) = {got:e}, want {want:e}");
        }
        for i in 0..=160 {
            let u = -8.0 + 0.1 * i as f64;
            assert!((normal_survival(u) + normal_survival(-u) - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn upper_quantile_inverts_survival() {
        let z = normal_upper_quantile(0.005).unwrap();
        assert!((z - 2.5758293035489).abs() < 1e-10, "{z}");
        for &p in &[1e-8, 0.01, 0.2, 0.5, 0.7, 0.999] {
            let z = normal_upper_quantile(p).unwrap();
            assert!(rel(normal_survival(z), p) < 1e-12);
        }
        assert!(normal_upper_quantile(0.0).is_err());
    }

    #[test]
    fn bound_examples() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(pickands_lower_bound_new(1.0).unwrap(), 0.25));
        assert!(close(pickands_lower_bound_new(2.0).unwrap(), 0.443_113_462_726_379));
        assert!(close(pickands_lower_bound_new(0.5).unwrap(), 1.0 / 24.0));
        assert!(close(pickands_lower_bound_old(1.0).unwrap(), 0.0625));
        assert!(close(pickands_lower_bound_old(2.0).unwrap(), 0.141_047_395_886_939_07));
        assert!(close(pickands_lower_bound_old(0.5).unwrap(), 1.0 / 128.0));
        assert!(pickands_lower_bound_new(0.0).is_err());
        assert!(pickands_lower_bound_old(2.5).is_err());
    }

    #[test]
    fn bounds_dominate_and_match_duplication_on_grid() {
        for i in 1..=40 {
            let alpha = 0.05 * i as f64;
            let pair = BoundPair::compute(alpha).unwrap();
            assert!(pair.dominates(), "{pair:?}");
            let dup = 1.0 / expected_occupation(alpha).unwrap() - pair.new_bound;
            assert!(dup.abs() <= 1e-12, "alpha {alpha}: {dup:e}");
        }
        // known endpoint values of the constant itself
        assert!(pickands_lower_bound_new(1.0).unwrap() <= 1.0);
        assert!(pickands_lower_bound_new(2.0).unwrap() <= 1.0 / std::f64::consts::PI.sqrt());
    }

    #[test]
    fn expected_occupation_examples() {
        assert!((expected_occupation(1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!((expected_occupation(2.0).unwrap() - 2.256_758_334_191_025).abs() < 1e-12);
    }

    #[test]
    fn t_closed_examples() {
        let v = t_constant_closed(1.5, 1.0, 0.0, 2.0, true).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(t_constant_closed(1.5, 1.0, 0.2, 0.1, true).unwrap(), 1.0);
        let v = t_constant_closed(1.5, 1.0, 0.2, 0.3, true).unwrap();
        assert!((v - 0.91444064360721701653).abs() < 1e-12);
        let v = t_constant_closed(1.5, 1.0, 0.2, 0.7, true).unwrap();
        assert!((v - 0.77648169312561783211).abs() < 1e-12);
        assert!(t_constant_closed(1.5, 1.0, 0.0, -0.1, true).is_err());
        // endpoint variants
        let v = t_constant_closed(1.5, 1.0, 0.0, 1.0, false).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        let v = t_constant_closed(1.5, 1.0, 0.2, 0.3, false).unwrap();
        assert!((v - 0.91444064360721701653).abs() < 1e-12);
    }

    #[test]
    fn t_finite_examples() {
        let v = t_constant_finite(1.5, 1.0, 0.0, 10.0, 2.0, true).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-12);
        assert_eq!(t_constant_finite(1.5, 1.0, 0.0, 10.0, 20.0, true).unwrap(), 0.0);
        assert_eq!(t_constant_finite(1.5, 1.0, 0.0, 10.0, 25.0, true).unwrap(), 0.0);
        for &x in &[0.1, 0.3, 0.7] {
            let a = t_constant_finite(1.5, 1.0, 0.2, 10.0, x, true).unwrap();
            let b = t_constant_closed(1.5, 1.0, 0.2, x, true).unwrap();
            assert!((a - b).abs() <= 1e-12, "x={x}: {a} vs {b}");
        }
        // lattice [-0.4, 0.4] with eta 0.2 has 5 points, measure 1.0
        assert_eq!(t_constant_finite(1.5, 1.0, 0.2, 0.4, 1.0, true).unwrap(), 0.0);
        assert!(t_constant_finite(1.5, 1.0, 0.2, 0.4, 0.9, true).unwrap() > 0.0);
    }

    /// Brute-force oracle for the finite-window `T`: integrate the indicator
    /// over a fine z-grid with the trapezoid rule.
    fn t_finite_quadrature(beta: f64, b: f64, eta: f64, span: f64, x: f64, interior: bool) -> f64 {
        let points: Vec<f64> = if eta > 0.0 {
            let j = lattice_last_index(span, eta) as i64;
            let lo = if interior { -j } else { 0 };
            (lo..=j).map(|i| i as f64 * eta).collect()
        } else {
            let h = 5e-4;
            let j = (span / h).round() as i64;
            let lo = if interior { -j } else { 0 };
            (lo..=j).map(|i| i as f64 * h).collect()
        };
        let cell = if eta > 0.0 { eta } else { 5e-4 };
        let drift: Vec<f64> = points.iter().map(|s| b * s.abs().powf(beta)).collect();
        let occupied = |z: f64| drift.iter().filter(|&&d| z > d).count() as f64 * cell;
        let dz = 1e-3;
        let mut total = 0.0;
        let mut z = 0.0;
        while z < 20.0 {
            let mid = z + 0.5 * dz;
            if occupied(mid) > x {
                total += (-z).exp() - (-(z + dz)).exp();
            }
            z += dz;
        }
        total
    }

    #[test]
    fn t_finite_agrees_with_quadrature() {
        for &(eta, x, interior) in &[
            (0.2, 0.3, true),
            (0.2, 0.5, false),
            (0.25, 1.1, true),
            (0.0, 0.8, true),
            (0.0, 0.6, false),
        ] {
            let exact = t_constant_finite(1.5, 1.0, eta, 3.0, x, interior).unwrap();
            let brute = t_finite_quadrature(1.5, 1.0, eta, 3.0, x, interior);
            assert!((exact - brute).abs() < 3e-3, "eta={eta} x={x}: {exact} vs {brute}");
        }
    }

    #[test]
    fn t_monotonicity() {
        for &eta in &[0.0, 0.2] {
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let x = 0.013 * i as f64;
                let v = t_constant_closed(1.5, 1.0, eta, x, true).unwrap();
                assert!(v <= prev);
                prev = v;
                let v1 = t_constant_closed(1.5, 1.0, eta, x.max(0.01), true).unwrap();
                let v2 = t_constant_closed(1.5, 2.0, eta, x.max(0.01), true).unwrap();
                assert!(v2 <= v1);
            }
            let mut prev = 0.0;
            for s in 1..30 {
                let v = t_constant_finite(1.5, 1.0, eta, 0.1 * s as f64, 1.3, true).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn tilt_rhs_examples() {
        assert!((tilt_rhs(2.0).unwrap() - 0.3173105078629141028).abs() < 1e-12);
        assert!((tilt_rhs(4.0).unwrap() - 0.04550026389635841440).abs() < 1e-12);
        assert!((tilt_rhs(1e-9).unwrap() - 1.0).abs() < 1e-9);
        assert!(tilt_rhs(0.0).is_err());
    }

    #[test]
    fn cells_to_exceed_is_strict() {
        assert_eq!(cells_to_exceed(0.0, 0.01), 1);
        assert_eq!(cells_to_exceed(1.0, 0.01), 101);
        assert_eq!(cells_to_exceed(0.3, 0.2), 2);
        assert_eq!(cells_to_exceed(0.4, 0.2), 3);
        assert_eq!(cells_to_exceed(0.7, 0.2), 4);
    }
}
