//! The Matérn correlation under its four common parametrizations.
//!
//! Every parametrization reduces to a Bessel argument `x = a * d` with a
//! parametrization-specific factor `a`:
//!
//! | tag              | scale | `a`              |
//! |------------------|-------|------------------|
//! | `Range`          | rho   | `1 / rho`        |
//! | `Decay`          | kappa | `kappa`          |
//! | `LengthScale`    | l     | `sqrt(2 nu) / l` |
//! | `HandcockStein`  | rho   | `2 sqrt(nu) / rho` |

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, MaternError, Result};
use crate::special_functions::{
    bessel_k, constant_part, log_bessel_k, log_constant_part, BesselOrder, PartValues,
};

/// Orders above this are evaluated in the log domain.
pub const LOG_DOMAIN_NU: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// `(d / rho)`: range parameter rho.
    Range,
    /// `(kappa d)`: spatial decay kappa = 1 / rho.
    Decay,
    /// `(sqrt(2 nu) d / l)`: machine-learning length scale l.
    LengthScale,
    /// `(2 sqrt(nu) d / rho)`: Handcock–Stein range.
    HandcockStein,
}

impl Parametrization {
    pub const ALL: [Parametrization; 4] = [
        Parametrization::Range,
        Parametrization::Decay,
        Parametrization::LengthScale,
        Parametrization::HandcockStein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parametrization::Range => "range",
            Parametrization::Decay => "decay",
            Parametrization::LengthScale => "length_scale",
            Parametrization::HandcockStein => "handcock_stein",
        }
    }

    /// The factor `a` with Bessel argument `a * d`.
    fn argument_factor(self, nu: f64, scale: f64) -> f64 {
        match self {
            Parametrization::Range => 1.0 / scale,
            Parametrization::Decay => scale,
            Parametrization::LengthScale => (2.0 * nu).sqrt() / scale,
            Parametrization::HandcockStein => 2.0 * nu.sqrt() / scale,
        }
    }

    /// Inverse of [`Self::argument_factor`]: the scale yielding factor `a`.
    fn scale_for_factor(self, nu: f64, a: f64) -> f64 {
        match self {
            Parametrization::Range => 1.0 / a,
            Parametrization::Decay => a,
            Parametrization::LengthScale => (2.0 * nu).sqrt() / a,
            Parametrization::HandcockStein => 2.0 * nu.sqrt() / a,
        }
    }
}

impl fmt::Display for Parametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parametrization {
    type Err = MaternError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "range" | "rho" => Ok(Parametrization::Range),
            "decay" | "kappa" => Ok(Parametrization::Decay),
            "length_scale" | "ml" | "l" => Ok(Parametrization::LengthScale),
            "handcock_stein" | "hs" => Ok(Parametrization::HandcockStein),
            other => Err(domain(format!("unknown parametrization '{other}'"))),
        }
    }
}

/// Parameters of a Matérn covariance. With `sigma2 = 1` this is a correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    nu: f64,
    scale: f64,
    sigma2: f64,
    parametrization: Parametrization,
    dim: u32,
}

impl MaternParams {
    pub fn new(nu: f64, scale: f64, parametrization: Parametrization) -> Result<Self> {
        positive("nu", nu)?;
        positive("scale", scale)?;
        Ok(Self { nu, scale, sigma2: 1.0, parametrization, dim: 1 })
    }

    /// Shorthand for the range parametrization `(d / rho)`.
    pub fn range(nu: f64, rho: f64) -> Result<Self> {
        Self::new(nu, rho, Parametrization::Range)
    }

    /// Shorthand for the spatial-decay parametrization `(kappa d)`.
    pub fn decay(nu: f64, kappa: f64) -> Result<Self> {
        Self::new(nu, kappa, Parametrization::Decay)
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        positive("sigma2", sigma2)?;
        self.sigma2 = sigma2;
        Ok(self)
    }

    pub fn with_dim(mut self, dim: u32) -> Result<Self> {
        if dim == 0 {
            return Err(domain("dimension must be at least 1"));
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn parametrization(&self) -> Parametrization {
        self.parametrization
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// Equivalent spatial decay `kappa`: the Bessel argument is `kappa * d`.
    pub fn kappa(&self) -> f64 {
        self.parametrization.argument_factor(self.nu, self.scale)
    }

    /// Equivalent range `rho = 1 / kappa`.
    pub fn rho(&self) -> f64 {
        1.0 / self.kappa()
    }

    /// `2 sqrt(nu) kappa`, the Handcock–Stein reparametrized decay.
    pub fn handcock_stein_alpha(&self) -> f64 {
        2.0 * self.nu.sqrt() * self.kappa()
    }

    pub fn convert(&self, target: Parametrization) -> MaternParams {
        if target == self.parametrization {
            return *self;
        }
        let a = self.kappa();
        MaternParams {
            scale: target.scale_for_factor(self.nu, a),
            parametrization: target,
            ..*self
        }
    }

    fn order(&self) -> BesselOrder {
        BesselOrder::new(self.nu).expect("nu validated at construction")
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must be positive and finite, got {value}")))
    }
}

fn check_distance(d: f64) -> Result<()> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("distance must be finite and non-negative, got {d}")))
    }
}

/// Matérn correlation at distance `d`; `sigma2` is not applied.
pub fn matern_corr(params: &MaternParams, d: f64) -> Result<f64> {
    check_distance(d)?;
    if d == 0.0 {
        return Ok(1.0);
    }
    let x = params.kappa() * d;
    // the scaled distance left the representable range: use the limits
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if let Some(p) = params.order().half_integer() {
        return Ok(half_integer_corr(p, x));
    }
    if params.nu > LOG_DOMAIN_NU {
        return log_corr(params, x).and_then(clamp_unit);
    }
    let direct = constant_part(params.nu)? * x.powf(params.nu) * bessel_k(&params.order(), x).unwrap_or(f64::INFINITY);
    if direct.is_finite() && direct > 0.0 {
        Ok(direct.min(1.0))
    } else {
        log_corr(params, x).and_then(clamp_unit)
    }
}

fn clamp_unit(log_value: f64) -> Result<f64> {
    if log_value.is_nan() {
        return Err(MaternError::Internal("log-domain correlation evaluated to NaN".into()));
    }
    Ok(log_value.exp().min(1.0))
}

fn log_corr(params: &MaternParams, x: f64) -> Result<f64> {
    Ok(log_constant_part(params.nu)? + params.nu * x.ln() + log_bessel_k(&params.order(), x)?)
}

/// `exp(-x) * sum_{k=0}^{p} b_k x^k` with `b_k = p! (2p - k)! 2^k / ((2p)! k! (p - k)!)`.
fn half_integer_corr(p: u32, x: f64) -> f64 {
    let p = p as usize;
    // b_0 = 1; b_{k+1} = b_k * 2 (p - k) / ((2p - k) (k + 1))
    let mut coeff = 1.0;
    let mut power = 1.0;
    let mut sum = 0.0;
    for k in 0..=p {
        sum += coeff * power;
        if k < p {
            coeff *= 2.0 * (p - k) as f64 / (((2 * p - k) as f64) * (k + 1) as f64);
            power *= x;
        }
    }
    let value = (-x).exp() * sum;
    if value.is_finite() {
        value.min(1.0)
    } else {
        // x^p overflowed while exp(-x) underflowed
        0.0
    }
}

/// The three factors of the correlation at `d > 0`.
///
/// For `nu > LOG_DOMAIN_NU` the power and Bessel factors are returned as
/// logarithms and `log_scale` is set.
pub fn matern_corr_parts(params: &MaternParams, d: f64) -> Result<PartValues> {
    check_distance(d)?;
    if d == 0.0 {
        return Err(domain("three-part decomposition is undefined at d = 0"));
    }
    let x = params.kappa() * d;
    if x == 0.0 || x.is_infinite() {
        return Err(MaternError::Overflow { what: format!("the scaled distance kappa * d = {x}") });
    }
    let nu = params.nu;
    if nu > LOG_DOMAIN_NU {
        return PartValues::logarithmic(nu, nu * x.ln(), log_bessel_k(&params.order(), x)?);
    }
    let power = x.powf(nu);
    match bessel_k(&params.order(), x) {
        Ok(bessel) if power > 0.0 => PartValues::linear(nu, power, bessel),
        _ => PartValues::logarithmic(nu, nu * x.ln(), log_bessel_k(&params.order(), x)?),
    }
}

/// Closed form for `nu = p + 1/2`: a degree-`p` polynomial times `exp(-x)`.
///
/// Uses the terminating Bessel sum directly, independently of
/// [`matern_corr`]'s evaluation path.
pub fn closed_form_corr(p: u32, params: &MaternParams, d: f64) -> Result<f64> {
    check_distance(d)?;
    let expected = f64::from(p) + 0.5;
    if (params.nu - expected).abs() >= crate::special_functions::HALF_INTEGER_TOLERANCE {
        return Err(MaternError::Precondition(format!(
            "closed form of order p = {p} needs nu = {expected}, got {}",
            params.nu
        )));
    }
    if d == 0.0 {
        return Ok(1.0);
    }
    let x = params.kappa() * d;
    // 2^(1-nu)/Gamma(nu) * x^nu * sqrt(pi/(2x)) e^-x sum_r (p+r)!/(r!(p-r)!) (2x)^-r
    // collapses to e^-x * sum_r c_r x^(p-r) with
    // c_r = 2^-p sqrt(pi) / Gamma(p+1/2) * (p+r)!/(r!(p-r)!) 2^-r.
    let lead = (-f64::from(p)).exp2() * PI.sqrt() / ln_gamma(expected).exp();
    let mut term = 1.0;
    let mut sum = 0.0;
    let pf = f64::from(p);
    for r in 0..=p {
        let rf = f64::from(r);
        sum += term * x.powi((p - r) as i32);
        term *= (pf + rf + 1.0) * (pf - rf) / ((rf + 1.0) * 2.0);
    }
    Ok(lead * sum * (-x).exp())
}

/// Gaussian `exp(-d^2 / (2 l^2))`: the `nu -> infinity` limit of the correlation
/// under the length-scale (or Handcock–Stein) scaling.
///
/// `l` is the length scale of `params` expressed in the `LengthScale`
/// parametrization; for Handcock–Stein with range `rho` that is `rho / sqrt(2)`.
pub fn gaussian_limit_corr(params: &MaternParams, d: f64) -> Result<f64> {
    check_distance(d)?;
    let l = match params.parametrization {
        Parametrization::LengthScale => params.scale,
        Parametrization::HandcockStein => params.scale / std::f64::consts::SQRT_2,
        other => {
            return Err(MaternError::Precondition(format!(
                "the Gaussian limit is defined for the length_scale or handcock_stein \
                 parametrizations, not {other}"
            )))
        }
    };
    Ok((-d * d / (2.0 * l * l)).exp())
}

/// Spectral density on `R^n` (n = `params.dim()`), normalized to integrate to `sigma2`:
///
/// `f(w) = sigma2 * Gamma(nu + n/2) / (Gamma(nu) pi^(n/2)) * kappa^(2 nu) / (kappa^2 + w^2)^(nu + n/2)`
pub fn spectral_density(params: &MaternParams, omega: f64) -> f64 {
    let nu = params.nu;
    let half_n = f64::from(params.dim) / 2.0;
    let kappa = params.kappa();
    let exponent = nu + half_n;
    let ln_norm = params.sigma2.ln() + ln_gamma(exponent) - ln_gamma(nu) - half_n * PI.ln() - 2.0 * half_n * kappa.ln();
    let shape = -exponent * (1.0 + (omega / kappa).powi(2)).ln();
    (ln_norm + shape).exp()
}
