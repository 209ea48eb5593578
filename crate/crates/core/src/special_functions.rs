//! The three factors of the Matérn correlation: the modified Bessel function
//! of the second kind `K_nu`, the power term `x^nu` and the normalising
//! constant `2^(1-nu) / Gamma(nu)`.
//!
//! `K_nu` is evaluated with Temme's series for `z <= 2` and Steed's
//! continued fraction (CF2) above, both at a reduced order
//! `mu = nu - round(nu)` in `[-1/2, 1/2]`, followed by upward recurrence in
//! the order. Half-integer orders use the terminating finite sum. Orders
//! from [`LARGE_ORDER`] on use the uniform asymptotic (Debye) expansion, which
//! avoids a recurrence whose length grows with `nu`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{domain, MaternError, Result};

/// Orders closer than this to `p + 1/2` are treated as half-integers.
pub const HALF_INTEGER_TOLERANCE: f64 = 1e-12;

/// From this order on `K_nu` comes from the uniform asymptotic expansion,
/// whose first omitted term is of relative size `nu^-5`.
pub const LARGE_ORDER: f64 = 1000.0;

/// Above this the recurrence rescales to keep the iterates finite.
const RESCALE_THRESHOLD: f64 = 1e250;

/// Taylor coefficients of `1 / Gamma(x)` about zero, `c_1 .. c_26`.
const RECIP_GAMMA_TAYLOR: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_860_6,
    -0.655_878_071_520_253_881_1,
    -0.042_002_635_034_095_235_53,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_75,
    -0.009_621_971_527_876_973_562,
    0.007_218_943_246_663_099_542,
    -0.001_165_167_591_859_065_112,
    -0.000_215_241_674_114_950_972_8,
    0.000_128_050_282_388_116_186_2,
    -0.000_020_134_854_780_788_238_66,
    -0.000_001_250_493_482_142_670_657,
    0.000_001_133_027_231_981_695_882,
    -2.056_338_416_977_607_103e-7,
    6.116_095_104_481_415_818e-9,
    5.002_007_644_469_222_930e-9,
    -1.181_274_570_487_020_145e-9,
    1.043_426_711_691_100_510e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783e-14,
    -5.348_122_539_423_017_982e-15,
    1.226_778_628_238_260_790e-15,
    -1.181_259_301_697_458_770e-16,
];

/// Order of a modified Bessel function, validated to be positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselOrder {
    nu: f64,
    half_integer: Option<u32>,
}

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu <= 0.0 {
            return Err(domain(format!("Bessel order must be positive and finite, got {nu}")));
        }
        let p = (nu - 0.5).round().max(0.0);
        let half_integer = if (nu - (p + 0.5)).abs() < HALF_INTEGER_TOLERANCE && nu < LARGE_ORDER {
            Some(p as u32)
        } else {
            None
        };
        Ok(Self { nu, half_integer })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `Some(p)` when the order is `p + 1/2` to within [`HALF_INTEGER_TOLERANCE`]
    /// (and below [`LARGE_ORDER`], where the finite sum stops being cheap).
    pub fn half_integer(&self) -> Option<u32> {
        self.half_integer
    }
}

/// The constant, power and Bessel factors of one correlation evaluation.
///
/// When `log_scale` is set, `power` and `bessel` hold natural logarithms.
/// `constant` is always linear; it underflows to zero beyond `nu ~ 170`, so
/// `log_constant` carries its logarithm as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartValues {
    pub constant: f64,
    pub log_constant: f64,
    pub power: f64,
    pub bessel: f64,
    pub log_scale: bool,
}

impl PartValues {
    pub fn linear(nu: f64, power: f64, bessel: f64) -> Result<Self> {
        Ok(Self { constant: constant_part(nu)?, log_constant: log_constant_part(nu)?, power, bessel, log_scale: false })
    }

    pub fn logarithmic(nu: f64, ln_power: f64, ln_bessel: f64) -> Result<Self> {
        Ok(Self {
            constant: constant_part(nu)?,
            log_constant: log_constant_part(nu)?,
            power: ln_power,
            bessel: ln_bessel,
            log_scale: true,
        })
    }

    /// Recombines the factors into the correlation value.
    pub fn product(&self) -> f64 {
        if self.log_scale {
            (self.log_constant + self.power + self.bessel).exp()
        } else {
            self.constant * self.power * self.bessel
        }
    }
}

/// `K_nu(z)`.
///
/// Fails with [`MaternError::Overflow`] when the value exceeds `f64::MAX`
/// (large orders at small arguments); [`log_bessel_k`] covers that range.
pub fn bessel_k(order: &BesselOrder, z: f64) -> Result<f64> {
    check_argument(z)?;
    let value = match order.half_integer {
        Some(p) => half_integer_k(p, z),
        None => {
            let (mantissa, log_factor) = k_mantissa(order.nu, z);
            if log_factor.abs() < 700.0 {
                mantissa * log_factor.exp()
            } else {
                (mantissa.ln() + log_factor).exp()
            }
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MaternError::Overflow {
            what: format!("K_{}({z})", order.nu),
        })
    }
}

/// `ln K_nu(z)`, finite wherever `K_nu(z)` is representable in log form.
pub fn log_bessel_k(order: &BesselOrder, z: f64) -> Result<f64> {
    check_argument(z)?;
    Ok(match order.half_integer {
        Some(p) => log_half_integer_k(p, z),
        None => {
            let (mantissa, log_factor) = k_mantissa(order.nu, z);
            mantissa.ln() + log_factor
        }
    })
}

/// `K_nu(z)` for any finite real order, using `K_{-nu} = K_nu`.
///
/// [`BesselOrder`] rejects `nu = 0` because the Matérn correlation is
/// degenerate there; the Bessel function itself is not, and recurrence
/// identities near `nu = 1` need `K_0`.
pub fn bessel_k_any_order(nu: f64, z: f64) -> Result<f64> {
    if !nu.is_finite() {
        return Err(domain(format!("Bessel order must be finite, got {nu}")));
    }
    if nu == 0.0 {
        check_argument(z)?;
        let (mantissa, log_factor) = k_mantissa(0.0, z);
        return Ok(mantissa * log_factor.exp());
    }
    bessel_k(&BesselOrder::new(nu.abs())?, z)
}

/// `2^(1-nu) / Gamma(nu)`.
///
/// Tends to zero for large `nu` and stays below 0.01 from `nu = 5` on. Near
/// `nu = 0.93` it peaks slightly above one (about 1.00396).
pub fn constant_part(nu: f64) -> Result<f64> {
    check_nu(nu)?;
    if nu < 150.0 {
        Ok((1.0 - nu).exp2() / gamma(nu))
    } else {
        Ok(log_constant_part(nu)?.exp())
    }
}

/// `ln(2^(1-nu) / Gamma(nu))`.
pub fn log_constant_part(nu: f64) -> Result<f64> {
    check_nu(nu)?;
    Ok((1.0 - nu) * LN_2 - ln_gamma(nu))
}

/// `x^nu` for the scaled distance `x = d / rho`.
pub fn power_part(nu: f64, scaled_distance: f64) -> Result<f64> {
    check_nu(nu)?;
    if !(scaled_distance >= 0.0) || !scaled_distance.is_finite() {
        return Err(domain(format!(
            "scaled distance must be finite and non-negative, got {scaled_distance}"
        )));
    }
    Ok(scaled_distance.powf(nu))
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("smoothness nu must be positive and finite, got {nu}")))
    }
}

fn check_argument(z: f64) -> Result<()> {
    if z > 0.0 && !z.is_nan() {
        Ok(())
    } else {
        Err(domain(format!("K_nu(z) requires z > 0, got {z}")))
    }
}

/// Coefficients `(p + r)! / (r! (p - r)!)` of the half-integer sum in powers of `1 / (2z)`.
fn half_integer_coefficients(p: u32) -> impl Iterator<Item = f64> {
    let p = f64::from(p);
    (0..=p as u32).scan(1.0, move |a, r| {
        let current = *a;
        let r = f64::from(r);
        *a *= (p + r + 1.0) * (p - r) / (r + 1.0);
        Some(current)
    })
}

fn half_integer_k(p: u32, z: f64) -> f64 {
    let y = 0.5 / z;
    let coeffs: Vec<f64> = half_integer_coefficients(p).collect();
    let sum = coeffs.iter().rev().fold(0.0, |acc, &a| acc * y + a);
    (PI / (2.0 * z)).sqrt() * (-z).exp() * sum
}

fn log_half_integer_k(p: u32, z: f64) -> f64 {
    let ln_y = (0.5 / z).ln();
    let terms: Vec<f64> = half_integer_coefficients(p)
        .enumerate()
        .map(|(r, a)| a.ln() + r as f64 * ln_y)
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
    0.5 * (PI / (2.0 * z)).ln() - z + peak + sum.ln()
}

/// Returns `(m, l)` with `K_nu(z) = m * exp(l)`.
fn k_mantissa(nu: f64, z: f64) -> (f64, f64) {
    if nu >= LARGE_ORDER {
        return (1.0, debye_log_k(nu, z));
    }
    let steps = nu.round();
    let mu = nu - steps;
    let (k_mu, k_mu1, mut log_factor) = if z <= 2.0 {
        let (a, b) = temme_series(mu, z);
        (a, b, 0.0)
    } else {
        let (a, b) = steed_cf2_scaled(mu, z);
        (a, b, -z)
    };
    if steps == 0.0 {
        return (k_mu, log_factor);
    }

    let mut prev = k_mu;
    let mut current = k_mu1;
    let mut order = mu + 1.0;
    for _ in 1..steps as u64 {
        let next = 2.0 * order / z * current + prev;
        prev = current;
        current = next;
        order += 1.0;
        if current > RESCALE_THRESHOLD {
            prev /= current;
            log_factor += current.ln();
            current = 1.0;
        }
    }
    (current, log_factor)
}

/// `ln K_nu(nu w)` with `w = z / nu`:
///
/// `sqrt(pi / (2 nu)) e^(-nu eta) (1 + w^2)^(-1/4) sum_k (-1)^k u_k(t) / nu^k`,
/// `t = 1 / sqrt(1 + w^2)`, `eta = sqrt(1 + w^2) + ln(w / (1 + sqrt(1 + w^2)))`.
fn debye_log_k(nu: f64, z: f64) -> f64 {
    let w = z / nu;
    let root = w.hypot(1.0);
    let t = 1.0 / root;
    // ln(w / (1 + root)) without cancellation for small w
    let eta = root + w.ln() - root.ln_1p();
    let t2 = t * t;
    let u1 = t * (3.0 - 5.0 * t2) / 24.0;
    let u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
    let u3 = t * t2 * (30375.0 + t2 * (-369_603.0 + t2 * (765_765.0 - t2 * 425_425.0))) / 414_720.0;
    let u4 = t2
        * t2
        * (4_465_125.0 + t2 * (-94_121_676.0 + t2 * (349_922_430.0 + t2 * (-446_185_740.0 + t2 * 185_910_725.0))))
        / 39_813_120.0;
    let inv = 1.0 / nu;
    let series = 1.0 + inv * (-u1 + inv * (u2 + inv * (-u3 + inv * u4)));
    0.5 * (PI / (2.0 * nu)).ln() - nu * eta - 0.5 * root.ln() + series.ln()
}

/// `(1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)` and `(1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2`,
/// followed by `1/Gamma(1+mu)` and `1/Gamma(1-mu)`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let m2 = mu * mu;
    // c_k with k even feed gam1, k odd feed gam2; index i holds c_{i+1}.
    let gam1 = -RECIP_GAMMA_TAYLOR
        .iter()
        .skip(1)
        .step_by(2)
        .rev()
        .fold(0.0, |acc, &c| acc * m2 + c);
    let gam2 = RECIP_GAMMA_TAYLOR
        .iter()
        .step_by(2)
        .rev()
        .fold(0.0, |acc, &c| acc * m2 + c);
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// `(K_mu(z), K_{mu+1}(z))` for `|mu| <= 1/2`, `0 < z <= 2`.
fn temme_series(mu: f64, z: f64) -> (f64, f64) {
    const MAX_TERMS: usize = 500;
    let half_z = 0.5 * z;
    let pi_mu = PI * mu;
    let fact = if pi_mu.abs() < f64::EPSILON { 1.0 } else { pi_mu / pi_mu.sin() };
    let minus_ln_half = -half_z.ln();
    let e = mu * minus_ln_half;
    let fact2 = if e.abs() < f64::EPSILON { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);

    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * minus_ln_half);
    let mut sum = ff;
    let exp_e = e.exp();
    let mut p = 0.5 * exp_e / gampl;
    let mut q = 0.5 / (exp_e * gammi);
    let mut c = 1.0;
    let quarter_z2 = half_z * half_z;
    let mut sum1 = p;
    for i in 1..=MAX_TERMS {
        let k = i as f64;
        ff = (k * ff + p + q) / (k * k - mu * mu);
        c *= quarter_z2 / k;
        p /= k - mu;
        q /= k + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - k * ff);
        if del.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    (sum, sum1 * 2.0 / z)
}

/// `(e^z K_mu(z), e^z K_{mu+1}(z))` for `|mu| <= 1/2`, `z > 2`.
fn steed_cf2_scaled(mu: f64, z: f64) -> (f64, f64) {
    const MAX_ITER: usize = 10_000;
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=MAX_ITER {
        let k = i as f64;
        a -= 2.0 * (k - 1.0);
        c = -a * c / k;
        let q_next = (q1 - b * q2) / a;
        q1 = q2;
        q2 = q_next;
        q += c * q_next;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    h *= a1;
    let k_mu = (PI / (2.0 * z)).sqrt() / s;
    let k_mu1 = k_mu * (mu + z + 0.5 - h) / z;
    (k_mu, k_mu1)
}
