//! Closed-form entanglement rates for both link layouts.
//!
//! Times are in seconds and rates in pairs per second. `beta_1` is the
//! end-to-end survival probability of the midpoint-interference link and
//! `beta_2` that of the midpoint-source link; the per-side success
//! probability of the latter is `p = √β2`.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, Error, Result};

fn check_beta(name: &'static str, beta: f64) -> Result<f64> {
    check_probability(name, beta)?;
    check_positive(name, beta)
}

fn check_n(n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidCount {
            name: "n",
            value: n,
            expected: "at least one cycle",
        });
    }
    Ok(n)
}

/// Protocol clock and transmission delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub tau_c_ns: f64,
    pub tau_t_us: f64,
    /// Timeout length in clock cycles, `⌈τt/τc⌉`.
    pub n: u64,
}

impl TimingParams {
    pub fn new(tau_c_ns: f64, tau_t_us: f64) -> Result<Self> {
        check_positive("tau_c_ns", tau_c_ns)?;
        check_positive("tau_t_us", tau_t_us)?;
        let ratio = tau_t_us * 1e3 / tau_c_ns;
        // Treat ratios within a few ulps of an integer as exact divisors.
        let nearest = ratio.round();
        let n = if nearest >= 1.0 && (ratio - nearest).abs() <= 1e-9 * nearest {
            nearest
        } else {
            ratio.ceil().max(1.0)
        };
        Ok(Self {
            tau_c_ns,
            tau_t_us,
            n: n as u64,
        })
    }

    /// Clock cycle that divides `tau_t_us` into exactly `n` cycles.
    pub fn from_cycles(tau_t_us: f64, n: u64) -> Result<Self> {
        check_positive("tau_t_us", tau_t_us)?;
        check_n(n)?;
        Ok(Self {
            tau_c_ns: tau_t_us * 1e3 / n as f64,
            tau_t_us,
            n,
        })
    }

    pub fn tau_c_s(&self) -> f64 {
        self.tau_c_ns * 1e-9
    }

    pub fn tau_t_s(&self) -> f64 {
        self.tau_t_us * 1e-6
    }
}

/// Midpoint-interference rate `β1/τt`: one attempt per round trip.
pub fn g1(beta_1: f64, tau_t_s: f64) -> Result<f64> {
    check_probability("beta_1", beta_1)?;
    check_positive("tau_t", tau_t_s)?;
    Ok(beta_1 / tau_t_s)
}

/// Midpoint-source rate with `n` clock cycles per transmission delay.
///
/// ```
/// # use midlink::analytic::g2;
/// let rate = g2(1e-4, 250e-6, 500).unwrap();
/// assert!((rate - 18.265).abs() < 1e-2);
/// ```
pub fn g2(beta_2: f64, tau_t_s: f64, n: u64) -> Result<f64> {
    check_beta("beta_2", beta_2)?;
    check_positive("tau_t", tau_t_s)?;
    check_n(n)?;
    let n = n as f64;
    let sqrt_b = beta_2.sqrt();
    Ok(n * beta_2 / (tau_t_s * (1.0 + n * (2.0 * sqrt_b - beta_2))))
}

/// Saturated midpoint-source rate, the `n → ∞` limit of [`g2`].
pub fn g2_star(beta_2: f64, tau_t_s: f64) -> Result<f64> {
    check_beta("beta_2", beta_2)?;
    check_positive("tau_t", tau_t_s)?;
    let sqrt_b = beta_2.sqrt();
    Ok(sqrt_b / (tau_t_s * (2.0 - sqrt_b)))
}

/// High-loss form of [`g2_star`], `√β2/(2τt)`.
pub fn g2_star_high_loss(beta_2: f64, tau_t_s: f64) -> Result<f64> {
    check_beta("beta_2", beta_2)?;
    check_positive("tau_t", tau_t_s)?;
    Ok(beta_2.sqrt() / (2.0 * tau_t_s))
}

/// `G2/G2* = x/(1+x)` with `x = n(2√β2 − β2)`.
pub fn saturation_fraction(beta_2: f64, n: u64) -> Result<f64> {
    check_beta("beta_2", beta_2)?;
    check_n(n)?;
    let x = n as f64 * (2.0 * beta_2.sqrt() - beta_2);
    Ok(x / (1.0 + x))
}

/// Smallest `n` for which `G2/G2*` reaches `fraction`.
pub fn min_n_for_fraction(beta_2: f64, fraction: f64) -> Result<u64> {
    check_beta("beta_2", beta_2)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::OutOfRange {
            name: "fraction",
            value: fraction,
            expected: "a value in (0, 1)",
        });
    }
    let per_cycle = 2.0 * beta_2.sqrt() - beta_2;
    let estimate = (fraction / ((1.0 - fraction) * per_cycle)).ceil().max(1.0) as u64;
    let reaches = |n: u64| saturation_fraction(beta_2, n).map(|f| f >= fraction);
    // The estimate can be off by one either way in floating point.
    let mut n = estimate;
    while n > 1 && reaches(n - 1)? {
        n -= 1;
    }
    while !reaches(n)? {
        n += 1;
    }
    Ok(n)
}

/// Ratio of the saturated midpoint-source rate to the midpoint-interference rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementFactor {
    /// `G2*/G1`.
    pub exact: f64,
    /// `√β2/(2β1)`.
    pub high_loss: f64,
}

pub fn improvement_factor(beta_1: f64, beta_2: f64) -> Result<ImprovementFactor> {
    check_beta("beta_1", beta_1)?;
    check_beta("beta_2", beta_2)?;
    let sqrt_b = beta_2.sqrt();
    Ok(ImprovementFactor {
        exact: sqrt_b / (beta_1 * (2.0 - sqrt_b)),
        high_loss: sqrt_b / (2.0 * beta_1),
    })
}

/// Analytic (and optionally simulated) rates at one link distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub distance_km: f64,
    pub tau_t_us: f64,
    pub alpha1_db: f64,
    pub alpha2_db: f64,
    pub g1_hz: f64,
    pub g2_hz: f64,
    pub g2_star_hz: f64,
    /// `g2_hz / g1_hz`.
    pub ratio: f64,
    #[serde(default)]
    pub sim_g2_hz: Option<f64>,
    #[serde(default)]
    pub sim_infidelity: Option<f64>,
}

impl RateReport {
    /// Evaluates every closed form for one parameter point.
    pub fn evaluate(distance_km: f64, tau_t_us: f64, alpha1_db: f64, alpha2_db: f64, n: u64) -> Result<Self> {
        let tau_t_s = tau_t_us * 1e-6;
        let beta_1 = crate::optics::db_to_prob(alpha1_db)?;
        let beta_2 = crate::optics::db_to_prob(alpha2_db)?;
        let g1_hz = g1(beta_1, tau_t_s)?;
        let g2_hz = g2(beta_2, tau_t_s, n)?;
        let g2_star_hz = g2_star(beta_2, tau_t_s)?;
        Ok(Self {
            distance_km,
            tau_t_us,
            alpha1_db,
            alpha2_db,
            g1_hz,
            g2_hz,
            g2_star_hz,
            ratio: g2_hz / g1_hz,
            sim_g2_hz: None,
            sim_infidelity: None,
        })
    }
}
