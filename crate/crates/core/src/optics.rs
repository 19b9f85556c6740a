//! Loss budgets, detection probabilities and dark-count statistics.
//!
//! Everything here is a pure function of small `Copy` value types. Losses are
//! carried in dB and converted to survival probabilities with [`db_to_prob`]
//! at the last moment, so that composing two lossy stages is a plain sum.
//!
//! Two link layouts are modelled:
//!
//! * **Midpoint interference**: both quantum-dot photons travel half the fiber
//!   and meet at a single Bell-state measurement (BSM) at the midpoint.
//! * **Midpoint source**: an entangled-pair source at the midpoint sends one
//!   photon to each end, where a local BSM interferes it with the photon of
//!   the adjacent quantum dot. Each side is characterised by `beta_qd` (the
//!   dot photon is detected) and `beta_ms` (the midpoint photon is detected).

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, check_probability, Error, Result};

/// Loss of an ideal 50:50 filter in dB, `10·log10(2)`.
pub const HALF_LOSS_DB: f64 = 10.0 * std::f64::consts::LOG10_2;

/// Converts an attenuation in dB to the probability that a photon survives it.
///
/// ```
/// # use midlink::optics::db_to_prob;
/// assert_eq!(db_to_prob(0.0).unwrap(), 1.0);
/// assert!((db_to_prob(40.0).unwrap() - 1e-4).abs() < 1e-18);
/// assert!(db_to_prob(-1.0).is_err());
/// ```
pub fn db_to_prob(alpha_db: f64) -> Result<f64> {
    check_non_negative("alpha_db", alpha_db)?;
    Ok(10f64.powf(-alpha_db / 10.0))
}

/// Inverse of [`db_to_prob`].
pub fn prob_to_db(beta: f64) -> Result<f64> {
    check_probability("beta", beta)?;
    check_positive("beta", beta)?;
    Ok(-10.0 * beta.log10())
}

/// Linear-optics Bell-state measurement configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsmVariant {
    /// Beam splitter with two detectors; only the singlet gives a double click.
    SingletOnly,
    /// Polarizing beam splitters and four detectors; singlet and one triplet.
    SingletPlusTriplet,
}

impl BsmVariant {
    /// Fraction of two-photon arrivals that are identified, with ideal detectors.
    pub fn intrinsic_fraction(self) -> f64 {
        match self {
            BsmVariant::SingletOnly => 0.25,
            BsmVariant::SingletPlusTriplet => 0.5,
        }
    }

    pub fn detectors(self) -> u32 {
        match self {
            BsmVariant::SingletOnly => 2,
            BsmVariant::SingletPlusTriplet => 4,
        }
    }

    /// Number of accepted click patterns a single dark count can complete.
    pub fn dark_count_multiplicity(self) -> f64 {
        match self {
            BsmVariant::SingletOnly => 1.0,
            BsmVariant::SingletPlusTriplet => 2.0,
        }
    }
}

/// Photonic qubit encoding at the quantum dot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingVariant {
    Polarization,
    /// Polarization converted to time bins; half of the dot photons are discarded.
    TimeBinConverted,
}

impl EncodingVariant {
    /// Extra loss per quantum-dot photon.
    pub fn penalty_db(self) -> f64 {
        match self {
            EncodingVariant::Polarization => 0.0,
            EncodingVariant::TimeBinConverted => HALF_LOSS_DB,
        }
    }
}

/// What sits at the midpoint of a midpoint-source link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MidpointVariant {
    EntangledPairSource,
    /// Two single-photon sources and a beam splitter; halves the success probability.
    TwoSinglePhotonSources,
}

impl MidpointVariant {
    /// Extra loss for the whole link, split evenly between the two sides.
    pub fn penalty_db(self) -> f64 {
        match self {
            MidpointVariant::EntangledPairSource => 0.0,
            MidpointVariant::TwoSinglePhotonSources => HALF_LOSS_DB,
        }
    }
}

/// Hardware losses that do not depend on distance, plus the fiber attenuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    /// Per quantum-dot photon: coupling, frequency conversion, detection.
    pub alpha_qd: f64,
    /// Per BSM apparatus: partial-BSM fraction and detector inefficiency.
    pub alpha_bsm: f64,
    pub fiber_db_per_km: f64,
    /// Extra loss at the midpoint source (pair-generation inefficiency).
    pub source_penalty_db: f64,
    /// Share of `alpha_bsm` charged to the dot-photon arm of a midpoint-source BSM.
    pub bsm_split_fraction: f64,
}

impl Default for LossBudget {
    fn default() -> Self {
        Self {
            alpha_qd: 0.0,
            alpha_bsm: 0.0,
            fiber_db_per_km: 0.2,
            source_penalty_db: 0.0,
            bsm_split_fraction: 0.5,
        }
    }
}

impl LossBudget {
    /// Budget with the given fixed losses and default fiber/split settings.
    pub fn new(alpha_qd: f64, alpha_bsm: f64) -> Result<Self> {
        Self {
            alpha_qd,
            alpha_bsm,
            ..Self::default()
        }
        .validated()
    }

    /// 10 dB per quantum dot, 5 dB per BSM.
    pub fn square_profile() -> Self {
        Self {
            alpha_qd: 10.0,
            alpha_bsm: 5.0,
            ..Self::default()
        }
    }

    /// 20 dB per quantum dot, 10 dB per BSM.
    pub fn triangle_profile() -> Self {
        Self {
            alpha_qd: 20.0,
            alpha_bsm: 10.0,
            ..Self::default()
        }
    }

    /// Budget whose BSM loss is built from the apparatus variant and the
    /// quantum efficiency of each detector instead of being given in dB.
    pub fn with_detector_bsm(alpha_qd: f64, variant: BsmVariant, efficiency: f64) -> Result<Self> {
        Self::new(alpha_qd, bsm_loss_db(variant, efficiency)?)
    }

    pub fn validated(self) -> Result<Self> {
        check_non_negative("alpha_qd", self.alpha_qd)?;
        check_non_negative("alpha_bsm", self.alpha_bsm)?;
        check_non_negative("fiber_db_per_km", self.fiber_db_per_km)?;
        check_non_negative("source_penalty_db", self.source_penalty_db)?;
        check_probability("bsm_split_fraction", self.bsm_split_fraction)?;
        Ok(self)
    }
}

/// BSM loss `-10·log10(f·η²)` for intrinsic fraction `f` and detector efficiency `η`.
pub fn bsm_loss_db(variant: BsmVariant, efficiency: f64) -> Result<f64> {
    check_probability("efficiency", efficiency)?;
    check_positive("efficiency", efficiency)?;
    prob_to_db(variant.intrinsic_fraction() * efficiency * efficiency)
}

/// End-to-end distance and signal delay of a symmetric link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub length_km: f64,
    pub delay_us_per_km: f64,
}

impl ChannelGeometry {
    /// Geometry with the usual 5 µs/km fiber delay.
    pub fn new(length_km: f64) -> Result<Self> {
        Self::with_delay(length_km, 5.0)
    }

    pub fn with_delay(length_km: f64, delay_us_per_km: f64) -> Result<Self> {
        check_positive("length_km", length_km)?;
        check_positive("delay_us_per_km", delay_us_per_km)?;
        Ok(Self {
            length_km,
            delay_us_per_km,
        })
    }

    /// Full-channel transmission delay in µs.
    pub fn tau_t_us(&self) -> f64 {
        self.length_km * self.delay_us_per_km
    }

    pub fn tau_t_s(&self) -> f64 {
        self.tau_t_us() * 1e-6
    }
}

/// Detector dark counts seen through a coincidence filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub dark_count_rate_hz: f64,
    pub window_ns: f64,
}

impl DetectorModel {
    pub fn new(dark_count_rate_hz: f64, window_ns: f64) -> Result<Self> {
        check_non_negative("dark_count_rate_hz", dark_count_rate_hz)?;
        check_non_negative("window_ns", window_ns)?;
        let model = Self {
            dark_count_rate_hz,
            window_ns,
        };
        let p_dc = model.p_dc();
        if p_dc >= 1.0 {
            return Err(Error::OutOfRange {
                name: "p_dc",
                value: p_dc,
                expected: "dark-count probability per window < 1",
            });
        }
        Ok(model)
    }

    /// Dark-count probability per filtering window.
    pub fn p_dc(&self) -> f64 {
        self.dark_count_rate_hz * self.window_ns * 1e-9
    }
}

/// Total loss of the midpoint-interference link, `α1`.
///
/// Two dot photons each cross half the fiber and share one BSM, so the fiber
/// term is charged once for the full length and the dot loss twice.
pub fn mpi_loss(budget: &LossBudget, geom: &ChannelGeometry, enc: EncodingVariant) -> Result<f64> {
    budget.validated()?;
    Ok(2.0 * budget.alpha_qd
        + budget.alpha_bsm
        + budget.fiber_db_per_km * geom.length_km
        + 2.0 * enc.penalty_db())
}

/// Per-side loss of a midpoint-source link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideLoss {
    pub alpha_side_db: f64,
    /// Probability that the local quantum-dot photon is detected.
    pub beta_qd: f64,
    /// Probability that the photon from the midpoint is detected.
    pub beta_ms: f64,
}

impl SideLoss {
    /// Total link loss, `α2 = 2·α_side`.
    pub fn alpha2_db(&self) -> f64 {
        2.0 * self.alpha_side_db
    }

    /// Per-side BSM success probability `p = β_qd·β_ms = √β2`.
    pub fn p_side(&self) -> f64 {
        self.beta_qd * self.beta_ms
    }

    /// `β2 = (β_qd·β_ms)²`.
    pub fn beta2(&self) -> f64 {
        let p = self.p_side();
        p * p
    }
}

pub fn mps_side_loss(
    budget: &LossBudget,
    geom: &ChannelGeometry,
    enc: EncodingVariant,
    mid: MidpointVariant,
) -> Result<SideLoss> {
    budget.validated()?;
    let split = budget.bsm_split_fraction;
    let qd_db = budget.alpha_qd + split * budget.alpha_bsm + enc.penalty_db();
    let ms_db = (1.0 - split) * budget.alpha_bsm
        + budget.fiber_db_per_km * geom.length_km / 2.0
        + budget.source_penalty_db
        + mid.penalty_db() / 2.0;
    let beta_qd = db_to_prob(qd_db)?;
    let beta_ms = db_to_prob(ms_db)?;
    Ok(SideLoss {
        alpha_side_db: -10.0 * (beta_qd * beta_ms).log10(),
        beta_qd,
        beta_ms,
    })
}

fn warn_if_not_small(p_dc: f64, beta_qd: f64, beta_ms: f64) {
    if p_dc > 0.0 && p_dc >= beta_qd.min(beta_ms) {
        warn!(
            "p_dc = {p_dc:e} is not small against min(beta_qd, beta_ms) = {:e}; \
             lowest-order dark-count formulas are unreliable",
            beta_qd.min(beta_ms)
        );
    }
}

/// Probability, per pair of open receivers, that a coincidence is accepted
/// while one side's double click was completed by a dark count.
pub fn false_herald_prob(p_dc: f64, beta_qd: f64, beta_ms: f64, variant: BsmVariant) -> Result<f64> {
    check_probability("p_dc", p_dc)?;
    check_probability("beta_qd", beta_qd)?;
    check_probability("beta_ms", beta_ms)?;
    warn_if_not_small(p_dc, beta_qd, beta_ms);
    let one_lost = beta_qd * beta_qd * beta_ms * (1.0 - beta_ms)
        + beta_ms * beta_ms * beta_qd * (1.0 - beta_qd);
    Ok(2.0 * p_dc * one_lost * variant.dark_count_multiplicity())
}

fn check_detection(name: &'static str, beta: f64) -> Result<f64> {
    check_probability(name, beta)?;
    check_positive(name, beta)
}

/// Infidelity `1 - F` of a midpoint-source pair to lowest order in `p_dc`,
/// evaluated as false-acceptance weight over `(β_qd·β_ms)²`.
pub fn fidelity_mps(p_dc: f64, beta_qd: f64, beta_ms: f64) -> Result<f64> {
    check_probability("p_dc", p_dc)?;
    check_detection("beta_qd", beta_qd)?;
    check_detection("beta_ms", beta_ms)?;
    let numerator = p_dc
        * (beta_qd * beta_qd * beta_ms * (1.0 - beta_ms)
            + beta_ms * beta_ms * beta_qd * (1.0 - beta_qd));
    let joint = beta_qd * beta_ms;
    Ok(numerator / (joint * joint))
}

/// Reduced form of [`fidelity_mps`]: `p_dc·[(1-β_ms)/β_ms + (1-β_qd)/β_qd]`.
pub fn fidelity_mps_reduced(p_dc: f64, beta_qd: f64, beta_ms: f64) -> Result<f64> {
    check_probability("p_dc", p_dc)?;
    check_detection("beta_qd", beta_qd)?;
    check_detection("beta_ms", beta_ms)?;
    Ok(p_dc * ((1.0 - beta_ms) / beta_ms + (1.0 - beta_qd) / beta_qd))
}

/// Infidelity of a midpoint-interference pair, `p_dc/√β1`.
pub fn fidelity_mpi(p_dc: f64, beta_1: f64) -> Result<f64> {
    check_probability("p_dc", p_dc)?;
    check_detection("beta_1", beta_1)?;
    Ok(p_dc * beta_1.sqrt() / beta_1)
}

/// Per-attempt herald probabilities of one open receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldProbabilities {
    /// Both photons detected.
    pub true_herald: f64,
    /// A double click completed by at least one dark count.
    pub false_herald: f64,
}

impl HeraldProbabilities {
    pub fn any(&self) -> f64 {
        self.true_herald + self.false_herald
    }

    /// Fraction of same-bin coincidences in which at least one side's herald
    /// is false. Sides are independent, so this is `1 - (t/h)²`.
    pub fn coincidence_infidelity(&self) -> f64 {
        let h = self.any();
        if h == 0.0 {
            return 0.0;
        }
        let clean = self.true_herald / h;
        1.0 - clean * clean
    }
}

/// Lowest-order herald model: a lone surviving photon is completed by a dark
/// count with probability `2·p_dc` per accepted pattern, and two dark counts
/// with probability `p_dc²` per accepted pattern.
pub fn herald_probabilities(
    p_dc: f64,
    beta_qd: f64,
    beta_ms: f64,
    variant: BsmVariant,
) -> Result<HeraldProbabilities> {
    check_probability("p_dc", p_dc)?;
    check_probability("beta_qd", beta_qd)?;
    check_probability("beta_ms", beta_ms)?;
    let m = variant.dark_count_multiplicity();
    let one_survives = beta_qd * (1.0 - beta_ms) + beta_ms * (1.0 - beta_qd);
    let none_survive = (1.0 - beta_qd) * (1.0 - beta_ms);
    let single = (2.0 * p_dc * m).min(1.0);
    let double = p_dc * p_dc * m;
    Ok(HeraldProbabilities {
        true_herald: beta_qd * beta_ms,
        false_herald: one_survives * single + none_survive * double,
    })
}
