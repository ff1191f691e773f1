//! Cross-Kerr QND photon-number detector.
//!
//! A signal in Fock state `|n>` rotates a coherent probe `|alpha_p>` to
//! `|alpha_p e^{i n theta}>` with `theta = chi t`. The probe is read by
//! homodyne detection of a single quadrature. Device imperfections are
//! summarized by a heralding efficiency `eta`, a destruction probability
//! `eps` and a relative H/V phase `delta` imprinted per measurement.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};
use crate::model::{ExcitationState, C64};

/// Slack allowed on `eta + eps <= 1` for values read from text.
const PROBABILITY_SLACK: f64 = 1e-12;

/// Effective parameters of one QND device.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QndDeviceModel {
    /// Kerr phase `chi * t` in radians, in `(-pi, pi]`.
    pub theta: f64,
    /// Coherent probe amplitude, serialized as `[re, im]`.
    pub alpha_p: C64,
    /// Probability that a present photon is heralded and left intact.
    pub eta: f64,
    /// Probability that the device itself absorbs the photon.
    pub eps: f64,
    /// Relative phase between H and V imprinted per measurement.
    pub delta: f64,
}

impl QndDeviceModel {
    /// Lossless, polarization-insensitive device with a strong probe.
    pub fn ideal() -> Self {
        Self {
            theta: std::f64::consts::FRAC_PI_2,
            alpha_p: C64::new(4.0, 0.0),
            eta: 1.0,
            eps: 0.0,
            delta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pi = std::f64::consts::PI;
        if !(self.theta > -pi && self.theta <= pi) {
            return Err(invalid("theta", format!("{} is outside (-pi, pi]", self.theta)));
        }
        if !(self.alpha_p.re.is_finite() && self.alpha_p.im.is_finite()) {
            return Err(invalid("alpha_p", "probe amplitude must be finite"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid("eta", format!("{} is outside [0, 1]", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(invalid("eps", format!("{} is outside [0, 1]", self.eps)));
        }
        if self.eta + self.eps > 1.0 + PROBABILITY_SLACK {
            return Err(invalid(
                "eta",
                format!("eta + eps = {} exceeds 1", self.eta + self.eps),
            ));
        }
        if !self.delta.is_finite() {
            return Err(invalid("delta", "polarization asymmetry must be finite"));
        }
        Ok(())
    }
}

/// Factor acquired by the probe amplitude for `n_s` signal photons.
pub fn probe_phase(n_s: u32, theta: f64) -> Result<C64> {
    match n_s {
        0 => Ok(C64::new(1.0, 0.0)),
        1 => Ok(C64::from_polar(1.0, theta)),
        n => Err(invalid(
            "n_s",
            format!("only 0 or 1 signal photons are modeled, got {n}"),
        )),
    }
}

/// Which probe quadrature is measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuadratureAngle {
    /// `q_phi = (a e^{-i phi} + a^dagger e^{i phi}) / sqrt 2`.
    Fixed(f64),
    Rule(QuadratureRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    /// Whichever of the position (`phi = 0`) and momentum (`phi = pi/2`)
    /// quadratures separates the two probe states more; momentum on ties.
    Optimal,
    /// The continuous angle along the probe displacement.
    Tuned,
}

impl QuadratureAngle {
    pub const OPTIMAL: QuadratureAngle = QuadratureAngle::Rule(QuadratureRule::Optimal);
    pub const TUNED: QuadratureAngle = QuadratureAngle::Rule(QuadratureRule::Tuned);

    /// The measured angle for a given probe and Kerr phase.
    pub fn resolve(self, alpha_p: C64, theta: f64) -> f64 {
        match self {
            QuadratureAngle::Fixed(phi) => phi,
            QuadratureAngle::Rule(QuadratureRule::Optimal) => optimal_quadrature_angle(alpha_p, theta),
            QuadratureAngle::Rule(QuadratureRule::Tuned) => tuned_quadrature_angle(alpha_p, theta),
        }
    }
}

/// Error probabilities of the midpoint-threshold photon-number readout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    /// Photon present, read absent.
    pub false_negative: f64,
    /// Photon absent, read present.
    pub false_positive: f64,
    /// Quadrature value separating the two readings.
    pub threshold: f64,
}

/// Mean of `q_phi` for the coherent state `|beta>`.
pub fn quadrature_mean(beta: C64, phi: f64) -> f64 {
    std::f64::consts::SQRT_2 * (beta * C64::from_polar(1.0, -phi)).re
}

/// Canonical quadrature with the larger mean separation.
pub fn optimal_quadrature_angle(alpha_p: C64, theta: f64) -> f64 {
    let shift = alpha_p * (C64::from_polar(1.0, theta) - 1.0);
    let momentum = std::f64::consts::FRAC_PI_2;
    if shift.re.abs() > shift.im.abs() {
        0.0
    } else {
        momentum
    }
}

/// Angle along the displacement between the two probe states, which
/// maximizes the mean separation over all quadratures.
pub fn tuned_quadrature_angle(alpha_p: C64, theta: f64) -> f64 {
    let shift = alpha_p * (C64::from_polar(1.0, theta) - 1.0);
    if shift.norm() == 0.0 {
        0.0
    } else {
        shift.arg()
    }
}

/// Models the homodyne readout of the probe. Each quadrature outcome is
/// Gaussian with variance 1/2 around [`quadrature_mean`]; the threshold sits
/// midway between the zero- and one-photon means.
pub fn homodyne_discriminate(alpha_p: C64, theta: f64, angle: QuadratureAngle) -> DiscriminationReport {
    let phi = angle.resolve(alpha_p, theta);
    let mean_absent = quadrature_mean(alpha_p, phi);
    let mean_present = quadrature_mean(alpha_p * C64::from_polar(1.0, theta), phi);
    let threshold = 0.5 * (mean_absent + mean_present);
    let separation = (mean_present - mean_absent).abs();
    if separation == 0.0 {
        return DiscriminationReport {
            false_negative: 0.5,
            false_positive: 0.5,
            threshold,
        };
    }
    // tail of N(0, 1/2) beyond separation / 2 is erfc(separation / 2) / 2
    let tail = 0.5 * erfc(0.5 * separation);
    DiscriminationReport {
        false_negative: tail,
        false_positive: tail,
        threshold,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QndOutcome {
    /// Photon heralded and left in place.
    Present,
    /// No herald.
    Absent,
    /// The device absorbed the photon.
    Destroyed,
}

/// One measurement branch with its probability and conditional state.
#[derive(Clone, Debug, PartialEq)]
pub struct QndBranch {
    pub outcome: QndOutcome,
    pub probability: f64,
    /// `None` when the branch has zero probability or the photon left the model.
    pub post_state: Option<ExcitationState>,
}

/// All three branches of a QND measurement on `state`.
///
/// With photon weight `P`, "present" has probability `eta P` and leaves the
/// projected photon pulse with the polarization phase `delta` applied;
/// "destroyed" has probability `eps P`; "absent" collects the rest, with an
/// unheralded photon component of weight `(1 - eta - eps) P` alongside the
/// phonon branch.
pub fn qnd_branches(state: &ExcitationState, device: &QndDeviceModel) -> Result<[QndBranch; 3]> {
    device.validate()?;
    let photon = state.photon_weight();
    let phonon = state.phonon_weight();
    let total = photon + phonon;
    let p_s = if total > 0.0 { photon / total } else { 0.0 };

    let eta = device.eta;
    let eps = device.eps.min(1.0 - eta).max(0.0);
    let unheralded = (1.0 - eta - eps).max(0.0);

    let present_probability = eta * p_s;
    let present_state = if present_probability > 0.0 {
        state
            .project_onto_photon()
            .map(|s| s.with_polarization(s.polarization().with_relative_phase(device.delta)))
    } else {
        None
    };

    let absent_probability = unheralded * p_s + (1.0 - p_s);
    let absent_state = if absent_probability > 0.0 {
        state.reweighted(unheralded.sqrt())
    } else {
        None
    };

    Ok([
        QndBranch {
            outcome: QndOutcome::Present,
            probability: present_probability,
            post_state: present_state,
        },
        QndBranch {
            outcome: QndOutcome::Absent,
            probability: absent_probability,
            post_state: absent_state,
        },
        QndBranch {
            outcome: QndOutcome::Destroyed,
            probability: eps * p_s,
            post_state: None,
        },
    ])
}

/// The branch for a chosen outcome.
pub fn apply_qnd(
    state: &ExcitationState,
    device: &QndDeviceModel,
    outcome: QndOutcome,
) -> Result<QndBranch> {
    let branches = qnd_branches(state, device)?;
    Ok(branches
        .into_iter()
        .find(|b| b.outcome == outcome)
        .expect("every outcome has a branch"))
}

/// Samples an outcome from the caller's random stream.
pub fn sample_qnd<R: Rng + ?Sized>(
    state: &ExcitationState,
    device: &QndDeviceModel,
    rng: &mut R,
) -> Result<QndBranch> {
    let branches = qnd_branches(state, device)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for b in &branches {
        acc += b.probability;
        if u < acc {
            return Ok(b.clone());
        }
    }
    // rounding left a sliver above the last cumulative value
    Ok(branches
        .into_iter()
        .rev()
        .find(|b| b.probability > 0.0)
        .expect("branch probabilities sum to one"))
}

/// Probability that the classical readout says "present", composing the
/// state branches with the homodyne error rates.
pub fn read_present_probability(branches: &[QndBranch; 3], report: &DiscriminationReport) -> f64 {
    branches
        .iter()
        .map(|b| match b.outcome {
            QndOutcome::Present => b.probability * (1.0 - report.false_negative),
            QndOutcome::Absent | QndOutcome::Destroyed => b.probability * report.false_positive,
        })
        .sum()
}

/// Success model of an ancilla-assisted probabilistic CNOT.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum CnotModel {
    /// `m^2 / (m + 1)^2`.
    Klm,
    /// Independent attempts, `1 - (1 - p1)^m`.
    Geometric { p1: f64 },
}

pub fn cnot_qnd_success(ancillas: u32, model: CnotModel) -> Result<f64> {
    if ancillas == 0 {
        return Err(invalid("m", "at least one ancilla is required"));
    }
    let m = f64::from(ancillas);
    match model {
        CnotModel::Klm => Ok((m / (m + 1.0)).powi(2)),
        CnotModel::Geometric { p1 } => {
            if !(p1 > 0.0 && p1 <= 1.0) {
                return Err(invalid("p1", format!("{p1} is outside (0, 1]")));
            }
            Ok(1.0 - (1.0 - p1).powf(m))
        }
    }
}
