//! Repeated QND photon-number measurements.
//!
//! The pulse evolves freely for `tau`, the photon number is measured, and on
//! a "present" outcome the state collapses onto the photon branch (phonon
//! amplitudes zeroed, photon amplitudes renormalized) before the next
//! interval. The per-interval survival `q_k` is recorded for every interval
//! since the collapsed pulse need not equal the initial one in a multimode
//! bath.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{SpectralPropagator, PHOTON_STATE_TOLERANCE};
use crate::model::{ExcitationState, Hamiltonian, Polarization};
use crate::qnd::{apply_qnd, QndDeviceModel, QndOutcome};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZenoConfig {
    /// Interval between measurements.
    pub tau: f64,
    /// Number of measurements.
    pub measurements: usize,
    /// Imperfect device; `None` is an ideal projective measurement.
    pub device: Option<QndDeviceModel>,
}

impl ZenoConfig {
    pub fn new(tau: f64, measurements: usize) -> Result<Self> {
        let cfg = Self {
            tau,
            measurements,
            device: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_device(mut self, device: QndDeviceModel) -> Self {
        self.device = Some(device);
        self
    }

    pub fn total_time(&self) -> f64 {
        self.tau * self.measurements as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid("tau", "measurement interval must be positive"));
        }
        if self.measurements == 0 {
            return Err(invalid("n", "at least one measurement is required"));
        }
        if let Some(d) = &self.device {
            d.validate()?;
        }
        Ok(())
    }
}

/// Outcome count of a Monte-Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloTally {
    pub successes: u64,
    pub trials: u64,
    pub seed: u64,
}

impl MonteCarloTally {
    pub fn fraction(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Survival record of a measurement sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ZenoRecord {
    pub tau: f64,
    /// Conditional survival `q_k` of each interval.
    pub per_interval: Vec<f64>,
    /// Running products of `per_interval`.
    pub cumulative: Vec<f64>,
    /// Fitted decay rate of the cumulative survival, when defined.
    pub gamma_eff: Option<f64>,
    /// Polarization after the last "present" outcome.
    pub final_polarization: Polarization,
    /// First interval (1-based) whose survival was zero.
    pub absorbed_at: Option<usize>,
    pub trials: Option<MonteCarloTally>,
}

impl ZenoRecord {
    pub fn final_survival(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(1.0)
    }

    /// `(k, t = k tau, q_k, cumulative_k)` rows, `k` starting at 1.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64, f64)> + '_ {
        self.per_interval
            .iter()
            .zip(&self.cumulative)
            .enumerate()
            .map(move |(i, (&q, &c))| (i + 1, (i + 1) as f64 * self.tau, q, c))
    }
}

/// Follows the "present" branch through `cfg.measurements` intervals.
pub fn run_ensemble(
    state0: &ExcitationState,
    h: &Hamiltonian,
    cfg: &ZenoConfig,
) -> Result<ZenoRecord> {
    cfg.validate()?;
    if state0.photon_amplitudes().len() != h.n_photon()
        || state0.phonon_amplitudes().len() != h.n_phonon()
    {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: state0.dim(),
        });
    }
    let phonon_weight = state0.phonon_weight();
    if phonon_weight > PHOTON_STATE_TOLERANCE {
        return Err(Error::NotPhotonState(phonon_weight));
    }

    let step = SpectralPropagator::new(h).unitary(cfg.tau);
    let n = cfg.measurements;
    let mut per_interval = Vec::with_capacity(n);
    let mut state = state0.clone();
    let mut absorbed_at = None;

    for k in 0..n {
        let evolved = ExcitationState::from_vector(
            &(&step * state.to_vector()),
            h.n_photon(),
            state.polarization(),
        );
        let (q, post) = match &cfg.device {
            None => (evolved.survival_probability(), evolved.project_onto_photon()),
            Some(device) => {
                let branch = apply_qnd(&evolved, device, QndOutcome::Present)?;
                (branch.probability, branch.post_state)
            }
        };
        match post {
            Some(next) if q > 0.0 => {
                per_interval.push(q);
                state = next;
            }
            _ => {
                absorbed_at = Some(k + 1);
                per_interval.resize(n, 0.0);
                break;
            }
        }
    }

    let cumulative: Vec<f64> = per_interval
        .iter()
        .scan(1.0, |acc, &q| {
            *acc *= q;
            Some(*acc)
        })
        .collect();

    let mut record = ZenoRecord {
        tau: cfg.tau,
        per_interval,
        cumulative,
        gamma_eff: None,
        final_polarization: state.polarization(),
        absorbed_at,
        trials: None,
    };
    record.gamma_eff = effective_decay_rate(&record).ok();
    Ok(record)
}

/// Independent random stream for one trial.
fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Samples `trials` measurement sequences and tallies those that see
/// "present" at every measurement.
///
/// Conditioned on "present" outcomes the post-measurement state is
/// deterministic, so each trial draws against the ensemble's `q_k`. Trial `i`
/// uses stream `i` of a ChaCha generator keyed by `seed`, which makes the
/// tally independent of how trials are scheduled across threads.
pub fn run_monte_carlo(
    state0: &ExcitationState,
    h: &Hamiltonian,
    cfg: &ZenoConfig,
    trials: u64,
    seed: u64,
) -> Result<ZenoRecord> {
    if trials == 0 {
        return Err(invalid("trials", "at least one trial is required"));
    }
    let mut record = run_ensemble(state0, h, cfg)?;
    let q = &record.per_interval;
    let successes = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = trial_rng(seed, trial);
            q.iter().all(|&qk| rng.random::<f64>() < qk)
        })
        .count() as u64;
    record.trials = Some(MonteCarloTally {
        successes,
        trials,
        seed,
    });
    Ok(record)
}

/// Idealized survival after `T / tau` measurements with constant
/// per-interval survival `1 - (gamma tau)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSurvival {
    pub intervals: u64,
    /// `(1 - (gamma tau)^2)^N`.
    pub exact_product: f64,
    /// `exp(-gamma^2 tau T)`, the large-`N` limit.
    pub exponential_approx: f64,
}

pub fn analytic_survival(gamma: f64, tau: f64, total_time: f64) -> Result<AnalyticSurvival> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", "rate must be non-negative and finite"));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(invalid("tau", "interval must be positive"));
    }
    if !(total_time >= 0.0) || !total_time.is_finite() {
        return Err(invalid("T", "total time must be non-negative"));
    }
    let x = gamma * tau;
    if x >= 1.0 {
        return Err(Error::QuadraticLawViolated(x));
    }
    let ratio = total_time / tau;
    let intervals = ratio.round();
    if (ratio - intervals).abs() > 1e-9 * ratio.max(1.0) {
        warn!("T / tau = {ratio} is not an integer; using {intervals} intervals");
    }
    let exact_product = if intervals <= i32::MAX as f64 {
        (1.0 - x * x).powi(intervals as i32)
    } else {
        (1.0 - x * x).powf(intervals)
    };
    Ok(AnalyticSurvival {
        intervals: intervals as u64,
        exact_product,
        exponential_approx: (-gamma * gamma * tau * total_time).exp(),
    })
}

/// Least-squares slope of `-ln(cumulative_k)` against `k tau`, over the
/// intervals before any absorption.
pub fn effective_decay_rate(record: &ZenoRecord) -> Result<f64> {
    let points: Vec<(f64, f64)> = record
        .cumulative
        .iter()
        .enumerate()
        .take_while(|(_, &c)| c > 0.0)
        .map(|(i, &c)| ((i + 1) as f64 * record.tau, -c.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} positive cumulative values, need at least 2",
            points.len()
        )));
    }
    Ok(linear_fit(&points).0)
}

/// Ordinary least squares `y = slope x + intercept`.
pub(crate) fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    let slope = sxy / sxx;
    (slope, mean_y - slope * mean_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        assemble_hamiltonian, build_coupling, initial_pulse, CouplingKind, ModeGrid, ModeLabel,
        PulseShape, C64,
    };

    fn two_level(g: f64) -> (Hamiltonian, ExcitationState) {
        let p = ModeGrid::uniform(1, 1.0, 1.0, ModeLabel::Photon).unwrap();
        let b = ModeGrid::uniform(1, 1.0, 1.0, ModeLabel::Phonon).unwrap();
        let c = build_coupling(&CouplingKind::Flat, g, &p, &b).unwrap();
        let h = assemble_hamiltonian(&p, &b, &c).unwrap();
        let s = initial_pulse(&p, &b, PulseShape::SingleMode { mode: 0 }, Polarization::diagonal()).unwrap();
        (h, s)
    }

    fn small_bath() -> (Hamiltonian, ExcitationState) {
        let p = ModeGrid::uniform(5, 0.8, 1.2, ModeLabel::Photon).unwrap();
        let b = ModeGrid::uniform(31, 0.0, 2.0, ModeLabel::Phonon).unwrap();
        let c = build_coupling(&CouplingKind::Lorentzian { center: 1.0, width: 0.4 }, 0.05, &p, &b).unwrap();
        let h = assemble_hamiltonian(&p, &b, &c).unwrap();
        let s = initial_pulse(&p, &b, PulseShape::Gaussian { center: 1.0, width: 0.1 }, Polarization::diagonal())
            .unwrap();
        (h, s)
    }

    #[test]
    fn decoupled_never_decays() {
        let (h, s) = two_level(0.0);
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.3, 17).unwrap()).unwrap();
        assert!(r.per_interval.iter().all(|&q| (q - 1.0).abs() < 1e-14));
        assert!((r.final_survival() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_level_constant_interval_survival() {
        let (h, s) = two_level(1.0);
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 100).unwrap()).unwrap();
        let q = 0.1_f64.cos().powi(2);
        for &qk in &r.per_interval {
            assert!((qk - q).abs() < 1e-13);
        }
        let mut product = 1.0;
        for _ in 0..100 {
            product *= q;
        }
        assert!((r.final_survival() - product).abs() < 1e-10);
        assert!((r.final_survival() - 0.3673).abs() < 1e-4);
    }

    #[test]
    fn finer_measurements_survive_longer() {
        let (h, s) = two_level(1.0);
        let coarse = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 100).unwrap()).unwrap();
        let fine = run_ensemble(&s, &h, &ZenoConfig::new(0.05, 200).unwrap()).unwrap();
        assert!(fine.final_survival() > coarse.final_survival());
        assert!((fine.final_survival() - 0.6064).abs() < 1e-4);
    }

    #[test]
    fn record_invariants_in_multimode_bath() {
        let (h, s) = small_bath();
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.5, 40).unwrap()).unwrap();
        let mut product = 1.0;
        for (q, c) in r.per_interval.iter().zip(&r.cumulative) {
            assert!((0.0..=1.0).contains(q));
            product *= q;
            assert!((product - c).abs() < 1e-12);
        }
        assert!(r.cumulative.windows(2).all(|w| w[1] <= w[0]));
        // the reshaped pulse makes q_k drift
        let spread = r.per_interval.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - r.per_interval.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread > 0.0);
    }

    #[test]
    fn projection_zeroes_phonons_and_keeps_polarization() {
        let (h, s) = small_bath();
        let pol = Polarization::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        let s = s.with_polarization(pol);
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.4, 100).unwrap()).unwrap();
        assert_eq!(r.final_polarization, pol);
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.4, 100).unwrap().with_device(QndDeviceModel::ideal())).unwrap();
        assert_eq!(r.final_polarization.fidelity(&pol), 1.0);
    }

    #[test]
    fn device_folds_efficiency_and_asymmetry() {
        let (h, s) = two_level(1.0);
        let device = QndDeviceModel {
            eta: 0.95,
            eps: 0.02,
            delta: 0.01,
            ..QndDeviceModel::ideal()
        };
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 30).unwrap().with_device(device)).unwrap();
        let q = 0.95 * 0.1_f64.cos().powi(2);
        assert!(r.per_interval.iter().all(|&qk| (qk - q).abs() < 1e-12));
        let fid = Polarization::diagonal().fidelity(&r.final_polarization);
        assert!((fid - (30.0 * 0.01 / 2.0_f64).cos().powi(2)).abs() < 1e-10);
    }

    #[test]
    fn full_absorption_truncates() {
        let (h, s) = two_level(1.0);
        let blind = QndDeviceModel {
            eta: 0.0,
            eps: 0.5,
            ..QndDeviceModel::ideal()
        };
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 5).unwrap().with_device(blind)).unwrap();
        assert_eq!(r.absorbed_at, Some(1));
        assert_eq!(r.per_interval, vec![0.0; 5]);
        assert_eq!(r.final_survival(), 0.0);
        assert!(r.gamma_eff.is_none());
    }

    #[test]
    fn rejects_phonon_weight_at_start() {
        let (h, _) = two_level(1.0);
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let s = ExcitationState::new(vec![a], vec![a], Polarization::horizontal()).unwrap();
        assert!(run_ensemble(&s, &h, &ZenoConfig::new(0.1, 3).unwrap()).is_err());
        assert!(ZenoConfig::new(0.0, 3).is_err());
        assert!(ZenoConfig::new(0.1, 0).is_err());
    }

    #[test]
    fn monte_carlo_decoupled_all_survive() {
        let (h, s) = two_level(0.0);
        let r = run_monte_carlo(&s, &h, &ZenoConfig::new(0.1, 50).unwrap(), 500, 1).unwrap();
        assert_eq!(r.trials.unwrap().successes, 500);
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let (h, s) = two_level(1.0);
        let cfg = ZenoConfig::new(0.1, 100).unwrap();
        let a = run_monte_carlo(&s, &h, &cfg, 2000, 77).unwrap().trials.unwrap();
        let b = run_monte_carlo(&s, &h, &cfg, 2000, 77).unwrap().trials.unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| run_monte_carlo(&s, &h, &cfg, 2000, 77).unwrap().trials.unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn analytic_values() {
        let zero = analytic_survival(0.0, 0.1, 10.0).unwrap();
        assert_eq!((zero.exact_product, zero.exponential_approx), (1.0, 1.0));
        let a = analytic_survival(1.0, 0.1, 10.0).unwrap();
        assert_eq!(a.intervals, 100);
        assert!((a.exact_product - 0.99_f64.powi(100)).abs() < 1e-12);
        assert!((a.exact_product - 0.36603).abs() < 1e-5);
        assert!((a.exponential_approx - (-1.0_f64).exp()).abs() < 1e-12);
        let b = analytic_survival(1.0, 0.01, 10.0).unwrap();
        assert!((b.exact_product - 0.9999_f64.powi(1000)).abs() < 1e-12);
        assert!((b.exact_product - 0.90484).abs() < 1e-5);
        assert!(b.exact_product > a.exact_product);
        assert!(matches!(analytic_survival(2.0, 0.5, 1.0), Err(Error::QuadraticLawViolated(_))));
        // non-integer ratio rounds
        assert_eq!(analytic_survival(1.0, 0.1, 10.04).unwrap().intervals, 100);
    }

    #[test]
    fn decay_rate_of_constant_survival() {
        let q: f64 = 0.97;
        let tau = 0.2;
        let cumulative: Vec<f64> = (1..=20).map(|k| q.powi(k)).collect();
        let r = ZenoRecord {
            tau,
            per_interval: vec![q; 20],
            cumulative,
            gamma_eff: None,
            final_polarization: Polarization::horizontal(),
            absorbed_at: None,
            trials: None,
        };
        let rate = effective_decay_rate(&r).unwrap();
        assert!((rate - (-q.ln() / tau)).abs() < 1e-12);
    }

    #[test]
    fn decay_rate_scales_with_tau() {
        let (h, s) = two_level(1.0);
        let r1 = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 100).unwrap()).unwrap();
        let expected = -(0.1_f64.cos().powi(2)).ln() / 0.1;
        assert!((r1.gamma_eff.unwrap() - expected).abs() < 1e-9);
        assert!((r1.gamma_eff.unwrap() - 0.1002).abs() < 1e-4);
        let r2 = run_ensemble(&s, &h, &ZenoConfig::new(0.05, 200).unwrap()).unwrap();
        let ratio = r2.gamma_eff.unwrap() / r1.gamma_eff.unwrap();
        assert!((ratio - 0.5).abs() < 0.01);
    }

    #[test]
    fn decay_rate_needs_two_points() {
        let (h, s) = two_level(1.0);
        let r = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 1).unwrap()).unwrap();
        assert!(matches!(effective_decay_rate(&r), Err(Error::InsufficientData(_))));
    }
}
