//! Short-time quadratic and long-time exponential decay regimes.
//!
//! [`fit_decay`] fits both laws to a survival curve and locates the
//! crossover `T_q` where the quadratic law hands over to the exponential one.
//! [`tq_experiment`] emulates the fiber-length sweep: transmission is
//! recorded for decreasing lengths, an exponential baseline is fitted on the
//! longest ones, and the first shorter length that transmits noticeably more
//! than the baseline predicts marks the onset of the quadratic regime.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{SpectralPropagator, Trajectory};
use crate::model::{ExcitationState, Hamiltonian};
use crate::zeno::linear_fit;

/// Samples above this survival are candidates for the quadratic fit.
pub const QUADRATIC_SURVIVAL_FLOOR: f64 = 0.99;

/// Minimum number of samples in each fit window.
pub const MIN_WINDOW_SAMPLES: usize = 10;

/// Survival probability sampled at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCurve {
    times: Vec<f64>,
    survival: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(times: Vec<f64>, survival: Vec<f64>) -> Result<Self> {
        if times.len() != survival.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: survival.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("times", "times must be strictly increasing"));
        }
        if survival.iter().any(|p| !p.is_finite()) {
            return Err(invalid("survival", "survival values must be finite"));
        }
        Ok(Self { times, survival })
    }

    /// Samples `f` at `n + 1` uniform times on `[0, t_final]`.
    pub fn sample(t_final: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n == 0 || !(t_final > 0.0) {
            return Err(invalid("t_final", "need a positive span and at least one step"));
        }
        let times: Vec<f64> = (0..=n).map(|i| t_final * i as f64 / n as f64).collect();
        let survival = times.iter().map(|&t| f(t)).collect();
        Self::new(times, survival)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

impl From<&Trajectory> for SurvivalCurve {
    fn from(traj: &Trajectory) -> Self {
        Self {
            times: traj.times().to_vec(),
            survival: traj.survival().to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Largest fraction of the samples, from the start, that may enter the quadratic fit.
    pub quad_window: f64,
    /// Fraction of the samples, from the end, used for the exponential fit.
    pub exp_window: f64,
    /// Relative deviation used to decide that the two laws meet.
    pub tolerance: f64,
    /// Discretization recurrence time; fits past it are flagged.
    pub recurrence_time: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            quad_window: 0.1,
            exp_window: 0.5,
            tolerance: 0.01,
            recurrence_time: None,
        }
    }
}

/// Quadratic short-time fit `1 - (gamma t)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub gamma: f64,
    /// Root-mean-square residual over the window.
    pub rms_residual: f64,
    /// Index of the last sample in the window.
    pub last_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `None` when the early samples do not follow a quadratic law.
    pub quadratic: Option<QuadraticFit>,
    /// Exponential rate of `A exp(-rate t)` on the late window.
    pub gamma_exp: f64,
    pub prefactor: f64,
    /// Root-mean-square residual of `ln P_s` over the late window.
    pub exp_rms_residual: f64,
    /// Index of the first sample in the exponential window.
    pub exp_first_index: usize,
    /// Crossover time; `None` when either regime is missing or the two laws never meet.
    pub t_q: Option<f64>,
    /// True when the curve extends past the recurrence time.
    pub past_recurrence: bool,
}

impl DecayFit {
    pub fn gamma_fit(&self) -> Option<f64> {
        self.quadratic.map(|q| q.gamma)
    }

    pub fn exponential(&self, t: f64) -> f64 {
        self.prefactor * (-self.gamma_exp * t).exp()
    }

    /// Relative gap between the two fitted laws at `t`.
    fn law_gap(&self, gamma: f64, t: f64) -> f64 {
        let exp = self.exponential(t);
        ((1.0 - gamma * gamma * t * t) - exp).abs() / exp
    }
}

pub fn fit_decay(curve: &SurvivalCurve, opts: &FitOptions) -> Result<DecayFit> {
    if !(opts.quad_window > 0.0 && opts.exp_window > 0.0) {
        return Err(invalid("window", "fit windows must be positive fractions"));
    }
    if opts.quad_window + opts.exp_window > 1.0 {
        return Err(invalid(
            "window",
            format!(
                "quadratic window {} and exponential window {} overlap",
                opts.quad_window, opts.exp_window
            ),
        ));
    }
    let n = curve.len();
    let times = curve.times();
    let survival = curve.survival();

    let exp_len = (opts.exp_window * n as f64).floor() as usize;
    if exp_len < MIN_WINDOW_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "exponential window holds {exp_len} samples, need {MIN_WINDOW_SAMPLES}"
        )));
    }
    let exp_first_index = n - exp_len;
    let mut log_points = Vec::with_capacity(exp_len);
    for i in exp_first_index..n {
        if survival[i] <= 0.0 {
            return Err(Error::ZeroSurvival(times[i]));
        }
        log_points.push((times[i], survival[i].ln()));
    }
    let (slope, intercept) = linear_fit(&log_points);
    let exp_rms_residual = rms(log_points.iter().map(|&(t, y)| y - (intercept + slope * t)));

    let past_recurrence = match opts.recurrence_time {
        Some(t_rec) if times[n - 1] > t_rec => {
            warn!(
                "survival curve runs to t = {} past the recurrence time {t_rec}",
                times[n - 1]
            );
            true
        }
        _ => false,
    };

    let mut fit = DecayFit {
        quadratic: None,
        gamma_exp: -slope,
        prefactor: intercept.exp(),
        exp_rms_residual,
        exp_first_index,
        t_q: None,
        past_recurrence,
    };

    let cap = ((opts.quad_window * n as f64).floor() as usize).min(exp_first_index);
    let window_end = survival[..cap]
        .iter()
        .position(|&p| p <= QUADRATIC_SURVIVAL_FLOOR)
        .unwrap_or(cap);
    let early: Vec<(f64, f64)> = (0..window_end)
        .filter(|&i| times[i] > 0.0)
        .map(|i| (times[i], 1.0 - survival[i]))
        .collect();
    if early.len() >= MIN_WINDOW_SAMPLES {
        if let Some(q) = quadratic_fit(&early, window_end - 1) {
            fit.quadratic = Some(q);
            fit.t_q = locate_crossover(&fit, q, times, opts.tolerance);
        }
    }
    Ok(fit)
}

/// Fits `1 - P = gamma^2 t^2` through the origin and accepts it only when it
/// beats the linear law `1 - P = r t` that an exponential would give.
fn quadratic_fit(early: &[(f64, f64)], last_index: usize) -> Option<QuadraticFit> {
    let s4: f64 = early.iter().map(|&(t, _)| t.powi(4)).sum();
    let s2y: f64 = early.iter().map(|&(t, y)| t * t * y).sum();
    let s2: f64 = early.iter().map(|&(t, _)| t * t).sum();
    let s1y: f64 = early.iter().map(|&(t, y)| t * y).sum();
    let curvature = s2y / s4;
    let rate = s1y / s2;
    let ssr_quad: f64 = early.iter().map(|&(t, y)| (y - curvature * t * t).powi(2)).sum();
    let ssr_lin: f64 = early.iter().map(|&(t, y)| (y - rate * t).powi(2)).sum();
    if curvature < 0.0 || ssr_quad >= ssr_lin {
        return None;
    }
    Some(QuadraticFit {
        gamma: curvature.sqrt(),
        rms_residual: (ssr_quad / early.len() as f64).sqrt(),
        last_index,
    })
}

/// The sample after the quadratic window where the two fitted laws come
/// closest, provided they meet within `tolerance`.
fn locate_crossover(fit: &DecayFit, quad: QuadraticFit, times: &[f64], tolerance: f64) -> Option<f64> {
    let gamma = quad.gamma;
    let (best_t, best_gap) = times[quad.last_index..]
        .iter()
        .take_while(|&&t| gamma * t < 1.0)
        .map(|&t| (t, fit.law_gap(gamma, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (best_gap <= tolerance).then_some(best_t)
}

fn rms(residuals: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = residuals.fold((0.0, 0usize), |(s, c), r| (s + r * r, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// One fiber length of the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TqRow {
    pub length: f64,
    /// Transit time `length / v_f`.
    pub time: f64,
    pub survival: f64,
    pub departure: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TqExperiment {
    /// Rows in the order measured, longest first.
    pub rows: Vec<TqRow>,
    /// Rate and prefactor of the exponential fitted on the longest lengths.
    pub baseline_rate: f64,
    pub baseline_prefactor: f64,
    /// Whether the longest lengths actually follow one exponential.
    pub baseline_established: bool,
    /// Transit time of the flagged length.
    pub t_q_estimate: Option<f64>,
}

/// Simulates transmission through each fiber length and runs the departure detector.
pub fn tq_experiment(
    h: &Hamiltonian,
    state0: &ExcitationState,
    lengths: &[f64],
    v_f: f64,
    tolerance: f64,
) -> Result<TqExperiment> {
    if !(v_f > 0.0) || !v_f.is_finite() {
        return Err(invalid("v_f", "pulse velocity must be positive"));
    }
    if state0.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: state0.dim(),
        });
    }
    check_lengths(lengths)?;
    let prop = SpectralPropagator::new(h);
    let psi0 = state0.to_vector();
    let n_photon = h.n_photon();
    let transmissions: Vec<f64> = lengths
        .par_iter()
        .map(|&l| {
            let psi = prop.propagate(&psi0, l / v_f);
            psi.rows(0, n_photon).norm_squared().clamp(0.0, 1.0)
        })
        .collect();
    detect_departure(lengths, &transmissions, v_f, tolerance)
}

fn check_lengths(lengths: &[f64]) -> Result<()> {
    if lengths.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} fiber lengths given, need at least 4 to establish the exponential",
            lengths.len()
        )));
    }
    if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(invalid("lengths", "fiber lengths must be positive"));
    }
    if lengths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("lengths", "fiber lengths must be sorted in descending order"));
    }
    Ok(())
}

/// Departure detector shared by simulated and measured sweeps.
///
/// The exponential baseline is fitted to the longest half of the lengths (at
/// least three). If those points do not follow it within `tolerance`, the
/// exponential regime was never established: the longest length is flagged
/// and no estimate is made. Otherwise the remaining lengths are scanned from
/// long to short and the first one whose transmission exceeds the baseline by
/// more than `tolerance` (relative) is flagged.
pub fn detect_departure(
    lengths: &[f64],
    transmissions: &[f64],
    v_f: f64,
    tolerance: f64,
) -> Result<TqExperiment> {
    check_lengths(lengths)?;
    if transmissions.len() != lengths.len() {
        return Err(Error::DimensionMismatch {
            expected: lengths.len(),
            found: transmissions.len(),
        });
    }
    if !(v_f > 0.0) || !v_f.is_finite() {
        return Err(invalid("v_f", "pulse velocity must be positive"));
    }
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance", "departure tolerance must be positive"));
    }
    let n = lengths.len();
    let n_fit = (n / 2).max(3);
    let mut points = Vec::with_capacity(n_fit);
    for i in 0..n_fit {
        if transmissions[i] <= 0.0 {
            return Err(Error::ZeroSurvival(lengths[i] / v_f));
        }
        points.push((lengths[i] / v_f, transmissions[i].ln()));
    }
    let (slope, intercept) = linear_fit(&points);
    let predict = |t: f64| (intercept + slope * t).exp();
    let excess = |i: usize| {
        let t = lengths[i] / v_f;
        (transmissions[i] - predict(t)) / predict(t)
    };
    let baseline_established = (0..n_fit).all(|i| excess(i).abs() <= tolerance);

    let flagged = if baseline_established {
        (n_fit..n).find(|&i| excess(i) > tolerance)
    } else {
        Some(0)
    };
    let rows = (0..n)
        .map(|i| TqRow {
            length: lengths[i],
            time: lengths[i] / v_f,
            survival: transmissions[i],
            departure: flagged == Some(i),
        })
        .collect();
    Ok(TqExperiment {
        rows,
        baseline_rate: -slope,
        baseline_prefactor: intercept.exp(),
        baseline_established,
        t_q_estimate: if baseline_established {
            flagged.map(|i| lengths[i] / v_f)
        } else {
            None
        },
    })
}

/// Largest admissible distance between QND devices, `v_f T_q`; devices must
/// sit strictly closer than this.
pub fn max_device_spacing(t_q: f64, v_f: f64) -> Result<f64> {
    if !(t_q > 0.0) || !t_q.is_finite() {
        return Err(invalid("T_q", "crossover time must be positive"));
    }
    if !(v_f > 0.0) || !v_f.is_finite() {
        return Err(invalid("v_f", "pulse velocity must be positive"));
    }
    Ok(v_f * t_q)
}
