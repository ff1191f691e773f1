//! Link budgets for fibers instrumented with QND devices, and the fiber-loop memory.
//!
//! `M` interior devices split a link of length `L` into `M + 1` equal
//! segments. The receiver's own detector is not counted. Each segment is
//! short enough for the quadratic law to hold, so the end-to-end survival is
//! `[1 - (gamma tau_seg)^2]^(M+1) eta^M`, optionally times a fixed
//! per-segment transmission for losses the Zeno effect cannot suppress.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ExcitationState, Hamiltonian, Polarization};
use crate::qnd::QndDeviceModel;
use crate::zeno::{run_ensemble, ZenoConfig};

pub const DEFAULT_M_MAX: u32 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub length: f64,
    pub v_f: f64,
    pub gamma: f64,
    /// Crossover time; devices must sit closer than `v_f t_q`.
    pub t_q: Option<f64>,
    pub device: QndDeviceModel,
    /// Exponential decay rate for the device-free baseline.
    pub gamma_exp: Option<f64>,
    /// Transmission of each segment from losses outside the model (scattering).
    pub segment_transmission: Option<f64>,
    pub polarization: Polarization,
}

impl LinkParams {
    pub fn new(length: f64, v_f: f64, gamma: f64, device: QndDeviceModel) -> Self {
        Self {
            length,
            v_f,
            gamma,
            t_q: None,
            device,
            gamma_exp: None,
            segment_transmission: None,
            polarization: Polarization::diagonal(),
        }
    }

    pub fn with_t_q(mut self, t_q: f64) -> Self {
        self.t_q = Some(t_q);
        self
    }

    pub fn validate(&self) -> Result<()> {
        positive("length", self.length)?;
        positive("v_f", self.v_f)?;
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma", "gamma must be non-negative"));
        }
        if let Some(t_q) = self.t_q {
            positive("t_q", t_q)?;
        }
        if let Some(rate) = self.gamma_exp {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(invalid("gamma_exp", "decay rate must be non-negative"));
            }
        }
        if let Some(t) = self.segment_transmission {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("segment_transmission", "transmission must lie in [0, 1]"));
            }
        }
        self.device.validate()
    }

    pub fn max_spacing(&self) -> Option<f64> {
        self.t_q.map(|t_q| self.v_f * t_q)
    }

    fn segment_loss(&self) -> f64 {
        self.segment_transmission.unwrap_or(1.0)
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive, got {value}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceCount {
    Fixed(u32),
    /// Scan `M` over `0..=m_max` and keep the best.
    Optimize { m_max: u32 },
}

impl DeviceCount {
    pub fn optimize() -> Self {
        Self::Optimize { m_max: DEFAULT_M_MAX }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPlan {
    pub length: f64,
    pub v_f: f64,
    pub m: u32,
    pub spacing: f64,
    pub tau_seg: f64,
    pub survival: f64,
    pub fidelity: f64,
    pub baseline: f64,
}

/// Checks `m` against the spacing rule and the quadratic law, then evaluates it.
fn evaluate(params: &LinkParams, m: u32, baseline: f64) -> Result<LinkPlan> {
    let segments = m as f64 + 1.0;
    let spacing = params.length / segments;
    let tau_seg = spacing / params.v_f;
    if let Some(limit) = params.max_spacing() {
        if spacing >= limit {
            return Err(Error::SpacingTooLarge { spacing, limit });
        }
    }
    let x = params.gamma * tau_seg;
    if x >= 1.0 {
        return Err(Error::QuadraticLawViolated(x));
    }
    let survival = ((1.0 - x * x) * params.segment_loss()).powf(segments)
        * params.device.eta.powf(m as f64);
    let rotated = params.polarization.with_relative_phase(m as f64 * params.device.delta);
    Ok(LinkPlan {
        length: params.length,
        v_f: params.v_f,
        m,
        spacing,
        tau_seg,
        survival: survival.clamp(0.0, 1.0),
        fidelity: params.polarization.fidelity(&rotated),
        baseline,
    })
}

/// Survival without any device.
pub fn baseline_survival(params: &LinkParams) -> f64 {
    match params.gamma_exp {
        Some(rate) => (-rate * params.length / params.v_f).exp(),
        None => {
            let x = params.gamma * params.length / params.v_f;
            ((1.0 - x * x) * params.segment_loss()).max(0.0)
        }
    }
}

pub fn plan_link(params: &LinkParams, count: DeviceCount) -> Result<LinkPlan> {
    params.validate()?;
    match count {
        DeviceCount::Fixed(m) => evaluate(params, m, baseline_survival(params)),
        DeviceCount::Optimize { m_max } => scan_link(params, m_max)?
            .into_iter()
            // strict comparison keeps the smallest M on ties
            .reduce(|best, p| if p.survival > best.survival { p } else { best })
            .ok_or(Error::NoFeasiblePlan(m_max as usize)),
    }
}

/// Every admissible plan with `M` in `0..=m_max`, in increasing `M`.
pub fn scan_link(params: &LinkParams, m_max: u32) -> Result<Vec<LinkPlan>> {
    params.validate()?;
    let baseline = baseline_survival(params);
    Ok((0..=m_max).filter_map(|m| evaluate(params, m, baseline).ok()).collect())
}

/// Replays a plan through the full dynamics of `h`: `M + 1` segments with an
/// ideal projection after each, then device and segment losses.
pub fn replay_plan(plan: &LinkPlan, params: &LinkParams, h: &Hamiltonian, state0: &ExcitationState) -> Result<f64> {
    let cfg = ZenoConfig::new(plan.tau_seg, plan.m as usize + 1)?;
    let record = run_ensemble(state0, h, &cfg)?;
    let segments = plan.m as f64 + 1.0;
    Ok(record.final_survival()
        * params.device.eta.powf(plan.m as f64)
        * params.segment_loss().powf(segments))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryRow {
    pub k: u32,
    pub time: f64,
    pub survival: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub loop_time: f64,
    pub round_trips: u32,
    pub gamma: f64,
    pub device: QndDeviceModel,
    /// One row per round trip, `k = 1..=round_trips`.
    pub table: Vec<MemoryRow>,
}

impl MemoryPlan {
    /// Survival after `k` round trips; `k = 0` is the stored photon itself.
    pub fn survival(&self, k: u32) -> Option<f64> {
        match k {
            0 => Some(1.0),
            _ => self.table.get(k as usize - 1).map(|r| r.survival),
        }
    }
}

/// One device on a fiber loop, measuring once per round trip.
pub fn memory_loop(
    loop_time: f64,
    round_trips: u32,
    gamma: f64,
    device: &QndDeviceModel,
    polarization: Polarization,
) -> Result<MemoryPlan> {
    positive("loop_time", loop_time)?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", "gamma must be non-negative"));
    }
    device.validate()?;
    let x = gamma * loop_time;
    if x >= 1.0 {
        return Err(Error::QuadraticLawViolated(x));
    }
    let per_trip = (1.0 - x * x) * device.eta;
    let table = (1..=round_trips)
        .map(|k| {
            let rotated = polarization.with_relative_phase(k as f64 * device.delta);
            MemoryRow {
                k,
                time: k as f64 * loop_time,
                survival: per_trip.powf(k as f64),
                fidelity: polarization.fidelity(&rotated),
            }
        })
        .collect();
    Ok(MemoryPlan {
        loop_time,
        round_trips,
        gamma,
        device: *device,
        table,
    })
}
