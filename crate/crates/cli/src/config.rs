//! Run configuration: one JSON document with a section per module.
//!
//! Every section has defaults, so `{}` is a valid config describing the
//! resonant two-level model with `g = 1`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use zenoline_core::evolution::Integrator;
use zenoline_core::model::{
    assemble_hamiltonian, build_coupling, initial_pulse, CouplingKind, ExcitationState, Hamiltonian,
    ModeGrid, ModeLabel, Polarization, PulseShape, C64,
};
use zenoline_core::planner::{DeviceCount, LinkParams};
use zenoline_core::qnd::{QndDeviceModel, QuadratureAngle};
use zenoline_core::regime::FitOptions;
use zenoline_core::zeno::ZenoConfig;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub evolution: EvolutionSection,
    pub protocol: ProtocolSection,
    /// QND device; measurements are ideal projections when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceSection>,
    pub analysis: AnalysisSection,
    pub plan: PlanSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub photon: GridConfig,
    pub phonon: GridConfig,
    pub coupling: CouplingConfig,
    pub pulse: PulseConfig,
    pub polarization: PolarizationConfig,
}

/// Uniform grid of `count` modes on `[omega_min, omega_max]`, or explicit frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub count: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Overrides the uniform grid when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            count: 1,
            omega_min: 1.0,
            omega_max: 1.0,
            frequencies: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum CouplingName {
    #[default]
    Flat,
    Ohmic,
    Lorentzian,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub kind: CouplingName,
    pub strength: f64,
    /// Ohmic cutoff frequency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    /// Lorentzian center.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Lorentzian half width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Custom matrix `[photon][phonon]` of `[re, im]` pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<[f64; 2]>>>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            kind: CouplingName::Flat,
            strength: 1.0,
            cutoff: None,
            center: None,
            width: None,
            values: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PulseName {
    #[default]
    SingleMode,
    Gaussian,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub shape: PulseName,
    /// Photon mode index for a single-mode pulse.
    pub mode: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Standard deviation of the spectral intensity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

/// Jones vector as `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizationConfig {
    pub h: [f64; 2],
    pub v: [f64; 2],
}

impl Default for PolarizationConfig {
    fn default() -> Self {
        let d = std::f64::consts::FRAC_1_SQRT_2;
        Self { h: [d, 0.0], v: [d, 0.0] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorName {
    #[default]
    Spectral,
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub t_final: f64,
    pub n_steps: usize,
    pub integrator: IntegratorName,
    /// RK4 steps per output sample.
    pub rk4_substeps: usize,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        Self {
            t_final: 10.0,
            n_steps: 1000,
            integrator: IntegratorName::Spectral,
            rk4_substeps: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Interval between measurements.
    pub tau: f64,
    /// Number of measurements.
    pub n: usize,
    /// Monte-Carlo trials; 0 runs the ensemble only.
    pub trials: u64,
    pub seed: u64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            tau: 0.1,
            n: 100,
            trials: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub theta: f64,
    pub alpha_p: [f64; 2],
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        let d = QndDeviceModel::ideal();
        Self {
            theta: d.theta,
            alpha_p: [d.alpha_p.re, d.alpha_p.im],
            eta: d.eta,
            eps: d.eps,
            delta: d.delta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureName {
    Optimal,
    Tuned,
}

/// `"optimal"`, `"tuned"`, or a fixed angle in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum QuadratureChoice {
    Named(QuadratureName),
    Angle(f64),
}

impl Default for QuadratureChoice {
    fn default() -> Self {
        QuadratureChoice::Named(QuadratureName::Optimal)
    }
}

impl QuadratureChoice {
    pub fn to_core(self) -> QuadratureAngle {
        match self {
            QuadratureChoice::Named(QuadratureName::Optimal) => QuadratureAngle::OPTIMAL,
            QuadratureChoice::Named(QuadratureName::Tuned) => QuadratureAngle::TUNED,
            QuadratureChoice::Angle(phi) => QuadratureAngle::Fixed(phi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub quad_window: f64,
    pub exp_window: f64,
    pub tolerance: f64,
    /// Fiber lengths for the transmission sweep, longest first.
    pub lengths: Vec<f64>,
    pub v_f: f64,
    pub quadrature: QuadratureChoice,
    /// Measured `length,transmission` table to analyze instead of simulating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_csv: Option<PathBuf>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            quad_window: fit.quad_window,
            exp_window: fit.exp_window,
            tolerance: fit.tolerance,
            lengths: Vec::new(),
            v_f: 1.0,
            quadrature: QuadratureChoice::default(),
            input_csv: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum OptimizeTag {
    Optimize,
}

/// A fixed interior device count or `"optimize"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum DeviceCountChoice {
    Fixed(u32),
    Search(OptimizeTag),
}

impl Default for DeviceCountChoice {
    fn default() -> Self {
        DeviceCountChoice::Search(OptimizeTag::Optimize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub length: f64,
    pub v_f: f64,
    /// Quadratic-law rate; computed from the model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_q: Option<f64>,
    pub m: DeviceCountChoice,
    pub m_max: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_exp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_transmission: Option<f64>,
    /// Replay the chosen plan through the full dynamics of the model.
    pub replay: bool,
    pub loop_time: f64,
    pub round_trips: u32,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            length: 1.0,
            v_f: 1.0,
            gamma: None,
            t_q: None,
            m: DeviceCountChoice::default(),
            m_max: zenoline_core::planner::DEFAULT_M_MAX,
            gamma_exp: None,
            segment_transmission: None,
            replay: false,
            loop_time: 0.1,
            round_trips: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

pub fn schema() -> schemars::schema::RootSchema {
    schemars::schema_for!(RunConfig)
}

pub fn schema_json() -> String {
    let mut text = serde_json::to_string_pretty(&schema()).expect("schema serializes");
    text.push('\n');
    text
}

/// Reads the config file, or `{}` when no file is given.
pub fn read_document(path: Option<&Path>) -> Result<Value, CliError> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{} is not valid JSON: {e}", path.display())))
}

/// Applies a `dotted.key=value` override. The value is read as JSON when it
/// parses, otherwise as a string.
pub fn apply_set(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(doc, key, value)
}

pub fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed config key `{key}`")));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let map = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{part}` is inside a non-object value")))?;
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::Config(format!("`{key}` is inside a non-object value")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn parse_document(doc: Value) -> Result<RunConfig, CliError> {
    let config: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    config.validate()?;
    Ok(config)
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {reason}"))
}

fn require_positive(key: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive, got {value}")))
    }
}

/// Photon and phonon grids, Hamiltonian and initial pulse.
pub struct Model {
    pub photon: ModeGrid,
    pub phonon: ModeGrid,
    pub hamiltonian: Hamiltonian,
    pub state: ExcitationState,
}

impl RunConfig {
    /// Checks every value that does not need the model to be built.
    pub fn validate(&self) -> Result<(), CliError> {
        let e = &self.evolution;
        require_positive("evolution.t_final", e.t_final)?;
        if e.n_steps == 0 {
            return Err(bad("evolution.n_steps", "must be at least 1"));
        }
        if e.rk4_substeps == 0 {
            return Err(bad("evolution.rk4_substeps", "must be at least 1"));
        }
        require_positive("protocol.tau", self.protocol.tau)?;
        if self.protocol.n == 0 {
            return Err(bad("protocol.n", "must be at least 1"));
        }
        if let Some(device) = &self.device {
            device
                .to_core()
                .validate()
                .map_err(|err| bad("device", err))?;
        }
        let a = &self.analysis;
        require_positive("analysis.quad_window", a.quad_window)?;
        require_positive("analysis.exp_window", a.exp_window)?;
        if a.quad_window + a.exp_window > 1.0 {
            return Err(bad("analysis.exp_window", "windows overlap"));
        }
        require_positive("analysis.tolerance", a.tolerance)?;
        require_positive("analysis.v_f", a.v_f)?;
        let p = &self.plan;
        require_positive("plan.length", p.length)?;
        require_positive("plan.v_f", p.v_f)?;
        require_positive("plan.loop_time", p.loop_time)?;
        if let Some(t_q) = p.t_q {
            require_positive("plan.t_q", t_q)?;
        }
        if let Some(g) = p.gamma {
            if g < 0.0 || !g.is_finite() {
                return Err(bad("plan.gamma", "must be non-negative"));
            }
        }
        if self.output.formats.is_empty() {
            return Err(bad("output.formats", "at least one format is required"));
        }
        Ok(())
    }

    /// Hash of everything except the output section, which does not affect results.
    pub fn hash(&self) -> String {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = doc.as_object_mut() {
            map.remove("output");
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&doc).expect("config serializes")))
    }

    pub fn seed(&self) -> u64 {
        self.protocol.seed
    }

    pub fn device(&self) -> QndDeviceModel {
        self.device.as_ref().map(DeviceSection::to_core).unwrap_or_else(QndDeviceModel::ideal)
    }

    pub fn polarization(&self) -> Result<Polarization, CliError> {
        let p = &self.model.polarization;
        Polarization::new(C64::new(p.h[0], p.h[1]), C64::new(p.v[0], p.v[1]))
            .map_err(|e| bad("model.polarization", e))
    }

    pub fn integrator(&self) -> Integrator {
        match self.evolution.integrator {
            IntegratorName::Spectral => Integrator::Spectral,
            IntegratorName::Rk4 => Integrator::Rk4 {
                substeps: self.evolution.rk4_substeps,
            },
        }
    }

    pub fn zeno(&self) -> Result<ZenoConfig, CliError> {
        let cfg = ZenoConfig::new(self.protocol.tau, self.protocol.n).map_err(|e| bad("protocol", e))?;
        Ok(match &self.device {
            Some(d) => cfg.with_device(d.to_core()),
            None => cfg,
        })
    }

    pub fn fit_options(&self, recurrence_time: Option<f64>) -> FitOptions {
        FitOptions {
            quad_window: self.analysis.quad_window,
            exp_window: self.analysis.exp_window,
            tolerance: self.analysis.tolerance,
            recurrence_time,
        }
    }

    pub fn link_params(&self, gamma: f64) -> Result<LinkParams, CliError> {
        let p = &self.plan;
        Ok(LinkParams {
            length: p.length,
            v_f: p.v_f,
            gamma,
            t_q: p.t_q,
            device: self.device(),
            gamma_exp: p.gamma_exp,
            segment_transmission: p.segment_transmission,
            polarization: self.polarization()?,
        })
    }

    pub fn device_count(&self) -> DeviceCount {
        match self.plan.m {
            DeviceCountChoice::Fixed(m) => DeviceCount::Fixed(m),
            DeviceCountChoice::Search(_) => DeviceCount::Optimize { m_max: self.plan.m_max },
        }
    }

    pub fn build_model(&self) -> Result<Model, CliError> {
        let m = &self.model;
        let photon = m.photon.to_grid(ModeLabel::Photon).map_err(|e| bad("model.photon", e))?;
        let phonon = m.phonon.to_grid(ModeLabel::Phonon).map_err(|e| bad("model.phonon", e))?;
        let kind = m.coupling.to_kind()?;
        let coupling = build_coupling(&kind, m.coupling.strength, &photon, &phonon)
            .map_err(|e| bad("model.coupling", e))?;
        let hamiltonian =
            assemble_hamiltonian(&photon, &phonon, &coupling).map_err(|e| bad("model.coupling", e))?;
        let shape = m.pulse.to_shape()?;
        let state = initial_pulse(&photon, &phonon, shape, self.polarization()?)
            .map_err(|e| bad("model.pulse", e))?;
        Ok(Model {
            photon,
            phonon,
            hamiltonian,
            state,
        })
    }
}

impl GridConfig {
    fn to_grid(&self, label: ModeLabel) -> zenoline_core::Result<ModeGrid> {
        match &self.frequencies {
            Some(freqs) => ModeGrid::from_frequencies(label, freqs.clone()),
            None => ModeGrid::uniform(self.count, self.omega_min, self.omega_max, label),
        }
    }
}

impl CouplingConfig {
    fn to_kind(&self) -> Result<CouplingKind, CliError> {
        let need = |value: Option<f64>, field: &str| {
            value.ok_or_else(|| bad(&format!("model.coupling.{field}"), "required for this coupling kind"))
        };
        Ok(match self.kind {
            CouplingName::Flat => CouplingKind::Flat,
            CouplingName::Ohmic => CouplingKind::Ohmic {
                cutoff: need(self.cutoff, "cutoff")?,
            },
            CouplingName::Lorentzian => CouplingKind::Lorentzian {
                center: need(self.center, "center")?,
                width: need(self.width, "width")?,
            },
            CouplingName::Custom => {
                let rows = self
                    .values
                    .as_ref()
                    .ok_or_else(|| bad("model.coupling.values", "required for custom coupling"))?;
                CouplingKind::Custom(
                    rows.iter()
                        .map(|row| row.iter().map(|&[re, im]| C64::new(re, im)).collect())
                        .collect(),
                )
            }
        })
    }
}

impl PulseConfig {
    fn to_shape(&self) -> Result<PulseShape, CliError> {
        Ok(match self.shape {
            PulseName::SingleMode => PulseShape::SingleMode { mode: self.mode },
            PulseName::Gaussian => PulseShape::Gaussian {
                center: self
                    .center
                    .ok_or_else(|| bad("model.pulse.center", "required for a gaussian pulse"))?,
                width: self
                    .width
                    .ok_or_else(|| bad("model.pulse.width", "required for a gaussian pulse"))?,
            },
        })
    }
}

impl DeviceSection {
    pub fn to_core(&self) -> QndDeviceModel {
        QndDeviceModel {
            theta: self.theta,
            alpha_p: C64::new(self.alpha_p[0], self.alpha_p[1]),
            eta: self.eta,
            eps: self.eps,
            delta: self.delta,
        }
    }
}
