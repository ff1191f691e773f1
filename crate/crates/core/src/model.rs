//! Mode grids, coupling spectra, the single-excitation Hamiltonian and
//! initial pulse states.
//!
//! The basis is the single-excitation sector: one photon in mode `k` with the
//! bath in its ground state, or no photon and one phonon in mode `j`. Photon
//! modes come first, phonon modes after. Units have `hbar = 1`, so
//! frequencies, couplings and rates share one dimensionless scale.
//!
//! The polarization qubit never mixes with the mode amplitudes; it is stored
//! once per state and carried along unchanged by the dynamics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Normalization tolerance for constructed states.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Polarization inputs whose squared norm is within this of 1 are
/// renormalized; anything further off is rejected.
pub const POLARIZATION_RENORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    Photon,
    Phonon,
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeLabel::Photon => f.write_str("photon"),
            ModeLabel::Phonon => f.write_str("phonon"),
        }
    }
}

/// A discretized set of mode frequencies, strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeGrid {
    label: ModeLabel,
    frequencies: Vec<f64>,
}

impl ModeGrid {
    /// Uniform grid of `count` frequencies spanning `[omega_min, omega_max]`
    /// inclusive.
    pub fn uniform(count: usize, omega_min: f64, omega_max: f64, label: ModeLabel) -> Result<Self> {
        if count == 0 {
            return Err(invalid("count", "mode count must be positive"));
        }
        if !omega_min.is_finite() || !omega_max.is_finite() {
            return Err(invalid("omega", "grid bounds must be finite"));
        }
        if omega_min > omega_max {
            return Err(invalid(
                "omega_min",
                format!("omega_min {omega_min} exceeds omega_max {omega_max}"),
            ));
        }
        if count == 1 {
            if omega_min != omega_max {
                return Err(invalid(
                    "count",
                    "a single-mode grid needs omega_min == omega_max",
                ));
            }
            return Ok(Self {
                label,
                frequencies: vec![omega_min],
            });
        }
        if omega_min == omega_max {
            return Err(invalid(
                "omega_max",
                "a multi-mode grid needs omega_min < omega_max",
            ));
        }
        let step = (omega_max - omega_min) / (count - 1) as f64;
        let mut frequencies: Vec<f64> = (0..count).map(|i| omega_min + step * i as f64).collect();
        // pin the endpoint exactly
        frequencies[count - 1] = omega_max;
        Ok(Self { label, frequencies })
    }

    /// Grid from explicit frequencies.
    pub fn from_frequencies(label: ModeLabel, frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(invalid("frequencies", "at least one mode is required"));
        }
        if frequencies.iter().any(|w| !w.is_finite()) {
            return Err(invalid("frequencies", "frequencies must be finite"));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("frequencies", "frequencies must be strictly increasing"));
        }
        Ok(Self { label, frequencies })
    }

    pub fn label(&self) -> ModeLabel {
        self.label
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn count(&self) -> usize {
        self.frequencies.len()
    }

    /// Spacing between neighbouring modes, for uniform grids with more than one mode.
    pub fn spacing(&self) -> Option<f64> {
        match self.frequencies.as_slice() {
            [first, .., last] => Some((last - first) / (self.count() - 1) as f64),
            _ => None,
        }
    }

    /// Modes per unit frequency, `(count - 1) / (omega_max - omega_min)`.
    pub fn density(&self) -> Option<f64> {
        self.spacing().map(|s| 1.0 / s)
    }

    /// Time after which a finite bath returns amplitude to the photon, `2 pi / spacing`.
    pub fn recurrence_time(&self) -> Option<f64> {
        self.spacing().map(|s| 2.0 * std::f64::consts::PI / s)
    }
}

/// Coupling-spectrum family tag, as named in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingTag {
    Flat,
    Ohmic,
    Lorentzian,
    Custom,
}

impl FromStr for CouplingTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(CouplingTag::Flat),
            "ohmic" => Ok(CouplingTag::Ohmic),
            "lorentzian" => Ok(CouplingTag::Lorentzian),
            "custom" => Ok(CouplingTag::Custom),
            other => Err(Error::UnknownCouplingKind(other.to_string())),
        }
    }
}

/// Shape of the photon-phonon coupling `g_ik` as a function of the phonon
/// frequency.
#[derive(Clone, Debug, PartialEq)]
pub enum CouplingKind {
    /// `g` for every pair of modes.
    Flat,
    /// `g * sqrt(w / cutoff) * exp(-w / (2 cutoff))`, giving a spectral
    /// density proportional to `w exp(-w / cutoff)`.
    Ohmic { cutoff: f64 },
    /// `g * width^2 / ((w - center)^2 + width^2)`.
    Lorentzian { center: f64, width: f64 },
    /// Explicit matrix indexed `[photon][phonon]`, scaled by `g`.
    Custom(Vec<Vec<C64>>),
}

impl CouplingKind {
    pub fn tag(&self) -> CouplingTag {
        match self {
            CouplingKind::Flat => CouplingTag::Flat,
            CouplingKind::Ohmic { .. } => CouplingTag::Ohmic,
            CouplingKind::Lorentzian { .. } => CouplingTag::Lorentzian,
            CouplingKind::Custom(_) => CouplingTag::Custom,
        }
    }

    fn envelope(&self, omega: f64) -> f64 {
        match *self {
            CouplingKind::Flat | CouplingKind::Custom(_) => 1.0,
            CouplingKind::Ohmic { cutoff } => {
                let w = omega.max(0.0);
                (w / cutoff).sqrt() * (-w / (2.0 * cutoff)).exp()
            }
            CouplingKind::Lorentzian { center, width } => {
                let w2 = width * width;
                w2 / ((omega - center).powi(2) + w2)
            }
        }
    }
}

/// Photon-phonon couplings, a `n_photon x n_phonon` complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSpectrum {
    tag: CouplingTag,
    values: DMatrix<C64>,
}

impl CouplingSpectrum {
    pub fn tag(&self) -> CouplingTag {
        self.tag
    }

    /// Coupling matrix indexed `(photon, phonon)`.
    pub fn values(&self) -> &DMatrix<C64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

pub fn build_coupling(
    kind: &CouplingKind,
    strength: f64,
    photon: &ModeGrid,
    phonon: &ModeGrid,
) -> Result<CouplingSpectrum> {
    if !strength.is_finite() {
        return Err(invalid("g", "coupling strength must be finite"));
    }
    let (n_photon, n_phonon) = (photon.count(), phonon.count());
    let values = match kind {
        CouplingKind::Ohmic { cutoff } if !(*cutoff > 0.0 && cutoff.is_finite()) => {
            return Err(invalid("cutoff", "ohmic cutoff must be positive and finite"));
        }
        CouplingKind::Lorentzian { center, width }
            if !(center.is_finite() && *width > 0.0 && width.is_finite()) =>
        {
            return Err(invalid("width", "lorentzian needs a finite center and positive width"));
        }
        CouplingKind::Custom(rows) => {
            if rows.len() != n_photon {
                return Err(Error::DimensionMismatch {
                    expected: n_photon,
                    found: rows.len(),
                });
            }
            if let Some(row) = rows.iter().find(|r| r.len() != n_phonon) {
                return Err(Error::DimensionMismatch {
                    expected: n_phonon,
                    found: row.len(),
                });
            }
            DMatrix::from_fn(n_photon, n_phonon, |k, j| rows[k][j] * strength)
        }
        _ => {
            let column: Vec<f64> = phonon
                .frequencies()
                .iter()
                .map(|&w| strength * kind.envelope(w))
                .collect();
            DMatrix::from_fn(n_photon, n_phonon, |_, j| C64::new(column[j], 0.0))
        }
    };
    if values.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
        return Err(invalid("g", "coupling values must be finite"));
    }
    Ok(CouplingSpectrum {
        tag: kind.tag(),
        values,
    })
}

/// Hermitian matrix of the single-excitation sector, photon modes first.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    n_photon: usize,
    n_phonon: usize,
    matrix: DMatrix<C64>,
}

impl Hamiltonian {
    pub fn n_photon(&self) -> usize {
        self.n_photon
    }

    pub fn n_phonon(&self) -> usize {
        self.n_phonon
    }

    pub fn dim(&self) -> usize {
        self.n_photon + self.n_phonon
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Largest elementwise `|H - H^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for r in 0..n {
            for c in 0..n {
                worst = worst.max((self.matrix[(r, c)] - self.matrix[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Block of `H` mapping photon amplitudes onto phonon amplitudes.
    pub fn phonon_photon_block(&self) -> DMatrix<C64> {
        self.matrix
            .view((self.n_photon, 0), (self.n_phonon, self.n_photon))
            .into_owned()
    }

    /// Largest entry magnitude; sets the RK4 step scale.
    pub fn max_abs_entry(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn assemble_hamiltonian(
    photon: &ModeGrid,
    phonon: &ModeGrid,
    coupling: &CouplingSpectrum,
) -> Result<Hamiltonian> {
    let (n_photon, n_phonon) = (photon.count(), phonon.count());
    let (rows, cols) = coupling.shape();
    if rows != n_photon {
        return Err(Error::DimensionMismatch {
            expected: n_photon,
            found: rows,
        });
    }
    if cols != n_phonon {
        return Err(Error::DimensionMismatch {
            expected: n_phonon,
            found: cols,
        });
    }
    let n = n_photon + n_phonon;
    let mut matrix = DMatrix::<C64>::zeros(n, n);
    for (k, &w) in photon.frequencies().iter().enumerate() {
        matrix[(k, k)] = C64::new(w, 0.0);
    }
    for (j, &w) in phonon.frequencies().iter().enumerate() {
        matrix[(n_photon + j, n_photon + j)] = C64::new(w, 0.0);
    }
    // <1_j| H_int |1_k> = g_kj ; the conjugate sits in the upper block
    for k in 0..n_photon {
        for j in 0..n_phonon {
            let g = coupling.values()[(k, j)];
            matrix[(n_photon + j, k)] = g;
            matrix[(k, n_photon + j)] = g.conj();
        }
    }
    Ok(Hamiltonian {
        n_photon,
        n_phonon,
        matrix,
    })
}

/// Polarization qubit `h |H> + v |V>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polarization {
    pub h: C64,
    pub v: C64,
}

impl Polarization {
    /// Renormalizes when `|h|^2 + |v|^2` is within 1e-6 of one, rejects otherwise.
    pub fn new(h: C64, v: C64) -> Result<Self> {
        let norm_sqr = h.norm_sqr() + v.norm_sqr();
        if !norm_sqr.is_finite() || norm_sqr == 0.0 {
            return Err(invalid("polarization", "zero-norm polarization"));
        }
        if (norm_sqr - 1.0).abs() > POLARIZATION_RENORM_TOLERANCE {
            return Err(invalid(
                "polarization",
                format!("|alpha|^2 + |beta|^2 = {norm_sqr}, expected 1"),
            ));
        }
        let scale = norm_sqr.sqrt().recip();
        Ok(Self {
            h: h * scale,
            v: v * scale,
        })
    }

    pub fn horizontal() -> Self {
        Self {
            h: C64::new(1.0, 0.0),
            v: C64::new(0.0, 0.0),
        }
    }

    pub fn vertical() -> Self {
        Self {
            h: C64::new(0.0, 0.0),
            v: C64::new(1.0, 0.0),
        }
    }

    /// `(|H> + |V>) / sqrt 2`.
    pub fn diagonal() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            h: C64::new(a, 0.0),
            v: C64::new(a, 0.0),
        }
    }

    /// `|<self|other>|^2`, clamped to `[0, 1]` against rounding.
    pub fn fidelity(&self, other: &Polarization) -> f64 {
        (self.h.conj() * other.h + self.v.conj() * other.v)
            .norm_sqr()
            .min(1.0)
    }

    /// Relative phase `e^{i delta}` imprinted on the V component.
    pub fn with_relative_phase(&self, delta: f64) -> Self {
        Self {
            h: self.h,
            v: self.v * C64::from_polar(1.0, delta),
        }
    }
}

/// A single-excitation state: photon amplitudes `f(k)`, phonon amplitudes
/// `c(j)` and the shared polarization factor.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationState {
    photon: Vec<C64>,
    phonon: Vec<C64>,
    polarization: Polarization,
}

impl ExcitationState {
    /// Checks that the total norm is one within [`NORM_TOLERANCE`].
    pub fn new(photon: Vec<C64>, phonon: Vec<C64>, polarization: Polarization) -> Result<Self> {
        let state = Self {
            photon,
            phonon,
            polarization,
        };
        let norm = state.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(invalid("state", format!("total norm {norm} is not 1")));
        }
        Ok(state)
    }

    /// Splits a full basis vector back into photon and phonon parts.
    pub(crate) fn from_vector(
        amplitudes: &DVector<C64>,
        n_photon: usize,
        polarization: Polarization,
    ) -> Self {
        let photon = amplitudes.rows(0, n_photon).iter().copied().collect();
        let phonon = amplitudes
            .rows(n_photon, amplitudes.len() - n_photon)
            .iter()
            .copied()
            .collect();
        Self {
            photon,
            phonon,
            polarization,
        }
    }

    pub fn photon_amplitudes(&self) -> &[C64] {
        &self.photon
    }

    pub fn phonon_amplitudes(&self) -> &[C64] {
        &self.phonon
    }

    pub fn polarization(&self) -> Polarization {
        self.polarization
    }

    pub fn dim(&self) -> usize {
        self.photon.len() + self.phonon.len()
    }

    pub fn to_vector(&self) -> DVector<C64> {
        DVector::from_iterator(
            self.dim(),
            self.photon.iter().chain(self.phonon.iter()).copied(),
        )
    }

    pub fn norm_sqr(&self) -> f64 {
        self.photon_weight() + self.phonon_weight()
    }

    pub fn photon_weight(&self) -> f64 {
        self.photon.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn phonon_weight(&self) -> f64 {
        self.phonon.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability that the photon has not been absorbed, `sum_k |f(k)|^2`.
    pub fn survival_probability(&self) -> f64 {
        self.photon_weight().clamp(0.0, 1.0)
    }

    /// Projection onto the photon branch: phonon amplitudes set to zero and
    /// photon amplitudes renormalized. `None` if no photon weight remains.
    pub fn project_onto_photon(&self) -> Option<Self> {
        let weight = self.photon_weight();
        if weight <= 0.0 {
            return None;
        }
        let scale = weight.sqrt().recip();
        Some(Self {
            photon: self.photon.iter().map(|a| a * scale).collect(),
            phonon: vec![C64::new(0.0, 0.0); self.phonon.len()],
            polarization: self.polarization,
        })
    }

    /// Same mode amplitudes with a different polarization.
    pub fn with_polarization(&self, polarization: Polarization) -> Self {
        Self {
            polarization,
            ..self.clone()
        }
    }

    /// Rescales the photon branch by `photon_scale` and renormalizes the
    /// whole vector. `None` if nothing is left.
    pub(crate) fn reweighted(&self, photon_scale: f64) -> Option<Self> {
        let photon: Vec<C64> = self.photon.iter().map(|a| a * photon_scale).collect();
        let norm = photon.iter().map(|a| a.norm_sqr()).sum::<f64>() + self.phonon_weight();
        if norm <= 0.0 {
            return None;
        }
        let scale = norm.sqrt().recip();
        Some(Self {
            photon: photon.into_iter().map(|a| a * scale).collect(),
            phonon: self.phonon.iter().map(|a| a * scale).collect(),
            polarization: self.polarization,
        })
    }
}

/// Spectral envelope of the initial photon pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PulseShape {
    /// All amplitude in one photon mode.
    SingleMode { mode: usize },
    /// Amplitude envelope `exp(-(w - center)^2 / (4 width^2))`, so `|f|^2`
    /// has standard deviation `width`. An infinite width gives a flat pulse.
    Gaussian { center: f64, width: f64 },
}

/// Pulse entirely in the photon branch, bath in its ground state.
pub fn initial_pulse(
    photon: &ModeGrid,
    phonon: &ModeGrid,
    shape: PulseShape,
    polarization: Polarization,
) -> Result<ExcitationState> {
    let n = photon.count();
    let envelope: Vec<f64> = match shape {
        PulseShape::SingleMode { mode } => {
            if mode >= n {
                return Err(invalid(
                    "mode",
                    format!("mode {mode} outside a grid of {n} photon modes"),
                ));
            }
            (0..n).map(|k| if k == mode { 1.0 } else { 0.0 }).collect()
        }
        PulseShape::Gaussian { center, width } => {
            if !center.is_finite() || !(width > 0.0) {
                return Err(invalid("width", "gaussian needs a finite center and positive width"));
            }
            photon
                .frequencies()
                .iter()
                .map(|&w| {
                    if width.is_infinite() {
                        1.0
                    } else {
                        (-(w - center).powi(2) / (4.0 * width * width)).exp()
                    }
                })
                .collect()
        }
    };
    let norm = envelope.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(invalid("shape", "pulse envelope has zero norm on this grid"));
    }
    let photon_amplitudes = envelope.iter().map(|a| C64::new(a / norm, 0.0)).collect();
    ExcitationState::new(
        photon_amplitudes,
        vec![C64::new(0.0, 0.0); phonon.count()],
        polarization,
    )
}
