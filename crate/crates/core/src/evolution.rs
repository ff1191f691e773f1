//! Schrödinger propagation in the single-excitation sector.
//!
//! The default propagator diagonalizes `H` once and applies
//! `V exp(-i E t) V^dagger`, which is exact up to rounding. A fixed-step RK4
//! integrator is kept as an independent route for step-refinement checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::model::{ExcitationState, Hamiltonian, C64};

/// Phonon weight below which a state counts as a pure photon state.
pub const PHOTON_STATE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Integrator {
    /// Exact propagation through the eigendecomposition of `H`.
    #[default]
    Spectral,
    /// Classical fourth-order Runge-Kutta with `substeps` steps per sample interval.
    Rk4 { substeps: usize },
}

/// Cached eigendecomposition of a Hamiltonian.
#[derive(Clone, Debug)]
pub struct SpectralPropagator {
    energies: DVector<f64>,
    vectors: DMatrix<C64>,
    n_photon: usize,
}

impl SpectralPropagator {
    pub fn new(h: &Hamiltonian) -> Self {
        let eigen = SymmetricEigen::new(h.matrix().clone());
        Self {
            energies: eigen.eigenvalues,
            vectors: eigen.eigenvectors,
            n_photon: h.n_photon(),
        }
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn n_photon(&self) -> usize {
        self.n_photon
    }

    /// `exp(-i H t) psi`.
    pub fn propagate(&self, psi: &DVector<C64>, t: f64) -> DVector<C64> {
        let mut coeffs = self.vectors.ad_mul(psi);
        for (c, &e) in coeffs.iter_mut().zip(self.energies.iter()) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        &self.vectors * coeffs
    }

    /// The full propagator matrix `exp(-i H t)`.
    pub fn unitary(&self, t: f64) -> DMatrix<C64> {
        let mut scaled = self.vectors.clone();
        for (mut col, &e) in scaled.column_iter_mut().zip(self.energies.iter()) {
            col *= C64::from_polar(1.0, -e * t);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Sampled evolution: times, states and the photon survival probability at
/// each time. Times start at zero.
#[derive(Clone, Debug)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<ExcitationState>,
    survival: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[ExcitationState] {
        &self.states
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

fn check_dims(state: &ExcitationState, h: &Hamiltonian) -> Result<()> {
    if state.photon_amplitudes().len() != h.n_photon() {
        return Err(Error::DimensionMismatch {
            expected: h.n_photon(),
            found: state.photon_amplitudes().len(),
        });
    }
    if state.phonon_amplitudes().len() != h.n_phonon() {
        return Err(Error::DimensionMismatch {
            expected: h.n_phonon(),
            found: state.phonon_amplitudes().len(),
        });
    }
    Ok(())
}

/// Evolves `state` to `t_final`, sampling at `n_steps + 1` uniform times
/// including `t = 0`, with the spectral propagator.
pub fn evolve(
    state: &ExcitationState,
    h: &Hamiltonian,
    t_final: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    evolve_with(state, h, t_final, n_steps, Integrator::Spectral)
}

pub fn evolve_with(
    state: &ExcitationState,
    h: &Hamiltonian,
    t_final: f64,
    n_steps: usize,
    integrator: Integrator,
) -> Result<Trajectory> {
    check_dims(state, h)?;
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(invalid("t_final", "final time must be positive and finite"));
    }
    if n_steps == 0 {
        return Err(invalid("n_steps", "at least one step is required"));
    }
    let dt = t_final / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
    let psi0 = state.to_vector();
    let polarization = state.polarization();

    let vectors: Vec<DVector<C64>> = match integrator {
        Integrator::Spectral => {
            let prop = SpectralPropagator::new(h);
            times.iter().map(|&t| prop.propagate(&psi0, t)).collect()
        }
        Integrator::Rk4 { substeps } => {
            if substeps == 0 {
                return Err(invalid("substeps", "at least one RK4 substep is required"));
            }
            let h_step = dt / substeps as f64;
            let mut out = Vec::with_capacity(times.len());
            let mut psi = psi0.clone();
            out.push(psi.clone());
            for _ in 0..n_steps {
                for _ in 0..substeps {
                    psi = rk4_step(h.matrix(), &psi, h_step);
                }
                out.push(psi.clone());
            }
            out
        }
    };

    let mut states = Vec::with_capacity(vectors.len());
    let mut survival = Vec::with_capacity(vectors.len());
    for (psi, &t) in vectors.iter().zip(times.iter()) {
        if psi.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite { time: t });
        }
        let s = ExcitationState::from_vector(psi, h.n_photon(), polarization);
        survival.push(survival_probability(&s));
        states.push(s);
    }
    Ok(Trajectory {
        times,
        states,
        survival,
    })
}

fn rk4_step(h: &DMatrix<C64>, psi: &DVector<C64>, dt: f64) -> DVector<C64> {
    let minus_i = C64::new(0.0, -1.0);
    let f = |v: &DVector<C64>| (h * v) * minus_i;
    let half = C64::new(dt / 2.0, 0.0);
    let full = C64::new(dt, 0.0);
    let k1 = f(psi);
    let k2 = f(&(psi + &k1 * half));
    let k3 = f(&(psi + &k2 * half));
    let k4 = f(&(psi + &k3 * full));
    psi + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
}

/// Weight remaining in the photon branch.
pub fn survival_probability(state: &ExcitationState) -> f64 {
    state.survival_probability()
}

/// Short-time decay coefficient: `P_s(t) = 1 - (gamma t)^2 + O(t^3)` for a
/// state that starts entirely in the photon branch.
///
/// `gamma^2 = || B f ||^2` where `B` is the phonon-photon block of `H`.
pub fn compute_gamma(h: &Hamiltonian, state: &ExcitationState) -> Result<f64> {
    check_dims(state, h)?;
    let phonon_weight = state.phonon_weight();
    if phonon_weight > PHOTON_STATE_TOLERANCE {
        return Err(Error::NotPhotonState(phonon_weight));
    }
    let f = DVector::from_column_slice(state.photon_amplitudes());
    let feed = h.phonon_photon_block() * f;
    Ok(feed.norm_squared().sqrt())
}
