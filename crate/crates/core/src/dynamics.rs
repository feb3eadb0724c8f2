//! Exact unitary evolution of the pair ladder through piecewise-constant
//! pulse sequences.
//!
//! Every segment is propagated with `exp(−i·2π·H·t)` built from the
//! eigendecomposition of the 4×4 Hamiltonian, so there is no time-stepping
//! error. `H` is in MHz and `t` in µs.

use std::f64::consts::TAU;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::pair::{HamiltonianMatrix, PairBasis, PhysicalParams};
use crate::{Error, Result};

/// Allowed deviation of `‖ψ‖` from one for states handed to the propagator.
pub const NORM_CONTRACT: f64 = 1e-6;

/// Default field used to prepare `|dd⟩` away from resonance, mV/cm.
pub const DEFAULT_PREP_FIELD: f64 = 64.0;

/// Default switching time of a field ramp, µs.
pub const DEFAULT_RISETIME: f64 = 0.010;

/// Normalized amplitudes over [`PairBasis`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(Vector4<Complex64>);

impl StateVector {
    pub fn basis(label: PairBasis) -> Self {
        let mut v = Vector4::zeros();
        v[label.index()] = Complex64::new(1.0, 0.0);
        Self(v)
    }

    pub fn ground() -> Self {
        Self::basis(PairBasis::Gg)
    }

    /// Builds a state from raw amplitudes, rejecting anything that is not normalized.
    pub fn from_amplitudes(amplitudes: [Complex64; 4]) -> Result<Self> {
        let state = Self(Vector4::from(amplitudes));
        state.check_normalized()?;
        Ok(state)
    }

    pub fn amplitude(&self, label: PairBasis) -> Complex64 {
        self.0[label.index()]
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        [self.0[0], self.0[1], self.0[2], self.0[3]]
    }

    pub fn population(&self, label: PairBasis) -> f64 {
        self.0[label.index()].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest amplitude difference to `other`.
    pub fn distance(&self, other: &StateVector) -> f64 {
        (self.0 - other.0).camax()
    }

    fn check_normalized(&self) -> Result<()> {
        let norm = self.norm();
        if !((norm - 1.0).abs() <= NORM_CONTRACT) {
            return Err(Error::Contract(format!(
                "state must be normalized, got norm {norm}"
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant control applied for `duration` µs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSegment {
    /// Single-atom Rabi frequency, MHz.
    pub omega: f64,
    /// Two-atom laser detuning, MHz.
    pub delta: f64,
    /// Electric field, mV/cm.
    pub field: f64,
    /// µs.
    pub duration: f64,
}

impl PulseSegment {
    pub fn new(omega: f64, delta: f64, field: f64, duration: f64) -> Result<Self> {
        let seg = Self {
            omega,
            delta,
            field,
            duration,
        };
        seg.validate()?;
        Ok(seg)
    }

    /// Laser off, field held at `field`.
    pub fn free(field: f64, duration: f64) -> Result<Self> {
        Self::new(0.0, 0.0, field, duration)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Domain(format!(
                "segment duration must be finite and non-negative, got {} µs",
                self.duration
            )));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::Domain(format!(
                "segment Rabi frequency must be finite and non-negative, got {} MHz",
                self.omega
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::Domain(format!(
                "segment detuning must be finite, got {} MHz",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Ordered, non-empty list of segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    segments: Vec<PulseSegment>,
}

impl Sequence {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Domain("a sequence needs at least one segment".into()));
        }
        for seg in &segments {
            seg.validate()?;
        }
        let total: f64 = segments.iter().map(|s| s.duration).sum();
        if !total.is_finite() {
            return Err(Error::Domain("sequence duration is not finite".into()));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Linear field ramp from `from` to `to` over `risetime`, discretized into
    /// `steps` constant sub-segments evaluated at their midpoints.
    pub fn linear_ramp(
        omega: f64,
        delta: f64,
        from: f64,
        to: f64,
        risetime: f64,
        steps: usize,
    ) -> Result<Vec<PulseSegment>> {
        if steps == 0 {
            return Err(Error::Domain("a ramp needs at least one step".into()));
        }
        let dt = risetime / steps as f64;
        (0..steps)
            .map(|k| {
                let frac = (k as f64 + 0.5) / steps as f64;
                PulseSegment::new(omega, delta, from + (to - from) * frac, dt)
            })
            .collect()
    }

    /// Excitation π pulse, free evolution for `interaction_time` at the
    /// resonance field, then an identical de-excitation π pulse.
    ///
    /// With `risetime` set, the field switches between `f_prep` and
    /// `f_interaction` through linear ramps of that length.
    pub fn pump_probe(
        omega: f64,
        f_prep: f64,
        f_interaction: f64,
        interaction_time: f64,
        risetime: Option<f64>,
    ) -> Result<Self> {
        let pi = PulseSegment::new(omega, 0.0, f_prep, pi_pulse_duration(omega)?)?;
        let mut segments = vec![pi];
        match risetime {
            Some(rise) if rise > 0.0 => {
                const RAMP_STEPS: usize = 16;
                segments.extend(Self::linear_ramp(0.0, 0.0, f_prep, f_interaction, rise, RAMP_STEPS)?);
                segments.push(PulseSegment::free(f_interaction, interaction_time)?);
                segments.extend(Self::linear_ramp(0.0, 0.0, f_interaction, f_prep, rise, RAMP_STEPS)?);
            }
            _ => segments.push(PulseSegment::free(f_interaction, interaction_time)?),
        }
        segments.push(pi);
        Self::new(segments)
    }
}

/// Spectral decomposition of a Hamiltonian, reusable for any evolution time.
#[derive(Debug, Clone)]
pub struct Propagator {
    eigenvalues: Vector4<f64>,
    eigenvectors: Matrix4<Complex64>,
}

impl Propagator {
    pub fn new(hamiltonian: &HamiltonianMatrix) -> Self {
        let eig = SymmetricEigen::new(*hamiltonian.matrix());
        Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn for_segment(seg: &PulseSegment, r: f64, params: &PhysicalParams) -> Result<Self> {
        let h = params.build_hamiltonian(seg.delta, seg.omega, seg.field, r)?;
        Ok(Self::new(&h))
    }

    /// `exp(−i·2π·H·t)`.
    pub fn unitary(&self, t: f64) -> Matrix4<Complex64> {
        let phases = self
            .eigenvalues
            .map(|e| Complex64::from_polar(1.0, -TAU * e * t));
        let q = &self.eigenvectors;
        q * Matrix4::from_diagonal(&phases) * q.adjoint()
    }

    pub fn evolve(&self, state: &StateVector, t: f64) -> StateVector {
        // Rotate into the eigenbasis, apply phases and rotate back.
        let q = &self.eigenvectors;
        let mut coeffs = q.ad_mul(&state.0);
        for (c, e) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= Complex64::from_polar(1.0, -TAU * e * t);
        }
        StateVector(q * coeffs)
    }
}

/// Evolves `state` through one constant segment.
pub fn propagate_segment(
    state: &StateVector,
    seg: &PulseSegment,
    r: f64,
    params: &PhysicalParams,
) -> Result<StateVector> {
    state.check_normalized()?;
    seg.validate()?;
    if seg.duration == 0.0 {
        return Ok(*state);
    }
    let prop = Propagator::for_segment(seg, r, params)?;
    Ok(prop.evolve(state, seg.duration))
}

/// Final state and the state recorded after each segment.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub final_state: StateVector,
    pub trajectory: Vec<StateVector>,
}

pub fn run_sequence(
    seq: &Sequence,
    r: f64,
    params: &PhysicalParams,
    initial: &StateVector,
) -> Result<SequenceRun> {
    let mut trajectory = Vec::with_capacity(seq.segments.len());
    let mut state = *initial;
    for seg in &seq.segments {
        state = propagate_segment(&state, seg, r, params)?;
        trajectory.push(state);
    }
    Ok(SequenceRun {
        final_state: state,
        trajectory,
    })
}

/// Single-atom π time `1/(2Ω)` in µs for a Rabi frequency in MHz.
pub fn pi_pulse_duration(omega: f64) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Domain(format!(
            "π pulse needs a positive Rabi frequency, got {omega} MHz"
        )));
    }
    Ok(0.5 / omega)
}

/// Probability of returning to `|gg⟩` after the excite, interact for
/// `interaction_time`, de-excite protocol.
pub fn pump_probe_pgg(
    interaction_time: f64,
    r: f64,
    params: &PhysicalParams,
    omega: f64,
    f_prep: f64,
) -> Result<f64> {
    pump_probe_pgg_at(interaction_time, r, params, omega, f_prep, params.f_res)
}

/// [`pump_probe_pgg`] with an explicit interaction field.
pub fn pump_probe_pgg_at(
    interaction_time: f64,
    r: f64,
    params: &PhysicalParams,
    omega: f64,
    f_prep: f64,
    f_interaction: f64,
) -> Result<f64> {
    if !(interaction_time >= 0.0) {
        return Err(Error::Domain(format!(
            "interaction time must be non-negative, got {interaction_time} µs"
        )));
    }
    let seq = Sequence::pump_probe(omega, f_prep, f_interaction, interaction_time, None)?;
    let run = run_sequence(&seq, r, params, &StateVector::ground())?;
    Ok(run.final_state.population(PairBasis::Gg))
}

/// Pump-probe trace evaluated for many interaction times with the π-pulse and
/// free-evolution propagators computed once.
#[derive(Debug, Clone)]
pub struct PumpProbe {
    after_excitation: StateVector,
    free: Propagator,
    deexcite: Matrix4<Complex64>,
}

impl PumpProbe {
    pub fn new(
        r: f64,
        params: &PhysicalParams,
        omega: f64,
        f_prep: f64,
        f_interaction: f64,
    ) -> Result<Self> {
        let pi = PulseSegment::new(omega, 0.0, f_prep, pi_pulse_duration(omega)?)?;
        let pi_prop = Propagator::for_segment(&pi, r, params)?;
        let free = Propagator::for_segment(&PulseSegment::free(f_interaction, 0.0)?, r, params)?;
        let deexcite = pi_prop.unitary(pi.duration);
        Ok(Self {
            after_excitation: pi_prop.evolve(&StateVector::ground(), pi.duration),
            free,
            deexcite,
        })
    }

    pub fn pgg(&self, interaction_time: f64) -> Result<f64> {
        if !(interaction_time >= 0.0) {
            return Err(Error::Domain(format!(
                "interaction time must be non-negative, got {interaction_time} µs"
            )));
        }
        let mid = self.free.evolve(&self.after_excitation, interaction_time);
        let out = self.deexcite * mid.0;
        Ok(out[PairBasis::Gg.index()].norm_sqr())
    }
}

/// Populations after one excitation pulse from `|gg⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub p_gg: f64,
    /// `P_gr + P_rg`
    pub p_one: f64,
    pub p_rr: f64,
}

impl SpectrumPoint {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p_gg, self.p_one, self.p_rr]
    }
}

/// Applies one single-atom π-duration pulse at detuning `delta` and field
/// `field` to `|gg⟩` and reads out the populations.
pub fn spectrum_point(
    delta: f64,
    field: f64,
    r: f64,
    params: &PhysicalParams,
    omega: f64,
) -> Result<SpectrumPoint> {
    let seg = PulseSegment::new(omega, delta, field, pi_pulse_duration(omega)?)?;
    let state = propagate_segment(&StateVector::ground(), &seg, r, params)?;
    Ok(SpectrumPoint {
        p_gg: state.population(PairBasis::Gg),
        p_one: state.population(PairBasis::DgSym),
        p_rr: state.population(PairBasis::Dd) + state.population(PairBasis::PfSym),
    })
}
