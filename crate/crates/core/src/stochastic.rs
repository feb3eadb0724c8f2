//! Shot-to-shot fluctuations and projective sampling.
//!
//! Every shot draws from its own ChaCha stream keyed by `(master seed, key, shot)`,
//! where `key` identifies the grid point. Results therefore do not depend on
//! the order in which grid points or shots are evaluated, nor on the number of
//! worker threads. Per grid point, shots are always summed in shot order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;

use crate::dynamics::{pump_probe_pgg_at, run_sequence, spectrum_point, PumpProbe, Sequence, StateVector};
use crate::pair::{PairBasis, PhysicalParams};
use crate::{Error, Result};

/// Distances below this are redrawn, µm.
pub const MIN_DISTANCE: f64 = 1.0;

/// Quasi-static noise frozen for the duration of one shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation of the interatomic distance, µm.
    pub sigma_r: f64,
    /// Standard deviation of the applied field, mV/cm.
    pub sigma_f: f64,
    pub shots: u32,
    /// Replace each shot's probability by a single projective outcome.
    pub projective: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_r: 0.2,
            sigma_f: 1.0,
            shots: 100,
            projective: true,
        }
    }
}

impl NoiseModel {
    /// No fluctuations and exact probabilities: reproduces the deterministic model.
    pub fn off() -> Self {
        Self {
            sigma_r: 0.0,
            sigma_f: 0.0,
            shots: 1,
            projective: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r >= 0.0 && self.sigma_r.is_finite()) {
            return Err(Error::Domain(format!("sigma_r must be non-negative, got {}", self.sigma_r)));
        }
        if !(self.sigma_f >= 0.0 && self.sigma_f.is_finite()) {
            return Err(Error::Domain(format!("sigma_f must be non-negative, got {}", self.sigma_f)));
        }
        if self.shots == 0 {
            return Err(Error::Domain("shots must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_r == 0.0 && self.sigma_f == 0.0 && !self.projective
    }
}

/// Master seed of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RunSeed(pub u64);

impl RunSeed {
    /// Independent stream for shot `shot` of grid point `key`.
    pub fn stream(self, key: u64, shot: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.0.to_le_bytes());
        seed[8..16].copy_from_slice(&key.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(shot);
        rng
    }

    /// Seed of sub-campaign `index` (splitmix64 finalizer).
    pub fn derive(self, index: u64) -> RunSeed {
        let mut z = self
            .0
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RunSeed(z ^ (z >> 31))
    }
}

/// Stream keys for the different campaigns, so two campaigns sharing a seed
/// never share random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Trace = 1,
    Spectrum = 2,
}

pub fn stream_key(domain: StreamDomain, index: u64) -> u64 {
    ((domain as u64) << 56) ^ index
}

/// One shot's realized distance and field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotSample {
    pub r: f64,
    pub field: f64,
    /// Draws rejected by the truncation.
    pub redraws: u32,
}

/// Draws `(r', f')` around the nominal values, truncated to `r' > 1 µm` and `f' ≥ 0`.
pub fn sample_shot<R: Rng + ?Sized>(
    nominal_r: f64,
    nominal_field: f64,
    noise: &NoiseModel,
    stream: &mut R,
) -> ShotSample {
    let mut redraws = 0;
    let r = truncated_normal(nominal_r, noise.sigma_r, |x| x > MIN_DISTANCE, stream, &mut redraws);
    let field = truncated_normal(nominal_field, noise.sigma_f, |x| x >= 0.0, stream, &mut redraws);
    ShotSample { r, field, redraws }
}

fn truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sigma: f64,
    accept: impl Fn(f64) -> bool,
    stream: &mut R,
    redraws: &mut u32,
) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    let dist = Normal::new(mean, sigma).expect("sigma validated as finite and non-negative");
    loop {
        let x = dist.sample(stream);
        if accept(x) {
            return x;
        }
        *redraws += 1;
        if *redraws > 10_000 {
            // Nominal value far outside the support; fall back to the boundary.
            return if accept(mean) { mean } else { x.max(0.0) };
        }
    }
}

/// Mean `P_gg` and its standard error at one interaction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub time: f64,
    pub mean: f64,
    pub std_err: f64,
}

/// Pump-probe trace averaged over noisy shots.
///
/// The field fluctuation of a shot is a common offset added to both the
/// preparation and the interaction field.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_trace(
    times: &[f64],
    r: f64,
    params: &PhysicalParams,
    omega: f64,
    f_prep: f64,
    noise: &NoiseModel,
    seed: RunSeed,
) -> Result<Vec<TracePoint>> {
    monte_carlo_trace_ramped(times, r, params, omega, f_prep, 0.0, noise, seed)
}

/// [`monte_carlo_trace`] with linear field ramps of length `risetime` µs
/// between the pulses and the free evolution; a zero risetime switches
/// instantaneously.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_trace_ramped(
    times: &[f64],
    r: f64,
    params: &PhysicalParams,
    omega: f64,
    f_prep: f64,
    risetime: f64,
    noise: &NoiseModel,
    seed: RunSeed,
) -> Result<Vec<TracePoint>> {
    noise.validate()?;
    if !(risetime >= 0.0 && risetime.is_finite()) {
        return Err(Error::Domain(format!("risetime must be non-negative, got {risetime} µs")));
    }
    let ramped = |time: f64, r: f64, f_prep: f64, f_int: f64| -> Result<f64> {
        let seq = Sequence::pump_probe(omega, f_prep, f_int, time, Some(risetime))?;
        Ok(run_sequence(&seq, r, params, &StateVector::ground())?
            .final_state
            .population(PairBasis::Gg))
    };
    if times.is_empty() {
        return Err(Error::Domain("time grid is empty".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("interaction times must be non-negative, got {t}")));
    }

    if noise.is_noiseless() && risetime > 0.0 {
        return times
            .iter()
            .map(|&time| {
                Ok(TracePoint {
                    time,
                    mean: ramped(time, r, f_prep, params.f_res)?,
                    std_err: 0.0,
                })
            })
            .collect();
    }
    if noise.is_noiseless() {
        let pp = PumpProbe::new(r, params, omega, f_prep, params.f_res)?;
        return times
            .iter()
            .map(|&time| {
                Ok(TracePoint {
                    time,
                    mean: pp.pgg(time)?,
                    std_err: 0.0,
                })
            })
            .collect();
    }

    times
        .par_iter()
        .enumerate()
        .map(|(idx, &time)| {
            let key = stream_key(StreamDomain::Trace, idx as u64);
            let values = (0..noise.shots as u64)
                .map(|shot| {
                    let mut rng = seed.stream(key, shot);
                    let s = sample_shot(r, params.f_res, noise, &mut rng);
                    let offset = s.field - params.f_res;
                    let shot_prep = (f_prep + offset).max(0.0);
                    let p = if risetime > 0.0 {
                        ramped(time, s.r, shot_prep, s.field)?
                    } else {
                        pump_probe_pgg_at(time, s.r, params, omega, shot_prep, s.field)?
                    };
                    Ok(if noise.projective {
                        if rng.random::<f64>() < p { 1.0 } else { 0.0 }
                    } else {
                        p
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std_err) = mean_and_std_err(&values);
            Ok(TracePoint { time, mean, std_err })
        })
        .collect()
}

/// Populations `(P_gg, P_gr + P_rg, P_rr)` at one spectroscopy point averaged
/// over noisy shots; in projective mode each shot contributes one categorical
/// outcome.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_spectrum_point(
    delta: f64,
    field: f64,
    r: f64,
    params: &PhysicalParams,
    omega: f64,
    noise: &NoiseModel,
    seed: RunSeed,
    key: u64,
) -> Result<[f64; 3]> {
    noise.validate()?;
    if noise.is_noiseless() {
        return Ok(spectrum_point(delta, field, r, params, omega)?.as_array());
    }
    let mut acc = [0.0; 3];
    for shot in 0..noise.shots as u64 {
        let mut rng = seed.stream(stream_key(StreamDomain::Spectrum, key), shot);
        let s = sample_shot(r, field, noise, &mut rng);
        let probs = spectrum_point(delta, s.field, s.r, params, omega)?.as_array();
        if noise.projective {
            let counts = sample_counts(normalize3(probs), 1, &mut rng)?;
            for (a, c) in acc.iter_mut().zip(counts) {
                *a += c as f64;
            }
        } else {
            for (a, p) in acc.iter_mut().zip(probs) {
                *a += p;
            }
        }
    }
    let n = noise.shots as f64;
    Ok(acc.map(|a| a / n))
}

/// Clamps round-off so a propagated distribution passes [`sample_counts`]' check.
fn normalize3(p: [f64; 3]) -> [f64; 3] {
    let p = p.map(|x| x.max(0.0));
    let total: f64 = p.iter().sum();
    p.map(|x| x / total)
}

/// Multinomial draw of `n` shots over `(gg, one Rydberg, two Rydberg)`.
pub fn sample_counts<R: Rng + ?Sized>(
    probabilities: [f64; 3],
    n: u64,
    stream: &mut R,
) -> Result<[u64; 3]> {
    if probabilities.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
        return Err(Error::Domain(format!(
            "probabilities must be non-negative, got {probabilities:?}"
        )));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
    }
    let mut counts = [0u64; 3];
    let mut remaining = n;
    let mut mass = 1.0;
    for (i, &p) in probabilities.iter().enumerate().take(2) {
        if remaining == 0 {
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(remaining, q)
            .expect("conditional probability clamped to [0, 1]")
            .sample(stream);
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    counts[2] = remaining;
    Ok(counts)
}

fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
