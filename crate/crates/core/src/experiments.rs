//! Measurement campaigns: spectroscopy maps, distance scans with power-law
//! extraction, oscillation traces and the blockade comparison.

use rayon::prelude::*;

use crate::analysis::{
    fit_damped_sine, fit_double_gaussian, fit_power_law, DampedSineFit, DataPoint, DataSeries,
    DoubleGaussianFit, PowerLawFit,
};
use crate::config::Config;
use crate::pair::{Eigensplitting, PhysicalParams, VdwMode};
use crate::stochastic::{
    monte_carlo_spectrum_point, monte_carlo_trace_ramped, NoiseModel, RunSeed, TracePoint,
};
use crate::{Error, Result};

/// Oscillation periods a distance-scan trace covers at least; shorter
/// configured time windows are extended at the configured step.
pub const MIN_SCAN_PERIODS: f64 = 2.0;

/// Grids and sampling settings of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub deltas: Vec<f64>,
    pub fields: Vec<f64>,
    pub times: Vec<f64>,
    pub r_list: Vec<f64>,
    /// Single-atom Rabi frequency, MHz.
    pub omega: f64,
    /// π-pulse field of the pump-probe sequence, mV/cm.
    pub f_prep: f64,
    /// Field ramp length of the pump-probe sequence, µs; 0 switches instantly.
    pub risetime: f64,
    /// [`NoiseModel::off`] for noise-free runs.
    pub noise: NoiseModel,
    pub seed: RunSeed,
}

impl ScanSpec {
    pub fn from_config(cfg: &Config, with_noise: bool) -> Self {
        Self {
            deltas: cfg.scan.delta.points(),
            fields: cfg.scan.field.points(),
            times: cfg.scan.time.points(),
            r_list: cfg.scan.r_list.clone(),
            omega: cfg.omega,
            f_prep: cfg.f_prep,
            risetime: cfg.risetime,
            noise: if with_noise { cfg.noise } else { NoiseModel::off() },
            seed: cfg.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("delta", &self.deltas),
            ("field", &self.fields),
            ("time", &self.times),
            ("R", &self.r_list),
        ] {
            if grid.is_empty() {
                return Err(Error::Domain(format!("{name} grid is empty")));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("{name} grid has non-finite values")));
            }
        }
        let (lo, hi) = crate::pair::Geometry::VALID_RANGE;
        if let Some(r) = self.r_list.iter().find(|r| !(lo..=hi).contains(*r)) {
            return Err(Error::Domain(format!("R = {r} µm outside [{lo}, {hi}] µm")));
        }
        self.noise.validate()
    }
}

// --- spectroscopy ---------------------------------------------------------

/// `P_rr` over the (field, detuning) plane, field-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroscopyMap {
    pub fields: Vec<f64>,
    pub deltas: Vec<f64>,
    /// `p_rr[i][j]` at `fields[i]`, `deltas[j]`.
    pub p_rr: Vec<Vec<f64>>,
}

impl SpectroscopyMap {
    pub fn row(&self, i: usize) -> DataSeries {
        DataSeries::from_xy(&self.deltas, &self.p_rr[i]).expect("detuning grid validated")
    }
}

pub fn spectroscopy_map(spec: &ScanSpec, r: f64, params: &PhysicalParams) -> Result<SpectroscopyMap> {
    spec.validate()?;
    let nd = spec.deltas.len();
    let cells: Vec<f64> = (0..spec.fields.len() * nd)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / nd, cell % nd);
            let probs = monte_carlo_spectrum_point(
                spec.deltas[j],
                spec.fields[i],
                r,
                params,
                spec.omega,
                &spec.noise,
                spec.seed,
                cell as u64,
            )?;
            Ok(probs[2])
        })
        .collect::<Result<_>>()?;
    Ok(SpectroscopyMap {
        fields: spec.fields.clone(),
        deltas: spec.deltas.clone(),
        p_rr: cells.chunks(nd).map(<[f64]>::to_vec).collect(),
    })
}

/// `(P_gg, P_gr + P_rg, P_rr)` along the detuning grid at one field.
pub fn spectrum_scan(
    spec: &ScanSpec,
    field: f64,
    r: f64,
    params: &PhysicalParams,
) -> Result<Vec<[f64; 3]>> {
    spec.validate()?;
    spec.deltas
        .par_iter()
        .enumerate()
        .map(|(j, &delta)| {
            monte_carlo_spectrum_point(delta, field, r, params, spec.omega, &spec.noise, spec.seed, j as u64)
        })
        .collect()
}

/// Field row whose fitted peaks are most nearly mirror images, i.e. where
/// `||μ₁| − |μ₂||` is smallest. Rows without two resolved peaks are skipped.
pub fn most_symmetric_field(map: &SpectroscopyMap) -> Option<f64> {
    (0..map.fields.len())
        .filter_map(|i| {
            let fit = fit_double_gaussian(&map.row(i)).ok()?;
            if fit.centers.len() != 2 || fit.centers[0] >= 0.0 || fit.centers[1] <= 0.0 {
                return None;
            }
            Some((map.fields[i], (fit.centers[0].abs() - fit.centers[1].abs()).abs()))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f)
}

// --- Stark map ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkRow {
    pub field: f64,
    pub defect: f64,
    pub eig: Eigensplitting,
}

pub fn stark_table(fields: &[f64], r: f64, params: &PhysicalParams) -> Result<Vec<StarkRow>> {
    fields
        .iter()
        .map(|&field| {
            Ok(StarkRow {
                field,
                defect: params.forster_defect(field)?,
                eig: params.pair_eigensplitting(field, r)?,
            })
        })
        .collect()
}

// --- distance scans -------------------------------------------------------

/// A distance whose data could not be reduced to a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Excluded {
    pub r: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplittingPoint {
    pub r: f64,
    pub splitting: f64,
    pub spectrum: DataSeries,
    pub fit: DoubleGaussianFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplittingScan {
    pub resonance_field: f64,
    pub points: Vec<SplittingPoint>,
    pub excluded: Vec<Excluded>,
    /// Raw `P_rr(δ)` of the excluded distances.
    pub excluded_spectra: Vec<(f64, DataSeries)>,
    pub power_law: PowerLawFit,
}

/// Spectrum at the resonance field for every R, double-Gaussian splitting,
/// then a log-log power law of splitting against R.
pub fn splitting_vs_distance(spec: &ScanSpec, params: &PhysicalParams) -> Result<SplittingScan> {
    spec.validate()?;
    let f_res = params.find_resonance_field()?;
    let outcomes = spec
        .r_list
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let sub = ScanSpec {
                seed: spec.seed.derive(k as u64),
                ..spec.clone()
            };
            let rows = spectrum_scan(&sub, f_res, r, params)?;
            let p_rr: Vec<f64> = rows.iter().map(|p| p[2]).collect();
            let series = labeled(&spec.deltas, &p_rr, "delta(MHz)", "P_rr")?;
            let fit = fit_double_gaussian(&series)?;
            Ok((r, series, fit))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    let mut excluded = Vec::new();
    let mut excluded_spectra = Vec::new();
    for (r, spectrum, fit) in outcomes {
        match fit.splitting {
            Some(splitting) => points.push(SplittingPoint { r, splitting, spectrum, fit }),
            None => {
                excluded.push(Excluded {
                    r,
                    reason: "peaks not resolved".into(),
                });
                excluded_spectra.push((r, spectrum));
            }
        }
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.r, p.splitting)).collect();
    let power_law = fit_power_law(&pairs, None)?;
    Ok(SplittingScan {
        resonance_field: f_res,
        points,
        excluded,
        excluded_spectra,
        power_law,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationPoint {
    pub r: f64,
    pub f_osc: f64,
    pub trace: Vec<TracePoint>,
    pub fit: DampedSineFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationScan {
    pub points: Vec<OscillationPoint>,
    pub excluded: Vec<Excluded>,
    pub excluded_traces: Vec<(f64, Vec<TracePoint>)>,
    pub power_law: PowerLawFit,
}

/// Time grid for a distance: the configured grid, extended at the same step
/// until it covers [`MIN_SCAN_PERIODS`] periods of `2√2·C3/R³`.
pub fn scan_times(times: &[f64], r: f64, params: &PhysicalParams) -> Result<Vec<f64>> {
    let expected = params.pair_eigensplitting(params.f_res, r)?.splitting;
    let mut out = times.to_vec();
    if out.len() < 2 {
        return Ok(out);
    }
    let step = out[out.len() - 1] - out[out.len() - 2];
    let needed = out[0] + MIN_SCAN_PERIODS / expected;
    while out[out.len() - 1] < needed && step > 0.0 {
        let next = out[0] + out.len() as f64 * step;
        out.push(next);
    }
    Ok(out)
}

/// Pump-probe trace for every R, damped-sine frequency, then a log-log
/// power law of `f_osc` against R.
pub fn oscillation_vs_distance(spec: &ScanSpec, params: &PhysicalParams) -> Result<OscillationScan> {
    spec.validate()?;
    let outcomes = spec
        .r_list
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let times = scan_times(&spec.times, r, params)?;
            let trace = monte_carlo_trace_ramped(
                &times,
                r,
                params,
                spec.omega,
                spec.f_prep,
                spec.risetime,
                &spec.noise,
                spec.seed.derive(k as u64),
            )?;
            let fit = fit_damped_sine(&trace_series(&trace)?);
            Ok((r, trace, fit))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    let mut excluded = Vec::new();
    let mut excluded_traces = Vec::new();
    for (r, trace, fit) in outcomes {
        match fit {
            Ok(fit) => points.push(OscillationPoint {
                r,
                f_osc: fit.frequency,
                trace,
                fit,
            }),
            Err(e @ (Error::NoOscillation | Error::Data(_))) => {
                excluded.push(Excluded {
                    r,
                    reason: e.to_string(),
                });
                excluded_traces.push((r, trace));
            }
            Err(e) => return Err(e),
        }
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.r, p.f_osc)).collect();
    let power_law = fit_power_law(&pairs, None)?;
    Ok(OscillationScan {
        points,
        excluded,
        excluded_traces,
        power_law,
    })
}

pub fn trace_series(trace: &[TracePoint]) -> Result<DataSeries> {
    let points = trace
        .iter()
        .map(|p| DataPoint {
            x: p.time,
            y: p.mean,
            sigma: None,
        })
        .collect();
    DataSeries::new(points, "T(us)", "P_gg")
}

fn labeled(xs: &[f64], ys: &[f64], x_label: &str, y_label: &str) -> Result<DataSeries> {
    let mut s = DataSeries::from_xy(xs, ys)?;
    s.x_label = x_label.into();
    s.y_label = y_label.into();
    Ok(s)
}

// --- blockade -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockadeReport {
    /// `|U_vdW|` at the off-resonant field, MHz.
    pub u_off: f64,
    /// `ΔE/2` at resonance, MHz.
    pub u_on: f64,
    pub enhancement: f64,
    /// Distance where `√2·C3/R³ = Ω`, µm.
    pub radius_resonant: f64,
    /// Distance where `V(R)²/|Δ(F_off)| = Ω`, µm.
    pub radius_vdw: f64,
    pub radius_ratio: f64,
}

/// Interaction shift and blockade radius on and off resonance.
pub fn blockade_report(r: f64, f_off: f64, params: &PhysicalParams, omega: f64) -> Result<BlockadeReport> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Domain(format!("Rabi frequency must be positive, got {omega} MHz")));
    }
    let defect = params.forster_defect(f_off)?;
    let coupling = params.dipole_coupling(r)?;
    if !(defect.abs() > 10.0 * coupling) {
        return Err(Error::Regime(format!(
            "F_off = {f_off} mV/cm is not in the van der Waals regime at R = {r} µm: |Δ| = {:.4} MHz, V = {coupling:.4} MHz (need |Δ| > 10·V)",
            defect.abs()
        )));
    }
    let u_off = params.vdw_shift(f_off, r, VdwMode::Exact)?.abs();
    let u_on = params.pair_eigensplitting(params.f_res, r)?.splitting / 2.0;
    let c3_eff = std::f64::consts::SQRT_2 * params.c3;
    let radius_resonant = (c3_eff / omega).cbrt();
    // V(R)²/|Δ| = 2·C3²/(R⁶·|Δ|) = Ω
    let radius_vdw = (c3_eff * c3_eff / (defect.abs() * omega)).powf(1.0 / 6.0);
    Ok(BlockadeReport {
        u_off,
        u_on,
        enhancement: u_on / u_off,
        radius_resonant,
        radius_vdw,
        radius_ratio: radius_resonant / radius_vdw,
    })
}
