//! Nonlinear least squares and the three fit models used on simulated data:
//! a double Gaussian for spectra, a damped sine for oscillation traces and a
//! power law for distance scans.

use std::f64::consts::{SQRT_2, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// One sample of a measured or simulated curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    /// One-sigma uncertainty of `y`, if known.
    pub sigma: Option<f64>,
}

/// Points sorted by strictly increasing `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries {
    points: Vec<DataPoint>,
    pub x_label: String,
    pub y_label: String,
}

impl DataSeries {
    pub fn new(mut points: Vec<DataPoint>, x_label: &str, y_label: &str) -> Result<Self> {
        if let Some(p) = points
            .iter()
            .find(|p| !p.x.is_finite() || !p.y.is_finite() || p.sigma.is_some_and(|s| !(s > 0.0)))
        {
            return Err(Error::Data(format!("invalid data point {p:?}")));
        }
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        if points.windows(2).any(|w| w[0].x == w[1].x) {
            return Err(Error::Data("duplicate x values".into()));
        }
        Ok(Self {
            points,
            x_label: x_label.to_owned(),
            y_label: y_label.to_owned(),
        })
    }

    pub fn from_xy(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Data(format!(
                "x and y lengths differ ({} vs {})",
                xs.len(),
                ys.len()
            )));
        }
        let points = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| DataPoint { x, y, sigma: None })
            .collect();
        Self::new(points, "x", "y")
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    /// Reflects the x axis (`x → −x`).
    pub fn reflected(&self) -> Self {
        let points = self
            .points
            .iter()
            .rev()
            .map(|p| DataPoint { x: -p.x, ..*p })
            .collect();
        Self {
            points,
            x_label: self.x_label.clone(),
            y_label: self.y_label.clone(),
        }
    }

    fn weights(&self) -> Vec<f64> {
        if self.points.iter().all(|p| p.sigma.is_some()) {
            self.points.iter().map(|p| 1.0 / p.sigma.unwrap()).collect()
        } else {
            vec![1.0; self.points.len()]
        }
    }

    fn has_uncertainties(&self) -> bool {
        self.points.iter().all(|p| p.sigma.is_some())
    }
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientSmall,
    CostStalled,
    MaxIterations,
    MaxDamping,
    /// Closed-form solution, no iteration.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Symmetric positive semidefinite, row major `n × n`.
    pub covariance: Vec<Vec<f64>>,
    /// Sum of squared (weighted) residuals.
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len())
            .map(|i| self.covariance[i][i].max(0.0).sqrt())
            .collect()
    }

    /// Flat `key = value` lines, one per parameter plus diagnostics.
    pub fn to_record(&self, names: &[&str]) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let errs = self.std_errors();
        for (i, (value, err)) in self.params.iter().zip(&errs).enumerate() {
            let name = names.get(i).map_or_else(|| format!("p{i}"), |n| (*n).to_owned());
            out.push((name.clone(), fmt_sig(*value)));
            out.push((format!("{name}_err"), fmt_sig(*err)));
        }
        out.push(("cost".into(), fmt_sig(self.cost)));
        out.push(("gradient_norm".into(), fmt_sig(self.gradient_norm)));
        out.push(("iterations".into(), self.iterations.to_string()));
        out.push(("converged".into(), self.converged.to_string()));
        out
    }
}

pub(crate) fn fmt_sig(x: f64) -> String {
    crate::output::format_float(x)
}

/// Stopping rules and damping schedule of [`nlls_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
    pub fd_relative_step: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
            fd_relative_step: 1e-6,
            initial_damping: 1e-3,
            max_damping: 1e16,
        }
    }
}

/// Least-squares fit of `model(x, params)` to `data` with default options.
pub fn nlls_fit<F>(model: F, data: &DataSeries, initial: &[f64]) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    nlls_fit_with(model, data, initial, &FitOptions::default())
}

/// Levenberg–Marquardt: Gauss–Newton steps on `JᵀJ + λ·diag(JᵀJ)`, with `λ`
/// shrunk after an accepted step and grown after a rejected one. The
/// Jacobian comes from central differences.
pub fn nlls_fit_with<F>(
    model: F,
    data: &DataSeries,
    initial: &[f64],
    opts: &FitOptions,
) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = initial.len();
    let m = data.len();
    if n == 0 {
        return Err(Error::Data("no parameters to fit".into()));
    }
    if m < n {
        return Err(Error::Data(format!(
            "{m} points cannot constrain {n} parameters"
        )));
    }
    if initial.iter().any(|p| !p.is_finite()) {
        return Err(Error::Data(format!("initial parameters not finite: {initial:?}")));
    }
    let xs = data.xs();
    let ys = data.ys();
    let weights = data.weights();

    let residuals = |p: &[f64]| -> DVector<f64> {
        DVector::from_iterator(
            m,
            xs.iter()
                .zip(&ys)
                .zip(&weights)
                .map(|((&x, &y), &w)| w * (y - model(x, p))),
        )
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        // Jacobian of the model (= −∂r/∂p), weighted.
        let mut jac = DMatrix::zeros(m, n);
        let mut probe = p.to_vec();
        for j in 0..n {
            let h = opts.fd_relative_step * p[j].abs().max(1.0);
            probe[j] = p[j] + h;
            let up: Vec<f64> = xs.iter().map(|&x| model(x, &probe)).collect();
            probe[j] = p[j] - h;
            let down: Vec<f64> = xs.iter().map(|&x| model(x, &probe)).collect();
            probe[j] = p[j];
            for i in 0..m {
                jac[(i, j)] = weights[i] * (up[i] - down[i]) / (2.0 * h);
            }
        }
        jac
    };

    let mut params = initial.to_vec();
    let mut r = residuals(&params);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("model is not finite at the initial parameters".into()));
    }
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    let mut jac = jacobian(&params);
    let mut gradient = jac.transpose() * &r;

    while iterations < opts.max_iterations {
        if gradient.norm() < opts.gradient_tolerance {
            termination = Termination::GradientSmall;
            break;
        }
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let mut accepted = false;
        while lambda <= opts.max_damping {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&gradient),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let r_trial = residuals(&trial);
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial < cost {
                let rel_change = (cost - cost_trial) / cost.max(f64::MIN_POSITIVE);
                params = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                jac = jacobian(&params);
                gradient = jac.transpose() * &r;
                if rel_change < opts.cost_tolerance {
                    termination = Termination::CostStalled;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            termination = Termination::MaxDamping;
            break;
        }
        if termination == Termination::CostStalled {
            break;
        }
    }
    if termination == Termination::MaxIterations && gradient.norm() < opts.gradient_tolerance {
        termination = Termination::GradientSmall;
    }
    if termination == Termination::GradientSmall {
        // Undamped Gauss–Newton polish: the gradient test is absolute, so it
        // can fire while exact data still leave round-off-sized gains.
        for _ in 0..10 {
            let Some(ch) = (jac.transpose() * &jac).cholesky() else {
                break;
            };
            let step = ch.solve(&gradient);
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let r_trial = residuals(&trial);
            let cost_trial = r_trial.norm_squared();
            if !(cost_trial < cost) {
                break;
            }
            params = trial;
            r = r_trial;
            cost = cost_trial;
            jac = jacobian(&params);
            gradient = jac.transpose() * &r;
        }
    }

    let gradient_norm = gradient.norm();
    // At maximum damping no step lowers the cost any further; that is a
    // minimum when the gradient has vanished to round-off.
    let converged = match termination {
        Termination::GradientSmall | Termination::Exact => true,
        Termination::CostStalled | Termination::MaxDamping => {
            gradient_norm < opts.gradient_tolerance * cost.sqrt().max(1.0) * 1e2
        }
        Termination::MaxIterations => false,
    };

    let dof = m.saturating_sub(n).max(1) as f64;
    let scale = if data.has_uncertainties() { 1.0 } else { cost / dof };
    let covariance = covariance_from_jacobian(&jac, scale);

    Ok(FitResult {
        params,
        covariance,
        cost,
        gradient_norm,
        iterations,
        converged,
        termination,
    })
}

fn covariance_from_jacobian(jac: &DMatrix<f64>, scale: f64) -> Vec<Vec<f64>> {
    let n = jac.ncols();
    let jtj = jac.transpose() * jac;
    let inv = jtj
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::zeros(n, n));
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| scale * 0.5 * (inv[(i, j)] + inv[(j, i)]))
                .collect()
        })
        .collect()
}

// --- double Gaussian ------------------------------------------------------

/// `A₁·exp(−(x−μ₁)²/2s₁²) + A₂·exp(−(x−μ₂)²/2s₂²) + B`, parameters
/// `[A₁, μ₁, s₁, A₂, μ₂, s₂, B]`.
pub fn double_gaussian(x: f64, p: &[f64]) -> f64 {
    gaussian(x, p[0], p[1], p[2]) + gaussian(x, p[3], p[4], p[5]) + p[6]
}

/// `A·exp(−(x−μ)²/2s²) + B`, parameters `[A, μ, s, B]`.
pub fn single_gaussian(x: f64, p: &[f64]) -> f64 {
    gaussian(x, p[0], p[1], p[2]) + p[3]
}

fn gaussian(x: f64, amplitude: f64, center: f64, width: f64) -> f64 {
    let z = (x - center) / width;
    amplitude * (-0.5 * z * z).exp()
}

pub const DOUBLE_GAUSSIAN_PARAMS: [&str; 7] = ["A1", "mu1", "s1", "A2", "mu2", "s2", "B"];
pub const SINGLE_GAUSSIAN_PARAMS: [&str; 4] = ["A", "mu", "s", "B"];

/// Minimum number of points for [`fit_double_gaussian`].
pub const DOUBLE_GAUSSIAN_MIN_POINTS: usize = 7;

/// Local maxima smaller than this fraction of the tallest one (both measured
/// above the spectrum minimum) are not treated as peaks.
pub const PEAK_SIGNIFICANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleGaussianFit {
    /// `|μ₂ − μ₁|`, `None` when only one peak was found.
    pub splitting: Option<f64>,
    /// Peak centers in increasing order (one entry when unresolved).
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub offset: f64,
    pub fit: FitResult,
}

impl DoubleGaussianFit {
    pub fn is_resolved(&self) -> bool {
        self.splitting.is_some()
    }

    /// Midpoint of the two centers.
    pub fn center_offset(&self) -> Option<f64> {
        (self.centers.len() == 2).then(|| 0.5 * (self.centers[0] + self.centers[1]))
    }
}

/// 3-point moving average; the end points average their two available samples.
fn smooth3(ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            ys[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Indices of significant local maxima of `ys`, tallest first, ties broken
/// by smaller `|x|`.
fn local_maxima(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    let n = ys.len();
    let floor = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        // Collapse plateaus to their middle sample.
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        let left_lower = i == 0 || ys[i - 1] < ys[i];
        let right_lower = j == n - 1 || ys[j + 1] < ys[i];
        if left_lower && right_lower && n > 1 {
            peaks.push((i + j) / 2);
        }
        i = j + 1;
    }
    let tallest = peaks.iter().map(|&k| ys[k] - floor).fold(0.0, f64::max);
    peaks.retain(|&k| ys[k] - floor >= PEAK_SIGNIFICANCE * tallest && ys[k] > floor);
    peaks.sort_by(|&a, &b| {
        ys[b]
            .total_cmp(&ys[a])
            .then(xs[a].abs().total_cmp(&xs[b].abs()))
    });
    peaks
}

fn median_spacing(xs: &[f64]) -> f64 {
    let mut d: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

pub fn fit_double_gaussian(spectrum: &DataSeries) -> Result<DoubleGaussianFit> {
    if spectrum.len() < DOUBLE_GAUSSIAN_MIN_POINTS {
        return Err(Error::Data(format!(
            "double-Gaussian fit needs at least {DOUBLE_GAUSSIAN_MIN_POINTS} points, got {}",
            spectrum.len()
        )));
    }
    let xs = spectrum.xs();
    let ys = spectrum.ys();
    let smoothed = smooth3(&ys);
    let peaks = local_maxima(&xs, &smoothed);
    let width0 = 3.0 * median_spacing(&xs);
    let floor = ys.iter().copied().fold(f64::INFINITY, f64::min);

    let single = |k: usize| -> Result<DoubleGaussianFit> {
        let initial = [smoothed[k] - floor, xs[k], width0, floor];
        let fit = nlls_fit(single_gaussian, spectrum, &initial)?;
        let p = &fit.params;
        Ok(DoubleGaussianFit {
            splitting: None,
            centers: vec![p[1]],
            widths: vec![p[2].abs()],
            amplitudes: vec![p[0]],
            offset: p[3],
            fit,
        })
    };
    if peaks.len() < 2 {
        return single(peaks.first().copied().unwrap_or_else(|| argmax(&smoothed)));
    }

    let (a, b) = (peaks[0], peaks[1]);
    let initial = [
        smoothed[a] / 2.0,
        xs[a],
        width0,
        smoothed[b] / 2.0,
        xs[b],
        width0,
        floor,
    ];
    let fit = nlls_fit(double_gaussian, spectrum, &initial)?;
    let p = &fit.params;
    let mut peaks = [(p[1], p[2].abs(), p[0]), (p[4], p[5].abs(), p[3])];
    peaks.sort_by(|l, r| l.0.total_cmp(&r.0));
    // A component that collapsed onto its partner or into a faint pedestal
    // is not a second line.
    let taller = peaks[0].2.max(peaks[1].2);
    let faint = peaks.iter().any(|q| !(q.2 >= PEAK_SIGNIFICANCE * taller));
    let merged = peaks[1].0 - peaks[0].0 <= peaks[0].1.min(peaks[1].1);
    if faint || merged {
        return single(a);
    }
    Ok(DoubleGaussianFit {
        splitting: Some((peaks[1].0 - peaks[0].0).abs()),
        centers: peaks.iter().map(|q| q.0).collect(),
        widths: peaks.iter().map(|q| q.1).collect(),
        amplitudes: peaks.iter().map(|q| q.2).collect(),
        offset: p[6],
        fit,
    })
}

fn argmax(ys: &[f64]) -> usize {
    ys.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

// --- damped sine ----------------------------------------------------------

/// `C + A·exp(−γT)·cos(2πfT + φ)`, parameters `[C, A, γ, f, φ]`.
///
/// The decay enters as a rate so an undamped trace sits at the finite value
/// `γ = 0`; the damping time is `τ = 1/γ`.
pub fn damped_sine(t: f64, p: &[f64]) -> f64 {
    p[0] + p[1] * (-p[2] * t).exp() * (TAU * p[3] * t + p[4]).cos()
}

pub const DAMPED_SINE_PARAMS: [&str; 5] = ["C", "A", "gamma", "f", "phi"];

/// Oscillations the trace must span at the initial frequency guess.
pub const MIN_PERIODS: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DampedSineFit {
    /// MHz.
    pub frequency: f64,
    /// µs; infinite when the fitted decay rate is not positive.
    pub damping_time: f64,
    /// `2|A|`.
    pub contrast: f64,
    pub offset: f64,
    pub phase: f64,
    pub initial_frequency: f64,
    pub fit: FitResult,
}

/// Dominant frequency of `y − ȳ` by a discrete Fourier transform on the
/// natural bin grid `k/(N·Δt)`, refined on a finer grid around the winning bin.
/// Returns the frequency and the complex Fourier sum at it.
fn dominant_frequency(xs: &[f64], ys: &[f64]) -> Result<(f64, Complex64)> {
    let n = xs.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = ys.iter().map(|y| y - mean).collect();
    let span = xs[n - 1] - xs[0];
    let df = (n - 1) as f64 / (n as f64 * span);
    let transform = |f: f64| -> Complex64 {
        xs.iter()
            .zip(&centered)
            .map(|(&x, &y)| y * Complex64::from_polar(1.0, -TAU * f * x))
            .sum()
    };
    let power = |f: f64| transform(f).norm_sqr();
    let scale = 1.0 + mean.abs();
    if centered.iter().all(|c| c.abs() <= 1e-12 * scale) {
        return Err(Error::NoOscillation);
    }
    let bins = n / 2;
    let best = (0..=bins)
        .max_by(|&a, &b| power(a as f64 * df).total_cmp(&power(b as f64 * df)))
        .unwrap_or(0);
    if best == 0 {
        return Err(Error::NoOscillation);
    }
    const REFINE: usize = 64;
    let lo = (best as f64 - 1.0) * df;
    let f = (0..=2 * REFINE)
        .map(|k| lo + k as f64 * df / REFINE as f64)
        .filter(|f| *f > 0.0)
        .max_by(|a, b| power(*a).total_cmp(&power(*b)))
        .unwrap_or(best as f64 * df);
    Ok((f, transform(f)))
}

pub fn fit_damped_sine(trace: &DataSeries) -> Result<DampedSineFit> {
    if trace.len() < 2 * DAMPED_SINE_PARAMS.len() {
        return Err(Error::Data(format!(
            "damped-sine fit needs at least {} points, got {}",
            2 * DAMPED_SINE_PARAMS.len(),
            trace.len()
        )));
    }
    let xs = trace.xs();
    let ys = trace.ys();
    let (f0, sum) = dominant_frequency(&xs, &ys)?;
    let span = xs[xs.len() - 1] - xs[0];
    if f0 * span < MIN_PERIODS {
        return Err(Error::Data(format!(
            "trace spans {:.2} periods of the {f0:.4} MHz guess; at least {MIN_PERIODS} needed",
            f0 * span
        )));
    }
    let n = xs.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let initial = [mean, 2.0 * sum.norm() / n, 0.0, f0, sum.arg()];
    let fit = nlls_fit(damped_sine, trace, &initial)?;
    let p = &fit.params;
    // Fold a negative amplitude into the phase.
    let (amplitude, phase) = if p[1] < 0.0 {
        (-p[1], p[4] + std::f64::consts::PI)
    } else {
        (p[1], p[4])
    };
    let phase = (phase + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    Ok(DampedSineFit {
        frequency: p[3].abs(),
        damping_time: if p[2] > 0.0 { 1.0 / p[2] } else { f64::INFINITY },
        contrast: 2.0 * amplitude,
        offset: p[0],
        phase,
        initial_frequency: f0,
        fit,
    })
}

// --- power law ------------------------------------------------------------

pub const POWER_LAW_PARAMS: [&str; 2] = ["prefactor", "exponent"];

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub exponent_err: f64,
    /// `a` in `y = a·R^k`.
    pub prefactor: f64,
    /// `C3` from the best `y = 2√2·C3/R³` offset fit, MHz·µm³.
    pub c3: f64,
    pub c3_err: f64,
    /// Parameters `[prefactor, exponent]`.
    pub fit: FitResult,
}

/// `C3` from the prefactor of an `R⁻³` law for either the resonant splitting
/// `ΔE` or the oscillation frequency `f_osc`; both equal `2√2·C3/R³`.
pub fn c3_from_prefactor(prefactor: f64) -> f64 {
    prefactor / (2.0 * SQRT_2)
}

/// Log-log linear regression of `y = a·R^k`. With `fix_exponent` only `log a`
/// is fitted.
pub fn fit_power_law(points: &[(f64, f64)], fix_exponent: Option<f64>) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Data(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(bad) = points.iter().find(|(r, y)| !(*r > 0.0 && *y > 0.0 && r.is_finite() && y.is_finite())) {
        return Err(Error::Domain(format!(
            "power-law fit needs positive values, got {bad:?}"
        )));
    }
    let lx: Vec<f64> = points.iter().map(|(r, _)| r.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let n = points.len() as f64;

    let (ln_a, exponent, var_ln_a, var_k, cov, cost, dof) = match fix_exponent {
        Some(k) => {
            let resid: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - k * x).collect();
            let ln_a = resid.iter().sum::<f64>() / n;
            let cost: f64 = resid.iter().map(|r| (r - ln_a).powi(2)).sum();
            let s2 = cost / (n - 1.0);
            (ln_a, k, s2 / n, 0.0, 0.0, cost, n - 1.0)
        }
        None => {
            let mx = lx.iter().sum::<f64>() / n;
            let my = ly.iter().sum::<f64>() / n;
            let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
            if sxx == 0.0 {
                return Err(Error::Data("power-law fit needs at least two distinct R".into()));
            }
            let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
            let k = sxy / sxx;
            let ln_a = my - k * mx;
            let cost: f64 = lx
                .iter()
                .zip(&ly)
                .map(|(x, y)| (y - ln_a - k * x).powi(2))
                .sum();
            let s2 = cost / (n - 2.0);
            let var_k = s2 / sxx;
            let var_ln_a = s2 * (1.0 / n + mx * mx / sxx);
            let cov = -mx * s2 / sxx;
            (ln_a, k, var_ln_a, var_k, cov, cost, n - 2.0)
        }
    };
    let prefactor = ln_a.exp();
    // Propagate log-space covariance to (a, k).
    let covariance = vec![
        vec![prefactor * prefactor * var_ln_a, prefactor * cov],
        vec![prefactor * cov, var_k],
    ];

    // C3 always from the fixed R⁻³ law.
    let offsets: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y + 3.0 * x).collect();
    let ln_a3 = offsets.iter().sum::<f64>() / n;
    let var_ln_a3 = offsets.iter().map(|o| (o - ln_a3).powi(2)).sum::<f64>() / ((n - 1.0) * n);
    let c3 = c3_from_prefactor(ln_a3.exp());

    let _ = dof;
    Ok(PowerLawFit {
        exponent,
        exponent_err: var_k.sqrt(),
        prefactor,
        c3,
        c3_err: c3 * var_ln_a3.sqrt(),
        fit: FitResult {
            params: vec![prefactor, exponent],
            covariance,
            cost,
            gradient_norm: 0.0,
            iterations: 0,
            converged: true,
            termination: Termination::Exact,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(xs: &[f64], f: impl Fn(f64) -> f64) -> DataSeries {
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        DataSeries::from_xy(xs, &ys).unwrap()
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn series_sorts_and_rejects_duplicates() {
        let s = DataSeries::from_xy(&[2.0, 0.0, 1.0], &[4.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.xs(), vec![0.0, 1.0, 2.0]);
        assert_eq!(s.ys(), vec![0.0, 1.0, 4.0]);
        assert!(DataSeries::from_xy(&[1.0, 1.0], &[0.0, 0.0]).is_err());
        assert!(DataSeries::from_xy(&[1.0, f64::NAN], &[0.0, 0.0]).is_err());
        assert!(DataSeries::from_xy(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn fits_line_exactly() {
        let data = series(&linspace(-3.0, 5.0, 9), |x| 2.0 * x + 1.0);
        let fit = nlls_fit(|x, p| p[0] * x + p[1], &data, &[0.0, 0.0]).unwrap();
        assert!((fit.params[0] - 2.0).abs() < 1e-10);
        assert!((fit.params[1] - 1.0).abs() < 1e-10);
        assert!(fit.converged, "{fit:?}");
    }

    #[test]
    fn fits_quadratic_through_three_points() {
        let data = series(&[-1.0, 0.5, 2.0], |x| 0.5 * x * x - x + 3.0);
        let fit = nlls_fit(|x, p| p[0] * x * x + p[1] * x + p[2], &data, &[1.0, 1.0, 1.0]).unwrap();
        assert!(fit.cost < 1e-20, "cost {}", fit.cost);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = series(&[0.0, 1.0], |x| x);
        assert!(nlls_fit(|x, p| p[0] * x + p[1] + p[2], &data, &[0.0, 0.0, 0.0]).is_err());
        assert!(nlls_fit(|x, p| p[0] * x, &data, &[f64::NAN]).is_err());
        assert!(matches!(
            nlls_fit(|_, _| f64::NAN, &data, &[1.0]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn covariance_symmetric_psd() {
        let xs = linspace(0.0, 4.0, 30);
        let ys: Vec<f64> = xs.iter().enumerate().map(|(k, x)| 1.5 * x - 0.2 + 0.01 * ((k * 7 % 5) as f64 - 2.0)).collect();
        let data = DataSeries::from_xy(&xs, &ys).unwrap();
        let fit = nlls_fit(|x, p| p[0] * x + p[1], &data, &[0.0, 0.0]).unwrap();
        let c = &fit.covariance;
        assert_eq!(c[0][1], c[1][0]);
        assert!(c[0][0] > 0.0 && c[1][1] > 0.0);
        assert!(c[0][0] * c[1][1] - c[0][1] * c[1][0] >= 0.0);
    }

    #[test]
    fn double_gaussian_exact_recovery() {
        let truth = [0.8, -6.0, 1.2, 0.6, 7.5, 0.9, 0.05];
        let data = series(&linspace(-20.0, 20.0, 161), |x| double_gaussian(x, &truth));
        let dg = fit_double_gaussian(&data).unwrap();
        assert!((dg.splitting.unwrap() - 13.5).abs() < 1e-6);
        assert!((dg.centers[0] + 6.0).abs() < 1e-6);
        assert!((dg.widths[1] - 0.9).abs() < 1e-6);
        assert!((dg.offset - 0.05).abs() < 1e-6);
    }

    #[test]
    fn double_gaussian_single_peak_is_unresolved() {
        let data = series(&linspace(-20.0, 20.0, 81), |x| single_gaussian(x, &[0.7, -4.0, 1.5, 0.0]));
        let dg = fit_double_gaussian(&data).unwrap();
        assert!(!dg.is_resolved());
        assert!((dg.centers[0] + 4.0).abs() < 1e-6);
        assert!(fit_double_gaussian(&series(&linspace(0.0, 1.0, 6), |x| x)).is_err());
    }

    #[test]
    fn double_gaussian_reflection_invariant() {
        let truth = [0.8, -6.7, 1.1, 0.5, 6.2, 1.4, 0.01];
        let data = series(&linspace(-20.0, 20.0, 81), |x| double_gaussian(x, &truth));
        let a = fit_double_gaussian(&data).unwrap().splitting.unwrap();
        let b = fit_double_gaussian(&data.reflected()).unwrap().splitting.unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn smoothing_and_peak_ordering() {
        assert_eq!(smooth3(&[0.0, 3.0, 0.0]), vec![1.5, 1.0, 1.5]);
        // Equal maxima: the one closer to zero comes first.
        let xs = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(local_maxima(&xs, &ys), vec![1, 6]);
        let ys = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(local_maxima(&xs, &ys), vec![4, 1]);
        // Below the significance threshold.
        let ys = [0.0, 1.0, 0.0, 0.0, 0.05, 0.0, 0.0, 0.0];
        assert_eq!(local_maxima(&xs, &ys), vec![1]);
    }

    #[test]
    fn damped_sine_exact_recovery() {
        let truth = [0.5, 0.4, 3.0, 13.52, 0.3];
        let data = series(&linspace(0.0, 0.6, 121), |t| damped_sine(t, &truth));
        let fit = fit_damped_sine(&data).unwrap();
        assert!(((fit.frequency - 13.52) / 13.52).abs() < 1e-6);
        assert!(((fit.damping_time - 1.0 / 3.0) * 3.0).abs() < 1e-6);
        assert!((fit.contrast - 0.8).abs() < 1e-6);
        assert!((fit.phase - 0.3).abs() < 1e-6);
    }

    #[test]
    fn undamped_cosine_has_long_damping_time() {
        let data = series(&linspace(0.0, 1.0, 101), |t| 0.5 + 0.5 * (TAU * 4.2 * t).cos());
        let fit = fit_damped_sine(&data).unwrap();
        assert!((fit.frequency - 4.2).abs() < 1e-6);
        assert!(fit.damping_time > 10.0);
    }

    #[test]
    fn damped_sine_rejects_flat_and_short_traces() {
        let flat = series(&linspace(0.0, 1.0, 50), |_| 0.7);
        assert!(matches!(fit_damped_sine(&flat), Err(Error::NoOscillation)));
        let ramp = series(&linspace(0.0, 1.0, 50), |t| 1.0 - 0.3 * t);
        assert!(fit_damped_sine(&ramp).is_err());
        let short = series(&linspace(0.0, 1.0, 50), |t| (TAU * 1.2 * t).cos());
        assert!(fit_damped_sine(&short).is_err());
    }

    #[test]
    fn power_law_exact() {
        let pts: Vec<(f64, f64)> = [8.1, 10.0, 12.0, 15.0]
            .iter()
            .map(|&r| (r, 2.0 * SQRT_2 * 2540.0 / (r * r * r)))
            .collect();
        let fit = fit_power_law(&pts, None).unwrap();
        assert!((fit.exponent + 3.0).abs() < 5e-3);
        assert!((fit.c3 - 2540.0).abs() < 1.0);
        let fixed = fit_power_law(&pts, Some(-3.0)).unwrap();
        assert_eq!(fixed.exponent, -3.0);
        assert!((c3_from_prefactor(fixed.prefactor) - 2540.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_constant_and_errors() {
        let pts = [(1.0, 2.0), (2.0, 2.0), (5.0, 2.0)];
        let fit = fit_power_law(&pts, None).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
        assert!((fit.prefactor - 2.0).abs() < 1e-12);
        assert!(fit_power_law(&pts[..2], None).is_err());
        assert!(matches!(
            fit_power_law(&[(1.0, 2.0), (2.0, -1.0), (3.0, 1.0)], None),
            Err(Error::Domain(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn power_law_scale_equivariant(k in 1e-3..1e3f64, expo in -4.0..-1.0f64) {
                let pts: Vec<(f64, f64)> = [5.0, 7.0, 9.5, 13.0, 20.0].iter().map(|&r: &f64| (r, 3.0 * r.powf(expo) * (1.0 + 0.01 * r.sin()))).collect();
                let scaled: Vec<(f64, f64)> = pts.iter().map(|&(r, y)| (r, k * y)).collect();
                let a = fit_power_law(&pts, None).unwrap();
                let b = fit_power_law(&scaled, None).unwrap();
                prop_assert!((a.exponent - b.exponent).abs() < 1e-12);
                prop_assert!((b.prefactor / a.prefactor - k).abs() < 1e-9 * k);
            }

            #[test]
            fn power_law_recovers_generator(a in 0.1..1e4f64, expo in -4.0..2.0f64) {
                let pts: Vec<(f64, f64)> = [5.0, 8.0, 11.0, 15.0].iter().map(|&r: &f64| (r, a * r.powf(expo))).collect();
                let fit = fit_power_law(&pts, None).unwrap();
                prop_assert!((fit.exponent - expo).abs() < 1e-9);
                prop_assert!((fit.prefactor / a - 1.0).abs() < 1e-9);
            }

            #[test]
            fn damped_sine_recovers_generator(
                f in 2.0..20.0f64,
                gamma in 0.0..4.0f64,
                amp in 0.2..0.5f64,
                phi in -3.0..3.0f64,
            ) {
                let truth = [0.5, amp, gamma, f, phi];
                let data = series(&linspace(0.0, 1.0, 201), |t| damped_sine(t, &truth));
                let fit = fit_damped_sine(&data).unwrap();
                prop_assert!(((fit.frequency - f) / f).abs() < 1e-6, "f {} vs {}", fit.frequency, f);
                prop_assert!((fit.contrast - 2.0 * amp).abs() < 1e-6 * 2.0 * amp);
            }

            #[test]
            fn double_gaussian_recovers_generator(
                sep in 6.0..20.0f64,
                mid in -2.0..2.0f64,
                s1 in 0.8..2.0f64,
                s2 in 0.8..2.0f64,
                ratio in 0.5..1.0f64,
            ) {
                let truth = [0.8, mid - sep / 2.0, s1, 0.8 * ratio, mid + sep / 2.0, s2, 0.02];
                let data = series(&linspace(-25.0, 25.0, 201), |x| double_gaussian(x, &truth));
                let dg = fit_double_gaussian(&data).unwrap();
                prop_assert!((dg.splitting.unwrap() / sep - 1.0).abs() < 1e-6);
            }

            #[test]
            fn best_cost_never_above_initial(c in -1.0..1.0f64, slope in -1.0..1.0f64) {
                let xs = linspace(0.0, 2.0, 25);
                let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
                let data = DataSeries::from_xy(&xs, &ys).unwrap();
                let model = |x: f64, p: &[f64]| p[0] + p[1] * x + p[2] * x * x;
                let initial = [c, slope, 0.0];
                let start: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - model(*x, &initial)).powi(2)).sum();
                let fit = nlls_fit(model, &data, &initial).unwrap();
                prop_assert!(fit.cost <= start);
            }
        }
    }
}
