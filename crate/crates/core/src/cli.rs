//! `forster` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{
    fit_damped_sine, fit_double_gaussian, fit_power_law, DoubleGaussianFit, DAMPED_SINE_PARAMS,
    DOUBLE_GAUSSIAN_PARAMS, POWER_LAW_PARAMS, SINGLE_GAUSSIAN_PARAMS,
};
use crate::config::{parse_config_with_defaults, Config, ParsedConfig, KEYS};
use crate::experiments::{
    blockade_report, most_symmetric_field, oscillation_vs_distance, spectroscopy_map, spectrum_scan,
    splitting_vs_distance, stark_table, trace_series, ScanSpec,
};
use crate::output::{ensure_dir, format_float, CsvTable, RunManifest};
use crate::stochastic::{monte_carlo_trace_ramped, RunSeed, TracePoint};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "forster",
    version,
    about = "Rydberg pair interaction at a Förster resonance: spectra, oscillations, fits"
)]
pub struct Cli {
    /// Config file, or `default` for built-in values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<String>,
    /// Master seed; overrides `[run] seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory; overrides `[run] output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Disable shot noise and projective sampling.
    #[arg(long, global = true)]
    pub no_noise: bool,
    /// Worker threads (0 = all cores); overrides `[run] threads`.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Förster defect and pair eigenenergies along the field grid.
    Stark {
        #[arg(long, value_name = "UM")]
        r: Option<f64>,
    },
    /// Populations along the detuning grid at one field.
    Spectrum {
        /// mV/cm; defaults to the resonance field.
        #[arg(long, value_name = "MV_CM")]
        field: Option<f64>,
        #[arg(long, value_name = "UM")]
        r: Option<f64>,
    },
    /// P_rr over the field and detuning grids.
    Map {
        #[arg(long, value_name = "UM")]
        r: Option<f64>,
    },
    /// Pump-probe P_gg against interaction time.
    Oscillate {
        #[arg(long, value_name = "UM")]
        r: Option<f64>,
    },
    /// Splitting or oscillation frequency against distance, with a power-law fit.
    ScanR {
        #[arg(long, value_enum)]
        mode: ScanMode,
    },
    /// Interaction shift and blockade radius on and off resonance.
    Blockade {
        #[arg(long, value_name = "UM")]
        r: Option<f64>,
        #[arg(long, value_name = "MV_CM")]
        f_off: Option<f64>,
        #[arg(long, value_name = "MHZ")]
        omega: Option<f64>,
    },
    /// Fit a model to the first two columns of a CSV file.
    Fit {
        #[arg(value_enum)]
        model: FitModel,
        csv: PathBuf,
        /// Power law only: hold the exponent fixed.
        #[arg(long, value_name = "K", allow_negative_numbers = true)]
        fix_exponent: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanMode {
    Spectroscopy,
    Oscillation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    DoubleGaussian,
    DampedSine,
    PowerLaw,
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Command::Fit {
        model,
        csv,
        fix_exponent,
    } = &cli.command
    {
        return run_fit(*model, csv, *fix_exponent);
    }

    let mut parsed = load_config(cli.config.as_deref())?;
    let cfg = &mut parsed.config;
    if let Some(seed) = cli.seed {
        cfg.seed = RunSeed(seed);
        parsed.defaults_applied.retain(|k| k != "run.seed");
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
        parsed.defaults_applied.retain(|k| k != "run.output_dir");
    }
    // Thread count never reaches the outputs, which are identical for any value.
    let threads = cli.threads.unwrap_or(cfg.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| run_campaign(cli, &parsed))
}

fn load_config(arg: Option<&str>) -> Result<ParsedConfig> {
    match arg {
        None | Some("default") => parse_config_with_defaults(""),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_config_with_defaults(&text)
        }
    }
}

/// Files written by one campaign plus the lines echoed on stdout.
struct Outcome {
    files: Vec<String>,
    summary: Vec<(String, String)>,
}

fn run_campaign(cli: &Cli, parsed: &ParsedConfig) -> Result<()> {
    let cfg = &parsed.config;
    let started = unix_now();
    let dir = ensure_dir(&cfg.output_dir)?;
    let spec = ScanSpec::from_config(cfg, !cli.no_noise);
    spec.validate()?;
    let params = &cfg.physics;

    let (name, outcome) = match &cli.command {
        Command::Stark { r } => ("stark", stark(&dir, cfg, &spec, r.unwrap_or(cfg.r))?),
        Command::Spectrum { field, r } => {
            let field = match field {
                Some(f) => *f,
                None => params.find_resonance_field()?,
            };
            ("spectrum", spectrum(&dir, cfg, &spec, field, r.unwrap_or(cfg.r))?)
        }
        Command::Map { r } => ("map", map(&dir, cfg, &spec, r.unwrap_or(cfg.r))?),
        Command::Oscillate { r } => ("oscillate", oscillate(&dir, cfg, &spec, r.unwrap_or(cfg.r))?),
        Command::ScanR { mode } => ("scan-r", scan_r(&dir, cfg, &spec, *mode)?),
        Command::Blockade { r, f_off, omega } => (
            "blockade",
            blockade(
                &dir,
                cfg,
                r.unwrap_or(cfg.blockade_r),
                f_off.unwrap_or(cfg.blockade_f_off),
                omega.unwrap_or(cfg.omega),
            )?,
        ),
        Command::Fit { .. } => unreachable!("handled before configuration"),
    };

    fs::write(dir.join("config.txt"), cfg.to_text()).map_err(|e| Error::io(dir.join("config.txt"), e))?;
    let mut manifest = RunManifest::default();
    manifest.set("tool", "forster");
    manifest.set("version", env!("CARGO_PKG_VERSION"));
    manifest.set("command", name);
    manifest.set("seed", cfg.seed.0);
    manifest.set("noise", if cli.no_noise { "off" } else { "on" });
    manifest.set("config", "config.txt");
    for (key, value) in cfg.entries() {
        if parsed.defaults_applied.contains(&key) {
            manifest.set(format!("default.{key}"), value);
        }
    }
    manifest.set("started_unix", started);
    manifest.set("finished_unix", unix_now());
    for file in outcome.files.iter().map(String::as_str).chain(["config.txt"]) {
        manifest.add_file(&dir, file)?;
    }
    manifest.write(&dir.join("manifest.txt"))?;

    print_record(&outcome.summary);
    println!("manifest = {}", dir.join("manifest.txt").display());
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn print_record(lines: &[(String, String)]) {
    for (k, v) in lines {
        println!("{k} = {v}");
    }
}

fn kv(key: &str, value: f64) -> (String, String) {
    (key.to_owned(), format_float(value))
}

fn write(dir: &Path, name: &str, table: &CsvTable) -> Result<String> {
    table.write(&dir.join(name))?;
    Ok(name.to_owned())
}

fn stark(dir: &Path, cfg: &Config, spec: &ScanSpec, r: f64) -> Result<Outcome> {
    let rows = stark_table(&spec.fields, r, &cfg.physics)?;
    let mut table = CsvTable::new(&[
        "F(mV/cm)",
        "Delta(MHz)",
        "E_minus(MHz)",
        "E_plus(MHz)",
        "DeltaE(MHz)",
        "theta(rad)",
    ]);
    for row in &rows {
        table.push(vec![
            row.field,
            row.defect,
            row.eig.eigenvalues[0],
            row.eig.eigenvalues[1],
            row.eig.splitting,
            row.eig.mixing_angle,
        ]);
    }
    let min = rows
        .iter()
        .min_by(|a, b| a.eig.splitting.total_cmp(&b.eig.splitting))
        .expect("field grid validated as non-empty");
    Ok(Outcome {
        files: vec![write(dir, "stark.csv", &table)?],
        summary: vec![
            kv("r_um", r),
            kv("resonance_field_mv_cm", cfg.physics.find_resonance_field()?),
            kv("min_splitting_mhz", min.eig.splitting),
            kv("min_splitting_field_mv_cm", min.field),
        ],
    })
}

fn spectrum(dir: &Path, cfg: &Config, spec: &ScanSpec, field: f64, r: f64) -> Result<Outcome> {
    let rows = spectrum_scan(spec, field, r, &cfg.physics)?;
    let mut table = CsvTable::new(&["delta(MHz)", "P_gg", "P_gr_rg", "P_rr"]);
    for (&delta, p) in spec.deltas.iter().zip(&rows) {
        table.push(vec![delta, p[0], p[1], p[2]]);
    }
    let mut summary = vec![kv("field_mv_cm", field), kv("r_um", r)];
    let p_rr: Vec<f64> = rows.iter().map(|p| p[2]).collect();
    match crate::analysis::DataSeries::from_xy(&spec.deltas, &p_rr).and_then(|s| fit_double_gaussian(&s)) {
        Ok(fit) => summary.extend(peak_summary(&fit)),
        Err(e) => summary.push(("fit".into(), format!("failed: {e}"))),
    }
    Ok(Outcome {
        files: vec![write(dir, "spectrum.csv", &table)?],
        summary,
    })
}

fn peak_summary(fit: &DoubleGaussianFit) -> Vec<(String, String)> {
    let mut out = vec![("resolved".to_owned(), fit.is_resolved().to_string())];
    if let Some(s) = fit.splitting {
        out.push(kv("splitting_mhz", s));
    }
    for (k, c) in fit.centers.iter().enumerate() {
        out.push(kv(&format!("center{}_mhz", k + 1), *c));
    }
    out
}

fn map(dir: &Path, cfg: &Config, spec: &ScanSpec, r: f64) -> Result<Outcome> {
    let map = spectroscopy_map(spec, r, &cfg.physics)?;
    let table = CsvTable::from_grid(["F(mV/cm)", "delta(MHz)", "P_rr"], &map.fields, &map.deltas, &map.p_rr);
    let mut summary = vec![
        kv("r_um", r),
        ("rows".into(), table.rows.len().to_string()),
    ];
    if let Some(f) = most_symmetric_field(&map) {
        summary.push(kv("most_symmetric_field_mv_cm", f));
    }
    Ok(Outcome {
        files: vec![write(dir, "map.csv", &table)?],
        summary,
    })
}

fn trace_table(trace: &[TracePoint]) -> CsvTable {
    let mut table = CsvTable::new(&["T(us)", "P_gg", "std_err"]);
    for p in trace {
        table.push(vec![p.time, p.mean, p.std_err]);
    }
    table
}

fn oscillate(dir: &Path, cfg: &Config, spec: &ScanSpec, r: f64) -> Result<Outcome> {
    let trace = monte_carlo_trace_ramped(
        &spec.times,
        r,
        &cfg.physics,
        spec.omega,
        spec.f_prep,
        spec.risetime,
        &spec.noise,
        spec.seed,
    )?;
    let mut summary = vec![kv("r_um", r)];
    match trace_series(&trace).and_then(|s| fit_damped_sine(&s)) {
        Ok(fit) => {
            summary.push(kv("f_osc_mhz", fit.frequency));
            summary.push(kv("damping_time_us", fit.damping_time));
            summary.push(kv("contrast", fit.contrast));
        }
        Err(e) => summary.push(("fit".into(), format!("failed: {e}"))),
    }
    Ok(Outcome {
        files: vec![write(dir, "trace.csv", &trace_table(&trace))?],
        summary,
    })
}

fn scan_r(dir: &Path, cfg: &Config, spec: &ScanSpec, mode: ScanMode) -> Result<Outcome> {
    let mut files = Vec::new();
    let (table_name, power_law, excluded) = match mode {
        ScanMode::Spectroscopy => {
            let scan = splitting_vs_distance(spec, &cfg.physics)?;
            let mut table = CsvTable::new(&["R(um)", "DeltaE(MHz)"]);
            let mut raw: Vec<(f64, &crate::analysis::DataSeries)> = Vec::new();
            for p in &scan.points {
                table.push(vec![p.r, p.splitting]);
                raw.push((p.r, &p.spectrum));
            }
            raw.extend(scan.excluded_spectra.iter().map(|(r, s)| (*r, s)));
            raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (r, series) in raw {
                let name = format!("spectrum_r{}.csv", format_float(r));
                files.push(write(dir, &name, &CsvTable::from_series(series))?);
            }
            files.push(write(dir, "scan_r_spectroscopy.csv", &table)?);
            ("scan_r_spectroscopy", scan.power_law, scan.excluded)
        }
        ScanMode::Oscillation => {
            let scan = oscillation_vs_distance(spec, &cfg.physics)?;
            let mut table = CsvTable::new(&["R(um)", "f_osc(MHz)"]);
            let mut raw: Vec<(f64, &[TracePoint])> = Vec::new();
            for p in &scan.points {
                table.push(vec![p.r, p.f_osc]);
                raw.push((p.r, &p.trace));
            }
            raw.extend(scan.excluded_traces.iter().map(|(r, t)| (*r, t.as_slice())));
            raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (r, trace) in raw {
                let name = format!("trace_r{}.csv", format_float(r));
                files.push(write(dir, &name, &trace_table(trace))?);
            }
            files.push(write(dir, "scan_r_oscillation.csv", &table)?);
            ("scan_r_oscillation", scan.power_law, scan.excluded)
        }
    };

    let mut record = vec![
        kv("exponent", power_law.exponent),
        kv("exponent_err", power_law.exponent_err),
        kv("c3_mhz_um3", power_law.c3),
        kv("c3_err_mhz_um3", power_law.c3_err),
    ];
    for e in &excluded {
        record.push((format!("excluded.r{}", format_float(e.r)), e.reason.clone()));
    }
    let mut text = String::new();
    let mut written: Vec<&str> = Vec::new();
    let diagnostics = power_law.fit.to_record(&POWER_LAW_PARAMS);
    for (k, v) in record.iter().chain(&diagnostics) {
        if !written.contains(&k.as_str()) {
            written.push(k);
            text.push_str(&format!("{k} = {v}\n"));
        }
    }
    let fit_name = format!("{table_name}_fit.txt");
    fs::write(dir.join(&fit_name), text).map_err(|e| Error::io(dir.join(&fit_name), e))?;
    files.push(fit_name);
    Ok(Outcome { files, summary: record })
}

fn blockade(dir: &Path, cfg: &Config, r: f64, f_off: f64, omega: f64) -> Result<Outcome> {
    let b = blockade_report(r, f_off, &cfg.physics, omega)?;
    let summary = vec![
        kv("r_um", r),
        kv("f_off_mv_cm", f_off),
        kv("omega_mhz", omega),
        kv("u_off_mhz", b.u_off),
        kv("u_on_mhz", b.u_on),
        kv("enhancement", b.enhancement),
        kv("blockade_radius_resonant_um", b.radius_resonant),
        kv("blockade_radius_vdw_um", b.radius_vdw),
        kv("radius_ratio", b.radius_ratio),
    ];
    let text: String = summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(dir.join("blockade.txt"), text).map_err(|e| Error::io(dir.join("blockade.txt"), e))?;
    Ok(Outcome {
        files: vec!["blockade.txt".into()],
        summary,
    })
}

fn run_fit(model: FitModel, path: &Path, fix_exponent: Option<f64>) -> Result<()> {
    if fix_exponent.is_some() && model != FitModel::PowerLaw {
        return Err(Error::Domain("--fix-exponent applies to the power-law model only".into()));
    }
    let series = CsvTable::read(path)?.to_series()?;
    let mut record = Vec::new();
    match model {
        FitModel::DoubleGaussian => {
            let fit = fit_double_gaussian(&series)?;
            record.push(("model".to_owned(), "double-gaussian".to_owned()));
            record.extend(peak_summary(&fit));
            let names: &[&str] = if fit.is_resolved() {
                &DOUBLE_GAUSSIAN_PARAMS
            } else {
                &SINGLE_GAUSSIAN_PARAMS
            };
            record.extend(fit.fit.to_record(names));
        }
        FitModel::DampedSine => {
            let fit = fit_damped_sine(&series)?;
            record.push(("model".to_owned(), "damped-sine".to_owned()));
            record.push(kv("f_osc_mhz", fit.frequency));
            record.push(kv("damping_time_us", fit.damping_time));
            record.push(kv("contrast", fit.contrast));
            record.extend(fit.fit.to_record(&DAMPED_SINE_PARAMS));
        }
        FitModel::PowerLaw => {
            let pairs: Vec<(f64, f64)> = series.points().iter().map(|p| (p.x, p.y)).collect();
            let fit = fit_power_law(&pairs, fix_exponent)?;
            record.push(("model".to_owned(), "power-law".to_owned()));
            record.push(kv("exponent", fit.exponent));
            record.push(kv("exponent_err", fit.exponent_err));
            record.push(kv("prefactor", fit.prefactor));
            record.push(kv("c3_mhz_um3", fit.c3));
            record.push(kv("c3_err_mhz_um3", fit.c3_err));
            for (k, v) in fit.fit.to_record(&POWER_LAW_PARAMS) {
                if !record.iter().any(|(seen, _)| *seen == k) {
                    record.push((k, v));
                }
            }
        }
    }
    print_record(&record);
    Ok(())
}

/// Every `section.key` the config format accepts.
pub fn config_keys() -> Vec<String> {
    KEYS.iter().map(|(s, k)| format!("{s}.{k}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["forster", "frobnicate"]), 1);
        assert_eq!(run(["forster"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["forster", "--help"]), 0);
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["forster", "map", "--seed", "7", "--no-noise", "--threads", "2"]).unwrap();
        assert_eq!(cli.seed, Some(7));
        assert!(cli.no_noise);
        assert_eq!(cli.threads, Some(2));
    }

    #[test]
    fn scan_r_requires_mode() {
        assert!(Cli::try_parse_from(["forster", "scan-r"]).is_err());
        let cli = Cli::try_parse_from(["forster", "scan-r", "--mode", "oscillation"]).unwrap();
        assert!(matches!(cli.command, Command::ScanR { mode: ScanMode::Oscillation }));
    }

    #[test]
    fn default_literal_loads_builtin_config() {
        let parsed = load_config(Some("default")).unwrap();
        assert_eq!(parsed.config, Config::default());
        assert_eq!(parsed.defaults_applied.len(), config_keys().len());
    }

    #[test]
    fn fix_exponent_only_for_power_law() {
        let err = run_fit(FitModel::DampedSine, Path::new("x.csv"), Some(-3.0)).unwrap_err();
        assert!(err.is_validation());
    }
}
