//! Run configuration: a line-oriented `key = value` file with `[section]`
//! headers and `#` comments.
//!
//! ```text
//! [physics]
//! c3_mhz_um3 = 2540
//! stark_exponent = 4
//!
//! [scan]
//! r_list_um = 8.1, 9, 10, 12, 15
//! ```
//!
//! Every key is optional; omitted keys take the defaults listed in
//! [`KEYS`]. Unknown keys, keys under the wrong section, malformed values and
//! values breaking a model invariant are rejected with the offending line.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::pair::{Geometry, PhysicalParams};
use crate::stochastic::{NoiseModel, RunSeed};
use crate::{Error, Result};

/// Inclusive, evenly spaced grid `min, min + step, …, max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Grid {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::Domain("grid bounds must be finite".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::Domain(format!("grid step must be positive, got {}", self.step)));
        }
        if self.max < self.min {
            return Err(Error::Domain(format!(
                "grid maximum {} below minimum {}",
                self.max, self.min
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.min + k as f64 * self.step)
            .collect()
    }
}

/// Scan grids shared by the campaigns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrids {
    /// Two-atom detuning, MHz.
    pub delta: Grid,
    /// Field, mV/cm.
    pub field: Grid,
    /// Interaction time, µs.
    pub time: Grid,
    /// Distances, µm.
    pub r_list: Vec<f64>,
}

impl Default for ScanGrids {
    fn default() -> Self {
        Self {
            delta: Grid::new(-20.0, 20.0, 0.5),
            field: Grid::new(0.0, 60.0, 2.0),
            time: Grid::new(0.0, 0.6, 0.005),
            r_list: vec![8.1, 9.0, 10.0, 12.0, 15.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub physics: PhysicalParams,
    /// Distance for single-R commands, µm.
    pub r: f64,
    /// Single-atom Rabi frequency, MHz.
    pub omega: f64,
    /// Field during the π pulses of the pump-probe sequence, mV/cm.
    pub f_prep: f64,
    /// Field switching time, µs; `0` switches instantaneously.
    pub risetime: f64,
    /// Distance of the blockade report, µm.
    pub blockade_r: f64,
    /// Off-resonant field of the blockade report, mV/cm.
    pub blockade_f_off: f64,
    pub noise: NoiseModel,
    pub scan: ScanGrids,
    pub seed: RunSeed,
    pub output_dir: PathBuf,
    /// Worker threads; `0` lets the pool decide.
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            physics: PhysicalParams::default(),
            r: 8.1,
            omega: 1.0,
            f_prep: 64.0,
            risetime: 0.0,
            blockade_r: 10.0,
            blockade_f_off: 64.0,
            noise: NoiseModel::default(),
            scan: ScanGrids::default(),
            seed: RunSeed(0),
            output_dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

/// `(section, key)` pairs in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("physics", "c3_mhz_um3"),
    ("physics", "delta0_mhz"),
    ("physics", "f_res_mv_cm"),
    ("physics", "stark_exponent"),
    ("geometry", "r_um"),
    ("drive", "omega_mhz"),
    ("drive", "f_prep_mv_cm"),
    ("drive", "risetime_us"),
    ("blockade", "r_um"),
    ("blockade", "f_off_mv_cm"),
    ("noise", "sigma_r_um"),
    ("noise", "sigma_f_mv_cm"),
    ("noise", "shots"),
    ("noise", "projective"),
    ("scan", "delta_min_mhz"),
    ("scan", "delta_max_mhz"),
    ("scan", "delta_step_mhz"),
    ("scan", "field_min_mv_cm"),
    ("scan", "field_max_mv_cm"),
    ("scan", "field_step_mv_cm"),
    ("scan", "time_min_us"),
    ("scan", "time_max_us"),
    ("scan", "time_step_us"),
    ("scan", "r_list_um"),
    ("run", "seed"),
    ("run", "output_dir"),
    ("run", "threads"),
];

/// Result of [`parse_config_with_defaults`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: Config,
    /// `section.key` for every key that was not in the file.
    pub defaults_applied: Vec<String>,
}

pub fn parse_config(text: &str) -> Result<Config> {
    parse_config_with_defaults(text).map(|p| p.config)
}

pub fn parse_config_with_defaults(text: &str) -> Result<ParsedConfig> {
    let mut cfg = Config::default();
    let mut section: Option<String> = None;
    let mut seen: BTreeSet<(&'static str, &'static str)> = BTreeSet::new();
    let mut lines_of = std::collections::HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| config_err(line_no, "unterminated section header"))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(config_err(line_no, format!("unknown section [{name}]")));
            }
            section = Some(name.to_owned());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(line_no, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        let entry = resolve_key(section.as_deref(), key)
            .ok_or_else(|| match &section {
                Some(s) => config_err(line_no, format!("unknown key `{key}` in [{s}]")),
                None => config_err(line_no, format!("unknown key `{key}`")),
            })?;
        if !seen.insert(entry) {
            return Err(config_err(
                line_no,
                format!("duplicate key `{}.{}`", entry.0, entry.1),
            ));
        }
        lines_of.insert(entry, line_no);
        apply(&mut cfg, entry, value).map_err(|msg| config_err(line_no, msg))?;
    }

    let line_for = |keys: &[(&'static str, &'static str)]| -> usize {
        keys.iter().filter_map(|k| lines_of.get(k)).copied().max().unwrap_or(0)
    };
    for (grid, name, keys) in [
        (&cfg.scan.delta, "delta", [("scan", "delta_min_mhz"), ("scan", "delta_max_mhz")]),
        (&cfg.scan.field, "field", [("scan", "field_min_mv_cm"), ("scan", "field_max_mv_cm")]),
        (&cfg.scan.time, "time", [("scan", "time_min_us"), ("scan", "time_max_us")]),
    ] {
        grid.validate()
            .map_err(|e| config_err(line_for(&keys), format!("{name} grid: {e}")))?;
    }

    let defaults_applied = KEYS
        .iter()
        .filter(|k| !seen.contains(*k))
        .map(|(s, k)| format!("{s}.{k}"))
        .collect();
    Ok(ParsedConfig {
        config: cfg,
        defaults_applied,
    })
}

fn strip_comment(line: &str) -> &str {
    // `#` inside a quoted string is kept.
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn resolve_key(section: Option<&str>, key: &str) -> Option<(&'static str, &'static str)> {
    match section {
        Some(s) => KEYS.iter().copied().find(|(ks, kk)| *ks == s && *kk == key),
        None => {
            let mut hits = KEYS.iter().copied().filter(|(_, kk)| *kk == key);
            let first = hits.next()?;
            // Ambiguous without a section (e.g. `r_um`).
            hits.next().is_none().then_some(first)
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{key}` expects a finite number, got `{value}`"))
}

fn parse_uint(key: &str, value: &str) -> Result<u64, String> {
    value
        .parse::<u64>()
        .map_err(|_| format!("`{key}` expects a non-negative integer, got `{value}`"))
}

fn positive(key: &str, v: f64) -> Result<f64, String> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{key}` must be positive, got {v}"))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64, String> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("`{key}` must be non-negative, got {v}"))
    }
}

fn apply(cfg: &mut Config, (section, key): (&str, &str), value: &str) -> Result<(), String> {
    let num = || parse_f64(key, value);
    match (section, key) {
        ("physics", "c3_mhz_um3") => cfg.physics.c3 = positive(key, num()?)?,
        ("physics", "delta0_mhz") => cfg.physics.delta0 = num()?,
        ("physics", "f_res_mv_cm") => cfg.physics.f_res = positive(key, num()?)?,
        ("physics", "stark_exponent") => {
            let p = parse_uint(key, value)?;
            if !(2..=64).contains(&p) {
                return Err(format!("`{key}` must be an integer between 2 and 64, got {p}"));
            }
            cfg.physics.stark_exponent = p as u32;
        }
        ("geometry", "r_um") => cfg.r = positive(key, num()?)?,
        ("drive", "omega_mhz") => cfg.omega = positive(key, num()?)?,
        ("drive", "f_prep_mv_cm") => cfg.f_prep = non_negative(key, num()?)?,
        ("drive", "risetime_us") => cfg.risetime = non_negative(key, num()?)?,
        ("blockade", "r_um") => cfg.blockade_r = positive(key, num()?)?,
        ("blockade", "f_off_mv_cm") => cfg.blockade_f_off = non_negative(key, num()?)?,
        ("noise", "sigma_r_um") => cfg.noise.sigma_r = non_negative(key, num()?)?,
        ("noise", "sigma_f_mv_cm") => cfg.noise.sigma_f = non_negative(key, num()?)?,
        ("noise", "shots") => {
            let n = parse_uint(key, value)?;
            if n == 0 || n > u32::MAX as u64 {
                return Err(format!("`{key}` must be between 1 and {}, got {n}", u32::MAX));
            }
            cfg.noise.shots = n as u32;
        }
        ("noise", "projective") => {
            cfg.noise.projective = match value {
                "true" => true,
                "false" => false,
                _ => return Err(format!("`{key}` expects true or false, got `{value}`")),
            }
        }
        ("scan", "delta_min_mhz") => cfg.scan.delta.min = num()?,
        ("scan", "delta_max_mhz") => cfg.scan.delta.max = num()?,
        ("scan", "delta_step_mhz") => cfg.scan.delta.step = positive(key, num()?)?,
        ("scan", "field_min_mv_cm") => cfg.scan.field.min = non_negative(key, num()?)?,
        ("scan", "field_max_mv_cm") => cfg.scan.field.max = non_negative(key, num()?)?,
        ("scan", "field_step_mv_cm") => cfg.scan.field.step = positive(key, num()?)?,
        ("scan", "time_min_us") => cfg.scan.time.min = non_negative(key, num()?)?,
        ("scan", "time_max_us") => cfg.scan.time.max = non_negative(key, num()?)?,
        ("scan", "time_step_us") => cfg.scan.time.step = positive(key, num()?)?,
        ("scan", "r_list_um") => {
            let list = value
                .split(',')
                .map(|v| parse_f64(key, v.trim()))
                .collect::<Result<Vec<f64>, String>>()?;
            let (lo, hi) = Geometry::VALID_RANGE;
            if list.is_empty() {
                return Err(format!("`{key}` must list at least one distance"));
            }
            if let Some(bad) = list.iter().find(|r| !(lo..=hi).contains(*r)) {
                return Err(format!("`{key}` entries must lie in [{lo}, {hi}] µm, got {bad}"));
            }
            cfg.scan.r_list = list;
        }
        ("run", "seed") => cfg.seed = RunSeed(parse_uint(key, value)?),
        ("run", "output_dir") => {
            let path = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            if path.is_empty() {
                return Err(format!("`{key}` must not be empty"));
            }
            cfg.output_dir = PathBuf::from(path);
        }
        ("run", "threads") => cfg.threads = parse_uint(key, value)? as usize,
        _ => unreachable!("key table and setter out of sync: {section}.{key}"),
    }
    Ok(())
}

impl Config {
    /// Renders every key; parsing the result yields an equal `Config`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for &(section, key) in KEYS {
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{key} = {}", self.value_of(section, key));
        }
        out
    }

    /// `(section.key, value)` pairs in file order.
    pub fn entries(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|&(s, k)| (format!("{s}.{k}"), self.value_of(s, k)))
            .collect()
    }

    fn value_of(&self, section: &str, key: &str) -> String {
        match (section, key) {
            ("physics", "c3_mhz_um3") => self.physics.c3.to_string(),
            ("physics", "delta0_mhz") => self.physics.delta0.to_string(),
            ("physics", "f_res_mv_cm") => self.physics.f_res.to_string(),
            ("physics", "stark_exponent") => self.physics.stark_exponent.to_string(),
            ("geometry", "r_um") => self.r.to_string(),
            ("drive", "omega_mhz") => self.omega.to_string(),
            ("drive", "f_prep_mv_cm") => self.f_prep.to_string(),
            ("drive", "risetime_us") => self.risetime.to_string(),
            ("blockade", "r_um") => self.blockade_r.to_string(),
            ("blockade", "f_off_mv_cm") => self.blockade_f_off.to_string(),
            ("noise", "sigma_r_um") => self.noise.sigma_r.to_string(),
            ("noise", "sigma_f_mv_cm") => self.noise.sigma_f.to_string(),
            ("noise", "shots") => self.noise.shots.to_string(),
            ("noise", "projective") => self.noise.projective.to_string(),
            ("scan", "delta_min_mhz") => self.scan.delta.min.to_string(),
            ("scan", "delta_max_mhz") => self.scan.delta.max.to_string(),
            ("scan", "delta_step_mhz") => self.scan.delta.step.to_string(),
            ("scan", "field_min_mv_cm") => self.scan.field.min.to_string(),
            ("scan", "field_max_mv_cm") => self.scan.field.max.to_string(),
            ("scan", "field_step_mv_cm") => self.scan.field.step.to_string(),
            ("scan", "time_min_us") => self.scan.time.min.to_string(),
            ("scan", "time_max_us") => self.scan.time.max.to_string(),
            ("scan", "time_step_us") => self.scan.time.step.to_string(),
            ("scan", "r_list_um") => self
                .scan
                .r_list
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(", "),
            ("run", "seed") => self.seed.0.to_string(),
            ("run", "output_dir") => format!("\"{}\"", self.output_dir.display()),
            ("run", "threads") => self.threads.to_string(),
            _ => unreachable!("unknown key {section}.{key}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let parsed = parse_config_with_defaults("").unwrap();
        let c = &parsed.config;
        assert_eq!(c.physics.c3, 2540.0);
        assert_eq!(c.physics.delta0, 8.5);
        assert_eq!(c.physics.f_res, 32.0);
        assert_eq!(c.physics.stark_exponent, 4);
        assert_eq!(c.omega, 1.0);
        assert_eq!(c.noise.sigma_r, 0.2);
        assert_eq!(c.noise.sigma_f, 1.0);
        assert_eq!(c.noise.shots, 100);
        assert_eq!(parsed.defaults_applied.len(), KEYS.len());
        assert_eq!(c.scan.delta.len(), 81);
        assert_eq!(c.scan.field.len(), 31);
        assert_eq!(c.scan.time.len(), 121);
    }

    #[test]
    fn negative_c3_names_field_and_line() {
        let err = parse_config("# comment\n[physics]\nc3_mhz_um3 = -1\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("c3_mhz_um3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stark_exponent_override() {
        let c = parse_config("[physics]\nstark_exponent = 2\n").unwrap();
        assert_eq!(c.physics.stark_exponent, 2);
        assert!((c.physics.forster_defect(64.0).unwrap() + 25.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(parse_config("[physics]\nfoo = 1"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("[nope]"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("[physics]\nr_um = 3"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("r_um = 3"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("shots = ten"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("shots = 1.5"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("projective = yes"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("c3_mhz_um3"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("seed = 1\nseed = 2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("r_list_um = 8.1, 30"), Err(Error::Config { .. })));
        assert!(matches!(
            parse_config("\n\ndelta_min_mhz = 5\ndelta_max_mhz = -5\n"),
            Err(Error::Config { line: 4, .. })
        ));
    }

    #[test]
    fn sectionless_unique_keys_accepted() {
        let c = parse_config("seed = 7  # trailing\nomega_mhz = 2\noutput_dir = \"a b#c\"").unwrap();
        assert_eq!(c.seed, RunSeed(7));
        assert_eq!(c.omega, 2.0);
        assert_eq!(c.output_dir, PathBuf::from("a b#c"));
    }

    #[test]
    fn round_trip() {
        let text = "[physics]\nc3_mhz_um3 = 2390.5\n[scan]\nr_list_um = 8.1, 9.3\ntime_step_us = 0.0025\n[noise]\nprojective = false\n[run]\nseed = 99\noutput_dir = \"results/x\"\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_text()).unwrap();
        assert_eq!(c, again);
        assert!(parse_config_with_defaults(&c.to_text()).unwrap().defaults_applied.is_empty());
    }

    #[test]
    fn grid_points() {
        assert_eq!(Grid::new(0.0, 1.0, 0.25).points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Grid::new(0.0, 0.6, 0.005).len(), 121);
        assert!(Grid::new(0.0, 1.0, 0.0).validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn serialized_config_reparses_equal(
                c3 in 100.0..5000.0f64,
                delta0 in -20.0..20.0f64,
                p in 2u32..8,
                omega in 0.1..5.0f64,
                shots in 1u32..10_000,
                seed in any::<u64>(),
                rs in prop::collection::vec(5.0..20.0f64, 1..6),
            ) {
                let mut c = Config::default();
                c.physics = PhysicalParams { c3, delta0, f_res: 32.0, stark_exponent: p };
                c.omega = omega;
                c.noise.shots = shots;
                c.seed = RunSeed(seed);
                c.scan.r_list = rs;
                prop_assert_eq!(parse_config(&c.to_text()).unwrap(), c);
            }
        }
    }
}
