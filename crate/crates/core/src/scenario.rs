//! Scenario files: `key = value` lines, `#` or `;` comments, no sections.
//!
//! Times in `t_stops`, `gh_times` and `fit_window` are fractions of the
//! singular time `T`, so one file works for any class.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use crate::calabi::{Grid, Profile, DEFAULT_GRID_N};
use crate::estimates::{SplitBundleData, DEFAULT_BASE_SAMPLES, DEFAULT_FIBER_SAMPLES};
use crate::flow::{default_schedule, Flow, FlowConfig, Stepper};
use crate::geometry::{BundleGeometry, KahlerClassPath};
use crate::metricspace::{DEFAULT_RESOLUTION, MIN_RESOLUTION};
use crate::{Error, Result};

pub const PRESETS: [&str; 3] = ["product", "hirzebruch1", "hirzebruch2"];

/// Snapshot times of the GH schedule, as fractions of `T`.
pub const DEFAULT_GH_TIMES: [f64; 4] = [0.5, 0.8, 0.95, 0.99];

const KEYS: [&str; 19] = [
    "name",
    "k",
    "f0",
    "c0",
    "s0_split",
    "grid_n",
    "t_stops",
    "delta",
    "cfl",
    "stepper",
    "step_fraction",
    "section",
    "monitor_base",
    "monitor_fiber",
    "fit_window",
    "gh_times",
    "gh_resolution",
    "seed",
    "out",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub k: u32,
    /// Initial fiber period.
    pub f0: f64,
    /// Initial zero-section period.
    pub c0: f64,
    /// Share of `c0` carried by the momentum offset rather than the base
    /// coefficient: `s₀ = (1 − s0_split)·c0` and `k·a₀ = s0_split·c0`
    /// (`a₀ = s0_split·c0` when `k = 0`, where it is a pure gauge shift).
    pub s0_split: f64,
    pub grid_n: usize,
    /// Snapshot times as fractions of `T`; empty selects the default
    /// schedule.
    pub t_stops: Vec<f64>,
    pub delta: f64,
    pub cfl: f64,
    pub stepper: Stepper,
    pub step_fraction: f64,
    /// Real coefficients of the section `p`, constant term first; empty
    /// selects `z^k + 1`.
    pub section: Vec<f64>,
    /// Base grid size `M` of the singular-metric comparison.
    pub monitor_base: usize,
    pub monitor_fiber: usize,
    pub fit_window: (f64, f64),
    pub gh_times: Vec<f64>,
    pub gh_resolution: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Scenario {
    /// Scenario with every optional key at its default.
    pub fn new(name: &str, k: u32, f0: f64, c0: f64) -> Self {
        Scenario {
            name: name.to_string(),
            k,
            f0,
            c0,
            s0_split: 0.0,
            grid_n: DEFAULT_GRID_N,
            t_stops: Vec::new(),
            delta: 1e-3,
            cfl: 0.8,
            stepper: Stepper::Rosenbrock,
            step_fraction: 1e-3,
            section: Vec::new(),
            monitor_base: DEFAULT_BASE_SAMPLES,
            monitor_fiber: DEFAULT_FIBER_SAMPLES,
            fit_window: (0.9, 0.999),
            gh_times: DEFAULT_GH_TIMES.to_vec(),
            gh_resolution: DEFAULT_RESOLUTION,
            seed: 0,
            out: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let s = match name {
            "product" => Scenario::new(name, 0, 2.0, 6.0),
            "hirzebruch1" => Scenario::new(name, 1, 2.0, 6.0),
            "hirzebruch2" => Scenario::new(name, 2, 1.0, 3.0),
            other => {
                return Err(Error::Validation(format!(
                    "unknown preset {other:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn geometry(&self) -> BundleGeometry {
        BundleGeometry::new(self.k)
    }

    pub fn class_path(&self) -> KahlerClassPath {
        KahlerClassPath::new(self.f0, self.c0)
    }

    pub fn singular_time(&self) -> f64 {
        self.class_path().singular_time(&self.geometry()).t
    }

    pub fn initial_profile(&self) -> Result<Profile> {
        let kf = self.geometry().kf().max(1.0);
        let a = self.s0_split * self.c0 / kf;
        let b = a + self.f0;
        let s = (1.0 - self.s0_split) * self.c0;
        Profile::fs_model(Grid::new(self.grid_n)?, a, b, s)
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        FlowConfig::new(self.stepper, self.cfl, self.step_fraction, self.delta)
    }

    pub fn flow(&self) -> Result<Flow> {
        Flow::new(self.geometry(), self.initial_profile()?, self.flow_config()?)
    }

    pub fn split_data(&self) -> Result<SplitBundleData> {
        if self.section.is_empty() {
            return Ok(SplitBundleData::default_for(self.k));
        }
        let coeffs = self.section.iter().map(|&c| Complex64::new(c, 0.0)).collect();
        SplitBundleData::new(self.k, coeffs)
    }

    /// Every snapshot fraction the run needs: `0`, the stops (or the
    /// default schedule), the GH times and the final time `1 − delta`.
    pub fn snapshot_fractions(&self) -> Vec<f64> {
        let mut out = if self.t_stops.is_empty() {
            default_schedule(self.delta, &self.gh_times)
        } else {
            let mut v = self.t_stops.clone();
            v.extend_from_slice(&self.gh_times);
            v
        };
        out.push(0.0);
        if !self.gh_times.is_empty() {
            out.push(1.0 - self.delta);
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        out
    }

    /// Checks every value against the preconditions of the modules it
    /// feeds, before any run starts.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return fail(format!("name {:?} must be non-empty without path separators", self.name));
        }
        if !(self.f0.is_finite() && self.f0 > 0.0) {
            return fail(format!("f0 = {} must be positive (T = f0/2 = 0 otherwise)", self.f0));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return fail(format!("c0 = {} must be positive for a Kähler class", self.c0));
        }
        let geom = self.geometry();
        let path = self.class_path();
        if !path.initial().is_kahler() {
            return fail("the initial class is not Kähler".into());
        }
        if !path.is_base_collapse(&geom) {
            return fail(format!(
                "the class (f0 = {}, c0 = {}) reaches the section before the fiber collapses",
                self.f0, self.c0
            ));
        }
        if !(0.0..1.0).contains(&self.s0_split) {
            return fail(format!("s0_split = {} must lie in [0, 1)", self.s0_split));
        }
        if self.grid_n < 16 {
            return fail(format!("grid_n = {} must be at least 16", self.grid_n));
        }
        self.flow_config()?;
        let last = 1.0 - self.delta;
        let in_window = |f: &f64| (0.0..=last + 1e-12).contains(f);
        if let Some(bad) = self.t_stops.iter().find(|f| !in_window(f)) {
            return fail(format!("t_stops entry {bad} lies outside [0, 1 − delta]"));
        }
        if let Some(bad) = self.gh_times.iter().find(|f| !in_window(f) || **f <= 0.0) {
            return fail(format!("gh_times entry {bad} lies outside (0, 1 − delta]"));
        }
        if !self.gh_times.windows(2).all(|w| w[0] < w[1]) {
            return fail("gh_times must increase".into());
        }
        if !self.gh_times.is_empty() && self.gh_times.len() < 2 {
            return fail("gh_times needs at least two entries (the final time adds a third)".into());
        }
        if self.gh_resolution < MIN_RESOLUTION {
            return fail(format!("gh_resolution must be at least {MIN_RESOLUTION}"));
        }
        if self.k > 2 && !self.gh_times.is_empty() {
            return fail("graph geodesics support k ≤ 2; set gh_times empty".into());
        }
        if self.monitor_base < 2 || self.monitor_base % 2 != 0 {
            return fail(format!("monitor_base = {} must be even and positive", self.monitor_base));
        }
        if self.monitor_fiber < 2 {
            return fail("monitor_fiber must be at least 2".into());
        }
        let (lo, hi) = self.fit_window;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return fail(format!("fit_window ({lo}, {hi}) must satisfy 0 < lo < hi < 1"));
        }
        self.split_data()?;
        Ok(())
    }

    /// Scenario file with every key spelled out.
    pub fn to_ini(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "f0 = {}", self.f0);
        let _ = writeln!(s, "c0 = {}", self.c0);
        let _ = writeln!(s, "s0_split = {}", self.s0_split);
        let _ = writeln!(s, "grid_n = {}", self.grid_n);
        let _ = writeln!(s, "t_stops = {}", list(&self.t_stops));
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "cfl = {}", self.cfl);
        let stepper = match self.stepper {
            Stepper::Rosenbrock => "rosenbrock",
            Stepper::Rk4 => "rk4",
        };
        let _ = writeln!(s, "stepper = {stepper}");
        let _ = writeln!(s, "step_fraction = {}", self.step_fraction);
        let _ = writeln!(s, "section = {}", list(&self.section));
        let _ = writeln!(s, "monitor_base = {}", self.monitor_base);
        let _ = writeln!(s, "monitor_fiber = {}", self.monitor_fiber);
        let _ = writeln!(s, "fit_window = {}, {}", self.fit_window.0, self.fit_window.1);
        let _ = writeln!(s, "gh_times = {}", list(&self.gh_times));
        let _ = writeln!(s, "gh_resolution = {}", self.gh_resolution);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        s
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot read {key} = {raw:?}"),
    })
}

fn parse_list(line: usize, key: &str, raw: &str) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|item| parse_value(line, key, item.trim()))
        .collect()
}

impl FromStr for Scenario {
    type Err = Error;

    /// Parses and validates a scenario file.
    fn from_str(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') || body.starts_with(';') {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected key = value, got {body:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key {key:?}"),
                });
            }
            if let Some((first, _, _)) = entries.iter().find(|(_, k, _)| *k == key) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key {key:?} (first set on line {first})"),
                });
            }
            entries.push((line, key, value));
        }
        let get = |key: &str| entries.iter().find(|(_, k, _)| *k == key).map(|&(l, _, v)| (l, v));
        let require = |key: &str| {
            get(key).ok_or_else(|| Error::Validation(format!("missing required key {key}")))
        };
        let (l, v) = require("k")?;
        let k: u32 = parse_value(l, "k", v)?;
        let (l, v) = require("f0")?;
        let f0: f64 = parse_value(l, "f0", v)?;
        let (l, v) = require("c0")?;
        let c0: f64 = parse_value(l, "c0", v)?;
        let name = get("name").map_or("scenario", |(_, v)| v);
        let mut s = Scenario::new(name, k, f0, c0);
        for &(line, key, value) in &entries {
            match key {
                "s0_split" => s.s0_split = parse_value(line, key, value)?,
                "grid_n" => s.grid_n = parse_value(line, key, value)?,
                "t_stops" => s.t_stops = parse_list(line, key, value)?,
                "delta" => s.delta = parse_value(line, key, value)?,
                "cfl" => s.cfl = parse_value(line, key, value)?,
                "stepper" => {
                    s.stepper = value.parse().map_err(|message| Error::Parse { line, message })?
                }
                "step_fraction" => s.step_fraction = parse_value(line, key, value)?,
                "section" => s.section = parse_list(line, key, value)?,
                "monitor_base" => s.monitor_base = parse_value(line, key, value)?,
                "monitor_fiber" => s.monitor_fiber = parse_value(line, key, value)?,
                "fit_window" => {
                    let w = parse_list(line, key, value)?;
                    if w.len() != 2 {
                        return Err(Error::Parse {
                            line,
                            message: "fit_window takes two fractions".into(),
                        });
                    }
                    s.fit_window = (w[0], w[1]);
                }
                "gh_times" => s.gh_times = parse_list(line, key, value)?,
                "gh_resolution" => s.gh_resolution = parse_value(line, key, value)?,
                "seed" => s.seed = parse_value(line, key, value)?,
                "out" => s.out = Some(PathBuf::from(value)),
                _ => {}
            }
        }
        s.t_stops.sort_by(f64::total_cmp);
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let s: Scenario = "k = 0\nf0 = 2\nc0 = 6\n".parse().unwrap();
        assert_eq!(s.singular_time(), 1.0);
        assert_eq!(s.grid_n, DEFAULT_GRID_N);
        assert_eq!(s.delta, 1e-3);
        assert_eq!(s.gh_times, DEFAULT_GH_TIMES.to_vec());
        assert_eq!(s.stepper, Stepper::Rosenbrock);
    }

    #[test]
    fn zero_fiber_period_is_rejected() {
        let err = "k = 0\nf0 = 0\nc0 = 6\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("f0")), "{err}");
    }

    #[test]
    fn duplicate_key_names_the_line() {
        let err = "k = 0\nf0 = 2\n# note\nf0 = 3\nc0 = 6\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn unknown_key_and_bad_values() {
        let err = "k = 0\nf0 = 2\nc0 = 6\ncolour = red\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
        let err = "k = one\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = "k = 0\nf0 = 2\nc0 = 6\nstepper = euler\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
        let err = "k 0\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = "f0 = 2\nc0 = 6\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn class_must_collapse_the_fiber() {
        // with k = 1 the section period c0 − t vanishes before f0 − 2t
        let err = "k = 1\nf0 = 8\nc0 = 1\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn presets_round_trip_through_ini() {
        for name in PRESETS {
            let s = Scenario::preset(name).unwrap();
            let back: Scenario = s.to_ini().parse().unwrap();
            assert_eq!(back, s);
        }
        assert!(Scenario::preset("f3").is_err());
    }

    #[test]
    fn split_shifts_the_momentum_interval() {
        let mut s = Scenario::preset("hirzebruch1").unwrap();
        s.s0_split = 0.25;
        s.grid_n = 64;
        let p = s.initial_profile().unwrap();
        assert!((p.a() - 1.5).abs() < 1e-15 && (p.b() - 3.5).abs() < 1e-15);
        assert!((p.s() - 4.5).abs() < 1e-15);
        let class = p.class(&s.geometry());
        assert!((class.fiber - 2.0).abs() < 1e-12 && (class.section - 6.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_contains_gh_times_and_end() {
        let s = Scenario::preset("product").unwrap();
        let f = s.snapshot_fractions();
        assert_eq!(f[0], 0.0);
        assert_eq!(*f.last().unwrap(), 0.999);
        for g in DEFAULT_GH_TIMES {
            assert!(f.iter().any(|x| (x - g).abs() < 1e-12));
        }
    }
}
