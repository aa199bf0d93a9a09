//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cmaxreg::optimizer::{default_budget, default_lambda};
use cmaxreg::{CameraGeometry, ObjectiveKind, RegularizerConfig, RegularizerKind, WarpKind};

use crate::error::CliError;

/// Every accepted key with its default; an empty default means unset.
const KEYS: &[(&str, &str)] = &[
    ("input", ""),
    ("output", "out"),
    ("ground_truth", ""),
    ("omega_reference", ""),
    ("width", ""),
    ("height", ""),
    ("fx", ""),
    ("fy", ""),
    ("cx", ""),
    ("cy", ""),
    ("model", "zoom"),
    ("objective", "variance"),
    ("use_polarity", "false"),
    ("regularizer", "geometric"),
    ("lambda", ""),
    ("tau", "0.2"),
    ("alpha", "1.0"),
    ("trim", "0.01"),
    ("stride", "1"),
    ("window_events", ""),
    ("window_duration", ""),
    ("bounds", ""),
    ("budget", ""),
    ("seed", "0"),
    ("threads", "0"),
    ("images", "true"),
    ("theta", ""),
    ("sweep_axis", "0"),
    ("sweep_grid", "300"),
    ("sweep_base", ""),
    ("sweep_window", "0"),
    ("bench_events", "30000"),
    ("bench_trials", "400"),
    ("bench_warmup", "10"),
    ("synth_motion", "warp"),
    ("looming_rate", "2.0"),
    ("synth_points", "2000"),
    ("synth_events_per_point", "15"),
    ("synth_noise", "0.5"),
    ("synth_windows", "1"),
    ("synth_duration", "1.0"),
];

/// Default number of events per window.
pub const DEFAULT_WINDOW_EVENTS: usize = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Estimate,
    Sweep,
    Bench,
    Synth,
    Ttc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Sweep => "sweep",
            Command::Bench => "bench",
            Command::Synth => "synth",
            Command::Ttc => "ttc",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [Command::Estimate, Command::Sweep, Command::Bench, Command::Synth, Command::Ttc]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown command '{s}'")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slicing {
    Events(usize),
    Duration(f64),
}

/// Raw key-value pairs; unknown keys are rejected on insertion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            // The manifest records the command; it is chosen on the command line.
            if k.trim() == "command" {
                continue;
            }
            map.set(k.trim(), v.trim())?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Config(format!("unknown config key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{spec}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d))
            .unwrap_or("")
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("invalid value '{raw}' for '{key}'")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.opt(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(None);
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("invalid number '{s}' in '{key}'")))
            })
            .collect::<Result<_, _>>()
            .map(Some)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }
}

fn parse_enum<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Config(format!("invalid value '{raw}' for '{key}'")))
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub axis: usize,
    pub grid: usize,
    pub base: Option<Vec<f64>>,
    pub window: usize,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub events: Vec<usize>,
    pub trials: usize,
    pub warmup: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMotion {
    Warp,
    Looming,
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub motion: SynthMotion,
    pub looming_rate: f64,
    pub points: usize,
    pub events_per_point: usize,
    pub noise: f64,
    pub windows: usize,
    pub duration: f64,
}

/// Fully resolved configuration for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub omega_reference: Option<PathBuf>,
    pub geometry: CameraGeometry,
    pub model: WarpKind,
    pub objective: ObjectiveKind,
    pub regularizer: RegularizerConfig,
    pub lambda: f64,
    pub slicing: Slicing,
    pub bounds: Option<Vec<[f64; 2]>>,
    pub budget: usize,
    pub seed: u64,
    pub threads: usize,
    pub images: bool,
    pub theta: Option<Vec<f64>>,
    pub sweep: SweepOptions,
    pub bench: BenchOptions,
    pub synth: SynthOptions,
    map: ConfigMap,
}

impl RunConfig {
    pub fn resolve(command: Command, map: ConfigMap) -> Result<Self, CliError> {
        let width: usize = map.get("width")?;
        let height: usize = map.get("height")?;
        let fx = map.opt("fx")?.unwrap_or(width as f64);
        let fy = map.opt("fy")?.unwrap_or(fx);
        let cx = map.opt("cx")?.unwrap_or((width as f64 - 1.0) / 2.0);
        let cy = map.opt("cy")?.unwrap_or((height as f64 - 1.0) / 2.0);
        let geometry = CameraGeometry::new(width, height, fx, fy, cx, cy)
            .map_err(|e| CliError::Config(e.to_string()))?;

        let model: WarpKind = if command == Command::Ttc {
            WarpKind::Zoom1DOF
        } else {
            parse_enum("model", map.raw("model"))?
        };
        let objective = ObjectiveKind {
            objective: parse_enum("objective", map.raw("objective"))?,
            use_polarity: map.get("use_polarity")?,
        };
        let regularizer = RegularizerConfig {
            kind: parse_enum::<RegularizerKind>("regularizer", map.raw("regularizer"))?,
            tau: map.get("tau")?,
            alpha: map.get("alpha")?,
            trim: map.get("trim")?,
            stride: map.get("stride")?,
        };
        regularizer
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let lambda = map.opt("lambda")?.unwrap_or(default_lambda(objective.objective));
        if !(lambda >= 0.0) || !f64::is_finite(lambda) {
            return Err(CliError::Config("lambda must be finite and >= 0".into()));
        }

        let slicing = match (map.opt::<usize>("window_events")?, map.opt::<f64>("window_duration")?) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "set only one of 'window_events' and 'window_duration'".into(),
                ))
            }
            (Some(0), None) => return Err(CliError::Config("window_events must be positive".into())),
            (Some(n), None) => Slicing::Events(n),
            (None, Some(d)) if d > 0.0 && d.is_finite() => Slicing::Duration(d),
            (None, Some(_)) => return Err(CliError::Config("window_duration must be positive".into())),
            (None, None) => Slicing::Events(DEFAULT_WINDOW_EVENTS),
        };

        let bounds = match map.raw("bounds") {
            "" => None,
            raw => Some(parse_bounds(raw)?),
        };
        if let Some(b) = &bounds {
            if b.len() != model.dof() {
                return Err(CliError::Config(format!(
                    "{} bounds given for a {}-parameter model",
                    b.len(),
                    model.dof()
                )));
            }
        }
        let budget = map.opt("budget")?.unwrap_or(default_budget(model));
        if budget < 10 * model.dof() {
            return Err(CliError::Config(format!(
                "budget must be at least {} for the {model} model",
                10 * model.dof()
            )));
        }
        let theta = map.list("theta")?;
        if let Some(t) = &theta {
            if t.len() != model.dof() {
                return Err(CliError::Config(format!(
                    "theta has {} values, the {model} model needs {}",
                    t.len(),
                    model.dof()
                )));
            }
        }

        let sweep = SweepOptions {
            axis: map.get("sweep_axis")?,
            grid: map.get("sweep_grid")?,
            base: map.list("sweep_base")?,
            window: map.get("sweep_window")?,
        };
        if sweep.grid < 2 {
            return Err(CliError::Config("sweep_grid must be at least 2".into()));
        }
        if sweep.axis >= model.dof() {
            return Err(CliError::Config(format!("sweep_axis out of range for the {model} model")));
        }
        let bench = BenchOptions {
            events: map
                .raw("bench_events")
                .split(',')
                .map(|s| parse_enum::<usize>("bench_events", s.trim()))
                .collect::<Result<_, _>>()?,
            trials: map.get("bench_trials")?,
            warmup: map.get("bench_warmup")?,
        };
        if bench.trials == 0 {
            return Err(CliError::Config("bench_trials must be positive".into()));
        }
        if bench.events.contains(&0) {
            return Err(CliError::Config("bench_events entries must be positive".into()));
        }
        let synth = SynthOptions {
            motion: match map.raw("synth_motion") {
                "warp" => SynthMotion::Warp,
                "looming" => SynthMotion::Looming,
                other => return Err(CliError::Config(format!("invalid value '{other}' for 'synth_motion'"))),
            },
            looming_rate: map.get("looming_rate")?,
            points: map.get("synth_points")?,
            events_per_point: map.get("synth_events_per_point")?,
            noise: map.get("synth_noise")?,
            windows: map.get("synth_windows")?,
            duration: map.get("synth_duration")?,
        };
        if synth.windows == 0 {
            return Err(CliError::Config("synth_windows must be positive".into()));
        }

        Ok(Self {
            command,
            input: map.path("input"),
            output: map.path("output").unwrap_or_else(|| PathBuf::from("out")),
            ground_truth: map.path("ground_truth"),
            omega_reference: map.path("omega_reference"),
            geometry,
            model,
            objective,
            regularizer,
            lambda,
            slicing,
            bounds,
            budget,
            seed: map.get("seed")?,
            threads: map.get("threads")?,
            images: map.get("images")?,
            theta,
            sweep,
            bench,
            synth,
            map,
        })
    }

    /// Resolved configuration as a config file that reproduces the run.
    pub fn manifest(&self) -> String {
        let mut out = format!("command = {}\n", self.command);
        for (key, _) in KEYS {
            let value = match *key {
                "model" => self.model.name().to_string(),
                "lambda" => format!("{}", self.lambda),
                "budget" => self.budget.to_string(),
                "fx" => format!("{}", self.geometry.fx),
                "fy" => format!("{}", self.geometry.fy),
                "cx" => format!("{}", self.geometry.cx),
                "cy" => format!("{}", self.geometry.cy),
                "window_events" => match self.slicing {
                    Slicing::Events(n) => n.to_string(),
                    Slicing::Duration(_) => String::new(),
                },
                "window_duration" => match self.slicing {
                    Slicing::Duration(d) => format!("{d}"),
                    Slicing::Events(_) => String::new(),
                },
                other => self.map.raw(other).to_string(),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

fn parse_bounds(raw: &str) -> Result<Vec<[f64; 2]>, CliError> {
    raw.split(',')
        .map(|pair| {
            let (lo, hi) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("bound '{pair}' is not lo:hi")))?;
            let lo: f64 = parse_enum("bounds", lo.trim())?;
            let hi: f64 = parse_enum("bounds", hi.trim())?;
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(CliError::Config(format!("bound '{pair}' is not a finite interval")));
            }
            Ok([lo, hi])
        })
        .collect()
}
