//! Run configuration: a line-oriented `key = value` file with `[sections]`,
//! plus command-line overrides that take precedence.
//!
//! ```text
//! # benchmark at desk scale
//! [domain]
//! preset = benchmark          # or describe the domain explicitly:
//! # outer = square 1.0        # square <half-width> | disk <radius>
//! # outer_value = 0
//! # circle = -0.35, 0.35, 0.25, -1     # cx, cy, r, value (repeatable)
//!
//! [pde]
//! alpha = 0.5
//! omega = 0, 0
//! sigma = 0
//! source = 0
//!
//! [walk]
//! dt = 1e-4
//! max_steps = 1000000
//! exit_mode = interp          # naive | interp
//!
//! [machine]
//! range_limit = 1
//! readout_quantum = 1e-4
//! overload = true
//!
//! [noise]
//! mode = ideal                # ideal | biased
//! dc_bias = 0, 0
//! time_constant = 0.01
//!
//! [grid]
//! nx = 50
//! ny = 50
//!
//! [run]
//! walks = 200
//! seed = 1
//! workers = 0                 # 0 = one per core
//! out = results/bench
//! range = -1:1
//! image = false
//!
//! [fd]
//! tol = 1e-8
//! max_iter = 200000
//!
//! [lut]
//! resolution = 256
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, ExitMode, Inclusion, OuterShape, Point2};
use crate::machine::{MachineModel, NoiseMode};
use crate::render::RenderRange;
use crate::sde::{SdeParams, WalkConfig};

pub const WORKERS_ENV: &str = "FKWALK_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub enum DomainConfig {
    Preset(String),
    Explicit {
        outer: OuterShape,
        outer_value: f64,
        circles: Vec<[f64; 4]>,
    },
}

impl DomainConfig {
    fn explicit_default() -> Self {
        DomainConfig::Explicit {
            outer: OuterShape::Square { half_width: 1.0 },
            outer_value: 0.0,
            circles: Vec::new(),
        }
    }

    pub fn build(&self) -> Result<DomainSpec> {
        match self {
            DomainConfig::Preset(name) => preset(name),
            DomainConfig::Explicit {
                outer,
                outer_value,
                circles,
            } => DomainSpec::new(
                *outer,
                *outer_value,
                circles
                    .iter()
                    .map(|c| Inclusion::new(Point2::new(c[0], c[1]), c[2], c[3]))
                    .collect(),
            )
            .map_err(|e| Error::config(e.to_string())),
        }
    }
}

pub fn preset(name: &str) -> Result<DomainSpec> {
    match name {
        "benchmark" => Ok(DomainSpec::benchmark()),
        other => Err(Error::config(format!("unknown preset '{other}' (known: benchmark)"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub alpha: f64,
    pub omega: [f64; 2],
    pub sigma: f64,
    pub source: f64,
    pub walk: WalkConfig,
    pub machine: MachineModel,
    pub noise: NoiseMode,
    pub nx: usize,
    pub ny: usize,
    /// Walks per point; commands fall back to their own default when unset.
    pub walks: Option<u64>,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<String>,
    pub range: Option<RenderRange>,
    pub image: bool,
    pub fd_tol: f64,
    pub fd_max_iter: usize,
    pub lut_resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::Preset("benchmark".into()),
            alpha: 0.5,
            omega: [0.0; 2],
            sigma: 0.0,
            source: 0.0,
            walk: WalkConfig::default(),
            machine: MachineModel::default(),
            noise: NoiseMode::Ideal,
            nx: 50,
            ny: 50,
            walks: None,
            seed: 1,
            workers: 0,
            out: None,
            range: None,
            image: false,
            fd_tol: 1e-8,
            fd_max_iter: 200_000,
            lut_resolution: 256,
        }
    }
}

/// Command-line values that replace whatever the file said.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub walks: Option<u64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub alpha: Option<f64>,
    pub omega_x: Option<f64>,
    pub omega_y: Option<f64>,
    pub sigma: Option<f64>,
    pub source: Option<f64>,
    pub exit_mode: Option<ExitMode>,
    pub out: Option<String>,
    pub range: Option<RenderRange>,
    pub image: bool,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("bad value for '{key}': '{v}'")))
}

fn list(key: &str, v: &str, len: usize) -> Result<Vec<f64>> {
    let items: Vec<f64> = v.split(',').map(|s| num(key, s.trim())).collect::<Result<_>>()?;
    if items.len() != len {
        return Err(Error::config(format!("'{key}' needs {len} comma-separated numbers")));
    }
    Ok(items)
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(format!("bad boolean for '{key}': '{v}'"))),
    }
}

pub fn parse_exit_mode(v: &str) -> Result<ExitMode> {
    match v {
        "naive" => Ok(ExitMode::Naive),
        "interp" | "interpolated" => Ok(ExitMode::Interpolated),
        _ => Err(Error::config(format!("exit mode must be naive or interp, got '{v}'"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut noise_mode = "ideal".to_string();
        let mut dc_bias = [0.0; 2];
        let mut time_constant = 0.01;
        let mut preset_given = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::config(format!("line {}: {msg}", lineno + 1));
            if let Some(name) = line.strip_prefix('[') {
                section = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("unterminated section header '{line}'")))?
                    .trim()
                    .to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            let (key, v) = (key.trim(), value.trim());
            let wrap = |e: Error| at(e.to_string());

            match (section.as_str(), key) {
                ("domain", "preset") => {
                    if matches!(cfg.domain, DomainConfig::Explicit { .. }) {
                        return Err(at("preset cannot be combined with an explicit domain".into()));
                    }
                    cfg.domain = DomainConfig::Preset(v.to_string());
                    preset_given = true;
                }
                ("domain", "outer" | "outer_value" | "circle") => {
                    if preset_given {
                        return Err(at("preset cannot be combined with an explicit domain".into()));
                    }
                    if let DomainConfig::Preset(_) = cfg.domain {
                        cfg.domain = DomainConfig::explicit_default();
                    }
                    let DomainConfig::Explicit {
                        outer,
                        outer_value,
                        circles,
                    } = &mut cfg.domain
                    else {
                        unreachable!()
                    };
                    match key {
                        "outer" => {
                            let mut parts = v.split_whitespace();
                            let shape = parts.next().unwrap_or("");
                            let size: f64 = num(key, parts.next().unwrap_or("")).map_err(wrap)?;
                            *outer = match shape {
                                "square" => OuterShape::Square { half_width: size },
                                "disk" => OuterShape::Disk { radius: size },
                                _ => return Err(at(format!("outer must be 'square <h>' or 'disk <r>', got '{v}'"))),
                            };
                        }
                        "outer_value" => *outer_value = num(key, v).map_err(wrap)?,
                        _ => {
                            let c = list(key, v, 4).map_err(wrap)?;
                            circles.push([c[0], c[1], c[2], c[3]]);
                        }
                    }
                }
                ("pde", "alpha") => cfg.alpha = num(key, v).map_err(wrap)?,
                ("pde", "omega") => {
                    let w = list(key, v, 2).map_err(wrap)?;
                    cfg.omega = [w[0], w[1]];
                }
                ("pde", "sigma") => cfg.sigma = num(key, v).map_err(wrap)?,
                ("pde", "source") => cfg.source = num(key, v).map_err(wrap)?,
                ("walk", "dt") => cfg.walk.dt = num(key, v).map_err(wrap)?,
                ("walk", "max_steps") => cfg.walk.max_steps = num(key, v).map_err(wrap)?,
                ("walk", "exit_mode") => cfg.walk.exit_mode = parse_exit_mode(v).map_err(wrap)?,
                ("machine", "range_limit") => cfg.machine.range_limit = num(key, v).map_err(wrap)?,
                ("machine", "readout_quantum") => cfg.machine.readout_quantum = num(key, v).map_err(wrap)?,
                ("machine", "overload") => cfg.machine.overload_enabled = boolean(key, v).map_err(wrap)?,
                ("noise", "mode") => noise_mode = v.to_string(),
                ("noise", "dc_bias") => {
                    let b = list(key, v, 2).map_err(wrap)?;
                    dc_bias = [b[0], b[1]];
                }
                ("noise", "time_constant") => time_constant = num(key, v).map_err(wrap)?,
                ("grid", "nx") => cfg.nx = num(key, v).map_err(wrap)?,
                ("grid", "ny") => cfg.ny = num(key, v).map_err(wrap)?,
                ("run", "walks") => cfg.walks = Some(num(key, v).map_err(wrap)?),
                ("run", "seed") => cfg.seed = num(key, v).map_err(wrap)?,
                ("run", "workers") => cfg.workers = num(key, v).map_err(wrap)?,
                ("run", "out") => cfg.out = Some(v.to_string()),
                ("run", "range") => {
                    cfg.range = Some(RenderRange::parse(v).map_err(|e| at(e.to_string()))?)
                }
                ("run", "image") => cfg.image = boolean(key, v).map_err(wrap)?,
                ("fd", "tol") => cfg.fd_tol = num(key, v).map_err(wrap)?,
                ("fd", "max_iter") => cfg.fd_max_iter = num(key, v).map_err(wrap)?,
                ("lut", "resolution") => cfg.lut_resolution = num(key, v).map_err(wrap)?,
                _ => return Err(at(format!("unknown key '{key}' in section [{section}]"))),
            }
        }

        cfg.noise = match noise_mode.as_str() {
            "ideal" => NoiseMode::Ideal,
            "biased" => {
                if !(time_constant > 0.0) {
                    return Err(Error::config("noise time_constant must be positive"));
                }
                NoiseMode::Biased {
                    dc_bias,
                    time_constant,
                }
            }
            other => return Err(Error::config(format!("noise mode must be ideal or biased, got '{other}'"))),
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Defaults, then the file (if any), then the environment worker count
    /// (if the file left it unset), then flags.
    pub fn resolve(path: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if cfg.workers == 0 {
            if let Ok(v) = std::env::var(WORKERS_ENV) {
                cfg.workers = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("{WORKERS_ENV} must be a non-negative integer, got '{v}'")))?;
            }
        }
        cfg.apply(ov)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(p) = &ov.preset {
            preset(p)?;
            self.domain = DomainConfig::Preset(p.clone());
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(self.nx, ov.nx);
        set!(self.ny, ov.ny);
        set!(self.walk.dt, ov.dt);
        set!(self.seed, ov.seed);
        set!(self.workers, ov.workers);
        set!(self.alpha, ov.alpha);
        set!(self.omega[0], ov.omega_x);
        set!(self.omega[1], ov.omega_y);
        set!(self.sigma, ov.sigma);
        set!(self.source, ov.source);
        set!(self.walk.exit_mode, ov.exit_mode);
        if ov.walks.is_some() {
            self.walks = ov.walks;
        }
        if ov.out.is_some() {
            self.out = ov.out.clone();
        }
        if ov.range.is_some() {
            self.range = ov.range;
        }
        self.image |= ov.image;
        Ok(())
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        self.domain.build()
    }

    pub fn params(&self) -> Result<SdeParams> {
        SdeParams::new(self.alpha, self.omega, self.sigma, self.source).map_err(|e| Error::config(e.to_string()))
    }

    pub fn walk_config(&self) -> Result<WalkConfig> {
        self.walk.validate()?;
        Ok(self.walk)
    }

    pub fn machine(&self) -> Result<MachineModel> {
        self.machine.validate()?;
        Ok(self.machine)
    }

    pub fn walks_or(&self, default: u64) -> u64 {
        self.walks.unwrap_or(default)
    }

    pub fn out_or(&self, default: &str) -> String {
        self.out.clone().unwrap_or_else(|| default.to_string())
    }
}
