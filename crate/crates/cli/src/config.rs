//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shearecho::blowup::{InflationOptions, StartMode};
use shearecho::{Config, FSource, InitSpec, Params, RawParams, State, WeightSpec};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub nu: f64,
    pub c: f64,
    #[serde(default)]
    pub alpha: f64,
    pub eta: Option<f64>,
    #[serde(rename = "L")]
    pub modes: Option<usize>,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: Option<f64>,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default)]
    pub f_source: FSource,
    #[serde(default)]
    pub g_forcing_per_l: bool,
    /// `0` disables the guard.
    #[serde(default = "default_guard")]
    pub truncation_guard: f64,
    #[serde(default)]
    pub sample_times: Vec<f64>,
    /// Extra equally spaced samples over `[t_start, t_end]`.
    #[serde(default)]
    pub sample_count: usize,
    pub init: Option<InitBlock>,
    #[serde(default)]
    pub weight: WeightSpec,
    pub wave: Option<WaveBlock>,
    pub echo: Option<EchoBlock>,
    pub sweep: Option<SweepBlock>,
    pub blowup: Option<BlowupBlock>,
    pub coeffs: Option<CoeffsBlock>,
}

fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-12
}
fn default_guard() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum InitKind {
    #[serde(rename = "delta_theta")]
    DeltaTheta,
    #[serde(rename = "delta_G")]
    DeltaG,
    #[serde(rename = "file")]
    File,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitBlock {
    pub kind: InitKind,
    pub mode: Option<usize>,
    /// JSON mode state, relative to the config file.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WaveBlock {
    #[serde(default = "one_u32")]
    pub k_wave: u32,
    #[serde(default)]
    pub f0: f64,
    /// Defaults to `g = 2 c nu`.
    pub g0: Option<f64>,
    pub t_end: f64,
    pub samples: usize,
    /// Stratifications for the inviscid exponent fits.
    #[serde(default)]
    pub inviscid_alphas: Vec<f64>,
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    K2,
    ChainOptimal,
    Fixed,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EchoBlock {
    /// Run the bootstrap inequalities on interval `k` (needs a delta at `k`
    /// started at `t_k`).
    pub bootstrap_k: Option<usize>,
    #[serde(default)]
    pub persistence: bool,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Synthetic {
    pub slope: f64,
    #[serde(default)]
    pub intercept: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default)]
    pub etas: Vec<f64>,
    /// Frequencies placed just above `k0^3 / (c pi)`.
    #[serde(default)]
    pub k0: Vec<usize>,
    #[serde(default = "chain_optimal")]
    pub start: StartKind,
    pub start_k: Option<usize>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Skip the simulations and use `psi = exp(slope cbrt(c eta) + intercept)`.
    pub synthetic: Option<Synthetic>,
}

fn chain_optimal() -> StartKind {
    StartKind::ChainOptimal
}
fn default_margin() -> f64 {
    100.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupBlock {
    pub sigma: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub points: usize,
    /// Defaults to `sigma - 1, sigma, sigma + 1`.
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default = "chain_optimal")]
    pub start: StartKind,
    pub start_k: Option<usize>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_grid() -> usize {
    400
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffsBlock {
    pub k: usize,
    /// Upper end of the G kernels; defaults to `t_{k-1}`.
    pub end: Option<f64>,
    /// Exit status 4 when a value exceeds `safety * bound`.
    #[serde(default = "one_f64")]
    pub safety: f64,
}

fn one_f64() -> f64 {
    1.0
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn params(&self) -> Result<Params, CliError> {
        shearecho::validate_params(&RawParams {
            nu: self.nu,
            c: self.c,
            alpha: self.alpha,
        })
        .map_err(|e| bad(e.to_string()))
    }

    pub fn eta(&self) -> Result<f64, CliError> {
        self.eta.ok_or_else(|| bad("missing key `eta`"))
    }

    pub fn modes(&self) -> Result<usize, CliError> {
        self.modes.ok_or_else(|| bad("missing key `L`"))
    }

    pub fn block<'a, T>(&self, b: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        b.as_ref().ok_or_else(|| bad(format!("missing [{name}] table")))
    }

    /// Simulation configuration of the top-level keys.
    pub fn sim(&self, base: &Path) -> Result<Config, CliError> {
        let eta = self.eta()?;
        let modes = self.modes()?;
        let t_end = self.t_end.ok_or_else(|| bad("missing key `t_end`"))?;
        let init = self.block(&self.init, "init")?;
        let spec = match init.kind {
            InitKind::DeltaTheta => InitSpec::DeltaTheta {
                mode: init.mode.ok_or_else(|| bad("init.mode is required for delta data"))?,
            },
            InitKind::DeltaG => InitSpec::DeltaG {
                mode: init.mode.ok_or_else(|| bad("init.mode is required for delta data"))?,
            },
            InitKind::File => {
                let p = init.path.as_ref().ok_or_else(|| bad("init.path is required for kind = \"file\""))?;
                let p = base.join(p);
                let text = std::fs::read_to_string(&p).map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?;
                let s: State = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", p.display())))?;
                InitSpec::State(s)
            }
        };
        let mut cfg = Config::new(eta, modes, self.t_start, t_end, spec);
        cfg.rtol = self.rtol;
        cfg.atol = self.atol;
        cfg.f_source = self.f_source;
        cfg.g_forcing_per_l = self.g_forcing_per_l;
        cfg.truncation_guard = (self.truncation_guard > 0.0).then_some(self.truncation_guard);
        cfg.sample_times = self.sample_times.clone();
        if self.sample_count > 0 {
            let n = self.sample_count;
            let span = t_end - self.t_start;
            cfg.sample_times
                .extend((1..n).map(|i| self.t_start + span * i as f64 / n as f64));
        }
        cfg.validate(&self.params()?).map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    pub fn inflation_options(&self, start: StartKind, start_k: Option<usize>, margin: f64) -> Result<InflationOptions<f64>, CliError> {
        let start = match start {
            StartKind::K2 => StartMode::K2,
            StartKind::ChainOptimal => StartMode::ChainOptimal,
            StartKind::Fixed => StartMode::Fixed(start_k.ok_or_else(|| bad("start_k is required for start = \"fixed\""))?),
        };
        Ok(InflationOptions {
            start,
            margin,
            rtol: self.rtol,
            atol: self.atol,
            weight: self.weight,
            f_source: self.f_source,
            modes: self.modes,
            g_forcing_per_l: self.g_forcing_per_l,
        })
    }
}
