//! Run configuration: a TOML file with one flat table per section.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use hetero_core::{BumpKind, Chain, LeverageMap, MapParams, NoiseSpec, SigmaMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    Map,
    Orbit,
    Density,
    Lyapunov,
    Bifurcation,
    Clt,
    Multifractal,
    Evt,
    Micro,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Map,
        Experiment::Orbit,
        Experiment::Density,
        Experiment::Lyapunov,
        Experiment::Bifurcation,
        Experiment::Clt,
        Experiment::Multifractal,
        Experiment::Evt,
        Experiment::Micro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Map => "map",
            Experiment::Orbit => "orbit",
            Experiment::Density => "density",
            Experiment::Lyapunov => "lyapunov",
            Experiment::Bifurcation => "bifurcation",
            Experiment::Clt => "clt",
            Experiment::Multifractal => "multifractal",
            Experiment::Evt => "evt",
            Experiment::Micro => "micro",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Experiment,
    pub seed: u64,
    pub x0: f64,
    pub length: usize,
    pub burn_in: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { experiment: Experiment::Map, seed: 1, x0: 0.38, length: 100_000, burn_in: 1_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Noise-free chain when set.
    pub deterministic: bool,
    pub n: f64,
    /// Half-width; the admissible bound when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    pub bump: BumpKind,
    pub mode: SigmaMode,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { deterministic: false, n: 1_000.0, a: None, bump: BumpKind::Mollifier, mode: SigmaMode::Paper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub points: usize,
}

impl Default for CurveSection {
    fn default() -> Self {
        Self { points: 2_001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub bins: usize,
    pub cells: usize,
    pub orbits: usize,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self { bins: 1_000, cells: 512, orbits: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSection {
    pub c_min: f64,
    pub c_max: f64,
    pub points: usize,
    /// Noise indices of the random rows; a deterministic row is always added.
    pub n_list: Vec<f64>,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        Self { c_min: -1.0, c_max: 1.0, points: 401, n_list: vec![10.0, 1_000.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationSection {
    pub c_min: f64,
    pub c_max: f64,
    pub points: usize,
    pub transient: usize,
    pub keep: usize,
}

impl Default for BifurcationSection {
    fn default() -> Self {
        Self { c_min: -1.0, c_max: 1.0, points: 401, transient: 1_000, keep: 1_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CenteringChoice {
    #[default]
    Stationary,
    Lebesgue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltSection {
    pub orbits: usize,
    pub t_list: Vec<usize>,
    pub centering: CenteringChoice,
    pub cells: usize,
    /// Large-deviation thresholds in units of the asymptotic standard deviation.
    pub eps_list: Vec<f64>,
}

impl Default for CltSection {
    fn default() -> Self {
        Self {
            orbits: 5_000,
            t_list: vec![10, 100, 1_000, 10_000],
            centering: CenteringChoice::Stationary,
            cells: 1_024,
            eps_list: vec![0.05, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultifractalSection {
    pub samples: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub q_step: f64,
    /// Explicit radius range; chosen from the sample size when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    pub r_points: usize,
}

impl Default for MultifractalSection {
    fn default() -> Self {
        Self { samples: 10_000_000, q_min: -5.0, q_max: 5.0, q_step: 0.5, r_min: None, r_max: None, r_points: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvtSection {
    pub z: f64,
    pub tau: f64,
    pub t_grid: Vec<usize>,
    pub bins: usize,
    pub density_orbits: usize,
    pub density_length: usize,
    pub length: usize,
    pub s_list: Vec<f64>,
}

impl Default for EvtSection {
    fn default() -> Self {
        Self {
            z: 0.80,
            tau: 10f64.ln(),
            t_grid: hetero_core::extremes::default_t_grid(),
            bins: 1 << 17,
            density_orbits: 8,
            density_length: 12_500_000,
            length: 20_000_000,
            s_list: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BreakdownChoice {
    #[default]
    Abort,
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroSection {
    pub n_list: Vec<usize>,
    pub horizon: usize,
    pub breakdown: BreakdownChoice,
    pub carry_over: bool,
}

impl Default for MicroSection {
    fn default() -> Self {
        Self {
            n_list: vec![100, 1_000, 10_000],
            horizon: 20_000,
            breakdown: BreakdownChoice::Resample,
            carry_over: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub map: MapParams,
    pub noise: NoiseSection,
    pub curve: CurveSection,
    pub density: DensitySection,
    pub lyapunov: LyapunovSection,
    pub bifurcation: BifurcationSection,
    pub clt: CltSection,
    pub multifractal: MultifractalSection,
    pub evt: EvtSection,
    pub micro: MicroSection,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl Config {
    /// Parse a configuration file and apply `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e| bad(format!("config is not valid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e| bad(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Check every setting without running anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let map = self.leverage_map()?;
        if !map.contains(self.run.x0) {
            let (lo, hi) = map.domain();
            return Err(bad(format!("run.x0 = {} is outside the domain [{lo}, {hi}]", self.run.x0)));
        }
        if !self.noise.deterministic {
            self.noise_spec(&map)?;
        }
        positive("run.length", self.run.length)?;
        positive("curve.points", self.curve.points)?;
        positive("density.bins", self.density.bins)?;
        positive("density.cells", self.density.cells)?;
        positive("density.orbits", self.density.orbits)?;
        range("lyapunov", self.lyapunov.c_min, self.lyapunov.c_max, self.lyapunov.points)?;
        if self.lyapunov.n_list.iter().any(|n| !(*n > 0.0)) {
            return Err(bad("lyapunov.n_list entries must be positive"));
        }
        range("bifurcation", self.bifurcation.c_min, self.bifurcation.c_max, self.bifurcation.points)?;
        positive("bifurcation.keep", self.bifurcation.keep)?;
        let c = &self.clt;
        if c.orbits < 100 {
            return Err(bad(format!("clt.orbits = {} is below the minimum of 100", c.orbits)));
        }
        if c.t_list.is_empty() || c.t_list.contains(&0) {
            return Err(bad("clt.t_list must contain positive lengths"));
        }
        if c.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(bad("clt.eps_list entries must be positive"));
        }
        positive("clt.cells", c.cells)?;
        let m = &self.multifractal;
        positive("multifractal.samples", m.samples)?;
        if !(m.q_step > 0.0) || !(m.q_min <= m.q_max) {
            return Err(bad("multifractal q grid needs q_min <= q_max and q_step > 0"));
        }
        match (m.r_min, m.r_max) {
            (None, None) => {}
            (Some(lo), Some(hi)) if lo > 0.0 && lo < hi && m.r_points >= 2 => {}
            _ => return Err(bad("multifractal radii need 0 < r_min < r_max and r_points >= 2, or neither bound")),
        }
        let e = &self.evt;
        if !(e.tau > 0.0) {
            return Err(bad("evt.tau must be positive"));
        }
        if e.t_grid.is_empty() || e.t_grid.contains(&0) {
            return Err(bad("evt.t_grid must contain positive block lengths"));
        }
        if !map.geometry.in_core(e.z) {
            let g = map.geometry;
            return Err(bad(format!("evt.z = {} is outside the dynamical core [{}, {}]", e.z, g.core_lo, g.core_hi)));
        }
        positive("evt.bins", e.bins)?;
        positive("evt.density_orbits", e.density_orbits)?;
        positive("evt.density_length", e.density_length)?;
        positive("evt.length", e.length)?;
        if self.micro.n_list.iter().any(|n| *n < 10) {
            return Err(bad("micro.n_list entries must be at least 10"));
        }
        positive("micro.horizon", self.micro.horizon)?;
        Ok(())
    }

    pub fn leverage_map(&self) -> Result<LeverageMap, ConfigError> {
        LeverageMap::new(self.map).map_err(|e| bad(format!("map: {e}")))
    }

    pub fn noise_spec(&self, map: &LeverageMap) -> Result<NoiseSpec, ConfigError> {
        let nz = &self.noise;
        if !(nz.n > 0.0) {
            return Err(bad(format!("noise.n must be positive, got {}", nz.n)));
        }
        let spec = match nz.a {
            Some(a) => NoiseSpec::checked(map, a, nz.n, nz.bump, nz.mode),
            None => NoiseSpec::at_bound(map, nz.n, nz.bump, nz.mode),
        };
        spec.map_err(|e| bad(format!("noise: {e}")))
    }

    pub fn chain(&self) -> Result<Chain, ConfigError> {
        let map = self.leverage_map()?;
        if self.noise.deterministic {
            return Ok(Chain::deterministic(map));
        }
        let spec = self.noise_spec(&map)?;
        Chain::random(map, spec, self.noise.mode).map_err(|e| bad(format!("noise: {e}")))
    }
}

fn positive(name: &str, v: usize) -> Result<(), ConfigError> {
    if v == 0 {
        return Err(bad(format!("{name} must be positive")));
    }
    Ok(())
}

fn range(section: &str, lo: f64, hi: f64, points: usize) -> Result<(), ConfigError> {
    if !(lo < hi) || points < 2 {
        return Err(bad(format!("{section} grid needs c_min < c_max and at least 2 points")));
    }
    Ok(())
}

/// `section.key=value`, with the value read as a TOML literal and taken as a
/// bare string when it does not parse.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| bad(format!("override `{spec}` is not section.key=value")))?;
    let (section, key) =
        path.trim().split_once('.').ok_or_else(|| bad(format!("override key `{path}` is not section.key")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(bad(format!("`{section}` is not a section")));
    };
    sec.insert(key.to_string(), value);
    Ok(())
}
