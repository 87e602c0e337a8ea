//! System presets and shipped gate files.
//!
//! The files under `presets/` are compiled in; setting `SPINCLUST_PRESET_DIR`
//! makes the CLI read `systems.toml` and `gates/*.toml` from that directory
//! instead.

use anyhow::{anyhow, Context, Result};
use serde::Deserialize;
use spinclust::hamiltonian::{SpinSystemParams, GAMMA_N_SI29};
use spinclust::synthesis::GateFile;
use std::collections::BTreeMap;
use std::path::PathBuf;

pub const ENV_PRESET_DIR: &str = "SPINCLUST_PRESET_DIR";

const SYSTEMS: &str = include_str!("../../../presets/systems.toml");
const GATES: [(&str, &str); 2] = [
    ("siv29_swap.toml", include_str!("../../../presets/gates/siv29_swap.toml")),
    ("siv29_cz.toml", include_str!("../../../presets/gates/siv29_cz.toml")),
];

/// A single value or a `[low, high]` range.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Span {
    Value(f64),
    Range([f64; 2]),
}

impl Span {
    pub fn nominal(self) -> f64 {
        match self {
            Span::Value(v) => v,
            Span::Range([a, b]) => 0.5 * (a + b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WorkingPoint {
    pub bx_t: f64,
    pub bz_t: f64,
    pub t2_us: f64,
    pub emission_tau_ns: Option<f64>,
    pub delta_omega_rad_s: Option<f64>,
    pub swap_gate: Option<String>,
    pub cz_gate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SystemPreset {
    pub label: String,
    pub tau_ns: Option<Span>,
    pub cooperativity: Option<f64>,
    pub eta_qe: Option<Span>,
    pub eta_ce: Option<Span>,
    pub eta_dwf: Option<Span>,
    pub t2_us: Option<f64>,
    pub a_mhz: Option<Span>,
    pub nuclear_spin: Option<String>,
    pub gamma_n: Option<f64>,
    pub working_point: Option<WorkingPoint>,
}

impl SystemPreset {
    /// Spin Hamiltonian constants at field `(bx, bz)`.
    pub fn params(&self, bx: f64, bz: f64) -> Result<SpinSystemParams> {
        let a = self
            .a_mhz
            .ok_or_else(|| anyhow!("preset `{}` has no hyperfine constant", self.label))?
            .nominal();
        let mut p = SpinSystemParams::isotropic(a * 1e6, bx, bz);
        p.gamma_n = self.gamma_n.unwrap_or(GAMMA_N_SI29);
        Ok(p)
    }

    /// Parameters at the preset's working point.
    pub fn working_params(&self) -> Result<SpinSystemParams> {
        let wp = self
            .working_point
            .as_ref()
            .ok_or_else(|| anyhow!("preset `{}` has no working point; pass --bx/--bz", self.label))?;
        self.params(wp.bx_t, wp.bz_t)
    }
}

#[derive(Debug, Deserialize)]
struct SystemsFile {
    format_version: u32,
    #[serde(flatten)]
    systems: BTreeMap<String, SystemPreset>,
}

pub struct Presets {
    systems: BTreeMap<String, SystemPreset>,
    dir: Option<PathBuf>,
}

impl Presets {
    pub fn load() -> Result<Self> {
        let dir = std::env::var_os(ENV_PRESET_DIR).map(PathBuf::from);
        let text = match &dir {
            Some(d) => std::fs::read_to_string(d.join("systems.toml"))
                .with_context(|| format!("reading presets from {}", d.display()))?,
            None => SYSTEMS.to_string(),
        };
        Presets::parse(&text, dir)
    }

    pub fn parse(text: &str, dir: Option<PathBuf>) -> Result<Self> {
        let file: SystemsFile = toml::from_str(text).context("parsing systems.toml")?;
        if file.format_version != 1 {
            return Err(anyhow!("unsupported presets version {}", file.format_version));
        }
        Ok(Presets {
            systems: file.systems,
            dir,
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.systems.keys().map(String::as_str)
    }

    pub fn system(&self, name: &str) -> std::result::Result<&SystemPreset, spinclust::Error> {
        self.systems
            .get(name)
            .ok_or_else(|| spinclust::Error::UnknownPreset(name.to_string()))
    }

    pub fn gate_file(&self, name: &str) -> Result<GateFile> {
        let text = match &self.dir {
            Some(d) => std::fs::read_to_string(d.join("gates").join(name))
                .with_context(|| format!("reading gate file {name}"))?,
            None => GATES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.to_string())
                .ok_or_else(|| anyhow!("no built-in gate file `{name}`"))?,
        };
        Ok(GateFile::from_toml(&text)?)
    }
}
