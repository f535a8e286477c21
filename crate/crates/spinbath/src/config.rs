//! Declarative run configuration.
//!
//! A run is a TOML file with `lattice`, `bath`, `dynamics`, `kmc`,
//! `flags` and `output` sections; every key has a default, unknown keys
//! are rejected with a suggestion, and the fully materialized
//! configuration is echoed back so each run records exactly what it used.
//! The SHA-256 of that canonical echo is the config hash stamped on every
//! output file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bath::{BathModel, SpectralDensity};
use crate::error::{Error, Result};
use crate::lattice::{CouplingGraph, SpinConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring,
    Path,
    Grid,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralKind {
    Flat,
    Ohmic,
    Table,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub r: Vec<i64>,
    pub s: Vec<i64>,
    pub j: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub dimension: usize,
    pub topology: Topology,
    pub n_sites: usize,
    pub extent: Vec<usize>,
    pub coupling_j: f64,
    pub sites: Vec<Vec<i64>>,
    pub coupling: Vec<CouplingEntry>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            dimension: 1,
            topology: Topology::Ring,
            n_sites: 4,
            extent: Vec::new(),
            coupling_j: 1.0,
            sites: Vec::new(),
            coupling: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlatParams {
    pub height: f64,
    pub cutoff: f64,
}

impl Default for FlatParams {
    fn default() -> Self {
        FlatParams {
            height: 1.0,
            cutoff: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OhmicParams {
    pub eta: f64,
    pub cutoff: f64,
}

impl Default for OhmicParams {
    fn default() -> Self {
        OhmicParams {
            eta: 1.0,
            cutoff: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TableParams {
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PvParams {
    /// Pole exclusion half-width; defaults to 1e-3 times the support width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub panels: usize,
}

impl Default for PvParams {
    fn default() -> Self {
        PvParams {
            epsilon: None,
            panels: 4096,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BathConfig {
    pub beta: f64,
    pub mu: f64,
    pub spectral: SpectralKind,
    pub flat: FlatParams,
    pub ohmic: OhmicParams,
    pub table: TableParams,
    pub pv: PvParams,
    pub include_null_pv: bool,
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig {
            beta: 1.0,
            mu: 0.0,
            spectral: SpectralKind::Ohmic,
            flat: FlatParams::default(),
            ohmic: OhmicParams::default(),
            table: TableParams::default(),
            pv: PvParams::default(),
            include_null_pv: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub t_final: f64,
    pub tol: f64,
    pub n_samples: usize,
    pub n_traj: usize,
    /// `all_up`, `all_down`, `plus_x`, `maximally_mixed` or `basis:+-+...`.
    pub initial: String,
    pub observables: Vec<String>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            t_final: 5.0,
            tol: 1e-9,
            n_samples: 51,
            n_traj: 1000,
            initial: "all_up".into(),
            observables: vec!["magnetization".into(), "energy".into()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct KmcConfig {
    pub n_sites: usize,
    pub t_final: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `all_up`, `all_down` or `random:<p_up>`.
    pub initial: String,
    pub n_samples: usize,
}

impl Default for KmcConfig {
    fn default() -> Self {
        KmcConfig {
            n_sites: 1000,
            t_final: 10.0,
            seed: None,
            initial: "all_up".into(),
            n_samples: 201,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlagsConfig {
    pub null_tol: f64,
}

impl Default for FlagsConfig {
    fn default() -> Self {
        FlagsConfig { null_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub lattice: LatticeConfig,
    pub bath: BathConfig,
    pub dynamics: DynamicsConfig,
    pub kmc: KmcConfig,
    pub flags: FlagsConfig,
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    42
}

impl RunConfig {
    /// Validate every constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let invalid = |key: &str, message: String| Error::ConfigInvalid {
            key: key.into(),
            message,
        };
        let l = &self.lattice;
        match l.topology {
            Topology::Ring => {
                if l.dimension != 1 {
                    return Err(invalid("lattice.dimension", "must be 1 for a ring".into()));
                }
                if l.n_sites < 3 {
                    return Err(invalid("lattice.n_sites", "a ring needs >= 3 sites".into()));
                }
            }
            Topology::Path => {
                if l.dimension != 1 {
                    return Err(invalid("lattice.dimension", "must be 1 for a path".into()));
                }
                if l.n_sites == 0 {
                    return Err(invalid("lattice.n_sites", "must be positive".into()));
                }
            }
            Topology::Grid => {
                if l.extent.len() != l.dimension || l.extent.is_empty() {
                    return Err(invalid(
                        "lattice.extent",
                        format!("needs exactly dimension = {} entries", l.dimension),
                    ));
                }
                if l.extent.iter().any(|&e| e == 0) {
                    return Err(invalid("lattice.extent", "entries must be positive".into()));
                }
            }
            Topology::Explicit => {
                if l.sites.is_empty() {
                    return Err(invalid(
                        "lattice.sites",
                        "explicit topology needs a site list".into(),
                    ));
                }
            }
        }
        if !self.bath.beta.is_finite() || self.bath.beta <= 0.0 {
            return Err(invalid("bath.beta", "must be > 0".into()));
        }
        if !self.bath.mu.is_finite() {
            return Err(invalid("bath.mu", "must be finite".into()));
        }
        match self.bath.spectral {
            SpectralKind::Flat => {
                if self.bath.flat.height < 0.0 {
                    return Err(invalid("bath.flat.height", "must be >= 0".into()));
                }
                if self.bath.flat.cutoff <= 0.0 {
                    return Err(invalid("bath.flat.cutoff", "must be > 0".into()));
                }
            }
            SpectralKind::Ohmic => {
                if self.bath.ohmic.eta < 0.0 {
                    return Err(invalid("bath.ohmic.eta", "must be >= 0".into()));
                }
                if self.bath.ohmic.cutoff <= 0.0 {
                    return Err(invalid("bath.ohmic.cutoff", "must be > 0".into()));
                }
            }
            SpectralKind::Table => {
                if self.bath.table.path.is_empty() {
                    return Err(invalid("bath.table.path", "must name a CSV file".into()));
                }
            }
        }
        if let Some(eps) = self.bath.pv.epsilon {
            if !(eps > 0.0) {
                return Err(invalid("bath.pv.epsilon", "must be > 0".into()));
            }
        }
        if self.bath.pv.panels < 8 {
            return Err(invalid("bath.pv.panels", "must be >= 8".into()));
        }
        if !(self.dynamics.t_final >= 0.0) {
            return Err(invalid("dynamics.t_final", "must be >= 0".into()));
        }
        if !(self.dynamics.tol > 0.0) {
            return Err(invalid("dynamics.tol", "must be > 0".into()));
        }
        if self.dynamics.n_samples == 0 {
            return Err(invalid("dynamics.n_samples", "must be positive".into()));
        }
        if self.dynamics.n_samples < 2 && self.dynamics.t_final > 0.0 {
            return Err(invalid(
                "dynamics.n_samples",
                "must be >= 2 when t_final > 0".into(),
            ));
        }
        if self.dynamics.n_traj == 0 {
            return Err(invalid("dynamics.n_traj", "must be positive".into()));
        }
        parse_quantum_initial(&self.dynamics.initial, 1).map_err(|_| {
            invalid(
                "dynamics.initial",
                format!(
                    "`{}` is not all_up | all_down | plus_x | maximally_mixed | basis:<+->",
                    self.dynamics.initial
                ),
            )
        })?;
        if self.kmc.n_sites == 0 {
            return Err(invalid("kmc.n_sites", "must be positive".into()));
        }
        if !(self.kmc.t_final >= 0.0) {
            return Err(invalid("kmc.t_final", "must be >= 0".into()));
        }
        if self.kmc.n_samples == 0 {
            return Err(invalid("kmc.n_samples", "must be positive".into()));
        }
        if self.kmc.n_samples < 2 && self.kmc.t_final > 0.0 {
            return Err(invalid(
                "kmc.n_samples",
                "must be >= 2 when t_final > 0".into(),
            ));
        }
        parse_kmc_initial(&self.kmc.initial).map_err(|_| {
            invalid(
                "kmc.initial",
                format!(
                    "`{}` is not all_up | all_down | random:<p_up>",
                    self.kmc.initial
                ),
            )
        })?;
        if !(self.flags.null_tol >= 0.0) {
            return Err(invalid("flags.null_tol", "must be >= 0".into()));
        }
        Ok(())
    }

    /// Resolve derived defaults (kmc seed, pv epsilon) so the echo states
    /// every value the run will actually use.
    pub fn materialized(&self) -> RunConfig {
        let mut out = self.clone();
        if out.kmc.seed.is_none() {
            out.kmc.seed = Some(out.seed);
        }
        if out.bath.pv.epsilon.is_none() {
            let density = self.density_shape();
            let (lo, hi) = density.support();
            out.bath.pv.epsilon = Some(1e-3 * (hi - lo).max(f64::MIN_POSITIVE));
        }
        out
    }

    // density without table loading, for support-width defaults
    fn density_shape(&self) -> SpectralDensity {
        match self.bath.spectral {
            SpectralKind::Flat => SpectralDensity::Flat {
                height: self.bath.flat.height,
                cutoff: self.bath.flat.cutoff,
            },
            SpectralKind::Ohmic => SpectralDensity::Ohmic {
                eta: self.bath.ohmic.eta,
                cutoff: self.bath.ohmic.cutoff,
            },
            SpectralKind::Table => SpectralDensity::Flat {
                height: 0.0,
                cutoff: 1.0,
            },
        }
    }

    /// Canonical TOML echo of the materialized configuration.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(&self.materialized()).expect("config serializes")
    }

    /// `sha256:<hex>` of the canonical echo.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml().as_bytes());
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }

    /// Build the coupling graph of the `lattice` section.
    pub fn build_graph(&self) -> Result<Arc<CouplingGraph>> {
        let l = &self.lattice;
        let graph = match l.topology {
            Topology::Ring => CouplingGraph::ring(l.n_sites, l.coupling_j),
            Topology::Path => CouplingGraph::path(l.n_sites, l.coupling_j),
            Topology::Grid => CouplingGraph::grid(&l.extent, l.coupling_j),
            Topology::Explicit => {
                let couplings: Vec<(Vec<i64>, Vec<i64>, f64)> = l
                    .coupling
                    .iter()
                    .map(|c| (c.r.clone(), c.s.clone(), c.j))
                    .collect();
                CouplingGraph::new(l.dimension, l.sites.clone(), &couplings)
            }
        };
        graph.map(Arc::new).map_err(|e| Error::ConfigInvalid {
            key: "lattice".into(),
            message: e.to_string(),
        })
    }

    /// Build the bath model; tabulated densities load relative to
    /// `config_dir`.
    pub fn build_bath(&self, config_dir: &Path) -> Result<BathModel> {
        let density = match self.bath.spectral {
            SpectralKind::Flat => SpectralDensity::Flat {
                height: self.bath.flat.height,
                cutoff: self.bath.flat.cutoff,
            },
            SpectralKind::Ohmic => SpectralDensity::Ohmic {
                eta: self.bath.ohmic.eta,
                cutoff: self.bath.ohmic.cutoff,
            },
            SpectralKind::Table => {
                let path = config_dir.join(&self.bath.table.path);
                SpectralDensity::Table {
                    points: load_density_table(&path)?,
                }
            }
        };
        BathModel::new(self.bath.beta, self.bath.mu, density)
            .and_then(|b| b.with_pv(self.bath.pv.epsilon, self.bath.pv.panels))
            .and_then(|b| b.with_null_handling(self.flags.null_tol, self.bath.include_null_pv))
            .map_err(|e| Error::ConfigInvalid {
                key: "bath".into(),
                message: e.to_string(),
            })
    }
}

/// Parse a two-column CSV (energy, density); one optional header line.
fn load_density_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid {
        key: "bath.table.path".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (cols.len() == 2)
            .then(|| Ok::<_, std::num::ParseFloatError>((cols[0].parse::<f64>()?, cols[1].parse::<f64>()?)))
            .and_then(|r| r.ok());
        match parsed {
            Some(point) => points.push(point),
            None if lineno == 0 => continue, // header line
            None => {
                return Err(Error::ConfigInvalid {
                    key: "bath.table.path".into(),
                    message: format!("{}:{}: not `energy,density`", path.display(), lineno + 1),
                })
            }
        }
    }
    Ok(points)
}

/// Initial quantum states by name.
pub enum QuantumInitial {
    Pure(SpinConfiguration),
    PlusX,
    MaximallyMixed,
}

pub fn parse_quantum_initial(name: &str, n_sites: usize) -> Result<QuantumInitial> {
    match name {
        "all_up" => Ok(QuantumInitial::Pure(SpinConfiguration::all_up(n_sites))),
        "all_down" => Ok(QuantumInitial::Pure(SpinConfiguration::all_down(n_sites))),
        "plus_x" => Ok(QuantumInitial::PlusX),
        "maximally_mixed" => Ok(QuantumInitial::MaximallyMixed),
        other => {
            if let Some(pattern) = other.strip_prefix("basis:") {
                let spins: Option<Vec<i8>> = pattern
                    .chars()
                    .map(|c| match c {
                        '+' => Some(1),
                        '-' => Some(-1),
                        _ => None,
                    })
                    .collect();
                match spins {
                    Some(s) if s.len() == n_sites || n_sites == 1 => {
                        Ok(QuantumInitial::Pure(SpinConfiguration::from_spins(&s)?))
                    }
                    _ => Err(Error::Unsupported(format!("bad initial state `{other}`"))),
                }
            } else {
                Err(Error::Unsupported(format!("bad initial state `{other}`")))
            }
        }
    }
}

/// Initial classical states by name.
pub enum KmcInitial {
    AllUp,
    AllDown,
    Random(f64),
}

pub fn parse_kmc_initial(name: &str) -> Result<KmcInitial> {
    match name {
        "all_up" => Ok(KmcInitial::AllUp),
        "all_down" => Ok(KmcInitial::AllDown),
        other => {
            // both random:<p> and random(<p>) spellings
            let arg = other.strip_prefix("random:").or_else(|| {
                other
                    .strip_prefix("random(")
                    .and_then(|rest| rest.strip_suffix(')'))
            });
            let Some(p) = arg else {
                return Err(Error::Unsupported(format!("bad initial state `{other}`")));
            };
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Unsupported(format!("bad initial state `{other}`")))?;
            if (0.0..=1.0).contains(&p) {
                Ok(KmcInitial::Random(p))
            } else {
                Err(Error::Unsupported(format!(
                    "up probability {p} outside [0, 1]"
                )))
            }
        }
    }
}

/// Parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_str(&text).map_err(|e| match e {
        Error::ConfigParse { message, .. } => Error::ConfigParse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parse and validate configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        path: PathBuf::new(),
        message: enrich_unknown_field(&e.to_string()),
    })?;
    config.validate()?;
    Ok(config)
}

/// Append a "did you mean" hint to serde's unknown-field message.
fn enrich_unknown_field(message: &str) -> String {
    let Some(start) = message.find("unknown field `") else {
        return message.to_string();
    };
    let rest = &message[start + "unknown field `".len()..];
    let Some(end) = rest.find('`') else {
        return message.to_string();
    };
    let unknown = &rest[..end];
    let Some(expected_at) = rest.find("expected") else {
        return message.to_string();
    };
    let candidates: Vec<&str> = rest[expected_at..]
        .split('`')
        .skip(1)
        .step_by(2)
        .collect();
    let best = candidates
        .iter()
        .map(|c| (levenshtein(unknown, c), *c))
        .min_by_key(|&(d, _)| d);
    match best {
        Some((d, c)) if d <= 2 => format!("{message}; did you mean `{c}`?"),
        _ => message.to_string(),
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
