//! Configuration document: a TOML key-value tree with blocks `domain`,
//! `kernel`, `scaling`, `species` (array), `reactions` (array), optional
//! `initial`, `solver`, `limits` and `experiment` blocks.
//!
//! Parse errors carry the line/column reported by the TOML parser;
//! validation errors name the offending species or reaction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{point_from, Domain, Kernel, KernelFamily, Motion, Point, ORIGIN};
use crate::network::rate::{MassCenter, MassFunctional, RateFactor, RateKind};
use crate::network::{
    classify_reaction, Abundance, Locality, Network, ReactionLocality, Species,
    DEFAULT_MAX_JUMPS_PER_UNIT_TIME, DEFAULT_MAX_PARTICLES,
};

// ---------------------------------------------------------------------------
// Raw schema (serde side)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawConfig {
    domain: RawDomain,
    kernel: RawKernel,
    scaling: RawScaling,
    #[serde(default)]
    limits: RawLimits,
    #[serde(default)]
    species: Vec<RawSpecies>,
    #[serde(default)]
    reactions: Vec<RawReaction>,
    #[serde(default)]
    initial: BTreeMap<String, RawInitial>,
    #[serde(default)]
    solver: Option<SolverSettings>,
    #[serde(default)]
    experiment: Option<ExperimentSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDomain {
    bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawKernel {
    epsilon: f64,
    family: KernelFamily,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawScaling {
    n: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLimits {
    max_particles: Option<usize>,
    max_jumps_per_unit_time: Option<f64>,
}

impl Default for RawLimits {
    fn default() -> Self {
        RawLimits { max_particles: None, max_jumps_per_unit_time: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpecies {
    name: String,
    /// Anchor point; present iff the species is localized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<Vec<f64>>,
    #[serde(default = "default_abundance")]
    abundance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift: Option<Vec<f64>>,
    #[serde(default)]
    sigma2: f64,
}

fn default_abundance() -> String {
    "big".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawReaction {
    name: String,
    #[serde(default)]
    sources: Vec<String>,
    /// Per-source consumption flags; defaults to all true.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    consume: Option<Vec<bool>>,
    #[serde(default)]
    products: Vec<String>,
    /// Reaction location; present iff the reaction is localized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at: Option<Vec<f64>>,
    rate: RawRate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<RawMass>,
    #[serde(default)]
    scale_exponent: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawRate {
    Constant { c: f64 },
    SpatialTable { cells: Vec<usize>, values: Vec<f64> },
    HillRepress { c1: f64, c2: f64, k: f64 },
    HillActivate { c1: f64, c2: f64, k: f64 },
    Saturating { c1: f64, c2: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMass {
    targets: Vec<String>,
    /// Fixed window centre; absent means the window follows the candidate
    /// reaction location.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    radius: f64,
    /// Ramp width; defaults to radius / 10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ramp: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawInitial {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile: Option<ProfileSpec>,
}

// ---------------------------------------------------------------------------
// Public config types
// ---------------------------------------------------------------------------

/// Initial data for one species.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Exact molecule count (small localized species, or any species in an
    /// unscaled run).
    Count(u64),
    /// Mass density profile; particle runs sample `floor(N * mass)` molecules
    /// from it, field runs grid it directly.
    Profile(ProfileSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    /// Constant density with the given total mass.
    Uniform { mass: f64 },
    /// Smooth cosine bump centred at `center` with support half-width `width`.
    Bump { center: Vec<f64>, width: f64, mass: f64 },
    /// Point mass; gridded by the hat stencil, sampled at the point.
    Point { at: Vec<f64>, mass: f64 },
}

impl ProfileSpec {
    pub fn mass(&self) -> f64 {
        match self {
            ProfileSpec::Uniform { mass }
            | ProfileSpec::Bump { mass, .. }
            | ProfileSpec::Point { mass, .. } => *mass,
        }
    }
}

/// Discretization settings for the density solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
}

fn default_cells() -> usize {
    128
}
fn default_dt() -> f64 {
    1e-3
}
fn default_scheme() -> String {
    "imex".into()
}
fn default_cfl() -> f64 {
    0.9
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            cells: default_cells(),
            dt: default_dt(),
            scheme: default_scheme(),
            cfl_safety: default_cfl(),
        }
    }
}

/// Experiment block: what the harness should run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    SingleRunExact {
        t_end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot_every: Option<f64>,
    },
    SingleRunPide {
        t_end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot_every: Option<f64>,
    },
    SingleRunPdmp {
        t_end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot_every: Option<f64>,
    },
    ConvergenceInN {
        n_values: Vec<u32>,
        ensemble: usize,
        t_end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bandwidth: Option<f64>,
    },
    GeneratorCheck {
        delta: f64,
        replicates: usize,
    },
    QvCheck {
        t_end: f64,
        replicates: usize,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        scales: Vec<u32>,
    },
    StationaryCheck {
        burn_in: f64,
        samples: usize,
        thin: f64,
    },
    SteadyState {
        tol: f64,
    },
}

/// A parsed configuration: the network plus run-level blocks.
#[derive(Debug, Clone)]
pub struct Config {
    pub network: Network,
    /// Initial data indexed like `network.species`.
    pub initial: Vec<InitialSpec>,
    pub solver: SolverSettings,
    pub experiment: Option<ExperimentSpec>,
    raw: RawConfig,
}

impl Config {
    /// Serialize back to the config text format. Derived reaction data is
    /// reconstructed on re-parse, so parse(serialize(c)) reproduces it.
    pub fn to_config_string(&self) -> String {
        toml::to_string(&self.raw).expect("config serialization")
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| SimError::config(format!("config parse: {e}")))?;
    build(raw)
}

/// Parse just the network portion of a configuration document.
pub fn parse_network(text: &str) -> Result<Network> {
    parse_config(text).map(|c| c.network)
}

fn point_checked(coords: &[f64], dim: usize, what: &str) -> Result<Point> {
    if coords.len() != dim {
        return Err(SimError::config(format!(
            "{what}: expected {dim} coordinates, got {}",
            coords.len()
        )));
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(SimError::config(format!("{what}: non-finite coordinate")));
    }
    Ok(point_from(coords))
}

fn build(raw: RawConfig) -> Result<Config> {
    let domain = Domain::new(&raw.domain.bounds)?;
    let kernel = Kernel::new(domain.dim, raw.kernel.epsilon, raw.kernel.family)?;

    if raw.species.is_empty() {
        return Err(SimError::config("at least one species is required"));
    }
    let mut species = Vec::with_capacity(raw.species.len());
    for rs in &raw.species {
        if raw.species.iter().filter(|o| o.name == rs.name).count() > 1 {
            return Err(SimError::config(format!("duplicate species name '{}'", rs.name)));
        }
        let locality = match &rs.anchor {
            Some(a) => Locality::Localized {
                anchor: point_checked(a, domain.dim, &format!("species '{}' anchor", rs.name))?,
            },
            None => Locality::Diffusive,
        };
        let abundance = match rs.abundance.as_str() {
            "big" => Abundance::Big,
            "small" => Abundance::Small,
            other => {
                return Err(SimError::config(format!(
                    "species '{}': abundance must be 'big' or 'small', got '{other}'",
                    rs.name
                )))
            }
        };
        let drift = match &rs.drift {
            Some(d) => point_checked(d, domain.dim, &format!("species '{}' drift", rs.name))?,
            None => ORIGIN,
        };
        species.push(Species {
            name: rs.name.clone(),
            locality,
            abundance,
            motion: Motion { drift, sigma2: rs.sigma2 },
        });
    }

    let find = |name: &str, rxn: &str| -> Result<usize> {
        species
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| {
                SimError::config(format!("reaction '{rxn}' references unknown species '{name}'"))
            })
    };

    let mut reactions = Vec::with_capacity(raw.reactions.len());
    for rr in &raw.reactions {
        if raw.reactions.iter().filter(|o| o.name == rr.name).count() > 1 {
            return Err(SimError::config(format!("duplicate reaction name '{}'", rr.name)));
        }
        let sources = rr
            .sources
            .iter()
            .map(|n| find(n, &rr.name))
            .collect::<Result<Vec<_>>>()?;
        let products = rr
            .products
            .iter()
            .map(|n| find(n, &rr.name))
            .collect::<Result<Vec<_>>>()?;
        let consume = match &rr.consume {
            Some(flags) => flags.clone(),
            None => vec![true; sources.len()],
        };
        let locality = match &rr.at {
            Some(loc) => ReactionLocality::Localized {
                location: point_checked(loc, domain.dim, &format!("reaction '{}' location", rr.name))?,
            },
            None => ReactionLocality::NonLocalized,
        };
        let kind = match &rr.rate {
            RawRate::Constant { c } => RateKind::Constant { c: *c },
            RawRate::SpatialTable { cells, values } => RateKind::SpatialTable {
                cells: cells.clone(),
                values: values.clone(),
                lo: domain.lo,
                hi: domain.hi,
            },
            RawRate::HillRepress { c1, c2, k } => {
                RateKind::HillRepress { c1: *c1, c2: *c2, k: *k }
            }
            RawRate::HillActivate { c1, c2, k } => {
                RateKind::HillActivate { c1: *c1, c2: *c2, k: *k }
            }
            RawRate::Saturating { c1, c2 } => RateKind::Saturating { c1: *c1, c2: *c2 },
        };
        let mass = match &rr.mass {
            Some(m) => {
                let targets = m
                    .targets
                    .iter()
                    .map(|n| find(n, &rr.name))
                    .collect::<Result<Vec<_>>>()?;
                let center = match &m.center {
                    Some(c) => MassCenter::Fixed(point_checked(
                        c,
                        domain.dim,
                        &format!("reaction '{}' mass center", rr.name),
                    )?),
                    None => MassCenter::Reaction,
                };
                Some(MassFunctional {
                    targets,
                    center,
                    radius: m.radius,
                    ramp: m.ramp.unwrap_or(0.1 * m.radius),
                })
            }
            None => None,
        };
        let rate = RateFactor { kind, mass, scale_exponent: rr.scale_exponent };
        reactions.push(classify_reaction(
            &rr.name, sources, consume, products, locality, rate, &species,
        )?);
    }

    let network = Network {
        species,
        reactions,
        domain,
        kernel,
        scale: raw.scaling.n,
        max_particles: raw.limits.max_particles.unwrap_or(DEFAULT_MAX_PARTICLES),
        max_jumps_per_unit_time: raw
            .limits
            .max_jumps_per_unit_time
            .unwrap_or(DEFAULT_MAX_JUMPS_PER_UNIT_TIME),
    };
    network.validate()?;

    let mut initial = Vec::with_capacity(network.species.len());
    for s in &network.species {
        let spec = match raw.initial.get(&s.name) {
            Some(RawInitial { count: Some(c), profile: None }) => InitialSpec::Count(*c),
            Some(RawInitial { count: None, profile: Some(p) }) => {
                if let ProfileSpec::Bump { center, .. } | ProfileSpec::Point { at: center, .. } = p
                {
                    point_checked(center, network.domain.dim, &format!("initial for '{}'", s.name))?;
                }
                InitialSpec::Profile(p.clone())
            }
            Some(_) => {
                return Err(SimError::config(format!(
                    "initial data for '{}' must set exactly one of count/profile",
                    s.name
                )))
            }
            None => InitialSpec::Count(0),
        };
        if s.is_small() {
            if let InitialSpec::Profile(_) = spec {
                return Err(SimError::config(format!(
                    "small species '{}' takes an integer initial count, not a profile",
                    s.name
                )));
            }
        }
        initial.push(spec);
    }
    for name in raw.initial.keys() {
        if network.species_index(name).is_none() {
            return Err(SimError::config(format!("initial data for unknown species '{name}'")));
        }
    }

    let solver = raw.solver.clone().unwrap_or_default();
    let experiment = raw.experiment.clone();
    Ok(Config { network, initial, solver, experiment, raw })
}
