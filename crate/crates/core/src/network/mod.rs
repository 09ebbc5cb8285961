//! Species and reaction definitions, validation, and the scaling
//! classification used by the multi-scale limits.
//!
//! A network couples a species list, a reaction list, the box domain, the
//! proximity kernel and the abundance scale `N`. Abundant species carry
//! particle weight `1/N`, discrete (small localized) species weight 1.
//! Reactions that change no discrete count form the `Flow` class (they drive
//! the continuum limit); the rest form the `Jump` class (they drive the
//! hybrid simulator's jumps).

mod config;
mod rate;

pub use config::{
    parse_config, parse_network, Config, ExperimentSpec, InitialSpec, ProfileSpec, SolverSettings,
};
pub use rate::{MassCenter, MassFunctional, RateFactor, RateKind};

use crate::error::{Result, SimError};
use crate::geometry::{dist2, Domain, Kernel, Motion, Point};

pub const MAX_SOURCES: usize = 4;

/// Default hard cap on total particle count (explosion guard standing in for
/// unverifiable non-explosivity of the configured rates).
pub const DEFAULT_MAX_PARTICLES: usize = 10_000_000;

/// Default cap on hybrid-simulator jumps per unit time.
pub const DEFAULT_MAX_JUMPS_PER_UNIT_TIME: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Locality {
    Diffusive,
    Localized { anchor: Point },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Abundance {
    /// O(N) molecules; particle weight 1/N.
    Big,
    /// O(1) molecules; particle weight 1. Only allowed for localized species.
    Small,
}

#[derive(Debug, Clone)]
pub struct Species {
    pub name: String,
    pub locality: Locality,
    pub abundance: Abundance,
    pub motion: Motion,
}

impl Species {
    pub fn is_small(&self) -> bool {
        self.abundance == Abundance::Small
    }

    pub fn anchor(&self) -> Option<&Point> {
        match &self.locality {
            Locality::Localized { anchor } => Some(anchor),
            Locality::Diffusive => None,
        }
    }

    pub fn moves(&self) -> bool {
        matches!(self.locality, Locality::Diffusive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReactionLocality {
    NonLocalized,
    Localized { location: Point },
}

/// Whether a reaction changes the counts of any small localized species.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionClass {
    /// Leaves every discrete count unchanged; contributes to the continuum
    /// flow, sped up by N in the scaling.
    Flow,
    /// Changes at least one discrete count; stays an O(1)-rate jump.
    Jump,
}

#[derive(Debug, Clone)]
pub struct Reaction {
    pub name: String,
    /// Source species, reordered so abundant sources come first.
    pub sources: Vec<usize>,
    /// Per-source: false marks a catalyst that is left untouched when the
    /// reaction fires (its matching product occurrence is suppressed).
    pub consume: Vec<bool>,
    /// Product species, reordered so abundant products come first.
    pub products: Vec<usize>,
    /// Per-product: false marks the suppressed re-insertion bound to a
    /// non-consumed source of the same species.
    pub inserted: Vec<bool>,
    pub locality: ReactionLocality,
    pub rate: RateFactor,
    // Derived data.
    /// Stoichiometric source counts per species.
    pub nu: Vec<u32>,
    /// Stoichiometric product counts per species.
    pub nu_prime: Vec<u32>,
    /// Number of abundant sources (k_{r,b}).
    pub abundant_sources: usize,
    /// Number of abundant products (k'_{r,b}).
    pub abundant_products: usize,
    pub class: ReactionClass,
    /// Species whose particles or masses affect this reaction's rate
    /// (sources plus mass-functional targets), sorted.
    pub rate_deps: Vec<usize>,
    /// True when the rate can change between diffusion micro-steps because a
    /// dependency species moves.
    pub depends_on_motion: bool,
}

impl Reaction {
    pub fn order(&self) -> usize {
        self.sources.len()
    }

    pub fn location(&self) -> Option<&Point> {
        match &self.locality {
            ReactionLocality::Localized { location } => Some(location),
            ReactionLocality::NonLocalized => None,
        }
    }

    /// Exponent of N in the scaled rate factor: `k_{r,b} - 1` for flow
    /// reactions, `k_{r,b}` for jump reactions.
    pub fn scaling_exponent(&self) -> i32 {
        let base = self.abundant_sources as i32;
        match self.class {
            ReactionClass::Flow => base - 1,
            ReactionClass::Jump => base,
        }
    }

    /// Scaled rate factor at scale `n`: `N^{scaling_exponent} * h^N(y, a)`,
    /// where `h^N = N^{scale_exponent} * h` includes the configured blow-up.
    pub fn scaled_rate_factor(&self, n: u32, y: &Point, a: f64) -> f64 {
        let exp = self.scaling_exponent() + self.rate.scale_exponent;
        (n as f64).powi(exp) * self.rate.eval(y, a)
    }

    /// Exponent of N left in the scaled factor; the continuum and hybrid
    /// limits exist only when this is zero ("balanced" scaling).
    pub fn limit_exponent(&self) -> i32 {
        self.scaling_exponent() + self.rate.scale_exponent
    }

    /// N-free limit of the scaled rate factor. Only meaningful when
    /// `limit_exponent() == 0`; solvers validate that first.
    pub fn limit_rate_factor(&self, y: &Point, a: f64) -> f64 {
        self.rate.eval(y, a)
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub species: Vec<Species>,
    pub reactions: Vec<Reaction>,
    pub domain: Domain,
    pub kernel: Kernel,
    /// Abundance scale N >= 1.
    pub scale: u32,
    pub max_particles: usize,
    pub max_jumps_per_unit_time: f64,
}

impl Network {
    /// Particle weight of a species at the configured scale.
    pub fn weight(&self, species: usize) -> f64 {
        if self.species[species].is_small() {
            1.0
        } else {
            1.0 / self.scale as f64
        }
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn small_species(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.species.len()).filter(|&x| self.species[x].is_small())
    }

    pub fn has_small_species(&self) -> bool {
        self.species.iter().any(|s| s.is_small())
    }

    /// Default diffusion micro-step for the particle simulator:
    /// `min(0.01, eps^2 / (8 max sigma2))`, keeping a step's RMS displacement
    /// below about half the kernel radius.
    pub fn default_micro_dt(&self) -> f64 {
        let max_s2 = self
            .species
            .iter()
            .map(|s| s.motion.sigma2)
            .fold(0.0f64, f64::max);
        if max_s2 > 0.0 {
            (self.kernel.epsilon * self.kernel.epsilon / (8.0 * max_s2)).min(0.01)
        } else {
            0.01
        }
    }

    /// Validation shared by the parser and programmatic construction.
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(SimError::config("scale N must be >= 1"));
        }
        if self.kernel.dim != self.domain.dim {
            return Err(SimError::config("kernel and domain dimension mismatch"));
        }
        for (x, s) in self.species.iter().enumerate() {
            match &s.locality {
                Locality::Localized { anchor } => {
                    if !self.domain.contains(anchor) {
                        return Err(SimError::config(format!(
                            "species '{}' anchored outside the domain",
                            s.name
                        )));
                    }
                    if !s.motion.is_frozen() {
                        return Err(SimError::config(format!(
                            "localized species '{}' must have zero drift and diffusion",
                            s.name
                        )));
                    }
                }
                Locality::Diffusive => {
                    if s.is_small() {
                        return Err(SimError::config(format!(
                            "species '{}': small abundance requires a localized species",
                            s.name
                        )));
                    }
                    if !(s.motion.sigma2 > 0.0) {
                        return Err(SimError::config(format!(
                            "diffusive species '{}' needs sigma2 > 0",
                            s.name
                        )));
                    }
                }
            }
            let _ = x;
        }
        for r in &self.reactions {
            if r.order() > MAX_SOURCES {
                return Err(SimError::config(format!(
                    "reaction '{}' has {} sources; at most {MAX_SOURCES} supported",
                    r.name,
                    r.order()
                )));
            }
            if let Some(loc) = r.location() {
                if !self.domain.contains(loc) {
                    return Err(SimError::config(format!(
                        "reaction '{}' localized outside the domain",
                        r.name
                    )));
                }
            }
            // Localized species may only be created by a reaction localized
            // at their anchor; suppressed catalyst re-insertions are exempt.
            for (j, &x) in r.products.iter().enumerate() {
                if !r.inserted[j] {
                    continue;
                }
                if let Some(anchor) = self.species[x].anchor() {
                    let ok = match r.location() {
                        Some(loc) => dist2(loc, anchor, self.domain.dim) == 0.0,
                        None => false,
                    };
                    if !ok {
                        return Err(SimError::config(format!(
                            "reaction '{}' produces localized species '{}' away from its anchor",
                            r.name, self.species[x].name
                        )));
                    }
                }
            }
            r.rate.validate(&self.domain)?;
            if let Some(mass) = &r.rate.mass {
                for &t in &mass.targets {
                    if t >= self.species.len() {
                        return Err(SimError::config(format!(
                            "reaction '{}': mass functional targets unknown species {t}",
                            r.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Derive stoichiometry, abundant-source counts and the flow/jump class for
/// a reaction, and put abundant sources and products first.
pub fn classify_reaction(
    name: &str,
    sources: Vec<usize>,
    consume: Vec<bool>,
    products: Vec<usize>,
    locality: ReactionLocality,
    rate: RateFactor,
    species: &[Species],
) -> Result<Reaction> {
    let n_species = species.len();
    for &x in sources.iter().chain(products.iter()) {
        if x >= n_species {
            return Err(SimError::config(format!(
                "reaction '{name}' references unknown species index {x}"
            )));
        }
    }
    if consume.len() != sources.len() {
        return Err(SimError::config(format!(
            "reaction '{name}': consume flags must match the source list"
        )));
    }

    let mut nu = vec![0u32; n_species];
    let mut nu_prime = vec![0u32; n_species];
    for &x in &sources {
        nu[x] += 1;
    }
    for &x in &products {
        nu_prime[x] += 1;
    }

    // Bind each non-consumed source to one product occurrence of the same
    // species; that occurrence is suppressed when the reaction executes.
    let mut inserted = vec![true; products.len()];
    for (i, &x) in sources.iter().enumerate() {
        if consume[i] {
            continue;
        }
        match products
            .iter()
            .enumerate()
            .position(|(j, &p)| p == x && inserted[j])
        {
            Some(j) => inserted[j] = false,
            None => {
                return Err(SimError::config(format!(
                    "reaction '{name}': non-consumed source '{}' needs a matching product \
                     occurrence to bind to",
                    species[x].name
                )))
            }
        }
    }

    // Flow iff no small species changes count.
    let mut small_change = 0u32;
    for x in 0..n_species {
        if species[x].is_small() {
            small_change += nu[x].abs_diff(nu_prime[x]);
        }
    }
    let class = if small_change == 0 {
        ReactionClass::Flow
    } else {
        ReactionClass::Jump
    };

    // Abundant-first ordering for sources (with their flags) and products.
    let mut src: Vec<(usize, bool)> = sources.iter().copied().zip(consume.iter().copied()).collect();
    src.sort_by_key(|&(x, _)| species[x].is_small());
    let (sources, consume): (Vec<_>, Vec<_>) = src.into_iter().unzip();
    let mut prod: Vec<(usize, bool)> =
        products.iter().copied().zip(inserted.iter().copied()).collect();
    prod.sort_by_key(|&(x, _)| species[x].is_small());
    let (products, inserted): (Vec<_>, Vec<_>) = prod.into_iter().unzip();

    let abundant_sources = sources.iter().filter(|&&x| !species[x].is_small()).count();
    let abundant_products = products.iter().filter(|&&x| !species[x].is_small()).count();

    let mut rate_deps: Vec<usize> = sources.clone();
    if let Some(mass) = &rate.mass {
        rate_deps.extend_from_slice(&mass.targets);
    }
    rate_deps.sort_unstable();
    rate_deps.dedup();
    let depends_on_motion = rate_deps.iter().any(|&x| species[x].moves());

    Ok(Reaction {
        name: name.to_string(),
        sources,
        consume,
        products,
        inserted,
        locality,
        rate,
        nu,
        nu_prime,
        abundant_sources,
        abundant_products,
        class,
        rate_deps,
        depends_on_motion,
    })
}

#[cfg(test)]
mod tests;
