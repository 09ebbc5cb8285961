//! Bundled example network configurations (also shipped under `configs/`).

/// Diffusive transcription-translation network; deterministic density limit.
pub const PROTEIN_DIFFUSIVE: &str = include_str!("../../../configs/protein_diffusive.toml");

/// Hill-repressed variant of [`PROTEIN_DIFFUSIVE`].
pub const PROTEIN_DIFFUSIVE_HILL: &str =
    include_str!("../../../configs/protein_diffusive_hill.toml");

/// Hybrid network: discrete localized mRNA, abundant diffusing protein.
pub const PROTEIN_HYBRID: &str = include_str!("../../../configs/protein_hybrid.toml");

/// Unscaled birth-death network for the generator diagnostic.
pub const BIRTH_DEATH_SPATIAL: &str = include_str!("../../../configs/birth_death_spatial.toml");

/// Single decaying species for the quadratic-variation diagnostic.
pub const PURE_DECAY: &str = include_str!("../../../configs/pure_decay.toml");

/// Uniform-ball kernel covering the domain; recovers mass-action kinetics.
pub const MASS_ACTION: &str = include_str!("../../../configs/mass_action.toml");
