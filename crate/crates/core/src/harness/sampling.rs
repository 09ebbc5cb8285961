//! Initial particle populations drawn from the configured initial data.
//!
//! Abundant species sample `floor(N * mass)` molecules from the initial
//! density by inverse CDF on a fine grid, so the particle ensemble converges
//! deterministically to the field initial condition as N grows; discrete
//! species start at their exact configured counts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::geometry::ORIGIN;
use crate::network::{InitialSpec, Locality, Network, ProfileSpec};
use crate::pide::Grid;
use crate::state::ParticleMeasure;

/// Grid resolution used for inverse-CDF sampling of initial profiles.
const SAMPLING_CELLS: usize = 1024;

/// Initial discrete counts for the hybrid simulator.
pub fn initial_counts(net: &Network, initial: &[InitialSpec]) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; net.species.len()];
    for (x, spec) in initial.iter().enumerate() {
        if net.species[x].is_small() {
            match spec {
                InitialSpec::Count(c) => counts[x] = *c,
                InitialSpec::Profile(_) => {
                    return Err(SimError::config(format!(
                        "discrete species '{}' takes an integer initial count",
                        net.species[x].name
                    )))
                }
            }
        }
    }
    Ok(counts)
}

pub fn sample_initial_measure(
    net: &Network,
    initial: &[InitialSpec],
    rng: &mut ChaCha8Rng,
) -> Result<ParticleMeasure> {
    let mut m = ParticleMeasure::new(net.species.len());
    for (x, spec) in initial.iter().enumerate() {
        let anchor = net.species[x].anchor().copied();
        match (&net.species[x].locality, spec) {
            (Locality::Localized { .. }, InitialSpec::Count(c)) => {
                let a = anchor.unwrap();
                for _ in 0..*c {
                    m.insert(net, x, a)?;
                }
            }
            (Locality::Localized { .. }, InitialSpec::Profile(p)) => {
                let a = anchor.unwrap();
                let n = (net.scale as f64 * p.mass()).floor() as u64;
                for _ in 0..n {
                    m.insert(net, x, a)?;
                }
            }
            (Locality::Diffusive, InitialSpec::Count(c)) => {
                for _ in 0..*c {
                    let pos = net.domain.sample_uniform(rng);
                    m.insert(net, x, pos)?;
                }
            }
            (Locality::Diffusive, InitialSpec::Profile(p)) => {
                let n = (net.scale as f64 * p.mass()).floor() as u64;
                if n == 0 {
                    continue;
                }
                sample_profile(net, &mut m, x, p, n, rng)?;
            }
        }
    }
    Ok(m)
}

fn sample_profile(
    net: &Network,
    m: &mut ParticleMeasure,
    species: usize,
    profile: &ProfileSpec,
    n: u64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let grid = Grid::new(&net.domain, sampling_cells(net.domain.dim))?;
    let mut density = vec![0.0; grid.n_cells()];
    crate::pide::fill_profile_values(&grid, &mut density, profile)?;
    let mut cumulative = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    for &d in &density {
        acc += d;
        cumulative.push(acc);
    }
    if acc <= 0.0 {
        return Err(SimError::config("initial profile has no mass to sample"));
    }
    for c in &mut cumulative {
        *c /= acc;
    }
    for _ in 0..n {
        let u: f64 = rng.gen();
        let cell = cumulative.partition_point(|&c| c < u).min(density.len() - 1);
        let base = grid.center(cell);
        let mut pos = ORIGIN;
        for i in 0..net.domain.dim {
            pos[i] = base[i] + (rng.gen::<f64>() - 0.5) * grid.dx[i];
        }
        m.insert(net, species, pos)?;
    }
    Ok(())
}

fn sampling_cells(dim: usize) -> usize {
    match dim {
        1 => SAMPLING_CELLS,
        _ => 128,
    }
}

/// Clone a network at a different abundance scale.
pub fn with_scale(net: &Network, scale: u32) -> Network {
    let mut out = net.clone();
    out.scale = scale;
    out
}
