//! Point-measure state: the weighted particle population, observables, mass
//! functionals, spatial neighbor index, reactant-tuple enumeration and
//! reaction-rate evaluation.

mod index;
mod observable;
mod quad;
mod rates;

pub use index::NeighborIndex;
pub use observable::{Observable, Outer, SpatialPart};
pub use quad::{adaptive_midpoint, QuadOpts};
pub use rates::{
    candidate_tuples, collect_tuple_rates, falling_factorial, mass_functional, rate_upper_bound,
    total_rate, total_rate_cached, tuple_generator_integral, RateCache, Tuple, TupleRate,
};

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Result, SimError};
use crate::geometry::{dist2, Point};
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub pos: Point,
}

/// Reference to a live particle: (species index, slot within that species).
pub type ParticleRef = (usize, usize);

/// The finite weighted point measure describing the population.
///
/// Particles of small localized species carry weight 1, everything else
/// weight `1/N`. Positions of localized species always equal their anchor.
/// `epoch` increments on every mutation so that derived structures (neighbor
/// index, cached quadratures) can detect staleness.
#[derive(Debug, Clone)]
pub struct ParticleMeasure {
    per_species: Vec<Vec<Particle>>,
    locate: HashMap<u64, ParticleRef>,
    small_counts: Vec<u64>,
    next_id: u64,
    pub epoch: u64,
}

impl ParticleMeasure {
    pub fn new(n_species: usize) -> Self {
        ParticleMeasure {
            per_species: vec![Vec::new(); n_species],
            locate: HashMap::new(),
            small_counts: vec![0; n_species],
            next_id: 0,
            epoch: 0,
        }
    }

    pub fn n_species(&self) -> usize {
        self.per_species.len()
    }

    pub fn count(&self, species: usize) -> usize {
        self.per_species[species].len()
    }

    pub fn total_particles(&self) -> usize {
        self.per_species.iter().map(Vec::len).sum()
    }

    pub fn particles(&self, species: usize) -> &[Particle] {
        &self.per_species[species]
    }

    pub fn get(&self, r: ParticleRef) -> &Particle {
        &self.per_species[r.0][r.1]
    }

    pub fn find(&self, id: u64) -> Option<ParticleRef> {
        self.locate.get(&id).copied()
    }

    /// Mirror of the particle list for small species, kept for O(1) access.
    pub fn small_count(&self, species: usize) -> u64 {
        self.small_counts[species]
    }

    pub fn insert(&mut self, net: &Network, species: usize, pos: Point) -> Result<u64> {
        if let Some(anchor) = net.species[species].anchor() {
            if dist2(anchor, &pos, net.domain.dim) > 0.0 {
                return Err(SimError::logic(format!(
                    "localized species '{}' inserted off its anchor",
                    net.species[species].name
                )));
            }
        }
        debug_assert!(net.domain.contains(&pos));
        let id = self.next_id;
        self.next_id += 1;
        let slot = self.per_species[species].len();
        self.per_species[species].push(Particle { id, pos });
        self.locate.insert(id, (species, slot));
        if net.species[species].is_small() {
            self.small_counts[species] += 1;
        }
        self.epoch += 1;
        Ok(id)
    }

    pub fn remove(&mut self, net: &Network, id: u64) -> Result<Particle> {
        let (species, slot) = self
            .locate
            .remove(&id)
            .ok_or_else(|| SimError::logic(format!("removing unknown particle id {id}")))?;
        let list = &mut self.per_species[species];
        let removed = list.swap_remove(slot);
        if slot < list.len() {
            let moved = list[slot].id;
            self.locate.insert(moved, (species, slot));
        }
        if net.species[species].is_small() {
            self.small_counts[species] -= 1;
        }
        self.epoch += 1;
        Ok(removed)
    }

    /// Move every particle of mobile species with the supplied stepper.
    /// Counts and ids are untouched; only positions change.
    pub fn move_particles(
        &mut self,
        net: &Network,
        mut step: impl FnMut(usize, &Point) -> Result<Point>,
    ) -> Result<()> {
        for (x, list) in self.per_species.iter_mut().enumerate() {
            if !net.species[x].moves() {
                continue;
            }
            for p in list.iter_mut() {
                p.pos = step(x, &p.pos)?;
            }
        }
        self.epoch += 1;
        Ok(())
    }

    /// Total mass `<M, 1>`: small particles count 1, others 1/N.
    pub fn total_mass(&self, net: &Network) -> f64 {
        (0..self.n_species())
            .map(|x| self.count(x) as f64 * net.weight(x))
            .sum()
    }

    /// `<M, f> = sum_i weight_i * f(species_i, pos_i)`.
    pub fn observe(&self, net: &Network, f: &Observable) -> f64 {
        let mut total = 0.0;
        for x in 0..self.n_species() {
            if !f.applies_to(x) {
                continue;
            }
            let w = net.weight(x);
            for p in &self.per_species[x] {
                total += w * f.eval(x, &p.pos);
            }
        }
        total
    }

    /// Columnar text snapshot: species name, coordinates, weight.
    pub fn write_snapshot<W: Write>(&self, net: &Network, mut out: W) -> Result<()> {
        let dim = net.domain.dim;
        write!(out, "species")?;
        for i in 0..dim {
            write!(out, "\tx{}", i + 1)?;
        }
        writeln!(out, "\tweight")?;
        for x in 0..self.n_species() {
            let w = net.weight(x);
            for p in &self.per_species[x] {
                write!(out, "{}", net.species[x].name)?;
                for i in 0..dim {
                    write!(out, "\t{:.17e}", p.pos[i])?;
                }
                writeln!(out, "\t{w:.17e}")?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(net: &Network, input: R) -> Result<Self> {
        let mut m = ParticleMeasure::new(net.species.len());
        let dim = net.domain.dim;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != dim + 2 {
                return Err(SimError::config(format!(
                    "snapshot line {}: expected {} fields, got {}",
                    lineno + 1,
                    dim + 2,
                    fields.len()
                )));
            }
            let species = net.species_index(fields[0]).ok_or_else(|| {
                SimError::config(format!("snapshot line {}: unknown species", lineno + 1))
            })?;
            let mut pos = crate::geometry::ORIGIN;
            for i in 0..dim {
                pos[i] = fields[1 + i].parse::<f64>().map_err(|e| {
                    SimError::config(format!("snapshot line {}: {e}", lineno + 1))
                })?;
            }
            m.insert(net, species, pos)?;
        }
        Ok(m)
    }
}
