//! Uniform-grid spatial hash over the domain box.
//!
//! Queries return a superset of the particles within the requested radius;
//! exactness of rate evaluation is unaffected because the index only prunes
//! tuples whose kernel supports cannot intersect.

use crate::geometry::Point;
use crate::network::Network;
use crate::state::{ParticleMeasure, ParticleRef};

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    cell_size: f64,
    dims: [usize; 3],
    lo: Point,
    dim: usize,
    cells: Vec<Vec<ParticleRef>>,
    /// Measure epoch this index was built from.
    pub epoch: u64,
}

impl NeighborIndex {
    /// Build with the default cell size of twice the kernel radius (the
    /// pairwise pruning distance for candidate tuples).
    pub fn build(net: &Network, m: &ParticleMeasure) -> Self {
        Self::build_with_cell(net, m, 2.0 * net.kernel.epsilon)
    }

    pub fn build_with_cell(net: &Network, m: &ParticleMeasure, cell_size: f64) -> Self {
        let dim = net.domain.dim;
        let mut dims = [1usize; 3];
        for i in 0..dim {
            dims[i] = ((net.domain.side(i) / cell_size).ceil() as usize).max(1);
        }
        let n_cells: usize = dims.iter().product();
        let mut idx = NeighborIndex {
            cell_size,
            dims,
            lo: net.domain.lo,
            dim,
            cells: vec![Vec::new(); n_cells],
            epoch: m.epoch,
        };
        for x in 0..m.n_species() {
            for (slot, p) in m.particles(x).iter().enumerate() {
                let c = idx.cell_of(&p.pos);
                idx.cells[c].push((x, slot));
            }
        }
        idx
    }

    fn cell_coord(&self, pos: &Point, axis: usize) -> usize {
        let c = ((pos[axis] - self.lo[axis]) / self.cell_size).floor() as isize;
        c.clamp(0, self.dims[axis] as isize - 1) as usize
    }

    fn cell_of(&self, pos: &Point) -> usize {
        let mut flat = 0;
        let mut stride = 1;
        for i in 0..self.dim {
            flat += self.cell_coord(pos, i) * stride;
            stride *= self.dims[i];
        }
        flat
    }

    /// Append a superset of the particles within `radius` of `pos` to `out`.
    pub fn query(&self, pos: &Point, radius: f64, out: &mut Vec<ParticleRef>) {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for i in 0..self.dim {
            let a = ((pos[i] - radius - self.lo[i]) / self.cell_size).floor() as isize;
            let b = ((pos[i] + radius - self.lo[i]) / self.cell_size).floor() as isize;
            lo[i] = a.clamp(0, self.dims[i] as isize - 1) as usize;
            hi[i] = b.clamp(0, self.dims[i] as isize - 1) as usize;
        }
        let mut c = lo;
        loop {
            let mut flat = 0;
            let mut stride = 1;
            for i in 0..self.dim {
                flat += c[i] * stride;
                stride *= self.dims[i];
            }
            out.extend_from_slice(&self.cells[flat]);
            // advance the cell odometer
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    return;
                }
                c[axis] += 1;
                if c[axis] <= hi[axis] {
                    break;
                }
                c[axis] = lo[axis];
                axis += 1;
            }
        }
    }
}
