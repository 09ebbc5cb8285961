//! Uniform cell-centred grid over the domain box, discrete kernel stencils
//! and truncated convolutions.

use crate::error::{Result, SimError};
use crate::geometry::{dist2, Domain, Kernel, Point, ORIGIN};

/// Cell-centred uniform mesh; same cell count per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub domain: Domain,
    pub cells_per_axis: usize,
    pub dx: Point,
}

impl Grid {
    pub fn new(domain: &Domain, cells_per_axis: usize) -> Result<Self> {
        if domain.dim > 2 {
            return Err(SimError::config(
                "density grids support 1 or 2 spatial dimensions",
            ));
        }
        if cells_per_axis < 4 {
            return Err(SimError::config("need at least 4 cells per axis"));
        }
        let mut dx = ORIGIN;
        for i in 0..domain.dim {
            dx[i] = domain.side(i) / cells_per_axis as f64;
        }
        Ok(Grid { domain: domain.clone(), cells_per_axis, dx })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.dx[i]).product()
    }

    pub fn flat(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for i in 0..self.dim() {
            idx += coords[i] * stride;
            stride *= self.cells_per_axis;
        }
        idx
    }

    pub fn coords(&self, flat: usize) -> [usize; 2] {
        let mut c = [0usize; 2];
        let mut rem = flat;
        for i in 0..self.dim() {
            c[i] = rem % self.cells_per_axis;
            rem /= self.cells_per_axis;
        }
        c
    }

    pub fn center(&self, flat: usize) -> Point {
        let c = self.coords(flat);
        let mut p = ORIGIN;
        for i in 0..self.dim() {
            p[i] = self.domain.lo[i] + (c[i] as f64 + 0.5) * self.dx[i];
        }
        p
    }

    /// Integral of a cell array against the cell volume.
    pub fn integral(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Deposit a point mass by the cell-proportional hat stencil around the
    /// location (first-order, conservative).
    pub fn deposit_hat(&self, values: &mut [f64], point: &Point, amount: f64) {
        let dim = self.dim();
        let n = self.cells_per_axis;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for i in 0..dim {
            // Position in cell-centre coordinates.
            let u = (point[i] - self.domain.lo[i]) / self.dx[i] - 0.5;
            let b = u.floor();
            let clamped = b.clamp(0.0, (n - 1) as f64);
            base[i] = clamped as usize;
            if base[i] + 1 >= n {
                base[i] = n - 2;
            }
            frac[i] = (u - base[i] as f64).clamp(0.0, 1.0);
        }
        let density = amount / self.cell_volume();
        for corner in 0..(1usize << dim) {
            let mut coords = [0usize; 2];
            let mut w = 1.0;
            for i in 0..dim {
                let hi = (corner >> i) & 1 == 1;
                coords[i] = base[i] + usize::from(hi);
                w *= if hi { frac[i] } else { 1.0 - frac[i] };
            }
            values[self.flat(&coords[..dim])] += w * density;
        }
    }

    /// Per-cell values of the analytic kernel centred at an arbitrary point.
    pub fn kernel_field(&self, kernel: &Kernel, center: &Point) -> Vec<f64> {
        (0..self.n_cells())
            .map(|c| kernel.eval_dist2(dist2(&self.center(c), center, self.dim())))
            .collect()
    }
}

/// Radially symmetric stencil of cell-centre offsets within a radius, used
/// for kernel convolutions (discretely normalized so the convolution
/// conserves mass exactly) and for window evaluations (unnormalized).
#[derive(Debug, Clone)]
pub struct Stencil {
    offsets: Vec<[i32; 2]>,
    weights: Vec<f64>,
    dim: usize,
}

impl Stencil {
    pub fn new(
        grid: &Grid,
        radius: f64,
        profile: impl Fn(f64) -> f64,
        normalize: bool,
    ) -> Result<Self> {
        let dim = grid.dim();
        let mut reach = [0i32; 2];
        for i in 0..dim {
            reach[i] = (radius / grid.dx[i]).ceil() as i32;
        }
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let r2 = radius * radius;
        let mut o = [-reach[0], if dim > 1 { -reach[1] } else { 0 }];
        loop {
            let mut d2 = 0.0;
            for i in 0..dim {
                let d = o[i] as f64 * grid.dx[i];
                d2 += d * d;
            }
            if d2 <= r2 {
                let w = profile(d2.sqrt());
                if w != 0.0 {
                    offsets.push(o);
                    weights.push(w);
                }
            }
            // odometer over the offset box
            let mut axis = 0;
            loop {
                if axis == dim {
                    if normalize {
                        let total: f64 = weights.iter().sum::<f64>() * grid.cell_volume();
                        if total <= 0.0 {
                            return Err(SimError::config(
                                "kernel radius smaller than the grid can resolve",
                            ));
                        }
                        for w in &mut weights {
                            *w /= total;
                        }
                    }
                    return Ok(Stencil { offsets, weights, dim });
                }
                o[axis] += 1;
                if o[axis] <= reach[axis] {
                    break;
                }
                o[axis] = -reach[axis];
                axis += 1;
            }
        }
    }

    /// Discrete kernel stencil for the network's proximity kernel,
    /// renormalized to unit discrete mass. Errors when the kernel is
    /// unresolvable on the grid (radius below two cells).
    pub fn for_kernel(grid: &Grid, kernel: &Kernel) -> Result<Self> {
        let max_dx = (0..grid.dim()).map(|i| grid.dx[i]).fold(0.0f64, f64::max);
        if kernel.epsilon < 2.0 * max_dx {
            return Err(SimError::config(format!(
                "kernel radius {} is unresolvable on a grid with spacing {max_dx} \
                 (need at least two cells per radius)",
                kernel.epsilon
            )));
        }
        let k = *kernel;
        Stencil::new(grid, k.epsilon, move |d| k.eval_dist2(d * d), true)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Truncated convolution against the domain: cells outside the box
    /// contribute nothing. `out[c] = sum_o w_o input[c + o] * cell_volume`.
    pub fn convolve(&self, grid: &Grid, input: &[f64], out: &mut [f64]) {
        let n = grid.cells_per_axis as i32;
        let vol = grid.cell_volume();
        out.fill(0.0);
        match self.dim {
            1 => {
                for c in 0..n {
                    let mut acc = 0.0;
                    for (o, &w) in self.offsets.iter().zip(&self.weights) {
                        let j = c + o[0];
                        if j >= 0 && j < n {
                            acc += w * input[j as usize];
                        }
                    }
                    out[c as usize] = acc * vol;
                }
            }
            2 => {
                for cy in 0..n {
                    for cx in 0..n {
                        let mut acc = 0.0;
                        for (o, &w) in self.offsets.iter().zip(&self.weights) {
                            let jx = cx + o[0];
                            let jy = cy + o[1];
                            if jx >= 0 && jx < n && jy >= 0 && jy < n {
                                acc += w * input[(jy * n + jx) as usize];
                            }
                        }
                        out[(cy * n + cx) as usize] = acc * vol;
                    }
                }
            }
            _ => unreachable!(),
        }
    }

}
