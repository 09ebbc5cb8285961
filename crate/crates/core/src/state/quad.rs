//! Adaptive midpoint quadrature over an axis-aligned box.
//!
//! The rate integrands are continuous with compact support and at most a few
//! kernel factors, so midpoint rules on successively doubled grids converge
//! quickly; refinement stops when the relative change drops below the
//! tolerance.

use crate::error::{Result, SimError};
use crate::geometry::{Point, ORIGIN};

#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub rel_tol: f64,
    /// Number of grid doublings tried after the coarsest level.
    pub max_level: u32,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts { rel_tol: 1e-6, max_level: 12 }
    }
}

fn midpoint_pass(lo: &Point, hi: &Point, dim: usize, m: usize, f: &impl Fn(&Point) -> f64) -> f64 {
    let mut h = [0.0f64; 3];
    let mut vol = 1.0;
    for i in 0..dim {
        h[i] = (hi[i] - lo[i]) / m as f64;
        vol *= h[i];
    }
    let mut total = 0.0;
    let mut idx = [0usize; 3];
    loop {
        let mut y = ORIGIN;
        for i in 0..dim {
            y[i] = lo[i] + (idx[i] as f64 + 0.5) * h[i];
        }
        total += f(&y);
        let mut axis = 0;
        loop {
            if axis == dim {
                return total * vol;
            }
            idx[axis] += 1;
            if idx[axis] < m {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Integrate `f` over the box `[lo, hi]`, refining until the relative change
/// between successive grids is below `opts.rel_tol`.
pub fn adaptive_midpoint(
    lo: &Point,
    hi: &Point,
    dim: usize,
    f: impl Fn(&Point) -> f64,
    opts: &QuadOpts,
) -> Result<f64> {
    for i in 0..dim {
        if hi[i] <= lo[i] {
            return Ok(0.0);
        }
    }
    let mut m = 4usize;
    let mut prev = midpoint_pass(lo, hi, dim, m, &f);
    for _ in 0..opts.max_level {
        m *= 2;
        let cur = midpoint_pass(lo, hi, dim, m, &f);
        let diff = (cur - prev).abs();
        if diff <= opts.rel_tol * cur.abs().max(1e-300) || diff <= 1e-15 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(SimError::numeric(format!(
        "quadrature did not converge after {} refinement levels (last value {prev:.6e})",
        opts.max_level
    )))
}
