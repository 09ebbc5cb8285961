//! Spatial domain, proximity kernel, reflected diffusion stepping and
//! reaction-location sampling.
//!
//! The domain is an axis-aligned box, which makes normal reflection exact
//! (coordinatewise triangle-wave folding) and keeps quadrature simple. The
//! proximity kernel is a probability density supported on the ball of radius
//! `epsilon`; the default Epanechnikov profile is continuous, the uniform-ball
//! profile is kept for mass-action recovery tests.

use crate::error::{Result, SimError};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

/// Position or displacement. Only the first `dim` coordinates of the
/// enclosing domain are meaningful; the rest stay zero.
pub type Point = [f64; MAX_DIM];

pub const ORIGIN: Point = [0.0; MAX_DIM];

pub fn point_from(coords: &[f64]) -> Point {
    let mut p = ORIGIN;
    p[..coords.len()].copy_from_slice(coords);
    p
}

pub fn dist2(a: &Point, b: &Point, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

/// Axis-aligned box `[lo_i, hi_i]` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl Domain {
    pub fn new(bounds: &[[f64; 2]]) -> Result<Self> {
        let dim = bounds.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(SimError::config(format!(
                "domain dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        let mut lo = ORIGIN;
        let mut hi = ORIGIN;
        for (i, b) in bounds.iter().enumerate() {
            if !b[0].is_finite() || !b[1].is_finite() || b[0] >= b[1] {
                return Err(SimError::config(format!(
                    "domain axis {i}: need finite lo < hi, got [{}, {}]",
                    b[0], b[1]
                )));
            }
            lo[i] = b[0];
            hi[i] = b[1];
        }
        Ok(Domain { dim, lo, hi })
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|i| self.side(i)).product()
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Point {
        let mut p = ORIGIN;
        for i in 0..self.dim {
            p[i] = self.lo[i] + rng.gen::<f64>() * self.side(i);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Epanechnikov,
    UniformBall,
}

/// Normalization constant making the kernel a probability density on R^d.
pub fn kernel_norm_const(dim: usize, epsilon: f64, family: KernelFamily) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(SimError::config(format!("kernel epsilon must be > 0, got {epsilon}")));
    }
    use std::f64::consts::PI;
    let c = match (family, dim) {
        // Epanechnikov (1 - |y|^2/eps^2)_+ integrates to:
        //   d=1: 4 eps / 3,  d=2: pi eps^2 / 2,  d=3: 8 pi eps^3 / 15.
        (KernelFamily::Epanechnikov, 1) => 3.0 / (4.0 * epsilon),
        (KernelFamily::Epanechnikov, 2) => 2.0 / (PI * epsilon * epsilon),
        (KernelFamily::Epanechnikov, 3) => 15.0 / (8.0 * PI * epsilon.powi(3)),
        (KernelFamily::UniformBall, 1) => 1.0 / (2.0 * epsilon),
        (KernelFamily::UniformBall, 2) => 1.0 / (PI * epsilon * epsilon),
        (KernelFamily::UniformBall, 3) => 3.0 / (4.0 * PI * epsilon.powi(3)),
        (_, d) => return Err(SimError::config(format!("unsupported kernel dimension {d}"))),
    };
    Ok(c)
}

/// Proximity kernel on displacements, supported on the closed ball
/// `B(0, epsilon)` and integrating to 1 over R^d. One kernel serves every
/// reaction; per-reaction kernels would slot in as a map keyed by reaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub dim: usize,
    pub epsilon: f64,
    pub family: KernelFamily,
    pub norm_const: f64,
}

impl Kernel {
    pub fn new(dim: usize, epsilon: f64, family: KernelFamily) -> Result<Self> {
        let norm_const = kernel_norm_const(dim, epsilon, family)?;
        Ok(Kernel { dim, epsilon, family, norm_const })
    }

    /// Kernel value for a displacement with squared length `d2`.
    pub fn eval_dist2(&self, d2: f64) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        if d2 > e2 {
            return 0.0;
        }
        match self.family {
            KernelFamily::Epanechnikov => self.norm_const * (1.0 - d2 / e2),
            KernelFamily::UniformBall => self.norm_const,
        }
    }

    pub fn eval(&self, displacement: &Point) -> f64 {
        let d2 = dist2(displacement, &ORIGIN, self.dim);
        self.eval_dist2(d2)
    }

    pub fn eval_between(&self, a: &Point, b: &Point) -> f64 {
        self.eval_dist2(dist2(a, b, self.dim))
    }

    /// `sup Gamma = Gamma(0)`, the normalization constant for both families.
    pub fn sup(&self) -> f64 {
        self.norm_const
    }
}

/// Per-species movement: constant drift and isotropic squared dispersion.
/// An Euler step has mean `drift * dt` and per-coordinate variance
/// `sigma2 * dt` before reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub drift: Point,
    pub sigma2: f64,
}

impl Motion {
    pub const FROZEN: Motion = Motion { drift: ORIGIN, sigma2: 0.0 };

    pub fn is_frozen(&self) -> bool {
        self.sigma2 == 0.0 && self.drift.iter().all(|&b| b == 0.0)
    }
}

/// Exact normal reflection into the box: triangle-wave folding per
/// coordinate. Idempotent on the box and `2(hi-lo)`-periodic outside.
pub fn reflect_into_box(pos: &Point, domain: &Domain) -> Result<Point> {
    let mut out = *pos;
    for i in 0..domain.dim {
        let v = pos[i];
        if !v.is_finite() {
            return Err(SimError::config(format!("non-finite coordinate {v} on axis {i}")));
        }
        let len = domain.side(i);
        let t = (v - domain.lo[i]).rem_euclid(2.0 * len);
        out[i] = domain.lo[i] + if t <= len { t } else { 2.0 * len - t };
    }
    Ok(out)
}

/// One Euler-Maruyama move reflected into the box.
pub fn diffuse_step<R: Rng>(
    pos: &Point,
    motion: &Motion,
    domain: &Domain,
    dt: f64,
    rng: &mut R,
) -> Result<Point> {
    debug_assert!(dt > 0.0);
    if motion.is_frozen() {
        return Ok(*pos);
    }
    let sd = (motion.sigma2 * dt).sqrt();
    let mut p = *pos;
    let mut i = 0;
    while i < domain.dim {
        let (z0, z1) = crate::rng::normal_pair(rng);
        p[i] += motion.drift[i] * dt + sd * z0;
        if i + 1 < domain.dim {
            p[i + 1] += motion.drift[i + 1] * dt + sd * z1;
        }
        i += 2;
    }
    reflect_into_box(&p, domain)
}

/// Bounding box of the intersection of the domain with the `radius`-balls
/// around each anchor point; `None` when empty.
pub fn support_box(
    domain: &Domain,
    anchors: &[Point],
    radius: f64,
) -> Option<(Point, Point)> {
    let mut lo = domain.lo;
    let mut hi = domain.hi;
    for a in anchors {
        for i in 0..domain.dim {
            lo[i] = lo[i].max(a[i] - radius);
            hi[i] = hi[i].min(a[i] + radius);
        }
    }
    for i in 0..domain.dim {
        if lo[i] > hi[i] {
            return None;
        }
    }
    Some((lo, hi))
}

/// Default cap on rejection-sampling proposals before giving up.
pub const REJECTION_CAP: usize = 200_000;

/// Draw a reaction location with density proportional to
/// `factor(y) * prod_i Gamma(pos_i - y)` over the domain, by rejection
/// against the bounding box of the kernel-support intersection with the
/// envelope `factor_sup * sup(Gamma)^k`.
///
/// For localized reactions the caller short-circuits to the fixed location;
/// this routine handles the spatially distributed case (including `k = 0`,
/// where the proposal box is the whole domain).
pub fn sample_reaction_location<R: Rng>(
    domain: &Domain,
    kernel: &Kernel,
    reactant_positions: &[Point],
    factor: impl Fn(&Point) -> f64,
    factor_sup: f64,
    rng: &mut R,
) -> Result<Point> {
    let (lo, hi) = support_box(domain, reactant_positions, kernel.epsilon).ok_or_else(|| {
        SimError::logic("reaction location sampling on reactants with disjoint kernel supports")
    })?;
    let envelope = factor_sup * kernel.sup().powi(reactant_positions.len() as i32);
    if !(envelope > 0.0) || !envelope.is_finite() {
        return Err(SimError::logic(format!(
            "invalid rejection envelope {envelope} for location sampling"
        )));
    }
    for _ in 0..REJECTION_CAP {
        let mut y = ORIGIN;
        for i in 0..domain.dim {
            y[i] = lo[i] + rng.gen::<f64>() * (hi[i] - lo[i]);
        }
        let mut density = factor(&y);
        for p in reactant_positions {
            density *= kernel.eval_between(p, &y);
            if density == 0.0 {
                break;
            }
        }
        debug_assert!(density <= envelope * (1.0 + 1e-12));
        if rng.gen::<f64>() * envelope < density {
            return Ok(y);
        }
    }
    Err(SimError::numeric(format!(
        "rejection sampling exceeded {REJECTION_CAP} proposals (k={}, envelope={envelope}); \
         the acceptance region is degenerate",
        reactant_positions.len()
    )))
}
