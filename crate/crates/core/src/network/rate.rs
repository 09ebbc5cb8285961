//! Rate factor library.
//!
//! Factors are drawn from a fixed set of closed forms so that boundedness and
//! Lipschitz continuity in the mass argument hold by construction; spatial
//! tables are range-checked at load time. Arbitrary runtime expressions are
//! deliberately not supported.

use crate::error::{Result, SimError};
use crate::geometry::{dist2, Domain, Point};

#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    /// h(y, a) = c.
    Constant { c: f64 },
    /// Tabulated h(y) on a uniform node grid spanning `[lo, hi]`,
    /// multilinear interpolation, constant in the mass argument.
    SpatialTable { cells: Vec<usize>, values: Vec<f64>, lo: Point, hi: Point },
    /// Hill repression c1 / (1 + (c2 a)^k).
    HillRepress { c1: f64, c2: f64, k: f64 },
    /// Hill activation c1 a^k / (c2^k + a^k).
    HillActivate { c1: f64, c2: f64, k: f64 },
    /// Saturating c1 a / (c2 + a).
    Saturating { c1: f64, c2: f64 },
}

/// Where the mass-functional window is centred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassCenter {
    /// Follow the candidate reaction location.
    Reaction,
    Fixed(Point),
}

/// Smoothed ball indicator weighting the local mass that regulates a rate:
/// value 1 inside `radius - ramp`, linear ramp down to 0 at `radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunctional {
    pub targets: Vec<usize>,
    pub center: MassCenter,
    pub radius: f64,
    pub ramp: f64,
}

impl MassFunctional {
    /// Window profile as a function of distance from the centre; sup is 1.
    pub fn profile(&self, dist: f64) -> f64 {
        if dist >= self.radius {
            0.0
        } else if dist <= self.radius - self.ramp {
            1.0
        } else {
            (self.radius - dist) / self.ramp
        }
    }

    pub fn eval(&self, center: &Point, pos: &Point, dim: usize) -> f64 {
        self.profile(dist2(center, pos, dim).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.ramp > 0.0) || self.ramp > self.radius {
            return Err(SimError::config(format!(
                "mass functional needs 0 < ramp <= radius, got radius {} ramp {}",
                self.radius, self.ramp
            )));
        }
        if self.targets.is_empty() {
            return Err(SimError::config("mass functional needs at least one target species"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFactor {
    pub kind: RateKind,
    pub mass: Option<MassFunctional>,
    /// Power of N multiplying the base factor in the pre-limit model
    /// (h^N = N^scale_exponent * h).
    pub scale_exponent: i32,
}

impl RateFactor {
    pub fn constant(c: f64) -> Self {
        RateFactor { kind: RateKind::Constant { c }, mass: None, scale_exponent: 0 }
    }

    pub fn depends_on_mass(&self) -> bool {
        !matches!(
            self.kind,
            RateKind::Constant { .. } | RateKind::SpatialTable { .. }
        )
    }

    pub fn depends_on_space(&self) -> bool {
        matches!(self.kind, RateKind::SpatialTable { .. })
    }

    /// Base factor h(y, a), without any power of N.
    pub fn eval(&self, y: &Point, a: f64) -> f64 {
        match &self.kind {
            RateKind::Constant { c } => *c,
            RateKind::SpatialTable { cells, values, lo, hi } => {
                table_eval(cells, values, lo, hi, y)
            }
            RateKind::HillRepress { c1, c2, k } => c1 / (1.0 + (c2 * a).powf(*k)),
            RateKind::HillActivate { c1, c2, k } => {
                let ak = a.powf(*k);
                c1 * ak / (c2.powf(*k) + ak)
            }
            RateKind::Saturating { c1, c2 } => c1 * a / (c2 + a),
        }
    }

    /// Supremum of h over the domain and over mass arguments in [0, a_max].
    pub fn sup(&self, a_max: f64) -> f64 {
        match &self.kind {
            RateKind::Constant { c } => *c,
            RateKind::SpatialTable { values, .. } => values.iter().copied().fold(0.0, f64::max),
            RateKind::HillRepress { c1, .. } => *c1,
            RateKind::HillActivate { c1, c2, k } => {
                let ak = a_max.powf(*k);
                c1 * ak / (c2.powf(*k) + ak)
            }
            RateKind::Saturating { c1, c2 } => c1 * a_max / (c2 + a_max),
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let check_pos = |v: f64, what: &str| -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                Err(SimError::config(format!(
                    "rate parameter {what} must be finite and > 0, got {v}"
                )))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            RateKind::Constant { c } => {
                if !(*c >= 0.0) || !c.is_finite() {
                    return Err(SimError::config(format!("constant rate must be >= 0, got {c}")));
                }
            }
            RateKind::SpatialTable { cells, values, .. } => {
                if cells.len() != domain.dim {
                    return Err(SimError::config("spatial table dimension mismatch"));
                }
                if cells.iter().any(|&n| n < 2) {
                    return Err(SimError::config("spatial table needs >= 2 nodes per axis"));
                }
                let expect: usize = cells.iter().product();
                if values.len() != expect {
                    return Err(SimError::config(format!(
                        "spatial table has {} values, expected {expect}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(SimError::config("spatial table values must be finite and >= 0"));
                }
            }
            RateKind::HillRepress { c1, c2, k } | RateKind::HillActivate { c1, c2, k } => {
                check_pos(*c1, "c1")?;
                check_pos(*c2, "c2")?;
                if !(*k >= 1.0) || !k.is_finite() {
                    return Err(SimError::config(format!(
                        "hill coefficient must be >= 1 so the factor stays Lipschitz, got {k}"
                    )));
                }
            }
            RateKind::Saturating { c1, c2 } => {
                check_pos(*c1, "c1")?;
                check_pos(*c2, "c2")?;
            }
        }
        if self.depends_on_mass() && self.mass.is_none() {
            return Err(SimError::config(
                "mass-dependent rate kinds need a mass functional block",
            ));
        }
        if let Some(m) = &self.mass {
            m.validate()?;
        }
        Ok(())
    }
}

/// Multilinear interpolation on node values, clamped at the edges.
fn table_eval(cells: &[usize], values: &[f64], lo: &Point, hi: &Point, y: &Point) -> f64 {
    let dim = cells.len();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for i in 0..dim {
        let n = cells[i];
        let span = hi[i] - lo[i];
        let u = ((y[i] - lo[i]) / span) * (n as f64 - 1.0);
        let u = u.clamp(0.0, n as f64 - 1.0);
        let b = (u.floor() as usize).min(n - 2);
        base[i] = b;
        frac[i] = (u - b as f64).clamp(0.0, 1.0);
    }
    let stride = |i: usize| -> usize { cells[..i].iter().product() };
    let mut total = 0.0;
    for corner in 0..(1usize << dim) {
        let mut idx = 0;
        let mut w = 1.0;
        for i in 0..dim {
            let is_hi = (corner >> i) & 1 == 1;
            let c = base[i] + usize::from(is_hi);
            idx += c * stride(i);
            w *= if is_hi { frac[i] } else { 1.0 - frac[i] };
        }
        total += w * values[idx];
    }
    total
}
