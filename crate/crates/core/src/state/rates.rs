//! Reactant-tuple enumeration and reaction-rate evaluation.
//!
//! The total rate of a reaction is the sum over ordered, repetition-free
//! reactant tuples of the location integral of the local rate
//! `h^N(y, a(y)) * prod_i Gamma(pos_i - y)`, taken against Lebesgue measure
//! on the domain for non-localized reactions and a point evaluation for
//! localized ones. Tuples whose members sit farther than `2 epsilon` apart
//! are pruned (their kernel supports cannot share a location).

use std::collections::HashMap;

use crate::error::{Result, SimError};
use crate::geometry::{dist2, support_box, Point};
use crate::network::{MassCenter, Network, Reaction};
use crate::state::quad::{adaptive_midpoint, QuadOpts};
use crate::state::{NeighborIndex, ParticleMeasure, ParticleRef};

/// Ordered reactant tuple, at most `MAX_SOURCES` members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tuple {
    refs: [ParticleRef; 4],
    len: usize,
}

impl Tuple {
    pub fn empty() -> Self {
        Tuple { refs: [(0, 0); 4], len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn refs(&self) -> &[ParticleRef] {
        &self.refs[..self.len]
    }

    fn push(&mut self, r: ParticleRef) {
        self.refs[self.len] = r;
        self.len += 1;
    }

    fn pop(&mut self) {
        self.len -= 1;
    }

    /// Particle ids, for logging and cache keys.
    pub fn ids(&self, m: &ParticleMeasure) -> [u64; 4] {
        let mut ids = [u64::MAX; 4];
        for (i, &r) in self.refs().iter().enumerate() {
            ids[i] = m.get(r).id;
        }
        ids
    }

    pub fn positions(&self, m: &ParticleMeasure) -> Vec<Point> {
        self.refs().iter().map(|&r| m.get(r).pos).collect()
    }
}

/// Enumerate the ordered repetition-free tuples matching the reaction's
/// source type sequence whose members are pairwise within `2 epsilon`.
/// A reaction with no sources yields exactly one empty tuple.
pub fn candidate_tuples(
    net: &Network,
    m: &ParticleMeasure,
    r: &Reaction,
    index: &NeighborIndex,
) -> Result<Vec<Tuple>> {
    if index.epoch != m.epoch {
        return Err(SimError::logic(format!(
            "neighbor index stale (epoch {} vs measure {})",
            index.epoch, m.epoch
        )));
    }
    let k = r.order();
    let mut out = Vec::new();
    if k == 0 {
        out.push(Tuple::empty());
        return Ok(out);
    }
    let first = r.sources[0];
    let reach = 2.0 * net.kernel.epsilon;
    let reach2 = reach * reach;
    let mut scratch = Vec::new();
    for slot0 in 0..m.count(first) {
        let mut current = Tuple::empty();
        current.push((first, slot0));
        if k == 1 {
            out.push(current);
            continue;
        }
        scratch.clear();
        index.query(&m.get((first, slot0)).pos, reach, &mut scratch);
        fill_slots(net, m, r, reach2, &scratch, &mut current, &mut out);
    }
    Ok(out)
}

fn fill_slots(
    net: &Network,
    m: &ParticleMeasure,
    r: &Reaction,
    reach2: f64,
    candidates: &[ParticleRef],
    current: &mut Tuple,
    out: &mut Vec<Tuple>,
) {
    let j = current.len();
    if j == r.order() {
        out.push(*current);
        return;
    }
    let want = r.sources[j];
    'cand: for &c in candidates {
        if c.0 != want {
            continue;
        }
        let pos = &m.get(c).pos;
        for &prev in current.refs() {
            if prev == c {
                continue 'cand;
            }
            if dist2(&m.get(prev).pos, pos, net.domain.dim) > reach2 {
                continue 'cand;
            }
        }
        current.push(c);
        fill_slots(net, m, r, reach2, candidates, current, out);
        current.pop();
    }
}

/// Local regulating mass `a = <M, Psi_{r,y}>`: the weighted sum of the
/// smoothed window over the configured target species.
pub fn mass_functional(net: &Network, m: &ParticleMeasure, r: &Reaction, y: &Point) -> f64 {
    let Some(mass) = &r.rate.mass else {
        return 0.0;
    };
    let center = match mass.center {
        MassCenter::Reaction => *y,
        MassCenter::Fixed(p) => p,
    };
    let mut a = 0.0;
    for &x in &mass.targets {
        let w = net.weight(x);
        for p in m.particles(x) {
            a += w * mass.eval(&center, &p.pos, net.domain.dim);
        }
    }
    a
}

/// Pre-limit factor `h^N(y, a(y)) = N^{scale_exponent} h(y, a(y))`.
fn pre_limit_factor(net: &Network, m: &ParticleMeasure, r: &Reaction, y: &Point) -> f64 {
    let a = mass_functional(net, m, r, y);
    (net.scale as f64).powi(r.rate.scale_exponent) * r.rate.eval(y, a)
}

fn ball_inside_domain(net: &Network, pos: &Point) -> bool {
    let eps = net.kernel.epsilon;
    (0..net.domain.dim)
        .all(|i| pos[i] - eps >= net.domain.lo[i] && pos[i] + eps <= net.domain.hi[i])
}

/// Location integral of one tuple's local rate against the reaction's
/// locality measure.
fn tuple_rate_integral(
    net: &Network,
    m: &ParticleMeasure,
    r: &Reaction,
    tuple: &Tuple,
) -> Result<f64> {
    let positions = tuple.positions(m);
    if let Some(loc) = r.location() {
        let mut v = pre_limit_factor(net, m, r, loc);
        for p in &positions {
            if v == 0.0 {
                break;
            }
            v *= net.kernel.eval_between(p, loc);
        }
        return Ok(v);
    }
    // Constant unary rate with the kernel ball inside the domain integrates
    // to exactly the factor (the kernel is a probability density).
    let plain = !r.rate.depends_on_mass() && !r.rate.depends_on_space();
    if plain && positions.len() == 1 && ball_inside_domain(net, &positions[0]) {
        return Ok(pre_limit_factor(net, m, r, &positions[0]));
    }
    let Some((lo, hi)) = support_box(&net.domain, &positions, net.kernel.epsilon) else {
        return Ok(0.0);
    };
    adaptive_midpoint(
        &lo,
        &hi,
        net.domain.dim,
        |y| {
            let mut v = pre_limit_factor(net, m, r, y);
            for p in &positions {
                if v == 0.0 {
                    break;
                }
                v *= net.kernel.eval_between(p, y);
            }
            v
        },
        &QuadOpts::default(),
    )
    .map_err(|e| {
        SimError::numeric(format!(
            "reaction '{}' tuple {:?}: {e}",
            r.name,
            tuple.ids(m)
        ))
    })
}

/// Memo of per-tuple location integrals, keyed by particle identity. Valid
/// while no particle moves; callers clear it after diffusion steps. Since
/// ids are never reused, removals need no invalidation. Mass-regulated
/// rates are never cached (they depend on the whole measure).
#[derive(Debug, Default)]
pub struct RateCache {
    map: HashMap<(usize, [u64; 4]), f64>,
}

impl RateCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn tuple_rate_memo(
    net: &Network,
    m: &ParticleMeasure,
    r_id: usize,
    r: &Reaction,
    tuple: &Tuple,
    cache: Option<&mut RateCache>,
) -> Result<f64> {
    let cacheable = !r.rate.depends_on_mass();
    if let (true, Some(cache)) = (cacheable, cache) {
        let key = (r_id, tuple.ids(m));
        if let Some(&v) = cache.map.get(&key) {
            return Ok(v);
        }
        let v = tuple_rate_integral(net, m, r, tuple)?;
        cache.map.insert(key, v);
        return Ok(v);
    }
    tuple_rate_integral(net, m, r, tuple)
}

/// Total rate of reaction `r_id` for the current population.
pub fn total_rate(
    net: &Network,
    m: &ParticleMeasure,
    r_id: usize,
    index: &NeighborIndex,
) -> Result<f64> {
    total_rate_cached(net, m, r_id, index, None)
}

pub fn total_rate_cached(
    net: &Network,
    m: &ParticleMeasure,
    r_id: usize,
    index: &NeighborIndex,
    mut cache: Option<&mut RateCache>,
) -> Result<f64> {
    let r = &net.reactions[r_id];
    let mut total = 0.0;
    for tuple in candidate_tuples(net, m, r, index)? {
        total += tuple_rate_memo(net, m, r_id, r, &tuple, cache.as_deref_mut())?;
    }
    if !total.is_finite() {
        return Err(SimError::numeric(format!(
            "non-finite total rate for reaction '{}'",
            r.name
        )));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct TupleRate {
    pub tuple: Tuple,
    pub rate: f64,
}

/// Per-tuple rates plus their sum, for proportional event sampling.
pub fn collect_tuple_rates(
    net: &Network,
    m: &ParticleMeasure,
    r_id: usize,
    index: &NeighborIndex,
    mut cache: Option<&mut RateCache>,
) -> Result<(Vec<TupleRate>, f64)> {
    let r = &net.reactions[r_id];
    let mut out = Vec::new();
    let mut total = 0.0;
    for tuple in candidate_tuples(net, m, r, index)? {
        let rate = tuple_rate_memo(net, m, r_id, r, &tuple, cache.as_deref_mut())?;
        if rate > 0.0 {
            total += rate;
            out.push(TupleRate { tuple, rate });
        }
    }
    Ok((out, total))
}

/// Closed-form upper bound dominating `total_rate`: the locality measure is
/// bounded by `1 + Vol(E)`, the ordered tuple count by the product of
/// falling factorials of the species counts, each kernel factor by its sup,
/// and the factor by its sup over masses in `[0, <M,1>]` (the window profile
/// has sup 1).
pub fn rate_upper_bound(net: &Network, m: &ParticleMeasure, r_id: usize) -> f64 {
    let r = &net.reactions[r_id];
    let mut tuples = 1.0;
    for (x, &nu) in r.nu.iter().enumerate() {
        if nu > 0 {
            tuples *= falling_factorial(m.count(x) as u64, nu as u64);
        }
    }
    if tuples == 0.0 {
        return 0.0;
    }
    let a_max = m.total_mass(net);
    let sup_h = (net.scale as f64).powi(r.rate.scale_exponent) * r.rate.sup(a_max);
    let gamma_sup = net.kernel.sup().powi(r.order() as i32);
    (1.0 + net.domain.volume()) * tuples * gamma_sup * sup_h
}

pub fn falling_factorial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (n - i) as f64;
    }
    acc
}

/// Location integral of one tuple's local rate weighted by an arbitrary
/// function of the location: `int rho_r(dy) lambda(y) g(y)`. Used by the
/// generator and fluctuation diagnostics, which weight the rate by the
/// observable change a firing at `y` would cause.
pub fn tuple_generator_integral(
    net: &Network,
    m: &ParticleMeasure,
    r: &Reaction,
    tuple: &Tuple,
    g: impl Fn(&Point) -> f64,
) -> Result<f64> {
    let positions = tuple.positions(m);
    if let Some(loc) = r.location() {
        let mut v = pre_limit_factor(net, m, r, loc);
        for p in &positions {
            if v == 0.0 {
                break;
            }
            v *= net.kernel.eval_between(p, loc);
        }
        return Ok(v * g(loc));
    }
    let Some((lo, hi)) = support_box(&net.domain, &positions, net.kernel.epsilon) else {
        return Ok(0.0);
    };
    adaptive_midpoint(
        &lo,
        &hi,
        net.domain.dim,
        |y| {
            let mut v = pre_limit_factor(net, m, r, y);
            for p in &positions {
                if v == 0.0 {
                    break;
                }
                v *= net.kernel.eval_between(p, y);
            }
            v * g(y)
        },
        &QuadOpts::default(),
    )
}
