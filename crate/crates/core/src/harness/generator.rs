//! Generator consistency diagnostic: Monte Carlo drift estimates of
//! observables over a short window from a frozen state, compared with the
//! analytically assembled reaction-plus-motion operator.

use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::exact_sim::{draw_event, execute_reaction};
use crate::geometry::diffuse_step;
use crate::network::Network;
use crate::rng::{exp1, stream};
use crate::state::{
    candidate_tuples, collect_tuple_rates, tuple_generator_integral, NeighborIndex, Observable,
    ParticleMeasure, Tuple, TupleRate,
};

use super::stats;

/// Observable change caused by a firing of `r` with the given tuple at
/// location `y`: inserted products minus consumed sources, with particle
/// weights.
pub fn observable_jump(
    net: &Network,
    m: &ParticleMeasure,
    r_id: usize,
    tuple: &Tuple,
    obs: &Observable,
    y: &crate::geometry::Point,
) -> f64 {
    let r = &net.reactions[r_id];
    let mut delta = 0.0;
    for (j, &x) in r.products.iter().enumerate() {
        if r.inserted[j] {
            let pos = net.species[x].anchor().unwrap_or(y);
            delta += net.weight(x) * obs.eval(x, pos);
        }
    }
    for (i, &pref) in tuple.refs().iter().enumerate() {
        if r.consume[i] {
            let p = m.get(pref);
            delta -= net.weight(pref.0) * obs.eval(pref.0, &p.pos);
        }
    }
    delta
}

/// Motion part of the generator applied to `F(<M, f>)`:
/// `F'(v) sum w (b . grad f + sigma2/2 lap f) +
///  F''(v)/N sum w sigma2/2 |grad f|^2`.
pub fn assembled_motion_term(net: &Network, m: &ParticleMeasure, obs: &Observable) -> f64 {
    let v = m.observe(net, obs);
    let mut drift = 0.0;
    let mut carre = 0.0;
    for x in 0..net.species.len() {
        if !net.species[x].moves() || !obs.applies_to(x) {
            continue;
        }
        let w = net.weight(x);
        let motion = &net.species[x].motion;
        for p in m.particles(x) {
            let g = obs.gradient(&p.pos);
            let lap = obs.laplacian(&p.pos);
            let mut b_dot_g = 0.0;
            let mut g2 = 0.0;
            for i in 0..net.domain.dim {
                b_dot_g += motion.drift[i] * g[i];
                g2 += g[i] * g[i];
            }
            drift += w * (b_dot_g + motion.sigma2 / 2.0 * lap);
            carre += w * motion.sigma2 / 2.0 * g2;
        }
    }
    obs.outer.d1(v) * drift + obs.outer.d2(v) * carre / net.scale as f64
}

/// Reaction part of the generator for one reaction: the tuple sum of
/// location integrals of the local rate weighted by the observable change.
pub fn assembled_reaction_term(
    net: &Network,
    m: &ParticleMeasure,
    index: &NeighborIndex,
    r_id: usize,
    obs: &Observable,
) -> Result<f64> {
    let r = &net.reactions[r_id];
    let v = m.observe(net, obs);
    let mut total = 0.0;
    for tuple in candidate_tuples(net, m, r, index)? {
        total += tuple_generator_integral(net, m, r, &tuple, |y| {
            let jump = observable_jump(net, m, r_id, &tuple, obs, y);
            obs.outer.eval(v + jump) - obs.outer.eval(v)
        })?;
    }
    Ok(total)
}

/// Full assembled generator: reaction terms plus the motion term.
pub fn assembled_generator(
    net: &Network,
    m: &ParticleMeasure,
    index: &NeighborIndex,
    obs: &Observable,
) -> Result<f64> {
    let mut total = assembled_motion_term(net, m, obs);
    for r_id in 0..net.reactions.len() {
        total += assembled_reaction_term(net, m, index, r_id, obs)?;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct GeneratorEntry {
    pub label: String,
    pub mc_drift: f64,
    pub mc_se: f64,
    pub assembled: f64,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratorReport {
    pub delta: f64,
    pub replicates: usize,
    pub entries: Vec<GeneratorEntry>,
}

impl GeneratorReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.max_abs_z() < 3.0
    }
}

struct FrozenRates {
    rates: Vec<f64>,
    tuples: Vec<Vec<TupleRate>>,
}

fn freeze_rates(net: &Network, m: &ParticleMeasure, index: &NeighborIndex) -> Result<FrozenRates> {
    let mut rates = Vec::with_capacity(net.reactions.len());
    let mut tuples = Vec::with_capacity(net.reactions.len());
    for r_id in 0..net.reactions.len() {
        let (trs, total) = collect_tuple_rates(net, m, r_id, index, None)?;
        rates.push(total);
        tuples.push(trs);
    }
    Ok(FrozenRates { rates, tuples })
}

/// One replicate of the window [0, delta]: reaction events from the frozen
/// rates (recomputing rates in the rare case an event fires), then one
/// accumulated diffusion move of length delta, exactly as the simulator's
/// micro-step would do with micro_dt = delta.
fn evolve_delta(
    net: &Network,
    template: &ParticleMeasure,
    frozen: &FrozenRates,
    index0: &NeighborIndex,
    delta: f64,
    rep: u64,
    seed: u64,
) -> Result<ParticleMeasure> {
    let mut rng = stream(seed, rep);
    let mut m = template.clone();
    let mut t = 0.0;
    let mut rates = frozen.rates.clone();
    let mut budgets: Vec<f64> = rates.iter().map(|_| exp1(&mut rng)).collect();
    let mut fresh: Option<(NeighborIndex, Vec<Vec<TupleRate>>)> = None;
    loop {
        let mut next: Option<(usize, f64)> = None;
        for (r, &rate) in rates.iter().enumerate() {
            if rate > 0.0 {
                let s = budgets[r] / rate;
                if next.map_or(true, |(_, best)| s < best) {
                    next = Some((r, s));
                }
            }
        }
        match next {
            Some((r_star, s_star)) if t + s_star < delta => {
                for (r, &rate) in rates.iter().enumerate() {
                    budgets[r] -= rate * s_star;
                }
                t += s_star;
                let tuples = match &fresh {
                    Some((_, tuples)) => &tuples[r_star],
                    None => &frozen.tuples[r_star],
                };
                let record =
                    draw_event(net, &m, &mut rng, r_star, tuples, rates[r_star], t)?;
                execute_reaction(net, &mut m, &record)?;
                budgets[r_star] = exp1(&mut rng);
                // The measure changed: rebuild rates for the remainder.
                let index = NeighborIndex::build(net, &m);
                let refreshed = freeze_rates(net, &m, &index)?;
                rates = refreshed.rates;
                fresh = Some((index, refreshed.tuples));
            }
            _ => break,
        }
    }
    let _ = index0;
    let rng_ref = &mut rng;
    m.move_particles(net, |x, pos| {
        diffuse_step(pos, &net.species[x].motion, &net.domain, delta, rng_ref)
    })?;
    Ok(m)
}

/// Compare Monte Carlo drift `(E[F_f(M_delta)] - F_f(M)) / delta` against
/// the assembled generator at a frozen state, one z-score per observable.
pub fn generator_check(
    net: &Network,
    m: &ParticleMeasure,
    observables: &[(String, Observable)],
    delta: f64,
    replicates: usize,
    seed: u64,
) -> Result<GeneratorReport> {
    for (label, obs) in observables {
        if !obs.is_smooth() {
            return Err(SimError::config(format!(
                "observable '{label}' is not smooth enough for the generator diagnostic"
            )));
        }
    }
    let index = NeighborIndex::build(net, m);
    let frozen = freeze_rates(net, m, &index)?;
    let finals: Vec<ParticleMeasure> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| evolve_delta(net, m, &frozen, &index, delta, rep, seed))
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(observables.len());
    for (label, obs) in observables {
        let v0 = obs.outer.eval(m.observe(net, obs));
        let diffs: Vec<f64> = finals
            .iter()
            .map(|mf| (obs.outer.eval(mf.observe(net, obs)) - v0) / delta)
            .collect();
        let mc_drift = stats::mean(&diffs);
        let mc_se = stats::standard_error(&diffs);
        let assembled = assembled_generator(net, m, &index, obs)?;
        let z = if mc_se > 0.0 { (mc_drift - assembled) / mc_se } else { 0.0 };
        entries.push(GeneratorEntry {
            label: label.clone(),
            mc_drift,
            mc_se,
            assembled,
            z,
        });
    }
    Ok(GeneratorReport { delta, replicates, entries })
}

/// Default observable set: per-species indicators (identity and square)
/// plus smooth spatial profiles.
pub fn default_observables(net: &Network) -> Vec<(String, Observable)> {
    use crate::state::{Outer, SpatialPart};
    let mut out = Vec::new();
    for (x, s) in net.species.iter().enumerate() {
        out.push((
            format!("count[{}]", s.name),
            Observable {
                species: Some(x),
                spatial: SpatialPart::One,
                outer: Outer::Identity,
                domain: net.domain.clone(),
            },
        ));
        out.push((
            format!("count2[{}]", s.name),
            Observable {
                species: Some(x),
                spatial: SpatialPart::One,
                outer: Outer::Square,
                domain: net.domain.clone(),
            },
        ));
    }
    out.push((
        "bump".into(),
        Observable {
            species: None,
            spatial: SpatialPart::Bump,
            outer: Outer::Identity,
            domain: net.domain.clone(),
        },
    ));
    out.push((
        "quartic".into(),
        Observable {
            species: None,
            spatial: SpatialPart::FlatQuartic,
            outer: Outer::Identity,
            domain: net.domain.clone(),
        },
    ));
    out.push((
        "tanh-bump".into(),
        Observable {
            species: None,
            spatial: SpatialPart::Bump,
            outer: Outer::Tanh,
            domain: net.domain.clone(),
        },
    ));
    out
}
