//! Stationary count sampling from the exact and hybrid simulators, for
//! cross-simulator comparison and stationary-law checks.

use rayon::prelude::*;

use crate::error::Result;
use crate::exact_sim::SimState;
use crate::network::{Config, Network};
use crate::pdmp::{HybridState, Pdmp};
use crate::pide::{DensityField, SolverConfig};
use crate::rng::stream;

use super::sampling::{initial_counts, sample_initial_measure};

/// Thinned post-burn-in samples of a discrete species' count from the
/// hybrid simulator, split across `chains` independent trajectories.
pub fn pdmp_count_samples(
    cfg: &Config,
    species: usize,
    burn_in: f64,
    n_samples: usize,
    thin: f64,
    chains: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let net = &cfg.network;
    let solver_cfg = SolverConfig::from_settings(&cfg.solver)?;
    let per_chain = n_samples.div_ceil(chains);
    let t_end = burn_in + per_chain as f64 * thin;
    let chains: Vec<Vec<u64>> = (0..chains as u64)
        .into_par_iter()
        .map(|chain| -> Result<Vec<u64>> {
            let pdmp = Pdmp::new(net, solver_cfg.clone())?;
            let grid = pdmp.solver.grid.clone();
            let continuous = DensityField::from_initial(net, &cfg.initial, grid)?;
            let counts = initial_counts(net, &cfg.initial)?;
            let mut state = HybridState::new(continuous, counts.clone());
            let mut rng = stream(seed, chain);
            let jumps = pdmp.run(net, &mut state, t_end, &mut rng, None)?;
            // Counts are piecewise constant between jumps; walk the log.
            let mut samples = Vec::with_capacity(per_chain);
            let mut count = counts[species] as i64;
            let mut jump_iter = jumps.iter().peekable();
            for k in 0..per_chain {
                let t = burn_in + (k + 1) as f64 * thin;
                while let Some(j) = jump_iter.peek() {
                    if j.time <= t {
                        for &(x, d) in &j.deltas {
                            if x == species {
                                count += d;
                            }
                        }
                        jump_iter.next();
                    } else {
                        break;
                    }
                }
                samples.push(count as u64);
            }
            Ok(samples)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<u64> = chains.into_iter().flatten().collect();
    out.truncate(n_samples);
    Ok(out)
}

/// Thinned post-burn-in samples of a species count from the exact particle
/// simulator.
pub fn exact_count_samples(
    net: &Network,
    cfg: &Config,
    species: usize,
    burn_in: f64,
    n_samples: usize,
    thin: f64,
    chains: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let per_chain = n_samples.div_ceil(chains);
    let chains: Vec<Vec<u64>> = (0..chains as u64)
        .into_par_iter()
        .map(|chain| -> Result<Vec<u64>> {
            let mut rng = stream(seed, 2 * chain);
            let m0 = sample_initial_measure(net, &cfg.initial, &mut rng)?;
            let mut sim =
                SimState::new(net, m0, net.default_micro_dt(), stream(seed, 2 * chain + 1))?;
            sim.advance(net, burn_in)?;
            let mut samples = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                let next = sim.time + thin;
                sim.advance(net, next)?;
                samples.push(sim.measure.count(species) as u64);
            }
            Ok(samples)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<u64> = chains.into_iter().flatten().collect();
    out.truncate(n_samples);
    Ok(out)
}

/// Histogram of counts.
pub fn histogram(samples: &[u64]) -> Vec<u64> {
    let max = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut hist = vec![0u64; max + 1];
    for &s in samples {
        hist[s as usize] += 1;
    }
    hist
}
