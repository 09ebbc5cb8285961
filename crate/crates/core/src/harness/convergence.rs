//! Convergence of the particle system to its deterministic density limit:
//! run ensembles of exact simulations at increasing abundance scale, smooth
//! the empirical measures, and measure distances to the solver reference.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::exact_sim::SimState;
use crate::network::Config;
use crate::pide::{DensityField, Solver, SolverConfig};
use crate::rng::stream;
use crate::state::ParticleMeasure;

use super::empirical::{default_bandwidth, empirical_density, smoothing_floor};
use super::sampling::{sample_initial_measure, with_scale};
use super::stats;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceEntry {
    pub scale: u32,
    pub bandwidth: f64,
    /// L1 distance of the ensemble-averaged smoothed density to the solver
    /// reference at the checkpoint.
    pub l1: f64,
    /// L1 distance between the smoothed reference and itself: the error
    /// attributable to smoothing alone.
    pub smoothing_floor: f64,
    /// Wasserstein-1 per diffusive species (one dimension only).
    pub wasserstein: Vec<f64>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub t_end: f64,
    pub ensemble: usize,
    pub entries: Vec<ConvergenceEntry>,
    /// Fitted slope of log L1 error against log N.
    pub slope: f64,
}

impl ConvergenceReport {
    pub fn monotone_decreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].l1 < w[0].l1)
    }
}

/// Ensemble of exact trajectories at one scale; trajectory `i` uses the
/// stream derived from `(seed, i)`, so results are independent of the
/// worker count.
pub fn run_ensemble(
    net: &crate::network::Network,
    initial: &[crate::network::InitialSpec],
    t_end: f64,
    ensemble: usize,
    seed: u64,
) -> Result<Vec<ParticleMeasure>> {
    (0..ensemble as u64)
        .into_par_iter()
        .map(|i| -> Result<ParticleMeasure> {
            let mut rng = stream(seed, 2 * i);
            let m0 = sample_initial_measure(net, initial, &mut rng)?;
            let mut sim = SimState::new(net, m0, net.default_micro_dt(), stream(seed, 2 * i + 1))?;
            sim.advance(net, t_end)?;
            Ok(sim.measure)
        })
        .collect()
}

/// For each scale in `n_values`: ensemble-run the particle system to
/// `t_end`, smooth, and compare against the density solve of the same
/// network. Returns per-scale distances, smoothing floors and the fitted
/// error slope.
pub fn run_convergence_in_n(
    cfg: &Config,
    n_values: &[u32],
    ensemble: usize,
    t_end: f64,
    bandwidth_override: Option<f64>,
    seed: u64,
) -> Result<(ConvergenceReport, DensityField, Vec<DensityField>)> {
    let solver_cfg = SolverConfig::from_settings(&cfg.solver)?;
    let solver = Solver::new(&cfg.network, solver_cfg)?;
    let grid = solver.grid.clone();
    let field0 = DensityField::from_initial(&cfg.network, &cfg.initial, grid.clone())?;
    let reference = solver.solve(&cfg.network, &field0, t_end, None)?;

    let mut entries = Vec::with_capacity(n_values.len());
    let mut estimates = Vec::with_capacity(n_values.len());
    for (k, &n) in n_values.iter().enumerate() {
        let start = std::time::Instant::now();
        let net = with_scale(&cfg.network, n);
        let measures = run_ensemble(&net, &cfg.initial, t_end, ensemble, seed ^ (k as u64) << 32)?;
        let bandwidth = bandwidth_override.unwrap_or_else(|| default_bandwidth(&net, &grid));
        let est = empirical_density(&net, &measures, bandwidth, grid.cells_per_axis)?;
        let l1 = est.l1_distance(&reference);
        let floor = smoothing_floor(&reference, bandwidth);
        let mut wasserstein = Vec::new();
        if net.domain.dim == 1 {
            for x in 0..net.species.len() {
                if let (Some(a), Some(b)) = (&est.cells[x], &reference.cells[x]) {
                    if est.species_mass(x) > 1e-9 && reference.species_mass(x) > 1e-9 {
                        wasserstein.push(stats::wasserstein1_grid(a, b, grid.dx[0])?);
                    }
                }
            }
        }
        entries.push(ConvergenceEntry {
            scale: n,
            bandwidth,
            l1,
            smoothing_floor: floor,
            wasserstein,
            runtime_seconds: start.elapsed().as_secs_f64(),
        });
        estimates.push(est);
    }
    let xs: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.l1).collect();
    let slope = stats::log_log_slope(&xs, &ys);
    Ok((ConvergenceReport { t_end, ensemble, entries, slope }, reference, estimates))
}
