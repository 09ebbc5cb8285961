//! Quadratic-variation diagnostic: the centred observable process
//! `Z_t = <M_t, f> - <M_0, f> - int drift` is a martingale whose variance at
//! time T matches the mean of its predicted quadratic variation
//! `int sum_r (rate x jump^2) + motion term`. Flow-class reactions
//! contribute at order 1/N, jump-class reactions at order 1.

use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::exact_sim::{EventRecord, PathObserver, SimState};
use crate::network::Network;
use crate::rng::stream;
use crate::state::{
    candidate_tuples, tuple_generator_integral, NeighborIndex, Observable, ParticleMeasure,
    SpatialPart,
};

use super::generator::observable_jump;
use super::stats;

/// Accumulates the drift and predicted quadratic variation along one path,
/// using the same frozen-rate segments as the simulator itself.
struct QvObserver<'a> {
    obs: &'a Observable,
    /// Per-reaction observable jump when it is location-independent
    /// (species-indicator observables): drift and QV reduce to the already
    /// computed total rates.
    const_jump: Vec<Option<f64>>,
    drift: f64,
    qv: f64,
}

impl<'a> QvObserver<'a> {
    fn new(net: &Network, obs: &'a Observable) -> Self {
        let const_jump = net
            .reactions
            .iter()
            .map(|r| {
                if obs.spatial != SpatialPart::One {
                    return None;
                }
                let mut delta = 0.0;
                for (j, &x) in r.products.iter().enumerate() {
                    if r.inserted[j] && obs.applies_to(x) {
                        delta += net.weight(x);
                    }
                }
                for (i, &x) in r.sources.iter().enumerate() {
                    if r.consume[i] && obs.applies_to(x) {
                        delta -= net.weight(x);
                    }
                }
                Some(delta)
            })
            .collect();
        QvObserver { obs, const_jump, drift: 0.0, qv: 0.0 }
    }
}

impl PathObserver for QvObserver<'_> {
    fn segment(
        &mut self,
        net: &Network,
        measure: &ParticleMeasure,
        index: &NeighborIndex,
        rates: &[f64],
        _time: f64,
        dt: f64,
    ) -> Result<()> {
        for (r_id, r) in net.reactions.iter().enumerate() {
            match self.const_jump[r_id] {
                Some(delta) => {
                    if delta != 0.0 && rates[r_id] > 0.0 {
                        self.drift += dt * delta * rates[r_id];
                        self.qv += dt * delta * delta * rates[r_id];
                    }
                }
                None => {
                    for tuple in candidate_tuples(net, measure, r, index)? {
                        let d = tuple_generator_integral(net, measure, r, &tuple, |y| {
                            observable_jump(net, measure, r_id, &tuple, self.obs, y)
                        })?;
                        let q = tuple_generator_integral(net, measure, r, &tuple, |y| {
                            let j = observable_jump(net, measure, r_id, &tuple, self.obs, y);
                            j * j
                        })?;
                        self.drift += dt * d;
                        self.qv += dt * q;
                    }
                }
            }
        }
        if self.obs.spatial != SpatialPart::One {
            // Motion contributes to both the drift and (at order 1/N) the
            // fluctuation of spatially structured observables.
            let mut drift = 0.0;
            let mut carre = 0.0;
            for x in 0..net.species.len() {
                if !net.species[x].moves() || !self.obs.applies_to(x) {
                    continue;
                }
                let w = net.weight(x);
                let motion = &net.species[x].motion;
                for p in measure.particles(x) {
                    let g = self.obs.gradient(&p.pos);
                    let lap = self.obs.laplacian(&p.pos);
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
            self.drift += dt * drift;
            self.qv += dt * 2.0 * carre / net.scale as f64;
        }
        Ok(())
    }

    fn event(&mut self, _net: &Network, _record: &EventRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QvReport {
    pub paths: usize,
    /// Empirical variance of the centred observable at the horizon.
    pub var_z: f64,
    /// Ensemble mean of the predicted quadratic variation.
    pub mean_qv: f64,
    /// var_z / mean_qv; the martingale isometry puts it near 1.
    pub ratio: f64,
    /// Standard error of mean_qv (for scaling comparisons across N).
    pub se_qv: f64,
    /// Mean of Z (should sit within a few standard errors of 0).
    pub mean_z: f64,
    pub se_z: f64,
}

/// Run `paths` trajectories and compare the empirical variance of `Z_T`
/// with the mean predicted quadratic variation. The initial population is
/// drawn per path by `make_initial` (resampling keeps ensemble averages
/// unbiased; pass a cloning closure to freeze one population instead).
pub fn qv_check<F>(
    net: &Network,
    make_initial: F,
    obs: &Observable,
    t_end: f64,
    paths: usize,
    micro_dt: f64,
    seed: u64,
) -> Result<QvReport>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<ParticleMeasure> + Sync,
{
    if !obs.is_smooth() {
        return Err(SimError::config(
            "the quadratic-variation diagnostic needs a smooth observable",
        ));
    }
    let results: Vec<(f64, f64)> = (0..paths as u64)
        .into_par_iter()
        .map(|path| -> Result<(f64, f64)> {
            let mut init_rng = stream(seed, 2 * path);
            let m0 = make_initial(&mut init_rng)?;
            let mut sim = SimState::new(net, m0, micro_dt, stream(seed, 2 * path + 1))?;
            let v0 = sim.measure.observe(net, obs);
            let mut observer = QvObserver::new(net, obs);
            sim.advance_observed(net, t_end, Some(&mut observer))?;
            let z = sim.measure.observe(net, obs) - v0 - observer.drift;
            Ok((z, observer.qv))
        })
        .collect::<Result<_>>()?;
    let zs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let qvs: Vec<f64> = results.iter().map(|r| r.1).collect();
    let var_z = stats::variance(&zs);
    let mean_qv = stats::mean(&qvs);
    Ok(QvReport {
        paths,
        var_z,
        mean_qv,
        ratio: var_z / mean_qv,
        se_qv: stats::standard_error(&qvs),
        mean_z: stats::mean(&zs),
        se_z: stats::standard_error(&zs),
    })
}
