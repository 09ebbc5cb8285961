//! Hybrid simulator for networks with a few discrete localized molecules
//! coupled to abundant species: between jumps of the discrete counts the
//! abundant-species density follows the deterministic flow (the density
//! solver restricted to count-preserving reactions, with the discrete counts
//! entering through falling-factorial kernel factors), and the jump hazards
//! are integrated along that flow.

use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::geometry::Point;
use crate::network::{Network, ReactionClass};
use crate::pide::{DensityField, Solver, SolverConfig};
use crate::rng::exp1;

/// Hybrid state: a density field for the abundant species (discrete species
/// untracked) and integer counts for the discrete species.
#[derive(Debug, Clone)]
pub struct HybridState {
    pub continuous: DensityField,
    pub discrete: Vec<u64>,
    pub time: f64,
}

impl HybridState {
    pub fn new(continuous: DensityField, discrete: Vec<u64>) -> Self {
        let time = continuous.time;
        HybridState { continuous, discrete, time }
    }
}

/// One jump of the discrete counts.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub reaction: usize,
    /// Fixed location for localized reactions.
    pub location: Option<Point>,
    /// Count changes per discrete species.
    pub deltas: Vec<(usize, i64)>,
}

pub struct Pdmp {
    pub solver: Solver,
}

fn reborrow<'s, 'b>(
    cb: &'s mut Option<&mut (dyn FnMut(&HybridState) + 'b)>,
) -> Option<&'s mut (dyn FnMut(&HybridState) + 'b)> {
    match cb {
        Some(f) => Some(&mut **f),
        None => None,
    }
}

impl Pdmp {
    pub fn new(net: &Network, cfg: SolverConfig) -> Result<Self> {
        Ok(Pdmp { solver: Solver::new(net, cfg)? })
    }

    /// Advance the continuous part by `dt` with the discrete counts frozen.
    pub fn flow(&self, net: &Network, state: &mut HybridState, dt: f64) -> Result<()> {
        let coeff = state.continuous.clone();
        state.continuous =
            self.solver
                .step(net, &state.continuous, &coeff, dt, Some(&state.discrete))?;
        state.time = state.continuous.time;
        Ok(())
    }

    /// Instantaneous hazard of a count-changing reaction: the location
    /// integral of its intensity for the current continuous field and
    /// discrete counts. Zero whenever a required count is depleted.
    pub fn jump_hazard(&self, net: &Network, state: &HybridState, r_id: usize) -> Result<f64> {
        let intensity =
            self.solver
                .reaction_intensity(net, &state.continuous, Some(&state.discrete), r_id)?;
        Ok(intensity.total(&self.solver.grid))
    }

    fn jump_reactions<'a>(&self, net: &'a Network) -> impl Iterator<Item = usize> + 'a {
        net.reactions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.class == ReactionClass::Jump)
            .map(|(i, _)| i)
    }

    /// Flow until the first jump fires or the horizon is reached. Cumulative
    /// hazards are integrated on the flow's time grid with the trapezoid
    /// rule; the crossing time is located by linear interpolation inside the
    /// crossing step and the flow is re-run to it. Fresh unit-exponential
    /// budgets per call are equivalent to carrying residuals, by
    /// memorylessness. Returns the firing reaction, or `None` at horizon.
    pub fn next_jump(
        &self,
        net: &Network,
        state: &mut HybridState,
        horizon: f64,
        rng: &mut ChaCha8Rng,
        mut on_flow_step: Option<&mut (dyn FnMut(&HybridState) + '_)>,
    ) -> Result<Option<(f64, usize)>> {
        let jump_ids: Vec<usize> = self.jump_reactions(net).collect();
        if jump_ids.is_empty() {
            while state.time < horizon - 1e-12 {
                let dt = self.solver.cfg.dt.min(horizon - state.time);
                self.flow(net, state, dt)?;
                if let Some(cb) = on_flow_step.as_deref_mut() {
                    cb(state);
                }
            }
            return Ok(None);
        }
        let budgets: Vec<f64> = jump_ids.iter().map(|_| exp1(rng)).collect();
        let mut acc = vec![0.0; jump_ids.len()];
        let mut hazard_prev: Vec<f64> = jump_ids
            .iter()
            .map(|&r| self.jump_hazard(net, state, r))
            .collect::<Result<_>>()?;
        while state.time < horizon - 1e-12 {
            let dt = self.solver.cfg.dt.min(horizon - state.time);
            let saved = state.continuous.clone();
            let t_prev = state.time;
            self.flow(net, state, dt)?;
            let hazard_next: Vec<f64> = jump_ids
                .iter()
                .map(|&r| self.jump_hazard(net, state, r))
                .collect::<Result<_>>()?;
            // Earliest budget crossing within this step, if any.
            let mut best: Option<(usize, f64)> = None;
            for i in 0..jump_ids.len() {
                let inc = 0.5 * (hazard_prev[i] + hazard_next[i]) * dt;
                if inc > 0.0 && acc[i] + inc >= budgets[i] {
                    let theta = ((budgets[i] - acc[i]) / inc).clamp(0.0, 1.0);
                    if best.map_or(true, |(_, t)| theta < t) {
                        best = Some((i, theta));
                    }
                }
            }
            match best {
                Some((i, theta)) => {
                    // Re-run the flow from the step start to the jump time.
                    state.continuous = saved;
                    state.time = t_prev;
                    let partial = theta * dt;
                    if partial > 0.0 {
                        self.flow(net, state, partial)?;
                    }
                    return Ok(Some((state.time, jump_ids[i])));
                }
                None => {
                    for i in 0..jump_ids.len() {
                        acc[i] += 0.5 * (hazard_prev[i] + hazard_next[i]) * dt;
                    }
                    hazard_prev = hazard_next;
                    if let Some(cb) = on_flow_step.as_deref_mut() {
                        cb(state);
                    }
                }
            }
        }
        Ok(None)
    }

    /// Apply the count changes of a firing: `count_x += nu'_x - nu_x` for
    /// every discrete species. The continuous part is unchanged through the
    /// jump (abundant-species changes vanish in the limit).
    pub fn apply_jump(
        &self,
        net: &Network,
        state: &mut HybridState,
        r_id: usize,
    ) -> Result<JumpRecord> {
        let r = &net.reactions[r_id];
        let mut deltas = Vec::new();
        for x in net.small_species() {
            let nu = r.nu[x] as i64;
            let nu_prime = r.nu_prime[x] as i64;
            if nu == 0 && nu_prime == 0 {
                continue;
            }
            if (state.discrete[x] as i64) < nu {
                return Err(SimError::logic(format!(
                    "jump of '{}' with insufficient count of '{}' (hazard should vanish)",
                    r.name, net.species[x].name
                )));
            }
            let delta = nu_prime - nu;
            state.discrete[x] = (state.discrete[x] as i64 + delta) as u64;
            if delta != 0 {
                deltas.push((x, delta));
            }
        }
        Ok(JumpRecord {
            time: state.time,
            reaction: r_id,
            location: r.location().copied(),
            deltas,
        })
    }

    /// Alternate flow and jumps until `t_end`. Aborts when jumps accumulate
    /// faster than the configured cap per unit time.
    pub fn run(
        &self,
        net: &Network,
        state: &mut HybridState,
        t_end: f64,
        rng: &mut ChaCha8Rng,
        mut on_flow_step: Option<&mut (dyn FnMut(&HybridState) + '_)>,
    ) -> Result<Vec<JumpRecord>> {
        let mut jumps = Vec::new();
        let mut recent = std::collections::VecDeque::new();
        while state.time < t_end - 1e-12 {
            match self.next_jump(net, state, t_end, rng, reborrow(&mut on_flow_step))? {
                None => break,
                Some((tau, r_id)) => {
                    let record = self.apply_jump(net, state, r_id)?;
                    recent.push_back(tau);
                    while recent.front().is_some_and(|&t| t < tau - 1.0) {
                        recent.pop_front();
                    }
                    if recent.len() as f64 > net.max_jumps_per_unit_time {
                        return Err(SimError::Explosion(format!(
                            "{} jumps within one time unit at t = {tau:.6} exceed the cap {}; \
                             jump times appear to accumulate",
                            recent.len(),
                            net.max_jumps_per_unit_time
                        )));
                    }
                    jumps.push(record);
                }
            }
        }
        Ok(jumps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::geometry::{point_from, KernelFamily};
    use crate::network::{parse_config, InitialSpec, RateFactor, ReactionLocality};
    use crate::pide::{Grid, Scheme};
    use crate::rng::stream;
    use crate::state::tests::{build_net, diffusive, localized, ReactionDef};

    fn hybrid_setup() -> (crate::network::Network, Pdmp, HybridState) {
        let cfg = parse_config(bundled::PROTEIN_HYBRID).unwrap();
        let net = cfg.network.clone();
        let solver_cfg = SolverConfig::new(Scheme::Imex, 0.01, 32);
        let pdmp = Pdmp::new(&net, solver_cfg).unwrap();
        let grid = Grid::new(&net.domain, 32).unwrap();
        let continuous = DensityField::from_initial(&net, &cfg.initial, grid).unwrap();
        let mut discrete = vec![0u64; net.species.len()];
        for (x, init) in cfg.initial.iter().enumerate() {
            if net.species[x].is_small() {
                if let InitialSpec::Count(c) = init {
                    discrete[x] = *c;
                }
            }
        }
        let state = HybridState::new(continuous, discrete);
        (net, pdmp, state)
    }

    #[test]
    fn flow_identity_without_flow_reactions_or_motion() {
        // Only count-changing reactions and no diffusive species: the flow
        // leaves the continuous part untouched.
        let anchor = point_from(&[0.0]);
        let net = build_net(
            &[[-1.0, 1.0]],
            0.2,
            KernelFamily::Epanechnikov,
            10,
            vec![localized("s", anchor, true), localized("store", point_from(&[0.5]), false)],
            vec![ReactionDef {
                name: "src",
                sources: vec![],
                consume: vec![],
                products: vec![0],
                locality: ReactionLocality::Localized { location: anchor },
                rate: RateFactor::constant(1.0),
            }],
        );
        let pdmp = Pdmp::new(&net, SolverConfig::new(Scheme::Imex, 0.01, 32)).unwrap();
        let grid = Grid::new(&net.domain, 32).unwrap();
        let mut field = DensityField::zero(&net, grid);
        field.masses[1] = 1.25;
        let mut state = HybridState::new(field, vec![3, 0]);
        pdmp.flow(&net, &mut state, 0.05).unwrap();
        assert_eq!(state.continuous.masses[1], 1.25);
        assert_eq!(state.discrete[0], 3);
    }

    #[test]
    fn flow_source_follows_discrete_count() {
        // Between jumps the protein gains mass at rate h2 * Gamma(-y) * m.
        let (net, pdmp, mut state) = hybrid_setup();
        let mrna = net.species_index("mrna").unwrap();
        let protein = net.species_index("protein").unwrap();
        let translation = net.reactions.iter().position(|r| r.name == "translation").unwrap();
        state.discrete[mrna] = 3;
        let terms = pdmp
            .solver
            .reaction_terms(&net, &state.continuous, Some(&state.discrete))
            .unwrap();
        let gain = terms.gain_cells[protein].as_ref().unwrap();
        let grid = &pdmp.solver.grid;
        let anchor = point_from(&[0.0]);
        let h2 = 0.5;
        for flat in [0, grid.n_cells() / 2, grid.n_cells() - 1] {
            let y = grid.center(flat);
            let expect = h2 * 3.0 * net.kernel.eval_between(&anchor, &y);
            assert!((gain[flat] - expect).abs() < 1e-12, "cell {flat}");
        }
        // With the count depleted the falling factorial kills the term.
        state.discrete[mrna] = 0;
        let terms = pdmp
            .solver
            .reaction_terms(&net, &state.continuous, Some(&state.discrete))
            .unwrap();
        assert!(terms.gain_cells[protein].as_ref().unwrap().iter().all(|&v| v == 0.0));
        let _ = translation;
    }

    #[test]
    fn hazards_match_closed_forms() {
        let (net, pdmp, mut state) = hybrid_setup();
        let mrna = net.species_index("mrna").unwrap();
        let transcription = net.reactions.iter().position(|r| r.name == "transcription").unwrap();
        let decay = net.reactions.iter().position(|r| r.name == "mrna_decay").unwrap();
        let gamma0 = net.kernel.sup();
        assert!((gamma0 - 2.0).abs() < 1e-12);
        for m in [0u64, 1, 4] {
            state.discrete[mrna] = m;
            let h_t = pdmp.jump_hazard(&net, &state, transcription).unwrap();
            assert!((h_t - 2.0).abs() < 1e-12, "transcription hazard {h_t}");
            let h_d = pdmp.jump_hazard(&net, &state, decay).unwrap();
            let expect = 1.0 * gamma0 * m as f64;
            assert!((h_d - expect).abs() < 1e-12, "decay hazard {h_d} vs {expect}");
        }
    }

    #[test]
    fn next_jump_none_when_hazards_vanish() {
        let anchor = point_from(&[0.0]);
        let net = build_net(
            &[[-1.0, 1.0]],
            0.2,
            KernelFamily::Epanechnikov,
            10,
            vec![localized("s", anchor, true)],
            vec![ReactionDef {
                name: "decay",
                sources: vec![0],
                consume: vec![true],
                products: vec![],
                locality: ReactionLocality::Localized { location: anchor },
                rate: RateFactor::constant(1.0),
            }],
        );
        let pdmp = Pdmp::new(&net, SolverConfig::new(Scheme::Imex, 0.01, 32)).unwrap();
        let grid = Grid::new(&net.domain, 32).unwrap();
        let field = DensityField::zero(&net, grid);
        let mut state = HybridState::new(field, vec![0]);
        let mut rng = stream(61, 0);
        let out = pdmp.next_jump(&net, &mut state, 2.0, &mut rng, None).unwrap();
        assert!(out.is_none());
        assert!((state.time - 2.0).abs() < 1e-9);
    }

    /// Constant transcription hazard: inter-jump waits are Exp(c);
    /// Kolmogorov-Smirnov at the 1% level over 1e4 draws.
    #[test]
    fn constant_hazard_waits_are_exponential() {
        let (net, pdmp, mut state) = hybrid_setup();
        // Start from count 0 and only sample the first jump, so that
        // transcription is the only live hazard.
        state.discrete[net.species_index("mrna").unwrap()] = 0;
        let mut rng = stream(61, 1);
        let c = 2.0;
        let draws = 10_000;
        let mut waits = Vec::with_capacity(draws);
        for _ in 0..draws {
            let mut s = state.clone();
            let (tau, r) = pdmp
                .next_jump(&net, &mut s, 50.0, &mut rng, None)
                .unwrap()
                .expect("transcription must fire");
            assert_eq!(net.reactions[r].name, "transcription");
            waits.push(tau);
        }
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = waits.len() as f64;
        let mut ks = 0.0f64;
        for (i, &t) in waits.iter().enumerate() {
            let f = 1.0 - (-c * t).exp();
            ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        let crit = 1.63 / n.sqrt();
        assert!(ks < crit, "KS {ks} >= {crit}");
    }

    /// Two constant competing hazards pick reactions proportionally.
    #[test]
    fn competing_hazards_pick_proportionally() {
        let (net, pdmp, mut state) = hybrid_setup();
        let mrna = net.species_index("mrna").unwrap();
        state.discrete[mrna] = 3; // decay hazard 3 * 2.0 = 6, transcription 2
        let mut rng = stream(61, 2);
        let draws = 10_000;
        let mut transcriptions = 0u32;
        for _ in 0..draws {
            let mut s = state.clone();
            let (_, r) = pdmp
                .next_jump(&net, &mut s, 50.0, &mut rng, None)
                .unwrap()
                .expect("some jump fires");
            if net.reactions[r].name == "transcription" {
                transcriptions += 1;
            }
        }
        let p = transcriptions as f64 / draws as f64;
        let expect = 2.0 / 8.0;
        let tol = 3.0 * (expect * (1.0 - expect) / draws as f64).sqrt();
        assert!((p - expect).abs() < tol, "p {p} vs {expect} +- {tol}");
    }

    #[test]
    fn apply_jump_updates_counts_only() {
        let (net, pdmp, mut state) = hybrid_setup();
        let mrna = net.species_index("mrna").unwrap();
        let transcription = net.reactions.iter().position(|r| r.name == "transcription").unwrap();
        let decay = net.reactions.iter().position(|r| r.name == "mrna_decay").unwrap();
        let before = state.continuous.clone();
        state.discrete[mrna] = 2;
        let rec = pdmp.apply_jump(&net, &mut state, transcription).unwrap();
        assert_eq!(state.discrete[mrna], 3);
        assert_eq!(rec.deltas, vec![(mrna, 1)]);
        let rec = pdmp.apply_jump(&net, &mut state, decay).unwrap();
        assert_eq!(state.discrete[mrna], 2);
        assert_eq!(rec.deltas, vec![(mrna, -1)]);
        assert_eq!(state.continuous.l1_distance(&before), 0.0);
        // Insufficient count is a logic error (the hazard must vanish first).
        state.discrete[mrna] = 0;
        assert!(matches!(
            pdmp.apply_jump(&net, &mut state, decay),
            Err(SimError::Logic(_))
        ));
    }

    /// With no count-changing reactions the run reduces to the plain
    /// density solve.
    #[test]
    fn run_without_jumps_equals_density_solve() {
        let cfg = parse_config(bundled::PROTEIN_DIFFUSIVE).unwrap();
        let net = cfg.network.clone();
        let solver_cfg = SolverConfig::new(Scheme::Imex, 0.01, 64);
        let pdmp = Pdmp::new(&net, solver_cfg.clone()).unwrap();
        let grid = Grid::new(&net.domain, 64).unwrap();
        let field0 = DensityField::from_initial(&net, &cfg.initial, grid).unwrap();
        let mut state = HybridState::new(field0.clone(), vec![0; net.species.len()]);
        let mut rng = stream(67, 0);
        let jumps = pdmp.run(&net, &mut state, 0.5, &mut rng, None).unwrap();
        assert!(jumps.is_empty());

        let solver = Solver::new(&net, solver_cfg).unwrap();
        let direct = solver.solve(&net, &field0, 0.5, None).unwrap();
        assert!(state.continuous.l1_distance(&direct) < 1e-12);
    }

    #[test]
    fn jump_accumulation_guard() {
        let (mut net, _, state) = hybrid_setup();
        net.max_jumps_per_unit_time = 10.0;
        let pdmp = Pdmp::new(&net, SolverConfig::new(Scheme::Imex, 0.01, 32)).unwrap();
        let mut state = state;
        let mut rng = stream(71, 0);
        let err = pdmp.run(&net, &mut state, 50.0, &mut rng, None).unwrap_err();
        assert!(matches!(err, SimError::Explosion(_)), "{err}");
    }
}
